//! Command-line front end: `query`, `check` and `random`.
//!
//! Exit codes: 0 success, 1 usage error, 2 network load or validation
//! failure, 3 evidence error, 4 contradictory evidence, 5 oracle mismatch.
//! Standard output is written only on success.

pub mod report;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Read, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tensorbel::oracle::{enumerate_joint_capped, marginal_of, mpe_of, DEFAULT_JOINT_CAP};
use tensorbel::{
    commit, load_network, propagate_with, random_polytree, render, BeliefNetwork, Commitment,
    EngineError, Equilibrium, Evidence, Mode, OracleError, PropagationOptions,
};

use crate::report::{to_json, CheckVerdict, CommitmentReport, ModeBeliefs, QueryReport};

/// Tolerance of oracle cross-checks.
pub const CHECK_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Network = 2,
    Evidence = 3,
    ZeroMass = 4,
    Mismatch = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub code: ExitCode,
    pub message: String,
}

impl CliError {
    fn new(code: ExitCode, message: impl Into<String>) -> Self {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        let code = match e {
            EngineError::Evidence(_) => ExitCode::Evidence,
            EngineError::ZeroMass { .. } => ExitCode::ZeroMass,
            _ => ExitCode::Network,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        let code = match e {
            OracleError::CapExceeded { .. } => ExitCode::Network,
            OracleError::ZeroMass => ExitCode::ZeroMass,
            OracleError::Evidence(_) => ExitCode::Evidence,
        };
        CliError::new(code, e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tensorbel",
    version,
    about = "Belief updating and revision on polytrees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute beliefs and the most probable instantiation.
    Query(QueryArgs),
    /// Compare both inference modes against brute-force enumeration.
    Check(CheckArgs),
    /// Print a random strict polytree network document.
    Random(RandomArgs),
}

#[derive(Args, Debug)]
struct EvidenceArgs {
    /// Hard observation, repeatable.
    #[arg(long = "evidence", value_name = "VAR=STATE")]
    evidence: Vec<String>,
    /// Soft evidence as a likelihood vector, repeatable.
    #[arg(long = "likelihood", value_name = "VAR:V1,V2,...")]
    likelihood: Vec<String>,
    /// Evidence document.
    #[arg(long, value_name = "FILE")]
    evidence_file: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Update,
    Revise,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args, Debug)]
struct QueryArgs {
    /// Network document, or `-` for standard input.
    #[arg(long, value_name = "FILE")]
    network: String,
    #[command(flatten)]
    evidence: EvidenceArgs,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Write one JSON line per emitted message.
    #[arg(long, value_name = "FILE")]
    trace: Option<PathBuf>,
    /// Also cross-check the results against brute-force enumeration.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Network document, or `-` for standard input.
    #[arg(long, value_name = "FILE")]
    network: String,
    #[command(flatten)]
    evidence: EvidenceArgs,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
    /// Largest joint table the oracle may enumerate.
    #[arg(long, default_value_t = DEFAULT_JOINT_CAP)]
    cap: usize,
}

#[derive(Args, Debug)]
struct RandomArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    max_card: usize,
    #[arg(long, default_value_t = 3)]
    max_parents: usize,
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(
    args: I,
    stdin: &mut dyn Read,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                ExitCode::Usage
            } else {
                ExitCode::Success
            };
            let rendered = e.render().to_string();
            let _ = match code {
                ExitCode::Success => stdout.write_all(rendered.as_bytes()),
                _ => stderr.write_all(rendered.as_bytes()),
            };
            return code as i32;
        }
    };
    let result = match cli.command {
        Command::Query(a) => query(a, stdin),
        Command::Check(a) => check(a, stdin),
        Command::Random(a) => random(a),
    };
    match result {
        Ok(out) => {
            if stdout.write_all(out.as_bytes()).is_err() {
                return ExitCode::Usage as i32;
            }
            ExitCode::Success as i32
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message);
            e.code as i32
        }
    }
}

fn read_network(path: &str, stdin: &mut dyn Read) -> Result<BeliefNetwork, CliError> {
    let text = if path == "-" {
        let mut s = String::new();
        stdin
            .read_to_string(&mut s)
            .map_err(|e| CliError::new(ExitCode::Network, format!("reading stdin: {e}")))?;
        s
    } else {
        fs::read_to_string(path)
            .map_err(|e| CliError::new(ExitCode::Network, format!("reading {path}: {e}")))?
    };
    load_network(&text).map_err(|e| CliError::new(ExitCode::Network, e.to_string()))
}

fn read_evidence(args: &EvidenceArgs, net: &BeliefNetwork) -> Result<Evidence, CliError> {
    let inline = !args.evidence.is_empty() || !args.likelihood.is_empty();
    if inline && args.evidence_file.is_some() {
        return Err(CliError::new(
            ExitCode::Usage,
            "--evidence-file cannot be combined with --evidence or --likelihood",
        ));
    }
    let evidence_error =
        |e: tensorbel::EvidenceError| CliError::new(ExitCode::Evidence, e.to_string());
    if let Some(path) = &args.evidence_file {
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::new(
                ExitCode::Evidence,
                format!("reading {}: {e}", path.display()),
            )
        })?;
        return Evidence::from_document(&text, net).map_err(evidence_error);
    }
    let mut e = Evidence::new();
    for item in &args.evidence {
        let (var, state) = item.split_once('=').ok_or_else(|| {
            CliError::new(
                ExitCode::Usage,
                format!("--evidence expects VAR=STATE, got {item:?}"),
            )
        })?;
        e.observe_label(net, var, state).map_err(evidence_error)?;
    }
    for item in &args.likelihood {
        let (var, values) = item.split_once(':').ok_or_else(|| {
            CliError::new(
                ExitCode::Usage,
                format!("--likelihood expects VAR:V1,V2,..., got {item:?}"),
            )
        })?;
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|err| {
                CliError::new(ExitCode::Usage, format!("--likelihood {item:?}: {err}"))
            })?;
        e.likelihood(var, values);
    }
    e.factors(net).map_err(evidence_error)?;
    Ok(e)
}

struct Runs {
    update: Option<Equilibrium>,
    revise: Option<(Equilibrium, Commitment)>,
}

fn run_modes(
    net: &BeliefNetwork,
    e: &Evidence,
    modes: &[Mode],
    trace: bool,
) -> Result<Runs, CliError> {
    let opts = PropagationOptions {
        trace,
        ..Default::default()
    };
    let mut runs = Runs {
        update: None,
        revise: None,
    };
    for &mode in modes {
        let eq = propagate_with(net, e, mode.ops(), opts)?;
        match mode {
            Mode::Update => runs.update = Some(eq),
            Mode::Revise => {
                let c = commit(net, &eq, e)?;
                runs.revise = Some((eq, c));
            }
        }
    }
    Ok(runs)
}

fn oracle_verdict(
    net: &BeliefNetwork,
    e: &Evidence,
    runs: &Runs,
    cap: usize,
) -> Result<CheckVerdict, CliError> {
    let joint = enumerate_joint_capped(net, e, cap)?;
    let mut verdict = CheckVerdict {
        passed: true,
        max_marginal_error: None,
        oracle_score: None,
        committed_score: None,
        unique_optimum: None,
        mismatches: Vec::new(),
    };
    if let Some(eq) = &runs.update {
        let mut worst: f64 = 0.0;
        for v in net.vars() {
            let want = marginal_of(net, &joint, v)?;
            let got = &eq.result(v).bel;
            let err = want
                .data()
                .iter()
                .zip(got.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if err > CHECK_TOLERANCE {
                verdict.mismatches.push(format!(
                    "belief of {} differs from the oracle by {err:.3e}: {:?} vs {:?}",
                    net.id(v),
                    got.data(),
                    want.data()
                ));
            }
            worst = worst.max(err);
        }
        verdict.max_marginal_error = Some(worst);
    }
    if let Some((_, c)) = &runs.revise {
        let (w, best) = mpe_of(net, &joint)?;
        let unique = joint.optimum_count(1e-12) == 1;
        verdict.oracle_score = Some(best);
        verdict.committed_score = Some(c.score);
        verdict.unique_optimum = Some(unique);
        if (c.score - best).abs() > CHECK_TOLERANCE * best {
            verdict.mismatches.push(format!(
                "commitment score {} differs from the oracle maximum {best}",
                c.score
            ));
        }
        if unique && c.assignment != w {
            let show = |a: &tensorbel::Assignment| {
                a.labeled(net)
                    .iter()
                    .map(|(v, s)| format!("{v}={s}"))
                    .collect::<Vec<_>>()
                    .join(" ")
            };
            verdict.mismatches.push(format!(
                "committed assignment {} differs from the unique oracle optimum {}",
                show(&c.assignment),
                show(&w)
            ));
        }
    }
    verdict.passed = verdict.mismatches.is_empty();
    Ok(verdict)
}

fn mismatch_error(verdict: &CheckVerdict) -> CliError {
    CliError::new(
        ExitCode::Mismatch,
        format!("oracle mismatch\n{}", verdict.mismatches.join("\n")),
    )
}

fn query(args: QueryArgs, stdin: &mut dyn Read) -> Result<String, CliError> {
    let net = read_network(&args.network, stdin)?;
    let e = read_evidence(&args.evidence, &net)?;
    let modes = match args.mode {
        ModeArg::Update => vec![Mode::Update],
        ModeArg::Revise => vec![Mode::Revise],
        ModeArg::Both => vec![Mode::Update, Mode::Revise],
    };
    let runs = run_modes(&net, &e, &modes, args.trace.is_some())?;

    let mut beliefs = Vec::new();
    if let Some(eq) = &runs.update {
        beliefs.push(ModeBeliefs::from_equilibrium(&net, Mode::Update, eq));
    }
    if let Some((eq, _)) = &runs.revise {
        beliefs.push(ModeBeliefs::from_equilibrium(&net, Mode::Revise, eq));
    }
    let oracle_check = if args.check {
        let verdict = oracle_verdict(&net, &e, &runs, DEFAULT_JOINT_CAP)?;
        if !verdict.passed {
            return Err(mismatch_error(&verdict));
        }
        Some(verdict)
    } else {
        None
    };

    if let Some(path) = &args.trace {
        let mut lines = String::new();
        let traces = runs
            .update
            .iter()
            .chain(runs.revise.iter().map(|(eq, _)| eq))
            .flat_map(|eq| eq.trace.iter());
        for record in traces {
            lines.push_str(&record.to_json_line());
            lines.push('\n');
        }
        fs::write(path, lines).map_err(|err| {
            CliError::new(
                ExitCode::Usage,
                format!("writing {}: {err}", path.display()),
            )
        })?;
    }

    let report = QueryReport {
        modes,
        emissions: beliefs.iter().map(|b| b.emissions).sum(),
        beliefs,
        commitment: runs
            .revise
            .as_ref()
            .map(|(_, c)| CommitmentReport::new(&net, c)),
        oracle_check,
    };
    Ok(match args.format {
        Format::Text => report.to_text(),
        Format::Json => to_json(&report),
    })
}

fn check(args: CheckArgs, stdin: &mut dyn Read) -> Result<String, CliError> {
    let net = read_network(&args.network, stdin)?;
    let e = read_evidence(&args.evidence, &net)?;
    // Refuse oversized networks before running anything.
    let states = tensorbel::oracle::joint_size(&net);
    if states > args.cap as u128 {
        return Err(OracleError::CapExceeded {
            states,
            cap: args.cap,
        }
        .into());
    }
    let runs = run_modes(&net, &e, &[Mode::Update, Mode::Revise], false)?;
    let verdict = oracle_verdict(&net, &e, &runs, args.cap)?;
    if !verdict.passed {
        return Err(mismatch_error(&verdict));
    }
    Ok(match args.format {
        Format::Text => verdict.to_text(),
        Format::Json => to_json(&verdict),
    })
}

fn random(args: RandomArgs) -> Result<String, CliError> {
    if args.nodes == 0 {
        return Err(CliError::new(ExitCode::Usage, "--nodes must be at least 1"));
    }
    if args.max_card == 0 {
        return Err(CliError::new(
            ExitCode::Usage,
            "--max-card must be at least 1",
        ));
    }
    if args.max_parents == 0 && args.nodes > 1 {
        return Err(CliError::new(
            ExitCode::Usage,
            "--max-parents must be at least 1 for more than one node",
        ));
    }
    Ok(render(&random_polytree(
        args.seed,
        args.nodes,
        args.max_card,
        args.max_parents,
    )))
}

/// Entry point used by the binary.
pub fn main_with_stdio() -> i32 {
    let stdin = io::stdin();
    let stdout = io::stdout();
    let stderr = io::stderr();
    run(
        std::env::args_os(),
        &mut stdin.lock(),
        &mut stdout.lock(),
        &mut stderr.lock(),
    )
}
