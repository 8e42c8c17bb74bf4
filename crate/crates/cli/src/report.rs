//! Query and check reports, and their text and JSON renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use tensorbel::{BeliefNetwork, Commitment, Equilibrium, Mode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableBelief {
    pub var: String,
    pub states: Vec<String>,
    pub values: Vec<f64>,
    /// Local argmax, reported for revision only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeBeliefs {
    pub mode: Mode,
    pub emissions: usize,
    pub variables: Vec<VariableBelief>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateChoice {
    pub var: String,
    pub state: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommitmentReport {
    pub assignment: Vec<StateChoice>,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckVerdict {
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_marginal_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub committed_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unique_optimum: Option<bool>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mismatches: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    pub modes: Vec<Mode>,
    pub beliefs: Vec<ModeBeliefs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub commitment: Option<CommitmentReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_check: Option<CheckVerdict>,
    pub emissions: usize,
}

impl ModeBeliefs {
    pub fn from_equilibrium(net: &BeliefNetwork, mode: Mode, eq: &Equilibrium) -> Self {
        let variables = net
            .vars()
            .map(|v| {
                let var = net.variable(v);
                let r = eq.result(v);
                VariableBelief {
                    var: var.id.clone(),
                    states: var.states.clone(),
                    values: r.bel.data().to_vec(),
                    best: r.local_opt.map(|s| var.states[s].clone()),
                }
            })
            .collect();
        ModeBeliefs {
            mode,
            emissions: eq.emissions,
            variables,
        }
    }
}

impl CommitmentReport {
    pub fn new(net: &BeliefNetwork, c: &Commitment) -> Self {
        CommitmentReport {
            assignment: c
                .assignment
                .labeled(net)
                .into_iter()
                .map(|(var, state)| StateChoice {
                    var: var.to_string(),
                    state: state.to_string(),
                })
                .collect(),
            score: c.score,
        }
    }
}

/// `value` with six significant digits.
pub fn sig6(value: f64) -> String {
    if value == 0.0 || !value.is_finite() {
        return format!("{value}");
    }
    let magnitude = value.abs().log10().floor() as i32;
    if !(-5..=6).contains(&magnitude) {
        return format!("{value:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{value:.decimals$}")
}

pub fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

impl QueryReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for block in &self.beliefs {
            let _ = writeln!(out, "{} ({} messages)", block.mode.label(), block.emissions);
            for v in &block.variables {
                let _ = write!(out, "  {}:", v.var);
                for (s, x) in v.states.iter().zip(&v.values) {
                    let _ = write!(out, " {s}={}", sig6(*x));
                }
                if let Some(best) = &v.best {
                    let _ = write!(out, "  best={best}");
                }
                out.push('\n');
            }
        }
        if let Some(c) = &self.commitment {
            out.push_str("commitment:");
            for choice in &c.assignment {
                let _ = write!(out, " {}={}", choice.var, choice.state);
            }
            let _ = writeln!(out, "\nscore: {}", sig6(c.score));
        }
        if let Some(check) = &self.oracle_check {
            out.push_str(&check.to_text());
        }
        out
    }
}

impl CheckVerdict {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "oracle check: {}\n",
            if self.passed { "passed" } else { "FAILED" }
        );
        if let Some(e) = self.max_marginal_error {
            let _ = writeln!(out, "  max marginal error: {e:.3e}");
        }
        if let (Some(c), Some(o)) = (self.committed_score, self.oracle_score) {
            let _ = writeln!(out, "  commitment score: {} (oracle {})", sig6(c), sig6(o));
        }
        for m in &self.mismatches {
            let _ = writeln!(out, "  {m}");
        }
        out
    }
}
