//! Message passing on polytrees.
//!
//! One kernel computes beliefs and both kinds of outgoing message. It is
//! parameterized by a [`KernelOps`]: summing contractions with sum-to-one
//! normalization give posterior marginals (belief updating), maximizing
//! contractions with max-to-one normalization give the probability of the
//! best completion of each local state (belief revision). Nothing else in
//! the propagation differs between the two.
//!
//! Evidence enters as a virtual child of the observed variable: an indicator
//! vector for hard observations, the likelihood vector for soft ones. Root
//! priors enter through the root's own table, whose parent product is the
//! order-0 unit.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    joint_probability, validate, Assignment, BeliefNetwork, Evidence, EvidenceError,
    ValidationMode, ValidationReport,
};
use crate::tensor::{
    argmax, inner_product, normalize, outer_product, term_product, unit_vector, CombineOp,
    Contraction, Normalization, Tensor, TensorError, VarId, WitnessTable,
};

/// Messages whose components all move by less than this are unchanged.
pub const EQUILIBRIUM_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Posterior marginals.
    Update,
    /// Most probable joint instantiation.
    Revise,
}

impl Mode {
    pub fn ops(self) -> KernelOps {
        match self {
            Mode::Update => KernelOps {
                combine: CombineOp::Sum,
                normalization: Normalization::SumToOne,
            },
            Mode::Revise => KernelOps {
                combine: CombineOp::Max,
                normalization: Normalization::MaxToOne,
            },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Mode::Update => "update",
            Mode::Revise => "revise",
        }
    }
}

/// The two knobs that distinguish updating from revision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct KernelOps {
    pub combine: CombineOp,
    pub normalization: Normalization,
}

impl KernelOps {
    fn label(self) -> &'static str {
        match self.combine {
            CombineOp::Sum => Mode::Update.label(),
            CombineOp::Max => Mode::Revise.label(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error("network is not a valid polytree:\n{0}")]
    InvalidNetwork(ValidationReport),
    #[error("contradictory evidence: zero mass at variable {node}")]
    ZeroMass { node: String },
    #[error("a commitment needs an equilibrium computed with max contractions")]
    NotRevision,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Current messages on every directed edge, plus the virtual evidence
/// messages.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageBoard {
    /// `(parent, child)` to a vector on the parent's axis.
    pi: BTreeMap<(VarId, VarId), Tensor>,
    /// `(child, parent)` to a vector on the parent's axis.
    lambda: BTreeMap<(VarId, VarId), Tensor>,
    evidence: BTreeMap<VarId, Tensor>,
}

impl MessageBoard {
    pub fn pi(&self, parent: VarId, child: VarId) -> &Tensor {
        &self.pi[&(parent, child)]
    }

    pub fn lambda(&self, child: VarId, parent: VarId) -> &Tensor {
        &self.lambda[&(child, parent)]
    }

    pub fn evidence(&self, var: VarId) -> Option<&Tensor> {
        self.evidence.get(&var)
    }

    /// Largest componentwise difference between matching messages.
    pub fn max_difference(&self, other: &MessageBoard) -> f64 {
        let diff = |a: &BTreeMap<(VarId, VarId), Tensor>, b: &BTreeMap<(VarId, VarId), Tensor>| {
            a.iter()
                .map(|(k, t)| match b.get(k) {
                    Some(u) => max_abs_diff(t, u),
                    None => f64::INFINITY,
                })
                .fold(0.0, f64::max)
        };
        diff(&self.pi, &other.pi).max(diff(&self.lambda, &other.lambda))
    }
}

fn max_abs_diff(a: &Tensor, b: &Tensor) -> f64 {
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Sets up the boundary conditions: unit messages everywhere and one
/// virtual-child message per observed variable, each normalized per `ops`.
pub fn init_boundaries(
    net: &BeliefNetwork,
    e: &Evidence,
    ops: KernelOps,
) -> Result<MessageBoard, EngineError> {
    let factors = e.factors(net)?;
    let unit = |v: VarId| {
        normalize(&unit_vector(net.axis(v)), ops.normalization).expect("unit vectors have mass")
    };
    let mut board = MessageBoard {
        pi: BTreeMap::new(),
        lambda: BTreeMap::new(),
        evidence: BTreeMap::new(),
    };
    for (p, c) in net.edges() {
        board.pi.insert((p, c), unit(p));
        board.lambda.insert((c, p), unit(p));
    }
    for (k, f) in factors.into_iter().enumerate() {
        if let Some(f) = f {
            let var = VarId(k);
            let t = Tensor::vector(net.axis(var), f)?;
            board
                .evidence
                .insert(var, normalize(&t, ops.normalization)?);
        }
    }
    Ok(board)
}

/// The inputs one node combines: its table, the π message from each parent,
/// and the λ message from each child and from evidence.
#[derive(Clone, Debug)]
pub struct LocalKernel<'a> {
    net: &'a BeliefNetwork,
    node: VarId,
    parent_pis: Vec<&'a Tensor>,
    child_lambdas: Vec<&'a Tensor>,
    evidence: Option<&'a Tensor>,
}

impl<'a> LocalKernel<'a> {
    pub fn assemble(net: &'a BeliefNetwork, board: &'a MessageBoard, node: VarId) -> Self {
        LocalKernel {
            net,
            node,
            parent_pis: net
                .parents(node)
                .iter()
                .map(|p| board.pi(*p, node))
                .collect(),
            child_lambdas: net
                .children(node)
                .iter()
                .map(|c| board.lambda(*c, node))
                .collect(),
            evidence: board.evidence(node),
        }
    }

    pub fn node(&self) -> VarId {
        self.node
    }

    pub fn cpt(&self) -> &'a Tensor {
        &self.net.node(self.node).cpt
    }

    /// Term product of every incoming λ (evidence included), optionally
    /// leaving out the message from child `exclude`.
    pub fn lambda(&self, exclude: Option<usize>) -> Tensor {
        let mut acc = unit_vector(self.net.axis(self.node));
        let incoming = self
            .child_lambdas
            .iter()
            .enumerate()
            .filter(|(j, _)| Some(*j) != exclude)
            .map(|(_, t)| *t)
            .chain(self.evidence);
        for t in incoming {
            acc = term_product(&acc, t).expect("λ messages share the node's axis");
        }
        acc
    }

    /// Outer product of the parent π messages, optionally leaving out
    /// parent `exclude`. Order 0 for roots.
    pub fn pi(&self, exclude: Option<usize>) -> Tensor {
        let mut acc = Tensor::scalar(1.0);
        for (i, t) in self.parent_pis.iter().enumerate() {
            if Some(i) != exclude {
                acc = outer_product(&acc, t).expect("parents are distinct variables");
            }
        }
        acc
    }

    pub fn parent_pi(&self, i: usize) -> &'a Tensor {
        self.parent_pis[i]
    }

    /// The table contracted against the full parent product, on the node's
    /// own axis. Under max it records the best parent configuration per state.
    pub fn contract(&self, op: CombineOp) -> Contraction {
        inner_product(self.cpt(), &self.pi(None), op).expect("π messages match the table axes")
    }
}

/// Belief of one node at equilibrium.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeResult {
    pub bel: Tensor,
    /// Local argmax of the belief; set under max contractions only.
    pub local_opt: Option<usize>,
    /// Best parent configuration for each state; max contractions only.
    pub witnesses: Option<WitnessTable>,
}

fn nonzero(t: Tensor) -> Result<Tensor, TensorError> {
    if t.data().iter().all(|v| *v == 0.0) {
        Err(TensorError::ZeroMass)
    } else {
        Ok(t)
    }
}

pub fn compute_bel(kernel: &LocalKernel<'_>, ops: KernelOps) -> Result<NodeResult, TensorError> {
    let f = kernel.contract(ops.combine);
    let bel = normalize(
        &term_product(&kernel.lambda(None), &f.tensor)?,
        ops.normalization,
    )?;
    let local_opt = match ops.combine {
        CombineOp::Max => Some(argmax(&bel).0[0]),
        CombineOp::Sum => None,
    };
    Ok(NodeResult {
        bel,
        local_opt,
        witnesses: f.witnesses,
    })
}

fn raw_lambda_to_parent(
    kernel: &LocalKernel<'_>,
    i: usize,
    op: CombineOp,
) -> Result<Tensor, TensorError> {
    // Parent i is left out of the product instead of divided out afterwards.
    let table = inner_product(kernel.cpt(), &kernel.pi(Some(i)), op)?.tensor;
    let msg = inner_product(&kernel.lambda(None), &table, op)?.tensor;
    nonzero(msg)
}

fn raw_pi_to_child(
    kernel: &LocalKernel<'_>,
    j: usize,
    op: CombineOp,
) -> Result<Tensor, TensorError> {
    // Child j is left out of the λ product instead of divided out of the belief.
    let f = kernel.contract(op);
    nonzero(term_product(&kernel.lambda(Some(j)), &f.tensor)?)
}

pub fn compute_lambda_to_parent(
    kernel: &LocalKernel<'_>,
    i: usize,
    ops: KernelOps,
) -> Result<Tensor, TensorError> {
    normalize(
        &raw_lambda_to_parent(kernel, i, ops.combine)?,
        ops.normalization,
    )
}

pub fn compute_pi_to_child(
    kernel: &LocalKernel<'_>,
    j: usize,
    ops: KernelOps,
) -> Result<Tensor, TensorError> {
    normalize(&raw_pi_to_child(kernel, j, ops.combine)?, ops.normalization)
}

/// Order in which activated nodes are served.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    /// First in, first out, seeded with the nodes in topological order.
    RootsFirst,
    /// Any activated node, chosen uniformly by a seeded generator.
    Random(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PropagationOptions {
    pub schedule: Schedule,
    pub normalize_messages: bool,
    pub trace: bool,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        PropagationOptions {
            schedule: Schedule::RootsFirst,
            normalize_messages: true,
            trace: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    Pi,
    Lambda,
}

/// One emitted message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub from: String,
    pub to: String,
    pub kind: MessageKind,
    pub mode: String,
    pub vector: Vec<f64>,
}

impl TraceRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }
}

#[derive(Clone, Debug)]
pub struct Equilibrium {
    pub ops: KernelOps,
    pub board: MessageBoard,
    /// Indexed by [`VarId`].
    pub results: Vec<NodeResult>,
    pub emissions: usize,
    pub trace: Vec<TraceRecord>,
}

impl Equilibrium {
    pub fn result(&self, var: VarId) -> &NodeResult {
        &self.results[var.0]
    }
}

pub fn propagate(
    net: &BeliefNetwork,
    e: &Evidence,
    mode: Mode,
) -> Result<Equilibrium, EngineError> {
    propagate_with(net, e, mode.ops(), PropagationOptions::default())
}

/// Runs message passing to equilibrium.
///
/// An activated node emits to a neighbor once it holds final messages from
/// all its other neighbors. On a polytree every directed edge then carries
/// exactly one message, computed from final inputs, so the run ends after
/// `2 * edges` emissions regardless of the activation order.
pub fn propagate_with(
    net: &BeliefNetwork,
    e: &Evidence,
    ops: KernelOps,
    opts: PropagationOptions,
) -> Result<Equilibrium, EngineError> {
    let report = validate(net, ValidationMode::Relative);
    if !report.is_empty() {
        return Err(EngineError::InvalidNetwork(report));
    }
    let mut board = init_boundaries(net, e, ops)?;
    let zero_mass = |v: VarId| {
        move |err: TensorError| match err {
            TensorError::ZeroMass => EngineError::ZeroMass {
                node: net.id(v).to_string(),
            },
            other => EngineError::Tensor(other),
        }
    };

    let neighbors: Vec<Vec<VarId>> = net.vars().map(|v| net.neighbors(v).collect()).collect();
    let mut received: Vec<Vec<bool>> = neighbors.iter().map(|n| vec![false; n.len()]).collect();
    let mut sent: Vec<Vec<bool>> = received.clone();

    let mut pending: VecDeque<VarId> = topological_order(net).into();
    let mut queued = vec![true; net.len()];
    let mut rng = match opts.schedule {
        Schedule::Random(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
        Schedule::RootsFirst => None,
    };

    let mut emissions = 0;
    let mut trace = Vec::new();
    while !pending.is_empty() {
        let node = match rng.as_mut() {
            Some(rng) => {
                let k = rng.gen_range(0..pending.len());
                pending.remove(k).expect("index in range")
            }
            None => pending.pop_front().expect("queue is non-empty"),
        };
        queued[node.0] = false;

        let n_parents = net.parents(node).len();
        for (slot, &target) in neighbors[node.0].iter().enumerate() {
            let ready = received[node.0]
                .iter()
                .enumerate()
                .all(|(k, got)| *got || k == slot);
            if sent[node.0][slot] || !ready {
                continue;
            }
            let kernel = LocalKernel::assemble(net, &board, node);
            let (kind, raw) = if slot < n_parents {
                (
                    MessageKind::Lambda,
                    raw_lambda_to_parent(&kernel, slot, ops.combine),
                )
            } else {
                (
                    MessageKind::Pi,
                    raw_pi_to_child(&kernel, slot - n_parents, ops.combine),
                )
            };
            let mut msg = raw.map_err(zero_mass(node))?;
            if opts.normalize_messages {
                msg = normalize(&msg, ops.normalization).map_err(zero_mass(node))?;
            }
            if opts.trace {
                trace.push(TraceRecord {
                    step: emissions,
                    from: net.id(node).to_string(),
                    to: net.id(target).to_string(),
                    kind,
                    mode: ops.label().to_string(),
                    vector: msg.data().to_vec(),
                });
            }
            match kind {
                MessageKind::Lambda => board.lambda.insert((node, target), msg),
                MessageKind::Pi => board.pi.insert((node, target), msg),
            };
            emissions += 1;
            sent[node.0][slot] = true;
            let back = neighbors[target.0]
                .iter()
                .position(|v| *v == node)
                .expect("adjacency is symmetric");
            received[target.0][back] = true;
            if !queued[target.0] {
                queued[target.0] = true;
                pending.push_back(target);
            }
        }
    }

    let results = net
        .vars()
        .map(|v| compute_bel(&LocalKernel::assemble(net, &board, v), ops).map_err(zero_mass(v)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Equilibrium {
        ops,
        board,
        results,
        emissions,
        trace,
    })
}

fn topological_order(net: &BeliefNetwork) -> Vec<VarId> {
    let mut indegree: Vec<usize> = net.vars().map(|v| net.parents(v).len()).collect();
    let mut order: Vec<VarId> = net.vars().filter(|v| indegree[v.0] == 0).collect();
    let mut k = 0;
    while k < order.len() {
        let v = order[k];
        for &c in net.children(v) {
            indegree[c.0] -= 1;
            if indegree[c.0] == 0 {
                order.push(c);
            }
        }
        k += 1;
    }
    order
}

/// The committed instantiation and its unnormalized score: the chain-rule
/// joint times the raw evidence factors.
#[derive(Clone, Debug, PartialEq)]
pub struct Commitment {
    pub assignment: Assignment,
    pub score: f64,
}

/// Extracts one globally optimal instantiation from a max equilibrium.
///
/// In each connected component the variable with the lowest id takes the
/// argmax of its belief. The sweep then visits families (a node with its
/// parents) outward; each family is entered through exactly one committed
/// variable and its remaining members take the joint maximizer of the table
/// slice weighted by their incoming messages from outside the family.
pub fn commit(
    net: &BeliefNetwork,
    eq: &Equilibrium,
    e: &Evidence,
) -> Result<Commitment, EngineError> {
    if eq.ops.combine != CombineOp::Max {
        return Err(EngineError::NotRevision);
    }
    let mut value: Vec<Option<usize>> = vec![None; net.len()];
    let mut family_done = vec![false; net.len()];

    let mut by_id: Vec<VarId> = net.vars().collect();
    by_id.sort_by(|a, b| net.id(*a).cmp(net.id(*b)));

    for anchor in by_id {
        if value[anchor.0].is_some() {
            continue;
        }
        value[anchor.0] = Some(argmax(&eq.result(anchor).bel).0[0]);
        let mut queue = VecDeque::from([anchor]);
        while let Some(v) = queue.pop_front() {
            let families = std::iter::once(v).chain(net.children(v).iter().copied());
            for family in families.collect::<Vec<_>>() {
                if family_done[family.0] {
                    continue;
                }
                family_done[family.0] = true;
                let x = value[v.0].expect("swept variables are committed");
                for (var, state) in family_maximizer(net, eq, family, v, x)? {
                    debug_assert!(value[var.0].is_none());
                    value[var.0] = Some(state);
                    queue.push_back(var);
                }
            }
        }
    }

    let mut states: Vec<usize> = value
        .into_iter()
        .map(|s| s.expect("every component is swept"))
        .collect();
    for (var, &state) in e.hard() {
        if let Some(v) = net.var_id(var) {
            states[v.0] = state;
        }
    }
    let assignment = Assignment::new(net, states).expect("committed states are in range");
    let score = joint_probability(net, &assignment) * e.weight(net, &assignment)?;
    Ok(Commitment { assignment, score })
}

/// Best states for the members of `family` other than `fixed`, given
/// `fixed = state`.
fn family_maximizer(
    net: &BeliefNetwork,
    eq: &Equilibrium,
    family: VarId,
    fixed: VarId,
    state: usize,
) -> Result<Vec<(VarId, usize)>, EngineError> {
    if family == fixed {
        let w = eq
            .result(family)
            .witnesses
            .as_ref()
            .ok_or(EngineError::NotRevision)?;
        return Ok(w.assignment(state));
    }
    let kernel = LocalKernel::assemble(net, &eq.board, family);
    let slice = kernel.cpt().slice(fixed, state)?;
    let mut weights = Tensor::scalar(1.0);
    for ax in slice.axes() {
        let m = if ax.var == family {
            kernel.lambda(None)
        } else {
            let i = net
                .parents(family)
                .iter()
                .position(|p| *p == ax.var)
                .expect("table axes are the node and its parents");
            kernel.parent_pi(i).clone()
        };
        weights = outer_product(&weights, &m)?;
    }
    let best = inner_product(&slice, &weights, CombineOp::Max)?;
    Ok(best
        .witnesses
        .expect("max contractions record witnesses")
        .assignment(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::load_network;

    const CHAIN2: &str = r#"{
        "variables": [{"id": "A", "states": ["a0", "a1"]}, {"id": "B", "states": ["b0", "b1"]}],
        "nodes": [{"var": "A", "parents": [], "cpt": [0.6, 0.4]},
                  {"var": "B", "parents": ["A"], "cpt": [0.9, 0.2, 0.1, 0.8]}]
    }"#;

    fn chain2() -> (BeliefNetwork, VarId, VarId) {
        let net = load_network(CHAIN2).unwrap();
        let a = net.var_id("A").unwrap();
        let b = net.var_id("B").unwrap();
        (net, a, b)
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn boundaries() {
        let (net, a, b) = chain2();
        let mut e = Evidence::new();
        e.observe("B", 0);
        let board = init_boundaries(&net, &e, Mode::Revise.ops()).unwrap();
        assert_eq!(board.evidence(b).unwrap().data(), &[1.0, 0.0]);
        assert!(board.evidence(a).is_none());
        assert_eq!(board.lambda(b, a).data(), &[1.0, 1.0]);
        let k = LocalKernel::assemble(&net, &board, a);
        assert_eq!(k.pi(None).order(), 0);
        assert_eq!(k.contract(CombineOp::Max).tensor.data(), &[0.6, 0.4]);

        let sum_board = init_boundaries(&net, &Evidence::new(), Mode::Update.ops()).unwrap();
        assert_eq!(sum_board.lambda(b, a).data(), &[0.5, 0.5]);

        let mut soft = Evidence::new();
        soft.likelihood("B", vec![0.9, 0.4]);
        let s = init_boundaries(&net, &soft, Mode::Update.ops()).unwrap();
        assert!(close(
            s.evidence(b).unwrap().data(),
            &[0.9 / 1.3, 0.4 / 1.3],
            1e-15
        ));
        let m = init_boundaries(&net, &soft, Mode::Revise.ops()).unwrap();
        assert!(close(
            m.evidence(b).unwrap().data(),
            &[1.0, 0.4 / 0.9],
            1e-15
        ));
    }

    #[test]
    fn boundaries_reject_bad_evidence() {
        let (net, _, _) = chain2();
        let mut e = Evidence::new();
        e.observe("Z", 0);
        assert!(matches!(
            init_boundaries(&net, &e, Mode::Update.ops()),
            Err(EngineError::Evidence(EvidenceError::UnknownVariable(_)))
        ));
        let mut e = Evidence::new();
        e.observe("B", 2);
        assert!(matches!(
            init_boundaries(&net, &e, Mode::Update.ops()),
            Err(EngineError::Evidence(EvidenceError::StateOutOfRange { .. }))
        ));
    }

    #[test]
    fn chain2_bel_both_modes() {
        let (net, a, b) = chain2();
        let mut e = Evidence::new();
        e.observe("B", 0);

        let max = propagate(&net, &e, Mode::Revise).unwrap();
        assert!(max.emissions <= 2);
        let lam = max.board.lambda(b, a);
        assert!(close(lam.data(), &[1.0, 0.2 / 0.9], 1e-15));
        let ra = max.result(a);
        assert!(close(ra.bel.data(), &[1.0, 0.08 / 0.54], 1e-12));
        assert_eq!(ra.local_opt, Some(0));

        let sum = propagate(&net, &e, Mode::Update).unwrap();
        assert!(close(
            sum.result(a).bel.data(),
            &[0.54 / 0.62, 0.08 / 0.62],
            1e-12
        ));
        assert!(close(sum.result(b).bel.data(), &[1.0, 0.0], 0.0));
        assert_eq!(sum.result(a).local_opt, None);
    }

    #[test]
    fn lambda_to_parent_unnormalized() {
        let (net, a, b) = chain2();
        let mut e = Evidence::new();
        e.observe("B", 0);
        let board = init_boundaries(&net, &e, Mode::Revise.ops()).unwrap();
        let k = LocalKernel::assemble(&net, &board, b);
        let raw = raw_lambda_to_parent(&k, 0, CombineOp::Max).unwrap();
        assert_eq!(raw.axes()[0].var, a);
        assert!(close(raw.data(), &[0.9, 0.2], 1e-15));

        let board = init_boundaries(&net, &Evidence::new(), Mode::Update.ops()).unwrap();
        let k = LocalKernel::assemble(&net, &board, b);
        let m = compute_lambda_to_parent(&k, 0, Mode::Update.ops()).unwrap();
        assert!(close(m.data(), &[0.5, 0.5], 1e-15));
    }

    #[test]
    fn pi_to_child_excludes_target() {
        let (net, a, _) = chain2();
        let board = init_boundaries(&net, &Evidence::new(), Mode::Revise.ops()).unwrap();
        let k = LocalKernel::assemble(&net, &board, a);
        let m = compute_pi_to_child(&k, 0, Mode::Update.ops()).unwrap();
        assert!(close(m.data(), &[0.6, 0.4], 1e-15));
    }

    #[test]
    fn single_node() {
        let net = load_network(
            r#"{"variables": [{"id": "X", "states": ["x0", "x1", "x2"]}],
                "nodes": [{"var": "X", "cpt": [0.2, 0.5, 0.3]}]}"#,
        )
        .unwrap();
        let eq = propagate(&net, &Evidence::new(), Mode::Update).unwrap();
        assert_eq!(eq.emissions, 0);
        assert!(close(eq.results[0].bel.data(), &[0.2, 0.5, 0.3], 1e-15));
        let eq = propagate(&net, &Evidence::new(), Mode::Revise).unwrap();
        let c = commit(&net, &eq, &Evidence::new()).unwrap();
        assert_eq!(c.assignment.states(), &[1]);
        assert_eq!(c.score, 0.5);
    }

    #[test]
    fn commit_chain2() {
        let (net, _, _) = chain2();
        let mut e = Evidence::new();
        e.observe("B", 0);
        for ev in [e, Evidence::new()] {
            let eq = propagate(&net, &ev, Mode::Revise).unwrap();
            let c = commit(&net, &eq, &ev).unwrap();
            assert_eq!(c.assignment.states(), &[0, 0]);
            assert!((c.score - 0.54).abs() < 1e-12);
        }
    }

    #[test]
    fn commit_requires_max_equilibrium() {
        let (net, _, _) = chain2();
        let eq = propagate(&net, &Evidence::new(), Mode::Update).unwrap();
        assert!(matches!(
            commit(&net, &eq, &Evidence::new()),
            Err(EngineError::NotRevision)
        ));
    }

    #[test]
    fn contradictory_evidence_is_zero_mass() {
        let net = load_network(
            r#"{"variables": [{"id": "A", "states": ["a0", "a1"]}, {"id": "B", "states": ["b0", "b1"]}],
                "nodes": [{"var": "A", "cpt": [0.6, 0.4]},
                          {"var": "B", "parents": ["A"], "cpt": [1.0, 0.2, 0.0, 0.8]}]}"#,
        )
        .unwrap();
        let mut e = Evidence::new();
        e.observe("A", 0).observe("B", 1);
        for mode in [Mode::Update, Mode::Revise] {
            match propagate(&net, &e, mode) {
                Err(EngineError::ZeroMass { node }) => assert!(node == "A" || node == "B"),
                other => panic!("expected zero mass, got {other:?}"),
            }
        }
    }

    #[test]
    fn rejects_non_polytree() {
        let net = BeliefNetwork::from_document(
            serde_json::from_str(
                r#"{"variables": [{"id": "A", "states": ["0","1"]}, {"id": "B", "states": ["0","1"]},
                                  {"id": "C", "states": ["0","1"]}],
                    "nodes": [{"var": "A", "cpt": [0.5, 0.5]},
                              {"var": "B", "parents": ["A"], "cpt": [0.5, 0.5, 0.5, 0.5]},
                              {"var": "C", "parents": ["A", "B"], "cpt": [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5]}]}"#,
            )
            .unwrap(),
        )
        .unwrap();
        assert!(matches!(
            propagate(&net, &Evidence::new(), Mode::Update),
            Err(EngineError::InvalidNetwork(_))
        ));
    }

    #[test]
    fn trace_records_each_emission() {
        let (net, _, _) = chain2();
        let opts = PropagationOptions {
            trace: true,
            ..Default::default()
        };
        let eq = propagate_with(&net, &Evidence::new(), Mode::Update.ops(), opts).unwrap();
        assert_eq!(eq.trace.len(), eq.emissions);
        let first = &eq.trace[0];
        assert_eq!((first.from.as_str(), first.to.as_str()), ("A", "B"));
        assert_eq!(first.kind, MessageKind::Pi);
        let line = first.to_json_line();
        let back: TraceRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(&back, first);
        assert!(line.contains(r#""mode":"update""#));
    }
}
