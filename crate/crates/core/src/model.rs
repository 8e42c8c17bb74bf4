//! Belief-network data model, document format and validation.
//!
//! A network is a DAG of discrete variables. Each node carries a conditional
//! table over `[child, parent_1, .., parent_n]` stored row-major, so for a
//! binary child `B` with one binary parent `A` the flat layout is
//! `[P(b0|a0), P(b0|a1), P(b1|a0), P(b1|a1)]`.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Axis, Tensor, VarId};

/// Tolerance on per-column sums of strict conditional tables.
pub const COLUMN_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    /// Every conditional table column sums to one.
    #[default]
    Strict,
    /// Entries only need to be nonnegative; their scale is arbitrary.
    Relative,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub id: String,
    pub states: Vec<String>,
}

impl Variable {
    pub fn cardinality(&self) -> usize {
        self.states.len()
    }

    pub fn state_index(&self, label: &str) -> Option<usize> {
        self.states.iter().position(|s| s == label)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeSpec {
    pub var: VarId,
    pub parents: Vec<VarId>,
    /// Axes `[var, parents..]` in that order.
    pub cpt: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeDocument {
    pub var: String,
    #[serde(default)]
    pub parents: Vec<String>,
    pub cpt: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub variables: Vec<Variable>,
    pub nodes: Vec<NodeDocument>,
    #[serde(default)]
    pub mode: ValidationMode,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ViolationKind {
    DirectedCycle { path: Vec<String> },
    UndirectedCycle { path: Vec<String> },
    CptShape { expected: usize, actual: usize },
    InvalidEntry { index: usize, value: f64 },
    ColumnSum { parent_config: usize, sum: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub var: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ViolationKind::DirectedCycle { path } => {
                write!(
                    f,
                    "variable {}: directed cycle {}",
                    self.var,
                    path.join(" -> ")
                )
            }
            ViolationKind::UndirectedCycle { path } => write!(
                f,
                "variable {}: network is not singly connected, undirected cycle {}",
                self.var,
                path.join(" - ")
            ),
            ViolationKind::CptShape { expected, actual } => write!(
                f,
                "variable {}: cpt has {actual} entries, expected {expected}",
                self.var
            ),
            ViolationKind::InvalidEntry { index, value } => write!(
                f,
                "variable {}: cpt entry {index} is {value}, must be finite and nonnegative",
                self.var
            ),
            ViolationKind::ColumnSum { parent_config, sum } => write!(
                f,
                "variable {}: cpt column {parent_config} sums to {sum}, expected 1",
                self.var
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("malformed network document: {0}")]
    Parse(String),
    #[error("network schema error: {0}")]
    Schema(String),
    #[error("invalid network:\n{0}")]
    Validation(ValidationReport),
}

/// Directed acyclic network of discrete variables. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefNetwork {
    variables: Vec<Variable>,
    nodes: Vec<NodeSpec>,
    children: Vec<Vec<VarId>>,
    mode: ValidationMode,
}

impl BeliefNetwork {
    /// Resolves references and checks table shapes. Graph structure and
    /// table values are not checked; see [`validate`].
    pub fn from_document(doc: NetworkDocument) -> Result<Self, LoadError> {
        let mut index: HashMap<&str, VarId> = HashMap::new();
        for (k, v) in doc.variables.iter().enumerate() {
            if index.insert(v.id.as_str(), VarId(k)).is_some() {
                return Err(LoadError::Schema(format!(
                    "duplicate variable id {:?}",
                    v.id
                )));
            }
            if v.states.is_empty() {
                return Err(LoadError::Schema(format!(
                    "variable {:?} has no states",
                    v.id
                )));
            }
            for (j, s) in v.states.iter().enumerate() {
                if v.states[..j].contains(s) {
                    return Err(LoadError::Schema(format!(
                        "variable {:?} declares state {s:?} twice",
                        v.id
                    )));
                }
            }
        }

        let mut slots: Vec<Option<NodeSpec>> = vec![None; doc.variables.len()];
        let mut shape_violations = Vec::new();
        for node in doc.nodes {
            let var = *index.get(node.var.as_str()).ok_or_else(|| {
                LoadError::Schema(format!("node refers to unknown variable {:?}", node.var))
            })?;
            if slots[var.0].is_some() {
                return Err(LoadError::Schema(format!(
                    "variable {:?} has more than one node",
                    node.var
                )));
            }
            let mut parents = Vec::with_capacity(node.parents.len());
            for p in &node.parents {
                let pid = *index.get(p.as_str()).ok_or_else(|| {
                    LoadError::Schema(format!("variable {:?} has unknown parent {p:?}", node.var))
                })?;
                if parents.contains(&pid) {
                    return Err(LoadError::Schema(format!(
                        "variable {:?} lists parent {p:?} twice",
                        node.var
                    )));
                }
                parents.push(pid);
            }
            let axes: Vec<Axis> = std::iter::once(var)
                .chain(parents.iter().copied())
                .map(|v| Axis {
                    var: v,
                    size: doc.variables[v.0].states.len(),
                })
                .collect();
            let expected: usize = axes.iter().map(|a| a.size).product();
            if node.cpt.len() != expected {
                shape_violations.push(Violation {
                    var: node.var.clone(),
                    kind: ViolationKind::CptShape {
                        expected,
                        actual: node.cpt.len(),
                    },
                });
                continue;
            }
            // A variable listed as its own parent is caught by cycle detection.
            let cpt = if parents.contains(&var) {
                Tensor::with_shape(vec![axes[0]], vec![0.0; axes[0].size])
            } else {
                Tensor::with_shape(axes, node.cpt)
            }
            .map_err(|e| LoadError::Schema(format!("variable {:?}: {e}", node.var)))?;
            slots[var.0] = Some(NodeSpec { var, parents, cpt });
        }
        if !shape_violations.is_empty() {
            return Err(LoadError::Validation(ValidationReport {
                violations: shape_violations,
            }));
        }
        let nodes = slots
            .into_iter()
            .enumerate()
            .map(|(k, n)| {
                n.ok_or_else(|| {
                    LoadError::Schema(format!("variable {:?} has no node", doc.variables[k].id))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut children = vec![Vec::new(); nodes.len()];
        for n in &nodes {
            for p in &n.parents {
                children[p.0].push(n.var);
            }
        }
        for c in &mut children {
            c.sort();
        }
        Ok(BeliefNetwork {
            variables: doc.variables,
            nodes,
            children,
            mode: doc.mode,
        })
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            variables: self.variables.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDocument {
                    var: self.id(n.var).to_string(),
                    parents: n.parents.iter().map(|p| self.id(*p).to_string()).collect(),
                    cpt: n.cpt.data().to_vec(),
                })
                .collect(),
            mode: self.mode,
        }
    }

    pub fn mode(&self) -> ValidationMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn vars(&self) -> impl Iterator<Item = VarId> {
        (0..self.variables.len()).map(VarId)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, var: VarId) -> &Variable {
        &self.variables[var.0]
    }

    pub fn id(&self, var: VarId) -> &str {
        &self.variables[var.0].id
    }

    pub fn var_id(&self, id: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.id == id).map(VarId)
    }

    pub fn axis(&self, var: VarId) -> Axis {
        Axis {
            var,
            size: self.variables[var.0].states.len(),
        }
    }

    pub fn node(&self, var: VarId) -> &NodeSpec {
        &self.nodes[var.0]
    }

    pub fn nodes(&self) -> &[NodeSpec] {
        &self.nodes
    }

    pub fn parents(&self, var: VarId) -> &[VarId] {
        &self.nodes[var.0].parents
    }

    pub fn children(&self, var: VarId) -> &[VarId] {
        &self.children[var.0]
    }

    /// Parents first, then children.
    pub fn neighbors(&self, var: VarId) -> impl Iterator<Item = VarId> + '_ {
        self.parents(var).iter().chain(self.children(var)).copied()
    }

    /// Directed edges `(parent, child)`.
    pub fn edges(&self) -> impl Iterator<Item = (VarId, VarId)> + '_ {
        self.nodes
            .iter()
            .flat_map(|n| n.parents.iter().map(move |p| (*p, n.var)))
    }

    pub fn edge_count(&self) -> usize {
        self.nodes.iter().map(|n| n.parents.len()).sum()
    }

    /// Returns a copy with one node's table multiplied by `factor`.
    pub fn with_scaled_cpt(&self, var: VarId, factor: f64) -> BeliefNetwork {
        let mut net = self.clone();
        net.nodes[var.0].cpt = net.nodes[var.0].cpt.map(|v| v * factor);
        net.mode = ValidationMode::Relative;
        net
    }
}

/// Parses, assembles and validates a network document in the mode it declares.
pub fn load_network(text: &str) -> Result<BeliefNetwork, LoadError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
    let doc: NetworkDocument =
        serde_json::from_value(value).map_err(|e| LoadError::Schema(e.to_string()))?;
    let net = BeliefNetwork::from_document(doc)?;
    let report = validate(&net, net.mode());
    if !report.is_empty() {
        return Err(LoadError::Validation(report));
    }
    Ok(net)
}

pub fn render(net: &BeliefNetwork) -> String {
    let mut s = serde_json::to_string_pretty(&net.to_document())
        .expect("network documents always serialize");
    s.push('\n');
    s
}

/// Checks acyclicity, single connectedness and table contents.
///
/// Edges are visited in sorted id order so the verdict and the reported
/// violations do not depend on the order nodes were declared in.
pub fn validate(net: &BeliefNetwork, mode: ValidationMode) -> ValidationReport {
    let mut violations = Vec::new();
    let id = |v: VarId| net.id(v).to_string();

    // Directed cycles: whatever Kahn's algorithm cannot peel lies on or
    // below a cycle.
    let mut indegree: Vec<usize> = net.vars().map(|v| net.parents(v).len()).collect();
    let mut ready: VecDeque<VarId> = net.vars().filter(|v| indegree[v.0] == 0).collect();
    while let Some(v) = ready.pop_front() {
        for &c in net.children(v) {
            indegree[c.0] -= 1;
            if indegree[c.0] == 0 {
                ready.push_back(c);
            }
        }
    }
    if let Some(start) = net
        .vars()
        .filter(|v| indegree[v.0] > 0)
        .min_by(|a, b| net.id(*a).cmp(net.id(*b)))
    {
        // Walk up through unpeeled parents until a variable repeats.
        let mut path = vec![start];
        let mut cur = start;
        loop {
            let next = net
                .parents(cur)
                .iter()
                .copied()
                .filter(|p| indegree[p.0] > 0)
                .min_by(|a, b| net.id(*a).cmp(net.id(*b)))
                .expect("an unpeeled variable has an unpeeled parent");
            if let Some(pos) = path.iter().position(|v| *v == next) {
                let mut cycle: Vec<String> = path[pos..].iter().rev().map(|v| id(*v)).collect();
                cycle.push(id(next));
                let var = path[pos..].iter().map(|v| id(*v)).min().unwrap_or_default();
                violations.push(Violation {
                    var,
                    kind: ViolationKind::DirectedCycle { path: cycle },
                });
                break;
            }
            path.push(next);
            cur = next;
        }
    }

    // Undirected cycles.
    let mut edges: Vec<(VarId, VarId)> = net.edges().filter(|(p, c)| p != c).collect();
    edges.sort_by(|a, b| (net.id(a.1), net.id(a.0)).cmp(&(net.id(b.1), net.id(b.0))));
    let mut forest: Vec<Vec<VarId>> = vec![Vec::new(); net.len()];
    for (p, c) in edges {
        if let Some(path) = tree_path(&forest, c, p) {
            let mut names: Vec<String> = path.iter().map(|v| id(*v)).collect();
            names.push(id(c));
            violations.push(Violation {
                var: id(c),
                kind: ViolationKind::UndirectedCycle { path: names },
            });
        } else {
            forest[p.0].push(c);
            forest[c.0].push(p);
        }
    }

    for node in net.nodes() {
        if let Some((index, &value)) = node
            .cpt
            .data()
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            violations.push(Violation {
                var: id(node.var),
                kind: ViolationKind::InvalidEntry { index, value },
            });
            continue;
        }
        if mode == ValidationMode::Strict && node.cpt.order() == node.parents.len() + 1 {
            let r = net.variable(node.var).cardinality();
            let columns = node.cpt.len() / r;
            for c in 0..columns {
                let sum: f64 = (0..r).map(|x| node.cpt.data()[x * columns + c]).sum();
                if (sum - 1.0).abs() > COLUMN_SUM_TOLERANCE {
                    violations.push(Violation {
                        var: id(node.var),
                        kind: ViolationKind::ColumnSum {
                            parent_config: c,
                            sum,
                        },
                    });
                    break;
                }
            }
        }
    }
    ValidationReport { violations }
}

/// Path `from .. to` through an undirected forest, if connected.
fn tree_path(forest: &[Vec<VarId>], from: VarId, to: VarId) -> Option<Vec<VarId>> {
    let mut prev: Vec<Option<VarId>> = vec![None; forest.len()];
    let mut seen = vec![false; forest.len()];
    let mut queue = VecDeque::from([from]);
    seen[from.0] = true;
    while let Some(v) = queue.pop_front() {
        if v == to {
            let mut path = vec![v];
            let mut cur = v;
            while let Some(p) = prev[cur.0] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for &n in &forest[v.0] {
            if !seen[n.0] {
                seen[n.0] = true;
                prev[n.0] = Some(v);
                queue.push_back(n);
            }
        }
    }
    None
}

/// A complete instantiation of every variable, indexed by [`VarId`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Assignment(Vec<usize>);

impl Assignment {
    pub fn new(net: &BeliefNetwork, states: Vec<usize>) -> Option<Self> {
        if states.len() != net.len()
            || states
                .iter()
                .zip(net.variables())
                .any(|(s, v)| *s >= v.cardinality())
        {
            return None;
        }
        Some(Assignment(states))
    }

    pub fn get(&self, var: VarId) -> usize {
        self.0[var.0]
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }

    /// `(variable id, state label)` pairs in variable order.
    pub fn labeled<'a>(&'a self, net: &'a BeliefNetwork) -> Vec<(&'a str, &'a str)> {
        net.variables()
            .iter()
            .zip(&self.0)
            .map(|(v, s)| (v.id.as_str(), v.states[*s].as_str()))
            .collect()
    }
}

/// Chain-rule product of every node's table entry under `w`.
pub fn joint_probability(net: &BeliefNetwork, w: &Assignment) -> f64 {
    chain_rule(net, w.states())
}

pub(crate) fn chain_rule(net: &BeliefNetwork, states: &[usize]) -> f64 {
    net.nodes()
        .iter()
        .map(|n| {
            let mut flat = states[n.var.0];
            for p in &n.parents {
                flat = flat * net.variable(*p).cardinality() + states[p.0];
            }
            n.cpt.data()[flat]
        })
        .product()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvidenceError {
    #[error("malformed evidence document: {0}")]
    Parse(String),
    #[error("evidence refers to unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("variable {var:?} has no state {state:?}")]
    UnknownState { var: String, state: String },
    #[error("state index {index} out of range for variable {var:?}")]
    StateOutOfRange { var: String, index: usize },
    #[error("likelihood for {var:?} has {actual} entries, expected {expected}")]
    LikelihoodLength {
        var: String,
        expected: usize,
        actual: usize,
    },
    #[error("likelihood for {0:?} must be finite, nonnegative and not all zero")]
    InvalidLikelihood(String),
    #[error("variable {0:?} has both hard and soft evidence")]
    Conflict(String),
}

/// Observations keyed by variable id: hard states and soft likelihoods.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Evidence {
    hard: BTreeMap<String, usize>,
    soft: BTreeMap<String, Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceDocument {
    #[serde(default)]
    pub hard: BTreeMap<String, String>,
    #[serde(default)]
    pub soft: BTreeMap<String, Vec<f64>>,
}

impl Evidence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, var: impl Into<String>, state: usize) -> &mut Self {
        self.hard.insert(var.into(), state);
        self
    }

    pub fn observe_label(
        &mut self,
        net: &BeliefNetwork,
        var: &str,
        label: &str,
    ) -> Result<&mut Self, EvidenceError> {
        let v = net
            .var_id(var)
            .ok_or_else(|| EvidenceError::UnknownVariable(var.to_string()))?;
        let s = net
            .variable(v)
            .state_index(label)
            .ok_or_else(|| EvidenceError::UnknownState {
                var: var.to_string(),
                state: label.to_string(),
            })?;
        Ok(self.observe(var, s))
    }

    pub fn likelihood(&mut self, var: impl Into<String>, values: Vec<f64>) -> &mut Self {
        self.soft.insert(var.into(), values);
        self
    }

    pub fn hard(&self) -> &BTreeMap<String, usize> {
        &self.hard
    }

    pub fn soft(&self) -> &BTreeMap<String, Vec<f64>> {
        &self.soft
    }

    pub fn is_empty(&self) -> bool {
        self.hard.is_empty() && self.soft.is_empty()
    }

    pub fn from_document(text: &str, net: &BeliefNetwork) -> Result<Self, EvidenceError> {
        let doc: EvidenceDocument =
            serde_json::from_str(text).map_err(|e| EvidenceError::Parse(e.to_string()))?;
        let mut e = Evidence::new();
        for (var, label) in &doc.hard {
            e.observe_label(net, var, label)?;
        }
        for (var, values) in doc.soft {
            e.likelihood(var, values);
        }
        e.factors(net)?;
        Ok(e)
    }

    /// Raw evidence factor per variable: an indicator for hard evidence, the
    /// likelihood vector for soft evidence, `None` when unobserved.
    pub fn factors(&self, net: &BeliefNetwork) -> Result<Vec<Option<Vec<f64>>>, EvidenceError> {
        let mut out = vec![None; net.len()];
        for (var, &state) in &self.hard {
            let v = net
                .var_id(var)
                .ok_or_else(|| EvidenceError::UnknownVariable(var.clone()))?;
            let r = net.variable(v).cardinality();
            if state >= r {
                return Err(EvidenceError::StateOutOfRange {
                    var: var.clone(),
                    index: state,
                });
            }
            let mut ind = vec![0.0; r];
            ind[state] = 1.0;
            out[v.0] = Some(ind);
        }
        for (var, values) in &self.soft {
            let v = net
                .var_id(var)
                .ok_or_else(|| EvidenceError::UnknownVariable(var.clone()))?;
            if self.hard.contains_key(var) {
                return Err(EvidenceError::Conflict(var.clone()));
            }
            let r = net.variable(v).cardinality();
            if values.len() != r {
                return Err(EvidenceError::LikelihoodLength {
                    var: var.clone(),
                    expected: r,
                    actual: values.len(),
                });
            }
            if values.iter().any(|x| !x.is_finite() || *x < 0.0) || values.iter().all(|x| *x == 0.0)
            {
                return Err(EvidenceError::InvalidLikelihood(var.clone()));
            }
            out[v.0] = Some(values.clone());
        }
        Ok(out)
    }

    /// Product of the raw evidence factors at `w`.
    pub fn weight(&self, net: &BeliefNetwork, w: &Assignment) -> Result<f64, EvidenceError> {
        Ok(self
            .factors(net)?
            .iter()
            .enumerate()
            .filter_map(|(k, f)| f.as_ref().map(|f| f[w.get(VarId(k))]))
            .product())
    }
}
