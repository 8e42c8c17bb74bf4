//! Brute-force ground truth by exhaustive enumeration of the joint, and a
//! seeded generator of random polytrees. Exponential by construction; meant
//! for tests and cross-checks on small networks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{
    chain_rule, Assignment, BeliefNetwork, Evidence, EvidenceError, NetworkDocument, NodeDocument,
    ValidationMode, Variable,
};
use crate::tensor::{Normalization, Tensor, VarId};

pub const DEFAULT_JOINT_CAP: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("joint table would have {states} entries, above the cap of {cap}")]
    CapExceeded { states: u128, cap: usize },
    #[error("evidence has zero probability under the network")]
    ZeroMass,
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
}

/// Every joint state of the network, in row-major order over the variables
/// in declaration order, weighted by the evidence factors.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable(pub Tensor);

impl JointTable {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    /// Entries within `tol` of the maximum.
    pub fn optimum_count(&self, tol: f64) -> usize {
        let max = self.0.max();
        self.0.data().iter().filter(|v| max - **v <= tol).count()
    }
}

pub fn joint_size(net: &BeliefNetwork) -> u128 {
    net.variables()
        .iter()
        .map(|v| v.cardinality() as u128)
        .fold(1u128, |a, b| a.saturating_mul(b))
}

pub fn enumerate_joint(net: &BeliefNetwork, e: &Evidence) -> Result<JointTable, OracleError> {
    enumerate_joint_capped(net, e, DEFAULT_JOINT_CAP)
}

pub fn enumerate_joint_capped(
    net: &BeliefNetwork,
    e: &Evidence,
    cap: usize,
) -> Result<JointTable, OracleError> {
    let states = joint_size(net);
    if states > cap as u128 {
        return Err(OracleError::CapExceeded { states, cap });
    }
    let factors = e.factors(net)?;
    let axes: Vec<_> = net.vars().map(|v| net.axis(v)).collect();
    let sizes: Vec<usize> = axes.iter().map(|a| a.size).collect();
    let mut data = Vec::with_capacity(states as usize);
    let mut index = vec![0; sizes.len()];
    loop {
        let weight: f64 = factors
            .iter()
            .zip(&index)
            .filter_map(|(f, s)| f.as_ref().map(|f| f[*s]))
            .product();
        data.push(chain_rule(net, &index) * weight);

        let mut k = sizes.len();
        loop {
            if k == 0 {
                let t = Tensor::new(axes, data).expect("joint entries are nonnegative");
                return Ok(JointTable(t));
            }
            k -= 1;
            index[k] += 1;
            if index[k] < sizes[k] {
                break;
            }
            index[k] = 0;
        }
    }
}

/// Posterior marginal of `var` by summing the joint over everything else.
pub fn oracle_marginal(
    net: &BeliefNetwork,
    e: &Evidence,
    var: VarId,
) -> Result<Tensor, OracleError> {
    let joint = enumerate_joint(net, e)?;
    marginal_of(net, &joint, var)
}

pub fn marginal_of(
    net: &BeliefNetwork,
    joint: &JointTable,
    var: VarId,
) -> Result<Tensor, OracleError> {
    let t = joint.tensor();
    let r = net.variable(var).cardinality();
    let stride = t.strides()[var.0];
    let mut sums = vec![0.0; r];
    for (flat, v) in t.data().iter().enumerate() {
        sums[(flat / stride) % r] += v;
    }
    let m = Tensor::vector(net.axis(var), sums).expect("sums of nonnegative entries");
    crate::tensor::normalize(&m, Normalization::SumToOne).map_err(|_| OracleError::ZeroMass)
}

/// Most probable joint state (lowest row-major index on ties) and its
/// evidence-weighted probability.
pub fn oracle_mpe(net: &BeliefNetwork, e: &Evidence) -> Result<(Assignment, f64), OracleError> {
    mpe_of(net, &enumerate_joint(net, e)?)
}

pub fn mpe_of(net: &BeliefNetwork, joint: &JointTable) -> Result<(Assignment, f64), OracleError> {
    let (index, value) = crate::tensor::argmax(joint.tensor());
    if value <= 0.0 {
        return Err(OracleError::ZeroMass);
    }
    Ok((
        Assignment::new(net, index).expect("argmax is in range"),
        value,
    ))
}

/// Random strict polytree, deterministic in `seed`.
///
/// The undirected skeleton is a uniformly random labeled tree decoded from
/// a random Prüfer sequence. Edges start oriented away from a random root
/// and are then flipped at random wherever the flip keeps every in-degree
/// at most `max_parents`. Cardinalities are drawn from `2..=max_card` and
/// every table column is positive and sums to one.
pub fn random_polytree(
    seed: u64,
    n_vars: usize,
    max_card: usize,
    max_parents: usize,
) -> BeliefNetwork {
    assert!(n_vars >= 1, "a network needs at least one variable");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_card = max_card.max(1);
    let max_parents = max_parents.max(1);

    let cards: Vec<usize> = (0..n_vars)
        .map(|_| rng.gen_range(max_card.min(2)..=max_card))
        .collect();
    let skeleton = match n_vars {
        1 => Vec::new(),
        2 => vec![(0, 1)],
        n => {
            let code: Vec<usize> = (0..n - 2).map(|_| rng.gen_range(0..n)).collect();
            prufer_decode(&code)
        }
    };

    // Orient away from a random root.
    let mut adj = vec![Vec::new(); n_vars];
    for &(u, v) in &skeleton {
        adj[u].push(v);
        adj[v].push(u);
    }
    let root = rng.gen_range(0..n_vars);
    let mut edges = Vec::with_capacity(skeleton.len());
    let mut seen = vec![false; n_vars];
    let mut stack = vec![root];
    seen[root] = true;
    while let Some(u) = stack.pop() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                edges.push((u, v));
                stack.push(v);
            }
        }
    }
    let mut indegree = vec![0usize; n_vars];
    for &(_, c) in &edges {
        indegree[c] += 1;
    }
    edges.shuffle(&mut rng);
    for e in edges.iter_mut() {
        let (p, c) = *e;
        if rng.gen_bool(0.5) && indegree[p] < max_parents {
            indegree[p] += 1;
            indegree[c] -= 1;
            *e = (c, p);
        }
    }

    let mut parents = vec![Vec::new(); n_vars];
    for &(p, c) in &edges {
        parents[c].push(p);
    }
    for p in &mut parents {
        p.sort_unstable();
    }

    let width = (n_vars - 1).to_string().len();
    let name = |k: usize| format!("X{k:0width$}");
    let variables = (0..n_vars)
        .map(|k| Variable {
            id: name(k),
            states: (0..cards[k]).map(|s| format!("s{s}")).collect(),
        })
        .collect();
    let nodes = (0..n_vars)
        .map(|k| {
            let r = cards[k];
            let columns: usize = parents[k].iter().map(|p| cards[*p]).product();
            let mut cpt = vec![0.0; r * columns];
            for c in 0..columns {
                let column: Vec<f64> = (0..r).map(|_| rng.gen_range(0.05..1.0)).collect();
                let z: f64 = column.iter().sum();
                for (x, v) in column.into_iter().enumerate() {
                    cpt[x * columns + c] = v / z;
                }
            }
            NodeDocument {
                var: name(k),
                parents: parents[k].iter().map(|p| name(*p)).collect(),
                cpt,
            }
        })
        .collect();
    BeliefNetwork::from_document(NetworkDocument {
        variables,
        nodes,
        mode: ValidationMode::Strict,
    })
    .expect("generated documents are well formed")
}

/// Decodes a Prüfer sequence over labels `0..code.len() + 2` into tree edges.
pub fn prufer_decode(code: &[usize]) -> Vec<(usize, usize)> {
    let n = code.len() + 2;
    let mut degree = vec![1usize; n];
    for &c in code {
        degree[c] += 1;
    }
    let mut leaves: std::collections::BTreeSet<usize> =
        (0..n).filter(|v| degree[*v] == 1).collect();
    let mut edges = Vec::with_capacity(n - 1);
    for &c in code {
        let leaf = leaves.pop_first().expect("a Prüfer step always has a leaf");
        edges.push((leaf, c));
        degree[c] -= 1;
        if degree[c] == 1 {
            leaves.insert(c);
        }
    }
    let mut rest = leaves.into_iter();
    let (u, v) = (rest.next().unwrap(), rest.next().unwrap());
    edges.push((u, v));
    edges
}

/// Hard observations on `count` distinct random variables, in random states.
pub fn random_evidence<R: Rng>(net: &BeliefNetwork, rng: &mut R, count: usize) -> Evidence {
    let mut vars: Vec<VarId> = net.vars().collect();
    vars.shuffle(rng);
    let mut e = Evidence::new();
    for v in vars.into_iter().take(count) {
        let r = net.variable(v).cardinality();
        e.observe(net.id(v), rng.gen_range(0..r));
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{load_network, render, validate};

    const CHAIN2: &str = r#"{
        "variables": [{"id": "A", "states": ["a0", "a1"]}, {"id": "B", "states": ["b0", "b1"]}],
        "nodes": [{"var": "A", "parents": [], "cpt": [0.6, 0.4]},
                  {"var": "B", "parents": ["A"], "cpt": [0.9, 0.2, 0.1, 0.8]}]
    }"#;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn chain2_joint() {
        let net = load_network(CHAIN2).unwrap();
        let j = enumerate_joint(&net, &Evidence::new()).unwrap();
        assert!(close(j.tensor().data(), &[0.54, 0.06, 0.08, 0.32], 1e-15));
        let mut e = Evidence::new();
        e.observe("B", 0);
        let j = enumerate_joint(&net, &e).unwrap();
        assert!(close(j.tensor().data(), &[0.54, 0.0, 0.08, 0.0], 1e-15));
    }

    #[test]
    fn chain2_marginal_and_mpe() {
        let net = load_network(CHAIN2).unwrap();
        let mut e = Evidence::new();
        e.observe("B", 0);
        let m = oracle_marginal(&net, &e, VarId(0)).unwrap();
        assert!(close(m.data(), &[0.54 / 0.62, 0.08 / 0.62], 1e-15));
        let prior = oracle_marginal(&net, &Evidence::new(), VarId(0)).unwrap();
        assert!(close(prior.data(), &[0.6, 0.4], 1e-15));

        for ev in [e, Evidence::new()] {
            let (w, v) = oracle_mpe(&net, &ev).unwrap();
            assert_eq!(w.states(), &[0, 0]);
            assert!((v - 0.54).abs() < 1e-15);
        }
    }

    #[test]
    fn tie_fixture() {
        let net = load_network(
            r#"{"variables": [{"id": "A", "states": ["a0", "a1"]}, {"id": "B", "states": ["b0", "b1"]}],
                "nodes": [{"var": "A", "cpt": [0.5, 0.5]},
                          {"var": "B", "parents": ["A"], "cpt": [1, 0, 0, 1]}]}"#,
        )
        .unwrap();
        let j = enumerate_joint(&net, &Evidence::new()).unwrap();
        assert_eq!(j.optimum_count(1e-12), 2);
        let (w, v) = mpe_of(&net, &j).unwrap();
        assert_eq!(w.states(), &[0, 0]);
        assert_eq!(v, 0.5);
    }

    #[test]
    fn contradictory_evidence() {
        let net = load_network(
            r#"{"variables": [{"id": "A", "states": ["a0", "a1"]}, {"id": "B", "states": ["b0", "b1"]}],
                "nodes": [{"var": "A", "cpt": [1, 0]},
                          {"var": "B", "parents": ["A"], "cpt": [1, 0.5, 0, 0.5]}]}"#,
        )
        .unwrap();
        let mut e = Evidence::new();
        e.observe("B", 1);
        assert!(matches!(
            oracle_marginal(&net, &e, VarId(0)),
            Err(OracleError::ZeroMass)
        ));
        assert!(matches!(oracle_mpe(&net, &e), Err(OracleError::ZeroMass)));
    }

    #[test]
    fn cap_is_enforced() {
        let net = random_polytree(3, 12, 4, 3);
        let states = joint_size(&net);
        assert!(matches!(
            enumerate_joint_capped(&net, &Evidence::new(), (states - 1) as usize),
            Err(OracleError::CapExceeded { .. })
        ));
    }

    #[test]
    fn prufer_round_trip_shapes() {
        assert_eq!(prufer_decode(&[]), vec![(0, 1)]);
        // Star centred on 0.
        let star = prufer_decode(&[0, 0, 0]);
        assert_eq!(star.len(), 4);
        assert!(star.iter().all(|(u, v)| *u == 0 || *v == 0));
        // Path 1-3-2-0 ... decoded edges stay a tree.
        let edges = prufer_decode(&[3, 2]);
        assert_eq!(edges, vec![(0, 3), (1, 2), (2, 3)]);
    }

    #[test]
    fn random_polytrees_are_valid_and_deterministic() {
        let one = random_polytree(9, 1, 4, 3);
        assert_eq!(one.len(), 1);
        assert_eq!(one.edge_count(), 0);
        for seed in 0..50 {
            let n = 1 + (seed as usize % 10);
            let net = random_polytree(seed, n, 4, 3);
            assert_eq!(net.edge_count(), n - 1);
            assert!(validate(&net, ValidationMode::Strict).is_empty());
            assert!(net.vars().all(|v| net.parents(v).len() <= 3));
            assert!(net
                .variables()
                .iter()
                .all(|v| (2..=4).contains(&v.cardinality())));
            assert_eq!(render(&net), render(&random_polytree(seed, n, 4, 3)));
        }
        let limited = random_polytree(4, 10, 2, 1);
        assert!(limited.vars().all(|v| limited.parents(v).len() <= 1));
    }

    #[test]
    fn strict_joint_sums_to_one() {
        for seed in 0..20 {
            let net = random_polytree(seed, 6, 3, 2);
            let j = enumerate_joint(&net, &Evidence::new()).unwrap();
            assert!((j.tensor().sum() - 1.0).abs() < 1e-9);
        }
    }
}
