//! Exact inference on discrete polytree belief networks.
//!
//! Posterior marginals and the most probable joint instantiation are both
//! computed by one message-passing kernel built on named-axis tensor
//! contraction; the two differ only in whether contractions sum or maximize.
//!
//! ```
//! use tensorbel::{commit, load_network, propagate, Evidence, Mode};
//!
//! let net = load_network(r#"{
//!     "variables": [{"id": "A", "states": ["a0", "a1"]}, {"id": "B", "states": ["b0", "b1"]}],
//!     "nodes": [{"var": "A", "parents": [], "cpt": [0.6, 0.4]},
//!               {"var": "B", "parents": ["A"], "cpt": [0.9, 0.2, 0.1, 0.8]}]
//! }"#).unwrap();
//! let mut e = Evidence::new();
//! e.observe_label(&net, "B", "b0").unwrap();
//!
//! let updated = propagate(&net, &e, Mode::Update).unwrap();
//! let a = net.var_id("A").unwrap();
//! assert!((updated.result(a).bel.data()[0] - 0.54 / 0.62).abs() < 1e-12);
//!
//! let revised = propagate(&net, &e, Mode::Revise).unwrap();
//! let best = commit(&net, &revised, &e).unwrap();
//! assert_eq!(best.assignment.labeled(&net), vec![("A", "a0"), ("B", "b0")]);
//! assert!((best.score - 0.54).abs() < 1e-12);
//! ```

pub mod engine;
pub mod model;
pub mod oracle;
pub mod tensor;

pub use engine::{
    commit, compute_bel, compute_lambda_to_parent, compute_pi_to_child, init_boundaries, propagate,
    propagate_with, Commitment, EngineError, Equilibrium, KernelOps, LocalKernel, MessageBoard,
    MessageKind, Mode, NodeResult, PropagationOptions, Schedule, TraceRecord,
};
pub use model::{
    joint_probability, load_network, render, validate, Assignment, BeliefNetwork, Evidence,
    EvidenceError, LoadError, ValidationMode, ValidationReport, Variable, Violation, ViolationKind,
};
pub use oracle::{
    enumerate_joint, oracle_marginal, oracle_mpe, random_polytree, JointTable, OracleError,
};
pub use tensor::{
    argmax, inner_product, normalize, outer_product, term_product, unit_vector, Axis, CombineOp,
    Contraction, Normalization, Tensor, TensorError, VarId, WitnessTable,
};
