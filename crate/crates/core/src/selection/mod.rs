//! One-shot private mechanisms and confidence boosting.

pub mod boost;
pub mod exp_mech;
pub mod output_perturbation;

pub use boost::{boost, BoostConfig, BoostOutcome, BoostRun};
pub use exp_mech::{
    build_sparse_net, net_cardinality_bound, solve_tau, sparse_exp_mechanism, sparsification_gap, ExpMechConfig,
    ExpMechOutput, ExpWeight, NetPoint, TauRule, TauSolution,
};
pub use output_perturbation::{
    lambda_recommend, output_perturbation, pure_l1_sensitivity, solve_regularized_erm, LambdaRegime, OutputPertConfig,
    OutputPertResult,
};
