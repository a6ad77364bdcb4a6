//! Linear policy evaluation with recentered features: Baird's
//! counterexample, seeded variants, frozen network features, expected
//! TD(0) iteration and `(α, β)` phase sweeps.

mod mdp;
mod sweep;
mod td;

pub use mdp::{
    build_baird, build_random_variant, frozen_feature_mdp, frozen_feature_task, LinearMDP,
};
pub use sweep::{phase_sweep, SweepConfig, SweepGrid};
pub use td::{
    expected_td0_step, iteration_matrix, mean_abs_value, recenter, run_policy_eval, shift_vector,
    EvalTrace, PolicyEvalConfig, RecenterParams, DIVERGENCE_CAP, LOG_FLOOR,
};
