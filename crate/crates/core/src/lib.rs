//! Learning dynamics for monotone imperfect-information games.
//!
//! Games are finite trees with information states ([`game`]). Policies are
//! evaluated exactly ([`values`]), optionally under a policy-dependent reward
//! transformation ([`transform`]), and learned with the
//! follow-the-regularized-leader flow ([`dynamics`]). [`diagnostics`] measures
//! trajectories and [`anchoring`] runs the re-anchoring iteration.
//!
//! Every numeric type is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! and `*32` aliases below fix the scalar.

pub mod anchoring;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod policy;
pub mod scalar;
pub mod transform;
pub mod values;

pub use anchoring::{
    iterate_anchors, iterate_anchors_with, kl_contraction_check, lemma6_decomposition, solve_transformed, AnchorDecomposition, AnchorRun,
    AnchorSchedule, AnchorStep, Interpolation, SolveOutcome, SolverOptions,
};
pub use diagnostics::{
    fit_decay_rate, lyapunov_j, matrix_qre, recurrence_stat, run_recorded, xi_divergence, xi_divergence_weighted,
    DiagnosticsRecord, RateFit, Recorder, Recurrence, Trajectory, XiWeighting,
};
pub use dynamics::{
    divergence_check, equivalence_check, run, step, vector_field, DivergenceReport, DynamicsState, EtaSchedule,
    Integrator, Regularizer, RunOptions, RunOutcome, ScoreMode,
};
pub use error::{Error, Result};
pub use game::{
    build_kuhn_poker, build_leduc_poker, build_matrix_game, build_polymatrix_game, kuhn_equilibrium, parse_game_text,
    validate, Actor, GameFile, GameTree, PolymatrixPayoffs,
};
pub use policy::Policy;
pub use scalar::Scalar;
pub use transform::{
    expected_penalty_decomposition, transformed_reward, DenominatorMode, PenaltyDecomposition, TransformSpec,
    TransformVariant,
};
pub use values::{best_response, monotonicity_gap, nash_conv, reach_probs, root_values, value_tables, BaseReward, RewardFn};

pub type GameTree64 = GameTree<f64>;
pub type GameTree32 = GameTree<f32>;
pub type Policy64 = Policy<f64>;
pub type Policy32 = Policy<f32>;
pub type TransformSpec64 = TransformSpec<f64>;
pub type TransformSpec32 = TransformSpec<f32>;
pub type DynamicsState64 = DynamicsState<f64>;
pub type DynamicsState32 = DynamicsState<f32>;
pub type DiagnosticsRecord64 = DiagnosticsRecord<f64>;
pub type AnchorRun64 = AnchorRun<f64>;
