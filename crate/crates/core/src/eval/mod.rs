//! Measurement harness: pair construction, threshold discovery, error
//! rates, entropy, attacks and collision-probability checks.

pub mod attack;
pub mod evaluate;
pub mod lsim;
pub mod pairs;
pub mod report;
pub mod stats;
pub mod threshold;
pub mod train;

pub use attack::{attack_stats, bernoulli_attack, bernoulli_attack_parts, guess_order, guessing_attack, GuessOrdering};
pub use evaluate::{
    capacities, evaluate, evaluate_prints, pair_decisions, pair_score, segment_distances, threshold_accepts, AttackStats,
    EvalMode, EvalReport, PrintBook,
};
pub use lsim::{angle_collision_check, lsim_verify, AngleReport, Granularity, LsimReport};
pub use pairs::{build_pairs, vaccine_pairs, AuthSample, Label, PairPolicy};
pub use report::{render_angle, render_attack, render_eval, render_lsim, render_tau_table, TauRow};
pub use stats::{entropy_bits, entropy_estimate, mann_whitney_greater, EntropyEstimate, MannWhitney};
pub use threshold::{grid, sweep_threshold, Counts, ScoreSet, ThresholdSweep, GRID_SIZE};
pub use train::{fold_assignment, kfold_train, FoldSummary, TrainConfig, TrainOutcome, VaccineMode};
