//! Benchmark-driven collaboration of experts.
//!
//! Recorded per-query benchmark scores become routing labels, a linear text
//! router is trained on them, and routing policies are scored by replaying
//! the recorded results.
//!
//! * [`corpus`] loads correctness matrices and leaderboards.
//! * [`labeler`] derives query-level and subject-level router datasets.
//! * [`router`] featurizes text, trains and applies the router.
//! * [`evaluator`] replays policies and reports accuracy against oracles.

pub mod corpus;
pub mod error;
pub mod evaluator;
pub mod labeler;
pub mod router;
pub mod synthetic;

pub use corpus::{
    compute_leaderboard, load_leaderboard, load_matrix, save_leaderboard, save_matrix,
    CorrectnessMatrix, Leaderboard, QueryRecord, NO_SUBJECT,
};
pub use error::{Error, Result};
pub use evaluator::{
    diversity_report, emit_report, oracle_bounds, render_report, replay, scenario_run,
    score_answer, DiversityReport, EvalReport, OracleBounds, Policy, ReportFormat, ScoreRule,
};
pub use labeler::{
    build_labels, build_query_labels, build_subject_labels, read_dataset, select_model_set,
    write_dataset, Level, RouterDataset, RouterExample,
};
pub use router::{
    load_params, predict_distribution, route, route_via_leaderboard, save_params, train,
    FeaturizerSpec, Route, RouterParams, SharedLeaderboard, TrainConfig,
};
