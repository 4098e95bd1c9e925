//! Running models on a manifest and scoring them.

mod extract;
mod report;
mod run;
mod score;

pub use extract::{extract_choice, extract_choice_with_options, EXTRACTOR_VERSION};
pub use report::{emit_report, emit_rows, parse_csv, render_csv, render_plot, render_table, LeaderboardRow, ReportFormat};
pub use run::{
    answer_key, eval_prompt, render_question_image, run_eval, BlankImages, HttpModelClient, ImageProvider, ModelClient,
    ModelRequest, OracleClient, RandomClient, RenderedImages, ReplayModelClient, RunOptions,
};
pub use score::{score, EvalReport, Percent, Prediction, PredictionLog, TypeScore};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no prediction for {} question(s): {}", .0.len(), .0.join(", "))]
    MissingPredictions(Vec<String>),
    #[error("predictions for unknown question(s): {}", .0.join(", "))]
    UnknownPredictions(Vec<String>),
    #[error("duplicate predictions: {}", .0.join(", "))]
    DuplicatePredictions(Vec<String>),
    #[error("manifest has no questions")]
    EmptyManifest,
    #[error("no reports to emit")]
    EmptyReport,
    #[error("unknown report format {0:?} (expected table, csv or plot)")]
    UnknownFormat(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}
