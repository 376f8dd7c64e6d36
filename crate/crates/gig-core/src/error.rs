use thiserror::Error;

/// Crate-wide error type.
#[derive(Error, Debug)]
pub enum GigError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("graph error: {0}")]
    Graph(String),

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("pattern error: {0}")]
    Pattern(String),

    #[error("unknown column {variable}.{attribute}")]
    UnknownColumn { variable: String, attribute: String },

    #[error("distance error: {0}")]
    Distance(String),

    #[error("rule error: {0}")]
    Rule(String),

    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("model error: {0}")]
    Model(String),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<GigError>,
    },
}

pub type Result<T> = std::result::Result<T, GigError>;

impl GigError {
    pub fn in_stage(self, stage: &str) -> GigError {
        GigError::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
