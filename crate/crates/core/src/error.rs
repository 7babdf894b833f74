use std::fmt;

/// Errors raised anywhere in the inspection workflow.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),
    #[error("defect addresses street {0} outside the chip grid")]
    DefectOutOfGrid(String),
    #[error("bad class mix: {0}")]
    BadMix(String),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate contour (zero-area bounding box)")]
    DegenerateContour,
    #[error("no contour found in patch")]
    NoContour,
    #[error("layout does not match image: {0}")]
    LayoutMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class {0} has no training examples")]
    EmptyClass(usize),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    DivergenceDetected { epoch: usize },
    #[error("no training data")]
    EmptyData,
    #[error("SMO did not converge within {passes} passes")]
    NonConvergence { passes: usize },
    #[error("chip {0} has no adjacent labeled street")]
    MissingAdjacency(String),
    #[error("untrained model: {0}")]
    UntrainedModel(String),
    #[error("need at least {need} items, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("verdict is empty")]
    EmptyVerdict,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

/// Identifies which part of the pipeline produced an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Chip,
    Street(usize),
    Mapping,
    Train,
    Eval,
    Infer,
    Report,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Synth => f.write_str("synth"),
            Stage::Chip => f.write_str("chip"),
            Stage::Street(i) => write!(f, "street[{i}]"),
            Stage::Mapping => f.write_str("mapping"),
            Stage::Train => f.write_str("train"),
            Stage::Eval => f.write_str("eval"),
            Stage::Infer => f.write_str("infer"),
            Stage::Report => f.write_str("report"),
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Parse {
            what,
            detail: detail.into(),
        }
    }

    /// Attaches the stage that failed; already-tagged errors are left alone.
    pub fn in_stage(self, stage: Stage) -> Self {
        match self {
            e @ Error::Stage { .. } => e,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// The innermost error, with stage tags peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
