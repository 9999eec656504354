use std::fmt;

/// Process exit codes.
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_FIT: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub stage: Option<&'static str>,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            stage: None,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            stage: None,
            message: message.into(),
        }
    }

    pub fn from_config(e: hsps::Error) -> Self {
        Self::config(e.to_string())
    }

    /// Classifies a library error raised while processing data.
    pub fn from_data(e: hsps::Error) -> Self {
        use hsps::Error::*;
        let code = match e {
            InvalidParameter { .. } | NotLowGain { .. } | NotPrime(_) | EmptyGrid => EXIT_CONFIG,
            NotIdentifiable { .. } => EXIT_FIT,
            _ => EXIT_DATA,
        };
        Self {
            code,
            stage: None,
            message: e.to_string(),
        }
    }

    /// Any failure inside the fitter is a fit error.
    pub fn from_fit(e: hsps::Error) -> Self {
        Self {
            code: EXIT_FIT,
            stage: None,
            message: e.to_string(),
        }
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        Self::data(format!("{}: {e}", path.display()))
    }

    pub fn in_stage(mut self, stage: &'static str) -> Self {
        self.stage.get_or_insert(stage);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(s) => write!(f, "stage `{s}` failed: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}
