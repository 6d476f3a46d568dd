use std::fmt;
use std::process::ExitCode;

/// A command failure with its exit status: 1 for invalid input, 2 for
/// numerical breakdown.
#[derive(Debug)]
pub struct Failure {
    pub numerical: bool,
    pub message: String,
}

impl Failure {
    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            numerical: false,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            numerical: true,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(if self.numerical { 2 } else { 1 })
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<dualq_seld::Error> for Failure {
    fn from(e: dualq_seld::Error) -> Self {
        Self {
            numerical: e.is_numerical(),
            message: e.to_string(),
        }
    }
}
