use fudge_core::Error as CoreError;
use thiserror::Error;

/// A failed run. Each kind maps to one process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    /// Classify a library error, prefixing `context`.
    pub fn from_core(context: &str, err: CoreError) -> Self {
        let msg = format!("{context}: {}", describe(&err));
        match root(&err) {
            CoreError::InvalidArgument(_) | CoreError::InvalidBasis(_) | CoreError::BasisMismatch => {
                CliError::Config(msg)
            }
            CoreError::Conditioning { .. } | CoreError::DegenerateSpectrum(_) | CoreError::Factorization(_) => {
                CliError::Numerical(msg)
            }
            _ => CliError::Data(msg),
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }
}

fn root(err: &CoreError) -> &CoreError {
    match err {
        CoreError::AtCurve { source, .. } => root(source),
        e => e,
    }
}

/// Error text with curve locations in the 1-based ids used by the CSV files.
fn describe(err: &CoreError) -> String {
    match err {
        CoreError::AtCurve { sample, node, source } => {
            format!("sample_id {}, node_id {}: {}", sample + 1, node + 1, describe(source))
        }
        e => e.to_string(),
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach context to library results.
pub trait Context<T> {
    fn context(self, what: &str) -> CliResult<T>;
}

impl<T> Context<T> for fudge_core::Result<T> {
    fn context(self, what: &str) -> CliResult<T> {
        self.map_err(|e| CliError::from_core(what, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_errors_use_one_based_ids() {
        let inner = CoreError::Underdetermined { t: 3, l: 15 };
        let e = CoreError::AtCurve {
            sample: 0,
            node: 4,
            source: Box::new(inner),
        };
        let cli = CliError::from_core("fitting x", e);
        assert_eq!(cli.exit_code(), 3);
        assert!(cli.to_string().contains("sample_id 1, node_id 5"), "{cli}");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from_core("", CoreError::InvalidArgument("x".into())).exit_code(), 2);
        assert_eq!(CliError::from_core("", CoreError::Factorization("x".into())).exit_code(), 4);
        assert_eq!(CliError::from_core("", CoreError::ShapeMismatch("x".into())).exit_code(), 3);
    }
}
