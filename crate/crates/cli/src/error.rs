use std::fmt;

use opd_core::OpdError;

/// Exit code 2 for configuration problems, 3 for numerical or estimation failures.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    /// Stdout was closed by the reader, as in `opd ... | head`.
    Closed,
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Closed => 0,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerical(m) => f.write_str(m),
            CliError::Closed => f.write_str("output closed"),
        }
    }
}

impl From<OpdError> for CliError {
    fn from(e: OpdError) -> Self {
        let msg = match &e {
            OpdError::Estimation { trace, .. } if !trace.is_empty() => {
                let mut m = e.to_string();
                for it in trace {
                    m.push_str(&format!(
                        "\n  iteration {}: max |Δβ| = {:.3e}, WLS objective {:.4e}",
                        it.iteration, it.max_beta_change, it.wls_objective
                    ));
                }
                m
            }
            _ => e.to_string(),
        };
        if e.is_config() {
            CliError::Config(msg)
        } else {
            CliError::Numerical(msg)
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            return CliError::Closed;
        }
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        match e.kind() {
            csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe => CliError::Closed,
            _ => CliError::Config(e.to_string()),
        }
    }
}
