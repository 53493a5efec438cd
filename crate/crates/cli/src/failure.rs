use serde_json::json;

/// A failed command, reported on stderr as one JSON object.
#[derive(Debug)]
pub enum Failure {
    Invalid {
        field: String,
        message: String,
    },
    InnerSolver {
        step: usize,
        iterations: usize,
        residual: f64,
    },
    Runtime(String),
}

impl Failure {
    pub fn invalid(field: impl Into<String>, message: impl Into<String>) -> Self {
        Failure::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Invalid { .. } => 2,
            Failure::InnerSolver { .. } => 3,
            Failure::Runtime(_) => 1,
        }
    }

    #[cfg(test)]
    pub fn field(&self) -> Option<&str> {
        match self {
            Failure::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }

    pub fn message(&self) -> String {
        match self {
            Failure::Invalid { message, .. } | Failure::Runtime(message) => message.clone(),
            Failure::InnerSolver {
                step,
                iterations,
                residual,
            } => format!("inner solver stopped at step {step} after {iterations} iterations (residual {residual:e})"),
        }
    }

    pub fn record(&self) -> serde_json::Value {
        match self {
            Failure::Invalid { field, message } => json!({
                "error": "invalid_config",
                "field": field,
                "message": message,
            }),
            Failure::InnerSolver {
                step,
                iterations,
                residual,
            } => json!({
                "error": "inner_solver_failure",
                "step": step,
                "iterations": iterations,
                "residual": residual,
                "message": self.message(),
            }),
            Failure::Runtime(message) => json!({
                "error": "runtime",
                "message": message,
            }),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<wgflow::Error> for Failure {
    fn from(e: wgflow::Error) -> Self {
        match e {
            wgflow::Error::NoConvergence {
                step,
                iters,
                residual,
                ..
            } => Failure::InnerSolver {
                step: step.unwrap_or(0),
                iterations: iters,
                residual,
            },
            other => Failure::Runtime(other.to_string()),
        }
    }
}
