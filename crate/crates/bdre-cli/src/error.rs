use bdre::BdreError;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Model(BdreError),
    Io(String),
}

impl From<BdreError> for CliError {
    fn from(e: BdreError) -> Self {
        CliError::Model(e)
    }
}

impl CliError {
    /// 2 configuration or domain error, 3 numerical stability, 4 accuracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Model(BdreError::Domain(_)) => 2,
            CliError::Model(BdreError::Stability(_)) => 3,
            CliError::Model(BdreError::Accuracy(_)) => 4,
        }
    }

    /// One JSON line for stderr.
    pub fn line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Config(m) => ("config", m.clone()),
            CliError::Io(m) => ("io", m.clone()),
            CliError::Model(BdreError::Domain(m)) => ("domain", m.clone()),
            CliError::Model(BdreError::Stability(m)) => ("stability", m.clone()),
            CliError::Model(BdreError::Accuracy(m)) => ("accuracy", m.clone()),
        };
        json!({ "error": kind, "message": msg }).to_string()
    }
}

pub fn config<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}
