use camreward::ErrorClass;
use serde_json::json;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(camreward::Error),
    Serialize(String),
    ReplayMismatch(Vec<String>),
}

pub type CliResult<T> = Result<T, CliError>;

impl From<camreward::Error> for CliError {
    fn from(e: camreward::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Serialize(e.to_string())
    }
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "cli.usage",
            CliError::Core(e) => e.code(),
            CliError::Serialize(_) => "io.serialize",
            CliError::ReplayMismatch(_) => "cli.replay_mismatch",
        }
    }

    fn class(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) if e.class() == ErrorClass::Numerical => "numerical",
            _ => "data",
        }
    }

    /// 2 usage, 3 data, 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            "usage" => 2,
            "numerical" => 4,
            _ => 3,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::Serialize(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
            CliError::ReplayMismatch(files) => {
                format!("outputs differ from the manifest: {}", files.join(", "))
            }
        }
    }

    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "code": self.code(),
                "class": self.class(),
                "message": self.message(),
            }
        })
        .to_string()
    }
}
