use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::find_key_line;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}", config_message(key.as_deref(), *line, msg))]
    Config {
        key: Option<String>,
        line: Option<usize>,
        msg: String,
    },

    #[error(transparent)]
    Core(aipoc_core::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn config_message(key: Option<&str>, line: Option<usize>, msg: &str) -> String {
    let mut out = String::from("config error");
    if let Some(l) = line {
        out.push_str(&format!(" at line {l}"));
    }
    if let Some(k) = key {
        out.push_str(&format!(" in `{k}`"));
    }
    out.push_str(": ");
    out.push_str(msg);
    out
}

impl From<aipoc_core::Error> for CliError {
    fn from(e: aipoc_core::Error) -> Self {
        match e {
            aipoc_core::Error::Invalid { key, msg } => CliError::Config {
                key: Some(key),
                line: None,
                msg,
            },
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn invalid(key: &str, msg: impl Into<String>) -> Self {
        CliError::Config {
            key: Some(key.to_string()),
            line: None,
            msg: msg.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attach the source line of the offending key, when it appears in `text`.
    pub fn located(self, text: &str) -> Self {
        match self {
            CliError::Config {
                key: Some(k),
                line: None,
                msg,
            } => {
                let line = find_key_line(text, &k);
                CliError::Config {
                    key: Some(k),
                    line,
                    msg,
                }
            }
            other => other,
        }
    }

    /// 1 validation, 2 numerical, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 1,
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(_) => 2,
            CliError::Io { .. } => 3,
        }
    }
}
