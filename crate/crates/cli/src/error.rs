use std::fmt;
use std::path::Path;

/// Exit statuses, sysexits-style.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CAP: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_NOINPUT: i32 = 66;
pub const EXIT_CANTCREAT: i32 = 73;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Input { path: String, message: String },
    Output { path: String, message: String },
}

impl CliError {
    pub fn input(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Input {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn output(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Output {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }

    pub fn data(e: impl fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Input { .. } => EXIT_NOINPUT,
            CliError::Output { .. } => EXIT_CANTCREAT,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Data(_) => "data",
            CliError::Input { .. } => "input",
            CliError::Output { .. } => "output",
        }
    }

    /// Single line: `mdpgeo: error kind=<kind> code=<code> [path=<p>] message=<quoted>`.
    pub fn line(&self) -> String {
        let (path, message) = match self {
            CliError::Usage(m) | CliError::Data(m) => (None, m.as_str()),
            CliError::Input { path, message } | CliError::Output { path, message } => (Some(path), message.as_str()),
        };
        let mut out = format!("mdpgeo: error kind={} code={}", self.kind(), self.exit_code());
        if let Some(p) = path {
            out.push_str(&format!(" path={p:?}"));
        }
        out.push_str(&format!(" message={message:?}"));
        out
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line())
    }
}

impl std::error::Error for CliError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_line_is_single_line() {
        let e = CliError::Data("bad\nrow".into());
        assert_eq!(e.line(), "mdpgeo: error kind=data code=65 message=\"bad\\nrow\"");
        let e = CliError::input(Path::new("x.json"), "missing");
        assert_eq!(e.exit_code(), 66);
        assert!(e.line().contains("path=\"x.json\""));
    }
}
