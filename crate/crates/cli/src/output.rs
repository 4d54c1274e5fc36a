use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ncprob::io::from_json_str;
use ncprob::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const EXIT_INVALID: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Numerical(String),
}

impl Failure {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Failure::Invalid(msg.into())
    }

    pub fn report(self) -> ExitCode {
        match self {
            Failure::Invalid(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(EXIT_INVALID)
            }
            Failure::Numerical(message) => {
                eprintln!("error: {message}");
                ExitCode::from(EXIT_NUMERICAL)
            }
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

/// Reads and parses `path`; parse errors become `path:line:column: message`.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    from_json_str(&text).map_err(|e| match e {
        Error::Json(j) => {
            let mut msg = j.to_string();
            if let Some(i) = msg.rfind(" at line ") {
                msg.truncate(i);
            }
            Failure::Invalid(format!("{}:{}:{}: {msg}", path.display(), j.line(), j.column()))
        }
        other => Failure::Invalid(format!("{}: {other}", path.display())),
    })
}

#[derive(Serialize)]
struct Header<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    header: Header<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a T>,
}

pub struct Context {
    pub seed: u64,
    out: Option<PathBuf>,
}

impl Context {
    pub fn new(seed: u64, out: Option<PathBuf>) -> Self {
        Context { seed, out }
    }

    fn header<'a>(&self, command: &'a str) -> Header<'a> {
        Header {
            tool: "ncprob",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: self.seed,
        }
    }

    fn write(&self, text: &str) -> Result<(), Failure> {
        match &self.out {
            Some(p) => std::fs::write(p, text).map_err(|e| Failure::Invalid(format!("{}: {e}", p.display()))),
            None => {
                let mut out = std::io::stdout().lock();
                out.write_all(text.as_bytes())
                    .and_then(|_| out.flush())
                    .map_err(|e| Failure::Invalid(format!("stdout: {e}")))
            }
        }
    }

    fn document<T: Serialize>(&self, doc: &Document<'_, T>) -> Result<(), Failure> {
        let mut text = serde_json::to_string(doc).map_err(|e| Failure::Invalid(e.to_string()))?;
        text.push('\n');
        self.write(&text)
    }

    /// `{"header": .., "result": ..}`.
    pub fn json(&self, command: &str, result: &impl Serialize) -> Result<(), Failure> {
        self.document(&Document {
            header: self.header(command),
            result: Some(result),
            error: None,
        })
    }

    /// CSV body preceded by a `#` header line.
    pub fn csv(&self, command: &str, body: &str) -> Result<(), Failure> {
        let h = self.header(command);
        let text = format!("# {} {} command={} seed={}\n{body}", h.tool, h.version, h.command, h.seed);
        self.write(&text)
    }

    /// Writes `{"header": .., "error": report}` and returns the numerical failure.
    pub fn numerical(&self, command: &str, message: String, report: &impl Serialize) -> Failure {
        let doc = Document {
            header: self.header(command),
            result: None,
            error: Some(report),
        };
        match self.document(&doc) {
            Ok(()) => Failure::Numerical(message),
            Err(f) => f,
        }
    }
}

/// Full double precision, 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}
