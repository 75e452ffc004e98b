//! Versioned JSON report documents with lossless float output.
//!
//! Every float is written with 17 significant digits so that re-reading a
//! report reproduces the exact doubles. Non-finite values become `null`.

use std::io::{self, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::Formatter;
use thiserror::Error;

/// Version of the report layout; bumped on incompatible changes.
pub const SCHEMA_VERSION: u32 = 1;
pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write report to {path}: {source}")]
    Write { path: String, source: io::Error },
    #[error("cannot read report {path}: {source}")]
    Read { path: String, source: io::Error },
    #[error("malformed report: {0}")]
    Format(#[from] serde_json::Error),
    #[error("report schema version {found} is not supported (expected {expected})")]
    Schema { found: u32, expected: u32 },
}

/// Common envelope around every command's payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<C, R> {
    pub schema_version: u32,
    pub toolkit_version: String,
    pub command: String,
    /// Seconds since the Unix epoch; the only field allowed to differ
    /// between two runs of the same configuration.
    pub timestamp: u64,
    pub config: C,
    pub result: R,
}

impl<C, R> Report<C, R> {
    pub fn new(command: &str, config: C, result: R) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Report {
            schema_version: SCHEMA_VERSION,
            toolkit_version: TOOLKIT_VERSION.to_string(),
            command: command.to_string(),
            timestamp,
            config,
            result,
        }
    }
}

/// Pretty JSON with floats as `{:.16e}` and non-finite floats as `null`.
struct LosslessFormatter {
    inner: serde_json::ser::PrettyFormatter<'static>,
}

impl Formatter for LosslessFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        if value.is_finite() {
            write!(writer, "{value:.16e}")
        } else {
            writer.write_all(b"null")
        }
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, f64::from(value))
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes `data` in the lossless format.
pub fn to_json_string<T: Serialize>(data: &T) -> Result<String, ReportError> {
    let mut buf = Vec::new();
    let formatter = LosslessFormatter {
        inner: serde_json::ser::PrettyFormatter::new(),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, formatter);
    data.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}

pub fn write_report<T: Serialize>(data: &T, path: &Path) -> Result<(), ReportError> {
    let text = to_json_string(data)?;
    std::fs::write(path, text).map_err(|source| ReportError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Parses a report and checks its schema version.
pub fn parse_report<T: DeserializeOwned>(text: &str) -> Result<T, ReportError> {
    #[derive(Deserialize)]
    struct Header {
        schema_version: u32,
    }
    let header: Header = serde_json::from_str(text)?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(ReportError::Schema {
            found: header.schema_version,
            expected: SCHEMA_VERSION,
        });
    }
    Ok(serde_json::from_str(text)?)
}

pub fn read_report<T: DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Read {
        path: path.display().to_string(),
        source,
    })?;
    parse_report(&text)
}
