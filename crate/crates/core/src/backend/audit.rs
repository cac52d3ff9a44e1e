use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use super::CallKind;

/// Append-only JSON-lines log with one entry per backend call.
pub struct AuditLog {
    out: Mutex<Box<dyn Write + Send>>,
}

#[derive(Serialize)]
struct Entry<'a> {
    timestamp: &'a str,
    kind: CallKind,
    attempt: u32,
    parse_ok: bool,
}

impl AuditLog {
    pub fn create(path: impl AsRef<Path>) -> io::Result<Self> {
        Ok(Self::to_writer(BufWriter::new(File::create(path)?)))
    }

    pub fn to_writer(w: impl Write + Send + 'static) -> Self {
        Self {
            out: Mutex::new(Box::new(w)),
        }
    }

    pub fn record(&self, kind: CallKind, attempt: u32, parse_ok: bool) {
        let ts = Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true);
        let line = serde_json::to_string(&Entry {
            timestamp: &ts,
            kind,
            attempt,
            parse_ok,
        })
        .expect("audit entry serializes");
        let mut out = self.out.lock().unwrap();
        if let Err(e) = writeln!(out, "{line}") {
            tracing::warn!("audit log write failed: {e}");
        }
    }

    pub fn flush(&self) -> io::Result<()> {
        self.out.lock().unwrap().flush()
    }
}

impl Drop for AuditLog {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
