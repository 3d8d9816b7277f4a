//! Step-indexed metrics log: plain-text `key=value` pairs, one line per
//! event, append-only. The CLI report command parses these back.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub struct MetricsLog {
    file: Option<std::io::BufWriter<std::fs::File>>,
    pub lines: Vec<String>,
}

impl MetricsLog {
    pub fn in_memory() -> Self {
        Self { file: None, lines: Vec::new() }
    }

    pub fn to_file(path: &Path) -> Result<Self> {
        let file = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { file: Some(std::io::BufWriter::new(file)), lines: Vec::new() })
    }

    pub fn log(&mut self, entries: &[(&str, String)]) {
        let line = entries
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(" ");
        if let Some(f) = &mut self.file {
            let _ = writeln!(f, "{line}");
            let _ = f.flush();
        }
        self.lines.push(line);
    }
}

pub fn parse_line(line: &str) -> BTreeMap<String, String> {
    line.split_whitespace()
        .filter_map(|tok| tok.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_line() {
        let mut log = MetricsLog::in_memory();
        log.log(&[("stage", "vocoder".into()), ("step", "3".into()), ("mel", "0.125".into())]);
        let parsed = parse_line(&log.lines[0]);
        assert_eq!(parsed["stage"], "vocoder");
        assert_eq!(parsed["step"], "3");
        assert_eq!(parsed["mel"], "0.125");
    }
}
