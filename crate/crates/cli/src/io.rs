//! File formats.
//!
//! * Events: one record per line, `trajectory_id<TAB>time<TAB>channel`,
//!   time printed with exactly nine decimals, channel `R` or `L`, sorted by
//!   `(trajectory_id, time)`.
//! * CSV: `#`-prefixed provenance lines, one header row, then rows with
//!   every number printed as `{:.12e}` so files hash identically across
//!   platforms.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use sha2::{Digest, Sha256};
use wgqed::{Channel, DetectionEvent};

use crate::error::{CliError, Result};

pub const EVENTS_FILE: &str = "events.tsv";

pub fn num(x: f64) -> String {
    format!("{x:.12e}")
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(CliError::io(format!("reading {}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Buffered writer that hashes everything written through it.
pub struct HashingWriter {
    inner: BufWriter<File>,
    hasher: Sha256,
}

impl HashingWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(CliError::io(format!("creating {}", path.display())))?;
        Ok(Self { inner: BufWriter::new(file), hasher: Sha256::new() })
    }

    pub fn finish(mut self) -> Result<String> {
        self.inner.flush().map_err(CliError::io("flushing output"))?;
        Ok(hex::encode(self.hasher.finalize()))
    }
}

impl Write for HashingWriter {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

pub fn write_event(w: &mut impl Write, e: &DetectionEvent) -> std::io::Result<()> {
    writeln!(w, "{}\t{:.9}\t{}", e.trajectory_id, e.time, e.channel)
}

pub fn read_events(path: &Path) -> Result<Vec<DetectionEvent>> {
    let file = File::open(path).map_err(CliError::io(format!("opening {}", path.display())))?;
    let mut out: Vec<DetectionEvent> = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(CliError::io(format!("reading {}", path.display())))?;
        let bad = || CliError::Stale(format!("{}:{}: malformed event record '{line}'", path.display(), n + 1));
        let mut fields = line.split('\t');
        let (Some(id), Some(time), Some(ch), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(bad());
        };
        let e = DetectionEvent {
            trajectory_id: id.parse().map_err(|_| bad())?,
            time: time.parse().map_err(|_| bad())?,
            channel: ch.parse::<Channel>().map_err(|_| bad())?,
        };
        if let Some(prev) = out.last() {
            let ordered = prev.trajectory_id < e.trajectory_id || (prev.trajectory_id == e.trajectory_id && prev.time < e.time);
            if !ordered {
                return Err(CliError::Stale(format!("{}:{}: events out of order", path.display(), n + 1)));
            }
        }
        out.push(e);
    }
    Ok(out)
}

/// A CSV table with provenance comments.
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(comments: Vec<String>, columns: &[&str]) -> Self {
        Self { comments, columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            s.push_str("# ");
            s.push_str(c);
            s.push('\n');
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// Writes the table and returns its SHA-256.
    pub fn write(&self, path: &Path) -> Result<String> {
        let text = self.render();
        std::fs::write(path, &text).map_err(CliError::io(format!("writing {}", path.display())))?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut comments = Vec::new();
        let mut lines = text.lines();
        let header = loop {
            match lines.next() {
                Some(l) if l.starts_with('#') => comments.push(l.trim_start_matches('#').trim().to_string()),
                Some(l) => break l,
                None => return Err(CliError::Stale("CSV has no header row".into())),
            }
        };
        let columns: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let rows = lines.filter(|l| !l.trim().is_empty()).map(|l| l.split(',').map(|s| s.trim().to_string()).collect()).collect();
        Ok(Self { comments, columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Value of a `key: value` provenance comment.
    pub fn comment_value(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| c.strip_prefix(key)?.strip_prefix(':').map(str::trim))
    }

    pub fn numeric_column(&self, idx: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r.get(idx).and_then(|v| v.parse().ok()).ok_or_else(|| CliError::Stale(format!("bad number in column {}", self.columns[idx]))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn event_lines_have_fixed_format() {
        let mut buf = Vec::new();
        write_event(&mut buf, &DetectionEvent { trajectory_id: 3, time: 12.34, channel: Channel::Left }).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "3\t12.340000000\tL\n");
    }

    #[test]
    fn events_round_trip_and_order_is_checked() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.tsv");
        std::fs::write(&path, "0\t0.010000000\tR\n0\t0.500000000\tL\n1\t0.020000000\tR\n").unwrap();
        let ev = read_events(&path).unwrap();
        assert_eq!(ev.len(), 3);
        assert_eq!(ev[1].channel, Channel::Left);
        std::fs::write(&path, "1\t0.010000000\tR\n0\t0.500000000\tL\n").unwrap();
        assert!(read_events(&path).is_err());
        std::fs::write(&path, "0\t0.010000000\tX\n").unwrap();
        assert!(read_events(&path).is_err());
    }

    #[test]
    fn tables_round_trip() {
        let mut t = Table::new(vec!["bin_width: 0.5".into()], &["tau", "value"]);
        t.push(vec![num(0.25), num(1.5)]);
        let parsed = Table::parse(&t.render()).unwrap();
        assert_eq!(parsed.comment_value("bin_width"), Some("0.5"));
        assert_eq!(parsed.numeric_column(1).unwrap(), vec![1.5]);
        assert_eq!(num(1.0), "1.000000000000e0");
    }
}
