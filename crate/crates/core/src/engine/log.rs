//! Append-only event log with a running content hash.
//!
//! Each committed entry feeds the hash with a canonical encoding:
//! `t` as IEEE-754 bits (u64 BE), `seq` (u64 BE), the kind and the compact
//! JSON payload each prefixed by their byte length (u64 BE). Payload
//! objects serialize with sorted keys and shortest round-trip floats, so the
//! hash depends only on the committed sequence.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub seq: u64,
    pub kind: String,
    pub payload: Value,
}

impl LogEntry {
    pub fn field(&self, key: &str) -> Option<&Value> {
        self.payload.get(key)
    }

    pub fn f64(&self, key: &str) -> Option<f64> {
        self.field(key).and_then(Value::as_f64)
    }

    pub fn u64(&self, key: &str) -> Option<u64> {
        self.field(key).and_then(Value::as_u64)
    }
}

#[derive(Clone)]
pub struct EventLog {
    entries: Vec<LogEntry>,
    retain: bool,
    committed: usize,
    hasher: Sha256,
}

impl std::fmt::Debug for EventLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventLog").field("committed", &self.committed).field("hash", &self.hash_hex()).finish()
    }
}

impl Default for EventLog {
    fn default() -> Self {
        Self::new()
    }
}

impl EventLog {
    pub fn new() -> Self {
        Self { entries: Vec::new(), retain: true, committed: 0, hasher: Sha256::new() }
    }

    /// A log that keeps only the hash and count, for large sweeps.
    pub fn hash_only() -> Self {
        Self { retain: false, ..Self::new() }
    }

    pub fn retains_entries(&self) -> bool {
        self.retain
    }

    pub fn append(&mut self, entry: LogEntry) {
        let payload = serde_json::to_vec(&entry.payload).expect("JSON values always serialize");
        self.hasher.update(entry.t.to_bits().to_be_bytes());
        self.hasher.update(entry.seq.to_be_bytes());
        self.hasher.update((entry.kind.len() as u64).to_be_bytes());
        self.hasher.update(entry.kind.as_bytes());
        self.hasher.update((payload.len() as u64).to_be_bytes());
        self.hasher.update(&payload);
        self.committed += 1;
        if self.retain {
            self.entries.push(entry);
        }
    }

    pub fn len(&self) -> usize {
        self.committed
    }

    pub fn is_empty(&self) -> bool {
        self.committed == 0
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a LogEntry> + 'a {
        self.entries.iter().filter(move |e| e.kind == kind)
    }

    pub fn hash(&self) -> [u8; 32] {
        self.hasher.clone().finalize().into()
    }

    pub fn hash_hex(&self) -> String {
        hex::encode(self.hash())
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    /// Rebuilds a log (and its hash) from JSONL.
    pub fn read_jsonl<R: BufRead>(r: R) -> io::Result<Self> {
        let mut log = Self::new();
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            log.append(serde_json::from_str(&line)?);
        }
        Ok(log)
    }
}
