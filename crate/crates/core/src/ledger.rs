//! Append-only JSON-lines run ledger.
//!
//! The first line is a [`LedgerHeader`]; every following line is one
//! [`LedgerRecord`]. A torn final line (no trailing newline, not valid JSON)
//! is tolerated and dropped on resume; any other bad line is an error that
//! names its line number.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm_client::SamplingParams;
use crate::parsing::MatchMethod;
use crate::prompting::{ConditioningSpec, Regime};
use crate::runner::RunPlan;
use crate::types::{Instrument, Target};

pub const LEDGER_SCHEMA: &str = "persona-ledger";
pub const LEDGER_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("cannot access ledger {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("ledger line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("ledger has no header line")]
    MissingHeader,
    #[error("unsupported ledger schema {schema} v{version}")]
    Schema { schema: String, version: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerHeader {
    pub schema: String,
    pub version: u32,
    pub run_id: String,
    pub plan: RunPlan,
    pub sampling: SamplingParams,
    pub max_retries: u32,
    pub backend: String,
    /// System and interviewer messages keyed by their SHA-256.
    pub messages: BTreeMap<String, String>,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub run_id: String,
    pub model: String,
    pub instrument: Instrument,
    pub regime: Regime,
    pub target: Option<Target>,
    pub role: Option<String>,
    pub temperature: f64,
    pub repetition: u32,
    pub question_id: u32,
    /// 0-based position in the session's shuffled order.
    pub position: u32,
    pub system_hash: String,
    pub interviewer_hash: String,
    pub session_seed: u64,
    pub request_seed: u64,
    pub top_p: f64,
    pub top_k: Option<u32>,
    /// Every raw reply, first ask then re-asks.
    pub attempts: Vec<String>,
    pub raw_response: String,
    pub parsed_label: Option<String>,
    pub parse_error: Option<String>,
    pub match_method: Option<MatchMethod>,
    pub timestamp: String,
}

/// Identifies one session within a run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionKey {
    pub model: String,
    /// Temperature as IEEE bits so the key is hashable and exact.
    pub temperature_bits: u64,
    pub conditioning: ConditioningSpec,
    pub repetition: u32,
}

impl SessionKey {
    pub fn new(model: &str, temperature: f64, conditioning: ConditioningSpec, repetition: u32) -> Self {
        Self { model: model.to_string(), temperature_bits: temperature.to_bits(), conditioning, repetition }
    }

    pub fn temperature(&self) -> f64 {
        f64::from_bits(self.temperature_bits)
    }
}

impl LedgerRecord {
    pub fn conditioning(&self) -> ConditioningSpec {
        ConditioningSpec { regime: self.regime, instrument: self.instrument, target: self.target, role: self.role.clone() }
    }

    pub fn session_key(&self) -> SessionKey {
        SessionKey::new(&self.model, self.temperature, self.conditioning(), self.repetition)
    }

    pub fn is_valid(&self) -> bool {
        self.parsed_label.is_some()
    }

    /// Copy with the timestamp blanked, for replay comparisons.
    pub fn without_timestamp(&self) -> Self {
        Self { timestamp: String::new(), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ledger {
    pub header: LedgerHeader,
    pub records: Vec<LedgerRecord>,
    /// Byte length of the well-formed prefix (header plus complete records).
    pub valid_len: u64,
    pub torn_tail: bool,
}

/// Records of one session in ledger order.
#[derive(Debug, Clone)]
pub struct SessionRecords<'a> {
    pub key: SessionKey,
    pub records: Vec<&'a LedgerRecord>,
}

impl Ledger {
    pub fn read(path: &Path) -> Result<Self, LedgerError> {
        let io = |source| LedgerError::Io { path: path.display().to_string(), source };
        let mut buf = String::new();
        File::open(path).map_err(io)?.read_to_string(&mut buf).map_err(io)?;
        Self::parse(&buf)
    }

    pub fn parse(text: &str) -> Result<Self, LedgerError> {
        let mut header: Option<LedgerHeader> = None;
        let mut records = Vec::new();
        let mut valid_len = 0u64;
        let mut torn_tail = false;
        let mut offset = 0usize;
        let mut lineno = 0;
        while offset < text.len() {
            lineno += 1;
            let (line, next, terminated) = match text[offset..].find('\n') {
                Some(i) => (&text[offset..offset + i], offset + i + 1, true),
                None => (&text[offset..], text.len(), false),
            };
            offset = next;
            if line.trim().is_empty() {
                if terminated {
                    valid_len = offset as u64;
                }
                continue;
            }
            let parsed = if header.is_none() {
                serde_json::from_str::<LedgerHeader>(line).map(|h| header = Some(h))
            } else {
                serde_json::from_str::<LedgerRecord>(line).map(|r| records.push(r))
            };
            match parsed {
                Ok(()) if terminated => valid_len = offset as u64,
                Ok(()) => {
                    // complete JSON but missing newline; keep it and let the writer add one
                    valid_len = offset as u64;
                }
                Err(_) if !terminated => {
                    log::warn!("ignoring torn final ledger line {lineno}");
                    torn_tail = true;
                }
                Err(e) if header.is_none() && lineno == 1 => {
                    return Err(LedgerError::Corrupt { line: lineno, message: format!("bad header: {e}") })
                }
                Err(e) => return Err(LedgerError::Corrupt { line: lineno, message: e.to_string() }),
            }
        }
        let header = header.ok_or(LedgerError::MissingHeader)?;
        if header.schema != LEDGER_SCHEMA || header.version != LEDGER_VERSION {
            return Err(LedgerError::Schema { schema: header.schema, version: header.version });
        }
        Ok(Self { header, records, valid_len, torn_tail })
    }

    /// Records grouped by session, sessions in order of first appearance.
    pub fn sessions(&self) -> Vec<SessionRecords<'_>> {
        let mut index: BTreeMap<SessionKey, usize> = BTreeMap::new();
        let mut out: Vec<SessionRecords<'_>> = Vec::new();
        for r in &self.records {
            let key = r.session_key();
            match index.get(&key) {
                Some(&i) => out[i].records.push(r),
                None => {
                    index.insert(key.clone(), out.len());
                    out.push(SessionRecords { key, records: vec![r] });
                }
            }
        }
        out
    }
}

/// Buffered line writer; `flush` is called once per session.
pub struct LedgerWriter {
    out: BufWriter<File>,
    path: String,
    needs_newline: bool,
}

impl LedgerWriter {
    pub fn create(path: &Path, header: &LedgerHeader) -> Result<Self, LedgerError> {
        let io = |source| LedgerError::Io { path: path.display().to_string(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = File::create(path).map_err(io)?;
        let mut w = Self { out: BufWriter::new(file), path: path.display().to_string(), needs_newline: false };
        w.write_line(header)?;
        w.flush()?;
        Ok(w)
    }

    /// Opens an existing ledger for appending, cutting off a torn tail.
    pub fn append(path: &Path, ledger: &Ledger) -> Result<Self, LedgerError> {
        let io = |source| LedgerError::Io { path: path.display().to_string(), source };
        let file = std::fs::OpenOptions::new().read(true).write(true).open(path).map_err(io)?;
        file.set_len(ledger.valid_len).map_err(io)?;
        let mut file = file;
        let needs_newline = if ledger.valid_len == 0 {
            false
        } else {
            file.seek(SeekFrom::Start(ledger.valid_len - 1)).map_err(io)?;
            let mut last = [0u8; 1];
            file.read_exact(&mut last).map_err(io)?;
            last[0] != b'\n'
        };
        file.seek(SeekFrom::End(0)).map_err(io)?;
        Ok(Self { out: BufWriter::new(file), path: path.display().to_string(), needs_newline })
    }

    fn write_line<T: Serialize>(&mut self, value: &T) -> Result<(), LedgerError> {
        let io = |source| LedgerError::Io { path: self.path.clone(), source };
        if self.needs_newline {
            self.out.write_all(b"\n").map_err(io)?;
            self.needs_newline = false;
        }
        let line = serde_json::to_string(value).expect("ledger types serialize");
        self.out.write_all(line.as_bytes()).map_err(io)?;
        self.out.write_all(b"\n").map_err(io)
    }

    pub fn write_record(&mut self, r: &LedgerRecord) -> Result<(), LedgerError> {
        self.write_line(r)
    }

    pub fn flush(&mut self) -> Result<(), LedgerError> {
        let path = self.path.clone();
        self.out.flush().map_err(|source| LedgerError::Io { path, source })
    }
}
