//! Turns a ledger into per-session scores.
//!
//! Only complete sessions in which every question parsed are scored. The
//! rest are listed in [`DataQuality`] with the reason.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruments::QuestionBank;
use crate::ledger::{Ledger, SessionKey};
use crate::prompting::ConditioningSpec;
use crate::runner::RunPlan;
use crate::scoring::{score_bfi, score_mbti, BfiScores, MbtiOutcome, ScoreError};
use crate::types::Instrument;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no valid sessions{}", if .0.is_empty() { String::new() } else { format!(" for {}", .0) })]
    NoValidSessions(String),
    #[error("a baseline is required for percentage increases")]
    MissingBaseline,
    #[error("scoring failed: {0}")]
    Score(#[from] ScoreError),
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scores file {path}: {message}")]
    Format { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "instrument", rename_all = "lowercase")]
pub enum Outcome {
    Mbti(MbtiOutcome),
    Bfi(BfiScores),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSession {
    pub model: String,
    pub temperature: f64,
    pub conditioning: ConditioningSpec,
    pub repetition: u32,
    pub outcome: Outcome,
}

impl ScoredSession {
    pub fn mbti(&self) -> Option<&MbtiOutcome> {
        match &self.outcome {
            Outcome::Mbti(o) => Some(o),
            Outcome::Bfi(_) => None,
        }
    }

    pub fn bfi(&self) -> Option<&BfiScores> {
        match &self.outcome {
            Outcome::Bfi(s) => Some(s),
            Outcome::Mbti(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum InvalidReason {
    /// Some answers could not be parsed even after re-asking.
    Unparseable { question_ids: Vec<u32> },
    /// The ledger lacks some questions (interrupted run).
    Incomplete { missing: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvalidSession {
    pub model: String,
    pub temperature: f64,
    pub conditioning: ConditioningSpec,
    pub repetition: u32,
    #[serde(flatten)]
    pub reason: InvalidReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DataQuality {
    pub sessions_seen: usize,
    pub sessions_valid: usize,
    pub records: usize,
    pub unparseable_records: usize,
    /// Count of parsed answers per match method.
    pub match_methods: BTreeMap<String, usize>,
    pub invalid: Vec<InvalidSession>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredLedger {
    pub run_id: String,
    pub plan: RunPlan,
    pub sessions: Vec<ScoredSession>,
    pub data_quality: DataQuality,
}

impl ScoredLedger {
    pub fn save(&self, path: &Path) -> Result<(), AnalysisError> {
        let json = serde_json::to_string_pretty(self).expect("scores serialize");
        std::fs::write(path, json + "\n").map_err(|source| AnalysisError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let src = std::fs::read_to_string(path)
            .map_err(|source| AnalysisError::Io { path: path.display().to_string(), source })?;
        serde_json::from_str(&src)
            .map_err(|e| AnalysisError::Format { path: path.display().to_string(), message: e.to_string() })
    }

    pub fn has_instrument(&self, instrument: Instrument) -> bool {
        self.sessions.iter().any(|s| s.conditioning.instrument == instrument)
    }
}

fn session_fields(key: &SessionKey) -> (String, f64, ConditioningSpec, u32) {
    (key.model.clone(), key.temperature(), key.conditioning.clone(), key.repetition)
}

/// Scores every complete, fully parsed session of `ledger`.
pub fn score_ledger(ledger: &Ledger, mbti: &QuestionBank, bfi: &QuestionBank) -> Result<ScoredLedger, AnalysisError> {
    let mut dq = DataQuality { records: ledger.records.len(), ..Default::default() };
    let mut sessions = Vec::new();
    for group in ledger.sessions() {
        dq.sessions_seen += 1;
        let (model, temperature, conditioning, repetition) = session_fields(&group.key);
        let bank = match conditioning.instrument {
            Instrument::Mbti => mbti,
            Instrument::Bfi => bfi,
        };
        let mut labels: BTreeMap<u32, String> = BTreeMap::new();
        let mut bad = Vec::new();
        for r in &group.records {
            match (&r.parsed_label, r.match_method) {
                (Some(l), m) => {
                    if let Some(m) = m {
                        *dq.match_methods.entry(m.to_string()).or_default() += 1;
                    }
                    labels.insert(r.question_id, l.clone());
                }
                (None, _) => {
                    dq.unparseable_records += 1;
                    bad.push(r.question_id);
                }
            }
        }
        let seen: BTreeSet<u32> = group.records.iter().map(|r| r.question_id).collect();
        let missing: Vec<u32> = bank.questions().iter().map(|q| q.id).filter(|id| !seen.contains(id)).collect();
        let reason = if !bad.is_empty() {
            bad.sort_unstable();
            Some(InvalidReason::Unparseable { question_ids: bad })
        } else if !missing.is_empty() {
            Some(InvalidReason::Incomplete { missing })
        } else {
            None
        };
        if let Some(reason) = reason {
            dq.invalid.push(InvalidSession { model, temperature, conditioning, repetition, reason });
            continue;
        }
        let outcome = match conditioning.instrument {
            Instrument::Mbti => {
                let key = bank.mbti_key().expect("MBTI bank carries an MBTI key");
                Outcome::Mbti(score_mbti(&labels, key, bank.scale())?)
            }
            Instrument::Bfi => {
                let key = bank.bfi_key().expect("BFI bank carries a BFI key");
                let mut values = BTreeMap::new();
                for (id, l) in &labels {
                    let v = bank.scale().option_value(l).map_err(ScoreError::from)?;
                    values.insert(*id, v);
                }
                Outcome::Bfi(score_bfi(&values, key)?)
            }
        };
        sessions.push(ScoredSession { model, temperature, conditioning, repetition, outcome });
    }
    dq.sessions_valid = sessions.len();
    if sessions.is_empty() {
        return Err(AnalysisError::NoValidSessions(String::new()));
    }
    Ok(ScoredLedger { run_id: ledger.header.run_id.clone(), plan: ledger.header.plan.clone(), sessions, data_quality: dq })
}
