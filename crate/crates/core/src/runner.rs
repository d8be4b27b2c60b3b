//! Experiment grid execution.
//!
//! Sessions run concurrently on a worker pool; each produces its records,
//! and the calling thread writes them to the ledger in plan order so the
//! file does not depend on scheduling.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruments::QuestionBank;
use crate::ledger::{Ledger, LedgerError, LedgerHeader, LedgerRecord, LedgerWriter, SessionKey, LEDGER_SCHEMA, LEDGER_VERSION};
use crate::llm_client::{sha256_hex, stable_hash, ChatBackend, ClientError, SamplingParams};
use crate::parsing::{answer_with_retries, AnswerError, DEFAULT_MAX_RETRIES};
use crate::personas::Personas;
use crate::prompting::{ConditioningSpec, Templates};
use crate::types::Instrument;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("ledger belongs to run {found}, plan is run {expected}")]
    PlanMismatch { expected: String, found: String },
    #[error("endpoint failure after {} records: {error}", .summary.records_written)]
    Fatal { error: ClientError, summary: RunSummary },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub models: Vec<String>,
    pub temperatures: Vec<f64>,
    pub conditionings: Vec<ConditioningSpec>,
    pub repetitions: u32,
    pub run_seed: u64,
}

impl RunPlan {
    pub fn validate(&self, personas: &Personas) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::InvalidPlan(m.to_string()));
        if self.models.is_empty() {
            return bad("no models");
        }
        if self.temperatures.is_empty() {
            return bad("no temperatures");
        }
        if self.conditionings.is_empty() {
            return bad("no conditionings");
        }
        if self.repetitions == 0 {
            return bad("repetitions must be at least 1");
        }
        if let Some(t) = self.temperatures.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(RunError::InvalidPlan(format!("bad temperature {t}")));
        }
        for c in &self.conditionings {
            c.validate(personas).map_err(|e| RunError::InvalidPlan(e.to_string()))?;
        }
        Ok(())
    }

    /// Sessions in canonical order: model, temperature, conditioning, repetition.
    pub fn sessions(&self) -> Vec<SessionKey> {
        let mut out = Vec::with_capacity(session_count(self) as usize);
        for m in &self.models {
            for &t in &self.temperatures {
                for c in &self.conditionings {
                    for rep in 0..self.repetitions {
                        out.push(SessionKey::new(m, t, c.clone(), rep));
                    }
                }
            }
        }
        out
    }

    /// Deterministic id derived from the plan contents.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_string(self).expect("plan serializes");
        sha256_hex(&json)[..16].to_string()
    }
}

pub fn session_count(plan: &RunPlan) -> u64 {
    plan.models.len() as u64 * plan.temperatures.len() as u64 * plan.conditionings.len() as u64 * plan.repetitions as u64
}

pub fn session_seed(run_seed: u64, key: &SessionKey) -> u64 {
    stable_hash([
        run_seed.to_le_bytes().to_vec(),
        key.model.as_bytes().to_vec(),
        key.temperature_bits.to_le_bytes().to_vec(),
        key.conditioning.canonical().into_bytes(),
        key.repetition.to_le_bytes().to_vec(),
    ])
}

/// Question ids of `bank` in a seeded random order.
pub fn shuffle_questions(bank: &QuestionBank, session_seed: u64) -> Vec<u32> {
    let mut ids: Vec<u32> = bank.questions().iter().map(|q| q.id).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(session_seed));
    ids
}

pub fn request_seed(session_seed: u64, question_id: u32) -> u64 {
    stable_hash([session_seed.to_le_bytes(), u64::from(question_id).to_le_bytes()])
}

/// Everything besides the plan that shapes a run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub sampling: SamplingParams,
    /// Per-temperature sampling overrides; the entry whose temperature matches wins.
    pub sampling_overrides: Vec<SamplingParams>,
    pub max_retries: u32,
    pub workers: usize,
    pub templates: Templates,
    pub personas: Personas,
    pub mbti: QuestionBank,
    pub bfi: QuestionBank,
    pub backend_label: String,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            sampling: SamplingParams::default(),
            sampling_overrides: Vec::new(),
            max_retries: DEFAULT_MAX_RETRIES,
            workers: 4,
            templates: Templates::default(),
            personas: Personas::shipped().clone(),
            mbti: QuestionBank::shipped(Instrument::Mbti),
            bfi: QuestionBank::shipped(Instrument::Bfi),
            backend_label: "unspecified".into(),
        }
    }
}

impl RunOptions {
    pub fn bank(&self, instrument: Instrument) -> &QuestionBank {
        match instrument {
            Instrument::Mbti => &self.mbti,
            Instrument::Bfi => &self.bfi,
        }
    }

    pub fn sampling_for(&self, temperature: f64) -> SamplingParams {
        let base = self
            .sampling_overrides
            .iter()
            .find(|p| p.temperature == temperature)
            .unwrap_or(&self.sampling);
        SamplingParams { temperature, ..base.clone() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub sessions: u64,
    pub records_written: u64,
    pub records_skipped: u64,
    pub unparseable_records: u64,
    pub invalid_sessions: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LedgerMode {
    /// Start a fresh ledger, replacing any existing file.
    Create,
    /// Continue an existing ledger of the same plan.
    Resume,
}

struct SessionWork<'a> {
    index: usize,
    key: &'a SessionKey,
    done: HashSet<u32>,
}

struct SessionResult {
    index: usize,
    records: Vec<LedgerRecord>,
    error: Option<ClientError>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn build_header(plan: &RunPlan, opts: &RunOptions) -> Result<LedgerHeader, RunError> {
    let mut messages = BTreeMap::new();
    for c in &plan.conditionings {
        let (sys, interviewer) = opts
            .templates
            .system_messages(c, &opts.personas)
            .map_err(|e| RunError::InvalidPlan(e.to_string()))?;
        messages.insert(sha256_hex(&sys), sys);
        messages.insert(sha256_hex(&interviewer), interviewer);
    }
    Ok(LedgerHeader {
        schema: LEDGER_SCHEMA.into(),
        version: LEDGER_VERSION,
        run_id: plan.run_id(),
        plan: plan.clone(),
        sampling: opts.sampling.clone(),
        max_retries: opts.max_retries,
        backend: opts.backend_label.clone(),
        messages,
        created_at: now(),
    })
}

fn run_session<B: ChatBackend + ?Sized>(
    work: &SessionWork<'_>,
    run_id: &str,
    run_seed: u64,
    backend: &B,
    opts: &RunOptions,
    stop: &AtomicBool,
) -> SessionResult {
    let key = work.key;
    let spec = &key.conditioning;
    let bank = opts.bank(spec.instrument);
    let (system, interviewer) =
        opts.templates.system_messages(spec, &opts.personas).expect("conditionings validated before execution");
    let system_hash = sha256_hex(&system);
    let interviewer_hash = sha256_hex(&interviewer);
    let seed = session_seed(run_seed, key);
    let mut records = Vec::new();
    for (pos, qid) in shuffle_questions(bank, seed).into_iter().enumerate() {
        if work.done.contains(&qid) {
            continue;
        }
        if stop.load(Ordering::Relaxed) {
            break;
        }
        let q = bank.question(qid).expect("shuffled ids come from the bank");
        let question = opts.templates.question_prompt(spec.instrument, q);
        let params = SamplingParams { request_seed: Some(request_seed(seed, qid)), ..opts.sampling_for(key.temperature()) };
        let ask = |extra: Option<&str>| {
            let user = match extra {
                Some(e) => format!("{question}\n\n{e}"),
                None => question.clone(),
            };
            match backend.chat(&key.model, &system, &user, &params) {
                Err(ClientError::EmptyCompletion) => Ok(String::new()),
                other => other,
            }
        };
        let (attempts, parsed, parse_error) = match answer_with_retries(ask, bank.scale(), opts.max_retries) {
            Ok((p, attempts)) => (attempts, Some(p), None),
            Err(AnswerError::Unparseable { attempts, last_error }) => (attempts, None, Some(last_error.kind().to_string())),
            Err(AnswerError::Client(e)) => {
                stop.store(true, Ordering::Relaxed);
                return SessionResult { index: work.index, records, error: Some(e) };
            }
        };
        records.push(LedgerRecord {
            run_id: run_id.to_string(),
            model: key.model.clone(),
            instrument: spec.instrument,
            regime: spec.regime,
            target: spec.target,
            role: spec.role.clone(),
            temperature: key.temperature(),
            repetition: key.repetition,
            question_id: qid,
            position: pos as u32,
            system_hash: system_hash.clone(),
            interviewer_hash: interviewer_hash.clone(),
            session_seed: seed,
            request_seed: params.request_seed.unwrap_or_default(),
            top_p: params.top_p,
            top_k: params.top_k,
            raw_response: attempts.last().cloned().unwrap_or_default(),
            attempts,
            parsed_label: parsed.as_ref().map(|p| p.label.clone()),
            parse_error,
            match_method: parsed.map(|p| p.match_method),
            timestamp: now(),
        });
    }
    SessionResult { index: work.index, records, error: None }
}

/// Runs every (session, question) of `plan` not already in the ledger.
pub fn execute<B: ChatBackend + ?Sized>(
    plan: &RunPlan,
    backend: &B,
    opts: &RunOptions,
    ledger_path: &Path,
    mode: LedgerMode,
) -> Result<RunSummary, RunError> {
    plan.validate(&opts.personas)?;
    let header = build_header(plan, opts)?;
    let run_id = header.run_id.clone();
    let sessions = plan.sessions();

    let mut done: BTreeMap<SessionKey, HashSet<u32>> = BTreeMap::new();
    let mut writer = match mode {
        LedgerMode::Resume if ledger_path.exists() => {
            let existing = Ledger::read(ledger_path)?;
            if existing.header.run_id != run_id {
                return Err(RunError::PlanMismatch { expected: run_id, found: existing.header.run_id });
            }
            for r in &existing.records {
                done.entry(r.session_key()).or_default().insert(r.question_id);
            }
            LedgerWriter::append(ledger_path, &existing)?
        }
        _ => LedgerWriter::create(ledger_path, &header)?,
    };

    let mut summary = RunSummary { run_id: run_id.clone(), sessions: sessions.len() as u64, ..Default::default() };
    summary.records_skipped = done.values().map(|s| s.len() as u64).sum();

    let work: Vec<SessionWork<'_>> = sessions
        .iter()
        .enumerate()
        .map(|(index, key)| SessionWork { index, key, done: done.remove(key).unwrap_or_default() })
        .filter(|w| w.done.len() < opts.bank(w.key.conditioning.instrument).len())
        .collect();
    log::info!("run {run_id}: {} sessions, {} to do", sessions.len(), work.len());

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let workers = opts.workers.clamp(1, work.len().max(1));
    let mut fatal: Option<ClientError> = None;
    let mut write_err: Option<LedgerError> = None;

    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<SessionResult>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (work, next, stop, run_id) = (&work, &next, &stop, &run_id);
            scope.spawn(move || loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(w) = work.get(i) else { break };
                let result = run_session(w, run_id, plan.run_seed, backend, opts, stop);
                if tx.send(result).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // reorder buffer: results are written in work order
        let mut pending: BTreeMap<usize, SessionResult> = BTreeMap::new();
        let mut cursor = 0;
        let position: BTreeMap<usize, usize> = work.iter().enumerate().map(|(i, w)| (w.index, i)).collect();
        let mut write = |r: SessionResult, summary: &mut RunSummary| -> Result<(), LedgerError> {
            let mut unparseable = false;
            for rec in &r.records {
                writer.write_record(rec)?;
                summary.records_written += 1;
                if !rec.is_valid() {
                    summary.unparseable_records += 1;
                    unparseable = true;
                }
            }
            writer.flush()?;
            if unparseable {
                summary.invalid_sessions += 1;
            }
            Ok(())
        };
        for result in rx {
            if let Some(e) = &result.error {
                fatal.get_or_insert_with(|| e.clone());
            }
            pending.insert(position[&result.index], result);
            while let Some(r) = pending.remove(&cursor) {
                cursor += 1;
                if write_err.is_none() {
                    if let Err(e) = write(r, &mut summary) {
                        stop.store(true, Ordering::Relaxed);
                        write_err = Some(e);
                    }
                }
            }
        }
        // after a stop, flush whatever finished out of order so it can be resumed
        for (_, r) in std::mem::take(&mut pending) {
            if write_err.is_none() {
                if let Err(e) = write(r, &mut summary) {
                    write_err = Some(e);
                }
            }
        }
    });

    if let Some(e) = write_err {
        return Err(e.into());
    }
    if let Some(error) = fatal {
        return Err(RunError::Fatal { error, summary });
    }
    Ok(summary)
}
