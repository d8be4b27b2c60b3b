//! Python bindings: scoring, answer parsing, prompt rendering, plan counting
//! and offline runs against the mock persona.

// pyo3 0.22's macros trip this lint on every PyResult return
#![allow(clippy::useless_conversion)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use persona_core::awareness;
use persona_core::runner::LedgerMode;
use persona_core::{
    analysis, execute, score_ledger, ConditioningSpec, Instrument, Ledger, MockPersona, MockTarget, Personas,
    QuestionBank, RunOptions, RunPlan, Target, Templates,
};
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn instrument(s: &str) -> PyResult<Instrument> {
    s.parse().map_err(value_err)
}

fn target(s: &str) -> PyResult<Target> {
    s.parse().map_err(value_err)
}

fn spec(instrument: Instrument, target: Option<&str>, role: Option<&str>) -> PyResult<ConditioningSpec> {
    match (target, role) {
        (None, None) => Ok(ConditioningSpec::unconditioned(instrument)),
        (Some(t), None) => Ok(ConditioningSpec::personality(self::target(t)?)),
        (Some(t), Some(r)) => Ok(ConditioningSpec::role_personality(self::target(t)?, r)),
        (None, Some(_)) => Err(PyValueError::new_err("a role needs a target")),
    }
}

/// Big Five factor means from a complete `{item_id: 1..5}` mapping.
#[pyfunction]
fn score_bfi(answers: BTreeMap<u32, i32>) -> PyResult<BTreeMap<String, f64>> {
    let bank = QuestionBank::shipped(Instrument::Bfi);
    let scores = persona_core::score_bfi(&answers, bank.bfi_key().expect("BFI bank has a key")).map_err(value_err)?;
    Ok(scores.means.into_iter().map(|(f, v)| (f.name().to_string(), v)).collect())
}

/// `(type, axis_sums, tie_axes)` from a complete `{item_id: label}` mapping.
#[pyfunction]
fn score_mbti(answers: BTreeMap<u32, String>) -> PyResult<(String, BTreeMap<String, i32>, Vec<String>)> {
    let bank = QuestionBank::shipped(Instrument::Mbti);
    let o = persona_core::score_mbti(&answers, bank.mbti_key().expect("MBTI bank has a key"), bank.scale())
        .map_err(value_err)?;
    Ok((
        o.mbti_type.to_string(),
        o.axis_sums.into_iter().map(|(a, v)| (a.to_string(), v)).collect(),
        o.tie_flags.into_iter().map(|a| a.to_string()).collect(),
    ))
}

#[pyfunction]
fn reverse_item(value: i32) -> PyResult<i32> {
    persona_core::reverse_item(value).map_err(value_err)
}

/// Maps a free-text reply to `(label, match_method)`; raises ValueError
/// when no single option matches.
#[pyfunction]
fn parse_option(raw: &str, instrument: &str) -> PyResult<(String, String)> {
    let bank = QuestionBank::shipped(self::instrument(instrument)?);
    let p = persona_core::parse_option(raw, bank.scale()).map_err(|e| PyValueError::new_err(e.kind()))?;
    Ok((p.label, p.match_method.to_string()))
}

/// `(system, user)` messages for one question under a conditioning.
#[pyfunction]
#[pyo3(signature = (instrument, question_id, target=None, role=None))]
fn render_prompt(instrument: &str, question_id: u32, target: Option<&str>, role: Option<&str>) -> PyResult<(String, String)> {
    let instrument = self::instrument(instrument)?;
    let bank = QuestionBank::shipped(instrument);
    let q = bank.question(question_id).ok_or_else(|| PyKeyError::new_err(question_id))?;
    let spec = spec(instrument, target, role)?;
    let r = Templates::default().render_prompt(&spec, q, Personas::shipped()).map_err(value_err)?;
    Ok((r.system_interviewee, r.user_question))
}

#[pyfunction]
fn session_count(models: usize, temperatures: usize, conditionings: usize, repetitions: u32) -> u64 {
    models as u64 * temperatures as u64 * conditionings as u64 * u64::from(repetitions)
}

/// Word overlap of two texts after stopword removal and stemming.
#[pyfunction]
fn word_overlap(a: &str, b: &str) -> PyResult<f64> {
    let (a, b) = (awareness::preprocess(a).map_err(value_err)?, awareness::preprocess(b).map_err(value_err)?);
    awareness::word_overlap(&a, &b).map_err(value_err)
}

#[pyfunction]
fn cosine(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    awareness::cosine(&a, &b).map_err(value_err)
}

#[pyfunction]
fn pct_increase(baseline: f64, conditioned: f64) -> f64 {
    analysis::pct_increase(baseline, conditioned)
}

/// Runs every target of `instrument` against the mock persona, writes the
/// ledger to `ledger`, and returns the scored results as a JSON string.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (instrument, ledger, targets=None, temperatures=vec![0.01, 0.7], repetitions=1, seed=0, epsilon=0.0))]
fn run_mock(
    py: Python<'_>,
    instrument: &str,
    ledger: PathBuf,
    targets: Option<Vec<String>>,
    temperatures: Vec<f64>,
    repetitions: u32,
    seed: u64,
    epsilon: f64,
) -> PyResult<String> {
    let instrument = self::instrument(instrument)?;
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(PyValueError::new_err("epsilon must be in [0, 1]"));
    }
    let targets: Vec<Target> = match targets {
        None => Personas::shipped().targets(instrument),
        Some(ts) => ts.iter().map(|t| target(t)).collect::<PyResult<_>>()?,
    };
    let plan = RunPlan {
        models: vec!["mock".into()],
        temperatures,
        conditionings: targets.into_iter().map(ConditioningSpec::personality).collect(),
        repetitions,
        run_seed: seed,
    };
    plan.validate(Personas::shipped()).map_err(value_err)?;
    py.allow_threads(|| {
        let mock = MockPersona::new(MockTarget::FollowSystem, epsilon, seed);
        let opts = RunOptions { backend_label: "mock".into(), ..RunOptions::default() };
        execute(&plan, &mock, &opts, &ledger, LedgerMode::Create).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let l = Ledger::read(&ledger).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        let scored = score_ledger(&l, &QuestionBank::shipped(Instrument::Mbti), &QuestionBank::shipped(Instrument::Bfi))
            .map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
        Ok(serde_json::to_string(&scored).expect("scores serialize"))
    })
}

/// Ids of the reversed BFI items, and the item ids of each factor.
#[pyfunction]
fn bfi_key() -> (Vec<u32>, HashMap<String, Vec<u32>>) {
    let bank = QuestionBank::shipped(Instrument::Bfi);
    let key = bank.bfi_key().expect("BFI bank has a key");
    let items = persona_core::BigFiveFactor::ALL
        .iter()
        .map(|f| (f.name().to_string(), key.items_of(*f).collect()))
        .collect();
    (key.reversed().iter().copied().collect(), items)
}

#[pymodule]
fn persona_eval(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(score_bfi, m)?)?;
    m.add_function(wrap_pyfunction!(score_mbti, m)?)?;
    m.add_function(wrap_pyfunction!(reverse_item, m)?)?;
    m.add_function(wrap_pyfunction!(parse_option, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add_function(wrap_pyfunction!(session_count, m)?)?;
    m.add_function(wrap_pyfunction!(word_overlap, m)?)?;
    m.add_function(wrap_pyfunction!(cosine, m)?)?;
    m.add_function(wrap_pyfunction!(pct_increase, m)?)?;
    m.add_function(wrap_pyfunction!(run_mock, m)?)?;
    m.add_function(wrap_pyfunction!(bfi_key, m)?)?;
    Ok(())
}
