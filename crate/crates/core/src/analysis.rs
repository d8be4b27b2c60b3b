//! Aggregates scored sessions: type frequencies, factor means, conditioning
//! accuracy, outcome matrices and percentage increases.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::personas::all_types;
use crate::prompting::{ConditioningSpec, Regime};
use crate::results::{AnalysisError, ScoredLedger, ScoredSession};
use crate::types::{Axis, BigFiveFactor, Instrument, MbtiType, Target};

/// Selects sessions; `None` fields match anything.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Filter {
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub regime: Option<Regime>,
}

impl Filter {
    pub fn new(model: &str, temperature: f64) -> Self {
        Self { model: Some(model.to_string()), temperature: Some(temperature), regime: None }
    }

    pub fn regime(mut self, regime: Regime) -> Self {
        self.regime = Some(regime);
        self
    }

    pub fn matches(&self, s: &ScoredSession) -> bool {
        self.model.as_ref().is_none_or(|m| *m == s.model)
            && self.temperature.is_none_or(|t| t == s.temperature)
            && self.regime.is_none_or(|r| r == s.conditioning.regime)
    }

    fn describe(&self) -> String {
        let mut parts = Vec::new();
        if let Some(m) = &self.model {
            parts.push(format!("model {m}"));
        }
        if let Some(t) = self.temperature {
            parts.push(format!("temperature {t}"));
        }
        if let Some(r) = self.regime {
            parts.push(format!("regime {r}"));
        }
        parts.join(", ")
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1); 0 for fewer than two values.
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Relative frequency of each outcome type among matching MBTI sessions.
pub fn type_frequencies(sessions: &[ScoredSession], filter: &Filter) -> Result<BTreeMap<MbtiType, f64>, AnalysisError> {
    let outcomes: Vec<MbtiType> =
        sessions.iter().filter(|s| filter.matches(s)).filter_map(|s| s.mbti()).map(|o| o.mbti_type).collect();
    if outcomes.is_empty() {
        return Err(AnalysisError::NoValidSessions(filter.describe()));
    }
    let mut counts: BTreeMap<MbtiType, usize> = BTreeMap::new();
    for t in &outcomes {
        *counts.entry(*t).or_default() += 1;
    }
    let n = outcomes.len() as f64;
    Ok(counts.into_iter().map(|(t, c)| (t, c as f64 / n)).collect())
}

/// Frequency of the first pole (E, S, T, J) on each axis.
pub fn first_pole_frequencies(freqs: &BTreeMap<MbtiType, f64>) -> BTreeMap<Axis, f64> {
    Axis::ALL
        .into_iter()
        .map(|a| (a, freqs.iter().filter(|(t, _)| t.is_first_pole(a)).map(|(_, f)| f).sum()))
        .collect()
}

/// Mean over matching BFI sessions of each session's factor means.
pub fn factor_means(sessions: &[ScoredSession], filter: &Filter) -> Result<BTreeMap<BigFiveFactor, f64>, AnalysisError> {
    let scores: Vec<_> = sessions.iter().filter(|s| filter.matches(s)).filter_map(|s| s.bfi()).collect();
    if scores.is_empty() {
        return Err(AnalysisError::NoValidSessions(filter.describe()));
    }
    Ok(BigFiveFactor::ALL
        .into_iter()
        .map(|f| (f, mean(&scores.iter().map(|s| s.get(f)).collect::<Vec<_>>())))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub conditioning: String,
    pub target: Target,
    pub role: Option<String>,
    pub valid: usize,
    pub matches: usize,
    /// `None` when the conditioning has no valid repetitions.
    pub accuracy: Option<f64>,
    pub tie_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub model: String,
    pub temperature: f64,
    pub rows: Vec<AccuracyRow>,
    /// Mean of the per-conditioning accuracies.
    pub mean: f64,
    /// Sample std over the per-conditioning accuracies.
    pub std: f64,
    /// Sample std over all individual repetitions (0/1 match), the other
    /// reading of the spread.
    pub pooled_std: f64,
    /// Conditionings excluded from the summary for lack of valid sessions.
    pub excluded: Vec<String>,
}

impl AccuracyReport {
    pub fn summary(&self) -> String {
        format_pm(self.mean, self.std)
    }
}

pub fn format_pm(mean: f64, std: f64) -> String {
    format!("{mean:.3} ± {std:.3}")
}

pub fn format_pct(delta: f64) -> String {
    format!("{delta:+.1}")
}

fn planned_conditionings(scored: &ScoredLedger, instrument: Instrument) -> Vec<ConditioningSpec> {
    let mut out: Vec<ConditioningSpec> = scored
        .plan
        .conditionings
        .iter()
        .filter(|c| c.instrument == instrument && c.target.is_some())
        .cloned()
        .collect();
    for s in &scored.sessions {
        if s.conditioning.instrument == instrument && s.conditioning.target.is_some() && !out.contains(&s.conditioning) {
            out.push(s.conditioning.clone());
        }
    }
    out
}

/// Per-conditioning accuracy of conditioned MBTI sessions for one model and
/// temperature, with mean and sample std across conditionings.
pub fn conditioned_accuracy(scored: &ScoredLedger, model: &str, temperature: f64) -> Result<AccuracyReport, AnalysisError> {
    let filter = Filter::new(model, temperature);
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    let mut all_hits = Vec::new();
    for c in planned_conditionings(scored, Instrument::Mbti) {
        let target = c.target.expect("conditioned");
        let want = target.as_type().expect("MBTI conditioning");
        let outcomes: Vec<_> =
            scored.sessions.iter().filter(|s| filter.matches(s) && s.conditioning == c).filter_map(|s| s.mbti()).collect();
        let matches = outcomes.iter().filter(|o| o.mbti_type == want).count();
        let ties = outcomes.iter().filter(|o| !o.tie_flags.is_empty()).count();
        let valid = outcomes.len();
        all_hits.extend(outcomes.iter().map(|o| if o.mbti_type == want { 1.0 } else { 0.0 }));
        if valid == 0 {
            excluded.push(c.canonical());
        }
        rows.push(AccuracyRow {
            conditioning: c.canonical(),
            target,
            role: c.role.clone(),
            valid,
            matches,
            accuracy: (valid > 0).then(|| matches as f64 / valid as f64),
            tie_rate: (valid > 0).then(|| ties as f64 / valid as f64),
        });
    }
    let accs: Vec<f64> = rows.iter().filter_map(|r| r.accuracy).collect();
    if accs.is_empty() {
        return Err(AnalysisError::NoValidSessions(format!("conditioned MBTI, {}", filter.describe())));
    }
    Ok(AccuracyReport {
        model: model.to_string(),
        temperature,
        mean: mean(&accs),
        std: sample_std(&accs),
        pooled_std: sample_std(&all_hits),
        rows,
        excluded,
    })
}

/// Row-stochastic conditioning × outcome matrix over the 16 types, in the
/// order of [`all_types`]. Role conditionings are pooled per target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    pub model: String,
    pub temperature: f64,
    pub regime: Regime,
    pub types: Vec<MbtiType>,
    /// `None` rows had no valid sessions.
    pub rows: Vec<Option<Vec<f64>>>,
}

impl OutcomeMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("conditioning");
        for t in &self.types {
            out.push(',');
            out.push_str(t.as_str());
        }
        out.push('\n');
        for (t, row) in self.types.iter().zip(&self.rows) {
            out.push_str(t.as_str());
            match row {
                Some(r) => r.iter().for_each(|v| out.push_str(&format!(",{v:.6}"))),
                None => self.types.iter().for_each(|_| out.push_str(",NA")),
            }
            out.push('\n');
        }
        out
    }
}

pub fn outcome_matrix(
    sessions: &[ScoredSession],
    model: &str,
    temperature: f64,
    regime: Regime,
) -> Result<OutcomeMatrix, AnalysisError> {
    let filter = Filter::new(model, temperature).regime(regime);
    let types = all_types();
    let col: BTreeMap<MbtiType, usize> = types.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut counts = vec![vec![0usize; 16]; 16];
    let mut any = false;
    for s in sessions.iter().filter(|s| filter.matches(s)) {
        let (Some(o), Some(Target::Type(t))) = (s.mbti(), s.conditioning.target) else { continue };
        counts[col[&t]][col[&o.mbti_type]] += 1;
        any = true;
    }
    if !any {
        return Err(AnalysisError::NoValidSessions(format!("conditioned MBTI, {}", filter.describe())));
    }
    let rows = counts
        .into_iter()
        .map(|r| {
            let n: usize = r.iter().sum();
            (n > 0).then(|| r.iter().map(|c| *c as f64 / n as f64).collect())
        })
        .collect();
    Ok(OutcomeMatrix { model: model.to_string(), temperature, regime, types, rows })
}

/// 100 × (c − b) / b.
pub fn pct_increase(baseline: f64, conditioned: f64) -> f64 {
    100.0 * (conditioned - baseline) / baseline
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PctIncrease {
    pub model: String,
    pub temperature: f64,
    pub factor: BigFiveFactor,
    pub role: Option<String>,
    pub baseline: f64,
    pub conditioned: f64,
    pub delta: f64,
}

/// For each conditioned BFI conditioning, the change of its target factor's
/// mean relative to the unconditioned mean of the same model and temperature
/// in `baseline`.
pub fn pct_increase_table(conditioned: &ScoredLedger, baseline: &ScoredLedger) -> Result<Vec<PctIncrease>, AnalysisError> {
    let mut out = Vec::new();
    let cells = model_temperature_cells(&conditioned.sessions);
    for (model, temperature) in cells {
        let base_filter = Filter::new(&model, temperature).regime(Regime::Unconditioned);
        let Ok(base) = factor_means(&baseline.sessions, &base_filter) else {
            log::warn!("no unconditioned BFI baseline for {model} at {temperature}");
            continue;
        };
        for c in planned_conditionings(conditioned, Instrument::Bfi) {
            let Some(Target::Factor(f)) = c.target else { continue };
            let matching: Vec<ScoredSession> = conditioned
                .sessions
                .iter()
                .filter(|s| s.model == model && s.temperature == temperature && s.conditioning == c)
                .cloned()
                .collect();
            let Ok(means) = factor_means(&matching, &Filter::default()) else { continue };
            out.push(PctIncrease {
                model: model.clone(),
                temperature,
                factor: f,
                role: c.role.clone(),
                baseline: base[&f],
                conditioned: means[&f],
                delta: pct_increase(base[&f], means[&f]),
            });
        }
    }
    if out.is_empty() {
        return Err(AnalysisError::NoValidSessions("conditioned BFI with a matching baseline".into()));
    }
    Ok(out)
}

/// Distinct (model, temperature) pairs in first-seen order.
pub fn model_temperature_cells(sessions: &[ScoredSession]) -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    for s in sessions {
        if !out.iter().any(|(m, t)| *m == s.model && *t == s.temperature) {
            out.push((s.model.clone(), s.temperature));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::results::Outcome;
    use crate::scoring::{BfiScores, MbtiOutcome};
    use std::collections::BTreeSet;

    fn mbti_session(cond: Option<&str>, outcome: &str) -> ScoredSession {
        let conditioning = match cond {
            Some(t) => ConditioningSpec::personality(t.parse().unwrap()),
            None => ConditioningSpec::unconditioned(Instrument::Mbti),
        };
        ScoredSession {
            model: "m".into(),
            temperature: 0.7,
            conditioning,
            repetition: 0,
            outcome: Outcome::Mbti(MbtiOutcome {
                mbti_type: outcome.parse().unwrap(),
                axis_sums: BTreeMap::new(),
                tie_flags: BTreeSet::new(),
            }),
        }
    }

    fn bfi_session(means: [f64; 5]) -> ScoredSession {
        ScoredSession {
            model: "m".into(),
            temperature: 0.7,
            conditioning: ConditioningSpec::unconditioned(Instrument::Bfi),
            repetition: 0,
            outcome: Outcome::Bfi(BfiScores { means: BigFiveFactor::ALL.into_iter().zip(means).collect() }),
        }
    }

    #[test]
    fn frequencies() {
        let all: Vec<_> = (0..30).map(|_| mbti_session(None, "ENFJ")).collect();
        let f = type_frequencies(&all, &Filter::default()).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[&"ENFJ".parse().unwrap()], 1.0);
        let mut half: Vec<_> = (0..10).map(|_| mbti_session(None, "ENFJ")).collect();
        half.extend((0..10).map(|_| mbti_session(None, "INFJ")));
        let f = type_frequencies(&half, &Filter::default()).unwrap();
        assert_eq!(f[&"INFJ".parse().unwrap()], 0.5);
        let poles = first_pole_frequencies(&f);
        assert_eq!(poles[&Axis::EI], 0.5);
        assert_eq!(poles[&Axis::SN], 0.0);
        assert!(matches!(type_frequencies(&[], &Filter::default()), Err(AnalysisError::NoValidSessions(_))));
    }

    #[test]
    fn factor_means_average_sessions() {
        let s = vec![bfi_session([3.0; 5]), bfi_session([5.0; 5])];
        let m = factor_means(&s, &Filter::default()).unwrap();
        assert!(m.values().all(|v| *v == 4.0));
        let one = vec![bfi_session([1.0, 2.0, 3.0, 4.0, 5.0])];
        assert_eq!(factor_means(&one, &Filter::default()).unwrap()[&BigFiveFactor::Openness], 5.0);
    }

    #[test]
    fn pct_examples() {
        assert_eq!(pct_increase(3.0, 3.0), 0.0);
        assert!((pct_increase(3.0, 4.5) - 50.0).abs() < 1e-9);
        assert_eq!(format_pct(pct_increase(1.5, 5.0)), "+233.3");
        assert_eq!(format_pm(0.7849, 0.3911), "0.785 ± 0.391");
    }

    #[test]
    fn std_is_sample_std() {
        assert_eq!(sample_std(&[1.0]), 0.0);
        assert!((sample_std(&[1.0, 0.0]) - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn matrix_single_column() {
        let s: Vec<_> = ["INTJ", "ESFP", "ENFJ"].iter().map(|t| mbti_session(Some(t), "ENFJ")).collect();
        let m = outcome_matrix(&s, "m", 0.7, Regime::Personality).unwrap();
        let enfj = m.types.iter().position(|t| t.as_str() == "ENFJ").unwrap();
        for row in m.rows.iter().flatten() {
            assert_eq!(row[enfj], 1.0);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(m.rows.iter().filter(|r| r.is_none()).count(), 13);
        assert!(m.to_csv().contains("ISTJ,NA,"));
    }
}
