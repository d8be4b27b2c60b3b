//! Writes analysis outputs as CSV, JSON and plot-data TSV files.
//!
//! Every file is a pure function of the scored input, so re-running a
//! report over the same scores reproduces it byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{
    conditioned_accuracy, factor_means, format_pct, format_pm, model_temperature_cells, outcome_matrix,
    pct_increase_table, type_frequencies, AccuracyReport, Filter, OutcomeMatrix, PctIncrease,
};
use crate::personas::all_types;
use crate::prompting::Regime;
use crate::results::{AnalysisError, ScoredLedger};
use crate::types::{BigFiveFactor, Instrument};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReportOptions {
    /// Fail unless at least one outcome matrix can be written.
    pub require_matrix: bool,
    /// Fail unless a percentage-increase table can be written.
    pub require_pct_increase: bool,
}

#[derive(Debug, Default, Serialize)]
struct ReportJson {
    run_id: String,
    type_frequencies: Vec<FreqRow>,
    factor_means: Vec<MeansRow>,
    accuracy: Vec<AccuracyReport>,
    pct_increase: Vec<PctIncrease>,
    sessions_valid: usize,
    sessions_invalid: usize,
}

#[derive(Debug, Serialize)]
struct FreqRow {
    model: String,
    temperature: f64,
    regime: Regime,
    frequencies: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize)]
struct MeansRow {
    model: String,
    temperature: f64,
    conditioning: String,
    sessions: usize,
    means: BTreeMap<BigFiveFactor, f64>,
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' }).collect()
}

struct Out<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Out<'_> {
    fn write(&mut self, rel: &str, content: &str) -> Result<(), AnalysisError> {
        let path = self.dir.join(rel);
        let io = |source| AnalysisError::Io { path: path.display().to_string(), source };
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(io)?;
        }
        std::fs::write(&path, content).map_err(io)?;
        self.written.push(path);
        Ok(())
    }
}

fn regimes_present(scored: &ScoredLedger, instrument: Instrument) -> Vec<Regime> {
    let mut out: Vec<Regime> = scored
        .sessions
        .iter()
        .filter(|s| s.conditioning.instrument == instrument)
        .map(|s| s.conditioning.regime)
        .collect();
    out.sort();
    out.dedup();
    out
}

/// Writes every applicable analysis for `scored` into `dir` and returns the
/// files written.
pub fn write_report(
    dir: &Path,
    scored: &ScoredLedger,
    baseline: Option<&ScoredLedger>,
    opts: ReportOptions,
) -> Result<Vec<PathBuf>, AnalysisError> {
    if opts.require_pct_increase && baseline.is_none() {
        return Err(AnalysisError::MissingBaseline);
    }
    let mut out = Out { dir, written: Vec::new() };
    let mut json = ReportJson {
        run_id: scored.run_id.clone(),
        sessions_valid: scored.data_quality.sessions_valid,
        sessions_invalid: scored.data_quality.invalid.len(),
        ..Default::default()
    };
    let cells = model_temperature_cells(&scored.sessions);
    let types = all_types();

    // type frequencies (per model, temperature, regime)
    let mut freq_csv = String::from("model,temperature,regime,type,frequency\n");
    let mut freq_tsv = String::from("type");
    let mut freq_cols: Vec<BTreeMap<String, f64>> = Vec::new();
    for (model, t) in &cells {
        for regime in regimes_present(scored, Instrument::Mbti) {
            let Ok(f) = type_frequencies(&scored.sessions, &Filter::new(model, *t).regime(regime)) else { continue };
            let f: BTreeMap<String, f64> = f.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            for ty in &types {
                let v = f.get(ty.as_str()).copied().unwrap_or(0.0);
                writeln!(freq_csv, "{model},{t},{regime},{ty},{v:.6}").unwrap();
            }
            write!(freq_tsv, "\t{model}@{t}/{regime}").unwrap();
            freq_cols.push(f.clone());
            json.type_frequencies.push(FreqRow { model: model.clone(), temperature: *t, regime, frequencies: f });
        }
    }
    if !freq_cols.is_empty() {
        freq_tsv.push('\n');
        for ty in &types {
            freq_tsv.push_str(ty.as_str());
            for col in &freq_cols {
                write!(freq_tsv, "\t{:.6}", col.get(ty.as_str()).copied().unwrap_or(0.0)).unwrap();
            }
            freq_tsv.push('\n');
        }
        out.write("type_frequencies.csv", &freq_csv)?;
        out.write("plots/type_frequencies.tsv", &freq_tsv)?;
    }

    // factor means per conditioning
    let mut means_csv = String::from("model,temperature,conditioning,sessions,factor,mean\n");
    let mut means_tsv = String::from("series");
    for f in BigFiveFactor::ALL {
        write!(means_tsv, "\t{}", f.name()).unwrap();
    }
    means_tsv.push('\n');
    for (model, t) in &cells {
        let mut conds: Vec<_> = scored
            .sessions
            .iter()
            .filter(|s| s.conditioning.instrument == Instrument::Bfi && s.model == *model && s.temperature == *t)
            .map(|s| s.conditioning.clone())
            .collect();
        conds.sort();
        conds.dedup();
        for c in conds {
            let subset: Vec<_> = scored
                .sessions
                .iter()
                .filter(|s| s.model == *model && s.temperature == *t && s.conditioning == c)
                .cloned()
                .collect();
            let m = factor_means(&subset, &Filter::default())?;
            let canon = c.canonical();
            write!(means_tsv, "{model}@{t}/{canon}").unwrap();
            for (f, v) in &m {
                writeln!(means_csv, "{model},{t},{canon},{},{},{v:.6}", subset.len(), f.name()).unwrap();
            }
            for f in BigFiveFactor::ALL {
                write!(means_tsv, "\t{:.6}", m[&f]).unwrap();
            }
            means_tsv.push('\n');
            json.factor_means.push(MeansRow {
                model: model.clone(),
                temperature: *t,
                conditioning: canon,
                sessions: subset.len(),
                means: m,
            });
        }
    }
    if !json.factor_means.is_empty() {
        out.write("factor_means.csv", &means_csv)?;
        out.write("plots/factor_means.tsv", &means_tsv)?;
    }

    // conditioning accuracy
    let mut acc_csv = String::from("model,temperature,conditioning,target,role,valid,matches,accuracy,tie_rate\n");
    let mut sum_csv = String::from("model,temperature,mean,std,summary,pooled_std,excluded\n");
    let conditioned_mbti = scored
        .sessions
        .iter()
        .any(|s| s.conditioning.instrument == Instrument::Mbti && s.conditioning.target.is_some());
    if conditioned_mbti {
        for (model, t) in &cells {
            let Ok(r) = conditioned_accuracy(scored, model, *t) else { continue };
            for row in &r.rows {
                let fmt = |x: Option<f64>| x.map_or("NA".to_string(), |v| format!("{v:.3}"));
                writeln!(
                    acc_csv,
                    "{model},{t},{},{},{},{},{},{},{}",
                    row.conditioning,
                    row.target,
                    row.role.as_deref().unwrap_or(""),
                    row.valid,
                    row.matches,
                    fmt(row.accuracy),
                    fmt(row.tie_rate)
                )
                .unwrap();
            }
            writeln!(
                sum_csv,
                "{model},{t},{:.3},{:.3},{},{:.3},{}",
                r.mean,
                r.std,
                format_pm(r.mean, r.std),
                r.pooled_std,
                r.excluded.len()
            )
            .unwrap();
            json.accuracy.push(r);
        }
        out.write("accuracy.csv", &acc_csv)?;
        out.write("accuracy_summary.csv", &sum_csv)?;
    }

    // outcome matrices
    let mut matrices: Vec<OutcomeMatrix> = Vec::new();
    for (model, t) in &cells {
        for regime in [Regime::Personality, Regime::RolePersonality] {
            if let Ok(m) = outcome_matrix(&scored.sessions, model, *t, regime) {
                matrices.push(m);
            }
        }
    }
    if matrices.is_empty() && opts.require_matrix {
        return Err(AnalysisError::NoValidSessions("conditioned MBTI outcome matrix".into()));
    }
    for m in &matrices {
        let name = format!("matrix_{}_{}_{}", slug(&m.model), m.temperature, m.regime);
        let csv = m.to_csv();
        out.write(&format!("matrices/{name}.csv"), &csv)?;
        out.write(&format!("plots/{name}.tsv"), &csv.replace(',', "\t"))?;
    }

    // percentage increase
    if let Some(base) = baseline {
        match pct_increase_table(scored, base) {
            Ok(rows) => {
                let mut csv = String::from("model,temperature,factor,role,baseline,conditioned,delta_pct\n");
                for r in &rows {
                    writeln!(
                        csv,
                        "{},{},{},{},{:.3},{:.3},{}",
                        r.model,
                        r.temperature,
                        r.factor.name(),
                        r.role.as_deref().unwrap_or(""),
                        r.baseline,
                        r.conditioned,
                        format_pct(r.delta)
                    )
                    .unwrap();
                }
                out.write("pct_increase.csv", &csv)?;
                json.pct_increase = rows;
            }
            Err(e) if opts.require_pct_increase => return Err(e),
            Err(e) => log::warn!("skipping percentage increase: {e}"),
        }
    }

    out.write("data_quality.json", &(serde_json::to_string_pretty(&scored.data_quality).expect("serializes") + "\n"))?;
    out.write("report.json", &(serde_json::to_string_pretty(&json).expect("serializes") + "\n"))?;
    Ok(out.written)
}
