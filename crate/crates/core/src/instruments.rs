//! Question banks, option scales and scoring keys for the two instruments.
//!
//! Each instrument lives in one TOML file: a header naming the instrument,
//! the ordered option scale, and one `[[items]]` table per question carrying
//! its scoring key. MBTI items carry `axis` + `polarity` (+ an optional
//! `note` justifying the assignment); BFI items carry `factor` + `reversed`.
//! Unknown fields are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Axis, BigFiveFactor, Instrument};

const MBTI_BANK: &str = include_str!("../data/mbti_bank.toml");
const BFI_BANK: &str = include_str!("../data/bfi_bank.toml");

/// Expected number of items per BFI factor.
pub const BFI_FACTOR_COUNTS: [(BigFiveFactor, usize); 5] = [
    (BigFiveFactor::Extraversion, 8),
    (BigFiveFactor::Agreeableness, 9),
    (BigFiveFactor::Conscientiousness, 9),
    (BigFiveFactor::Neuroticism, 8),
    (BigFiveFactor::Openness, 10),
];

/// The reverse-keyed BFI items.
pub const BFI_REVERSED: [u32; 16] = [2, 6, 8, 9, 12, 18, 21, 23, 24, 27, 31, 34, 35, 37, 41, 43];

const MBTI_BANK_SIZE: usize = 60;
const BFI_BANK_SIZE: usize = 44;
const MBTI_MIN_ITEMS_PER_AXIS: usize = 10;

#[derive(Debug, Error)]
pub enum BankError {
    #[error("cannot read bank file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bank schema error: {0}")]
    Schema(String),
    #[error("bank key error: {0}")]
    Key(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("`{label}` is not an option of the {instrument} scale")]
pub struct UnknownLabel {
    pub instrument: Instrument,
    pub label: String,
}

/// Ordered answer options with their integer scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OptionScale {
    instrument: Instrument,
    labels: Vec<String>,
    values: Vec<i32>,
}

impl OptionScale {
    pub fn new(instrument: Instrument, labels: Vec<String>, values: Vec<i32>) -> Result<Self, BankError> {
        if labels.len() != values.len() {
            return Err(BankError::Schema("scale labels and values differ in length".into()));
        }
        let expected = match instrument {
            Instrument::Mbti => 7,
            Instrument::Bfi => 5,
        };
        if labels.len() != expected {
            return Err(BankError::Schema(format!(
                "{instrument} scale must have {expected} options, found {}",
                labels.len()
            )));
        }
        let distinct: BTreeSet<String> = labels.iter().map(|l| l.to_lowercase()).collect();
        if distinct.len() != labels.len() {
            return Err(BankError::Schema("scale labels must be pairwise distinct".into()));
        }
        let increasing = values.windows(2).all(|w| w[0] < w[1]);
        let decreasing = values.windows(2).all(|w| w[0] > w[1]);
        if !increasing && !decreasing {
            return Err(BankError::Schema("scale values must be strictly monotone".into()));
        }
        Ok(Self { instrument, labels, values })
    }

    pub fn instrument(&self) -> Instrument {
        self.instrument
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Score aligned with `label`. Matching is exact; free-form text goes
    /// through [`crate::parsing::parse_option`] first.
    pub fn option_value(&self, label: &str) -> Result<i32, UnknownLabel> {
        self.index_of(label).map(|i| self.values[i]).ok_or_else(|| UnknownLabel {
            instrument: self.instrument,
            label: label.to_string(),
        })
    }

    pub fn label_for_value(&self, value: i32) -> Option<&str> {
        self.values.iter().position(|&v| v == value).map(|i| self.labels[i].as_str())
    }

    /// Label with the highest score (e.g. "Agree" / "Agree strongly").
    pub fn max_label(&self) -> &str {
        let i = (0..self.len()).max_by_key(|&i| self.values[i]).unwrap_or(0);
        &self.labels[i]
    }

    /// Label with the lowest score.
    pub fn min_label(&self) -> &str {
        let i = (0..self.len()).min_by_key(|&i| self.values[i]).unwrap_or(0);
        &self.labels[i]
    }
}

/// Same as [`OptionScale::option_value`].
pub fn option_value(scale: &OptionScale, label: &str) -> Result<i32, UnknownLabel> {
    scale.option_value(label)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: u32,
    pub text: String,
    pub instrument: Instrument,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MbtiKeyEntry {
    pub axis: Axis,
    /// +1 when agreement pushes toward E/S/T/J, -1 otherwise.
    pub polarity: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MbtiKey {
    entries: BTreeMap<u32, MbtiKeyEntry>,
}

impl MbtiKey {
    pub fn get(&self, id: u32) -> Option<MbtiKeyEntry> {
        self.entries.get(&id).copied()
    }

    pub fn entries(&self) -> &BTreeMap<u32, MbtiKeyEntry> {
        &self.entries
    }

    pub fn items_on(&self, axis: Axis) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().filter(move |(_, e)| e.axis == axis).map(|(&id, _)| id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BfiKey {
    item_factor: BTreeMap<u32, BigFiveFactor>,
    reversed: BTreeSet<u32>,
}

impl BfiKey {
    pub fn factor_of(&self, id: u32) -> Option<BigFiveFactor> {
        self.item_factor.get(&id).copied()
    }

    pub fn is_reversed(&self, id: u32) -> bool {
        self.reversed.contains(&id)
    }

    pub fn item_factor(&self) -> &BTreeMap<u32, BigFiveFactor> {
        &self.item_factor
    }

    pub fn reversed(&self) -> &BTreeSet<u32> {
        &self.reversed
    }

    pub fn items_of(&self, factor: BigFiveFactor) -> impl Iterator<Item = u32> + '_ {
        self.item_factor.iter().filter(move |(_, &f)| f == factor).map(|(&id, _)| id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScoringKey {
    Mbti(MbtiKey),
    Bfi(BfiKey),
}

/// A validated question bank together with its scale and key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuestionBank {
    instrument: Instrument,
    scale: OptionScale,
    questions: Vec<Question>,
    key: ScoringKey,
    notes: BTreeMap<u32, String>,
}

impl QuestionBank {
    /// The bank compiled into the library.
    pub fn shipped(instrument: Instrument) -> Self {
        let src = match instrument {
            Instrument::Mbti => MBTI_BANK,
            Instrument::Bfi => BFI_BANK,
        };
        Self::from_toml_str(src, instrument).expect("shipped bank is valid")
    }

    pub fn instrument(&self) -> Instrument {
        self.instrument
    }

    pub fn scale(&self) -> &OptionScale {
        &self.scale
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn len(&self) -> usize {
        self.questions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.questions.is_empty()
    }

    pub fn question(&self, id: u32) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn key(&self) -> &ScoringKey {
        &self.key
    }

    pub fn mbti_key(&self) -> Option<&MbtiKey> {
        match &self.key {
            ScoringKey::Mbti(k) => Some(k),
            ScoringKey::Bfi(_) => None,
        }
    }

    pub fn bfi_key(&self) -> Option<&BfiKey> {
        match &self.key {
            ScoringKey::Bfi(k) => Some(k),
            ScoringKey::Mbti(_) => None,
        }
    }

    pub fn note(&self, id: u32) -> Option<&str> {
        self.notes.get(&id).map(String::as_str)
    }

    pub fn from_toml_str(src: &str, instrument: Instrument) -> Result<Self, BankError> {
        let file: BankFile = toml::from_str(src).map_err(|e| BankError::Schema(e.to_string()))?;
        file.into_bank(instrument)
    }

    /// Canonical TOML form. Reloading the output yields an identical bank
    /// and re-serializing it yields identical bytes.
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "instrument = {}", quote(self.instrument.as_str()));
        for (label, value) in self.scale.labels.iter().zip(&self.scale.values) {
            let _ = write!(out, "\n[[scale]]\nlabel = {}\nvalue = {}\n", quote(label), value);
        }
        for q in &self.questions {
            let _ = write!(out, "\n[[items]]\nid = {}\ntext = {}\n", q.id, quote(&q.text));
            match &self.key {
                ScoringKey::Mbti(k) => {
                    let e = k.entries[&q.id];
                    let _ = write!(out, "axis = {}\npolarity = {}\n", quote(e.axis.as_str()), e.polarity);
                }
                ScoringKey::Bfi(k) => {
                    let f = k.item_factor[&q.id];
                    let _ = write!(out, "factor = {}\nreversed = {}\n", quote(f.code()), k.is_reversed(q.id));
                }
            }
            if let Some(n) = self.notes.get(&q.id) {
                let _ = writeln!(out, "note = {}", quote(n));
            }
        }
        out
    }
}

fn quote(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

/// Loads and validates a bank file for `instrument`.
pub fn load_bank(path: &Path, instrument: Instrument) -> Result<QuestionBank, BankError> {
    let src = std::fs::read_to_string(path).map_err(|source| BankError::Io {
        path: path.display().to_string(),
        source,
    })?;
    QuestionBank::from_toml_str(&src, instrument)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BankFile {
    instrument: String,
    scale: Vec<ScaleEntry>,
    items: Vec<ItemEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScaleEntry {
    label: String,
    value: i32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemEntry {
    id: u32,
    text: String,
    axis: Option<String>,
    polarity: Option<i8>,
    factor: Option<String>,
    reversed: Option<bool>,
    note: Option<String>,
}

impl BankFile {
    fn into_bank(self, instrument: Instrument) -> Result<QuestionBank, BankError> {
        let declared: Instrument = self
            .instrument
            .parse()
            .map_err(|e: crate::types::ParseTypeError| BankError::Schema(e.to_string()))?;
        if declared != instrument {
            return Err(BankError::Schema(format!(
                "file declares instrument {declared}, expected {instrument}"
            )));
        }
        let (labels, values) = self.scale.into_iter().map(|s| (s.label, s.value)).unzip();
        let scale = OptionScale::new(instrument, labels, values)?;
        check_scale_values(&scale)?;

        let mut questions = Vec::with_capacity(self.items.len());
        let mut notes = BTreeMap::new();
        let mut mbti = BTreeMap::new();
        let mut bfi_factor = BTreeMap::new();
        let mut bfi_reversed = BTreeSet::new();
        let mut seen = BTreeSet::new();

        for item in self.items {
            if !seen.insert(item.id) {
                return Err(BankError::Key(format!("duplicate question id {}", item.id)));
            }
            if item.text.trim().is_empty() {
                return Err(BankError::Schema(format!("question {} has empty text", item.id)));
            }
            match instrument {
                Instrument::Mbti => {
                    if item.factor.is_some() || item.reversed.is_some() {
                        return Err(BankError::Schema(format!(
                            "MBTI item {} carries BFI fields (factor/reversed)",
                            item.id
                        )));
                    }
                    let axis = item
                        .axis
                        .ok_or_else(|| BankError::Key(format!("MBTI item {} has no axis", item.id)))?;
                    let axis: Axis = axis.parse().map_err(|e: crate::types::ParseTypeError| BankError::Schema(e.to_string()))?;
                    let polarity = item
                        .polarity
                        .ok_or_else(|| BankError::Key(format!("MBTI item {} has no polarity", item.id)))?;
                    if polarity != 1 && polarity != -1 {
                        return Err(BankError::Schema(format!(
                            "MBTI item {} polarity must be 1 or -1, found {polarity}",
                            item.id
                        )));
                    }
                    mbti.insert(item.id, MbtiKeyEntry { axis, polarity });
                }
                Instrument::Bfi => {
                    if item.axis.is_some() || item.polarity.is_some() {
                        return Err(BankError::Schema(format!(
                            "BFI item {} carries MBTI fields (axis/polarity)",
                            item.id
                        )));
                    }
                    let code = item
                        .factor
                        .ok_or_else(|| BankError::Key(format!("BFI item {} has no factor", item.id)))?;
                    let factor = BigFiveFactor::from_code(&code)
                        .ok_or_else(|| BankError::Schema(format!("unknown factor code `{code}`")))?;
                    bfi_factor.insert(item.id, factor);
                    if item.reversed.unwrap_or(false) {
                        bfi_reversed.insert(item.id);
                    }
                }
            }
            if let Some(n) = item.note {
                notes.insert(item.id, n);
            }
            questions.push(Question { id: item.id, text: item.text, instrument });
        }

        questions.sort_by_key(|q| q.id);
        let expected = match instrument {
            Instrument::Mbti => MBTI_BANK_SIZE,
            Instrument::Bfi => BFI_BANK_SIZE,
        };
        let contiguous = questions.iter().enumerate().all(|(i, q)| q.id as usize == i + 1);
        if questions.len() != expected || !contiguous {
            return Err(BankError::Key(format!(
                "{instrument} bank must hold ids 1..={expected}, found {} items",
                questions.len()
            )));
        }

        let key = match instrument {
            Instrument::Mbti => {
                for axis in Axis::ALL {
                    let n = mbti.values().filter(|e: &&MbtiKeyEntry| e.axis == axis).count();
                    if n < MBTI_MIN_ITEMS_PER_AXIS {
                        return Err(BankError::Key(format!(
                            "axis {axis} has {n} items, need at least {MBTI_MIN_ITEMS_PER_AXIS}"
                        )));
                    }
                }
                ScoringKey::Mbti(MbtiKey { entries: mbti })
            }
            Instrument::Bfi => {
                for (factor, want) in BFI_FACTOR_COUNTS {
                    let n = bfi_factor.values().filter(|&&f| f == factor).count();
                    if n != want {
                        return Err(BankError::Key(format!(
                            "factor {factor} has {n} items, expected {want}"
                        )));
                    }
                }
                if bfi_reversed.iter().copied().ne(BFI_REVERSED) {
                    return Err(BankError::Key(format!(
                        "reversed item set {:?} differs from the standard key",
                        bfi_reversed
                    )));
                }
                ScoringKey::Bfi(BfiKey { item_factor: bfi_factor, reversed: bfi_reversed })
            }
        };

        Ok(QuestionBank { instrument, scale, questions, key, notes })
    }
}

fn check_scale_values(scale: &OptionScale) -> Result<(), BankError> {
    let want: &[i32] = match scale.instrument {
        Instrument::Mbti => &[3, 2, 1, 0, -1, -2, -3],
        Instrument::Bfi => &[1, 2, 3, 4, 5],
    };
    if scale.values != want {
        return Err(BankError::Schema(format!(
            "{} scale values must be {:?}, found {:?}",
            scale.instrument, want, scale.values
        )));
    }
    Ok(())
}
