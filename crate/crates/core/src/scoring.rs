//! BFI factor scoring and MBTI classification over the shipped keys.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruments::{BfiKey, MbtiKey, OptionScale, UnknownLabel};
use crate::types::{Axis, BigFiveFactor, MbtiType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("missing answers for items {0:?}")]
    MissingAnswer(Vec<u32>),
    #[error("value {value} for item {id} is outside 1..=5")]
    OutOfRange { id: u32, value: i32 },
    #[error(transparent)]
    UnknownLabel(#[from] UnknownLabel),
}

/// Mean score per factor, each in [1, 5].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfiScores {
    pub means: BTreeMap<BigFiveFactor, f64>,
}

impl BfiScores {
    pub fn get(&self, f: BigFiveFactor) -> f64 {
        self.means[&f]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MbtiOutcome {
    pub mbti_type: MbtiType,
    pub axis_sums: BTreeMap<Axis, i32>,
    /// Axes whose sum was zero and fell back to the I/N/F/P tie rule.
    pub tie_flags: BTreeSet<Axis>,
}

/// Reverse-keys a 1..=5 answer.
pub fn reverse_item(v: i32) -> Result<i32, ScoreError> {
    if (1..=5).contains(&v) {
        Ok(6 - v)
    } else {
        Err(ScoreError::OutOfRange { id: 0, value: v })
    }
}

/// Averages each factor's items, reverse-keying the reversed ones.
pub fn score_bfi(answers: &BTreeMap<u32, i32>, key: &BfiKey) -> Result<BfiScores, ScoreError> {
    let missing: Vec<u32> = key.item_factor().keys().copied().filter(|id| !answers.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(ScoreError::MissingAnswer(missing));
    }
    let mut sums: BTreeMap<BigFiveFactor, (i32, u32)> = BTreeMap::new();
    for (&id, &factor) in key.item_factor() {
        let raw = answers[&id];
        if !(1..=5).contains(&raw) {
            return Err(ScoreError::OutOfRange { id, value: raw });
        }
        let v = if key.is_reversed(id) { 6 - raw } else { raw };
        let e = sums.entry(factor).or_default();
        e.0 += v;
        e.1 += 1;
    }
    let means = sums.into_iter().map(|(f, (s, n))| (f, f64::from(s) / f64::from(n))).collect();
    Ok(BfiScores { means })
}

/// Signed per-axis sums of polarity × option value, then a letter per axis:
/// first pole when positive, second pole otherwise (zero is a tie and also
/// lands on I, N, F or P).
pub fn score_mbti(answers: &BTreeMap<u32, String>, key: &MbtiKey, scale: &OptionScale) -> Result<MbtiOutcome, ScoreError> {
    let missing: Vec<u32> = key.entries().keys().copied().filter(|id| !answers.contains_key(id)).collect();
    if !missing.is_empty() {
        return Err(ScoreError::MissingAnswer(missing));
    }
    let mut sums: BTreeMap<Axis, i32> = Axis::ALL.iter().map(|&a| (a, 0)).collect();
    for (id, entry) in key.entries() {
        let value = likert_weight(&answers[id], scale)?;
        *sums.get_mut(&entry.axis).expect("all axes present") += i32::from(entry.polarity) * value;
    }
    Ok(outcome_from_sums(sums))
}

pub(crate) fn outcome_from_sums(axis_sums: BTreeMap<Axis, i32>) -> MbtiOutcome {
    let mut first = [false; 4];
    let mut tie_flags = BTreeSet::new();
    for (&axis, &sum) in &axis_sums {
        first[axis.index()] = sum > 0;
        if sum == 0 {
            tie_flags.insert(axis);
        }
    }
    MbtiOutcome { mbti_type: MbtiType::from_poles(first), axis_sums, tie_flags }
}

/// Integer weight of an option label.
pub fn likert_weight(label: &str, scale: &OptionScale) -> Result<i32, ScoreError> {
    Ok(scale.option_value(label)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::QuestionBank;
    use crate::types::Instrument;
    use proptest::prelude::*;

    fn bfi_key() -> BfiKey {
        QuestionBank::shipped(Instrument::Bfi).bfi_key().unwrap().clone()
    }

    fn mbti() -> QuestionBank {
        QuestionBank::shipped(Instrument::Mbti)
    }

    /// Written straight from the published item lists, independent of BfiKey.
    fn brute_force_bfi(answers: &BTreeMap<u32, i32>) -> BTreeMap<BigFiveFactor, f64> {
        let lists: [(BigFiveFactor, &str); 5] = [
            (BigFiveFactor::Extraversion, "1, 6R, 11, 16, 21R, 26, 31R, 36"),
            (BigFiveFactor::Agreeableness, "2R, 7, 12R, 17, 22, 27R, 32, 37R, 42"),
            (BigFiveFactor::Conscientiousness, "3, 8R, 13, 18R, 23R, 28, 33, 38, 43R"),
            (BigFiveFactor::Neuroticism, "4, 9R, 14, 19, 24R, 29, 34R, 39"),
            (BigFiveFactor::Openness, "5, 10, 15, 20, 25, 30, 35R, 40, 41R, 44"),
        ];
        lists
            .iter()
            .map(|(f, list)| {
                let vals: Vec<f64> = list
                    .split(", ")
                    .map(|tok| {
                        let rev = tok.ends_with('R');
                        let id: u32 = tok.trim_end_matches('R').parse().unwrap();
                        let v = answers[&id];
                        f64::from(if rev { 6 - v } else { v })
                    })
                    .collect();
                (*f, vals.iter().sum::<f64>() / vals.len() as f64)
            })
            .collect()
    }

    fn constant(v: i32) -> BTreeMap<u32, i32> {
        (1..=44).map(|id| (id, v)).collect()
    }

    #[test]
    fn reverse_item_values() {
        assert_eq!(reverse_item(4).unwrap(), 2);
        assert_eq!(reverse_item(3).unwrap(), 3);
        assert_eq!(reverse_item(1).unwrap(), 5);
        assert!(reverse_item(0).is_err());
        assert!(reverse_item(6).is_err());
        for v in 1..=5 {
            assert_eq!(reverse_item(reverse_item(v).unwrap()).unwrap(), v);
        }
    }

    #[test]
    fn all_threes_score_three() {
        let s = score_bfi(&constant(3), &bfi_key()).unwrap();
        assert!(s.means.values().all(|&m| m == 3.0));
        assert_eq!(s.means.len(), 5);
    }

    #[test]
    fn all_fives_give_extraversion_three_and_a_half() {
        let answers = constant(5);
        let oracle = brute_force_bfi(&answers);
        assert_eq!(oracle[&BigFiveFactor::Extraversion], 3.5);
        let s = score_bfi(&answers, &bfi_key()).unwrap();
        assert_eq!(s.get(BigFiveFactor::Extraversion), 3.5);
        assert_eq!(s.means, oracle);
    }

    #[test]
    fn mock_pattern_for_extraversion() {
        let mut answers = constant(3);
        for id in [1, 11, 16, 26, 36] {
            answers.insert(id, 5);
        }
        for id in [6, 21, 31] {
            answers.insert(id, 1);
        }
        let oracle = brute_force_bfi(&answers);
        let s = score_bfi(&answers, &bfi_key()).unwrap();
        assert_eq!(s.means, oracle);
        assert_eq!(s.get(BigFiveFactor::Extraversion), 5.0);
        for f in BigFiveFactor::ALL.into_iter().skip(1) {
            assert_eq!(s.get(f), 3.0);
        }
    }

    #[test]
    fn bfi_errors() {
        let mut answers = constant(3);
        answers.remove(&7);
        assert_eq!(score_bfi(&answers, &bfi_key()).unwrap_err(), ScoreError::MissingAnswer(vec![7]));
        let mut answers = constant(3);
        answers.insert(9, 6);
        assert_eq!(score_bfi(&answers, &bfi_key()).unwrap_err(), ScoreError::OutOfRange { id: 9, value: 6 });
    }

    fn neutral() -> BTreeMap<u32, String> {
        (1..=60).map(|id| (id, "Neither Agree nor Disagree".to_string())).collect()
    }

    #[test]
    fn all_neutral_is_infp_with_ties() {
        let bank = mbti();
        let o = score_mbti(&neutral(), bank.mbti_key().unwrap(), bank.scale()).unwrap();
        assert_eq!(o.mbti_type.as_str(), "INFP");
        assert_eq!(o.tie_flags.len(), 4);
        assert!(o.axis_sums.values().all(|&s| s == 0));
    }

    #[test]
    fn extreme_first_poles_give_estj() {
        let bank = mbti();
        let key = bank.mbti_key().unwrap();
        let answers: BTreeMap<u32, String> = key
            .entries()
            .iter()
            .map(|(&id, e)| (id, if e.polarity > 0 { "Agree" } else { "Disagree" }.to_string()))
            .collect();
        // brute-force oracle: every item contributes +3 toward its first pole
        let mut expected: BTreeMap<Axis, i32> = BTreeMap::new();
        for e in key.entries().values() {
            *expected.entry(e.axis).or_default() += 3;
        }
        let o = score_mbti(&answers, key, bank.scale()).unwrap();
        assert_eq!(o.mbti_type.as_str(), "ESTJ");
        assert_eq!(o.axis_sums, expected);
        assert!(o.tie_flags.is_empty());
    }

    #[test]
    fn single_ei_perturbation_gives_enfp() {
        let bank = mbti();
        let mut answers = neutral();
        answers.insert(1, "Agree".into()); // EI, +1
        let o = score_mbti(&answers, bank.mbti_key().unwrap(), bank.scale()).unwrap();
        assert_eq!(o.axis_sums[&Axis::EI], 3);
        assert_eq!(o.mbti_type.as_str(), "ENFP");
        assert_eq!(o.tie_flags, [Axis::SN, Axis::TF, Axis::JP].into_iter().collect());
    }

    #[test]
    fn mbti_errors() {
        let bank = mbti();
        let mut answers = neutral();
        answers.remove(&60);
        assert_eq!(
            score_mbti(&answers, bank.mbti_key().unwrap(), bank.scale()).unwrap_err(),
            ScoreError::MissingAnswer(vec![60])
        );
        let mut answers = neutral();
        answers.insert(3, "Kinda".into());
        assert!(matches!(
            score_mbti(&answers, bank.mbti_key().unwrap(), bank.scale()),
            Err(ScoreError::UnknownLabel(_))
        ));
    }

    fn bfi_answers() -> impl Strategy<Value = BTreeMap<u32, i32>> {
        proptest::collection::vec(1..=5i32, 44).prop_map(|v| v.into_iter().enumerate().map(|(i, x)| (i as u32 + 1, x)).collect())
    }

    fn mbti_answers() -> impl Strategy<Value = Vec<usize>> {
        proptest::collection::vec(0usize..7, 60)
    }

    proptest! {
        #[test]
        fn bfi_matches_oracle(answers in bfi_answers()) {
            let s = score_bfi(&answers, &bfi_key()).unwrap();
            prop_assert_eq!(s.means, brute_force_bfi(&answers));
        }

        #[test]
        fn bfi_monotone(answers in bfi_answers(), id in 1u32..=44) {
            let key = bfi_key();
            prop_assume!(answers[&id] < 5);
            let before = score_bfi(&answers, &key).unwrap();
            let mut bumped = answers.clone();
            *bumped.get_mut(&id).unwrap() += 1;
            let after = score_bfi(&bumped, &key).unwrap();
            let f = key.factor_of(id).unwrap();
            if key.is_reversed(id) {
                prop_assert!(after.get(f) < before.get(f));
            } else {
                prop_assert!(after.get(f) > before.get(f));
            }
            for g in BigFiveFactor::ALL.into_iter().filter(|&g| g != f) {
                prop_assert_eq!(after.get(g), before.get(g));
            }
            prop_assert!(after.means.values().all(|m| (1.0..=5.0).contains(m)));
        }

        #[test]
        fn ei_changes_leave_other_letters(base in mbti_answers(), other in mbti_answers()) {
            let bank = mbti();
            let key = bank.mbti_key().unwrap();
            let labels = bank.scale().labels();
            let to_map = |v: &[usize]| -> BTreeMap<u32, String> {
                v.iter().enumerate().map(|(i, &x)| (i as u32 + 1, labels[x].clone())).collect()
            };
            let a = to_map(&base);
            let mut b = a.clone();
            for id in key.items_on(Axis::EI) {
                b.insert(id, labels[other[id as usize - 1]].clone());
            }
            let oa = score_mbti(&a, key, bank.scale()).unwrap();
            let ob = score_mbti(&b, key, bank.scale()).unwrap();
            for axis in [Axis::SN, Axis::TF, Axis::JP] {
                prop_assert_eq!(oa.mbti_type.letter(axis), ob.mbti_type.letter(axis));
            }
        }

        #[test]
        fn scaling_weights_keeps_type(answers in mbti_answers(), k in 1i32..10) {
            let bank = mbti();
            let key = bank.mbti_key().unwrap();
            let scale = bank.scale();
            let scaled = OptionScale::new(
                Instrument::Mbti,
                scale.labels().to_vec(),
                scale.values().iter().map(|v| v * k).collect(),
            ).unwrap();
            let map: BTreeMap<u32, String> =
                answers.iter().enumerate().map(|(i, &x)| (i as u32 + 1, scale.labels()[x].clone())).collect();
            let a = score_mbti(&map, key, scale).unwrap();
            let b = score_mbti(&map, key, &scaled).unwrap();
            prop_assert_eq!(a.mbti_type, b.mbti_type);
            prop_assert_eq!(a.tie_flags, b.tie_flags);
        }
    }
}
