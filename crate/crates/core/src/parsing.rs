//! Maps free-form completions onto exactly one option of a scale.
//!
//! Matching runs in three stages over the normalized reply (trimmed,
//! lower-cased, whitespace collapsed, surrounding punctuation and quotes
//! removed):
//!
//! 1. **Exact**: the whole reply equals a label.
//! 2. **Phrase**: labels are searched as whole-word phrases. An occurrence
//!    nested inside an occurrence of a longer label is discarded, so
//!    "Neither Agree nor Disagree" does not also count as "Agree". One
//!    distinct surviving label wins; two or more is ambiguous.
//! 3. **Fuzzy**: only when no phrase occurs. The reply, and every window of
//!    it with as many words as a label, is compared to that label by
//!    Levenshtein distance; the allowance is `ceil(0.15 * label length)`
//!    characters. Nested hits are discarded as in the phrase stage, and
//!    exactly one label must remain.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruments::OptionScale;

/// Fraction of a label's length tolerated as edit distance by the fuzzy stage.
pub const FUZZY_RATIO: f64 = 0.15;

pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchMethod {
    Exact,
    Phrase,
    Fuzzy,
    Reprompt,
}

impl fmt::Display for MatchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MatchMethod::Exact => "Exact",
            MatchMethod::Phrase => "Phrase",
            MatchMethod::Fuzzy => "Fuzzy",
            MatchMethod::Reprompt => "Reprompt",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub option_index: usize,
    pub label: String,
    pub raw_text: String,
    pub match_method: MatchMethod,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no option label found in reply")]
    NoMatch,
    #[error("reply matches several options: {}", .0.join(", "))]
    Ambiguous(Vec<String>),
}

impl ParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            ParseError::NoMatch => "NoMatch",
            ParseError::Ambiguous(_) => "Ambiguous",
        }
    }
}

#[derive(Debug, Error)]
pub enum AnswerError<E> {
    #[error("unparseable answer after {} attempts", .attempts.len())]
    Unparseable { attempts: Vec<String>, last_error: ParseError },
    #[error(transparent)]
    Client(E),
}

fn is_edge_punct(c: char) -> bool {
    !c.is_alphanumeric()
}

/// Trim, casefold, collapse whitespace, strip surrounding punctuation/quotes.
pub fn normalize(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let collapsed = lower.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.trim_matches(is_edge_punct).to_string()
}

fn words(s: &str) -> Vec<&str> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).collect()
}

struct Hit {
    label: usize,
    start: usize,
    end: usize,
}

fn phrase_hits(text_words: &[&str], label_words: &[Vec<String>]) -> Vec<Hit> {
    let mut hits = Vec::new();
    for (li, lw) in label_words.iter().enumerate() {
        let n = lw.len();
        if n == 0 || n > text_words.len() {
            continue;
        }
        for start in 0..=text_words.len() - n {
            if text_words[start..start + n].iter().zip(lw).all(|(a, b)| *a == b) {
                hits.push(Hit { label: li, start, end: start + n });
            }
        }
    }
    hits
}

/// Parses one reply against `scale`.
pub fn parse_option(raw: &str, scale: &OptionScale) -> Result<ParsedAnswer, ParseError> {
    let norm = normalize(raw);
    if norm.is_empty() {
        return Err(ParseError::NoMatch);
    }
    let labels: Vec<String> = scale.labels().iter().map(|l| normalize(l)).collect();
    let answer = |i: usize, m: MatchMethod| ParsedAnswer {
        option_index: i,
        label: scale.labels()[i].clone(),
        raw_text: raw.to_string(),
        match_method: m,
    };

    if let Some(i) = labels.iter().position(|l| *l == norm) {
        return Ok(answer(i, MatchMethod::Exact));
    }

    let text_words = words(&norm);
    let label_words: Vec<Vec<String>> =
        labels.iter().map(|l| words(l).into_iter().map(str::to_string).collect()).collect();
    let hits = phrase_hits(&text_words, &label_words);
    if let Some(i) = pick(&hits, scale)? {
        return Ok(answer(i, MatchMethod::Phrase));
    }

    let hits = fuzzy_hits(&text_words, &label_words);
    match pick(&hits, scale)? {
        Some(i) => Ok(answer(i, MatchMethod::Fuzzy)),
        None => Err(ParseError::NoMatch),
    }
}

/// Drops hits nested inside a longer hit of another label, then requires a
/// single distinct label among the rest.
fn pick(hits: &[Hit], scale: &OptionScale) -> Result<Option<usize>, ParseError> {
    let surviving: BTreeSet<usize> = hits
        .iter()
        .filter(|h| {
            !hits.iter().any(|o| {
                o.label != h.label && o.end - o.start > h.end - h.start && o.start <= h.start && h.end <= o.end
            })
        })
        .map(|h| h.label)
        .collect();
    match surviving.len() {
        0 => Ok(None),
        1 => Ok(surviving.into_iter().next()),
        _ => Err(ParseError::Ambiguous(surviving.iter().map(|&i| scale.labels()[i].clone()).collect())),
    }
}

fn fuzzy_hits(text_words: &[&str], label_words: &[Vec<String>]) -> Vec<Hit> {
    let joined = text_words.join(" ");
    let mut hits = Vec::new();
    for (li, lw) in label_words.iter().enumerate() {
        let target = lw.join(" ");
        let allowance = (FUZZY_RATIO * target.chars().count() as f64).ceil() as usize;
        let close = |cand: &str| strsim::levenshtein(cand, &target) <= allowance;
        if close(&joined) {
            hits.push(Hit { label: li, start: 0, end: text_words.len().max(lw.len()) });
        }
        let n = lw.len();
        if n == 0 || n > text_words.len() {
            continue;
        }
        for start in 0..=text_words.len() - n {
            if close(&text_words[start..start + n].join(" ")) {
                hits.push(Hit { label: li, start, end: start + n });
            }
        }
    }
    hits
}

/// The instruction appended to the question when re-asking.
pub fn strict_instruction(scale: &OptionScale) -> String {
    format!("Answer with exactly one of: {}", scale.labels().join(", "))
}

/// Asks, parses, and re-asks with a stricter instruction on failure.
///
/// `ask` receives `None` for the first attempt and the strict instruction
/// for each re-ask. Replies that cannot be parsed are kept so the failure
/// carries the whole transcript. Client errors abort immediately.
pub fn answer_with_retries<E>(
    mut ask: impl FnMut(Option<&str>) -> Result<String, E>,
    scale: &OptionScale,
    max_retries: u32,
) -> Result<(ParsedAnswer, Vec<String>), AnswerError<E>> {
    let strict = strict_instruction(scale);
    let mut attempts = Vec::new();
    let mut last_error = ParseError::NoMatch;
    for attempt in 0..=max_retries {
        let extra = (attempt > 0).then_some(strict.as_str());
        let reply = ask(extra).map_err(AnswerError::Client)?;
        attempts.push(reply.clone());
        match parse_option(&reply, scale) {
            Ok(mut parsed) => {
                if attempt > 0 {
                    parsed.match_method = MatchMethod::Reprompt;
                }
                return Ok((parsed, attempts));
            }
            Err(e) => last_error = e,
        }
    }
    Err(AnswerError::Unparseable { attempts, last_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::QuestionBank;
    use crate::types::Instrument;
    use proptest::prelude::*;

    fn mbti() -> OptionScale {
        QuestionBank::shipped(Instrument::Mbti).scale().clone()
    }

    fn bfi() -> OptionScale {
        QuestionBank::shipped(Instrument::Bfi).scale().clone()
    }

    /// Independent oracle: every label occurring as a substring (word-bounded),
    /// minus those only ever found inside a longer occurring label.
    fn oracle_labels(text: &str, scale: &OptionScale) -> Vec<String> {
        let t = format!(" {} ", text.to_lowercase().replace(|c: char| !c.is_alphanumeric(), " ").split_whitespace().collect::<Vec<_>>().join(" "));
        let found: Vec<&String> = scale
            .labels()
            .iter()
            .filter(|l| t.contains(&format!(" {} ", l.to_lowercase())))
            .collect();
        found
            .iter()
            .filter(|l| {
                let needle = format!(" {} ", l.to_lowercase());
                let mut stripped = t.clone();
                for other in &found {
                    if other.len() > l.len() && other.to_lowercase().contains(&l.to_lowercase()) {
                        stripped = stripped.replace(&format!(" {} ", other.to_lowercase()), " | ");
                    }
                }
                stripped.contains(&needle)
            })
            .map(|l| l.to_string())
            .collect()
    }

    #[test]
    fn phrase_in_prose() {
        let p = parse_option("I would say: Generally Agree.", &mbti()).unwrap();
        assert_eq!(p.label, "Generally Agree");
        assert_eq!(p.match_method, MatchMethod::Phrase);
    }

    #[test]
    fn exact_after_casefold() {
        let p = parse_option("agree", &mbti()).unwrap();
        assert_eq!(p.label, "Agree");
        assert_eq!(p.match_method, MatchMethod::Exact);
        let p = parse_option("  \"Agree Strongly.\" ", &bfi()).unwrap();
        assert_eq!(p.label, "Agree strongly");
        assert_eq!(p.match_method, MatchMethod::Exact);
    }

    #[test]
    fn nested_label_is_suppressed() {
        let raw = "Partially Agree — it depends";
        assert_eq!(oracle_labels(raw, &mbti()), vec!["Partially Agree".to_string()]);
        let p = parse_option(raw, &mbti()).unwrap();
        assert_eq!(p.label, "Partially Agree");
        assert_eq!(p.match_method, MatchMethod::Phrase);
        let p = parse_option("My answer is Neither Agree nor Disagree", &mbti()).unwrap();
        assert_eq!(p.label, "Neither Agree nor Disagree");
    }

    #[test]
    fn separate_labels_are_ambiguous() {
        let e = parse_option("Agree, or maybe Disagree", &mbti()).unwrap_err();
        assert_eq!(e, ParseError::Ambiguous(vec!["Agree".into(), "Disagree".into()]));
    }

    #[test]
    fn typo_goes_through_fuzzy() {
        let p = parse_option("Agre", &mbti()).unwrap();
        assert_eq!(p.label, "Agree");
        assert_eq!(p.match_method, MatchMethod::Fuzzy);
        let p = parse_option("I'd go with Generaly Agre", &mbti()).unwrap();
        assert_eq!(p.label, "Generally Agree");
        assert_eq!(p.match_method, MatchMethod::Fuzzy);
        // the phrase stage runs first: a correctly spelled shorter label wins
        let p = parse_option("Generaly Agree", &mbti()).unwrap();
        assert_eq!(p.label, "Agree");
        assert_eq!(p.match_method, MatchMethod::Phrase);
    }

    #[test]
    fn refusal_is_no_match() {
        assert_eq!(parse_option("As an AI, I have no personality.", &mbti()).unwrap_err(), ParseError::NoMatch);
        assert_eq!(parse_option("   ", &mbti()).unwrap_err(), ParseError::NoMatch);
    }

    #[test]
    fn every_label_parses_to_itself() {
        for scale in [mbti(), bfi()] {
            for (i, l) in scale.labels().iter().enumerate() {
                let p = parse_option(l, &scale).unwrap();
                assert_eq!(p.option_index, i);
                assert_eq!(p.match_method, MatchMethod::Exact);
            }
        }
    }

    #[test]
    fn retries_until_parseable() {
        let replies = ["Hmm, tough one", "Disagree"];
        let mut calls = 0;
        let mut extras = Vec::new();
        let (p, attempts) = answer_with_retries(
            |extra| {
                extras.push(extra.map(str::to_string));
                calls += 1;
                Ok::<_, ()>(replies[calls - 1].to_string())
            },
            &mbti(),
            3,
        )
        .unwrap();
        assert_eq!(p.label, "Disagree");
        assert_eq!(p.match_method, MatchMethod::Reprompt);
        assert_eq!(attempts, vec!["Hmm, tough one", "Disagree"]);
        assert_eq!(extras[0], None);
        assert!(extras[1].as_deref().unwrap().starts_with("Answer with exactly one of: Agree, Generally Agree"));
    }

    #[test]
    fn exhausted_retries_carry_transcript() {
        let err = answer_with_retries(|_| Ok::<_, ()>("no idea".to_string()), &mbti(), 2).unwrap_err();
        match err {
            AnswerError::Unparseable { attempts, last_error } => {
                assert_eq!(attempts.len(), 3);
                assert_eq!(last_error, ParseError::NoMatch);
            }
            AnswerError::Client(_) => panic!("unexpected client error"),
        }
    }

    #[test]
    fn zero_retries_clean_reply() {
        let mut calls = 0;
        let (p, _) = answer_with_retries(
            |_| {
                calls += 1;
                Ok::<_, ()>("Agree a little".to_string())
            },
            &bfi(),
            0,
        )
        .unwrap();
        assert_eq!(calls, 1);
        assert_eq!(p.label, "Agree a little");
    }

    #[test]
    fn client_errors_abort() {
        let err = answer_with_retries(|_| Err::<String, _>("down"), &mbti(), 3).unwrap_err();
        assert!(matches!(err, AnswerError::Client("down")));
    }

    proptest! {
        #[test]
        fn single_label_in_prose_wins(
            idx in 0usize..7,
            pre in "[A-Za-z ,.:]{0,30}",
            post in "[A-Za-z ,.:]{0,30}",
        ) {
            let scale = mbti();
            let label = &scale.labels()[idx];
            let raw = format!("{pre} {label} {post}");
            // only meaningful when the wrapper itself does not contain a label
            prop_assume!(oracle_labels(&format!("{pre} | {post}"), &scale).is_empty());
            prop_assume!(oracle_labels(&raw, &scale) == vec![label.clone()]);
            let p = parse_option(&raw, &scale).unwrap();
            prop_assert_eq!(&p.label, label);
        }

        #[test]
        fn parse_is_deterministic(raw in ".{0,60}") {
            let scale = bfi();
            prop_assert_eq!(parse_option(&raw, &scale), parse_option(&raw, &scale));
        }
    }
}
