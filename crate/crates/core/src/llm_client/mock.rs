use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{stable_hash, ChatBackend, ClientError, SamplingParams};
use crate::instruments::{QuestionBank, ScoringKey};
use crate::personas::Personas;
use crate::types::{BigFiveFactor, Instrument, MbtiType, Target};

const BFI_STEM: &str = "I see Myself as Someone Who... ";

/// Which personality the mock answers as.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MockTarget {
    /// Uniform-random answers.
    None,
    /// Always answers as this target, whatever the system message says.
    Fixed(Target),
    /// Reads the target out of the conditioning system message; answers
    /// uniformly at random when there is none.
    FollowSystem,
}

/// What the mock says when asked to describe a personality.
#[derive(Debug, Clone, PartialEq)]
pub enum AwarenessReply {
    /// The shipped reference description of the asked target.
    Echo,
    Fixed(String),
}

/// Deterministic synthetic respondent.
///
/// With `epsilon = 0` and a target, every answer is the key-aligned extreme
/// option (MBTI) or the 5/1/3 pattern (BFI). With probability `epsilon` an
/// answer is replaced by a uniform draw. Randomness is derived from
/// `rng_seed` and the request itself, so identical requests get identical
/// replies regardless of call order or thread.
pub struct MockPersona {
    pub target: MockTarget,
    pub epsilon: f64,
    pub rng_seed: u64,
    pub awareness: AwarenessReply,
    mbti: QuestionBank,
    bfi: QuestionBank,
    lookup: HashMap<String, (Instrument, u32)>,
    personas: Personas,
}

impl MockPersona {
    pub fn new(target: MockTarget, epsilon: f64, rng_seed: u64) -> Self {
        Self::with_banks(
            target,
            epsilon,
            rng_seed,
            QuestionBank::shipped(Instrument::Mbti),
            QuestionBank::shipped(Instrument::Bfi),
            Personas::shipped().clone(),
        )
    }

    pub fn with_banks(
        target: MockTarget,
        epsilon: f64,
        rng_seed: u64,
        mbti: QuestionBank,
        bfi: QuestionBank,
        personas: Personas,
    ) -> Self {
        assert!((0.0..=1.0).contains(&epsilon), "epsilon must be in [0, 1]");
        let mut lookup = HashMap::new();
        for bank in [&mbti, &bfi] {
            for q in bank.questions() {
                lookup.insert(q.text.trim().to_string(), (bank.instrument(), q.id));
            }
        }
        Self { target, epsilon, rng_seed, awareness: AwarenessReply::Echo, mbti, bfi, lookup, personas }
    }

    pub fn with_awareness(mut self, reply: AwarenessReply) -> Self {
        self.awareness = reply;
        self
    }

    fn bank(&self, instrument: Instrument) -> &QuestionBank {
        match instrument {
            Instrument::Mbti => &self.mbti,
            Instrument::Bfi => &self.bfi,
        }
    }

    fn find_question(&self, user: &str) -> Option<(Instrument, u32)> {
        let line = user.lines().find_map(|l| l.trim_start().strip_prefix("Q: "))?;
        let text = line.strip_prefix(BFI_STEM).unwrap_or(line).trim();
        self.lookup.get(text).copied()
    }

    fn target_for(&self, system: &str) -> Option<Target> {
        match self.target {
            MockTarget::None => None,
            MockTarget::Fixed(t) => Some(t),
            MockTarget::FollowSystem => target_in_system(system),
        }
    }

    /// The answer an ε=0 respondent with `target` gives to question `id`.
    pub fn aligned_label(&self, target: Target, instrument: Instrument, id: u32) -> &str {
        let bank = self.bank(instrument);
        let scale = bank.scale();
        let neutral = neutral_label(bank);
        match (bank.key(), target) {
            (ScoringKey::Mbti(key), Target::Type(t)) => match key.get(id) {
                Some(e) => {
                    if (e.polarity > 0) == t.is_first_pole(e.axis) {
                        scale.max_label()
                    } else {
                        scale.min_label()
                    }
                }
                None => neutral,
            },
            (ScoringKey::Bfi(key), Target::Factor(f)) => {
                if key.factor_of(id) != Some(f) {
                    neutral
                } else if key.is_reversed(id) {
                    scale.min_label()
                } else {
                    scale.max_label()
                }
            }
            _ => neutral,
        }
    }

    fn awareness_text(&self, user: &str) -> Option<String> {
        let target = target_in_awareness(user)?;
        Some(match &self.awareness {
            AwarenessReply::Echo => self.personas.reference_text(target),
            AwarenessReply::Fixed(s) => s.clone(),
        })
    }
}

fn neutral_label(bank: &QuestionBank) -> &str {
    let labels = bank.scale().labels();
    &labels[labels.len() / 2]
}

fn parse_type_prefix(s: &str) -> Option<MbtiType> {
    s.get(..4)?.parse().ok()
}

fn parse_factor_prefix(s: &str) -> Option<BigFiveFactor> {
    BigFiveFactor::ALL.into_iter().find(|f| s.starts_with(f.name()))
}

fn target_in_system(system: &str) -> Option<Target> {
    if let Some((_, rest)) = system.split_once("with the following personality: ") {
        return parse_type_prefix(rest).map(Target::Type);
    }
    if let Some((_, rest)) = system.split_once("exhibits the following personality factor: ") {
        return parse_factor_prefix(rest).map(Target::Factor);
    }
    None
}

fn target_in_awareness(user: &str) -> Option<Target> {
    if let Some((_, rest)) = user.split_once("main traits of the ") {
        return parse_type_prefix(rest).map(Target::Type);
    }
    if let Some((_, rest)) = user.split_once("examples of the personality factor ") {
        return parse_factor_prefix(rest).map(Target::Factor);
    }
    None
}

impl ChatBackend for MockPersona {
    fn chat(&self, model: &str, system: &str, user: &str, params: &SamplingParams) -> Result<String, ClientError> {
        let Some((instrument, id)) = self.find_question(user) else {
            return Ok(self.awareness_text(user).unwrap_or_else(|| "I am not sure how to answer that.".into()));
        };
        let seed = stable_hash([
            self.rng_seed.to_le_bytes().as_slice(),
            model.as_bytes(),
            system.as_bytes(),
            user.as_bytes(),
            &params.request_seed.unwrap_or(0).to_le_bytes(),
            &params.temperature.to_bits().to_le_bytes(),
        ]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = self.bank(instrument).scale().labels();
        let uniform = |rng: &mut ChaCha8Rng| labels[rng.gen_range(0..labels.len())].clone();
        let reply = match self.target_for(system) {
            None => uniform(&mut rng),
            Some(_) if self.epsilon > 0.0 && rng.gen_bool(self.epsilon) => uniform(&mut rng),
            Some(t) => self.aligned_label(t, instrument, id).to_string(),
        };
        Ok(reply)
    }
}
