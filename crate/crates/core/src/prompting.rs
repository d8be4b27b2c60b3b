//! Interview prompts and system messages for the three conditioning regimes.
//!
//! Templates are plain text files with `{NAME}` placeholders. The defaults
//! are compiled in; a directory holding any subset of the same file names
//! overrides them (useful for prompt ablations). Only the placeholders a
//! template is documented to take are substituted; every other brace is
//! literal text.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instruments::Question;
use crate::personas::Personas;
use crate::types::{Instrument, Target};

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("invalid conditioning: {0}")]
    InvalidSpec(String),
    #[error("cannot read template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Unconditioned,
    Personality,
    RolePersonality,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Unconditioned => "unconditioned",
            Regime::Personality => "personality",
            Regime::RolePersonality => "role_personality",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unconditioned" | "none" => Ok(Regime::Unconditioned),
            "personality" => Ok(Regime::Personality),
            "role" | "role_personality" | "role+personality" => Ok(Regime::RolePersonality),
            other => Err(PromptError::InvalidSpec(format!("unknown regime `{other}`"))),
        }
    }
}

/// How an agent is conditioned before taking a test.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConditioningSpec {
    pub regime: Regime,
    pub instrument: Instrument,
    pub target: Option<Target>,
    pub role: Option<String>,
}

impl ConditioningSpec {
    pub fn unconditioned(instrument: Instrument) -> Self {
        Self { regime: Regime::Unconditioned, instrument, target: None, role: None }
    }

    pub fn personality(target: Target) -> Self {
        Self { regime: Regime::Personality, instrument: target.instrument(), target: Some(target), role: None }
    }

    pub fn role_personality(target: Target, role: impl Into<String>) -> Self {
        Self {
            regime: Regime::RolePersonality,
            instrument: target.instrument(),
            target: Some(target),
            role: Some(role.into()),
        }
    }

    pub fn validate(&self, personas: &Personas) -> Result<(), PromptError> {
        if let Some(t) = self.target {
            if t.instrument() != self.instrument {
                return Err(PromptError::InvalidSpec(format!(
                    "target {t} does not belong to the {} instrument",
                    self.instrument
                )));
            }
        }
        match (self.regime, self.target, &self.role) {
            (Regime::Unconditioned, None, None) => Ok(()),
            (Regime::Unconditioned, _, _) => {
                Err(PromptError::InvalidSpec("unconditioned prompting takes neither target nor role".into()))
            }
            (Regime::Personality, Some(_), None) => Ok(()),
            (Regime::Personality, None, _) => Err(PromptError::InvalidSpec("personality prompting needs a target".into())),
            (Regime::Personality, Some(_), Some(_)) => {
                Err(PromptError::InvalidSpec("personality prompting takes no role".into()))
            }
            (Regime::RolePersonality, Some(t), Some(role)) => {
                if personas.roles_for(t).iter().any(|r| r == role) {
                    Ok(())
                } else {
                    Err(PromptError::InvalidSpec(format!("`{role}` is not one of the roles assigned to {t}")))
                }
            }
            (Regime::RolePersonality, _, _) => {
                Err(PromptError::InvalidSpec("role prompting needs both a target and a role".into()))
            }
        }
    }

    /// Stable textual form, e.g. `mbti/role_personality/ENFJ/Teacher`.
    pub fn canonical(&self) -> String {
        let mut s = format!("{}/{}", self.instrument, self.regime);
        if let Some(t) = self.target {
            s.push('/');
            s.push_str(&t.to_string());
        }
        if let Some(r) = &self.role {
            s.push('/');
            s.push_str(r);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system_interviewee: String,
    pub system_interviewer: String,
    pub user_question: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemplateName {
    MbtiQuestion,
    BfiQuestion,
    MbtiInterviewer,
    BfiInterviewer,
    MbtiIntervieweePersonality,
    MbtiIntervieweeRole,
    BfiIntervieweePersonality,
    BfiIntervieweeRole,
    MbtiAwareness,
    BfiAwareness,
    MbtiRoleCategorization,
    BfiRoleCategorization,
}

impl TemplateName {
    pub const ALL: [TemplateName; 12] = [
        TemplateName::MbtiQuestion,
        TemplateName::BfiQuestion,
        TemplateName::MbtiInterviewer,
        TemplateName::BfiInterviewer,
        TemplateName::MbtiIntervieweePersonality,
        TemplateName::MbtiIntervieweeRole,
        TemplateName::BfiIntervieweePersonality,
        TemplateName::BfiIntervieweeRole,
        TemplateName::MbtiAwareness,
        TemplateName::BfiAwareness,
        TemplateName::MbtiRoleCategorization,
        TemplateName::BfiRoleCategorization,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            TemplateName::MbtiQuestion => "mbti_question.txt",
            TemplateName::BfiQuestion => "bfi_question.txt",
            TemplateName::MbtiInterviewer => "mbti_interviewer.txt",
            TemplateName::BfiInterviewer => "bfi_interviewer.txt",
            TemplateName::MbtiIntervieweePersonality => "mbti_interviewee_personality.txt",
            TemplateName::MbtiIntervieweeRole => "mbti_interviewee_role.txt",
            TemplateName::BfiIntervieweePersonality => "bfi_interviewee_personality.txt",
            TemplateName::BfiIntervieweeRole => "bfi_interviewee_role.txt",
            TemplateName::MbtiAwareness => "mbti_awareness.txt",
            TemplateName::BfiAwareness => "bfi_awareness.txt",
            TemplateName::MbtiRoleCategorization => "mbti_role_categorization.txt",
            TemplateName::BfiRoleCategorization => "bfi_role_categorization.txt",
        }
    }

    fn placeholders(self) -> &'static [&'static str] {
        match self {
            TemplateName::MbtiQuestion | TemplateName::BfiQuestion => &["QUESTION"],
            TemplateName::MbtiInterviewer | TemplateName::BfiInterviewer => &[],
            TemplateName::MbtiIntervieweePersonality => &["PERSONALITY", "PERSONALITY_TRAITS"],
            TemplateName::MbtiIntervieweeRole => &["ROLE", "PERSONALITY", "PERSONALITY_TRAITS"],
            TemplateName::BfiIntervieweePersonality => &["FACTOR", "DETAILS"],
            TemplateName::BfiIntervieweeRole => &["ROLE", "FACTOR", "DETAILS"],
            TemplateName::MbtiAwareness => &["PERSONALITY"],
            TemplateName::BfiAwareness => &["FACTOR"],
            TemplateName::MbtiRoleCategorization | TemplateName::BfiRoleCategorization => &["ROLES"],
        }
    }

    fn default_text(self) -> &'static str {
        match self {
            TemplateName::MbtiQuestion => include_str!("../data/templates/mbti_question.txt"),
            TemplateName::BfiQuestion => include_str!("../data/templates/bfi_question.txt"),
            TemplateName::MbtiInterviewer => include_str!("../data/templates/mbti_interviewer.txt"),
            TemplateName::BfiInterviewer => include_str!("../data/templates/bfi_interviewer.txt"),
            TemplateName::MbtiIntervieweePersonality => {
                include_str!("../data/templates/mbti_interviewee_personality.txt")
            }
            TemplateName::MbtiIntervieweeRole => include_str!("../data/templates/mbti_interviewee_role.txt"),
            TemplateName::BfiIntervieweePersonality => include_str!("../data/templates/bfi_interviewee_personality.txt"),
            TemplateName::BfiIntervieweeRole => include_str!("../data/templates/bfi_interviewee_role.txt"),
            TemplateName::MbtiAwareness => include_str!("../data/templates/mbti_awareness.txt"),
            TemplateName::BfiAwareness => include_str!("../data/templates/bfi_awareness.txt"),
            TemplateName::MbtiRoleCategorization => include_str!("../data/templates/mbti_role_categorization.txt"),
            TemplateName::BfiRoleCategorization => include_str!("../data/templates/bfi_role_categorization.txt"),
        }
    }
}

/// Replaces each documented `{NAME}` in one left-to-right pass, so values
/// that themselves contain braces are never re-expanded.
fn fill(template: &str, allowed: &[&str], values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            if !allowed.contains(&name) {
                return None;
            }
            values.iter().find(|(n, _)| *n == name).map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// The full template set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    texts: Vec<String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self { texts: TemplateName::ALL.iter().map(|t| t.default_text().to_string()).collect() }
    }
}

impl Templates {
    /// Defaults, with any same-named file in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, PromptError> {
        let mut t = Self::default();
        for (i, name) in TemplateName::ALL.iter().enumerate() {
            let path = dir.join(name.file_name());
            if path.exists() {
                t.texts[i] = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
            }
        }
        Ok(t)
    }

    pub fn get(&self, name: TemplateName) -> &str {
        let i = TemplateName::ALL.iter().position(|n| *n == name).expect("listed template");
        &self.texts[i]
    }

    fn render(&self, name: TemplateName, values: &[(&str, &str)]) -> String {
        fill(self.get(name), name.placeholders(), values)
    }

    pub fn question_prompt(&self, instrument: Instrument, q: &Question) -> String {
        debug_assert_eq!(q.instrument, instrument);
        let name = match instrument {
            Instrument::Mbti => TemplateName::MbtiQuestion,
            Instrument::Bfi => TemplateName::BfiQuestion,
        };
        self.render(name, &[("QUESTION", &q.text)])
    }

    pub fn interviewer_message(&self, instrument: Instrument) -> String {
        match instrument {
            Instrument::Mbti => self.get(TemplateName::MbtiInterviewer).to_string(),
            Instrument::Bfi => self.get(TemplateName::BfiInterviewer).to_string(),
        }
    }

    /// (interviewee, interviewer) system messages. The interviewee message
    /// is empty for unconditioned prompting.
    pub fn system_messages(&self, spec: &ConditioningSpec, personas: &Personas) -> Result<(String, String), PromptError> {
        spec.validate(personas)?;
        let interviewer = self.interviewer_message(spec.instrument);
        let Some(target) = spec.target else {
            return Ok((String::new(), interviewer));
        };
        let role = spec.role.as_deref();
        let interviewee = match target {
            Target::Type(t) => {
                let name = t.to_string();
                let traits = personas.traits_for(t).render();
                match role {
                    None => self.render(
                        TemplateName::MbtiIntervieweePersonality,
                        &[("PERSONALITY", &name), ("PERSONALITY_TRAITS", &traits)],
                    ),
                    Some(r) => self.render(
                        TemplateName::MbtiIntervieweeRole,
                        &[("ROLE", r), ("PERSONALITY", &name), ("PERSONALITY_TRAITS", &traits)],
                    ),
                }
            }
            Target::Factor(f) => {
                let details = personas.factor_profile(f).render();
                match role {
                    None => self.render(
                        TemplateName::BfiIntervieweePersonality,
                        &[("FACTOR", f.name()), ("DETAILS", &details)],
                    ),
                    Some(r) => self.render(
                        TemplateName::BfiIntervieweeRole,
                        &[("ROLE", r), ("FACTOR", f.name()), ("DETAILS", &details)],
                    ),
                }
            }
        };
        Ok((interviewee, interviewer))
    }

    pub fn awareness_prompt(&self, target: Target) -> String {
        match target {
            Target::Type(t) => self.render(TemplateName::MbtiAwareness, &[("PERSONALITY", t.as_str())]),
            Target::Factor(f) => self.render(TemplateName::BfiAwareness, &[("FACTOR", f.name())]),
        }
    }

    /// Role-categorization prompt over the catalog. Shipped for reference;
    /// the pipeline uses the curated assignments instead of running it.
    pub fn role_categorization_prompt(&self, instrument: Instrument, personas: &Personas) -> String {
        let roles = personas.role_catalog().join(", ");
        let name = match instrument {
            Instrument::Mbti => TemplateName::MbtiRoleCategorization,
            Instrument::Bfi => TemplateName::BfiRoleCategorization,
        };
        self.render(name, &[("ROLES", &roles)])
    }

    pub fn render_prompt(
        &self,
        spec: &ConditioningSpec,
        q: &Question,
        personas: &Personas,
    ) -> Result<RenderedPrompt, PromptError> {
        let (system_interviewee, system_interviewer) = self.system_messages(spec, personas)?;
        Ok(RenderedPrompt { system_interviewee, system_interviewer, user_question: self.question_prompt(spec.instrument, q) })
    }
}

pub fn render_question_prompt(instrument: Instrument, q: &Question) -> String {
    Templates::default().question_prompt(instrument, q)
}

pub fn render_system_message(spec: &ConditioningSpec) -> Result<(String, String), PromptError> {
    Templates::default().system_messages(spec, Personas::shipped())
}

pub fn render_awareness_prompt(target: Target) -> String {
    Templates::default().awareness_prompt(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instruments::QuestionBank;
    use crate::types::{BigFiveFactor, MbtiType};

    fn ty(s: &str) -> Target {
        Target::Type(s.parse::<MbtiType>().unwrap())
    }

    #[test]
    fn mbti_question_prompt() {
        let bank = QuestionBank::shipped(Instrument::Mbti);
        let p = render_question_prompt(Instrument::Mbti, &bank.questions()[0]);
        assert!(p.contains("Q: You regularly make new friends.\n"));
        for l in bank.scale().labels() {
            assert!(p.contains(l.as_str()), "{l}");
        }
        assert!(p.ends_with("Please refrain from giving additional considerations to your choices."));
        assert!(p.starts_with("You are participating in a personality traits assessment"));
    }

    #[test]
    fn bfi_question_prompt_lists_five_options() {
        let bank = QuestionBank::shipped(Instrument::Bfi);
        let p = render_question_prompt(Instrument::Bfi, bank.question(31).unwrap());
        assert!(p.contains("I see Myself as Someone Who... Is sometimes shy, inhibited."));
        for q in bank.questions() {
            let p = render_question_prompt(Instrument::Bfi, q).to_lowercase();
            let set = p.split('{').nth(1).unwrap().split('}').next().unwrap().to_string();
            let opts: Vec<&str> = set.split(", ").collect();
            assert_eq!(opts.len(), 5);
            for l in bank.scale().labels() {
                assert!(opts.contains(&l.to_lowercase().as_str()));
            }
        }
    }

    #[test]
    fn system_messages_per_regime() {
        let (ee, er) = render_system_message(&ConditioningSpec::personality(ty("INTJ"))).unwrap();
        assert!(ee.starts_with("You are a human with the following personality: INTJ.\nYour traits are the following: General Traits: Have original minds"));
        assert_eq!(er, "You are an interviewer for the MBTI personality test.");

        let spec = ConditioningSpec::role_personality(BigFiveFactor::Neuroticism.into(), "Artist");
        let (ee, _) = render_system_message(&spec).unwrap();
        assert!(ee.starts_with(
            "You are a Artist who consistently exhibits the following personality factor: Neuroticism."
        ));

        let (ee, er) = render_system_message(&ConditioningSpec::unconditioned(Instrument::Bfi)).unwrap();
        assert_eq!(ee, "");
        assert_eq!(er, "You are an interviewer for the BFI personality test.");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let p = Personas::shipped();
        let bad = [
            ConditioningSpec { regime: Regime::Personality, instrument: Instrument::Mbti, target: None, role: None },
            ConditioningSpec::role_personality(ty("ENFJ"), "Barber"),
            ConditioningSpec { regime: Regime::RolePersonality, instrument: Instrument::Mbti, target: Some(ty("ENFJ")), role: None },
            ConditioningSpec { regime: Regime::Unconditioned, instrument: Instrument::Mbti, target: Some(ty("ENFJ")), role: None },
            ConditioningSpec { regime: Regime::Personality, instrument: Instrument::Bfi, target: Some(ty("ENFJ")), role: None },
        ];
        for spec in bad {
            assert!(matches!(spec.validate(p), Err(PromptError::InvalidSpec(_))), "{spec:?}");
            assert!(render_system_message(&spec).is_err());
        }
    }

    #[test]
    fn awareness_prompts() {
        assert_eq!(
            render_awareness_prompt(ty("ENFJ")),
            "Explain, concerning the MBTI personality test, what are the main traits of the ENFJ personality."
        );
        assert!(render_awareness_prompt(BigFiveFactor::Openness.into()).contains("personality factor Openness"));
        assert!(render_awareness_prompt(ty("ISTP")).contains("MBTI personality test"));
    }

    #[test]
    fn rendering_is_deterministic_and_conditioning_stays_out_of_question() {
        let bank = QuestionBank::shipped(Instrument::Mbti);
        let spec = ConditioningSpec::role_personality(ty("ENFJ"), "Teacher");
        let t = Templates::default();
        let a = t.render_prompt(&spec, &bank.questions()[4], Personas::shipped()).unwrap();
        let b = t.render_prompt(&spec, &bank.questions()[4], Personas::shipped()).unwrap();
        assert_eq!(a, b);
        assert!(!a.user_question.contains("ENFJ"));
        assert!(!a.user_question.contains("Teacher"));
    }

    #[test]
    fn fill_leaves_unknown_braces_alone() {
        assert_eq!(fill("{A} {B} {A", &["A"], &[("A", "{B}")]), "{B} {B} {A");
    }

    #[test]
    fn override_dir_replaces_single_template() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("mbti_awareness.txt"), "Describe {PERSONALITY}.").unwrap();
        let t = Templates::with_overrides(dir.path()).unwrap();
        assert_eq!(t.awareness_prompt(ty("INFP")), "Describe INFP.");
        assert_eq!(t.get(TemplateName::BfiInterviewer), Templates::default().get(TemplateName::BfiInterviewer));
    }

    #[test]
    fn role_categorization_lists_catalog() {
        let p = Templates::default().role_categorization_prompt(Instrument::Mbti, Personas::shipped());
        assert!(p.contains("Barber, Coach, Business person"));
        assert!(p.ends_with("Handball player, Sociologist."));
    }

    #[test]
    fn canonical_strings() {
        assert_eq!(ConditioningSpec::unconditioned(Instrument::Mbti).canonical(), "mbti/unconditioned");
        assert_eq!(
            ConditioningSpec::role_personality(ty("ENFJ"), "Teacher").canonical(),
            "mbti/role_personality/ENFJ/Teacher"
        );
    }
}
