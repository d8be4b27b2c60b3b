//! The 16 MBTI types with their seven-feature trait profiles, the five Big
//! Five factors with their three-part profiles, the role catalog, and the
//! curated three roles per target.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use serde::Deserialize;
use thiserror::Error;

pub use crate::types::{BigFiveFactor, MbtiType, Target};

const PERSONAS: &str = include_str!("../data/personas.toml");

/// Reading order of the 16 types in the reference table.
const TYPE_ORDER: [&str; 16] = [
    "ESTP", "ESFP", "ENFP", "ENTP", "ESTJ", "ESFJ", "ENFJ", "ENTJ", "ISTJ", "ISFJ", "INFJ", "INTJ", "ISTP", "ISFP",
    "INFP", "INTP",
];

/// Feature names in the order they are rendered.
pub const TRAIT_FEATURES: [&str; 7] = [
    "General Traits",
    "Strengths",
    "Potential development areas",
    "Typical characteristics",
    "Careers & career ideas",
    "Under stress",
    "Relationships",
];

#[derive(Debug, Error)]
pub enum PersonasError {
    #[error("cannot read personas file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("personas schema error: {0}")]
    Schema(String),
}

/// The 16 MBTI types in table reading order.
pub fn all_types() -> Vec<MbtiType> {
    TYPE_ORDER.iter().map(|s| s.parse().expect("valid type code")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraitProfile {
    pub mbti_type: MbtiType,
    /// (feature name, text) in [`TRAIT_FEATURES`] order.
    pub features: Vec<(String, String)>,
    pub roles: [String; 3],
}

impl TraitProfile {
    pub fn feature(&self, name: &str) -> Option<&str> {
        self.features.iter().find(|(n, _)| n == name).map(|(_, t)| t.as_str())
    }

    /// `Feature: text` lines, one per feature.
    pub fn render(&self) -> String {
        render_lines(self.features.iter().map(|(n, t)| (n.as_str(), t.as_str())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorProfile {
    pub factor: BigFiveFactor,
    pub verbal_labels: String,
    pub conceptual_definition: String,
    pub behavioral_examples: String,
    pub roles: [String; 3],
}

impl FactorProfile {
    pub fn render(&self) -> String {
        render_lines(
            [
                ("Verbal labels", self.verbal_labels.as_str()),
                ("Conceptual definition", self.conceptual_definition.as_str()),
                ("Behavioral examples", self.behavioral_examples.as_str()),
            ]
            .into_iter(),
        )
    }
}

fn render_lines<'a>(parts: impl Iterator<Item = (&'a str, &'a str)>) -> String {
    parts.map(|(n, t)| format!("{n}: {t}")).collect::<Vec<_>>().join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoleAssignment {
    pub target: Target,
    pub roles: [String; 3],
}

/// All persona data, immutable once loaded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Personas {
    role_catalog: Vec<String>,
    types: Vec<TraitProfile>,
    factors: Vec<FactorProfile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonasFile {
    role_catalog: Vec<String>,
    types: Vec<TypeEntry>,
    factors: Vec<FactorEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TypeEntry {
    code: String,
    general_traits: String,
    strengths: String,
    potential_development_areas: String,
    typical_characteristics: String,
    careers: String,
    under_stress: String,
    relationships: String,
    roles: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FactorEntry {
    name: String,
    verbal_labels: String,
    conceptual_definition: String,
    behavioral_examples: String,
    roles: Vec<String>,
}

fn three_roles(roles: Vec<String>, who: &str) -> Result<[String; 3], PersonasError> {
    let n = roles.len();
    <[String; 3]>::try_from(roles)
        .map_err(|_| PersonasError::Schema(format!("{who} must have exactly 3 roles, found {n}")))
}

fn non_empty(s: &str, what: &str) -> Result<(), PersonasError> {
    if s.trim().is_empty() {
        Err(PersonasError::Schema(format!("{what} is empty")))
    } else {
        Ok(())
    }
}

impl Personas {
    /// The data compiled into the library. Parsed once per process.
    pub fn shipped() -> &'static Personas {
        static SHIPPED: OnceLock<Personas> = OnceLock::new();
        SHIPPED.get_or_init(|| Personas::from_toml_str(PERSONAS).expect("shipped personas are valid"))
    }

    pub fn load(path: &Path) -> Result<Self, PersonasError> {
        let src = std::fs::read_to_string(path).map_err(|source| PersonasError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&src)
    }

    pub fn from_toml_str(src: &str) -> Result<Self, PersonasError> {
        let file: PersonasFile = toml::from_str(src).map_err(|e| PersonasError::Schema(e.to_string()))?;

        let mut types = Vec::with_capacity(16);
        for t in file.types {
            let code: MbtiType = t.code.parse().map_err(|e: crate::types::ParseTypeError| PersonasError::Schema(e.to_string()))?;
            let texts = [
                t.general_traits,
                t.strengths,
                t.potential_development_areas,
                t.typical_characteristics,
                t.careers,
                t.under_stress,
                t.relationships,
            ];
            for (name, text) in TRAIT_FEATURES.iter().zip(&texts) {
                non_empty(text, &format!("{code} {name}"))?;
            }
            let features = TRAIT_FEATURES.iter().map(|n| n.to_string()).zip(texts).collect();
            types.push(TraitProfile { mbti_type: code, features, roles: three_roles(t.roles, code.as_str())? });
        }
        let mut present: Vec<MbtiType> = types.iter().map(|p| p.mbti_type).collect();
        present.sort();
        let mut want = all_types();
        want.sort();
        if present != want {
            return Err(PersonasError::Schema("personas must list each of the 16 types exactly once".into()));
        }
        types.sort_by_key(|p| TYPE_ORDER.iter().position(|c| *c == p.mbti_type.as_str()));

        let mut factors = Vec::with_capacity(5);
        for f in file.factors {
            let factor: BigFiveFactor = f.name.parse().map_err(|e: crate::types::ParseTypeError| PersonasError::Schema(e.to_string()))?;
            non_empty(&f.verbal_labels, &format!("{factor} verbal labels"))?;
            non_empty(&f.conceptual_definition, &format!("{factor} conceptual definition"))?;
            non_empty(&f.behavioral_examples, &format!("{factor} behavioral examples"))?;
            factors.push(FactorProfile {
                factor,
                verbal_labels: f.verbal_labels,
                conceptual_definition: f.conceptual_definition,
                behavioral_examples: f.behavioral_examples,
                roles: three_roles(f.roles, factor.name())?,
            });
        }
        let names: BTreeSet<BigFiveFactor> = factors.iter().map(|f| f.factor).collect();
        if factors.len() != 5 || names.len() != 5 {
            return Err(PersonasError::Schema("personas must list each of the 5 factors exactly once".into()));
        }
        factors.sort_by_key(|f| f.factor);

        Ok(Personas { role_catalog: file.role_catalog, types, factors })
    }

    pub fn role_catalog(&self) -> &[String] {
        &self.role_catalog
    }

    pub fn traits_for(&self, t: MbtiType) -> &TraitProfile {
        self.types.iter().find(|p| p.mbti_type == t).expect("every type has a profile")
    }

    pub fn factor_profile(&self, f: BigFiveFactor) -> &FactorProfile {
        self.factors.iter().find(|p| p.factor == f).expect("every factor has a profile")
    }

    pub fn roles_for(&self, target: Target) -> &[String; 3] {
        match target {
            Target::Type(t) => &self.traits_for(t).roles,
            Target::Factor(f) => &self.factor_profile(f).roles,
        }
    }

    /// The 21 curated assignments, types first.
    pub fn assignments(&self) -> Vec<RoleAssignment> {
        let types = self.types.iter().map(|p| RoleAssignment { target: p.mbti_type.into(), roles: p.roles.clone() });
        let factors = self.factors.iter().map(|p| RoleAssignment { target: p.factor.into(), roles: p.roles.clone() });
        types.chain(factors).collect()
    }

    /// Reference description used for awareness comparisons and for the
    /// conditioning details.
    pub fn reference_text(&self, target: Target) -> String {
        match target {
            Target::Type(t) => self.traits_for(t).render(),
            Target::Factor(f) => self.factor_profile(f).render(),
        }
    }

    pub fn targets(&self, instrument: crate::types::Instrument) -> Vec<Target> {
        match instrument {
            crate::types::Instrument::Mbti => all_types().into_iter().map(Target::Type).collect(),
            crate::types::Instrument::Bfi => BigFiveFactor::ALL.into_iter().map(Target::Factor).collect(),
        }
    }
}

/// Shorthand for `Personas::shipped().traits_for(t)`.
pub fn traits_for(t: MbtiType) -> &'static TraitProfile {
    Personas::shipped().traits_for(t)
}

/// Shorthand for `Personas::shipped().roles_for(target)`.
pub fn roles_for(target: Target) -> &'static [String; 3] {
    Personas::shipped().roles_for(target)
}
