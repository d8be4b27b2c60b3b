//! Domain vocabulary shared by every module: instruments, MBTI axes and
//! types, Big Five factors, and conditioning targets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseTypeError {
    #[error("invalid MBTI type code `{0}`")]
    MbtiType(String),
    #[error("unknown Big Five factor `{0}`")]
    Factor(String),
    #[error("unknown instrument `{0}` (expected mbti or bfi)")]
    Instrument(String),
    #[error("unknown MBTI axis `{0}` (expected EI, SN, TF or JP)")]
    Axis(String),
    #[error("`{0}` is neither an MBTI type nor a Big Five factor")]
    Target(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Instrument {
    Mbti,
    Bfi,
}

impl Instrument {
    pub const ALL: [Instrument; 2] = [Instrument::Mbti, Instrument::Bfi];

    pub fn as_str(self) -> &'static str {
        match self {
            Instrument::Mbti => "mbti",
            Instrument::Bfi => "bfi",
        }
    }

    /// Upper-case name as it appears in prompts.
    pub fn display_name(self) -> &'static str {
        match self {
            Instrument::Mbti => "MBTI",
            Instrument::Bfi => "BFI",
        }
    }
}

impl fmt::Display for Instrument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Instrument {
    type Err = ParseTypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mbti" => Ok(Instrument::Mbti),
            "bfi" => Ok(Instrument::Bfi),
            _ => Err(ParseTypeError::Instrument(s.to_string())),
        }
    }
}

/// One of the four MBTI dichotomies. The first pole of each axis is
/// E, S, T and J respectively.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    EI,
    SN,
    TF,
    JP,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::EI, Axis::SN, Axis::TF, Axis::JP];

    pub fn index(self) -> usize {
        match self {
            Axis::EI => 0,
            Axis::SN => 1,
            Axis::TF => 2,
            Axis::JP => 3,
        }
    }

    pub fn poles(self) -> (char, char) {
        match self {
            Axis::EI => ('E', 'I'),
            Axis::SN => ('S', 'N'),
            Axis::TF => ('T', 'F'),
            Axis::JP => ('J', 'P'),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Axis::EI => "EI",
            Axis::SN => "SN",
            Axis::TF => "TF",
            Axis::JP => "JP",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Axis {
    type Err = ParseTypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "EI" => Ok(Axis::EI),
            "SN" => Ok(Axis::SN),
            "TF" => Ok(Axis::TF),
            "JP" => Ok(Axis::JP),
            _ => Err(ParseTypeError::Axis(s.to_string())),
        }
    }
}

/// A four-letter MBTI code such as `ENFJ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MbtiType([u8; 4]);

impl MbtiType {
    /// Builds a type from one "first pole" flag per axis (E, S, T, J when true).
    pub fn from_poles(first: [bool; 4]) -> Self {
        let mut code = [0u8; 4];
        for axis in Axis::ALL {
            let (a, b) = axis.poles();
            code[axis.index()] = if first[axis.index()] { a as u8 } else { b as u8 };
        }
        MbtiType(code)
    }

    pub fn letter(self, axis: Axis) -> char {
        self.0[axis.index()] as char
    }

    /// True when the type sits on the first pole (E/S/T/J) of `axis`.
    pub fn is_first_pole(self, axis: Axis) -> bool {
        self.letter(axis) == axis.poles().0
    }

    pub fn as_str(&self) -> &str {
        // Only ASCII letters are ever stored.
        std::str::from_utf8(&self.0).expect("ascii type code")
    }
}

impl fmt::Display for MbtiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MbtiType {
    type Err = ParseTypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let upper = s.trim().to_ascii_uppercase();
        let bytes = upper.as_bytes();
        if bytes.len() != 4 {
            return Err(ParseTypeError::MbtiType(s.to_string()));
        }
        let mut code = [0u8; 4];
        for axis in Axis::ALL {
            let (a, b) = axis.poles();
            let c = bytes[axis.index()] as char;
            if c != a && c != b {
                return Err(ParseTypeError::MbtiType(s.to_string()));
            }
            code[axis.index()] = c as u8;
        }
        Ok(MbtiType(code))
    }
}

impl Serialize for MbtiType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for MbtiType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BigFiveFactor {
    Extraversion,
    Agreeableness,
    Conscientiousness,
    Neuroticism,
    Openness,
}

impl BigFiveFactor {
    pub const ALL: [BigFiveFactor; 5] = [
        BigFiveFactor::Extraversion,
        BigFiveFactor::Agreeableness,
        BigFiveFactor::Conscientiousness,
        BigFiveFactor::Neuroticism,
        BigFiveFactor::Openness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BigFiveFactor::Extraversion => "Extraversion",
            BigFiveFactor::Agreeableness => "Agreeableness",
            BigFiveFactor::Conscientiousness => "Conscientiousness",
            BigFiveFactor::Neuroticism => "Neuroticism",
            BigFiveFactor::Openness => "Openness",
        }
    }

    /// Single-letter code used in bank files.
    pub fn code(self) -> &'static str {
        match self {
            BigFiveFactor::Extraversion => "E",
            BigFiveFactor::Agreeableness => "A",
            BigFiveFactor::Conscientiousness => "C",
            BigFiveFactor::Neuroticism => "N",
            BigFiveFactor::Openness => "O",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        BigFiveFactor::ALL.into_iter().find(|f| f.code() == code)
    }
}

impl fmt::Display for BigFiveFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BigFiveFactor {
    type Err = ParseTypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        BigFiveFactor::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(t) || f.code().eq_ignore_ascii_case(t))
            .ok_or_else(|| ParseTypeError::Factor(s.to_string()))
    }
}

/// What a conditioning prompt asks the agent to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Target {
    Type(MbtiType),
    Factor(BigFiveFactor),
}

impl Target {
    pub fn instrument(self) -> Instrument {
        match self {
            Target::Type(_) => Instrument::Mbti,
            Target::Factor(_) => Instrument::Bfi,
        }
    }

    pub fn as_type(self) -> Option<MbtiType> {
        match self {
            Target::Type(t) => Some(t),
            Target::Factor(_) => None,
        }
    }

    pub fn as_factor(self) -> Option<BigFiveFactor> {
        match self {
            Target::Factor(f) => Some(f),
            Target::Type(_) => None,
        }
    }
}

impl From<MbtiType> for Target {
    fn from(t: MbtiType) -> Self {
        Target::Type(t)
    }
}

impl From<BigFiveFactor> for Target {
    fn from(f: BigFiveFactor) -> Self {
        Target::Factor(f)
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Type(t) => t.fmt(f),
            Target::Factor(x) => x.fmt(f),
        }
    }
}

impl FromStr for Target {
    type Err = ParseTypeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(t) = s.parse::<MbtiType>() {
            return Ok(Target::Type(t));
        }
        if let Ok(f) = s.parse::<BigFiveFactor>() {
            // Single letters are ambiguous with nothing in MBTI, but only accept
            // full names here so "E" is not silently read as Extraversion.
            if s.trim().len() > 1 {
                return Ok(Target::Factor(f));
            }
        }
        Err(ParseTypeError::Target(s.to_string()))
    }
}

impl Serialize for Target {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
