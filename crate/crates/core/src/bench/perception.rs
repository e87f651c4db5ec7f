//! Perception score discretization.

use serde::{Deserialize, Serialize};

use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionAttribute {
    Safe,
    Wealthy,
    Lively,
    Depressing,
    Boring,
    Beautiful,
}

impl PerceptionAttribute {
    pub const ALL: [PerceptionAttribute; 6] = [
        Self::Safe,
        Self::Wealthy,
        Self::Lively,
        Self::Depressing,
        Self::Boring,
        Self::Beautiful,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Safe => "safe",
            Self::Wealthy => "wealthy",
            Self::Lively => "lively",
            Self::Depressing => "depressing",
            Self::Boring => "boring",
            Self::Beautiful => "beautiful",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }

    fn title(self) -> String {
        let s = self.as_str();
        s[..1].to_uppercase() + &s[1..]
    }
}

/// Scores up to and including `upper` (and above the previous bin's upper
/// bound) get `adjective`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionBin {
    pub upper: f64,
    pub adjective: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerceptionScheme {
    pub attribute: PerceptionAttribute,
    pub bins: Vec<PerceptionBin>,
}

pub const SCORE_MAX: f64 = 10.0;

impl PerceptionScheme {
    /// Right-closed bins with edges 3, 5, 7 and 9 over [0, 10].
    pub fn default_for(attribute: PerceptionAttribute) -> Self {
        let bins = [
            (3.0, "Not"),
            (5.0, "Less"),
            (7.0, "Moderately"),
            (9.0, "Very"),
            (SCORE_MAX, "Extremely"),
        ]
        .into_iter()
        .map(|(upper, adjective)| PerceptionBin {
            upper,
            adjective: adjective.to_string(),
        })
        .collect();
        Self { attribute, bins }
    }

    /// Bins must have increasing upper bounds ending exactly at 10.
    pub fn validate(&self) -> Result<(), BenchError> {
        let uppers: Vec<f64> = self.bins.iter().map(|b| b.upper).collect();
        let increasing = uppers.windows(2).all(|w| w[0] < w[1]);
        if uppers.is_empty()
            || !increasing
            || uppers[0] <= 0.0
            || uppers.last() != Some(&SCORE_MAX)
            || self.bins.iter().any(|b| b.adjective.trim().is_empty())
        {
            return Err(BenchError::Config(format!(
                "perception bins for {} must rise strictly to {SCORE_MAX}",
                self.attribute.as_str()
            )));
        }
        Ok(())
    }

    pub fn bin_of(&self, score: f64) -> Result<&PerceptionBin, BenchError> {
        if !(0.0..=SCORE_MAX).contains(&score) {
            return Err(BenchError::Data(format!(
                "perception score {score} outside [0, {SCORE_MAX}]"
            )));
        }
        Ok(self
            .bins
            .iter()
            .find(|b| score <= b.upper)
            .expect("validated bins end at the maximum"))
    }
}

/// `"{Adjective} {attribute}, {Attribute} Score: {score:.1}"`.
pub fn discretize_perception(score: f64, scheme: &PerceptionScheme) -> Result<String, BenchError> {
    scheme.validate()?;
    let bin = scheme.bin_of(score)?;
    let a = scheme.attribute;
    Ok(format!(
        "{} {}, {} Score: {score:.1}",
        bin.adjective,
        a.as_str(),
        a.title()
    ))
}
