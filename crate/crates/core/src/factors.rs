//! Conditional models for the two node kinds.
//!
//! AND nodes are always the deterministic conjunction of their members.
//! Proposition nodes use either the deterministic OR, a Noisy-Or, or the
//! learned log-linear model over [`Feature`]s.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::kb::{Feature, LinkId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FactorError {
    #[error("gate needs at least one input")]
    NoInputs,
    #[error("{what} = {value} is outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("non-finite potential ({0})")]
    NonFinite(f64),
    #[error("{given} activation parameters for {inputs} inputs")]
    Arity { given: usize, inputs: usize },
    #[error("feature {0} is scored for the wrong conclusion value")]
    WrongValue(String),
    #[error("invalid weight entry {0}")]
    BadWeight(String),
}

/// `1` iff `g_value` equals the conjunction of the parents.
pub fn and_potential(g_value: bool, parent_values: &[bool]) -> Result<u8, FactorError> {
    if parent_values.is_empty() {
        return Err(FactorError::NoInputs);
    }
    Ok(u8::from(g_value == parent_values.iter().all(|&v| v)))
}

/// `1` iff `p_value` equals the disjunction of the groups.
pub fn or_potential_deterministic(p_value: bool, group_values: &[bool]) -> Result<u8, FactorError> {
    if group_values.is_empty() {
        return Err(FactorError::NoInputs);
    }
    Ok(u8::from(p_value == group_values.iter().any(|&v| v)))
}

/// Log-linear weights. Absent features weigh 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightVector {
    weights: BTreeMap<Feature, f64>,
}

impl WeightVector {
    pub fn new() -> Self {
        WeightVector::default()
    }

    pub fn get(&self, feature: &Feature) -> f64 {
        self.weights.get(feature).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, feature: Feature, weight: f64) -> Result<(), FactorError> {
        if !weight.is_finite() {
            return Err(FactorError::NonFinite(weight));
        }
        self.weights.insert(feature, weight);
        Ok(())
    }

    pub(crate) fn add(&mut self, feature: &Feature, delta: f64) {
        *self.weights.entry(feature.clone()).or_insert(0.0) += delta;
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Feature, f64)> {
        self.weights.iter().map(|(f, w)| (f, *w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn all_zero(&self) -> bool {
        self.weights.values().all(|&w| w == 0.0)
    }

    /// `Σ w·φ` over the given features.
    pub fn score(&self, features: &[Feature]) -> f64 {
        features.iter().map(|f| self.get(f)).sum()
    }

    /// Weights as `"p|link|g" -> w`.
    pub fn to_string_map(&self) -> BTreeMap<String, f64> {
        self.weights.iter().map(|(f, w)| (f.to_string(), *w)).collect()
    }

    pub fn from_string_map(map: &BTreeMap<String, f64>) -> Result<Self, FactorError> {
        let mut out = WeightVector::new();
        for (k, &w) in map {
            let f = k.parse().map_err(|_| FactorError::BadWeight(k.clone()))?;
            out.set(f, w)?;
        }
        Ok(out)
    }
}

impl Serialize for WeightVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_string_map().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WeightVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let map = BTreeMap::<String, f64>::deserialize(deserializer)?;
        WeightVector::from_string_map(&map).map_err(serde::de::Error::custom)
    }
}

/// Features of a proposition node scored for `p_value`: the bias of its
/// predicate type plus one per `(link, group value)`.
pub fn proposition_features(p_value: bool, type_key: &str, factors: &[(LinkId, bool)]) -> Vec<Feature> {
    std::iter::once(Feature::bias(p_value, type_key))
        .chain(factors.iter().map(|(l, g)| Feature::new(p_value, l.clone(), *g)))
        .collect()
}

/// `P(p = p_value | groups)` under the normalized log-linear potential.
///
/// `features` are the features scored for `p_value`; the competing value's
/// features are the same triples with the conclusion value flipped.
pub fn or_probability_learned(p_value: bool, features: &[Feature], weights: &WeightVector) -> Result<f64, FactorError> {
    if let Some(f) = features.iter().find(|f| f.conclusion_value != p_value) {
        return Err(FactorError::WrongValue(f.to_string()));
    }
    let own = weights.score(features);
    let other: f64 = features.iter().map(|f| weights.get(&f.flipped())).sum();
    for s in [own, other] {
        if !s.is_finite() {
            return Err(FactorError::NonFinite(s));
        }
    }
    // log-space normalization; the max term is exp(0) = 1
    let m = own.max(other);
    let (a, b) = ((own - m).exp(), (other - m).exp());
    Ok(a / (a + b))
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Noisy-Or: each active cause `i` independently turns the effect on with
/// probability `activation[i]`; `leak` turns it on with no cause.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyOrParams {
    activation: Vec<f64>,
    leak: f64,
}

impl NoisyOrParams {
    pub fn new(activation: Vec<f64>, leak: f64) -> Result<Self, FactorError> {
        for &q in &activation {
            check_unit("activation", q)?;
        }
        check_unit("leak", leak)?;
        Ok(NoisyOrParams { activation, leak })
    }

    /// `q_i = 1`, no leak: deterministic OR over boolean inputs.
    pub fn certain(inputs: usize) -> Self {
        NoisyOrParams {
            activation: vec![1.0; inputs],
            leak: 0.0,
        }
    }

    pub fn activation(&self) -> &[f64] {
        &self.activation
    }

    pub fn leak(&self) -> f64 {
        self.leak
    }

    /// `P(effect | parent values)` for a boolean assignment.
    pub fn conditional(&self, parent_values: &[bool]) -> Result<f64, FactorError> {
        if parent_values.len() != self.activation.len() {
            return Err(FactorError::Arity {
                given: self.activation.len(),
                inputs: parent_values.len(),
            });
        }
        let off: f64 = self
            .activation
            .iter()
            .zip(parent_values)
            .filter(|(_, &v)| v)
            .map(|(q, _)| 1.0 - q)
            .product();
        Ok(1.0 - (1.0 - self.leak) * off)
    }
}

fn check_unit(what: &'static str, value: f64) -> Result<(), FactorError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(FactorError::OutOfRange { what, value })
    }
}

/// `1 - (1 - leak) Π (1 - q_i π_i)` in one pass over the parents.
pub fn noisy_or_probability(params: &NoisyOrParams, parent_true_probs: &[f64]) -> Result<f64, FactorError> {
    if parent_true_probs.len() != params.activation.len() {
        return Err(FactorError::Arity {
            given: params.activation.len(),
            inputs: parent_true_probs.len(),
        });
    }
    let mut off = 1.0 - params.leak;
    for (&q, &p) in params.activation.iter().zip(parent_true_probs) {
        check_unit("parent probability", p)?;
        off *= 1.0 - q * p;
    }
    Ok(1.0 - off)
}
