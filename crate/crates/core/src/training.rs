//! Fixed-rate SGD on the local log-likelihood of every proposition node.
//!
//! Worlds observe propositions only; a group's value is the conjunction of
//! its members. AND factors have no parameters and are never touched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::{Proposition, PropositionGroup};
use crate::factors::{or_probability_learned, proposition_features, FactorError, WeightVector};
use crate::kb::{Feature, KnowledgeBase, LinkId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("{premise} is needed by {conclusion} but missing from the world")]
    Ungroundable { premise: String, conclusion: String },
    #[error("learning rate must be positive and finite, got {0}")]
    BadRate(f64),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// A fully observed assignment of truth values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct World(BTreeMap<Proposition, bool>);

impl World {
    pub fn new() -> Self {
        World::default()
    }

    pub fn get(&self, p: &Proposition) -> Option<bool> {
        self.0.get(p).copied()
    }

    pub fn insert(&mut self, p: Proposition, value: bool) {
        self.0.insert(p, value);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Proposition, bool)> {
        self.0.iter().map(|(p, v)| (p, *v))
    }

    /// Conjunction of the members; `None` if one is unobserved.
    pub fn group_value(&self, g: &PropositionGroup) -> Option<bool> {
        g.members().iter().try_fold(true, |acc, m| Some(acc && self.get(m)?))
    }

    /// One JSON object, canonical key to 0/1.
    pub fn to_line(&self) -> String {
        let m: BTreeMap<String, u8> = self.iter().map(|(p, v)| (p.canonical_key(), u8::from(v))).collect();
        serde_json::to_string(&m).expect("string map serializes")
    }
}

impl FromIterator<(Proposition, bool)> for World {
    fn from_iter<I: IntoIterator<Item = (Proposition, bool)>>(iter: I) -> Self {
        World(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub example_count: usize,
    pub seed: u64,
    pub epochs: usize,
    /// Return the running average of the iterates instead of the last one.
    pub averaged: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            example_count: 4096,
            seed: 0,
            epochs: 1,
            averaged: false,
        }
    }
}

/// One proposition's observation: its value and the value of every
/// `(link, group)` factor reaching it.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalExample {
    pub type_key: String,
    pub factors: Vec<(LinkId, bool)>,
    pub value: bool,
}

impl LocalExample {
    pub fn features(&self, value: bool) -> Vec<Feature> {
        proposition_features(value, &self.type_key, &self.factors)
    }

    /// `P(value | groups)`.
    pub fn probability(&self, weights: &WeightVector, value: bool) -> Result<f64, FactorError> {
        or_probability_learned(value, &self.features(value), weights)
    }
}

struct Template {
    type_key: String,
    factors: Vec<(LinkId, PropositionGroup)>,
}

/// Caches factor contexts across worlds.
pub struct Extractor<'a> {
    kb: &'a KnowledgeBase,
    cache: BTreeMap<Proposition, Template>,
}

impl<'a> Extractor<'a> {
    pub fn new(kb: &'a KnowledgeBase) -> Self {
        Extractor {
            kb,
            cache: BTreeMap::new(),
        }
    }

    /// One example per proposition of the world, in proposition order.
    pub fn examples(&mut self, world: &World) -> Result<Vec<LocalExample>, TrainError> {
        let mut out = Vec::with_capacity(world.len());
        for (p, value) in world.iter() {
            let kb = self.kb;
            let t = self.cache.entry(p.clone()).or_insert_with(|| Template {
                type_key: p.type_key(),
                factors: kb
                    .factor_context(p)
                    .into_iter()
                    .map(|f| (f.link.id().clone(), f.premise_group))
                    .collect(),
            });
            let factors = t
                .factors
                .iter()
                .map(|(l, g)| {
                    world
                        .group_value(g)
                        .map(|v| (l.clone(), v))
                        .ok_or_else(|| TrainError::Ungroundable {
                            premise: g.canonical_key(),
                            conclusion: p.canonical_key(),
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            out.push(LocalExample {
                type_key: t.type_key.clone(),
                factors,
                value,
            });
        }
        Ok(out)
    }
}

/// `log P(observed value | groups)`.
pub fn local_log_likelihood(weights: &WeightVector, example: &LocalExample) -> Result<f64, FactorError> {
    Ok(example.probability(weights, example.value)?.ln())
}

/// `∂/∂w_k log P = [k ∈ φ(obs)] - Σ_v P(v) [k ∈ φ(v)]`, over the features
/// with nonzero derivative.
pub fn local_gradient(weights: &WeightVector, example: &LocalExample) -> Result<BTreeMap<Feature, f64>, FactorError> {
    let p_true = example.probability(weights, true)?;
    let mut g = BTreeMap::new();
    for (v, p) in [(true, p_true), (false, 1.0 - p_true)] {
        let observed = if v == example.value { 1.0 } else { 0.0 };
        for f in example.features(v) {
            *g.entry(f).or_insert(0.0) += observed - p;
        }
    }
    Ok(g)
}

pub fn sgd_train(kb: &KnowledgeBase, worlds: &[World], config: &TrainConfig) -> Result<WeightVector, TrainError> {
    if !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(TrainError::BadRate(config.learning_rate));
    }
    let mut extractor = Extractor::new(kb);
    let mut w = WeightVector::new();
    let mut avg = WeightVector::new();
    let mut steps = 0.0;
    for _ in 0..config.epochs {
        for world in worlds {
            for ex in extractor.examples(world)? {
                for (f, d) in local_gradient(&w, &ex)? {
                    w.add(&f, config.learning_rate * d);
                }
            }
            if config.averaged {
                steps += 1.0;
                for (f, x) in w.iter() {
                    let a = avg.get(f);
                    avg.add(f, (x - a) / steps);
                }
            }
        }
    }
    let out = if config.averaged && steps > 0.0 { avg } else { w };
    if let Some((_, x)) = out.iter().find(|(_, x)| !x.is_finite()) {
        return Err(FactorError::NonFinite(x).into());
    }
    Ok(out)
}

/// Mean over worlds of the summed local negative log-likelihoods.
pub fn mean_nll(kb: &KnowledgeBase, worlds: &[World], weights: &WeightVector) -> Result<f64, TrainError> {
    if worlds.is_empty() {
        return Ok(0.0);
    }
    let mut extractor = Extractor::new(kb);
    let mut total = 0.0;
    for world in worlds {
        for ex in extractor.examples(world)? {
            total -= local_log_likelihood(weights, &ex)?;
        }
    }
    Ok(total / worlds.len() as f64)
}
