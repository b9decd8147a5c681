//! A built graph plus one conditional probability table per node.
//!
//! Both the message passing engine and the enumeration oracle read the same
//! tables, so any disagreement between them is an inference bug rather than
//! a modelling difference.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::factors::{
    and_potential, or_potential_deterministic, or_probability_learned, proposition_features, FactorError,
    NoisyOrParams, WeightVector,
};
use crate::graph::{NodeId, NodeKind, PropositionGraph};
use crate::kb::LinkId;

/// Tables are dense in the parent assignment.
pub const MAX_FAN_IN: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("node {node} has {fan_in} parents; the limit is {MAX_FAN_IN}")]
    FanIn { node: String, fan_in: usize },
    #[error("no prior for root type {0}")]
    MissingPrior(String),
    #[error("prior for {type_key} is {value}, outside [0, 1]")]
    BadPrior { type_key: String, value: f64 },
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// How proposition nodes combine their parent groups.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OrGate {
    Deterministic,
    /// Same activation for every cause.
    NoisyOr {
        activation: f64,
        leak: f64,
    },
}

/// Hand-specified factors: a prior per root predicate type and an OR gate
/// everywhere else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticModel {
    pub priors: BTreeMap<String, f64>,
    pub or_gate: OrGate,
}

impl AnalyticModel {
    pub fn new(priors: BTreeMap<String, f64>, or_gate: OrGate) -> Self {
        AnalyticModel { priors, or_gate }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parameters {
    Learned(WeightVector),
    Analytic(AnalyticModel),
}

/// `P(node = 1 | parents)` indexed by the parent assignment: bit `i` is the
/// value of the `i`-th parent in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    table: Vec<f64>,
}

impl Cpt {
    pub fn from_table(table: Vec<f64>) -> Self {
        Cpt { table }
    }

    pub fn fan_in(&self) -> usize {
        self.table.len().trailing_zeros() as usize
    }

    pub fn p_true(&self, assignment: usize) -> f64 {
        self.table[assignment]
    }

    pub fn p(&self, value: bool, assignment: usize) -> f64 {
        let t = self.table[assignment];
        if value {
            t
        } else {
            1.0 - t
        }
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }
}

/// The compiled model shared read-only by every session.
#[derive(Debug, Clone)]
pub struct Network {
    graph: PropositionGraph,
    cpts: Vec<Cpt>,
    parents: Vec<Vec<NodeId>>,
}

impl Network {
    pub fn compile(graph: PropositionGraph, params: &Parameters) -> Result<Self, NetworkError> {
        let mut cpts = Vec::with_capacity(graph.len());
        let mut parents = Vec::with_capacity(graph.len());
        for node in graph.nodes() {
            let ps: Vec<NodeId> = graph.parents(node.id).collect();
            if ps.len() > MAX_FAN_IN {
                return Err(NetworkError::FanIn {
                    node: node.key.clone(),
                    fan_in: ps.len(),
                });
            }
            let rows = 1usize << ps.len();
            let bits = |a: usize| (0..ps.len()).map(move |i| a & (1 << i) != 0);
            let table = match &node.kind {
                NodeKind::Group(_) => (0..rows)
                    .map(|a| and_potential(true, &bits(a).collect::<Vec<_>>()).map(f64::from))
                    .collect::<Result<Vec<_>, FactorError>>()?,
                NodeKind::Proposition(p) => {
                    let type_key = p.type_key();
                    match params {
                        Parameters::Learned(w) => {
                            let links: Vec<(usize, &LinkId)> = graph
                                .parent_edges(node.id)
                                .iter()
                                .enumerate()
                                .flat_map(|(i, &e)| graph.edge(e).links.iter().map(move |l| (i, l)))
                                .collect();
                            (0..rows)
                                .map(|a| {
                                    let factors: Vec<(LinkId, bool)> =
                                        links.iter().map(|(i, l)| ((*l).clone(), a & (1 << i) != 0)).collect();
                                    or_probability_learned(true, &proposition_features(true, &type_key, &factors), w)
                                })
                                .collect::<Result<Vec<_>, FactorError>>()?
                        }
                        Parameters::Analytic(model) if ps.is_empty() => {
                            let prior = *model
                                .priors
                                .get(&type_key)
                                .ok_or_else(|| NetworkError::MissingPrior(type_key.clone()))?;
                            if !(0.0..=1.0).contains(&prior) {
                                return Err(NetworkError::BadPrior { type_key, value: prior });
                            }
                            vec![prior]
                        }
                        Parameters::Analytic(model) => match model.or_gate {
                            OrGate::Deterministic => (0..rows)
                                .map(|a| or_potential_deterministic(true, &bits(a).collect::<Vec<_>>()).map(f64::from))
                                .collect::<Result<Vec<_>, FactorError>>()?,
                            OrGate::NoisyOr { activation, leak } => {
                                let params = NoisyOrParams::new(vec![activation; ps.len()], leak)?;
                                (0..rows)
                                    .map(|a| params.conditional(&bits(a).collect::<Vec<_>>()))
                                    .collect::<Result<Vec<_>, FactorError>>()?
                            }
                        },
                    }
                }
            };
            cpts.push(Cpt { table });
            parents.push(ps);
        }
        Ok(Network { graph, cpts, parents })
    }

    pub fn graph(&self) -> &PropositionGraph {
        &self.graph
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn cpt(&self, id: NodeId) -> &Cpt {
        &self.cpts[id.0]
    }

    /// Parents in table bit order.
    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id.0]
    }

    pub fn key(&self, id: NodeId) -> &str {
        &self.graph.node(id).key
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factors::sigmoid;
    use crate::graph::build_graph;
    use crate::kb::Feature;
    use crate::universe::*;

    #[test]
    fn dating_analytic_tables() {
        let g = build_graph(&dating_kb(), &date_prop()).unwrap();
        let net = Network::compile(g, &Parameters::Analytic(dating_analytic())).unwrap();
        let lonely = net.graph().id_of(&lonely_prop().canonical_key()).unwrap();
        assert_eq!(net.cpt(lonely).table(), &[0.3]);
        let like = net.graph().id_of(&like_bg_prop().canonical_key()).unwrap();
        assert_eq!(net.cpt(like).table(), &[0.0, 1.0, 1.0, 1.0]);
        let date = net.graph().id_of(&date_prop().canonical_key()).unwrap();
        let g = net.parents(date)[0];
        assert_eq!(net.cpt(g).table(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_prior_is_reported() {
        let g = build_graph(&dating_kb(), &date_prop()).unwrap();
        let model = AnalyticModel::new(BTreeMap::new(), OrGate::Deterministic);
        assert!(matches!(
            Network::compile(g, &Parameters::Analytic(model)),
            Err(NetworkError::MissingPrior(_))
        ));
    }

    #[test]
    fn learned_tables_use_bias_and_links() {
        let kb = chain_kb(1);
        let g = build_graph(&kb, &chain_prop(1)).unwrap();
        let link = kb.links().next().unwrap().id().clone();
        let mut w = WeightVector::new();
        w.set(Feature::bias(true, &chain_prop(0).type_key()), 0.4).unwrap();
        w.set(Feature::bias(true, &chain_prop(1).type_key()), -2.0).unwrap();
        w.set(Feature::new(true, link, true), 3.0).unwrap();
        let net = Network::compile(g, &Parameters::Learned(w)).unwrap();
        assert!((net.cpt(NodeId(0)).p_true(0) - sigmoid(0.4)).abs() < 1e-15);
        let t = net.cpt(NodeId(2)).table();
        assert!((t[0] - sigmoid(-2.0)).abs() < 1e-15);
        assert!((t[1] - sigmoid(1.0)).abs() < 1e-15);
    }
}
