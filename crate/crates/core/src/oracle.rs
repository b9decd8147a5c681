//! Exact marginals by enumerating every assignment of the proposition nodes.
//!
//! Group nodes are not enumerated: each is the conjunction of its members.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::NodeId;
use crate::inference::TraceRow;
use crate::network::Network;

pub const ENUMERATION_BUDGET: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("{0} proposition nodes exceed the enumeration budget of {ENUMERATION_BUDGET}")]
    Budget(usize),
    #[error("evidence has zero probability")]
    Contradiction,
    #[error("unknown node #{0}")]
    UnknownNode(usize),
}

/// Unnormalized mass of every assignment to the proposition nodes.
/// Bit `i` of an index is the value of `p_nodes[i]`.
#[derive(Debug, Clone)]
pub struct JointTable {
    pub p_nodes: Vec<NodeId>,
    pub mass: Vec<f64>,
    values: Vec<Vec<bool>>,
}

impl JointTable {
    pub fn build(network: &Network) -> Result<Self, OracleError> {
        let p_nodes: Vec<NodeId> = network
            .graph()
            .nodes()
            .iter()
            .filter(|n| !n.is_group())
            .map(|n| n.id)
            .collect();
        if p_nodes.len() > ENUMERATION_BUDGET {
            return Err(OracleError::Budget(p_nodes.len()));
        }
        let slot: BTreeMap<NodeId, usize> = p_nodes.iter().enumerate().map(|(i, &z)| (z, i)).collect();
        let rows = 1usize << p_nodes.len();
        let mut mass = Vec::with_capacity(rows);
        let mut values = Vec::with_capacity(rows);
        for x in 0..rows {
            let mut v = vec![false; network.len()];
            let mut m = 1.0;
            // graph order is topological, so parents are already set
            for node in network.graph().nodes() {
                let z = node.id;
                let parents = network.parents(z);
                if node.is_group() {
                    v[z.0] = parents.iter().all(|a| v[a.0]);
                } else {
                    v[z.0] = x & (1 << slot[&z]) != 0;
                    let a = parents
                        .iter()
                        .enumerate()
                        .filter(|(_, p)| v[p.0])
                        .fold(0usize, |acc, (i, _)| acc | (1 << i));
                    m *= network.cpt(z).p(v[z.0], a);
                }
            }
            mass.push(m);
            values.push(v);
        }
        Ok(JointTable { p_nodes, mass, values })
    }

    /// Total mass of the assignments satisfying `event`.
    pub fn probability(&self, event: impl Fn(&[bool]) -> bool) -> f64 {
        self.values
            .iter()
            .zip(&self.mass)
            .filter(|(v, _)| event(v))
            .map(|(_, m)| m)
            .sum()
    }

    /// `P(z = 1 | evidence)` for every node.
    pub fn marginals(&self, node_count: usize, evidence: &BTreeMap<NodeId, bool>) -> Result<Vec<f64>, OracleError> {
        if let Some(z) = evidence.keys().find(|z| z.0 >= node_count) {
            return Err(OracleError::UnknownNode(z.0));
        }
        let mut z_total = 0.0;
        let mut on = vec![0.0; node_count];
        for (v, &m) in self.values.iter().zip(&self.mass) {
            if evidence.iter().any(|(z, &e)| v[z.0] != e) {
                continue;
            }
            z_total += m;
            for (acc, &b) in on.iter_mut().zip(v) {
                if b {
                    *acc += m;
                }
            }
        }
        if z_total <= 0.0 {
            return Err(OracleError::Contradiction);
        }
        Ok(on.into_iter().map(|x| x / z_total).collect())
    }
}

/// `P(z = 1 | evidence)` for every node of the network, in graph order.
pub fn exact_marginals(network: &Network, evidence: &BTreeMap<NodeId, bool>) -> Result<Vec<f64>, OracleError> {
    JointTable::build(network)?.marginals(network.len(), evidence)
}

/// Oracle marginals as iteration-0 trace rows.
pub fn oracle_rows(marginals: &[f64]) -> Vec<TraceRow> {
    marginals
        .iter()
        .enumerate()
        .map(|(i, &p)| TraceRow {
            iteration: 0,
            node: NodeId(i),
            p_true: p,
            p_false: 1.0 - p,
        })
        .collect()
}
