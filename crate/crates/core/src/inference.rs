//! Iterative π/λ belief propagation.
//!
//! Every pair is indexed by value: `[false, true]`. Messages and values are
//! kept normalized. Evidence enters as an indicator that multiplies both the
//! node's λ value and the π messages it sends to its children.
//!
//! One fan-out is a λ phase followed by a π sweep over the whole graph in
//! topological order. Under [`Schedule::Flood`] the λ phase recomputes every
//! λ message from the previous iteration's values, so backward evidence moves
//! one edge per fan-out. Under [`Schedule::Sweep`] the λ phase runs children
//! before parents and reaches the roots in one fan-out.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::NodeId;
use crate::network::Network;

pub type Pair = [f64; 2];

/// Default auto-stop threshold on the max marginal change.
pub const CONVERGENCE_TOLERANCE: f64 = 1e-7;

const VACUOUS: Pair = [0.5, 0.5];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InferenceError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("conflicting evidence on {0}")]
    ConflictingEvidence(String),
    #[error("evidence is contradictory at {0}")]
    Contradiction(String),
    #[error("non-finite belief at {0}")]
    Numeric(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Flood,
    Sweep,
}

impl std::str::FromStr for Schedule {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flood" => Ok(Schedule::Flood),
            "sweep" => Ok(Schedule::Sweep),
            other => Err(format!("unknown schedule {other:?} (flood|sweep)")),
        }
    }
}

/// Per-node values and per-edge messages. Edge `e` carries `pi_msg[e]`
/// (parent to child) and `lambda_msg[e]` (child to parent), both over the
/// parent's values.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub evidence: Vec<Option<bool>>,
    pub pi: Vec<Pair>,
    pub lambda: Vec<Pair>,
    pub pi_msg: Vec<Pair>,
    pub lambda_msg: Vec<Pair>,
    pub iteration: usize,
}

impl BeliefState {
    /// Vacuous λ everywhere, π not yet computed.
    pub fn vacuous(network: &Network) -> Self {
        let n = network.len();
        let e = network.graph().edges().len();
        BeliefState {
            evidence: vec![None; n],
            pi: vec![VACUOUS; n],
            lambda: vec![VACUOUS; n],
            pi_msg: vec![VACUOUS; e],
            lambda_msg: vec![VACUOUS; e],
            iteration: 0,
        }
    }

    fn indicator(&self, z: NodeId) -> Pair {
        match self.evidence[z.0] {
            None => [1.0, 1.0],
            Some(false) => [1.0, 0.0],
            Some(true) => [0.0, 1.0],
        }
    }
}

fn normalize(network: &Network, z: NodeId, v: Pair) -> Result<Pair, InferenceError> {
    let s = v[0] + v[1];
    if !s.is_finite() || v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(InferenceError::Numeric(network.key(z).to_string()));
    }
    if s == 0.0 {
        return Err(InferenceError::Contradiction(network.key(z).to_string()));
    }
    Ok([v[0] / s, v[1] / s])
}

/// `π(z) = Σ_a P(z | a) Π π_z(a_i)` by enumeration of the parent assignments.
pub fn pi_value(network: &Network, state: &BeliefState, z: NodeId) -> Result<Pair, InferenceError> {
    let edges = network.graph().parent_edges(z);
    let cpt = network.cpt(z);
    let mut out = [0.0; 2];
    for a in 0..(1usize << edges.len()) {
        let weight: f64 = edges
            .iter()
            .enumerate()
            .map(|(i, &e)| state.pi_msg[e][usize::from(a & (1 << i) != 0)])
            .product();
        let t = cpt.p_true(a);
        out[1] += t * weight;
        out[0] += (1.0 - t) * weight;
    }
    normalize(network, z, out)
}

/// `λ(z) = indicator(z) · Π_c λ_c(z)`.
pub fn lambda_value(network: &Network, state: &BeliefState, z: NodeId) -> Result<Pair, InferenceError> {
    let mut out = state.indicator(z);
    for &e in network.graph().child_edges(z) {
        let m = state.lambda_msg[e];
        out[0] *= m[0];
        out[1] *= m[1];
    }
    normalize(network, z, out)
}

/// `π_c(a) = π(a) · indicator(a) · Π_{y ≠ c} λ_y(a)` along edge `edge`.
pub fn pi_message(network: &Network, state: &BeliefState, edge: usize) -> Result<Pair, InferenceError> {
    let a = network.graph().edge(edge).parent;
    let ind = state.indicator(a);
    let mut out = [state.pi[a.0][0] * ind[0], state.pi[a.0][1] * ind[1]];
    for &e in network.graph().child_edges(a) {
        if e != edge {
            out[0] *= state.lambda_msg[e][0];
            out[1] *= state.lambda_msg[e][1];
        }
    }
    normalize(network, a, out)
}

/// `λ_c(z) = Σ_c λ(c) Σ_b P(c | z, b) Π π_c(b_i)` along edge `edge`, where
/// `b` ranges over the assignments of the other parents of `c`.
pub fn lambda_message(network: &Network, state: &BeliefState, edge: usize) -> Result<Pair, InferenceError> {
    let c = network.graph().edge(edge).child;
    let edges = network.graph().parent_edges(c);
    let j = edges
        .iter()
        .position(|&e| e == edge)
        .expect("edge is a parent edge of its child");
    let cpt = network.cpt(c);
    let lc = state.lambda[c.0];
    let mut out = [0.0; 2];
    for a in 0..(1usize << edges.len()) {
        let weight: f64 = edges
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(i, &e)| state.pi_msg[e][usize::from(a & (1 << i) != 0)])
            .product();
        let t = cpt.p_true(a);
        out[usize::from(a & (1 << j) != 0)] += (lc[1] * t + lc[0] * (1.0 - t)) * weight;
    }
    normalize(network, c, out)
}

/// `α λ(z) π(z)` as `[P(z = 0), P(z = 1)]`.
pub fn belief(network: &Network, state: &BeliefState, z: NodeId) -> Result<Pair, InferenceError> {
    let (p, l) = (state.pi[z.0], state.lambda[z.0]);
    normalize(network, z, [p[0] * l[0], p[1] * l[1]])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub node: NodeId,
    pub p_true: f64,
    pub p_false: f64,
}

/// CSV with header `iteration,node_key,p_true` and 9 fractional digits.
pub fn trace_csv(network: &Network, rows: &[TraceRow]) -> String {
    let mut out = String::from("iteration,node_key,p_true\n");
    for r in rows {
        let _ = writeln!(out, "{},\"{}\",{:.9}", r.iteration, network.key(r.node), r.p_true);
    }
    out
}

/// One query: a shared network and its own belief state and trace.
#[derive(Debug, Clone)]
pub struct Session {
    network: Arc<Network>,
    state: BeliefState,
    schedule: Schedule,
    trace: Vec<TraceRow>,
}

impl Session {
    pub fn new(network: Arc<Network>) -> Result<Self, InferenceError> {
        Session::with_schedule(network, Schedule::default())
    }

    /// Computes the priors and records them as iteration 0.
    pub fn with_schedule(network: Arc<Network>, schedule: Schedule) -> Result<Self, InferenceError> {
        let state = BeliefState::vacuous(&network);
        let mut s = Session {
            network,
            state,
            schedule,
            trace: Vec::new(),
        };
        s.pi_sweep()?;
        s.record()?;
        Ok(s)
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    pub fn state(&self) -> &BeliefState {
        &self.state
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn iteration(&self) -> usize {
        self.state.iteration
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn trace_csv(&self) -> String {
        trace_csv(&self.network, &self.trace)
    }

    pub fn node(&self, key: &str) -> Result<NodeId, InferenceError> {
        self.network
            .graph()
            .id_of(key)
            .ok_or_else(|| InferenceError::UnknownNode(key.to_string()))
    }

    /// Clamp `z`. Takes effect from the next fan-out.
    pub fn set_evidence(&mut self, z: NodeId, value: bool) -> Result<(), InferenceError> {
        if z.0 >= self.network.len() {
            return Err(InferenceError::UnknownNode(format!("#{}", z.0)));
        }
        match self.state.evidence[z.0] {
            Some(v) if v != value => return Err(InferenceError::ConflictingEvidence(self.network.key(z).to_string())),
            _ => {}
        }
        self.state.evidence[z.0] = Some(value);
        self.state.lambda[z.0] = lambda_value(&self.network, &self.state, z)?;
        Ok(())
    }

    pub fn set_evidence_key(&mut self, key: &str, value: bool) -> Result<(), InferenceError> {
        let z = self.node(key)?;
        self.set_evidence(z, value)
    }

    pub fn evidence(&self) -> impl Iterator<Item = (NodeId, bool)> + '_ {
        self.state
            .evidence
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| (NodeId(i), v)))
    }

    /// One λ phase and one π sweep; records and returns the new rows.
    pub fn fan_out(&mut self) -> Result<&[TraceRow], InferenceError> {
        match self.schedule {
            Schedule::Flood => self.lambda_flood()?,
            Schedule::Sweep => self.lambda_sweep()?,
        }
        self.pi_sweep()?;
        self.state.iteration += 1;
        let start = self.trace.len();
        self.record()?;
        Ok(&self.trace[start..])
    }

    pub fn run(&mut self, rounds: usize) -> Result<(), InferenceError> {
        for _ in 0..rounds {
            self.fan_out()?;
        }
        Ok(())
    }

    /// Fan out until no marginal moves by `tolerance` or more. Returns the
    /// number of fan-outs performed, or `None` if `max_rounds` ran out.
    pub fn run_until_converged(&mut self, max_rounds: usize, tolerance: f64) -> Result<Option<usize>, InferenceError> {
        let mut before = self.marginals()?;
        for round in 1..=max_rounds {
            self.fan_out()?;
            let after = self.marginals()?;
            let delta = before
                .iter()
                .zip(&after)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if delta < tolerance {
                return Ok(Some(round));
            }
            before = after;
        }
        Ok(None)
    }

    /// `P(z = 1 | evidence)`.
    pub fn marginal(&self, z: NodeId) -> Result<f64, InferenceError> {
        Ok(self.distribution(z)?[1])
    }

    /// `[P(z = 0 | e), P(z = 1 | e)]`.
    pub fn distribution(&self, z: NodeId) -> Result<Pair, InferenceError> {
        if z.0 >= self.network.len() {
            return Err(InferenceError::UnknownNode(format!("#{}", z.0)));
        }
        belief(&self.network, &self.state, z)
    }

    pub fn marginal_key(&self, key: &str) -> Result<f64, InferenceError> {
        self.marginal(self.node(key)?)
    }

    /// `P(z = 1 | evidence)` for every node in graph order.
    pub fn marginals(&self) -> Result<Vec<f64>, InferenceError> {
        (0..self.network.len()).map(|i| self.marginal(NodeId(i))).collect()
    }

    fn record(&mut self) -> Result<(), InferenceError> {
        for i in 0..self.network.len() {
            let [p_false, p_true] = belief(&self.network, &self.state, NodeId(i))?;
            self.trace.push(TraceRow {
                iteration: self.state.iteration,
                node: NodeId(i),
                p_true,
                p_false,
            });
        }
        Ok(())
    }

    fn pi_sweep(&mut self) -> Result<(), InferenceError> {
        let net = Arc::clone(&self.network);
        for i in 0..net.len() {
            let z = NodeId(i);
            self.state.pi[i] = pi_value(&net, &self.state, z)?;
            for &e in net.graph().child_edges(z) {
                self.state.pi_msg[e] = pi_message(&net, &self.state, e)?;
            }
        }
        Ok(())
    }

    fn lambda_flood(&mut self) -> Result<(), InferenceError> {
        let net = Arc::clone(&self.network);
        let msgs = (0..net.graph().edges().len())
            .map(|e| lambda_message(&net, &self.state, e))
            .collect::<Result<Vec<_>, _>>()?;
        self.state.lambda_msg = msgs;
        for i in 0..net.len() {
            self.state.lambda[i] = lambda_value(&net, &self.state, NodeId(i))?;
        }
        Ok(())
    }

    fn lambda_sweep(&mut self) -> Result<(), InferenceError> {
        let net = Arc::clone(&self.network);
        for i in (0..net.len()).rev() {
            let c = NodeId(i);
            self.state.lambda[i] = lambda_value(&net, &self.state, c)?;
            for &e in net.graph().parent_edges(c) {
                self.state.lambda_msg[e] = lambda_message(&net, &self.state, e)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::network::Parameters;
    use crate::universe::*;

    fn dating() -> Arc<Network> {
        let g = build_graph(&dating_kb(), &date_prop()).unwrap();
        Arc::new(Network::compile(g, &Parameters::Analytic(dating_analytic())).unwrap())
    }

    fn chain(n: usize) -> Arc<Network> {
        let g = build_graph(&chain_kb(n), &chain_prop(n)).unwrap();
        Arc::new(Network::compile(g, &Parameters::Analytic(chain_analytic())).unwrap())
    }

    fn id(net: &Network, p: &crate::calculus::Proposition) -> NodeId {
        net.graph().id_of(&p.canonical_key()).unwrap()
    }

    #[test]
    fn and_pi_value_from_messages() {
        let net = dating();
        let s = Session::new(Arc::clone(&net)).unwrap();
        let date = id(&net, &date_prop());
        let g = net.parents(date)[0];
        let p = pi_value(&net, s.state(), g).unwrap();
        assert!((p[1] - 0.72 * 0.4).abs() < 1e-12);
        assert!((s.marginal(date).unwrap() - 0.288).abs() < 1e-12);
    }

    #[test]
    fn root_pi_is_prior() {
        let net = dating();
        let s = Session::new(Arc::clone(&net)).unwrap();
        let lonely = id(&net, &lonely_prop());
        assert!((pi_value(&net, s.state(), lonely).unwrap()[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn or_with_certain_parent() {
        let net = chain(1);
        let mut st = BeliefState::vacuous(&net);
        st.pi_msg[1] = [0.0, 1.0];
        assert_eq!(pi_value(&net, &st, NodeId(2)).unwrap(), [0.0, 1.0]);
    }

    #[test]
    fn lambda_value_products() {
        let net = chain(1);
        let st = BeliefState::vacuous(&net);
        assert_eq!(lambda_value(&net, &st, NodeId(2)).unwrap(), [0.5, 0.5]);

        let mut st = BeliefState::vacuous(&net);
        st.lambda_msg[net.graph().child_edges(NodeId(0))[0]] = [0.5, 1.0];
        let l = lambda_value(&net, &st, NodeId(0)).unwrap();
        assert!((l[0] / l[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lambda_value_of_two_children() {
        let kb = chain_kb(1);
        let mut kb2 = kb.clone();
        let extra = "beta(subj=?jack)".parse().unwrap();
        kb2.add_link(
            crate::kb::ConjoinedImplicationLink::single(
                "alpha0(subj=?jack)".parse().unwrap(),
                extra,
                crate::kb::RoleSetMapping::identity(["subj"]),
            )
            .unwrap(),
        );
        let targets = [chain_prop(1), "beta(subj=jack1:jack)".parse().unwrap()];
        let g = crate::graph::build_graph_multi(&kb2, &targets).unwrap();
        let net = Network::compile(g, &Parameters::Analytic(chain_analytic())).unwrap();
        // both conclusions share the group [alpha0]
        let g = net.parents(id(&net, &chain_prop(1)))[0];
        assert_eq!(net.graph().child_edges(g).len(), 2);
        let mut st = BeliefState::vacuous(&net);
        for &e in net.graph().child_edges(g) {
            st.lambda_msg[e] = [0.5, 1.0];
        }
        let l = lambda_value(&net, &st, g).unwrap();
        assert!((l[0] / l[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pi_message_excludes_receiver() {
        let net = dating();
        let s = Session::new(Arc::clone(&net)).unwrap();
        let like_gb = id(&net, &like_gb_prop());
        let e = net.graph().child_edges(like_gb)[0];
        let m = pi_message(&net, s.state(), e).unwrap();
        assert!((m[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn vacuous_child_sends_uniform_lambda() {
        let net = dating();
        let s = Session::new(Arc::clone(&net)).unwrap();
        for e in 0..net.graph().edges().len() {
            assert_eq!(lambda_message(&net, s.state(), e).unwrap(), [0.5, 0.5]);
        }
    }

    #[test]
    fn observed_and_blocks_false_parent() {
        let net = dating();
        let mut s = Session::new(Arc::clone(&net)).unwrap();
        let date = id(&net, &date_prop());
        let g = net.parents(date)[0];
        s.set_evidence(g, true).unwrap();
        for &e in net.graph().parent_edges(g) {
            assert_eq!(lambda_message(&net, s.state(), e).unwrap()[0], 0.0);
        }
    }

    #[test]
    fn evidence_conflicts_and_clamps() {
        let net = dating();
        let mut s = Session::new(Arc::clone(&net)).unwrap();
        let date = id(&net, &date_prop());
        s.set_evidence(date, true).unwrap();
        s.set_evidence(date, true).unwrap();
        assert!(matches!(
            s.set_evidence(date, false),
            Err(InferenceError::ConflictingEvidence(_))
        ));
        s.run(3).unwrap();
        assert_eq!(s.marginal(date).unwrap(), 1.0);
    }

    #[test]
    fn date_backward_to_lonely() {
        let net = dating();
        let mut s = Session::new(Arc::clone(&net)).unwrap();
        s.set_evidence(id(&net, &date_prop()), true).unwrap();
        s.run(10).unwrap();
        let p = s.marginal(id(&net, &lonely_prop())).unwrap();
        assert!((p - 0.3 / 0.72).abs() < 1e-12, "{p}");
    }

    #[test]
    fn contradiction_is_reported() {
        let net = dating();
        let mut s = Session::new(Arc::clone(&net)).unwrap();
        s.set_evidence(id(&net, &date_prop()), true).unwrap();
        s.set_evidence(id(&net, &like_gb_prop()), false).unwrap();
        let err = s.run(5).unwrap_err();
        assert!(matches!(err, InferenceError::Contradiction(_)), "{err}");
    }

    #[test]
    fn zero_rounds_is_prior_trace() {
        let net = dating();
        let s = Session::new(Arc::clone(&net)).unwrap();
        assert_eq!(s.trace().len(), net.len());
        assert!(s.trace().iter().all(|r| r.iteration == 0));
        let csv = s.trace_csv();
        assert_eq!(csv.lines().count(), net.len() + 1);
        assert!(csv.contains(",0.288000000"));
    }

    #[test]
    fn trace_rows_per_iteration() {
        let net = chain(10);
        let mut s = Session::new(Arc::clone(&net)).unwrap();
        s.set_evidence(id(&net, &chain_prop(10)), true).unwrap();
        s.run(7).unwrap();
        assert_eq!(s.trace().len(), 8 * 21);
    }

    #[test]
    fn flood_moves_one_edge_per_fan_out() {
        let net = chain(10);
        let mut s = Session::new(Arc::clone(&net)).unwrap();
        s.set_evidence(id(&net, &chain_prop(10)), true).unwrap();
        for k in 1..=20 {
            s.fan_out().unwrap();
            let m = s.marginals().unwrap();
            let done = m.iter().filter(|&&p| p >= 0.99).count();
            assert_eq!(done, k + 1);
        }
    }

    #[test]
    fn sweep_reaches_roots_in_one_fan_out() {
        let net = chain(10);
        let mut s = Session::with_schedule(Arc::clone(&net), Schedule::Sweep).unwrap();
        s.set_evidence(id(&net, &chain_prop(10)), true).unwrap();
        s.fan_out().unwrap();
        assert!(s.marginals().unwrap().iter().all(|&p| p >= 0.99));
    }

    #[test]
    fn auto_stop() {
        let net = dating();
        let mut s = Session::new(Arc::clone(&net)).unwrap();
        s.set_evidence(id(&net, &date_prop()), true).unwrap();
        let n = s.run_until_converged(50, CONVERGENCE_TOLERANCE).unwrap();
        assert!(n.is_some_and(|n| n <= 10), "{n:?}");
    }
}
