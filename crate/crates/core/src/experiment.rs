//! The dating and chain scenarios, end to end.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::calculus::Proposition;
use crate::graph::build_graph_multi;
use crate::inference::{InferenceError, Schedule, Session};
use crate::network::{Network, Parameters};
use crate::record::KnowledgeBaseRecord;
use crate::training::{mean_nll, sgd_train, TrainConfig};
use crate::universe::{self, Universe};
use crate::{Error, Result};

/// Chain length used by the chain scenarios.
pub const CHAIN_LENGTH: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Prior,
    JillLikes,
    JackLikes,
    TheyDate,
    ChainPrior,
    ChainSet0,
    ChainSetN,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Prior,
        Experiment::JillLikes,
        Experiment::JackLikes,
        Experiment::TheyDate,
        Experiment::ChainPrior,
        Experiment::ChainSet0,
        Experiment::ChainSetN,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Prior => "prior",
            Experiment::JillLikes => "jill-likes",
            Experiment::JackLikes => "jack-likes",
            Experiment::TheyDate => "they-date",
            Experiment::ChainPrior => "chain-prior",
            Experiment::ChainSet0 => "chain-set-0",
            Experiment::ChainSetN => "chain-set-n",
        }
    }

    pub fn universe(&self) -> Universe {
        match self {
            Experiment::Prior | Experiment::JillLikes | Experiment::JackLikes | Experiment::TheyDate => {
                Universe::Dating
            }
            _ => Universe::Chain(CHAIN_LENGTH),
        }
    }

    /// Observations, all set to true.
    pub fn evidence(&self) -> Vec<Proposition> {
        match self {
            Experiment::Prior | Experiment::ChainPrior => vec![],
            Experiment::JillLikes => vec![universe::like_gb_prop()],
            Experiment::JackLikes => vec![universe::like_bg_prop()],
            Experiment::TheyDate => vec![universe::date_prop()],
            Experiment::ChainSet0 => vec![universe::chain_prop(0)],
            Experiment::ChainSetN => vec![universe::chain_prop(CHAIN_LENGTH)],
        }
    }

    pub fn default_iterations(&self) -> usize {
        match self.universe() {
            Universe::Dating => 10,
            Universe::Chain(n) => 2 * n + 2,
        }
    }
}

impl std::str::FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
            Error::Usage(format!("unknown experiment {s:?} (one of {})", names.join(", ")))
        })
    }
}

/// Generate worlds, train and package a record carrying both parameter sets.
pub fn train_universe(u: Universe, config: &TrainConfig) -> Result<(KnowledgeBaseRecord, f64)> {
    let kb = u.kb();
    let worlds = u.worlds(config.example_count, config.seed);
    let weights = sgd_train(&kb, &worlds, config)?;
    let nll = mean_nll(&kb, &worlds, &weights)?;
    let mut record = KnowledgeBaseRecord::new(u.name(), &kb, weights);
    record.types = u.types();
    record.analytic = Some(u.analytic());
    record.targets = vec![u.target()];
    Ok((record, nll))
}

/// Compile the closure of `targets` and every evidence proposition.
///
/// A target whose function appears in no link would become an isolated root
/// with no prior; it is rejected as an unknown node instead.
pub fn compile(record: &KnowledgeBaseRecord, params: &Parameters, targets: &[Proposition]) -> Result<Arc<Network>> {
    let kb = record.knowledge_base()?;
    let known: BTreeSet<&str> = kb
        .links()
        .flat_map(|l| {
            l.premises()
                .iter()
                .map(|p| p.premise().function())
                .chain([l.conclusion().function()])
        })
        .collect();
    if let Some(p) = targets.iter().find(|p| !known.contains(p.function())) {
        return Err(InferenceError::UnknownNode(p.canonical_key()).into());
    }
    let graph = build_graph_multi(&kb, targets)?;
    Ok(Arc::new(Network::compile(graph, params)?))
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub session: Session,
}

impl Outcome {
    pub fn csv(&self) -> String {
        self.session.trace_csv()
    }
}

pub fn run_experiment(
    e: Experiment,
    record: &KnowledgeBaseRecord,
    params: &Parameters,
    iterations: usize,
    schedule: Schedule,
) -> Result<Outcome> {
    let evidence = e.evidence();
    let mut targets = vec![e.universe().target()];
    targets.extend(evidence.iter().cloned());
    let network = compile(record, params, &targets)?;
    let mut session = Session::with_schedule(network, schedule)?;
    for p in &evidence {
        session.set_evidence_key(&p.canonical_key(), true)?;
    }
    session.run(iterations)?;
    Ok(Outcome { session })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("nope".parse::<Experiment>().is_err());
    }

    #[test]
    fn they_date_on_analytic_factors() {
        let (record, _) = train_universe(
            Universe::Dating,
            &TrainConfig {
                example_count: 0,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let params = record.analytic().unwrap();
        let out = run_experiment(Experiment::TheyDate, &record, &params, 10, Schedule::Flood).unwrap();
        let p = out
            .session
            .marginal_key(&universe::lonely_prop().canonical_key())
            .unwrap();
        assert!((p - 0.3 / 0.72).abs() < 1e-9);
        assert_eq!(out.session.trace().len(), 11 * 8);
    }
}
