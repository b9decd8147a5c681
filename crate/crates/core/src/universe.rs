//! The two synthetic universes: dating and the copy chain.
//!
//! Dating: `lonely(jack)` ~ 0.3, `exciting(jill)` ~ 0.6,
//! `like(jack, jill) = lonely ∨ exciting`, `like(jill, jack)` ~ 0.4,
//! `date(jack, jill) = like(jack, jill) ∧ like(jill, jack)`.
//!
//! Chain: `alpha0(jack)` is a fair coin and `alpha_i = alpha_{i-1}`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::{Predicate, Proposition};
use crate::kb::{ConjoinedImplicationLink, KnowledgeBase, PredicateImplicationLink, RoleSetMapping};
use crate::network::{AnalyticModel, OrGate};
use crate::training::World;

pub const P_LONELY: f64 = 0.3;
pub const P_EXCITING: f64 = 0.6;
pub const P_LIKE_GB: f64 = 0.4;
pub const P_ALPHA0: f64 = 0.5;

fn pred(s: &str) -> Predicate {
    s.parse().expect("static predicate")
}

fn prop(s: &str) -> Proposition {
    s.parse().expect("static proposition")
}

pub fn lonely_prop() -> Proposition {
    prop("lonely(subj=jack1:jack)")
}

pub fn exciting_prop() -> Proposition {
    prop("exciting(subj=jill1:jill)")
}

/// `like(jack1, jill1)`: the boy likes the girl.
pub fn like_bg_prop() -> Proposition {
    prop("like(subj=jack1:jack,dobj=jill1:jill)")
}

/// `like(jill1, jack1)`: the girl likes the boy.
pub fn like_gb_prop() -> Proposition {
    prop("like(subj=jill1:jill,dobj=jack1:jack)")
}

pub fn date_prop() -> Proposition {
    prop("date(subj=jack1:jack,dobj=jill1:jill)")
}

pub fn dating_props() -> [Proposition; 5] {
    [
        lonely_prop(),
        exciting_prop(),
        like_bg_prop(),
        like_gb_prop(),
        date_prop(),
    ]
}

pub fn dating_kb() -> KnowledgeBase {
    let like = pred("like(subj=?jack,dobj=?jill)");
    let date = pred("date(subj=?jack,dobj=?jill)");
    let mut kb = KnowledgeBase::new();
    kb.add_link(
        ConjoinedImplicationLink::single(
            pred("lonely(subj=?jack)"),
            like.clone(),
            RoleSetMapping::identity(["subj"]),
        )
        .expect("valid link"),
    );
    kb.add_link(
        ConjoinedImplicationLink::single(
            pred("exciting(subj=?jill)"),
            like.clone(),
            RoleSetMapping::new([("subj", "dobj")]),
        )
        .expect("valid link"),
    );
    let mutual = ConjoinedImplicationLink::new(vec![
        PredicateImplicationLink::new(like, date.clone(), RoleSetMapping::identity(["subj", "dobj"]))
            .expect("valid link"),
        PredicateImplicationLink::new(
            pred("like(subj=?jill,dobj=?jack)"),
            date,
            RoleSetMapping::new([("subj", "dobj"), ("dobj", "subj")]),
        )
        .expect("valid link"),
    ])
    .expect("valid link");
    kb.add_link(mutual);
    kb
}

/// Root priors and deterministic OR.
pub fn dating_analytic() -> AnalyticModel {
    let priors = BTreeMap::from([
        (lonely_prop().type_key(), P_LONELY),
        (exciting_prop().type_key(), P_EXCITING),
        (like_gb_prop().type_key(), P_LIKE_GB),
    ]);
    AnalyticModel::new(priors, OrGate::Deterministic)
}

pub fn generate_dating_world(seed: u64) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lonely = rng.gen_bool(P_LONELY);
    let exciting = rng.gen_bool(P_EXCITING);
    let like_gb = rng.gen_bool(P_LIKE_GB);
    dating_world_from(lonely, exciting, like_gb)
}

/// The world determined by the three free variables.
pub fn dating_world_from(lonely: bool, exciting: bool, like_gb: bool) -> World {
    let like_bg = lonely || exciting;
    let date = like_bg && like_gb;
    World::from_iter([
        (lonely_prop(), lonely),
        (exciting_prop(), exciting),
        (like_bg_prop(), like_bg),
        (like_gb_prop(), like_gb),
        (date_prop(), date),
    ])
}

pub fn chain_prop(i: usize) -> Proposition {
    prop(&format!("alpha{i}(subj=jack1:jack)"))
}

pub fn chain_kb(n: usize) -> KnowledgeBase {
    let mut kb = KnowledgeBase::new();
    for i in 1..=n {
        kb.add_link(
            ConjoinedImplicationLink::single(
                pred(&format!("alpha{}(subj=?jack)", i - 1)),
                pred(&format!("alpha{i}(subj=?jack)")),
                RoleSetMapping::identity(["subj"]),
            )
            .expect("valid link"),
        );
    }
    kb
}

pub fn chain_analytic() -> AnalyticModel {
    AnalyticModel::new(
        BTreeMap::from([(chain_prop(0).type_key(), P_ALPHA0)]),
        OrGate::Deterministic,
    )
}

pub fn generate_chain_world(seed: u64, n: usize) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    chain_world_from(rng.gen_bool(P_ALPHA0), n)
}

pub fn chain_world_from(alpha0: bool, n: usize) -> World {
    (0..=n).map(|i| (chain_prop(i), alpha0)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Universe {
    Dating,
    Chain(usize),
}

impl Universe {
    pub fn name(&self) -> &'static str {
        match self {
            Universe::Dating => "dating",
            Universe::Chain(_) => "chain",
        }
    }

    pub fn kb(&self) -> KnowledgeBase {
        match *self {
            Universe::Dating => dating_kb(),
            Universe::Chain(n) => chain_kb(n),
        }
    }

    pub fn analytic(&self) -> AnalyticModel {
        match self {
            Universe::Dating => dating_analytic(),
            Universe::Chain(_) => chain_analytic(),
        }
    }

    /// The proposition whose closure is the whole universe.
    pub fn target(&self) -> Proposition {
        match *self {
            Universe::Dating => date_prop(),
            Universe::Chain(n) => chain_prop(n),
        }
    }

    /// Type name to the entities of that type.
    pub fn types(&self) -> BTreeMap<String, Vec<String>> {
        let mut t = BTreeMap::from([("jack".to_string(), vec!["jack1".to_string()])]);
        if *self == Universe::Dating {
            t.insert("jill".to_string(), vec!["jill1".to_string()]);
        }
        t
    }

    pub fn world(&self, seed: u64) -> World {
        match *self {
            Universe::Dating => generate_dating_world(seed),
            Universe::Chain(n) => generate_chain_world(seed, n),
        }
    }

    /// `count` worlds whose seeds are drawn from a stream seeded by `seed`.
    pub fn worlds(&self, count: usize, seed: u64) -> Vec<World> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.world(rng.gen())).collect()
    }
}
