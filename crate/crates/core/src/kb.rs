//! Quantified knowledge: implication links between predicates.
//!
//! A [`KnowledgeBase`] stores conjoined implication links indexed by the
//! canonical key of their conclusion predicate. Given a grounded
//! proposition, [`KnowledgeBase::factor_context`] walks every abstraction of
//! it, looks up the links concluding that abstraction, and pushes the
//! proposition's constants back through each link's role mappings to
//! recover the grounded premise group.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::{Argument, CalculusError, Predicate, Proposition, PropositionGroup, Substitution};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KbError {
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("{conclusion} is not an abstraction of {proposition}")]
    Mismatch { conclusion: String, proposition: String },
    #[error("no value for group {0}")]
    MissingGroupValue(String),
    #[error(transparent)]
    Calculus(#[from] CalculusError),
}

fn invalid(msg: impl Into<String>) -> KbError {
    KbError::InvalidLink(msg.into())
}

/// Canonical identity of a link; weights are keyed by it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(String);

impl LinkId {
    pub fn new(id: impl Into<String>) -> Self {
        LinkId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Premise role `r` -> conclusion role `s`: the argument at `r` in the
/// premise fills `s` in the conclusion.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoleSetMapping(BTreeMap<String, String>);

impl RoleSetMapping {
    pub fn new<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        RoleSetMapping(pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect())
    }

    /// Same role on both sides for each of `roles`.
    pub fn identity<'a>(roles: impl IntoIterator<Item = &'a str>) -> Self {
        RoleSetMapping::new(roles.into_iter().map(|r| (r, r)))
    }

    pub fn get(&self, premise_role: &str) -> Option<&str> {
        self.0.get(premise_role).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for RoleSetMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (r, s)) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{r}>{s}")?;
        }
        f.write_str("}")
    }
}

/// One premise predicate, its conclusion, and the role mapping between them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PredicateImplicationLink {
    premise: Predicate,
    conclusion: Predicate,
    mapping: RoleSetMapping,
}

impl PredicateImplicationLink {
    pub fn new(premise: Predicate, conclusion: Predicate, mapping: RoleSetMapping) -> Result<Self, KbError> {
        let premise_open: BTreeSet<&str> = premise.roles().open_roles().collect();
        let conclusion_open: BTreeSet<&str> = conclusion.roles().open_roles().collect();
        if conclusion_open.is_empty() {
            return Err(invalid(format!("conclusion {conclusion} has no open roles")));
        }
        if premise_open.len() > conclusion_open.len() {
            return Err(invalid(format!(
                "premise {premise} has {} open roles, conclusion {conclusion} only {}",
                premise_open.len(),
                conclusion_open.len()
            )));
        }
        let mut images = BTreeSet::new();
        for (r, s) in mapping.iter() {
            if !premise_open.contains(r) {
                return Err(invalid(format!("mapped role {r} is not open in premise {premise}")));
            }
            if !conclusion_open.contains(s) {
                return Err(invalid(format!(
                    "mapped role {s} is not open in conclusion {conclusion}"
                )));
            }
            if !images.insert(s) {
                return Err(invalid(format!("role mapping {mapping} is not injective")));
            }
            let (pt, ct) = (
                premise.roles().get(r).map(Argument::type_name),
                conclusion.roles().get(s).map(Argument::type_name),
            );
            if pt != ct {
                return Err(invalid(format!(
                    "role {r} of {premise} and role {s} of {conclusion} differ in type"
                )));
            }
        }
        if let Some(r) = premise_open.iter().find(|r| mapping.get(r).is_none()) {
            return Err(invalid(format!("open role {r} of premise {premise} is not mapped")));
        }
        Ok(PredicateImplicationLink {
            premise,
            conclusion,
            mapping,
        })
    }

    pub fn premise(&self) -> &Predicate {
        &self.premise
    }

    pub fn conclusion(&self) -> &Predicate {
        &self.conclusion
    }

    pub fn mapping(&self) -> &RoleSetMapping {
        &self.mapping
    }

    /// Ground the premise using the constants of `p`, which must instantiate
    /// the conclusion.
    fn ground_premise(&self, p: &Proposition) -> Result<Proposition, KbError> {
        let mut sub = Substitution::new();
        for (r, s) in self.mapping.iter() {
            let constant = p.constant(s).ok_or_else(|| KbError::Mismatch {
                conclusion: self.conclusion.to_string(),
                proposition: p.to_string(),
            })?;
            sub.insert(r.to_string(), constant.clone());
        }
        Ok(Proposition::new(self.premise.bind(&sub)?)?)
    }
}

/// A conjunction of premises sharing one conclusion predicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ConjoinedImplicationLink {
    premises: Vec<PredicateImplicationLink>,
    id: LinkId,
}

impl ConjoinedImplicationLink {
    pub fn new(premises: Vec<PredicateImplicationLink>) -> Result<Self, KbError> {
        let first = premises
            .first()
            .ok_or_else(|| invalid("a link needs at least one premise"))?;
        let conclusion = first.conclusion.to_string();
        if let Some(other) = premises.iter().find(|l| l.conclusion.to_string() != conclusion) {
            return Err(invalid(format!(
                "premises conclude both {conclusion} and {}",
                other.conclusion
            )));
        }
        let body: Vec<String> = premises.iter().map(|l| format!("{}{}", l.premise, l.mapping)).collect();
        let id = LinkId(format!("{}=>{}", body.join("&"), conclusion));
        Ok(ConjoinedImplicationLink { premises, id })
    }

    /// Single-premise link.
    pub fn single(premise: Predicate, conclusion: Predicate, mapping: RoleSetMapping) -> Result<Self, KbError> {
        Self::new(vec![PredicateImplicationLink::new(premise, conclusion, mapping)?])
    }

    pub fn id(&self) -> &LinkId {
        &self.id
    }

    pub fn premises(&self) -> &[PredicateImplicationLink] {
        &self.premises
    }

    pub fn conclusion(&self) -> &Predicate {
        &self.premises[0].conclusion
    }

    /// The unique grounded premise group linked to `p` by this link.
    pub fn backfill(&self, p: &Proposition) -> Result<PropositionGroup, KbError> {
        if !self.conclusion().is_abstraction_of(p) {
            return Err(KbError::Mismatch {
                conclusion: self.conclusion().to_string(),
                proposition: p.to_string(),
            });
        }
        let members = self
            .premises
            .iter()
            .map(|l| l.ground_premise(p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PropositionGroup::new(members))
    }
}

/// A conclusion, the link used to reach it, and the grounded premise group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropositionFactor {
    pub conclusion: Proposition,
    pub link: ConjoinedImplicationLink,
    pub premise_group: PropositionGroup,
}

/// `(conclusion value, link, group value)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Feature {
    pub conclusion_value: bool,
    pub link_id: LinkId,
    pub group_value: bool,
}

impl Feature {
    pub fn new(conclusion_value: bool, link_id: LinkId, group_value: bool) -> Self {
        Feature {
            conclusion_value,
            link_id,
            group_value,
        }
    }

    /// The always-on bias feature for propositions of one predicate type.
    pub fn bias(conclusion_value: bool, type_key: &str) -> Self {
        Feature::new(conclusion_value, LinkId(format!("bias:{type_key}")), true)
    }

    /// The same feature scored for the other conclusion value.
    pub fn flipped(&self) -> Self {
        Feature {
            conclusion_value: !self.conclusion_value,
            ..self.clone()
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}|{}|{}",
            u8::from(self.conclusion_value),
            self.link_id,
            u8::from(self.group_value)
        )
    }
}

impl std::str::FromStr for Feature {
    type Err = KbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || invalid(format!("malformed feature {s:?}"));
        let bit = |t: &str| match t {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad()),
        };
        let (head, rest) = s.split_once('|').ok_or_else(bad)?;
        let (link, tail) = rest.rsplit_once('|').ok_or_else(bad)?;
        if link.is_empty() {
            return Err(bad());
        }
        Ok(Feature::new(bit(head)?, LinkId::new(link), bit(tail)?))
    }
}

/// One feature per factor, scored for `p_value`.
pub fn feature_vector(
    p_value: bool,
    factors: &[PropositionFactor],
    group_values: &BTreeMap<String, bool>,
) -> Result<Vec<Feature>, KbError> {
    factors
        .iter()
        .map(|f| {
            let key = f.premise_group.canonical_key();
            let g = *group_values.get(&key).ok_or(KbError::MissingGroupValue(key))?;
            Ok(Feature::new(p_value, f.link.id.clone(), g))
        })
        .collect()
}

/// The set of quantified implication links.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeBase {
    links: BTreeMap<LinkId, ConjoinedImplicationLink>,
    by_conclusion: BTreeMap<String, BTreeSet<LinkId>>,
}

impl KnowledgeBase {
    pub fn new() -> Self {
        KnowledgeBase::default()
    }

    /// Idempotent: re-adding an identical link returns the same id.
    pub fn add_link(&mut self, link: ConjoinedImplicationLink) -> LinkId {
        let id = link.id.clone();
        self.by_conclusion
            .entry(link.conclusion().canonical_key())
            .or_default()
            .insert(id.clone());
        self.links.entry(id.clone()).or_insert(link);
        id
    }

    pub fn link(&self, id: &LinkId) -> Option<&ConjoinedImplicationLink> {
        self.links.get(id)
    }

    /// All links, ordered by id.
    pub fn links(&self) -> impl Iterator<Item = &ConjoinedImplicationLink> {
        self.links.values()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Links whose conclusion is exactly `q` (function, roles, argument types
    /// and any filled constants), ordered by id.
    pub fn backward_links(&self, q: &Predicate) -> Vec<&ConjoinedImplicationLink> {
        self.by_conclusion
            .get(&q.canonical_key())
            .into_iter()
            .flatten()
            .map(|id| &self.links[id])
            .collect()
    }

    /// Every factor reaching `p`: all abstractions, all backward links,
    /// deduplicated by (link, group). Empty for roots.
    pub fn factor_context(&self, p: &Proposition) -> Vec<PropositionFactor> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for q in p.abstractions() {
            for link in self.backward_links(&q) {
                let group = link.backfill(p).expect("conclusion key matched an abstraction of p");
                if seen.insert((link.id.clone(), group.canonical_key())) {
                    out.push(PropositionFactor {
                        conclusion: p.clone(),
                        link: link.clone(),
                        premise_group: group,
                    });
                }
            }
        }
        out.sort_by(|a, b| {
            (a.link.id(), a.premise_group.canonical_key()).cmp(&(b.link.id(), b.premise_group.canonical_key()))
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(s: &str) -> Predicate {
        s.parse().unwrap()
    }

    fn prop(s: &str) -> Proposition {
        s.parse().unwrap()
    }

    fn like_same() -> ConjoinedImplicationLink {
        ConjoinedImplicationLink::single(
            pred("like(subj=?jack,dobj=?jill)"),
            pred("date(subj=?jack,dobj=?jill)"),
            RoleSetMapping::identity(["subj", "dobj"]),
        )
        .unwrap()
    }

    fn like_reversed() -> ConjoinedImplicationLink {
        ConjoinedImplicationLink::single(
            pred("like(subj=?jill,dobj=?jack)"),
            pred("date(subj=?jack,dobj=?jill)"),
            RoleSetMapping::new([("subj", "dobj"), ("dobj", "subj")]),
        )
        .unwrap()
    }

    fn mutual() -> ConjoinedImplicationLink {
        let concl = pred("date(subj=?jack,dobj=?jill)");
        ConjoinedImplicationLink::new(vec![
            PredicateImplicationLink::new(
                pred("like(subj=?jack,dobj=?jill)"),
                concl.clone(),
                RoleSetMapping::identity(["subj", "dobj"]),
            )
            .unwrap(),
            PredicateImplicationLink::new(
                pred("like(subj=?jill,dobj=?jack)"),
                concl,
                RoleSetMapping::new([("subj", "dobj"), ("dobj", "subj")]),
            )
            .unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn add_same_and_reversed_links() {
        let mut kb = KnowledgeBase::new();
        let a = kb.add_link(like_same());
        let b = kb.add_link(like_reversed());
        assert_ne!(a, b);
        assert_eq!(kb.add_link(like_same()), a);
        assert_eq!(kb.len(), 2);
    }

    #[test]
    fn rejects_premise_with_more_open_roles() {
        let err = PredicateImplicationLink::new(
            pred("send(subj=?p,dobj=?t,iobj=?q)"),
            pred("know(subj=?p,dobj=?q)"),
            RoleSetMapping::new([("subj", "subj"), ("iobj", "dobj")]),
        )
        .unwrap_err();
        assert!(matches!(err, KbError::InvalidLink(_)));
    }

    #[test]
    fn rejects_bad_mappings() {
        let concl = pred("date(subj=?jack,dobj=?jill)");
        // unmapped premise role
        assert!(PredicateImplicationLink::new(
            pred("like(subj=?jack,dobj=?jill)"),
            concl.clone(),
            RoleSetMapping::new([("subj", "subj")])
        )
        .is_err());
        // type mismatch
        assert!(PredicateImplicationLink::new(
            pred("like(subj=?jack,dobj=?jill)"),
            concl.clone(),
            RoleSetMapping::new([("subj", "dobj"), ("dobj", "subj")])
        )
        .is_err());
        // non-injective
        assert!(PredicateImplicationLink::new(
            pred("like(subj=?jack,dobj=?jack)"),
            pred("date(subj=?jack,dobj=?jack)"),
            RoleSetMapping::new([("subj", "subj"), ("dobj", "subj")])
        )
        .is_err());
        // mixed conclusions
        let a = PredicateImplicationLink::new(
            pred("lonely(subj=?jack)"),
            pred("date(subj=?jack,dobj=?jill)"),
            RoleSetMapping::identity(["subj"]),
        )
        .unwrap();
        let b = PredicateImplicationLink::new(
            pred("lonely(subj=?jack)"),
            pred("like(subj=?jack,dobj=?jill)"),
            RoleSetMapping::identity(["subj"]),
        )
        .unwrap();
        assert!(ConjoinedImplicationLink::new(vec![a, b]).is_err());
        assert!(ConjoinedImplicationLink::new(vec![]).is_err());
    }

    #[test]
    fn backward_links_finds_conjoined_link() {
        let mut kb = KnowledgeBase::new();
        kb.add_link(like_same());
        kb.add_link(like_reversed());
        let id = kb.add_link(mutual());
        let found = kb.backward_links(&pred("date(subj=?jack,dobj=?jill)"));
        assert_eq!(found.len(), 3);
        assert!(found.iter().any(|l| l.id() == &id));
        assert!(KnowledgeBase::new()
            .backward_links(&pred("date(subj=?jack,dobj=?jill)"))
            .is_empty());
        assert!(kb.backward_links(&pred("date(subj=?jill,dobj=?jack)")).is_empty());
    }

    #[test]
    fn backfill_reversed_mapping() {
        let p = prop("date(subj=jack1:jack,dobj=jill1:jill)");
        let g = like_reversed().backfill(&p).unwrap();
        assert_eq!(g.members(), &[prop("like(subj=jill1:jill,dobj=jack1:jack)")]);
        let g = like_same().backfill(&p).unwrap();
        assert_eq!(g.members(), &[prop("like(subj=jack1:jack,dobj=jill1:jill)")]);
        let g = mutual().backfill(&p).unwrap();
        assert_eq!(
            g,
            PropositionGroup::new(vec![
                prop("like(subj=jack1:jack,dobj=jill1:jill)"),
                prop("like(subj=jill1:jill,dobj=jack1:jack)"),
            ])
        );
    }

    #[test]
    fn backfill_mismatch() {
        let p = prop("like(subj=jack1:jack,dobj=jill1:jill)");
        assert!(matches!(like_same().backfill(&p), Err(KbError::Mismatch { .. })));
    }

    #[test]
    fn backfill_keeps_filled_premise_constants() {
        let link = ConjoinedImplicationLink::single(
            pred("knows(subj=?person,dobj=alice:person)"),
            pred("popular(subj=?person)"),
            RoleSetMapping::identity(["subj"]),
        )
        .unwrap();
        let g = link.backfill(&prop("popular(subj=bob:person)")).unwrap();
        assert_eq!(g.members(), &[prop("knows(dobj=alice:person,subj=bob:person)")]);
    }

    #[test]
    fn partial_abstraction_conclusions_match() {
        // conclusion with a filled role matches only that constant
        let link = ConjoinedImplicationLink::single(
            pred("lonely(subj=?jack)"),
            pred("like(subj=?jack,dobj=jill1:jill)"),
            RoleSetMapping::identity(["subj"]),
        )
        .unwrap();
        let mut kb = KnowledgeBase::new();
        kb.add_link(link);
        assert_eq!(
            kb.factor_context(&prop("like(subj=jack1:jack,dobj=jill1:jill)")).len(),
            1
        );
        assert!(kb
            .factor_context(&prop("like(subj=jack1:jack,dobj=jill2:jill)"))
            .is_empty());
    }

    #[test]
    fn factor_context_dedups_and_roots_are_empty() {
        let mut kb = KnowledgeBase::new();
        kb.add_link(mutual());
        let ctx = kb.factor_context(&prop("date(subj=jack1:jack,dobj=jill1:jill)"));
        assert_eq!(ctx.len(), 1);
        assert_eq!(ctx[0].premise_group.len(), 2);
        assert!(kb.factor_context(&prop("lonely(subj=jack1:jack)")).is_empty());
    }

    #[test]
    fn features_from_context() {
        let mut kb = KnowledgeBase::new();
        let id = kb.add_link(mutual());
        let ctx = kb.factor_context(&prop("date(subj=jack1:jack,dobj=jill1:jill)"));
        let mut values = BTreeMap::new();
        values.insert(ctx[0].premise_group.canonical_key(), true);
        let feats = feature_vector(true, &ctx, &values).unwrap();
        assert_eq!(feats, vec![Feature::new(true, id, true)]);
        assert!(feature_vector(true, &[], &values).unwrap().is_empty());
        assert!(matches!(
            feature_vector(true, &ctx, &BTreeMap::new()),
            Err(KbError::MissingGroupValue(_))
        ));
    }

    #[test]
    fn two_links_give_two_features() {
        // parent(x) supports related(x, y) and related(y, x)
        let link = ConjoinedImplicationLink::single(
            pred("parent(subj=?person)"),
            pred("related(subj=?person,dobj=?person)"),
            RoleSetMapping::identity(["subj"]),
        )
        .unwrap();
        let link2 = ConjoinedImplicationLink::single(
            pred("parent(subj=?person)"),
            pred("related(subj=?person,dobj=?person)"),
            RoleSetMapping::new([("subj", "dobj")]),
        )
        .unwrap();
        let mut kb = KnowledgeBase::new();
        kb.add_link(link);
        kb.add_link(link2);
        let ctx = kb.factor_context(&prop("related(subj=ann:person,dobj=bo:person)"));
        assert_eq!(ctx.len(), 2);
        let mut values = BTreeMap::new();
        values.insert(ctx[0].premise_group.canonical_key(), true);
        values.insert(ctx[1].premise_group.canonical_key(), false);
        let feats = feature_vector(true, &ctx, &values).unwrap();
        assert_eq!(feats.len(), 2);
        assert_ne!(feats[0].group_value, feats[1].group_value);
    }

    #[test]
    fn feature_string_round_trip() {
        let f = Feature::new(true, mutual().id().clone(), false);
        let s = f.to_string();
        assert_eq!(s.parse::<Feature>().unwrap(), f);
        assert!("2|x|0".parse::<Feature>().is_err());
        assert!("1||0".parse::<Feature>().is_err());
    }
}
