//! Key-value first-order calculus.
//!
//! Predicates are a function name plus a map from role label to argument.
//! Arguments wrap either a typed constant or a typed variable; a predicate
//! with no variables left is a [`Proposition`] and is a boolean random
//! variable of the network.
//!
//! Every value has a canonical string key:
//!
//! ```text
//! like(dobj=jill1:jill,subj=jack1:jack)   proposition
//! like(dobj=?jill,subj=jack1:jack)        predicate, dobj open
//! and[lonely(subj=jack1:jack),...]        proposition group
//! ```
//!
//! Roles are sorted lexicographically, so the key does not depend on the
//! order roles were inserted. Names are restricted to `[A-Za-z0-9_.-]`,
//! which keeps the grammar unambiguous and lets [`Predicate::from_str`]
//! parse any key it produced.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CalculusError {
    #[error("invalid {kind} name {value:?}: must be nonempty and use only [A-Za-z0-9_.-]")]
    InvalidName { kind: &'static str, value: String },
    #[error("duplicate role {0:?}")]
    DuplicateRole(String),
    #[error("role {role:?} expects type {expected:?}, got constant of type {found:?}")]
    TypeMismatch {
        role: String,
        expected: String,
        found: String,
    },
    #[error("role {role:?} is not an open role of {predicate}")]
    IllegalSubstitution { role: String, predicate: String },
    #[error("{0} has open roles and is not a proposition")]
    NotGrounded(String),
    #[error("cannot parse {input:?}: {reason}")]
    Parse { input: String, reason: String },
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '-'))
}

fn check_name(kind: &'static str, value: &str) -> Result<(), CalculusError> {
    if valid_name(value) {
        Ok(())
    } else {
        Err(CalculusError::InvalidName {
            kind,
            value: value.to_string(),
        })
    }
}

/// A reference to an entity, read as a particular type.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Constant {
    entity: String,
    type_name: String,
}

impl Constant {
    pub fn new(entity: impl Into<String>, type_name: impl Into<String>) -> Result<Self, CalculusError> {
        let entity = entity.into();
        let type_name = type_name.into();
        check_name("entity", &entity)?;
        check_name("type", &type_name)?;
        Ok(Constant { entity, type_name })
    }

    pub fn entity(&self) -> &str {
        &self.entity
    }

    pub fn type_name(&self) -> &str {
        &self.type_name
    }
}

impl fmt::Display for Constant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.entity, self.type_name)
    }
}

/// A typed hole. Two open roles of the same type are told apart by role label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable {
    type_name: String,
}

impl Variable {
    pub fn new(type_name: impl Into<String>) -> Result<Self, CalculusError> {
        let type_name = type_name.into();
        check_name("type", &type_name)?;
        Ok(Variable { type_name })
    }

    pub fn type_name(&self) -> &str {
        &self.type_name
    }

    /// Whether `constant` may be substituted for this variable.
    pub fn admits(&self, constant: &Constant) -> bool {
        self.type_name == constant.type_name
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "?{}", self.type_name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Argument {
    Constant(Constant),
    Variable(Variable),
}

impl Argument {
    pub fn constant(entity: &str, type_name: &str) -> Result<Self, CalculusError> {
        Constant::new(entity, type_name).map(Argument::Constant)
    }

    pub fn variable(type_name: &str) -> Result<Self, CalculusError> {
        Variable::new(type_name).map(Argument::Variable)
    }

    pub fn is_variable(&self) -> bool {
        matches!(self, Argument::Variable(_))
    }

    pub fn as_constant(&self) -> Option<&Constant> {
        match self {
            Argument::Constant(c) => Some(c),
            Argument::Variable(_) => None,
        }
    }

    pub fn as_variable(&self) -> Option<&Variable> {
        match self {
            Argument::Variable(v) => Some(v),
            Argument::Constant(_) => None,
        }
    }

    pub fn type_name(&self) -> &str {
        match self {
            Argument::Constant(c) => c.type_name(),
            Argument::Variable(v) => v.type_name(),
        }
    }

    /// The variable of the same type; constants lose their entity.
    pub fn abstracted(&self) -> Argument {
        Argument::Variable(Variable {
            type_name: self.type_name().to_string(),
        })
    }
}

impl fmt::Display for Argument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Argument::Constant(c) => c.fmt(f),
            Argument::Variable(v) => v.fmt(f),
        }
    }
}

/// Role label to argument. Iteration is in sorted role order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RoleMap {
    entries: BTreeMap<String, Argument>,
}

impl RoleMap {
    pub fn new() -> Self {
        RoleMap::default()
    }

    pub fn insert(&mut self, role: impl Into<String>, argument: Argument) -> Result<(), CalculusError> {
        let role = role.into();
        check_name("role", &role)?;
        if self.entries.contains_key(&role) {
            return Err(CalculusError::DuplicateRole(role));
        }
        self.entries.insert(role, argument);
        Ok(())
    }

    pub fn get(&self, role: &str) -> Option<&Argument> {
        self.entries.get(role)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Argument)> {
        self.entries.iter().map(|(r, a)| (r.as_str(), a))
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn open_roles(&self) -> impl Iterator<Item = &str> {
        self.iter().filter(|(_, a)| a.is_variable()).map(|(r, _)| r)
    }

    pub fn filled_roles(&self) -> impl Iterator<Item = &str> {
        self.iter().filter(|(_, a)| !a.is_variable()).map(|(r, _)| r)
    }
}

/// Substitution of constants into open roles, keyed by role label.
pub type Substitution = BTreeMap<String, Constant>;

/// A function name applied to a role-argument map.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Predicate {
    function: String,
    roles: RoleMap,
}

impl Predicate {
    pub fn new<I, R>(function: impl Into<String>, roles: I) -> Result<Self, CalculusError>
    where
        I: IntoIterator<Item = (R, Argument)>,
        R: Into<String>,
    {
        let function = function.into();
        check_name("function", &function)?;
        let mut map = RoleMap::new();
        for (role, arg) in roles {
            map.insert(role, arg)?;
        }
        Ok(Predicate { function, roles: map })
    }

    pub fn function(&self) -> &str {
        &self.function
    }

    pub fn roles(&self) -> &RoleMap {
        &self.roles
    }

    pub fn open_role_count(&self) -> usize {
        self.roles.open_roles().count()
    }

    pub fn is_grounded(&self) -> bool {
        self.open_role_count() == 0
    }

    /// Fill open roles with constants of matching type.
    pub fn bind(&self, substitution: &Substitution) -> Result<Predicate, CalculusError> {
        let mut out = self.clone();
        for (role, constant) in substitution {
            let slot = out
                .roles
                .entries
                .get_mut(role)
                .ok_or_else(|| CalculusError::IllegalSubstitution {
                    role: role.clone(),
                    predicate: self.to_string(),
                })?;
            let var = slot.as_variable().ok_or_else(|| CalculusError::IllegalSubstitution {
                role: role.clone(),
                predicate: self.to_string(),
            })?;
            if !var.admits(constant) {
                return Err(CalculusError::TypeMismatch {
                    role: role.clone(),
                    expected: var.type_name().to_string(),
                    found: constant.type_name().to_string(),
                });
            }
            *slot = Argument::Constant(constant.clone());
        }
        Ok(out)
    }

    /// Replace the arguments at `roles` with variables of the same type.
    /// Roles that are already open stay open.
    pub fn abstract_roles<'a, I>(&self, roles: I) -> Result<Predicate, CalculusError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut out = self.clone();
        for role in roles {
            let slot = out
                .roles
                .entries
                .get_mut(role)
                .ok_or_else(|| CalculusError::IllegalSubstitution {
                    role: role.to_string(),
                    predicate: self.to_string(),
                })?;
            *slot = slot.abstracted();
        }
        Ok(out)
    }

    /// The predicate with every role opened: function name, role labels and
    /// argument types. Used to key per-type bias weights.
    pub fn type_key(&self) -> String {
        let all = self.roles.iter().map(|(r, a)| (r.to_string(), a.abstracted()));
        let opened = Predicate {
            function: self.function.clone(),
            roles: RoleMap { entries: all.collect() },
        };
        opened.to_string()
    }

    /// Whether `self` can be obtained from `p` by abstracting some roles.
    /// A proposition is not an abstraction of itself.
    pub fn is_abstraction_of(&self, p: &Proposition) -> bool {
        let target = p.predicate();
        if self.function != target.function || self.roles.len() != target.roles.len() {
            return false;
        }
        let mut opened = 0;
        for (role, arg) in self.roles.iter() {
            let Some(Argument::Constant(c)) = target.roles.get(role) else {
                return false;
            };
            match arg {
                Argument::Constant(own) if own == c => {}
                Argument::Constant(_) => return false,
                Argument::Variable(v) if v.admits(c) => opened += 1,
                Argument::Variable(_) => return false,
            }
        }
        opened > 0
    }

    pub fn canonical_key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.function)?;
        for (i, (role, arg)) in self.roles.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{role}={arg}")?;
        }
        f.write_str(")")
    }
}

impl FromStr for Predicate {
    type Err = CalculusError;

    fn from_str(input: &str) -> Result<Self, Self::Err> {
        let fail = |reason: &str| CalculusError::Parse {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let s = input.trim();
        let open = s.find('(').ok_or_else(|| fail("missing '('"))?;
        let body = s[open + 1..]
            .strip_suffix(')')
            .ok_or_else(|| fail("missing closing ')'"))?;
        let function = &s[..open];
        let mut roles = Vec::new();
        if !body.is_empty() {
            for entry in body.split(',') {
                let (role, arg) = entry.split_once('=').ok_or_else(|| fail("role entry without '='"))?;
                let arg = if let Some(ty) = arg.strip_prefix('?') {
                    Argument::variable(ty)?
                } else {
                    let (entity, ty) = arg.split_once(':').ok_or_else(|| fail("constant without ':type'"))?;
                    Argument::constant(entity, ty)?
                };
                roles.push((role.to_string(), arg));
            }
        }
        Predicate::new(function, roles)
    }
}

impl Serialize for Predicate {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Predicate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A fully grounded predicate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Proposition(Predicate);

impl Proposition {
    pub fn new(predicate: Predicate) -> Result<Self, CalculusError> {
        if predicate.is_grounded() {
            Ok(Proposition(predicate))
        } else {
            Err(CalculusError::NotGrounded(predicate.to_string()))
        }
    }

    pub fn predicate(&self) -> &Predicate {
        &self.0
    }

    pub fn into_predicate(self) -> Predicate {
        self.0
    }

    pub fn function(&self) -> &str {
        self.0.function()
    }

    /// The constant filling `role`.
    pub fn constant(&self, role: &str) -> Option<&Constant> {
        self.0.roles().get(role).and_then(Argument::as_constant)
    }

    /// Every predicate obtained by opening a nonempty subset of the roles,
    /// ordered by subset bitmask over the sorted role labels. `2^n - 1` items.
    pub fn abstractions(&self) -> Vec<Predicate> {
        let roles: Vec<&str> = self.0.roles().roles().collect();
        let n = roles.len();
        (1u64..(1u64 << n))
            .map(|mask| {
                let chosen = roles
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, r)| *r);
                self.0
                    .abstract_roles(chosen)
                    .expect("roles come from the predicate itself")
            })
            .collect()
    }

    pub fn type_key(&self) -> String {
        self.0.type_key()
    }

    pub fn canonical_key(&self) -> String {
        self.0.to_string()
    }
}

impl TryFrom<Predicate> for Proposition {
    type Error = CalculusError;

    fn try_from(value: Predicate) -> Result<Self, Self::Error> {
        Proposition::new(value)
    }
}

impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl FromStr for Proposition {
    type Err = CalculusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Proposition::new(s.parse()?)
    }
}

impl Serialize for Proposition {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Proposition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let p = Predicate::deserialize(deserializer)?;
        Proposition::new(p).map_err(serde::de::Error::custom)
    }
}

/// A conjunction of propositions. Members are kept sorted and deduplicated,
/// so identity ignores the order they were listed in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PropositionGroup {
    members: Vec<Proposition>,
}

impl PropositionGroup {
    pub fn new(mut members: Vec<Proposition>) -> Self {
        members.sort_by_cached_key(Proposition::canonical_key);
        members.dedup();
        PropositionGroup { members }
    }

    pub fn members(&self) -> &[Proposition] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn canonical_key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for PropositionGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("and[")?;
        for (i, m) in self.members.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            m.fmt(f)?;
        }
        f.write_str("]")
    }
}
