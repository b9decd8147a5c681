//! Query-time proposition graph.
//!
//! Starting from the query targets, the builder repeatedly asks the
//! knowledge base for each proposition's factor context. Every premise group
//! becomes an AND node feeding the proposition; every group member becomes a
//! proposition node feeding the group. Nodes are numbered in a topological
//! order (parents before children, ties broken by canonical key) and that
//! numbering is the iteration order everywhere downstream.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calculus::{Proposition, PropositionGroup};
use crate::kb::{KnowledgeBase, LinkId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("theory is cyclic through {0}")]
    Cyclic(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NodeKind {
    Proposition(Proposition),
    Group(PropositionGroup),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphNode {
    pub id: NodeId,
    pub key: String,
    pub kind: NodeKind,
}

impl GraphNode {
    pub fn is_group(&self) -> bool {
        matches!(self.kind, NodeKind::Group(_))
    }

    pub fn as_proposition(&self) -> Option<&Proposition> {
        match &self.kind {
            NodeKind::Proposition(p) => Some(p),
            NodeKind::Group(_) => None,
        }
    }
}

/// Directed edge. Group-to-proposition edges carry the ids of the links
/// that produced them; member-to-group edges carry none.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edge {
    pub parent: NodeId,
    pub child: NodeId,
    pub links: Vec<LinkId>,
}

#[derive(Debug, Clone, Default)]
pub struct PropositionGraph {
    nodes: Vec<GraphNode>,
    edges: Vec<Edge>,
    parent_edges: Vec<Vec<usize>>,
    child_edges: Vec<Vec<usize>>,
    index: BTreeMap<String, NodeId>,
}

enum Pending {
    Prop(Proposition),
    Group(PropositionGroup),
}

/// Build the closure of a single target.
pub fn build_graph(kb: &KnowledgeBase, target: &Proposition) -> Result<PropositionGraph, GraphError> {
    build_graph_multi(kb, std::slice::from_ref(target))
}

/// Union of the closures of every target.
pub fn build_graph_multi(kb: &KnowledgeBase, targets: &[Proposition]) -> Result<PropositionGraph, GraphError> {
    let mut found: BTreeMap<String, Pending> = BTreeMap::new();
    // child key -> parent key -> links
    let mut parents: BTreeMap<String, BTreeMap<String, BTreeSet<LinkId>>> = BTreeMap::new();
    let mut work: Vec<Proposition> = targets.to_vec();

    while let Some(p) = work.pop() {
        let pkey = p.canonical_key();
        if found.contains_key(&pkey) {
            continue;
        }
        let context = kb.factor_context(&p);
        found.insert(pkey.clone(), Pending::Prop(p));
        for factor in context {
            let gkey = factor.premise_group.canonical_key();
            parents
                .entry(pkey.clone())
                .or_default()
                .entry(gkey.clone())
                .or_default()
                .insert(factor.link.id().clone());
            if found.contains_key(&gkey) {
                continue;
            }
            let members = parents.entry(gkey.clone()).or_default();
            for m in factor.premise_group.members() {
                members.entry(m.canonical_key()).or_default();
                work.push(m.clone());
            }
            found.insert(gkey, Pending::Group(factor.premise_group));
        }
    }

    // Kahn's algorithm, ready set ordered by key.
    let mut children: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut indegree: BTreeMap<&str, usize> = BTreeMap::new();
    for key in found.keys() {
        let ps = parents.get(key).map(BTreeMap::len).unwrap_or(0);
        indegree.insert(key, ps);
        for parent in parents.get(key).into_iter().flat_map(BTreeMap::keys) {
            children.entry(parent).or_default().push(key);
        }
    }
    let mut ready: BTreeSet<&str> = indegree.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
    let mut order = Vec::with_capacity(found.len());
    while let Some(k) = ready.pop_first() {
        order.push(k.to_string());
        for c in children.get(k).into_iter().flatten() {
            let d = indegree.get_mut(c).expect("child is a found node");
            *d -= 1;
            if *d == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != found.len() {
        let stuck = indegree
            .iter()
            .find(|(_, d)| **d > 0)
            .map(|(k, _)| k.to_string())
            .unwrap_or_default();
        return Err(GraphError::Cyclic(stuck));
    }

    let mut graph = PropositionGraph::default();
    for key in order {
        let id = NodeId(graph.nodes.len());
        let kind = match found.remove(&key).expect("ordered keys are found keys") {
            Pending::Prop(p) => NodeKind::Proposition(p),
            Pending::Group(g) => NodeKind::Group(g),
        };
        graph.index.insert(key.clone(), id);
        graph.nodes.push(GraphNode { id, key, kind });
        graph.parent_edges.push(Vec::new());
        graph.child_edges.push(Vec::new());
    }
    for node in 0..graph.nodes.len() {
        let key = graph.nodes[node].key.clone();
        let mut ps: Vec<(NodeId, Vec<LinkId>)> = parents
            .get(&key)
            .into_iter()
            .flatten()
            .map(|(pk, links)| (graph.index[pk], links.iter().cloned().collect()))
            .collect();
        ps.sort_by_key(|(id, _)| *id);
        for (parent, links) in ps {
            let e = graph.edges.len();
            graph.edges.push(Edge {
                parent,
                child: NodeId(node),
                links,
            });
            graph.parent_edges[node].push(e);
            graph.child_edges[parent.0].push(e);
        }
    }
    for list in &mut graph.child_edges {
        list.sort_by_key(|&e| graph.edges[e].child);
    }
    Ok(graph)
}

impl PropositionGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes in topological order.
    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &GraphNode {
        &self.nodes[id.0]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, e: usize) -> &Edge {
        &self.edges[e]
    }

    pub fn id_of(&self, key: &str) -> Option<NodeId> {
        self.index.get(key).copied()
    }

    pub fn require(&self, key: &str) -> Result<NodeId, GraphError> {
        self.id_of(key).ok_or_else(|| GraphError::UnknownNode(key.to_string()))
    }

    /// Edge indices into `id`, ordered by parent id.
    pub fn parent_edges(&self, id: NodeId) -> &[usize] {
        &self.parent_edges[id.0]
    }

    /// Edge indices out of `id`, ordered by child id.
    pub fn child_edges(&self, id: NodeId) -> &[usize] {
        &self.child_edges[id.0]
    }

    pub fn parents(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.parent_edges[id.0].iter().map(|&e| self.edges[e].parent)
    }

    pub fn children(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.child_edges[id.0].iter().map(|&e| self.edges[e].child)
    }

    pub fn max_fan_in(&self) -> usize {
        self.parent_edges.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Parents and children of `id`.
    pub fn markov_blanket(&self, id: NodeId) -> Result<BTreeSet<NodeId>, GraphError> {
        if id.0 >= self.nodes.len() {
            return Err(GraphError::UnknownNode(format!("#{}", id.0)));
        }
        Ok(self.parents(id).chain(self.children(id)).collect())
    }

    pub fn dump(&self) -> GraphDump {
        GraphDump {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDump {
                    id: n.id,
                    key: n.key.clone(),
                    kind: if n.is_group() { "group" } else { "proposition" }.to_string(),
                    parents: self.parents(n.id).collect(),
                    children: self.children(n.id).collect(),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDump {
                    parent: e.parent,
                    child: e.child,
                    links: e.links.clone(),
                })
                .collect(),
        }
    }
}

/// JSON form of a built graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDump {
    pub nodes: Vec<NodeDump>,
    pub edges: Vec<EdgeDump>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeDump {
    pub id: NodeId,
    pub key: String,
    pub kind: String,
    pub parents: Vec<NodeId>,
    pub children: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDump {
    pub parent: NodeId,
    pub child: NodeId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub links: Vec<LinkId>,
}
