use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, Query, Triple};

/// A chain of triples starting at the query source.
pub type Path = Vec<Triple>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Bfs,
    #[serde(alias = "one-hop")]
    OneHop,
    /// Union of paths read from a file.
    Paths,
    /// Union of paths decoded by the built-in beam search.
    Beam,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Bfs => "bfs",
            Strategy::OneHop => "onehop",
            Strategy::Paths => "paths",
            Strategy::Beam => "beam",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bfs" => Ok(Strategy::Bfs),
            "onehop" | "one-hop" => Ok(Strategy::OneHop),
            "paths" => Ok(Strategy::Paths),
            "beam" => Ok(Strategy::Beam),
            other => Err(Error::InvalidArgument(format!("unknown strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub strategy: Strategy,
    pub paths: Option<Vec<Path>>,
}

/// The retrieved subgraph for one query.
///
/// `nodes[0]` is always the query source, even with no edges; every edge
/// endpoint appears in `nodes`; `terminal[i]` flags `nodes[i]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphContext {
    pub query: Query,
    pub edges: Vec<Triple>,
    pub nodes: Vec<EntityId>,
    pub terminal: Vec<bool>,
    pub provenance: Provenance,
}

impl SubgraphContext {
    /// Derives the node list (source, then endpoints in first-occurrence
    /// order) and flags each node found in `terminals`.
    pub fn from_edges(
        query: Query,
        edges: Vec<Triple>,
        terminals: &HashSet<EntityId>,
        provenance: Provenance,
    ) -> Self {
        let mut nodes = vec![query.source];
        let mut seen: HashSet<EntityId> = HashSet::from([query.source]);
        for e in &edges {
            for x in [e.head, e.tail] {
                if seen.insert(x) {
                    nodes.push(x);
                }
            }
        }
        let terminal = nodes.iter().map(|n| terminals.contains(n)).collect();
        SubgraphContext {
            query,
            edges,
            nodes,
            terminal,
            provenance,
        }
    }

    /// Context with only the source node.
    pub fn empty(query: Query, strategy: Strategy) -> Self {
        Self::from_edges(
            query,
            Vec::new(),
            &HashSet::new(),
            Provenance {
                strategy,
                paths: None,
            },
        )
    }

    /// Token count `m + n` seen by the reader.
    pub fn size(&self) -> usize {
        self.nodes.len() + self.edges.len()
    }

    pub fn contains_entity(&self, e: EntityId) -> bool {
        self.nodes.contains(&e)
    }

    pub fn terminals(&self) -> HashSet<EntityId> {
        self.nodes
            .iter()
            .zip(&self.terminal)
            .filter(|(_, &t)| t)
            .map(|(n, _)| *n)
            .collect()
    }

    /// Position of `e` in `nodes`.
    pub fn node_position(&self, e: EntityId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == e)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.first() != Some(&self.query.source) {
            return Err(Error::InvalidArgument("context does not start at the source".into()));
        }
        if self.terminal.len() != self.nodes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} terminal flags for {} nodes",
                self.terminal.len(),
                self.nodes.len()
            )));
        }
        let nodes: HashSet<EntityId> = self.nodes.iter().copied().collect();
        if nodes.len() != self.nodes.len() {
            return Err(Error::InvalidArgument("duplicate context nodes".into()));
        }
        for e in &self.edges {
            if !nodes.contains(&e.head) || !nodes.contains(&e.tail) {
                return Err(Error::InvalidArgument(format!("edge {e:?} has an endpoint outside nodes")));
            }
        }
        Ok(())
    }
}
