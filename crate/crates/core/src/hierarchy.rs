//! Containment graph of places (rooms in areas, areas in a zoo, ...).

use indexmap::{IndexMap, IndexSet};
use thiserror::Error;

use crate::grammar::Toponym;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HierarchyError {
    #[error("spatial hierarchy contains a cycle through {0:?}")]
    Cycle(String),
    #[error("edge {parent:?} -> {child:?} violates levels ({parent_level} must exceed {child_level})")]
    LevelOrder {
        parent: String,
        child: String,
        parent_level: u32,
        child_level: u32,
    },
    #[error("hierarchy levels start at 1, got {0}")]
    ZeroLevel(u32),
    #[error("a place cannot contain itself: {0:?}")]
    SelfLoop(String),
}

#[derive(Clone, Debug, Default)]
struct Node {
    level: Option<u32>,
    children: IndexSet<Toponym>,
    parents: IndexSet<Toponym>,
}

/// Directed parent → child graph with optional explicit levels.
///
/// Nodes without an explicit level take `1 + max(child levels)`, so leaves
/// are level 1.
#[derive(Clone, Debug, Default)]
pub struct HierarchyGraph {
    nodes: IndexMap<Toponym, Node>,
    edge_count: usize,
}

impl HierarchyGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, name: Toponym, level: Option<u32>) -> Result<(), HierarchyError> {
        if let Some(0) = level {
            return Err(HierarchyError::ZeroLevel(0));
        }
        let node = self.nodes.entry(name).or_default();
        if level.is_some() {
            node.level = level;
        }
        Ok(())
    }

    pub fn contains(&self, name: &Toponym) -> bool {
        self.nodes.contains_key(name)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Toponym> {
        self.nodes.keys()
    }

    pub fn has_edge(&self, parent: &Toponym, child: &Toponym) -> bool {
        self.nodes
            .get(parent)
            .is_some_and(|n| n.children.contains(child))
    }

    /// Adds an edge without checking for cycles or level order.
    ///
    /// Returns whether the edge was new.
    pub fn insert_edge_unchecked(&mut self, parent: Toponym, child: Toponym) -> bool {
        self.nodes.entry(child.clone()).or_default();
        let inserted = self
            .nodes
            .entry(parent.clone())
            .or_default()
            .children
            .insert(child.clone());
        if inserted {
            self.nodes[&child].parents.insert(parent);
            self.edge_count += 1;
        }
        inserted
    }

    /// Adds a validated edge. Returns `Ok(false)` if it already existed.
    pub fn add_edge(&mut self, parent: Toponym, child: Toponym) -> Result<bool, HierarchyError> {
        if parent == child {
            return Err(HierarchyError::SelfLoop(parent.to_string()));
        }
        if self.has_edge(&parent, &child) {
            return Ok(false);
        }
        if self.reaches(&child, &parent) {
            return Err(HierarchyError::Cycle(parent.to_string()));
        }
        let mut candidate = self.clone();
        candidate.insert_edge_unchecked(parent, child);
        candidate.check_levels()?;
        *self = candidate;
        Ok(true)
    }

    fn reaches(&self, from: &Toponym, to: &Toponym) -> bool {
        let mut stack = vec![from];
        let mut seen = IndexSet::new();
        while let Some(node) = stack.pop() {
            if node == to {
                return true;
            }
            if !seen.insert(node) {
                continue;
            }
            if let Some(n) = self.nodes.get(node) {
                stack.extend(n.children.iter());
            }
        }
        false
    }

    /// Level of a node; `None` for unknown toponyms.
    pub fn level(&self, name: &Toponym) -> Option<u32> {
        let node = self.nodes.get(name)?;
        if let Some(level) = node.level {
            return Some(level);
        }
        let mut visiting = IndexSet::new();
        Some(self.inferred_level(name, &mut visiting))
    }

    fn inferred_level<'a>(&'a self, name: &'a Toponym, visiting: &mut IndexSet<&'a Toponym>) -> u32 {
        let node = &self.nodes[name];
        if let Some(level) = node.level {
            return level;
        }
        if !visiting.insert(name) {
            return 1;
        }
        let level = node
            .children
            .iter()
            .map(|c| self.inferred_level(c, visiting) + 1)
            .max()
            .unwrap_or(1);
        visiting.swap_remove(name);
        level
    }

    pub fn check_levels(&self) -> Result<(), HierarchyError> {
        for (parent, node) in &self.nodes {
            for child in &node.children {
                let (pl, cl) = (self.level(parent).unwrap_or(1), self.level(child).unwrap_or(1));
                if pl <= cl {
                    return Err(HierarchyError::LevelOrder {
                        parent: parent.to_string(),
                        child: child.to_string(),
                        parent_level: pl,
                        child_level: cl,
                    });
                }
            }
        }
        Ok(())
    }

    /// Every edge exactly once, depth-first from the roots (children in
    /// insertion order). Fails if the graph has a cycle.
    pub fn depth_first_edges(&self) -> Result<Vec<(Toponym, Toponym)>, HierarchyError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        let mut marks = vec![Mark::New; self.nodes.len()];
        let mut edges = Vec::with_capacity(self.edge_count);

        let roots = self
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, (_, n))| n.parents.is_empty())
            .map(|(i, _)| i);
        // Nodes only reachable through a cycle have no root; visit them last so
        // the cycle is reported.
        let order: Vec<usize> = roots.chain(0..self.nodes.len()).collect();

        for start in order {
            if marks[start] != Mark::New {
                continue;
            }
            // (node, next child position)
            let mut stack = vec![(start, 0usize)];
            marks[start] = Mark::Active;
            while let Some(&mut (node, ref mut next)) = stack.last_mut() {
                let (name, data) = self.nodes.get_index(node).expect("index in range");
                if let Some(child) = data.children.get_index(*next) {
                    *next += 1;
                    let child_index = self.nodes.get_index_of(child).expect("child is a node");
                    match marks[child_index] {
                        Mark::Active => return Err(HierarchyError::Cycle(child.to_string())),
                        Mark::Done => edges.push((name.clone(), child.clone())),
                        Mark::New => {
                            edges.push((name.clone(), child.clone()));
                            marks[child_index] = Mark::Active;
                            stack.push((child_index, 0));
                        }
                    }
                } else {
                    marks[node] = Mark::Done;
                    stack.pop();
                }
            }
        }
        Ok(edges)
    }
}
