use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::UavId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormationKind {
    /// Pigeon-flock ring: a cycle over the members.
    FlockRing,
    /// Wolf-pack hierarchy: a tree rooted at the leader.
    PackHierarchy,
    /// Near-square lattice with row and column links.
    Grid,
}

impl FormationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FormationKind::FlockRing => "flock_ring",
            FormationKind::PackHierarchy => "pack_hierarchy",
            FormationKind::Grid => "grid",
        }
    }
}

impl fmt::Display for FormationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FormationKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [FormationKind::FlockRing, FormationKind::PackHierarchy, FormationKind::Grid]
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown formation `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FormationTemplate {
    pub kind: FormationKind,
    /// Children per node for `PackHierarchy`; ignored otherwise.
    pub branching: u32,
}

impl FormationTemplate {
    pub const fn new(kind: FormationKind) -> Self {
        Self { kind, branching: 2 }
    }

    pub const fn pack(branching: u32) -> Self {
        Self { kind: FormationKind::PackHierarchy, branching }
    }

    /// Edges between slot indices `0..n`. Connected for every `n >= 1`.
    pub fn slot_edges(&self, n: usize) -> Vec<(usize, usize)> {
        match self.kind {
            FormationKind::FlockRing => match n {
                0 | 1 => vec![],
                2 => vec![(0, 1)],
                _ => (0..n).map(|i| (i, (i + 1) % n)).collect(),
            },
            FormationKind::PackHierarchy => {
                let b = self.branching.max(1) as usize;
                (1..n).map(|i| ((i - 1) / b, i)).collect()
            }
            FormationKind::Grid => {
                let cols = grid_columns(n);
                let mut edges = Vec::new();
                for i in 0..n {
                    if (i + 1) % cols != 0 && i + 1 < n {
                        edges.push((i, i + 1));
                    }
                    if i + cols < n {
                        edges.push((i, i + cols));
                    }
                }
                edges
            }
        }
    }
}

impl Default for FormationTemplate {
    fn default() -> Self {
        Self::new(FormationKind::Grid)
    }
}

/// Columns of the near-square lattice holding `n` nodes.
pub fn grid_columns(n: usize) -> usize {
    let mut cols = (n as f64).sqrt().ceil() as usize;
    while cols * cols < n {
        cols += 1;
    }
    cols.max(1)
}

/// Undirected communication graph of a subnet.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    nodes: BTreeSet<UavId>,
    edges: BTreeSet<(UavId, UavId)>,
}

impl Topology {
    /// Builds the graph placing `slots[i]` in template slot `i`.
    pub fn from_slots(slots: &[UavId], template: &FormationTemplate) -> Self {
        let nodes: BTreeSet<UavId> = slots.iter().copied().collect();
        let edges = template
            .slot_edges(slots.len())
            .into_iter()
            .map(|(a, b)| ordered(slots[a], slots[b]))
            .collect();
        Self { nodes, edges }
    }

    pub fn nodes(&self) -> &BTreeSet<UavId> {
        &self.nodes
    }

    /// Edges as `(low, high)` id pairs.
    pub fn edges(&self) -> &BTreeSet<(UavId, UavId)> {
        &self.edges
    }

    pub fn has_edge(&self, a: UavId, b: UavId) -> bool {
        self.edges.contains(&ordered(a, b))
    }

    pub fn neighbors(&self, u: UavId) -> BTreeSet<UavId> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == u {
                    Some(b)
                } else if b == u {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    pub fn adjacency(&self) -> BTreeMap<UavId, BTreeSet<UavId>> {
        let mut adj: BTreeMap<UavId, BTreeSet<UavId>> = self.nodes.iter().map(|&n| (n, BTreeSet::new())).collect();
        for &(a, b) in &self.edges {
            adj.entry(a).or_default().insert(b);
            adj.entry(b).or_default().insert(a);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let Some(&start) = self.nodes.iter().next() else {
            return true;
        };
        let adj = self.adjacency();
        let mut seen = BTreeSet::from([start]);
        let mut frontier = VecDeque::from([start]);
        while let Some(u) = frontier.pop_front() {
            for &v in &adj[&u] {
                if seen.insert(v) {
                    frontier.push_back(v);
                }
            }
        }
        seen.len() == self.nodes.len()
    }
}

pub(crate) fn ordered(a: UavId, b: UavId) -> (UavId, UavId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Topology of `template` over `members` taken in ascending id order.
pub fn apply_formation(members: &BTreeSet<UavId>, template: &FormationTemplate) -> Topology {
    let slots: Vec<UavId> = members.iter().copied().collect();
    Topology::from_slots(&slots, template)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> BTreeSet<UavId> {
        v.iter().map(|&i| UavId(i)).collect()
    }

    fn e(a: u32, b: u32) -> (UavId, UavId) {
        ordered(UavId(a), UavId(b))
    }

    #[test]
    fn ring_of_three() {
        let t = apply_formation(&ids(&[1, 2, 3]), &FormationTemplate::new(FormationKind::FlockRing));
        assert_eq!(t.edges(), &BTreeSet::from([e(1, 2), e(2, 3), e(1, 3)]));
    }

    #[test]
    fn single_node_has_no_edges() {
        for kind in [FormationKind::FlockRing, FormationKind::PackHierarchy, FormationKind::Grid] {
            let t = apply_formation(&ids(&[9]), &FormationTemplate::new(kind));
            assert!(t.edges().is_empty());
            assert!(t.is_connected());
        }
    }

    #[test]
    fn binary_pack_is_complete_tree() {
        let t = apply_formation(&ids(&[1, 2, 3, 4, 5, 6, 7]), &FormationTemplate::pack(2));
        let want = BTreeSet::from([e(1, 2), e(1, 3), e(2, 4), e(2, 5), e(3, 6), e(3, 7)]);
        assert_eq!(t.edges(), &want);
    }

    #[test]
    fn grid_of_six_is_two_by_three() {
        let t = apply_formation(&ids(&[0, 1, 2, 3, 4, 5]), &FormationTemplate::default());
        let want = BTreeSet::from([e(0, 1), e(1, 2), e(3, 4), e(4, 5), e(0, 3), e(1, 4), e(2, 5)]);
        assert_eq!(t.edges(), &want);
    }

    #[test]
    fn grid_columns_near_square() {
        assert_eq!(grid_columns(1), 1);
        assert_eq!(grid_columns(4), 2);
        assert_eq!(grid_columns(5), 3);
        assert_eq!(grid_columns(10), 4);
    }

    #[test]
    fn formation_kind_parse() {
        assert_eq!("pack_hierarchy".parse(), Ok(FormationKind::PackHierarchy));
        assert!("v_shape".parse::<FormationKind>().is_err());
    }
}
