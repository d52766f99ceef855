//! Binary guild trees and the species partitions they induce.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TreeNode {
    Terminal {
        species: Vec<usize>,
    },
    Split {
        species: Vec<usize>,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn terminal(mut species: Vec<usize>) -> Self {
        species.sort_unstable();
        TreeNode::Terminal { species }
    }

    pub fn split(left: TreeNode, right: TreeNode) -> Self {
        let mut species: Vec<usize> = left.species().iter().chain(right.species()).copied().collect();
        species.sort_unstable();
        TreeNode::Split {
            species,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn species(&self) -> &[usize] {
        match self {
            TreeNode::Terminal { species } | TreeNode::Split { species, .. } => species,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, TreeNode::Terminal { .. })
    }

    fn collect_terminals<'a>(&'a self, out: &mut Vec<&'a [usize]>) {
        match self {
            TreeNode::Terminal { species } => out.push(species),
            TreeNode::Split { left, right, .. } => {
                left.collect_terminals(out);
                right.collect_terminals(out);
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            TreeNode::Terminal { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn check(&self) -> Result<()> {
        if self.species().is_empty() {
            return Err(Error::InvalidTree("empty node".into()));
        }
        if let TreeNode::Split { species, left, right } = self {
            let mut joined: Vec<usize> = left.species().iter().chain(right.species()).copied().collect();
            joined.sort_unstable();
            if &joined != species {
                return Err(Error::InvalidTree("children do not partition their parent".into()));
            }
            left.check()?;
            right.check()?;
        }
        Ok(())
    }

    fn write_encoded(&self, out: &mut String) {
        match self {
            TreeNode::Terminal { species } => {
                let s: Vec<String> = species.iter().map(|j| (j + 1).to_string()).collect();
                out.push_str(&s.join("+"));
            }
            TreeNode::Split { left, right, .. } => {
                out.push('(');
                left.write_encoded(out);
                out.push(' ');
                right.write_encoded(out);
                out.push(')');
            }
        }
    }
}

/// A binary tree over species whose terminal nodes are guilds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuildTree {
    n_species: usize,
    root: TreeNode,
}

impl GuildTree {
    pub fn new(n_species: usize, root: TreeNode) -> Result<Self> {
        if n_species == 0 {
            return Err(Error::InvalidTree("no species".into()));
        }
        root.check()?;
        let expected: Vec<usize> = (0..n_species).collect();
        if root.species() != expected.as_slice() {
            return Err(Error::InvalidTree(format!(
                "root holds {:?}, expected all {} species",
                root.species(),
                n_species
            )));
        }
        Ok(Self { n_species, root })
    }

    /// A tree with no splits: every species in one guild.
    pub fn single(n_species: usize) -> Self {
        Self {
            n_species,
            root: TreeNode::terminal((0..n_species).collect()),
        }
    }

    /// A caterpillar tree that splits off one guild at a time, in the
    /// partition's guild order. Any partition is reachable this way.
    pub fn from_partition(partition: &GuildPartition) -> Self {
        let groups = partition.guilds();
        let mut node = TreeNode::terminal(groups[groups.len() - 1].clone());
        for g in (0..groups.len() - 1).rev() {
            node = TreeNode::split(TreeNode::terminal(groups[g].clone()), node);
        }
        Self {
            n_species: partition.n_species(),
            root: node,
        }
    }

    pub fn n_species(&self) -> usize {
        self.n_species
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    /// Terminal species sets in left-to-right order.
    pub fn terminals(&self) -> Vec<&[usize]> {
        let mut out = Vec::new();
        self.root.collect_terminals(&mut out);
        out
    }

    pub fn n_guilds(&self) -> usize {
        self.terminals().len()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Compact text form: terminals are `+`-joined one-based species
    /// indices, splits are `(left right)`.
    pub fn encode(&self) -> String {
        let mut s = String::new();
        self.root.write_encoded(&mut s);
        s
    }

    pub fn decode(s: &str, n_species: usize) -> Result<Self> {
        let bytes = s.trim().as_bytes();
        let mut pos = 0;
        let root = parse_node(bytes, &mut pos)?;
        if pos != bytes.len() {
            return Err(Error::InvalidTree(format!("trailing input in `{s}`")));
        }
        Self::new(n_species, root)
    }
}

fn parse_node(b: &[u8], pos: &mut usize) -> Result<TreeNode> {
    if *pos < b.len() && b[*pos] == b'(' {
        *pos += 1;
        let left = parse_node(b, pos)?;
        if *pos >= b.len() || b[*pos] != b' ' {
            return Err(Error::InvalidTree("expected space between children".into()));
        }
        *pos += 1;
        let right = parse_node(b, pos)?;
        if *pos >= b.len() || b[*pos] != b')' {
            return Err(Error::InvalidTree("expected `)`".into()));
        }
        *pos += 1;
        Ok(TreeNode::split(left, right))
    } else {
        let start = *pos;
        while *pos < b.len() && (b[*pos].is_ascii_digit() || b[*pos] == b'+') {
            *pos += 1;
        }
        let text = std::str::from_utf8(&b[start..*pos]).expect("ascii");
        let species = parse_index_list(text, '+')?;
        Ok(TreeNode::terminal(species))
    }
}

fn parse_index_list(text: &str, sep: char) -> Result<Vec<usize>> {
    if text.is_empty() {
        return Err(Error::InvalidTree("empty species list".into()));
    }
    text.split(sep)
        .map(|t| match t.parse::<usize>() {
            Ok(v) if v >= 1 => Ok(v - 1),
            _ => Err(Error::InvalidPartition(format!("bad species index `{t}`"))),
        })
        .collect()
}

impl fmt::Display for GuildTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Guild membership of every species; the `J x G` indicator matrix `Z`
/// in compact form.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GuildPartition {
    membership: Vec<usize>,
    n_guilds: usize,
}

impl GuildPartition {
    /// Guild labels must cover `0..G` with no gaps.
    pub fn from_membership(membership: Vec<usize>) -> Result<Self> {
        if membership.is_empty() {
            return Err(Error::InvalidPartition("no species".into()));
        }
        let n_guilds = membership.iter().max().unwrap() + 1;
        let mut seen = vec![false; n_guilds];
        for &g in &membership {
            seen[g] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidPartition("empty guild".into()));
        }
        Ok(Self { membership, n_guilds })
    }

    pub fn from_guilds(n_species: usize, guilds: &[Vec<usize>]) -> Result<Self> {
        let mut membership = vec![usize::MAX; n_species];
        for (g, members) in guilds.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidPartition("empty guild".into()));
            }
            for &j in members {
                if j >= n_species || membership[j] != usize::MAX {
                    return Err(Error::InvalidPartition(format!(
                        "species {} missing or repeated",
                        j + 1
                    )));
                }
                membership[j] = g;
            }
        }
        if membership.contains(&usize::MAX) {
            return Err(Error::InvalidPartition("species without a guild".into()));
        }
        Self::from_membership(membership)
    }

    pub fn pooled(n_species: usize) -> Self {
        Self {
            membership: vec![0; n_species],
            n_guilds: 1,
        }
    }

    pub fn identity(n_species: usize) -> Self {
        Self {
            membership: (0..n_species).collect(),
            n_guilds: n_species,
        }
    }

    pub fn n_species(&self) -> usize {
        self.membership.len()
    }

    pub fn n_guilds(&self) -> usize {
        self.n_guilds
    }

    #[inline]
    pub fn guild_of(&self, species: usize) -> usize {
        self.membership[species]
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    /// Members of every guild, each sorted.
    pub fn guilds(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_guilds];
        for (j, &g) in self.membership.iter().enumerate() {
            out[g].push(j);
        }
        out
    }

    pub fn same_guild(&self, a: usize, b: usize) -> bool {
        self.membership[a] == self.membership[b]
    }

    /// `J x G` indicator matrix.
    pub fn indicator_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_species(), self.n_guilds, |j, g| {
            if self.membership[j] == g {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Relabels guilds in order of their smallest member.
    pub fn canonical(&self) -> Self {
        let mut relabel = vec![usize::MAX; self.n_guilds];
        let mut next = 0;
        let membership = self
            .membership
            .iter()
            .map(|&g| {
                if relabel[g] == usize::MAX {
                    relabel[g] = next;
                    next += 1;
                }
                relabel[g]
            })
            .collect();
        Self {
            membership,
            n_guilds: self.n_guilds,
        }
    }

    /// Maps canonical guild index to this partition's guild index.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.n_guilds);
        let mut seen = vec![false; self.n_guilds];
        for &g in &self.membership {
            if !seen[g] {
                seen[g] = true;
                order.push(g);
            }
        }
        order
    }

    /// Canonical string: one-based species indices sorted within guilds,
    /// guilds ordered by smallest member, `+` inside and `|` between guilds.
    pub fn encode(&self) -> String {
        let c = self.canonical();
        c.guilds()
            .iter()
            .map(|g| g.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join("+"))
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn decode(s: &str, n_species: usize) -> Result<Self> {
        let guilds = s
            .trim()
            .split('|')
            .map(|g| parse_index_list(g, '+'))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_guilds(n_species, &guilds)?.canonical())
    }
}

impl fmt::Display for GuildPartition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.encode())
    }
}

/// Reads off guild membership from a tree: column `g` of `Z` is the `g`-th
/// terminal node from the left.
pub fn partition_from_tree(tree: &GuildTree) -> GuildPartition {
    let mut membership = vec![0; tree.n_species()];
    let terminals = tree.terminals();
    for (g, species) in terminals.iter().enumerate() {
        for &j in species.iter() {
            membership[j] = g;
        }
    }
    GuildPartition {
        membership,
        n_guilds: terminals.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// One arrangement consistent with the six-species, three-guild example:
    /// a super guild {1,2,3,4} split into {1,2} and {3,4}, and {5,6}.
    fn three_guild_tree() -> GuildTree {
        let super_guild = TreeNode::split(TreeNode::terminal(vec![0, 1]), TreeNode::terminal(vec![2, 3]));
        GuildTree::new(6, TreeNode::split(super_guild, TreeNode::terminal(vec![4, 5]))).unwrap()
    }

    #[test]
    fn single_node_tree_is_one_column() {
        let z = partition_from_tree(&GuildTree::single(6)).indicator_matrix();
        assert_eq!(z.shape(), (6, 1));
        assert!(z.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn three_guild_tree_columns() {
        let tree = three_guild_tree();
        let z = partition_from_tree(&tree).indicator_matrix();
        assert_eq!(z.shape(), (6, 3));
        let col_sums: Vec<f64> = (0..3).map(|g| z.column(g).sum()).collect();
        assert_eq!(col_sums, vec![2.0, 2.0, 2.0]);
        assert_eq!(partition_from_tree(&tree).encode(), "1+2|3+4|5+6");
    }

    #[test]
    fn fully_split_tree_is_identity() {
        let mut node = TreeNode::terminal(vec![3]);
        for j in (0..3).rev() {
            node = TreeNode::split(TreeNode::terminal(vec![j]), node);
        }
        let tree = GuildTree::new(4, node).unwrap();
        assert_eq!(partition_from_tree(&tree).indicator_matrix(), DMatrix::identity(4, 4));
    }

    #[test]
    fn rejects_overlapping_children() {
        let bad = TreeNode::Split {
            species: vec![0, 1],
            left: Box::new(TreeNode::terminal(vec![0])),
            right: Box::new(TreeNode::terminal(vec![0])),
        };
        assert!(GuildTree::new(2, bad).is_err());
        assert!(GuildTree::new(3, TreeNode::terminal(vec![0, 1])).is_err());
    }

    #[test]
    fn tree_encoding_round_trip() {
        let tree = three_guild_tree();
        let s = tree.encode();
        assert_eq!(s, "((1+2 3+4) 5+6)");
        assert_eq!(GuildTree::decode(&s, 6).unwrap(), tree);
        assert!(GuildTree::decode("(1 2", 2).is_err());
    }

    #[test]
    fn partition_decode_is_canonical() {
        let p = GuildPartition::decode("5+6|2+1|3+4", 6).unwrap();
        assert_eq!(p.encode(), "1+2|3+4|5+6");
        assert!(GuildPartition::decode("1|1+2", 2).is_err());
        assert!(GuildPartition::decode("1", 2).is_err());
    }

    fn arb_tree(n: usize) -> impl Strategy<Value = GuildTree> {
        proptest::collection::vec(any::<u64>(), n).prop_map(move |seeds| {
            fn build(species: Vec<usize>, seeds: &[u64], depth: usize) -> TreeNode {
                if species.len() < 2 || seeds[depth % seeds.len()].is_multiple_of(3) {
                    return TreeNode::terminal(species);
                }
                let s = seeds[depth % seeds.len()];
                let (mut l, mut r): (Vec<usize>, Vec<usize>) = species.iter().partition(|&&j| (s >> (j % 61)) & 1 == 1);
                if l.is_empty() {
                    l.push(r.pop().unwrap());
                } else if r.is_empty() {
                    r.push(l.pop().unwrap());
                }
                TreeNode::split(build(l, seeds, depth + 1), build(r, seeds, depth + 7))
            }
            GuildTree::new(n, build((0..n).collect(), &seeds, 0)).unwrap()
        })
    }

    proptest! {
        #[test]
        fn partition_from_tree_is_valid(tree in (1usize..10).prop_flat_map(arb_tree)) {
            let p = partition_from_tree(&tree);
            let z = p.indicator_matrix();
            for j in 0..tree.n_species() {
                prop_assert_eq!(z.row(j).sum(), 1.0);
            }
            for g in 0..p.n_guilds() {
                prop_assert!(z.column(g).sum() >= 1.0);
            }
            prop_assert!(p.n_guilds() >= 1 && p.n_guilds() <= tree.n_species());
            prop_assert_eq!(p.n_guilds(), tree.n_guilds());
            let round = GuildTree::decode(&tree.encode(), tree.n_species()).unwrap();
            prop_assert_eq!(round, tree);
        }
    }
}
