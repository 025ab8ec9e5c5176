//! Skeleton topologies: named parts and the limbs connecting them.
//!
//! Topology files are plain UTF-8 text:
//!
//! ```text
//! # comment
//! parts 3
//! head
//! neck
//! hip
//! limbs 2
//! 0 1
//! 1 2
//! reference 0 1
//! ```
//!
//! The optional `reference j1 j2` line names the part pair whose length is
//! the per-person PCKh normaliser.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

const MPII14: &str = include_str!("../data/mpii14.topo");
const COCO18: &str = include_str!("../data/coco18.topo");

/// An ordered part pair; affinity vectors point from `from` to `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Limb {
    pub from: usize,
    pub to: usize,
}

impl Limb {
    pub const fn new(from: usize, to: usize) -> Self {
        Limb { from, to }
    }

    fn unordered(self) -> (usize, usize) {
        (self.from.min(self.to), self.from.max(self.to))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Tree,
    FullGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Mpii14,
    Coco18,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mpii14" => Ok(Preset::Mpii14),
            "coco18" => Ok(Preset::Coco18),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    part_names: Vec<String>,
    limbs: Vec<Limb>,
    kind: TopologyKind,
    reference: Option<(usize, usize)>,
}

impl Topology {
    pub fn new(
        part_names: Vec<String>,
        limbs: Vec<Limb>,
        kind: TopologyKind,
        reference: Option<(usize, usize)>,
    ) -> Result<Self> {
        let j = part_names.len();
        let mut seen = HashSet::new();
        for (c, limb) in limbs.iter().enumerate() {
            if limb.from >= j || limb.to >= j {
                return Err(Error::Topology(format!(
                    "limb {c} ({} {}) references a part outside 0..{j}",
                    limb.from, limb.to
                )));
            }
            if limb.from == limb.to {
                return Err(Error::Topology(format!("limb {c} is a self loop")));
            }
            if !seen.insert(limb.unordered()) {
                return Err(Error::Topology(format!(
                    "limb {c} ({} {}) duplicates an earlier limb",
                    limb.from, limb.to
                )));
            }
        }
        match kind {
            TopologyKind::Tree => {
                if j == 0 || limbs.len() != j - 1 || !is_connected(j, &limbs) {
                    return Err(Error::Topology(format!(
                        "{} limbs over {j} parts do not form a spanning tree",
                        limbs.len()
                    )));
                }
            }
            TopologyKind::FullGraph => {
                if limbs.len() != j * j.saturating_sub(1) / 2 {
                    return Err(Error::Topology(format!(
                        "full graph over {j} parts needs {} limbs, got {}",
                        j * j.saturating_sub(1) / 2,
                        limbs.len()
                    )));
                }
            }
        }
        if let Some((a, b)) = reference {
            if a >= j || b >= j || a == b {
                return Err(Error::Topology(format!(
                    "reference pair ({a} {b}) is not a valid part pair"
                )));
            }
        }
        Ok(Topology {
            part_names,
            limbs,
            kind,
            reference,
        })
    }

    pub fn preset(preset: Preset) -> Self {
        let text = match preset {
            Preset::Mpii14 => MPII14,
            Preset::Coco18 => COCO18,
        };
        Self::parse(text).expect("shipped topology files are valid")
    }

    /// Resolves a preset name or, failing that, a topology file path.
    pub fn load(source: &str) -> Result<Self> {
        match source.parse::<Preset>() {
            Ok(p) => Ok(Self::preset(p)),
            Err(_) if Path::new(source).exists() => Self::read(source),
            Err(e) => Err(e),
        }
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses the topology text format. The kind is inferred: a spanning tree
    /// when the limbs form one, otherwise a full graph.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::syntax(0, format!("unexpected end of input, expected {what}")))
        };

        let (ln, header) = next("`parts N`")?;
        let num_parts = parse_count(ln, header, "parts")?;
        let mut names = Vec::with_capacity(num_parts.min(1024));
        for _ in 0..num_parts {
            let (_, name) = next("a part name")?;
            names.push(name.to_string());
        }

        let (ln, header) = next("`limbs M`")?;
        let num_limbs = parse_count(ln, header, "limbs")?;
        let mut limbs = Vec::with_capacity(num_limbs.min(4096));
        for _ in 0..num_limbs {
            let (ln, line) = next("a limb `j1 j2`")?;
            let (a, b) = parse_pair(ln, line)?;
            limbs.push(Limb::new(a, b));
        }

        let mut reference = None;
        if let Ok((ln, line)) = next("") {
            let rest = line
                .strip_prefix("reference")
                .ok_or_else(|| Error::syntax(ln, format!("unexpected line `{line}`")))?;
            reference = Some(parse_pair(ln, rest)?);
            if let Ok((ln, line)) = next("") {
                return Err(Error::syntax(ln, format!("unexpected line `{line}`")));
            }
        }

        let kind = if limbs.len() + 1 == names.len() && is_connected(names.len(), &limbs) {
            TopologyKind::Tree
        } else {
            TopologyKind::FullGraph
        };
        Self::new(names, limbs, kind, reference)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("parts {}\n", self.num_parts());
        for name in &self.part_names {
            out.push_str(name);
            out.push('\n');
        }
        out.push_str(&format!("limbs {}\n", self.num_limbs()));
        for l in &self.limbs {
            out.push_str(&format!("{} {}\n", l.from, l.to));
        }
        if let Some((a, b)) = self.reference {
            out.push_str(&format!("reference {a} {b}\n"));
        }
        out
    }

    /// The complete graph over the same parts, limbs ordered `(i, k)` with `i < k`.
    pub fn full_graph_of(&self) -> Result<Topology> {
        if self.kind != TopologyKind::Tree {
            return Err(Error::Topology(
                "full_graph_of expects a tree topology".into(),
            ));
        }
        let j = self.num_parts();
        let limbs = (0..j)
            .flat_map(|a| (a + 1..j).map(move |b| Limb::new(a, b)))
            .collect();
        Topology::new(
            self.part_names.clone(),
            limbs,
            TopologyKind::FullGraph,
            self.reference,
        )
    }

    pub fn num_parts(&self) -> usize {
        self.part_names.len()
    }

    pub fn num_limbs(&self) -> usize {
        self.limbs.len()
    }

    pub fn part_names(&self) -> &[String] {
        &self.part_names
    }

    pub fn part_index(&self, name: &str) -> Option<usize> {
        self.part_names.iter().position(|n| n == name)
    }

    pub fn limbs(&self) -> &[Limb] {
        &self.limbs
    }

    pub fn limb(&self, c: usize) -> Limb {
        self.limbs[c]
    }

    pub fn kind(&self) -> TopologyKind {
        self.kind
    }

    pub fn is_tree(&self) -> bool {
        self.kind == TopologyKind::Tree
    }

    pub fn reference(&self) -> Option<(usize, usize)> {
        self.reference
    }

    /// Index of the limb joining `a` and `b` in either orientation, with
    /// `true` when stored as `a -> b`.
    pub fn find_limb(&self, a: usize, b: usize) -> Option<(usize, bool)> {
        self.limbs.iter().enumerate().find_map(|(c, l)| {
            if l.from == a && l.to == b {
                Some((c, true))
            } else if l.from == b && l.to == a {
                Some((c, false))
            } else {
                None
            }
        })
    }

    /// Adjacency lists over parts.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.num_parts()];
        for l in &self.limbs {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        adj
    }

    /// Whether the limbs restricted to `present` parts connect them all.
    pub fn connects(&self, present: &[bool]) -> bool {
        let start = match present.iter().position(|&p| p) {
            Some(s) => s,
            None => return true,
        };
        let adj = self.neighbors();
        let mut seen = vec![false; self.num_parts()];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if present[v] && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        present.iter().zip(&seen).all(|(&p, &s)| !p || s)
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:?} topology with {} parts and {} limbs",
            self.kind,
            self.num_parts(),
            self.num_limbs()
        )
    }
}

fn is_connected(num_parts: usize, limbs: &[Limb]) -> bool {
    if num_parts == 0 {
        return false;
    }
    let mut parent: Vec<usize> = (0..num_parts).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut components = num_parts;
    for l in limbs {
        let (a, b) = (find(&mut parent, l.from), find(&mut parent, l.to));
        if a != b {
            parent[a] = b;
            components -= 1;
        }
    }
    components == 1
}

fn parse_count(ln: usize, line: &str, keyword: &str) -> Result<usize> {
    let mut it = line.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(k), Some(n), None) if k == keyword => n
            .parse()
            .map_err(|_| Error::syntax(ln, format!("invalid count `{n}`"))),
        _ => Err(Error::syntax(ln, format!("expected `{keyword} N`, got `{line}`"))),
    }
}

fn parse_pair(ln: usize, line: &str) -> Result<(usize, usize)> {
    let mut it = line.split_whitespace().map(str::parse::<usize>);
    match (it.next(), it.next(), it.next()) {
        (Some(Ok(a)), Some(Ok(b)), None) => Ok((a, b)),
        _ => Err(Error::syntax(ln, format!("expected two part indices, got `{line}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(j: usize) -> Topology {
        Topology::new(
            (0..j).map(|i| format!("p{i}")).collect(),
            (1..j).map(|i| Limb::new(i - 1, i)).collect(),
            TopologyKind::Tree,
            None,
        )
        .unwrap()
    }

    #[test]
    fn presets() {
        let mpii = Topology::preset(Preset::Mpii14);
        assert_eq!((mpii.num_parts(), mpii.num_limbs()), (14, 13));
        assert!(mpii.is_tree());
        assert_eq!(mpii.reference(), Some((0, 1)));

        let coco = Topology::preset(Preset::Coco18);
        assert_eq!((coco.num_parts(), coco.num_limbs()), (18, 17));
        assert!(coco.is_tree());

        assert_eq!(mpii.full_graph_of().unwrap().num_limbs(), 91);
        assert!(matches!(
            "mpii15".parse::<Preset>(),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn full_graph_sizes() {
        let two = chain(2);
        let full = two.full_graph_of().unwrap();
        assert_eq!(full.limbs(), two.limbs());
        assert_eq!(full.kind(), TopologyKind::FullGraph);
        assert_eq!(chain(4).full_graph_of().unwrap().num_limbs(), 6);
        assert!(full.full_graph_of().is_err());
    }

    #[test]
    fn removing_any_tree_limb_disconnects() {
        for preset in [Preset::Mpii14, Preset::Coco18] {
            let t = Topology::preset(preset);
            for skip in 0..t.num_limbs() {
                let limbs: Vec<_> = t
                    .limbs()
                    .iter()
                    .enumerate()
                    .filter(|(c, _)| *c != skip)
                    .map(|(_, l)| *l)
                    .collect();
                assert!(!is_connected(t.num_parts(), &limbs));
            }
        }
    }

    #[test]
    fn rejects_invalid_limb_sets() {
        let names = || (0..3).map(|i| i.to_string()).collect::<Vec<_>>();
        let tree = TopologyKind::Tree;
        assert!(Topology::new(names(), vec![Limb::new(0, 3), Limb::new(1, 2)], tree, None).is_err());
        assert!(Topology::new(names(), vec![Limb::new(1, 1), Limb::new(1, 2)], tree, None).is_err());
        assert!(Topology::new(names(), vec![Limb::new(0, 1), Limb::new(1, 0)], tree, None).is_err());
        // A cycle is never a tree.
        assert!(Topology::new(
            names(),
            vec![Limb::new(0, 1), Limb::new(1, 2), Limb::new(2, 0)],
            tree,
            None
        )
        .is_err());
        assert!(Topology::new(names(), vec![Limb::new(0, 1)], TopologyKind::FullGraph, None).is_err());
    }

    #[test]
    fn text_round_trip() {
        let t = Topology::preset(Preset::Coco18);
        assert_eq!(Topology::parse(&t.to_text()).unwrap(), t);
        let full = t.full_graph_of().unwrap();
        assert_eq!(Topology::parse(&full.to_text()).unwrap(), full);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Topology::parse("parts 2\na\nb\nlimbs 1\n0 x\n").unwrap_err();
        assert!(matches!(err, Error::Syntax { line: 5, .. }), "{err}");
        assert!(Topology::parse("parts 2\na\n").is_err());
        assert!(Topology::parse("parts 2\na\nb\nlimbs 1\n0 1\nbogus\n").is_err());
    }

    #[test]
    fn connectivity_of_present_parts() {
        let t = chain(4);
        assert!(t.connects(&[true, true, false, false]));
        assert!(!t.connects(&[true, false, true, false]));
        assert!(t.connects(&[false; 4]));
    }
}
