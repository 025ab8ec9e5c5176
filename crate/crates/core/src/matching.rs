//! Per-limb maximum-weight bipartite matching and exhaustive oracles.
//!
//! Every solver leaves a candidate unconnected rather than select a pair
//! with non-positive score.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::association::ConnectionScore;
use crate::detection::CandidateSet;
use crate::error::{Error, Result};
use crate::topology::{Topology, TopologyKind};

/// A selected connection `z_mn = 1` with its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Connection {
    pub m: usize,
    pub n: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub limb: usize,
    /// Sorted by `(m, n)`.
    pub pairs: Vec<Connection>,
    pub total: f64,
}

impl MatchResult {
    /// Canonical form: pairs sorted by `(m, n)`, total summed in that order.
    pub fn new(limb: usize, mut pairs: Vec<Connection>) -> Self {
        pairs.sort_by_key(|c| (c.m, c.n));
        let total = pairs.iter().map(|c| c.score).sum();
        MatchResult { limb, pairs, total }
    }

    pub fn empty(limb: usize) -> Self {
        MatchResult {
            limb,
            pairs: Vec::new(),
            total: 0.0,
        }
    }

    /// No candidate used twice on either side.
    pub fn is_valid_matching(&self) -> bool {
        let mut ms: Vec<_> = self.pairs.iter().map(|c| c.m).collect();
        let mut ns: Vec<_> = self.pairs.iter().map(|c| c.n).collect();
        ms.sort_unstable();
        ns.sort_unstable();
        ms.windows(2).all(|w| w[0] != w[1]) && ns.windows(2).all(|w| w[0] != w[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Solver {
    #[default]
    Hungarian,
    Greedy,
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hungarian" => Ok(Solver::Hungarian),
            "greedy" => Ok(Solver::Greedy),
            other => Err(Error::Param(format!(
                "unknown solver `{other}` (expected hungarian or greedy)"
            ))),
        }
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Solver::Hungarian => "hungarian",
            Solver::Greedy => "greedy",
        })
    }
}

impl Solver {
    pub fn solve(self, limb: usize, scores: &[ConnectionScore]) -> MatchResult {
        match self {
            Solver::Hungarian => match_hungarian(limb, scores),
            Solver::Greedy => match_greedy(limb, scores),
        }
    }
}

fn dims(scores: &[ConnectionScore]) -> (usize, usize) {
    scores
        .iter()
        .fold((0, 0), |(r, c), s| (r.max(s.m + 1), c.max(s.n + 1)))
}

/// Minimum-cost perfect assignment on a square matrix (shortest augmenting
/// paths with potentials). Returns the column assigned to each row.
fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual source column.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        if row_of[j] > 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Optimal maximum-weight matching via the Hungarian algorithm.
///
/// Scores are clipped at zero and the matrix padded square with zeros, so an
/// optimal assignment of the padded problem restricted to positive pairs is a
/// maximum-weight matching of the original.
pub fn match_hungarian(limb: usize, scores: &[ConnectionScore]) -> MatchResult {
    let (rows, cols) = dims(scores);
    if rows == 0 || cols == 0 {
        return MatchResult::empty(limb);
    }
    let k = rows.max(cols);
    let mut weight = vec![vec![0.0f64; k]; k];
    for s in scores {
        if s.score > 0.0 && s.score.is_finite() {
            weight[s.m][s.n] = s.score;
        }
    }
    let cost: Vec<Vec<f64>> = weight
        .iter()
        .map(|row| row.iter().map(|w| -w).collect())
        .collect();
    let assignment = min_cost_assignment(&cost);
    let pairs = assignment
        .into_iter()
        .enumerate()
        .filter(|&(m, n)| m < rows && n < cols && weight[m][n] > 0.0)
        .map(|(m, n)| Connection {
            m,
            n,
            score: weight[m][n],
        })
        .collect();
    MatchResult::new(limb, pairs)
}

/// Greedy matching: pairs in descending score (ties by smaller `m`, then
/// smaller `n`), accepted while both endpoints are free and the score is positive.
pub fn match_greedy(limb: usize, scores: &[ConnectionScore]) -> MatchResult {
    let mut order: Vec<&ConnectionScore> = scores
        .iter()
        .filter(|s| s.score > 0.0 && s.score.is_finite())
        .collect();
    order.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.m.cmp(&b.m))
            .then(a.n.cmp(&b.n))
    });
    let (rows, cols) = dims(scores);
    let mut used_m = vec![false; rows];
    let mut used_n = vec![false; cols];
    let mut pairs = Vec::new();
    for s in order {
        if !used_m[s.m] && !used_n[s.n] {
            used_m[s.m] = true;
            used_n[s.n] = true;
            pairs.push(Connection {
                m: s.m,
                n: s.n,
                score: s.score,
            });
        }
    }
    MatchResult::new(limb, pairs)
}

/// Largest `N_{j1} * N_{j2}` accepted by [`match_bruteforce`].
pub const BRUTEFORCE_MAX_CELLS: usize = 64;

/// Exhaustive maximum-weight matching (oracle). Ties resolve to the
/// lexicographically smallest pair list.
pub fn match_bruteforce(limb: usize, scores: &[ConnectionScore]) -> Result<MatchResult> {
    let (rows, cols) = dims(scores);
    if rows * cols > BRUTEFORCE_MAX_CELLS {
        return Err(Error::InstanceTooLarge(format!(
            "{rows}x{cols} bipartite instance exceeds {BRUTEFORCE_MAX_CELLS} cells"
        )));
    }
    let mut weight = vec![vec![None; cols]; rows];
    for s in scores {
        if s.score > 0.0 && s.score.is_finite() {
            weight[s.m][s.n] = Some(s.score);
        }
    }

    struct Search<'a> {
        weight: &'a [Vec<Option<f64>>],
        used: Vec<bool>,
        current: Vec<Connection>,
        best: Vec<Connection>,
        best_total: f64,
    }

    fn key(pairs: &[Connection]) -> Vec<(usize, usize)> {
        pairs.iter().map(|c| (c.m, c.n)).collect()
    }

    impl Search<'_> {
        // Rows are visited in increasing order, so `current` stays sorted
        // by (m, n) and its running sum is the canonical total.
        fn run(&mut self, row: usize, total: f64) {
            if row == self.weight.len() {
                let better = total > self.best_total
                    || (total == self.best_total && key(&self.current) < key(&self.best));
                if better {
                    self.best_total = total;
                    self.best = self.current.clone();
                }
                return;
            }
            for n in 0..self.used.len() {
                if let Some(w) = self.weight[row][n] {
                    if !self.used[n] {
                        self.used[n] = true;
                        self.current.push(Connection { m: row, n, score: w });
                        self.run(row + 1, total + w);
                        self.current.pop();
                        self.used[n] = false;
                    }
                }
            }
            self.run(row + 1, total);
        }
    }

    let mut search = Search {
        weight: &weight,
        used: vec![false; cols],
        current: Vec::new(),
        best: Vec::new(),
        best_total: 0.0,
    };
    search.run(0, 0.0);
    Ok(MatchResult::new(limb, search.best))
}

/// Limits of the exhaustive full-graph search.
pub const FULL_GRAPH_MAX_CANDIDATES: usize = 12;
pub const FULL_GRAPH_MAX_PERSONS: usize = 4;

/// Optimal grouping of all candidates under the full-graph objective.
#[derive(Debug, Clone, PartialEq)]
pub struct FullGraphSolution {
    /// Each group lists `(part, candidate id)` sorted by part; groups are
    /// ordered by their first member in flattened candidate order.
    pub groups: Vec<Vec<(usize, usize)>>,
    pub total: f64,
}

/// Pairwise score table between candidates keyed by `(part, id)` for
/// evaluating groupings under a full-graph objective.
pub struct PairScores {
    index: HashMap<(usize, usize), usize>,
    nodes: Vec<(usize, usize)>,
    table: Vec<f64>,
}

impl PairScores {
    /// Builds the table from per-limb scores of a topology; pairs of parts
    /// without a limb score 0.
    pub fn new(candidates: &CandidateSet, topo: &Topology, scores: &[Vec<ConnectionScore>]) -> Self {
        let nodes: Vec<(usize, usize)> = candidates.iter().map(|c| (c.part, c.id)).collect();
        let index: HashMap<_, _> = nodes.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let n = nodes.len();
        let mut table = vec![0.0; n * n];
        for limb_scores in scores {
            for s in limb_scores {
                let l = topo.limb(s.limb);
                if let (Some(&a), Some(&b)) = (index.get(&(l.from, s.m)), index.get(&(l.to, s.n))) {
                    table[a * n + b] = s.score;
                    table[b * n + a] = s.score;
                }
            }
        }
        PairScores { index, nodes, table }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn pair(&self, a: usize, b: usize) -> f64 {
        self.table[a * self.nodes.len() + b]
    }

    /// Sum of pairwise scores inside each group.
    pub fn grouping_total(&self, groups: &[Vec<(usize, usize)>]) -> f64 {
        groups
            .iter()
            .map(|g| {
                let ids: Vec<usize> = g.iter().filter_map(|k| self.index.get(k).copied()).collect();
                let mut sum = 0.0;
                for (i, &a) in ids.iter().enumerate() {
                    for &b in &ids[i + 1..] {
                        sum += self.pair(a, b);
                    }
                }
                sum
            })
            .sum()
    }
}

/// Exhaustive solution of the full K-dimensional matching at desk scale:
/// every partition of the candidates into at most
/// [`FULL_GRAPH_MAX_PERSONS`] groups with at most one candidate per part,
/// maximising the summed intra-group scores of all limbs of `topo`.
pub fn solve_full_graph(
    candidates: &CandidateSet,
    topo: &Topology,
    scores: &[Vec<ConnectionScore>],
) -> Result<FullGraphSolution> {
    if topo.kind() != TopologyKind::FullGraph {
        log::debug!("solve_full_graph on a {:?} topology", topo.kind());
    }
    let total = candidates.total();
    if total > FULL_GRAPH_MAX_CANDIDATES {
        return Err(Error::InstanceTooLarge(format!(
            "{total} candidates exceed {FULL_GRAPH_MAX_CANDIDATES}"
        )));
    }
    if let Some(j) = (0..candidates.num_parts()).find(|&j| candidates.part(j).len() > FULL_GRAPH_MAX_PERSONS) {
        return Err(Error::InstanceTooLarge(format!(
            "part {j} has {} candidates, more than {FULL_GRAPH_MAX_PERSONS} persons",
            candidates.part(j).len()
        )));
    }
    let table = PairScores::new(candidates, topo, scores);
    let n = table.len();

    struct Search<'a> {
        table: &'a PairScores,
        groups: Vec<Vec<usize>>,
        best_total: f64,
        best: Vec<Vec<usize>>,
    }

    impl Search<'_> {
        fn run(&mut self, next: usize, total: f64) {
            if next == self.table.len() {
                if total > self.best_total || self.best.is_empty() {
                    self.best_total = total;
                    self.best = self.groups.clone();
                }
                return;
            }
            let part = self.table.nodes[next].0;
            for g in 0..self.groups.len() {
                if self.groups[g].iter().any(|&o| self.table.nodes[o].0 == part) {
                    continue;
                }
                let gain: f64 = self.groups[g].iter().map(|&o| self.table.pair(o, next)).sum();
                self.groups[g].push(next);
                self.run(next + 1, total + gain);
                self.groups[g].pop();
            }
            if self.groups.len() < FULL_GRAPH_MAX_PERSONS {
                self.groups.push(vec![next]);
                self.run(next + 1, total);
                self.groups.pop();
            }
        }
    }

    let mut search = Search {
        table: &table,
        groups: Vec::new(),
        best_total: f64::NEG_INFINITY,
        best: Vec::new(),
    };
    search.run(0, 0.0);
    if n == 0 {
        search.best_total = 0.0;
    }
    let groups = search
        .best
        .into_iter()
        .map(|g| {
            let mut members: Vec<_> = g.into_iter().map(|i| table.nodes[i]).collect();
            members.sort_unstable();
            members
        })
        .collect();
    Ok(FullGraphSolution {
        groups,
        total: search.best_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(entries: &[((usize, usize), f64)]) -> Vec<ConnectionScore> {
        entries
            .iter()
            .map(|&((m, n), score)| ConnectionScore { limb: 0, m, n, score })
            .collect()
    }

    fn pairs(r: &MatchResult) -> Vec<(usize, usize)> {
        r.pairs.iter().map(|c| (c.m, c.n)).collect()
    }

    #[test]
    fn two_by_two() {
        let s = scores(&[((0, 0), 0.9), ((0, 1), 0.1), ((1, 0), 0.2), ((1, 1), 0.8)]);
        for r in [match_hungarian(0, &s), match_greedy(0, &s), match_bruteforce(0, &s).unwrap()] {
            assert_eq!(pairs(&r), vec![(0, 0), (1, 1)]);
            assert!((r.total - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_can_be_suboptimal() {
        let s = scores(&[((0, 0), 1.0), ((0, 1), 0.9), ((1, 0), 0.9)]);
        let greedy = match_greedy(0, &s);
        assert_eq!(pairs(&greedy), vec![(0, 0)]);
        assert_eq!(greedy.total, 1.0);
        let optimal = match_hungarian(0, &s);
        assert_eq!(pairs(&optimal), vec![(0, 1), (1, 0)]);
        assert!((optimal.total - 1.8).abs() < 1e-12);
        assert_eq!(match_bruteforce(0, &s).unwrap().total, optimal.total);
    }

    #[test]
    fn non_positive_pairs_are_never_selected() {
        let s = scores(&[((0, 0), -0.5), ((0, 1), -0.1), ((1, 0), 0.0), ((1, 1), f64::NEG_INFINITY)]);
        for r in [match_hungarian(0, &s), match_greedy(0, &s), match_bruteforce(0, &s).unwrap()] {
            assert!(r.pairs.is_empty());
            assert_eq!(r.total, 0.0);
        }
    }

    #[test]
    fn small_and_empty_instances() {
        let one = scores(&[((0, 0), 0.5)]);
        assert_eq!(match_hungarian(0, &one).total, 0.5);
        assert_eq!(match_bruteforce(0, &one).unwrap().total, 0.5);
        for r in [match_hungarian(3, &[]), match_greedy(3, &[]), match_bruteforce(3, &[]).unwrap()] {
            assert!(r.pairs.is_empty());
            assert_eq!(r.limb, 3);
        }
    }

    #[test]
    fn rectangular_hungarian() {
        // 3 x 1: best single edge.
        let s = scores(&[((0, 0), 0.2), ((1, 0), 0.7), ((2, 0), 0.4)]);
        assert_eq!(pairs(&match_hungarian(0, &s)), vec![(1, 0)]);
        // 1 x 3.
        let s = scores(&[((0, 0), 0.2), ((0, 1), 0.1), ((0, 2), 0.9)]);
        assert_eq!(pairs(&match_hungarian(0, &s)), vec![(0, 2)]);
    }

    #[test]
    fn bruteforce_rejects_large_instances() {
        let s: Vec<_> = (0..9)
            .flat_map(|m| (0..8).map(move |n| ConnectionScore { limb: 0, m, n, score: 0.1 }))
            .collect();
        assert!(matches!(match_bruteforce(0, &s), Err(Error::InstanceTooLarge(_))));
    }

    #[test]
    fn solver_parsing() {
        assert_eq!("greedy".parse::<Solver>().unwrap(), Solver::Greedy);
        assert_eq!("hungarian".parse::<Solver>().unwrap(), Solver::Hungarian);
        assert!("ilp".parse::<Solver>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = Vec<ConnectionScore>> {
            (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
                proptest::collection::vec(-1.0f64..1.0, r * c).prop_map(move |w| {
                    w.into_iter()
                        .enumerate()
                        .map(|(i, score)| ConnectionScore { limb: 0, m: i / c, n: i % c, score })
                        .collect()
                })
            })
        }

        proptest! {
            #[test]
            fn solvers_agree_with_oracle(s in instance()) {
                let h = match_hungarian(0, &s);
                let g = match_greedy(0, &s);
                let b = match_bruteforce(0, &s).unwrap();
                prop_assert!(h.is_valid_matching() && g.is_valid_matching() && b.is_valid_matching());
                prop_assert_eq!(h.total, b.total);
                prop_assert!(g.total <= b.total + 1e-12);
                prop_assert!(g.total >= 0.5 * b.total - 1e-12);
                prop_assert!(h.pairs.iter().chain(&g.pairs).all(|c| c.score > 0.0));
                // Deterministic.
                prop_assert_eq!(&match_hungarian(0, &s), &h);
                prop_assert_eq!(&match_greedy(0, &s), &g);
            }
        }
    }
}
