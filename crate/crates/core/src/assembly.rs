//! Assembly of per-limb matchings into person instances, and the end-to-end
//! parse pipeline built on it.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::association::{score_with, ConnectionScore, IntegralParams, LimbScorer};
use crate::detection::{detect_all, CandidateSet, NmsParams, PartCandidate};
use crate::error::{Error, Result};
use crate::grid::{check_dims, ScalarGrid, VectorGrid};
use crate::matching::{MatchResult, Solver};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssemblyParams {
    pub min_parts: usize,
    /// Lower bound on `score / num_parts`.
    pub min_score: f64,
}

impl Default for AssemblyParams {
    fn default() -> Self {
        AssemblyParams {
            min_parts: 3,
            min_score: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonPose {
    /// One optional candidate per part.
    pub parts: Vec<Option<PartCandidate>>,
    pub score: f64,
    pub num_parts: usize,
}

impl PersonPose {
    /// Builds a pose and counts its present parts.
    pub fn new(parts: Vec<Option<PartCandidate>>, score: f64) -> Self {
        let num_parts = parts.iter().filter(|p| p.is_some()).count();
        PersonPose {
            parts,
            score,
            num_parts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParseResult {
    /// Ordered by descending score.
    pub persons: Vec<PersonPose>,
    /// Sum of the scores of the connections inside retained persons.
    pub total_score: f64,
}

impl ParseResult {
    pub fn num_persons(&self) -> usize {
        self.persons.len()
    }
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

/// Merges the accepted connections of every limb into persons.
///
/// Each connected component of candidates under the accepted connections
/// becomes one person scored by its connection scores plus its candidate
/// confidences. Persons below `params.min_parts` parts or below
/// `params.min_score` per part are dropped.
pub fn assemble(
    matches: &[MatchResult],
    candidates: &CandidateSet,
    topo: &Topology,
    params: &AssemblyParams,
) -> Result<ParseResult> {
    if !topo.is_tree() {
        return Err(Error::Topology(
            "assembly requires a tree topology; use solve_full_graph for full graphs".into(),
        ));
    }
    if candidates.num_parts() != topo.num_parts() {
        return Err(Error::DimensionMismatch {
            expected: format!("candidates for {} parts", topo.num_parts()),
            found: format!("candidates for {} parts", candidates.num_parts()),
        });
    }
    let mut offsets = Vec::with_capacity(topo.num_parts() + 1);
    offsets.push(0);
    for j in 0..topo.num_parts() {
        offsets.push(offsets[j] + candidates.part(j).len());
    }
    let n = offsets[topo.num_parts()];
    let node = |part: usize, id: usize| -> Result<usize> {
        if id >= candidates.part(part).len() {
            return Err(Error::Consistency(format!(
                "connection references missing candidate {id} of part {part}"
            )));
        }
        Ok(offsets[part] + id)
    };

    let mut uf = UnionFind::new(n);
    let mut edges = Vec::new();
    for m in matches {
        if m.limb >= topo.num_limbs() {
            return Err(Error::Consistency(format!("match for unknown limb {}", m.limb)));
        }
        let l = topo.limb(m.limb);
        for c in &m.pairs {
            let (a, b) = (node(l.from, c.m)?, node(l.to, c.n)?);
            uf.union(a, b);
            edges.push((a, c.score));
        }
    }

    // Components keyed by root, in order of their smallest member.
    let mut slot = vec![usize::MAX; n];
    let mut members: Vec<Vec<usize>> = Vec::new();
    for v in 0..n {
        let r = uf.find(v);
        if slot[r] == usize::MAX {
            slot[r] = members.len();
            members.push(Vec::new());
        }
        members[slot[r]].push(v);
    }
    let mut edge_sum = vec![0.0; members.len()];
    for &(a, score) in &edges {
        edge_sum[slot[uf.find(a)]] += score;
    }

    let mut persons = Vec::new();
    let mut total_score = 0.0;
    for (g, group) in members.iter().enumerate() {
        let mut parts: Vec<Option<PartCandidate>> = vec![None; topo.num_parts()];
        let mut conf = 0.0;
        for &v in group {
            let part = offsets.partition_point(|&o| o <= v) - 1;
            let cand = candidates.part(part)[v - offsets[part]];
            if parts[part].is_some() {
                return Err(Error::Consistency(format!(
                    "one person holds two candidates of part {part}"
                )));
            }
            parts[part] = Some(cand);
            conf += cand.score;
        }
        let pose = PersonPose::new(parts, edge_sum[g] + conf);
        if pose.num_parts < params.min_parts || pose.score / (pose.num_parts as f64) < params.min_score {
            continue;
        }
        total_score += edge_sum[g];
        persons.push(pose);
    }
    // Stable: equal scores keep component order.
    persons.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(ParseResult {
        persons,
        total_score,
    })
}

/// Every knob of the parse pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParseParams {
    pub nms: NmsParams,
    pub integral: IntegralParams,
    pub solver: Solver,
    pub assembly: AssemblyParams,
    /// Score and match limbs on the rayon pool.
    pub parallel: bool,
}

/// Wall time spent in each parse stage.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StageTimings {
    pub detect: Duration,
    pub score: Duration,
    pub matching: Duration,
    pub assemble: Duration,
}

impl StageTimings {
    /// Everything after detection.
    pub fn parse(&self) -> Duration {
        self.score + self.matching + self.assemble
    }
}

fn check_inputs(maps: &[ScalarGrid], fields: &[VectorGrid], topo: &Topology) -> Result<()> {
    if maps.len() != topo.num_parts() || fields.len() != topo.num_limbs() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} maps and {} fields", topo.num_parts(), topo.num_limbs()),
            found: format!("{} maps and {} fields", maps.len(), fields.len()),
        });
    }
    let dims = maps
        .first()
        .map(ScalarGrid::dims)
        .or_else(|| fields.first().map(VectorGrid::dims));
    if let Some(dims) = dims {
        check_dims(maps, dims, "map")?;
        check_dims(fields, dims, "field")?;
    }
    Ok(())
}

/// Solves every limb's bipartite problem.
pub fn match_all(scores: &[Vec<ConnectionScore>], solver: Solver, parallel: bool) -> Vec<MatchResult> {
    if parallel {
        scores
            .par_iter()
            .enumerate()
            .map(|(c, s)| solver.solve(c, s))
            .collect()
    } else {
        scores.iter().enumerate().map(|(c, s)| solver.solve(c, s)).collect()
    }
}

/// Scores, matches and assembles a given candidate set.
pub fn parse_candidates(
    scorer: &LimbScorer<'_>,
    candidates: &CandidateSet,
    topo: &Topology,
    params: &ParseParams,
) -> Result<(ParseResult, StageTimings)> {
    let mut t = StageTimings::default();
    let start = Instant::now();
    let scores = score_with(scorer, candidates, topo, params.parallel)?;
    t.score = start.elapsed();
    let start = Instant::now();
    let matches = match_all(&scores, params.solver, params.parallel);
    t.matching = start.elapsed();
    let start = Instant::now();
    let result = assemble(&matches, candidates, topo, &params.assembly)?;
    t.assemble = start.elapsed();
    Ok((result, t))
}

/// End-to-end parse with per-stage timings.
pub fn parse_timed(
    maps: &[ScalarGrid],
    fields: &[VectorGrid],
    topo: &Topology,
    params: &ParseParams,
) -> Result<(ParseResult, StageTimings)> {
    check_inputs(maps, fields, topo)?;
    params.integral.validate()?;
    let start = Instant::now();
    let candidates = detect_all(maps, &params.nms);
    let detect = start.elapsed();
    let (result, mut t) = parse_candidates(
        &LimbScorer::Affinity(fields, params.integral),
        &candidates,
        topo,
        params,
    )?;
    t.detect = detect;
    Ok((result, t))
}

/// Detection, limb scoring, per-limb matching and assembly.
pub fn parse(
    maps: &[ScalarGrid],
    fields: &[VectorGrid],
    topo: &Topology,
    params: &ParseParams,
) -> Result<ParseResult> {
    parse_timed(maps, fields, topo, params).map(|(r, _)| r)
}
