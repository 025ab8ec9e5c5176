//! Side-by-side runs of the grouping strategies on one set of scenes:
//! exhaustive full-graph search, tree with optimal or greedy per-limb
//! matching, and the one- and two-midpoint association baselines.

use std::fmt;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::assembly::{parse_candidates, ParseParams, ParseResult, PersonPose};
use crate::association::{score_with, LimbScorer};
use crate::detection::{detect_all, CandidateSet};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalConfig};
use crate::grid::{ScalarGrid, VectorGrid};
use crate::groundtruth::{render_all, render_midpoints, RenderParams};
use crate::matching::{solve_full_graph, FullGraphSolution, Solver};
use crate::scene::Scene;
use crate::synth::{perturb, perturb_association_maps, NoiseConfig};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    FullGraph,
    TreeHungarian,
    TreeGreedy,
    OneMidpoint,
    TwoMidpoints,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::FullGraph,
        Strategy::TreeHungarian,
        Strategy::TreeGreedy,
        Strategy::OneMidpoint,
        Strategy::TwoMidpoints,
    ];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::FullGraph => "full-graph",
            Strategy::TreeHungarian => "tree-hungarian",
            Strategy::TreeGreedy => "tree-greedy",
            Strategy::OneMidpoint => "one-midpoint",
            Strategy::TwoMidpoints => "two-midpoints",
        })
    }
}

/// Everything one scene contributes to a comparison. All strategies share
/// the same detections.
#[derive(Debug, Clone)]
pub struct CompareInputs {
    pub scene: Scene,
    pub maps: Vec<ScalarGrid>,
    pub fields: Vec<VectorGrid>,
    /// Fields of the complete graph; empty unless requested.
    pub full_fields: Vec<VectorGrid>,
    pub one_midpoint: Vec<ScalarGrid>,
    pub two_midpoints: Vec<ScalarGrid>,
    pub candidates: CandidateSet,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompareConfig {
    pub render: RenderParams,
    pub parse: ParseParams,
    pub eval: EvalConfig,
    /// Part maps get map noise and spurious peaks; fields and midpoint maps
    /// share the field noise level. Each channel family draws from its own
    /// seed offset.
    pub noise: Option<NoiseConfig>,
}

/// Renders (and optionally perturbs) every channel family for `scene`, then
/// detects candidates on the part maps. Complete-graph fields are rendered
/// only when `full` is given.
pub fn prepare(scene: &Scene, topo: &Topology, full: Option<&Topology>, cfg: &CompareConfig) -> Result<CompareInputs> {
    let (mut maps, mut fields) = render_all(scene, topo, &cfg.render)?;
    let mut full_fields = match full {
        Some(full) => render_all(scene, full, &cfg.render)?.1,
        None => Vec::new(),
    };
    let mut one = render_midpoints(scene, topo, &cfg.render, &[0.5]);
    let mut two = render_midpoints(scene, topo, &cfg.render, &[1.0 / 3.0, 2.0 / 3.0]);
    if let Some(noise) = cfg.noise {
        (maps, fields, _) = perturb(&maps, &fields, &noise)?;
        let shifted = |k: u64| NoiseConfig {
            seed: noise.seed.wrapping_add(k),
            ..noise
        };
        (_, full_fields, _) = perturb(&[], &full_fields, &shifted(1))?;
        one = perturb_association_maps(&one, &shifted(2))?;
        two = perturb_association_maps(&two, &shifted(3))?;
    }
    let candidates = detect_all(&maps, &cfg.parse.nms);
    Ok(CompareInputs {
        scene: scene.clone(),
        maps,
        fields,
        full_fields,
        one_midpoint: one,
        two_midpoints: two,
        candidates,
    })
}

/// Converts a full-graph grouping into persons, scoring each by its internal
/// pair scores plus candidate confidences and applying the assembly filters.
pub fn full_graph_result(
    solution: &FullGraphSolution,
    candidates: &CandidateSet,
    table: &crate::matching::PairScores,
    num_parts: usize,
    params: &ParseParams,
) -> ParseResult {
    let mut persons = Vec::new();
    let mut total_score = 0.0;
    for group in &solution.groups {
        let mut parts = vec![None; num_parts];
        let mut conf = 0.0;
        for &(j, id) in group {
            let c = candidates.part(j)[id];
            conf += c.score;
            parts[j] = Some(c);
        }
        let inner = table.grouping_total(std::slice::from_ref(group));
        let pose = PersonPose::new(parts, inner + conf);
        if pose.num_parts < params.assembly.min_parts
            || pose.score / (pose.num_parts as f64) < params.assembly.min_score
        {
            continue;
        }
        total_score += inner;
        persons.push(pose);
    }
    persons.sort_by(|a, b| b.score.total_cmp(&a.score));
    ParseResult { persons, total_score }
}

/// Exhaustive full-graph parse of one prepared scene.
pub fn parse_full_graph(inputs: &CompareInputs, full: &Topology, params: &ParseParams) -> Result<ParseResult> {
    let scorer = LimbScorer::Affinity(&inputs.full_fields, params.integral);
    let scores = score_with(&scorer, &inputs.candidates, full, false)?;
    let solution = solve_full_graph(&inputs.candidates, full, &scores)?;
    let table = crate::matching::PairScores::new(&inputs.candidates, full, &scores);
    Ok(full_graph_result(
        &solution,
        &inputs.candidates,
        &table,
        full.num_parts(),
        params,
    ))
}

/// Parses one prepared scene with `strategy`.
pub fn run_strategy(
    strategy: Strategy,
    inputs: &CompareInputs,
    topo: &Topology,
    full: &Topology,
    params: &ParseParams,
) -> Result<ParseResult> {
    let hungarian = ParseParams {
        solver: Solver::Hungarian,
        ..*params
    };
    let (scorer, params) = match strategy {
        Strategy::FullGraph => return parse_full_graph(inputs, full, params),
        Strategy::TreeHungarian => (LimbScorer::Affinity(&inputs.fields, params.integral), hungarian),
        Strategy::TreeGreedy => (
            LimbScorer::Affinity(&inputs.fields, params.integral),
            ParseParams {
                solver: Solver::Greedy,
                ..*params
            },
        ),
        Strategy::OneMidpoint => (LimbScorer::OneMidpoint(&inputs.one_midpoint), hungarian),
        Strategy::TwoMidpoints => (LimbScorer::TwoMidpoints(&inputs.two_midpoints), hungarian),
    };
    parse_candidates(&scorer, &inputs.candidates, topo, &params).map(|(r, _)| r)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRow {
    pub strategy: Strategy,
    /// `None` when the strategy could not run on every scene.
    pub map: Option<f64>,
    pub time_ms: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub rows: Vec<StrategyRow>,
    pub scenes: usize,
}

impl CompareReport {
    pub fn row(&self, strategy: Strategy) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<15} {:>8} {:>10}  {}\n", "strategy", "mAP", "time_ms", "note");
        for r in &self.rows {
            let map = r.map.map_or_else(|| "n/a".to_string(), |m| format!("{m:.4}"));
            let _ = writeln!(out, "{:<15} {:>8} {:>10.3}  {}", r.strategy.to_string(), map, r.time_ms, r.note);
        }
        let _ = writeln!(out, "scenes {}", self.scenes);
        out
    }
}

/// Runs `strategies` over `scenes` and evaluates each against the scenes.
/// Rendering, noise and detection are shared between strategies and not
/// timed. The full-graph strategy is skipped once any scene exceeds the
/// exhaustive search limits.
pub fn compare(scenes: &[Scene], topo: &Topology, strategies: &[Strategy], cfg: &CompareConfig) -> Result<CompareReport> {
    if !topo.is_tree() {
        return Err(Error::Topology("comparison needs a tree topology".into()));
    }
    let full = topo.full_graph_of()?;
    let mut preds: Vec<Vec<ParseResult>> = vec![Vec::with_capacity(scenes.len()); strategies.len()];
    let mut elapsed = vec![Duration::ZERO; strategies.len()];
    let mut skipped: Vec<Option<String>> = vec![None; strategies.len()];
    for (i, scene) in scenes.iter().enumerate() {
        let scene_cfg = CompareConfig {
            noise: cfg.noise.map(|n| NoiseConfig {
                seed: n.seed.wrapping_add(1000 * i as u64),
                ..n
            }),
            ..cfg.clone()
        };
        let need_full = strategies
            .iter()
            .zip(&skipped)
            .any(|(s, skip)| *s == Strategy::FullGraph && skip.is_none());
        let inputs = prepare(scene, topo, need_full.then_some(&full), &scene_cfg)?;
        for (k, &strategy) in strategies.iter().enumerate() {
            if skipped[k].is_some() {
                continue;
            }
            let start = Instant::now();
            let r = run_strategy(strategy, &inputs, topo, &full, &cfg.parse);
            elapsed[k] += start.elapsed();
            match r {
                Ok(r) => preds[k].push(r),
                Err(Error::InstanceTooLarge(msg)) => skipped[k] = Some(msg),
                Err(e) => return Err(e),
            }
        }
    }
    let mut rows = Vec::with_capacity(strategies.len());
    for (k, &strategy) in strategies.iter().enumerate() {
        rows.push(match skipped[k].take() {
            Some(msg) => StrategyRow {
                strategy,
                map: None,
                time_ms: 0.0,
                note: format!("skipped: {msg}"),
            },
            None => StrategyRow {
                strategy,
                map: Some(evaluate(&preds[k], scenes, topo, &cfg.eval)?.map),
                time_ms: elapsed[k].as_secs_f64() * 1e3,
                note: String::new(),
            },
        });
    }
    Ok(CompareReport {
        rows,
        scenes: scenes.len(),
    })
}
