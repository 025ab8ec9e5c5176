//! Limb scoring: the affinity-field line integral between two candidates,
//! and the midpoint-incidence baselines it is compared against.

use rayon::prelude::*;

use crate::detection::CandidateSet;
use crate::error::{Error, Result};
use crate::geometry::{LimbSegment, Point};
use crate::grid::{ScalarGrid, VectorGrid};
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntegralParams {
    /// Uniform samples of `u` over `[0, 1]`, endpoints included.
    pub num_samples: usize,
    pub interpolation: Interpolation,
}

impl Default for IntegralParams {
    fn default() -> Self {
        IntegralParams {
            num_samples: 10,
            interpolation: Interpolation::Bilinear,
        }
    }
}

impl IntegralParams {
    pub fn with_samples(num_samples: usize) -> Self {
        IntegralParams {
            num_samples,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_samples < 2 {
            return Err(Error::Param(format!(
                "num_samples must be >= 2, got {}",
                self.num_samples
            )));
        }
        Ok(())
    }
}

/// Affinity score `E_mn` of connecting candidate `m` of the limb's first part
/// to candidate `n` of its second part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectionScore {
    pub limb: usize,
    pub m: usize,
    pub n: usize,
    pub score: f64,
}

/// Score given to candidate pairs at the same position; never matched.
pub const COINCIDENT_SCORE: f64 = f64::NEG_INFINITY;

/// Mean over `num_samples` equally spaced points `p(u) = (1-u) a + u b` of
/// the field sample dotted with the unit vector from `a` to `b`.
pub fn line_integral(field: &VectorGrid, a: Point, b: Point, params: &IntegralParams) -> Result<f64> {
    params.validate()?;
    let seg = LimbSegment::new(a, b)?;
    let last = (params.num_samples - 1) as f64;
    let sum: f64 = (0..params.num_samples)
        .map(|i| {
            let p = a.lerp(b, i as f64 / last);
            let v = match params.interpolation {
                Interpolation::Bilinear => field.sample_bilinear(p),
                Interpolation::Nearest => field.sample_nearest(p),
            };
            v.dot(seg.direction)
        })
        .sum();
    Ok(sum / params.num_samples as f64)
}

/// One-midpoint baseline: the midpoint channel sampled at `(a + b) / 2`.
pub fn midpoint_score(map: &ScalarGrid, a: Point, b: Point) -> Result<f64> {
    LimbSegment::new(a, b)?;
    Ok(map.sample_bilinear(a.lerp(b, 0.5)))
}

/// Two-midpoint baseline: mean of the channel sampled at `u = 1/3` and `u = 2/3`.
pub fn two_midpoint_score(map: &ScalarGrid, a: Point, b: Point) -> Result<f64> {
    LimbSegment::new(a, b)?;
    Ok(0.5 * (map.sample_bilinear(a.lerp(b, 1.0 / 3.0)) + map.sample_bilinear(a.lerp(b, 2.0 / 3.0))))
}

/// How candidate limbs are scored.
#[derive(Debug, Clone, Copy)]
pub enum LimbScorer<'a> {
    /// Line integral over one affinity field per limb.
    Affinity(&'a [VectorGrid], IntegralParams),
    /// One midpoint channel per limb.
    OneMidpoint(&'a [ScalarGrid]),
    /// One channel per limb holding peaks at both third points.
    TwoMidpoints(&'a [ScalarGrid]),
}

impl LimbScorer<'_> {
    fn channels(&self) -> usize {
        match self {
            LimbScorer::Affinity(f, _) => f.len(),
            LimbScorer::OneMidpoint(m) | LimbScorer::TwoMidpoints(m) => m.len(),
        }
    }

    fn score(&self, limb: usize, a: Point, b: Point) -> f64 {
        let s = match self {
            LimbScorer::Affinity(fields, params) => line_integral(&fields[limb], a, b, params),
            LimbScorer::OneMidpoint(maps) => midpoint_score(&maps[limb], a, b),
            LimbScorer::TwoMidpoints(maps) => two_midpoint_score(&maps[limb], a, b),
        };
        s.unwrap_or(COINCIDENT_SCORE)
    }
}

/// Scores every candidate pair of every limb with `scorer`. Pairs are listed
/// in `(m, n)` row-major order per limb.
pub fn score_with(
    scorer: &LimbScorer<'_>,
    candidates: &CandidateSet,
    topo: &Topology,
    parallel: bool,
) -> Result<Vec<Vec<ConnectionScore>>> {
    if scorer.channels() != topo.num_limbs() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} limb channels", topo.num_limbs()),
            found: format!("{} channels", scorer.channels()),
        });
    }
    if candidates.num_parts() != topo.num_parts() {
        return Err(Error::DimensionMismatch {
            expected: format!("candidates for {} parts", topo.num_parts()),
            found: format!("candidates for {} parts", candidates.num_parts()),
        });
    }
    if let LimbScorer::Affinity(_, params) = scorer {
        params.validate()?;
    }
    let score_limb = |c: usize| -> Vec<ConnectionScore> {
        let l = topo.limb(c);
        let firsts = candidates.part(l.from);
        let seconds = candidates.part(l.to);
        let mut out = Vec::with_capacity(firsts.len() * seconds.len());
        for a in firsts {
            for b in seconds {
                out.push(ConnectionScore {
                    limb: c,
                    m: a.id,
                    n: b.id,
                    score: scorer.score(c, a.position, b.position),
                });
            }
        }
        out
    };
    Ok(if parallel {
        (0..topo.num_limbs()).into_par_iter().map(score_limb).collect()
    } else {
        (0..topo.num_limbs()).map(score_limb).collect()
    })
}

/// Line-integral scores of all candidate limbs.
pub fn score_connections(
    fields: &[VectorGrid],
    candidates: &CandidateSet,
    topo: &Topology,
    params: &IntegralParams,
) -> Result<Vec<Vec<ConnectionScore>>> {
    score_with(&LimbScorer::Affinity(fields, *params), candidates, topo, false)
}
