//! PCKh keypoint matching, per-part average precision, and the two oracle
//! ablations (ground-truth detections, ground-truth connections).

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::assembly::{parse_candidates, ParseParams, ParseResult, PersonPose};
use crate::association::LimbScorer;
use crate::detection::{CandidateSet, PartCandidate};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::grid::VectorGrid;
use crate::scene::Scene;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    /// Hit radius as a fraction of each person's reference length.
    pub pckh_fraction: f64,
    /// Part pair whose distance is the reference length; falls back to the
    /// topology's reference pair when `None`.
    pub reference: Option<(usize, usize)>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pckh_fraction: 0.5,
            reference: None,
        }
    }
}

impl EvalConfig {
    pub fn with_fraction(pckh_fraction: f64) -> Self {
        EvalConfig {
            pckh_fraction,
            ..Default::default()
        }
    }

    fn resolve(&self, topo: &Topology) -> Result<(usize, usize)> {
        if !(self.pckh_fraction > 0.0 && self.pckh_fraction.is_finite()) {
            return Err(Error::Param(format!(
                "pckh_fraction must be > 0, got {}",
                self.pckh_fraction
            )));
        }
        let pair = self.reference.or(topo.reference()).ok_or_else(|| {
            Error::Param("no reference part pair configured and the topology declares none".into())
        })?;
        if pair.0 >= topo.num_parts() || pair.1 >= topo.num_parts() {
            return Err(Error::Param(format!("reference pair {pair:?} out of range")));
        }
        Ok(pair)
    }
}

/// Hit radius of every person in `gt`. A person without both reference parts
/// labeled borrows the mean reference length of the other persons in the
/// image, or gets radius 0 when no person has one.
pub fn hit_radii(gt: &Scene, reference: (usize, usize), fraction: f64) -> Vec<f64> {
    let lengths: Vec<Option<f64>> = gt
        .persons
        .iter()
        .map(|p| match (p[reference.0], p[reference.1]) {
            (Some(a), Some(b)) => Some(a.distance(b)),
            _ => None,
        })
        .collect();
    let known: Vec<f64> = lengths.iter().flatten().copied().collect();
    let fallback = if known.is_empty() {
        0.0
    } else {
        known.iter().sum::<f64>() / known.len() as f64
    };
    lengths
        .into_iter()
        .map(|l| fraction * l.unwrap_or(fallback))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub part_names: Vec<String>,
    pub per_part_ap: Vec<f64>,
    pub map: f64,
}

impl EvalReport {
    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let width = self
            .part_names
            .iter()
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max(4);
        let mut out = format!("{:<width$}  {:>7}\n", "part", "AP");
        for (name, ap) in self.part_names.iter().zip(&self.per_part_ap) {
            let _ = writeln!(out, "{name:<width$}  {:>7.4}", ap);
        }
        let _ = writeln!(out, "{:<width$}  {:>7.4}", "mAP", self.map);
        out
    }

    /// `part <name> ap <value>` lines followed by `map <value>`.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for (name, ap) in self.part_names.iter().zip(&self.per_part_ap) {
            let _ = writeln!(out, "part {name} ap {ap:.6}");
        }
        let _ = writeln!(out, "map {:.6}", self.map);
        out
    }
}

/// One scored keypoint prediction: `(score, true positive)`.
type Detection = (f64, bool);

struct ImageRecord {
    per_part: Vec<Vec<Detection>>,
    positives: Vec<usize>,
}

fn evaluate_image(pred: &ParseResult, gt: &Scene, reference: (usize, usize), fraction: f64) -> ImageRecord {
    let j_count = gt.num_parts;
    let radii = hit_radii(gt, reference, fraction);
    let mut order: Vec<&PersonPose> = pred.persons.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score));

    let hit = |person: &PersonPose, g: usize, j: usize| -> bool {
        match (person.parts.get(j).copied().flatten(), gt.persons[g][j]) {
            (Some(c), Some(t)) => c.position.distance(t) <= radii[g],
            _ => false,
        }
    };

    let mut used = vec![false; gt.num_persons()];
    let mut per_part = vec![Vec::new(); j_count];
    for person in order {
        let mut best: Option<(usize, usize)> = None;
        for g in (0..gt.num_persons()).filter(|&g| !used[g]) {
            let hits = (0..j_count).filter(|&j| hit(person, g, j)).count();
            if hits > 0 && best.is_none_or(|(_, h)| hits > h) {
                best = Some((g, hits));
            }
        }
        if let Some((g, _)) = best {
            used[g] = true;
        }
        for j in 0..j_count {
            if person.parts.get(j).copied().flatten().is_some() {
                let tp = best.is_some_and(|(g, _)| hit(person, g, j));
                per_part[j].push((person.score, tp));
            }
        }
    }
    ImageRecord {
        per_part,
        positives: (0..j_count).map(|j| gt.labeled_count(j)).collect(),
    }
}

/// Average precision with all-points interpolation. Detections are ranked
/// by descending score; ties keep input order.
pub fn average_precision(detections: &[Detection], positives: usize) -> f64 {
    if positives == 0 {
        return if detections.is_empty() { 1.0 } else { 0.0 };
    }
    let mut ranked: Vec<&Detection> = detections.iter().collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(ranked.len());
    for (i, d) in ranked.iter().enumerate() {
        if d.1 {
            tp += 1;
        }
        curve.push((tp as f64 / positives as f64, tp as f64 / (i + 1) as f64));
    }
    // Precision envelope from the right, then area under the step curve.
    for i in (0..curve.len().saturating_sub(1)).rev() {
        curve[i].1 = curve[i].1.max(curve[i + 1].1);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (recall, precision) in curve {
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    ap
}

/// PCKh-based per-part AP and mAP over a dataset of aligned predictions and
/// ground-truth scenes.
pub fn evaluate(preds: &[ParseResult], gts: &[Scene], topo: &Topology, cfg: &EvalConfig) -> Result<EvalReport> {
    if preds.len() != gts.len() {
        return Err(Error::Param(format!(
            "{} predictions for {} ground-truth scenes",
            preds.len(),
            gts.len()
        )));
    }
    let reference = cfg.resolve(topo)?;
    for gt in gts {
        gt.check_topology(topo)?;
    }
    if let Some(p) = preds
        .iter()
        .flat_map(|r| &r.persons)
        .find(|p| p.parts.len() != topo.num_parts())
    {
        return Err(Error::Param(format!(
            "predicted person has {} parts, topology has {}",
            p.parts.len(),
            topo.num_parts()
        )));
    }
    let records: Vec<ImageRecord> = preds
        .par_iter()
        .zip(gts)
        .map(|(p, g)| evaluate_image(p, g, reference, cfg.pckh_fraction))
        .collect();
    let per_part_ap: Vec<f64> = (0..topo.num_parts())
        .map(|j| {
            let dets: Vec<Detection> = records.iter().flat_map(|r| r.per_part[j].iter().copied()).collect();
            let positives = records.iter().map(|r| r.positives[j]).sum();
            average_precision(&dets, positives)
        })
        .collect();
    let map = if per_part_ap.is_empty() {
        0.0
    } else {
        per_part_ap.iter().sum::<f64>() / per_part_ap.len() as f64
    };
    Ok(EvalReport {
        part_names: topo.part_names().to_vec(),
        per_part_ap,
        map,
    })
}

/// Ground-truth keypoints as a candidate set with unit scores.
pub fn gt_candidates(gt: &Scene) -> CandidateSet {
    CandidateSet::from_points(
        (0..gt.num_parts)
            .map(|j| gt.persons.iter().filter_map(|p| p[j]).map(|p| (p, 1.0)).collect())
            .collect(),
    )
}

/// Ablation: parse with the ground-truth keypoints as candidates, skipping
/// detection.
pub fn eval_oracle_detection(
    gt: &Scene,
    fields: &[VectorGrid],
    topo: &Topology,
    params: &ParseParams,
) -> Result<ParseResult> {
    gt.check_topology(topo)?;
    let candidates = gt_candidates(gt);
    parse_candidates(
        &LimbScorer::Affinity(fields, params.integral),
        &candidates,
        topo,
        params,
    )
    .map(|(r, _)| r)
}

/// Ablation: group detections by their nearest ground-truth keypoint of the
/// same part, bypassing affinity scoring. Detections farther than the
/// owner's hit radius are dropped; when two detections claim the same
/// keypoint the closer one wins. Person score is the sum of its candidate
/// scores.
pub fn eval_oracle_connection(
    detections: &CandidateSet,
    gt: &Scene,
    topo: &Topology,
    cfg: &EvalConfig,
) -> Result<ParseResult> {
    gt.check_topology(topo)?;
    if detections.num_parts() != topo.num_parts() {
        return Err(Error::DimensionMismatch {
            expected: format!("candidates for {} parts", topo.num_parts()),
            found: format!("candidates for {} parts", detections.num_parts()),
        });
    }
    let reference = cfg.resolve(topo)?;
    let radii = hit_radii(gt, reference, cfg.pckh_fraction);
    let mut slots: Vec<Vec<Option<(f64, PartCandidate)>>> = vec![vec![None; topo.num_parts()]; gt.num_persons()];
    for c in detections.iter() {
        let nearest = gt
            .persons
            .iter()
            .enumerate()
            .filter_map(|(k, p)| p[c.part].map(|t: Point| (k, t.distance(c.position))))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((k, d)) = nearest else {
            continue;
        };
        if d > radii[k] {
            continue;
        }
        let slot = &mut slots[k][c.part];
        if slot.is_none_or(|(best, _)| d < best) {
            *slot = Some((d, *c));
        }
    }
    let mut persons: Vec<PersonPose> = slots
        .into_iter()
        .map(|parts| {
            let parts: Vec<Option<PartCandidate>> = parts.into_iter().map(|s| s.map(|(_, c)| c)).collect();
            let score = parts.iter().flatten().map(|c| c.score).sum();
            PersonPose::new(parts, score)
        })
        .filter(|p| p.num_parts > 0)
        .collect();
    persons.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(ParseResult {
        persons,
        total_score: 0.0,
    })
}

/// Converts a scene into a prediction with every person scored `score` and
/// every keypoint at confidence 1.
pub fn scene_as_prediction(gt: &Scene, score: f64) -> ParseResult {
    let persons = gt
        .persons
        .iter()
        .map(|p| {
            let parts = p
                .iter()
                .enumerate()
                .map(|(j, kp)| {
                    kp.map(|position| PartCandidate {
                        part: j,
                        id: 0,
                        position,
                        score: 1.0,
                    })
                })
                .collect();
            PersonPose::new(parts, score)
        })
        .collect();
    ParseResult {
        persons,
        total_score: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Limb, TopologyKind};

    fn topo2() -> Topology {
        Topology::new(
            vec!["a".into(), "b".into()],
            vec![Limb::new(0, 1)],
            TopologyKind::Tree,
            Some((0, 1)),
        )
        .unwrap()
    }

    fn scene(persons: &[[(f64, f64); 2]]) -> Scene {
        Scene::new(
            200,
            200,
            2,
            persons
                .iter()
                .map(|p| p.iter().map(|&(x, y)| Some(Point::new(x, y))).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_is_perfect() {
        let gt = scene(&[[(10.0, 10.0), (10.0, 30.0)], [(100.0, 10.0), (100.0, 30.0)]]);
        let r = evaluate(&[scene_as_prediction(&gt, 1.0)], &[gt], &topo2(), &EvalConfig::default()).unwrap();
        assert_eq!(r.per_part_ap, vec![1.0, 1.0]);
        assert_eq!(r.map, 1.0);
    }

    #[test]
    fn empty_predictions_score_zero() {
        let gt = scene(&[[(10.0, 10.0), (10.0, 30.0)]]);
        let r = evaluate(&[ParseResult::default()], &[gt], &topo2(), &EvalConfig::default()).unwrap();
        assert_eq!(r.map, 0.0);
    }

    #[test]
    fn displaced_keypoint_by_hand() {
        // Reference length 20, radius 10. Person 2's part b is 15 px off.
        let gt = scene(&[[(10.0, 10.0), (10.0, 30.0)], [(100.0, 10.0), (100.0, 30.0)]]);
        let mut pred = scene_as_prediction(&gt, 1.0);
        pred.persons[0].score = 0.9;
        pred.persons[1].score = 0.8;
        pred.persons[1].parts[1].as_mut().unwrap().position = Point::new(115.0, 30.0);
        let r = evaluate(&[pred], &[gt], &topo2(), &EvalConfig::default()).unwrap();
        assert_eq!(r.per_part_ap[0], 1.0);
        // Ranked TP, FP over 2 positives: recall 0.5 at precision 1.
        assert!((r.per_part_ap[1] - 0.5).abs() < 1e-12);
        assert!((r.map - 0.75).abs() < 1e-12);
    }

    #[test]
    fn ap_all_points_interpolation() {
        // TP, FP, TP over 3 positives: 1/3 * 1 + 1/3 * 2/3.
        let ap = average_precision(&[(0.9, true), (0.8, false), (0.7, true)], 3);
        assert!((ap - (1.0 / 3.0 + 2.0 / 9.0)).abs() < 1e-12);
        assert_eq!(average_precision(&[], 0), 1.0);
        assert_eq!(average_precision(&[(0.5, false)], 0), 0.0);
    }

    #[test]
    fn misaligned_lists_error() {
        let gt = scene(&[]);
        assert!(evaluate(&[], &[gt], &topo2(), &EvalConfig::default()).is_err());
    }

    #[test]
    fn oracle_connection_groups_by_nearest() {
        let gt = scene(&[[(10.0, 10.0), (10.0, 30.0)], [(100.0, 10.0), (100.0, 30.0)]]);
        let dets = CandidateSet::from_points(vec![
            vec![(Point::new(11.0, 10.0), 0.9), (Point::new(99.0, 11.0), 0.8), (Point::new(50.0, 50.0), 0.7)],
            vec![(Point::new(10.0, 31.0), 0.9), (Point::new(101.0, 30.0), 0.6)],
        ]);
        let r = eval_oracle_connection(&dets, &gt, &topo2(), &EvalConfig::default()).unwrap();
        assert_eq!(r.persons.len(), 2);
        assert!(r.persons.iter().all(|p| p.num_parts == 2));
        let ev = evaluate(&[r], &[gt], &topo2(), &EvalConfig::default()).unwrap();
        assert_eq!(ev.map, 1.0);
    }

    #[test]
    fn report_formats() {
        let r = EvalReport {
            part_names: vec!["a".into(), "bb".into()],
            per_part_ap: vec![1.0, 0.5],
            map: 0.75,
        };
        assert_eq!(r.to_lines(), "part a ap 1.000000\npart bb ap 0.500000\nmap 0.750000\n");
        assert!(r.to_table().contains("mAP"));
    }
}
