//! Part candidates from confidence maps by 8-neighbourhood non-maximum
//! suppression with optional quadratic sub-pixel refinement.

use rayon::prelude::*;

use crate::geometry::Point;
use crate::grid::ScalarGrid;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsParams {
    /// Peaks must strictly exceed this value.
    pub threshold: f64,
    /// Refine integer peaks with a 1D parabola fit along each axis.
    pub refine: bool,
}

impl Default for NmsParams {
    fn default() -> Self {
        NmsParams {
            threshold: 0.1,
            refine: true,
        }
    }
}

/// A detected peak `d_j^m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartCandidate {
    pub part: usize,
    /// Ordinal within the part, dense from 0 in descending score order.
    pub id: usize,
    pub position: Point,
    pub score: f64,
}

/// Candidates grouped by part, each list sorted by descending score.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateSet {
    pub per_part: Vec<Vec<PartCandidate>>,
}

impl CandidateSet {
    pub fn empty(num_parts: usize) -> Self {
        CandidateSet {
            per_part: vec![Vec::new(); num_parts],
        }
    }

    /// Builds a set from raw `(position, score)` lists per part, sorting
    /// each by descending score (stable) and assigning ids.
    pub fn from_points(per_part: Vec<Vec<(Point, f64)>>) -> Self {
        CandidateSet {
            per_part: per_part
                .into_iter()
                .enumerate()
                .map(|(part, mut pts)| {
                    pts.sort_by(|a, b| b.1.total_cmp(&a.1));
                    pts.into_iter()
                        .enumerate()
                        .map(|(id, (position, score))| PartCandidate {
                            part,
                            id,
                            position,
                            score,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn num_parts(&self) -> usize {
        self.per_part.len()
    }

    pub fn part(&self, j: usize) -> &[PartCandidate] {
        &self.per_part[j]
    }

    pub fn get(&self, j: usize, id: usize) -> Option<&PartCandidate> {
        self.per_part.get(j)?.get(id)
    }

    pub fn total(&self) -> usize {
        self.per_part.iter().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = &PartCandidate> {
        self.per_part.iter().flatten()
    }
}

const NEIGHBORS: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Vertex offset of the parabola through `(-1, l), (0, c), (1, r)`, or 0
/// when the three samples are not strictly concave.
fn parabola_offset(l: f64, c: f64, r: f64) -> f64 {
    let curvature = l - 2.0 * c + r;
    if curvature < 0.0 {
        (0.5 * (l - r) / curvature).clamp(-0.5, 0.5)
    } else {
        0.0
    }
}

fn refine(map: &ScalarGrid, x: usize, y: usize) -> Point {
    let (w, h) = map.dims();
    let c = map.get(x, y) as f64;
    let dx = if x > 0 && x + 1 < w {
        parabola_offset(map.get(x - 1, y) as f64, c, map.get(x + 1, y) as f64)
    } else {
        0.0
    };
    let dy = if y > 0 && y + 1 < h {
        parabola_offset(map.get(x, y - 1) as f64, c, map.get(x, y + 1) as f64)
    } else {
        0.0
    };
    Point::new(x as f64 + dx, y as f64 + dy)
}

/// Local maxima of `map` above `threshold`.
///
/// A pixel survives when no 8-neighbour is larger and no equal neighbour
/// precedes it in `(y, x)` order, so a plateau keeps only its first pixel.
pub fn nms_peaks(map: &ScalarGrid, part: usize, params: &NmsParams) -> Vec<PartCandidate> {
    let (w, h) = map.dims();
    let mut peaks = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map.get(x, y);
            if !(v as f64 > params.threshold) {
                continue;
            }
            let is_peak = NEIGHBORS.iter().all(|&(dx, dy)| {
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                match map.get_checked(nx, ny) {
                    None => true,
                    Some(n) if n > v => false,
                    // Equal neighbour earlier in scan order wins the plateau.
                    Some(n) if n == v => (ny, nx) > (y as i64, x as i64),
                    Some(_) => true,
                }
            });
            if is_peak {
                let position = if params.refine {
                    refine(map, x, y)
                } else {
                    Point::new(x as f64, y as f64)
                };
                peaks.push((position, v as f64));
            }
        }
    }
    // Stable sort keeps scan order among equal scores.
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1));
    peaks
        .into_iter()
        .enumerate()
        .map(|(id, (position, score))| PartCandidate {
            part,
            id,
            position,
            score,
        })
        .collect()
}

pub fn detect_all(maps: &[ScalarGrid], params: &NmsParams) -> CandidateSet {
    CandidateSet {
        per_part: maps
            .par_iter()
            .enumerate()
            .map(|(j, m)| nms_peaks(m, j, params))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{render_confidence, RenderParams};
    use crate::scene::Scene;

    fn rendered(points: &[(f64, f64)]) -> ScalarGrid {
        let scene = Scene::new(
            80,
            60,
            1,
            points.iter().map(|&(x, y)| vec![Some(Point::new(x, y))]).collect(),
        )
        .unwrap();
        render_confidence(&scene, 0, &RenderParams::default())
    }

    #[test]
    fn single_peak() {
        let map = rendered(&[(10.0, 12.0)]);
        let c = nms_peaks(&map, 0, &NmsParams::default());
        assert_eq!(c.len(), 1);
        assert!(c[0].position.distance(Point::new(10.0, 12.0)) < 0.5);
        assert!((c[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn subpixel_peak_moves_toward_truth() {
        let map = rendered(&[(30.3, 20.8)]);
        let c = nms_peaks(&map, 0, &NmsParams::default());
        assert_eq!(c.len(), 1);
        assert!((c[0].position.x - 30.3).abs() < 0.1, "{:?}", c[0]);
        assert!((c[0].position.y - 20.8).abs() < 0.1, "{:?}", c[0]);
        let raw = nms_peaks(&map, 0, &NmsParams { refine: false, ..Default::default() });
        assert_eq!(raw[0].position, Point::new(30.0, 21.0));
    }

    #[test]
    fn below_threshold_is_empty() {
        let map = ScalarGrid::filled(5, 5, 0.05);
        assert!(nms_peaks(&map, 0, &NmsParams::default()).is_empty());
    }

    #[test]
    fn two_separated_peaks() {
        let sigma = RenderParams::default().sigma;
        let a = (15.0, 30.0);
        let b = (15.0 + 6.0 * sigma, 30.0);
        let c = nms_peaks(&rendered(&[a, b]), 0, &NmsParams::default());
        assert_eq!(c.len(), 2);
        for (x, y) in [a, b] {
            assert!(c.iter().any(|k| k.position.distance(Point::new(x, y)) < 0.5));
        }
    }

    #[test]
    fn plateau_keeps_first_pixel() {
        let mut map = ScalarGrid::new(6, 6);
        for (x, y) in [(2, 2), (3, 2), (2, 3), (3, 3)] {
            map.set(x, y, 0.8);
        }
        let c = nms_peaks(&map, 0, &NmsParams { refine: false, threshold: 0.1 });
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].position, Point::new(2.0, 2.0));
    }

    #[test]
    fn detect_all_assigns_descending_ids() {
        let mut map = ScalarGrid::new(20, 20);
        map.set(3, 3, 0.5);
        map.set(15, 15, 0.9);
        let maps = vec![map, ScalarGrid::new(20, 20)];
        let set = detect_all(&maps, &NmsParams { refine: false, threshold: 0.1 });
        assert_eq!(set.total(), 2);
        assert_eq!(set.part(0)[0].position, Point::new(15.0, 15.0));
        assert_eq!(set.part(0)[0].id, 0);
        assert_eq!(set.part(0)[1].id, 1);
        assert!(set.part(1).is_empty());
    }

    #[test]
    fn parabola_is_bounded() {
        assert_eq!(parabola_offset(0.5, 1.0, 0.5), 0.0);
        assert!(parabola_offset(0.2, 1.0, 0.8) > 0.0);
        assert_eq!(parabola_offset(1.0, 1.0, 1.0), 0.0);
        assert!(parabola_offset(0.999, 1.0, 0.0).abs() <= 0.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn random_map() -> impl Strategy<Value = ScalarGrid> {
            (3usize..12, 3usize..12).prop_flat_map(|(w, h)| {
                proptest::collection::vec(
                    prop_oneof![3 => 0.0f32..1.0, 1 => Just(0.5f32)],
                    w * h,
                )
                .prop_map(move |v| ScalarGrid::from_vec(w, h, v).unwrap())
            })
        }

        proptest! {
            #[test]
            fn nms_invariants(map in random_map(), t1 in 0.0f64..1.0, t2 in 0.0f64..1.0) {
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                let params = NmsParams { threshold: lo, refine: true };
                let peaks = nms_peaks(&map, 0, &params);
                let raw = nms_peaks(&map, 0, &NmsParams { refine: false, ..params });
                prop_assert_eq!(raw.len(), peaks.len());
                for (i, a) in peaks.iter().enumerate() {
                    prop_assert!(a.score > lo);
                    prop_assert_eq!(a.id, i);
                    prop_assert!((a.position.x - raw[i].position.x).abs() <= 0.5);
                    prop_assert!((a.position.y - raw[i].position.y).abs() <= 0.5);
                    for b in &peaks[i + 1..] {
                        prop_assert!(a.position.distance(b.position) >= 1.0);
                        prop_assert!(a.score >= b.score);
                    }
                }
                let fewer = nms_peaks(&map, 0, &NmsParams { threshold: hi, refine: true });
                prop_assert!(fewer.len() <= peaks.len());
            }
        }
    }
}
