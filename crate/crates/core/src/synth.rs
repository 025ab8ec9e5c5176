//! Seeded synthetic scenes drawn from an articulated template, and a noise
//! model that corrupts rendered maps and fields.

use std::collections::{HashMap, VecDeque};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::geometry::{segment_distance, segments_intersect, Point};
use crate::groundtruth::splat_gaussian;
use crate::grid::{ScalarGrid, VectorGrid};
use crate::scene::Scene;
use crate::topology::Topology;

/// Rejection-sampling budget per person.
pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

const TEMPLATE: &str = include_str!("../data/template.txt");

/// Rest pose in torso units, neck at the origin, y down.
#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    points: HashMap<String, Point>,
}

impl Default for Template {
    fn default() -> Self {
        TEMPLATE.parse().expect("shipped template is valid")
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut points = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let [name, x, y] = f[..] else {
                return Err(Error::syntax(i + 1, "expected `<name> <x> <y>`"));
            };
            let coord = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::syntax(i + 1, format!("bad coordinate `{s}`")))
            };
            if points.insert(name.to_string(), Point::new(coord(x)?, coord(y)?)).is_some() {
                return Err(Error::syntax(i + 1, format!("duplicate part `{name}`")));
            }
        }
        Ok(Template { points })
    }
}

impl Template {
    pub fn get(&self, name: &str) -> Option<Point> {
        self.points.get(name).copied()
    }

    /// Rest positions for every part of `topo`.
    pub fn rest_pose(&self, topo: &Topology) -> Result<Vec<Point>> {
        topo.part_names()
            .iter()
            .map(|n| {
                self.get(n)
                    .ok_or_else(|| Error::Param(format!("part `{n}` has no template position")))
            })
            .collect()
    }
}

/// Parameters of [`generate_scene`].
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    /// Inclusive range the person count is drawn from.
    pub persons: (usize, usize),
    /// Torso length range in pixels.
    pub scale_range: (f64, f64),
    /// Whole-body rotation range in radians.
    pub rotation_range: (f64, f64),
    /// Minimum distance between keypoints of different persons.
    pub min_separation: f64,
    /// Minimum distance between limb segments of different persons.
    pub limb_clearance: f64,
    pub occlusion_prob: f64,
    /// Per-limb angular jitter bound in radians, applied down the tree.
    pub limb_jitter: f64,
    /// Per-limb relative length jitter bound.
    pub length_jitter: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            width: 640,
            height: 480,
            persons: (1, 1),
            scale_range: (40.0, 60.0),
            rotation_range: (-0.3, 0.3),
            min_separation: 42.0,
            limb_clearance: 0.0,
            occlusion_prob: 0.0,
            limb_jitter: 0.3,
            length_jitter: 0.1,
            seed: 0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Param(format!("{name} range [{lo}, {hi}] is empty")));
    }
    Ok(())
}

impl SceneConfig {
    pub fn with_persons(mut self, n: usize) -> Self {
        self.persons = (n, n);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Param("canvas dimensions must be positive".into()));
        }
        if self.persons.0 > self.persons.1 {
            return Err(Error::Param(format!(
                "person range [{}, {}] is empty",
                self.persons.0, self.persons.1
            )));
        }
        check_range("scale", self.scale_range)?;
        check_range("rotation", self.rotation_range)?;
        if self.scale_range.0 <= 0.0 {
            return Err(Error::Param("scale must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) {
            return Err(Error::Param(format!(
                "occlusion_prob {} outside [0, 1]",
                self.occlusion_prob
            )));
        }
        for (name, v) in [
            ("min_separation", self.min_separation),
            ("limb_clearance", self.limb_clearance),
            ("limb_jitter", self.limb_jitter),
            ("length_jitter", self.length_jitter),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Param(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.length_jitter >= 1.0 {
            return Err(Error::Param("length_jitter must be < 1".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Breadth-first parent order over the topology tree rooted at `root`.
fn tree_order(topo: &Topology, root: usize) -> Vec<(usize, Option<usize>)> {
    let adj = topo.neighbors();
    let mut seen = vec![false; topo.num_parts()];
    let mut order = Vec::with_capacity(topo.num_parts());
    let mut queue = VecDeque::from([(root, None)]);
    seen[root] = true;
    while let Some((u, parent)) = queue.pop_front() {
        order.push((u, parent));
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back((v, Some(u)));
            }
        }
    }
    order
}

/// Articulated pose generator shared by the scene generators.
struct Poser {
    rest: Vec<Point>,
    order: Vec<(usize, Option<usize>)>,
}

impl Poser {
    fn new(topo: &Topology, template: &Template) -> Result<Self> {
        if !topo.is_tree() {
            return Err(Error::Topology("scene generation needs a tree topology".into()));
        }
        let rest = template.rest_pose(topo)?;
        let root = topo
            .part_index("neck")
            .unwrap_or_else(|| (0..topo.num_parts()).max_by_key(|&j| topo.neighbors()[j].len()).unwrap_or(0));
        Ok(Poser {
            rest,
            order: tree_order(topo, root),
        })
    }

    /// Pose in torso units relative to the root, with every limb bent by up
    /// to `jitter` radians relative to its parent and stretched by up to
    /// `length_jitter`. `bend` overrides the jitter of chosen parts.
    fn pose(
        &self,
        rng: &mut ChaCha8Rng,
        jitter: f64,
        length_jitter: f64,
        bend: &dyn Fn(usize) -> Option<f64>,
    ) -> Vec<Point> {
        let n = self.rest.len();
        let mut pos = vec![Point::ZERO; n];
        let mut angle = vec![0.0; n];
        for &(u, parent) in &self.order {
            let Some(p) = parent else {
                continue;
            };
            let delta = match bend(u) {
                Some(a) => a,
                None if jitter > 0.0 => rng.random_range(-jitter..=jitter),
                None => 0.0,
            };
            let stretch = if length_jitter > 0.0 {
                1.0 + rng.random_range(-length_jitter..=length_jitter)
            } else {
                1.0
            };
            angle[u] = angle[p] + delta;
            pos[u] = pos[p] + (self.rest[u] - self.rest[p]).rotate(angle[u]) * stretch;
        }
        pos
    }
}

/// Translation placing `pts` uniformly inside the canvas, or `None` if they
/// cannot fit.
fn place(rng: &mut ChaCha8Rng, pts: &[Point], width: usize, height: usize) -> Option<Vec<Point>> {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in pts {
        x0 = x0.min(p.x);
        y0 = y0.min(p.y);
        x1 = x1.max(p.x);
        y1 = y1.max(p.y);
    }
    // Keep one pixel of margin so keypoints are strictly inside.
    let (lo_x, hi_x) = (1.0 - x0, width as f64 - 1.0 - x1);
    let (lo_y, hi_y) = (1.0 - y0, height as f64 - 1.0 - y1);
    if lo_x > hi_x || lo_y > hi_y {
        return None;
    }
    let t = Point::new(uniform(rng, (lo_x, hi_x)), uniform(rng, (lo_y, hi_y)));
    Some(pts.iter().map(|&p| p + t).collect())
}

fn min_keypoint_distance(a: &[Point], b: &[Point]) -> f64 {
    a.iter()
        .flat_map(|p| b.iter().map(move |q| p.distance(*q)))
        .fold(f64::INFINITY, f64::min)
}

fn min_limb_distance(topo: &Topology, a: &[Point], b: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for la in topo.limbs() {
        for lb in topo.limbs() {
            best = best.min(segment_distance(a[la.from], a[la.to], b[lb.from], b[lb.to]));
        }
    }
    best
}

fn occlude(rng: &mut ChaCha8Rng, pts: Vec<Point>, prob: f64) -> Vec<Option<Point>> {
    pts.into_iter()
        .map(|p| (prob == 0.0 || !rng.random_bool(prob)).then_some(p))
        .collect()
}

/// A random multi-person scene, deterministic in `cfg.seed`.
pub fn generate_scene(cfg: &SceneConfig, topo: &Topology) -> Result<Scene> {
    generate_scene_with(cfg, topo, &Template::default())
}

pub fn generate_scene_with(cfg: &SceneConfig, topo: &Topology, template: &Template) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let count = rng.random_range(cfg.persons.0..=cfg.persons.1);
    if count == 0 {
        return Scene::new(cfg.width, cfg.height, topo.num_parts(), Vec::new());
    }
    let poser = Poser::new(topo, template)?;
    let mut placed: Vec<Vec<Point>> = Vec::with_capacity(count);
    for k in 0..count {
        let mut failure = "canvas bounds";
        let mut accepted = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let pose = poser.pose(&mut rng, cfg.limb_jitter, cfg.length_jitter, &|_| None);
            let scale = uniform(&mut rng, cfg.scale_range);
            let rot = uniform(&mut rng, cfg.rotation_range);
            let pts: Vec<Point> = pose.iter().map(|p| p.rotate(rot) * scale).collect();
            let Some(pts) = place(&mut rng, &pts, cfg.width, cfg.height) else {
                failure = "canvas bounds";
                continue;
            };
            if placed.iter().any(|o| min_keypoint_distance(o, &pts) < cfg.min_separation) {
                failure = "min_separation";
                continue;
            }
            if cfg.limb_clearance > 0.0
                && placed.iter().any(|o| min_limb_distance(topo, o, &pts) < cfg.limb_clearance)
            {
                failure = "limb_clearance";
                continue;
            }
            accepted = Some(pts);
            break;
        }
        match accepted {
            Some(pts) => placed.push(pts),
            None => {
                return Err(Error::Placement {
                    person: k,
                    attempts: MAX_PLACEMENT_ATTEMPTS,
                    constraint: failure,
                })
            }
        }
    }
    let persons = placed
        .into_iter()
        .map(|pts| occlude(&mut rng, pts, cfg.occlusion_prob))
        .collect();
    Scene::new(cfg.width, cfg.height, topo.num_parts(), persons)
}

/// Parameters of [`generate_crossing_pair`]: two overlapping persons whose
/// arms reach across each other.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossingConfig {
    pub width: usize,
    pub height: usize,
    pub scale_range: (f64, f64),
    /// Horizontal offset between the two persons, in torso lengths.
    pub offset_range: (f64, f64),
    /// Bend bound for shoulder-to-elbow and elbow-to-wrist limbs, radians.
    pub arm_jitter: f64,
    pub limb_jitter: f64,
    /// Minimum distance between same-part keypoints of the two persons.
    pub min_part_separation: f64,
    pub seed: u64,
}

impl Default for CrossingConfig {
    fn default() -> Self {
        CrossingConfig {
            width: 368,
            height: 368,
            scale_range: (70.0, 90.0),
            offset_range: (0.5, 0.9),
            arm_jitter: 1.0,
            limb_jitter: 0.15,
            min_part_separation: 14.0,
            seed: 0,
        }
    }
}

/// Two persons side by side with at least one pair of same-type limbs
/// crossing. Deterministic in `cfg.seed`.
pub fn generate_crossing_pair(cfg: &CrossingConfig, topo: &Topology) -> Result<Scene> {
    check_range("scale", cfg.scale_range)?;
    check_range("offset", cfg.offset_range)?;
    let poser = Poser::new(topo, &Template::default())?;
    let arm: Vec<bool> = topo
        .part_names()
        .iter()
        .map(|n| n.ends_with("elbow") || n.ends_with("wrist"))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut failure = "canvas bounds";
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let scale = uniform(&mut rng, cfg.scale_range);
        let offset = uniform(&mut rng, cfg.offset_range) * scale;
        let mut poses = Vec::with_capacity(2);
        for side in [-0.5, 0.5] {
            let bends: Vec<f64> = (0..topo.num_parts())
                .map(|_| rng.random_range(-cfg.arm_jitter..=cfg.arm_jitter))
                .collect();
            let pose = poser.pose(&mut rng, cfg.limb_jitter, 0.05, &|u| arm[u].then(|| bends[u]));
            poses.push(
                pose.iter()
                    .map(|p| *p * scale + Point::new(side * offset, 0.0))
                    .collect::<Vec<_>>(),
            );
        }
        let joint: Vec<Point> = poses.concat();
        let Some(joint) = place(&mut rng, &joint, cfg.width, cfg.height) else {
            failure = "canvas bounds";
            continue;
        };
        let (a, b) = joint.split_at(topo.num_parts());
        if a.iter().zip(b).any(|(p, q)| p.distance(*q) < cfg.min_part_separation) {
            failure = "min_part_separation";
            continue;
        }
        let crossing = topo
            .limbs()
            .iter()
            .any(|l| segments_intersect(a[l.from], a[l.to], b[l.from], b[l.to]));
        if !crossing {
            failure = "crossing limbs";
            continue;
        }
        let persons = vec![
            a.iter().map(|&p| Some(p)).collect(),
            b.iter().map(|&p| Some(p)).collect(),
        ];
        return Scene::new(cfg.width, cfg.height, topo.num_parts(), persons);
    }
    Err(Error::Placement {
        person: 1,
        attempts: MAX_PLACEMENT_ATTEMPTS,
        constraint: failure,
    })
}

/// Parameters of [`perturb`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub map_noise_std: f64,
    pub field_noise_std: f64,
    /// Expected spurious peaks per map channel (Poisson).
    pub false_peak_rate: f64,
    /// Spread of spurious peaks in pixels.
    pub peak_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            map_noise_std: 0.0,
            field_noise_std: 0.0,
            false_peak_rate: 0.0,
            peak_sigma: 7.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("map_noise_std", self.map_noise_std),
            ("field_noise_std", self.field_noise_std),
            ("false_peak_rate", self.false_peak_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Param(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.peak_sigma > 0.0 && self.peak_sigma.is_finite()) {
            return Err(Error::Param(format!("peak_sigma must be > 0, got {}", self.peak_sigma)));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.map_noise_std == 0.0 && self.field_noise_std == 0.0 && self.false_peak_rate == 0.0
    }
}

/// A spurious peak added by [`perturb`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectedPeak {
    pub channel: usize,
    pub position: Point,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PerturbReport {
    pub injected: Vec<InjectedPeak>,
}

fn add_noise(values: &mut [f32], std: f64, rng: &mut ChaCha8Rng) {
    if std == 0.0 {
        return;
    }
    let normal = Normal::new(0.0, std).expect("std validated");
    for v in values {
        *v = (*v as f64 + normal.sample(rng)) as f32;
    }
}

fn perturb_channels(maps: &mut [ScalarGrid], cfg: &NoiseConfig, rng: &mut ChaCha8Rng) -> Vec<InjectedPeak> {
    let mut injected = Vec::new();
    let poisson = (cfg.false_peak_rate > 0.0).then(|| Poisson::new(cfg.false_peak_rate).expect("rate validated"));
    for (j, map) in maps.iter_mut().enumerate() {
        add_noise(map.values_mut(), cfg.map_noise_std, rng);
        if let Some(poisson) = &poisson {
            let count = poisson.sample(rng) as usize;
            for _ in 0..count {
                let position = Point::new(
                    rng.random_range(0.0..map.width() as f64),
                    rng.random_range(0.0..map.height() as f64),
                );
                let score = rng.random_range(0.3..=0.7);
                splat_gaussian(map, position, score, cfg.peak_sigma, 4.0 * cfg.peak_sigma);
                injected.push(InjectedPeak {
                    channel: j,
                    position,
                    score,
                });
            }
        }
        for v in map.values_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    injected
}

/// Adds seeded Gaussian noise to every map and field value, injects a
/// Poisson number of spurious peaks into each map channel and clamps maps to
/// `[0, 1]`. The inputs are left untouched.
pub fn perturb(
    maps: &[ScalarGrid],
    fields: &[VectorGrid],
    cfg: &NoiseConfig,
) -> Result<(Vec<ScalarGrid>, Vec<VectorGrid>, PerturbReport)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut maps = maps.to_vec();
    let mut fields = fields.to_vec();
    let injected = perturb_channels(&mut maps, cfg, &mut rng);
    if cfg.field_noise_std > 0.0 {
        let normal = Normal::new(0.0, cfg.field_noise_std).expect("std validated");
        for field in &mut fields {
            for v in field.values_mut() {
                v[0] = (v[0] as f64 + normal.sample(&mut rng)) as f32;
                v[1] = (v[1] as f64 + normal.sample(&mut rng)) as f32;
            }
        }
    }
    Ok((maps, fields, PerturbReport { injected }))
}

/// Scalar association channels such as midpoint maps, perturbed like the
/// affinity fields: Gaussian noise of `cfg.field_noise_std` per value, no
/// spurious peaks and no clamping.
pub fn perturb_association_maps(maps: &[ScalarGrid], cfg: &NoiseConfig) -> Result<Vec<ScalarGrid>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut maps = maps.to_vec();
    for map in &mut maps {
        add_noise(map.values_mut(), cfg.field_noise_std, &mut rng);
    }
    Ok(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundtruth::{render_all, RenderParams};
    use crate::topology::Preset;

    fn mpii() -> Topology {
        Topology::preset(Preset::Mpii14)
    }

    #[test]
    fn zero_persons_is_empty() {
        let s = generate_scene(&SceneConfig::default().with_persons(0), &mpii()).unwrap();
        assert_eq!(s.num_persons(), 0);
    }

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig {
            persons: (1, 6),
            seed: 11,
            occlusion_prob: 0.2,
            ..Default::default()
        };
        let a = generate_scene(&cfg, &mpii()).unwrap();
        let b = generate_scene(&cfg, &mpii()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneConfig { seed: 12, ..cfg }, &mpii()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn five_persons_respect_separation() {
        let sep = 6.0 * RenderParams::default().sigma;
        let cfg = SceneConfig {
            min_separation: sep,
            seed: 3,
            ..SceneConfig::default().with_persons(5)
        };
        let s = generate_scene(&cfg, &mpii()).unwrap();
        assert_eq!(s.num_persons(), 5);
        for (i, a) in s.persons.iter().enumerate() {
            for b in &s.persons[i + 1..] {
                for p in a.iter().flatten() {
                    for q in b.iter().flatten() {
                        assert!(p.distance(*q) >= sep);
                    }
                }
            }
        }
    }

    #[test]
    fn impossible_placement_names_constraint() {
        let cfg = SceneConfig {
            width: 50,
            height: 50,
            ..SceneConfig::default().with_persons(1)
        };
        match generate_scene(&cfg, &mpii()) {
            Err(Error::Placement { constraint, .. }) => assert_eq!(constraint, "canvas bounds"),
            other => panic!("unexpected {other:?}"),
        }
        let crowded = SceneConfig {
            min_separation: 400.0,
            ..SceneConfig::default().with_persons(3)
        };
        assert!(matches!(
            generate_scene(&crowded, &mpii()),
            Err(Error::Placement { constraint: "min_separation", .. })
        ));
    }

    #[test]
    fn crossing_pair_crosses() {
        let topo = mpii();
        for seed in 0..20 {
            let s = generate_crossing_pair(&CrossingConfig { seed, ..Default::default() }, &topo).unwrap();
            let (a, b) = (&s.persons[0], &s.persons[1]);
            assert!(topo.limbs().iter().any(|l| segments_intersect(
                a[l.from].unwrap(),
                a[l.to].unwrap(),
                b[l.from].unwrap(),
                b[l.to].unwrap()
            )));
        }
    }

    #[test]
    fn perturb_identity_and_clamp() {
        let topo = mpii();
        let s = generate_scene(&SceneConfig::default().with_persons(2), &topo).unwrap();
        let (maps, fields) = render_all(&s, &topo, &RenderParams::default()).unwrap();
        let (m2, f2, rep) = perturb(&maps, &fields, &NoiseConfig::default()).unwrap();
        assert_eq!(maps, m2);
        assert_eq!(fields, f2);
        assert!(rep.injected.is_empty());

        let cfg = NoiseConfig {
            map_noise_std: 0.01,
            ..Default::default()
        };
        let (m3, _, _) = perturb(&maps, &fields, &cfg).unwrap();
        for (a, b) in maps.iter().zip(&m3) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((0.0..=1.0).contains(y));
                assert!((x - y).abs() <= 0.1);
            }
        }
    }

    #[test]
    fn false_peaks_are_reported() {
        let maps = vec![ScalarGrid::new(200, 150); 14];
        let cfg = NoiseConfig {
            false_peak_rate: 2.0,
            seed: 5,
            ..Default::default()
        };
        let (out, _, rep) = perturb(&maps, &[], &cfg).unwrap();
        let (again, _, rep2) = perturb(&maps, &[], &cfg).unwrap();
        assert_eq!(rep, rep2);
        assert_eq!(out, again);
        for p in &rep.injected {
            assert!((0.3..=0.7).contains(&p.score));
            let peak = out[p.channel].max_value() as f64;
            assert!(peak >= p.score - 0.05);
        }
        assert!(!rep.injected.is_empty());
    }
}
