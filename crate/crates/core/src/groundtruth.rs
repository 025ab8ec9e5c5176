//! Ground-truth confidence maps and part affinity fields rendered from a
//! [`Scene`], annotation masks, and the masked L2 stage loss.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{LimbSegment, Point};
use crate::grid::{check_dims, Grid, MaskGrid, ScalarGrid, VectorGrid};
use crate::scene::Scene;
use crate::topology::Topology;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    /// Spread of each confidence peak, in pixels.
    pub sigma: f64,
    /// Half-width of a limb's affinity support, in pixels.
    pub sigma_l: f64,
    /// Gaussians are exactly zero beyond `truncation_radius * sigma`.
    pub truncation_radius: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            sigma: 7.0,
            sigma_l: 5.0,
            truncation_radius: 4.0,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Param(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.sigma_l > 0.0 && self.sigma_l.is_finite()) {
            return Err(Error::Param(format!("sigma_l must be > 0, got {}", self.sigma_l)));
        }
        if !(self.truncation_radius >= 3.0 && self.truncation_radius.is_finite()) {
            return Err(Error::Param(format!(
                "truncation_radius must be >= 3, got {}",
                self.truncation_radius
            )));
        }
        Ok(())
    }

    pub fn cutoff(&self) -> f64 {
        self.truncation_radius * self.sigma
    }
}

/// Inclusive pixel range covering `[lo, hi]`, clipped to `0..len`.
fn pixel_span(lo: f64, hi: f64, len: usize) -> Option<(usize, usize)> {
    let lo = lo.ceil().max(0.0);
    let hi = hi.floor().min(len as f64 - 1.0);
    (lo <= hi).then_some((lo as usize, hi as usize))
}

/// Max-combines a truncated Gaussian `peak * exp(-|p - center|^2 / sigma^2)`
/// into `grid`.
pub(crate) fn splat_gaussian(grid: &mut ScalarGrid, center: Point, peak: f64, sigma: f64, cutoff: f64) {
    let (w, h) = grid.dims();
    let (Some((x0, x1)), Some((y0, y1))) = (
        pixel_span(center.x - cutoff, center.x + cutoff, w),
        pixel_span(center.y - cutoff, center.y + cutoff, h),
    ) else {
        return;
    };
    let cutoff_sq = cutoff * cutoff;
    let inv_sigma_sq = 1.0 / (sigma * sigma);
    for y in y0..=y1 {
        let dy = y as f64 - center.y;
        for x in x0..=x1 {
            let dx = x as f64 - center.x;
            let d2 = dx * dx + dy * dy;
            if d2 <= cutoff_sq {
                let v = (peak * (-d2 * inv_sigma_sq).exp()) as f32;
                let i = grid.index(x, y);
                let cell = &mut grid.values_mut()[i];
                if v > *cell {
                    *cell = v;
                }
            }
        }
    }
}

/// Confidence map for part `part`: the per-pixel maximum over persons of
/// `exp(-|p - x_{j,k}|^2 / sigma^2)`.
pub fn render_confidence(scene: &Scene, part: usize, params: &RenderParams) -> ScalarGrid {
    let mut grid = ScalarGrid::new(scene.width, scene.height);
    for person in &scene.persons {
        if let Some(kp) = person[part] {
            splat_gaussian(&mut grid, kp, 1.0, params.sigma, params.cutoff());
        }
    }
    grid
}

/// Affinity field for limb `limb` together with the per-pixel count of
/// persons whose limb support covers the pixel.
pub fn render_paf_with_counts(
    scene: &Scene,
    topo: &Topology,
    limb: usize,
    params: &RenderParams,
) -> (VectorGrid, Grid<u32>) {
    let (w, h) = (scene.width, scene.height);
    let l = topo.limb(limb);
    let mut sums: Grid<[f64; 2]> = Grid::new(w, h);
    let mut counts: Grid<u32> = Grid::new(w, h);

    for (k, person) in scene.persons.iter().enumerate() {
        let (Some(a), Some(b)) = (person[l.from], person[l.to]) else {
            continue;
        };
        let seg = match LimbSegment::new(a, b) {
            Ok(seg) => seg,
            Err(_) => {
                log::warn!("person {k}: limb {limb} endpoints coincide, skipping its affinity");
                continue;
            }
        };
        let v = [seg.direction.x as f32 as f64, seg.direction.y as f32 as f64];
        let pad = params.sigma_l;
        let (Some((x0, x1)), Some((y0, y1))) = (
            pixel_span(a.x.min(b.x) - pad, a.x.max(b.x) + pad, w),
            pixel_span(a.y.min(b.y) - pad, a.y.max(b.y) + pad, h),
        ) else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                if seg.contains(Point::new(x as f64, y as f64), params.sigma_l) {
                    let i = sums.index(x, y);
                    let s = &mut sums.values_mut()[i];
                    s[0] += v[0];
                    s[1] += v[1];
                    counts.values_mut()[i] += 1;
                }
            }
        }
    }

    let values = sums
        .values()
        .iter()
        .zip(counts.values())
        .map(|(s, &n)| {
            if n == 0 {
                [0.0, 0.0]
            } else {
                let n = n as f64;
                [(s[0] / n) as f32, (s[1] / n) as f32]
            }
        })
        .collect();
    (
        VectorGrid::from_vec(w, h, values).expect("dimensions preserved"),
        counts,
    )
}

/// Affinity field for limb `limb`: on each person's limb support the unit
/// vector from the limb's first to second part, averaged where supports of
/// several persons overlap, zero elsewhere.
pub fn render_paf(scene: &Scene, topo: &Topology, limb: usize, params: &RenderParams) -> VectorGrid {
    render_paf_with_counts(scene, topo, limb, params).0
}

/// All `J` confidence maps and `C` affinity fields of `scene`.
pub fn render_all(
    scene: &Scene,
    topo: &Topology,
    params: &RenderParams,
) -> Result<(Vec<ScalarGrid>, Vec<VectorGrid>)> {
    params.validate()?;
    scene.validate()?;
    scene.check_topology(topo)?;
    let maps = (0..topo.num_parts())
        .into_par_iter()
        .map(|j| render_confidence(scene, j, params))
        .collect();
    let fields = (0..topo.num_limbs())
        .into_par_iter()
        .map(|c| render_paf(scene, topo, c, params))
        .collect();
    Ok((maps, fields))
}

/// Per-limb "midpoint" confidence channels for the midpoint association
/// baselines: a Gaussian of spread `sigma` at each fraction `u` along every
/// annotated limb (`[0.5]` for one midpoint, `[1/3, 2/3]` for two).
pub fn render_midpoints(
    scene: &Scene,
    topo: &Topology,
    params: &RenderParams,
    fractions: &[f64],
) -> Vec<ScalarGrid> {
    (0..topo.num_limbs())
        .into_par_iter()
        .map(|c| {
            let l = topo.limb(c);
            let mut grid = ScalarGrid::new(scene.width, scene.height);
            for person in &scene.persons {
                if let (Some(a), Some(b)) = (person[l.from], person[l.to]) {
                    for &u in fractions {
                        splat_gaussian(&mut grid, a.lerp(b, u), 1.0, params.sigma, params.cutoff());
                    }
                }
            }
            grid
        })
        .collect()
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Rect {
    pub const fn new(x0: usize, y0: usize, x1: usize, y1: usize) -> Self {
        Rect { x0, y0, x1, y1 }
    }
}

/// Mask that is 1 everywhere except inside the unlabeled regions.
pub fn build_mask(scene: &Scene, unlabeled: &[Rect]) -> Result<MaskGrid> {
    let mut mask = MaskGrid::filled(scene.width, scene.height, true);
    for r in unlabeled {
        if r.x0 > r.x1 || r.y0 > r.y1 || r.x1 > scene.width || r.y1 > scene.height {
            return Err(Error::Param(format!(
                "region [{}, {})x[{}, {}) is outside the {}x{} grid",
                r.x0, r.x1, r.y0, r.y1, scene.width, scene.height
            )));
        }
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                mask.set(x, y, false);
            }
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub f_s: f64,
    pub f_l: f64,
    pub f: f64,
}

/// Masked sum of squared residuals over all map and field channels of one stage.
pub fn stage_loss(
    pred_maps: &[ScalarGrid],
    pred_fields: &[VectorGrid],
    gt_maps: &[ScalarGrid],
    gt_fields: &[VectorGrid],
    mask: &MaskGrid,
) -> Result<LossReport> {
    if pred_maps.len() != gt_maps.len() || pred_fields.len() != gt_fields.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} maps and {} fields", gt_maps.len(), gt_fields.len()),
            found: format!("{} maps and {} fields", pred_maps.len(), pred_fields.len()),
        });
    }
    let dims = mask.dims();
    check_dims(pred_maps, dims, "predicted map")?;
    check_dims(gt_maps, dims, "ground-truth map")?;
    check_dims(pred_fields, dims, "predicted field")?;
    check_dims(gt_fields, dims, "ground-truth field")?;

    let labeled = mask.values();
    let f_s: f64 = pred_maps
        .iter()
        .zip(gt_maps)
        .map(|(p, g)| {
            p.values()
                .iter()
                .zip(g.values())
                .zip(labeled)
                .filter(|(_, &m)| m)
                .map(|((&a, &b), _)| {
                    let d = a as f64 - b as f64;
                    d * d
                })
                .sum::<f64>()
        })
        .sum();
    let f_l: f64 = pred_fields
        .iter()
        .zip(gt_fields)
        .map(|(p, g)| {
            p.values()
                .iter()
                .zip(g.values())
                .zip(labeled)
                .filter(|(_, &m)| m)
                .map(|((a, b), _)| {
                    let dx = a[0] as f64 - b[0] as f64;
                    let dy = a[1] as f64 - b[1] as f64;
                    dx * dx + dy * dy
                })
                .sum::<f64>()
        })
        .sum();
    Ok(LossReport {
        f_s,
        f_l,
        f: f_s + f_l,
    })
}
