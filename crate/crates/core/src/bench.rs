//! Parse-stage timing over synthetic scenes and a log-log scaling fit.

use std::fmt::Write as _;
use std::time::Duration;

use crate::assembly::{parse_timed, ParseParams, StageTimings};
use crate::error::{Error, Result};
use crate::groundtruth::{render_all, RenderParams};
use crate::synth::{generate_scene, SceneConfig};
use crate::topology::Topology;

/// Reference point for the 19-person parse time warning.
pub const PARSE_BUDGET_MS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub persons: Vec<usize>,
    /// Timed trials per person count; at least 5.
    pub trials: usize,
    /// Untimed runs before the trials.
    pub warmup: usize,
    /// Scene template; `persons` and `seed` are overridden per trial.
    pub scene: SceneConfig,
    pub render: RenderParams,
    pub parse: ParseParams,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let render = RenderParams::default();
        BenchConfig {
            persons: (2..=20).collect(),
            trials: 7,
            warmup: 1,
            scene: SceneConfig {
                width: 960,
                height: 540,
                scale_range: (15.0, 25.0),
                min_separation: 2.0 * render.sigma,
                ..Default::default()
            },
            render,
            parse: ParseParams::default(),
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 5 {
            return Err(Error::Param(format!("trials must be >= 5, got {}", self.trials)));
        }
        if self.persons.is_empty() {
            return Err(Error::Param("person sweep is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub num_persons: usize,
    pub detect_ms: f64,
    pub score_ms: f64,
    pub match_ms: f64,
    pub assemble_ms: f64,
    /// Median of score + match + assemble over trials.
    pub total_parse_ms: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    /// Slope of ln(total_parse_ms) against ln(num_persons).
    pub exponent: f64,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut out = format!(
            "{:>7} {:>10} {:>10} {:>10} {:>11} {:>14} {:>7} {:>7}\n",
            "persons", "detect_ms", "score_ms", "match_ms", "assemble_ms", "total_parse_ms", "trials", "cnn_ms"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:>7} {:>10.4} {:>10.4} {:>10.4} {:>11.4} {:>14.4} {:>7} {:>7}",
                r.num_persons, r.detect_ms, r.score_ms, r.match_ms, r.assemble_ms, r.total_parse_ms, r.trials, "n/a"
            );
        }
        let _ = writeln!(out, "exponent {:.4}", self.exponent);
        out.push_str("# cnn_ms: no network here, so end-to-end frame rates are not measured\n");
        out
    }

    pub fn row(&self, num_persons: usize) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.num_persons == num_persons)
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Least-squares slope of `ln y` against `ln x` over positive pairs.
pub fn fit_exponent(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Param("exponent fit needs two positive points".into()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Param("exponent fit needs two distinct person counts".into()));
    }
    Ok(sxy / sxx)
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Times each parse stage over fresh scenes for every person count. Rendering
/// is not timed.
pub fn run_bench(cfg: &BenchConfig, topo: &Topology) -> Result<BenchReport> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.persons.len());
    for &n in &cfg.persons {
        let mut samples: Vec<StageTimings> = Vec::with_capacity(cfg.trials);
        for t in 0..cfg.warmup + cfg.trials {
            let scene_cfg = SceneConfig {
                persons: (n, n),
                seed: cfg.seed ^ ((n as u64) << 32 | t as u64),
                ..cfg.scene.clone()
            };
            let scene = generate_scene(&scene_cfg, topo)?;
            let (maps, fields) = render_all(&scene, topo, &cfg.render)?;
            let (_, timings) = parse_timed(&maps, &fields, topo, &cfg.parse)?;
            if t >= cfg.warmup {
                samples.push(timings);
            }
        }
        let col = |f: &dyn Fn(&StageTimings) -> Duration| {
            let mut v: Vec<f64> = samples.iter().map(|s| ms(f(s))).collect();
            median(&mut v)
        };
        rows.push(BenchRow {
            num_persons: n,
            detect_ms: col(&|s| s.detect),
            score_ms: col(&|s| s.score),
            match_ms: col(&|s| s.matching),
            assemble_ms: col(&|s| s.assemble),
            total_parse_ms: col(&|s| s.parse()),
            trials: cfg.trials,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.num_persons as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.total_parse_ms).collect();
    let exponent = if rows.len() >= 2 { fit_exponent(&xs, &ys)? } else { 0.0 };
    let report = BenchReport { rows, exponent };
    if let Some(r) = report.row(19) {
        if r.total_parse_ms >= PARSE_BUDGET_MS {
            log::warn!(
                "19-person parse took {:.3} ms, above the {PARSE_BUDGET_MS} ms reference",
                r.total_parse_ms
            );
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::Preset;

    #[test]
    fn exponent_of_power_laws() {
        let xs: Vec<f64> = (2..=20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        assert!((fit_exponent(&xs, &ys).unwrap() - 2.0).abs() < 1e-12);
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x).collect();
        assert!((fit_exponent(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        assert!(fit_exponent(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn too_few_trials_rejected() {
        let cfg = BenchConfig {
            trials: 1,
            ..Default::default()
        };
        assert!(matches!(
            run_bench(&cfg, &Topology::preset(Preset::Mpii14)),
            Err(Error::Param(_))
        ));
    }

    #[test]
    fn small_sweep_runs() {
        let cfg = BenchConfig {
            persons: vec![1, 3],
            trials: 5,
            ..Default::default()
        };
        let r = run_bench(&cfg, &Topology::preset(Preset::Mpii14)).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.exponent.is_finite());
        assert!(r.rows.iter().all(|row| row.total_parse_ms >= 0.0 && row.trials == 5));
        assert!(r.to_table().contains("exponent"));
    }
}
