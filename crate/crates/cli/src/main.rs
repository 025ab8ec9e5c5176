use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pafparse::bench::{run_bench, BenchConfig};
use pafparse::compare::{compare, CompareConfig, Strategy};
use pafparse::eval::{eval_oracle_connection, eval_oracle_detection};
use pafparse::io::{read_fields, read_parse_result, read_scene, write_fields, write_parse_result, write_scene};
use pafparse::*;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] pafparse::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Part-affinity-field parsing: synthetic data, parsing, evaluation and
/// benchmarks.
#[derive(Debug, Parser)]
#[command(name = "pafparse", version)]
struct Cli {
    #[command(flatten)]
    global: Global,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Skeleton preset (mpii14, coco18) or topology file.
    #[arg(long, global = true, default_value = "mpii14")]
    topology: String,

    /// Confidence peak spread in pixels.
    #[arg(long, global = true, default_value_t = 7.0)]
    sigma: f64,

    /// Limb half-width in pixels.
    #[arg(long = "sigma-l", global = true, default_value_t = 5.0)]
    sigma_l: f64,

    #[arg(long = "nms-threshold", global = true, default_value_t = 0.1)]
    nms_threshold: f64,

    /// Line-integral samples per candidate limb.
    #[arg(long, global = true, default_value_t = 10)]
    samples: usize,

    #[arg(long, global = true, value_enum, default_value_t = SolverArg::Hungarian)]
    solver: SolverArg,

    /// Persons with fewer parts are dropped.
    #[arg(long = "min-parts", global = true, default_value_t = 3)]
    min_parts: usize,

    /// Persons with a lower score per part are dropped.
    #[arg(long = "min-score", global = true, default_value_t = 0.2)]
    min_score: f64,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SolverArg {
    Hungarian,
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalMode {
    /// Score parse results read from the prediction directory.
    Full,
    /// Parse ground-truth keypoints with the predicted fields.
    GtDetect,
    /// Group predicted detections by ground-truth ownership.
    GtConnect,
}

#[derive(Debug, Args)]
struct NoiseArgs {
    /// Gaussian noise std on part maps.
    #[arg(long = "noise-map", default_value_t = 0.0)]
    noise_map: f64,

    /// Gaussian noise std on affinity fields.
    #[arg(long = "noise-field", default_value_t = 0.0)]
    noise_field: f64,

    /// Expected spurious peaks per part map.
    #[arg(long = "false-peaks", default_value_t = 0.0)]
    false_peaks: f64,
}

impl NoiseArgs {
    fn config(&self, seed: u64) -> Option<NoiseConfig> {
        let cfg = NoiseConfig {
            map_noise_std: self.noise_map,
            field_noise_std: self.noise_field,
            false_peak_rate: self.false_peaks,
            seed,
            ..Default::default()
        };
        (!cfg.is_identity()).then_some(cfg)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate scenes with rendered ground truth into the --out directory.
    Gen {
        #[arg(long, default_value_t = 2)]
        persons: usize,
        /// Number of scenes.
        #[arg(long, default_value_t = 1)]
        scenes: usize,
        #[arg(long, default_value_t = 640)]
        width: usize,
        #[arg(long, default_value_t = 480)]
        height: usize,
        /// Probability that a keypoint is unlabeled.
        #[arg(long, default_value_t = 0.0)]
        occlusion: f64,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Parse a PAFT file, or every PAFT file in a directory.
    Parse { input: PathBuf },
    /// Run every grouping strategy on the scenes of a directory.
    Compare {
        dataset: PathBuf,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Time the parse stages over a sweep of person counts.
    Bench {
        /// Person counts: `2..20` (inclusive) or a comma list.
        #[arg(long, default_value = "2..20")]
        persons: String,
        #[arg(long, default_value_t = 7)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        /// Score and match limbs on the thread pool.
        #[arg(long)]
        parallel: bool,
    },
    /// Evaluate predictions against ground-truth scenes, paired by file stem.
    Eval {
        pred: PathBuf,
        gt: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalMode::Full)]
        mode: EvalMode,
        /// Hit radius as a fraction of the reference length.
        #[arg(long, default_value_t = 0.5)]
        pckh: f64,
        /// Also print `sweep <fraction> <mAP>` lines for fractions 0.05..=1.0.
        #[arg(long)]
        sweep: bool,
    },
}

impl Global {
    fn topology(&self) -> Result<Topology> {
        Ok(Topology::load(&self.topology)?)
    }

    fn render(&self) -> RenderParams {
        RenderParams {
            sigma: self.sigma,
            sigma_l: self.sigma_l,
            ..Default::default()
        }
    }

    fn parse_params(&self) -> ParseParams {
        ParseParams {
            nms: NmsParams {
                threshold: self.nms_threshold,
                ..Default::default()
            },
            integral: IntegralParams {
                num_samples: self.samples,
                ..Default::default()
            },
            solver: match self.solver {
                SolverArg::Hungarian => Solver::Hungarian,
                SolverArg::Greedy => Solver::Greedy,
            },
            assembly: AssemblyParams {
                min_parts: self.min_parts,
                min_score: self.min_score,
            },
            parallel: true,
        }
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out <dir> is required".into()))
    }

    /// Writes `text` to --out when given, stdout otherwise.
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(path) => fs::write(path, text).map_err(io_err(path)),
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(text.as_bytes()).map_err(io_err(Path::new("<stdout>")))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::FAILURE;
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("PAFPARSE_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("PAFPARSE_THREADS must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Gen {
            persons,
            scenes,
            width,
            height,
            occlusion,
            noise,
        } => cmd_gen(g, *persons, *scenes, (*width, *height), *occlusion, noise),
        Command::Parse { input } => cmd_parse(g, input),
        Command::Compare { dataset, noise } => cmd_compare(g, dataset, noise),
        Command::Bench {
            persons,
            trials,
            warmup,
            parallel,
        } => cmd_bench(g, persons, *trials, *warmup, *parallel),
        Command::Eval {
            pred,
            gt,
            mode,
            pckh,
            sweep,
        } => cmd_eval(g, pred, gt, *mode, *pckh, *sweep),
    }
}

fn cmd_gen(
    g: &Global,
    persons: usize,
    scenes: usize,
    (width, height): (usize, usize),
    occlusion: f64,
    noise: &NoiseArgs,
) -> Result<()> {
    let topo = g.topology()?;
    let dir = g.out_dir()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let perturbed_dir = dir.join("perturbed");
    let mut manifest = String::new();
    for i in 0..scenes {
        let seed = g.seed.wrapping_add(i as u64);
        let cfg = SceneConfig {
            width,
            height,
            persons: (persons, persons),
            occlusion_prob: occlusion,
            seed,
            ..Default::default()
        };
        let scene = generate_scene(&cfg, &topo)?;
        let (maps, fields) = render_all(&scene, &topo, &g.render())?;
        let stem = format!("scene_{i:04}");
        let scene_path = dir.join(format!("{stem}.scene"));
        let clean_path = dir.join(format!("{stem}.paft"));
        write_scene(&scene_path, &scene)?;
        write_fields(&clean_path, &maps, &fields)?;
        manifest.push_str(&format!("scene {}\nclean {}\n", scene_path.display(), clean_path.display()));
        if let Some(ncfg) = noise.config(seed) {
            fs::create_dir_all(&perturbed_dir).map_err(io_err(&perturbed_dir))?;
            let (pm, pf, report) = perturb(&maps, &fields, &ncfg)?;
            let path = perturbed_dir.join(format!("{stem}.paft"));
            write_fields(&path, &pm, &pf)?;
            log::info!("{stem}: injected {} spurious peaks", report.injected.len());
            manifest.push_str(&format!("perturbed {}\n", path.display()));
        }
    }
    print!("{manifest}");
    Ok(())
}

/// Files in `dir` with extension `ext`, sorted by name.
fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn stem(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

fn cmd_parse(g: &Global, input: &Path) -> Result<()> {
    let topo = g.topology()?;
    let params = g.parse_params();
    let run_one = |path: &Path| -> Result<ParseResult> {
        let (maps, fields) = read_fields(path)?;
        let result = parse(&maps, &fields, &topo, &params)?;
        log::info!("{}: {} persons", path.display(), result.persons.len());
        Ok(result)
    };
    if input.is_dir() {
        let dir = g.out_dir()?;
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        for path in files_with_ext(input, "paft")? {
            let out = dir.join(format!("{}.parse", stem(&path)));
            write_parse_result(&out, &run_one(&path)?)?;
            println!("{}", out.display());
        }
        Ok(())
    } else {
        let result = run_one(input)?;
        match &g.out {
            Some(out) => Ok(write_parse_result(out, &result)?),
            None => g.emit(&pafparse::io::parse_result_to_string(&result)),
        }
    }
}

fn read_scenes(dir: &Path, topo: &Topology) -> Result<Vec<(String, Scene)>> {
    files_with_ext(dir, "scene")?
        .into_iter()
        .map(|p| Ok((stem(&p), read_scene(&p, topo.num_parts())?)))
        .collect()
}

fn cmd_compare(g: &Global, dataset: &Path, noise: &NoiseArgs) -> Result<()> {
    let topo = g.topology()?;
    let scenes: Vec<Scene> = read_scenes(dataset, &topo)?.into_iter().map(|(_, s)| s).collect();
    if scenes.is_empty() {
        return Err(CliError::Usage(format!("no .scene files in {}", dataset.display())));
    }
    let cfg = CompareConfig {
        render: g.render(),
        parse: ParseParams {
            parallel: false,
            ..g.parse_params()
        },
        eval: EvalConfig::default(),
        noise: noise.config(g.seed),
    };
    let report = compare(&scenes, &topo, &Strategy::ALL, &cfg)?;
    g.emit(&report.to_table())
}

fn parse_sweep(text: &str) -> Result<Vec<usize>> {
    let bad = || CliError::Usage(format!("bad person sweep `{text}` (expected `a..b` or `a,b,c`)"));
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        Ok((a..=b).collect())
    } else {
        text.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
    }
}

fn cmd_bench(g: &Global, persons: &str, trials: usize, warmup: usize, parallel: bool) -> Result<()> {
    let topo = g.topology()?;
    let defaults = BenchConfig::default();
    let cfg = BenchConfig {
        persons: parse_sweep(persons)?,
        trials,
        warmup,
        render: g.render(),
        parse: ParseParams {
            parallel,
            ..g.parse_params()
        },
        seed: g.seed,
        ..defaults
    };
    let report = run_bench(&cfg, &topo)?;
    g.emit(&report.to_table())
}

fn cmd_eval(g: &Global, pred: &Path, gt: &Path, mode: EvalMode, pckh: f64, sweep: bool) -> Result<()> {
    let topo = g.topology()?;
    let params = g.parse_params();
    let cfg = EvalConfig::with_fraction(pckh);
    let scenes = read_scenes(gt, &topo)?;
    if scenes.is_empty() {
        return Err(CliError::Usage(format!("no .scene files in {}", gt.display())));
    }
    let mut preds = Vec::with_capacity(scenes.len());
    for (name, scene) in &scenes {
        let source = |ext: &str| {
            let path = pred.join(format!("{name}.{ext}"));
            if path.is_file() {
                Ok(path)
            } else {
                Err(CliError::Usage(format!("missing prediction {}", path.display())))
            }
        };
        preds.push(match mode {
            EvalMode::Full => read_parse_result(source("parse")?, topo.num_parts())?,
            EvalMode::GtDetect => {
                let (_, fields) = read_fields(source("paft")?)?;
                eval_oracle_detection(scene, &fields, &topo, &params)?
            }
            EvalMode::GtConnect => {
                let (maps, _) = read_fields(source("paft")?)?;
                let detections = detect_all(&maps, &params.nms);
                eval_oracle_connection(&detections, scene, &topo, &cfg)?
            }
        });
    }
    let gts: Vec<Scene> = scenes.into_iter().map(|(_, s)| s).collect();
    let mut text = evaluate(&preds, &gts, &topo, &cfg)?.to_table();
    if sweep {
        for k in 1..=20 {
            let fraction = 0.05 * k as f64;
            let map = evaluate(&preds, &gts, &topo, &EvalConfig { pckh_fraction: fraction, ..cfg })?.map;
            text.push_str(&format!("sweep {fraction:.2} {map:.6}\n"));
        }
    }
    g.emit(&text)
}
