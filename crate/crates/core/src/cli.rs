//! Command-line front end.
//!
//! Settings come from an optional `key = value` file (`--config`) and from
//! flags; flags win. Every CSV written starts with comment lines giving the
//! tool version, the resolved configuration and the seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand as ClapSubcommand};

use crate::error::{Error, Result};
use crate::experiments::{
    as_trace, covariance_check, ks_normal, run_rate_experiment, RateExperimentConfig,
};
use crate::jump_distributions::JumpLaw;
use crate::renewal_transport::{
    build_transport_path, sample_renewal_path, terminal_samples, ScalingSchedule,
    DEFAULT_EVENT_CAP,
};
use crate::rng::{StreamKey, StreamRole};
use crate::skorokhod_coupling::{
    build_coupled_realization, Engine, SupMode, DEFAULT_GRID_STEP_DIVISOR, DEFAULT_STEP_BUDGET,
};
use crate::stats::mean_var;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "renewal-transport",
    version,
    about = "Simulate renewal transport processes and their Brownian coupling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, ClapSubcommand)]
enum Command {
    /// Simulate one transport path on [0, 1] and write its knots
    SimulatePath(Flags),
    /// Build one coupled realization and write its skeleton
    Couple(Flags),
    /// Run the convergence-rate campaign over an n grid
    Rate(Flags),
    /// Goodness-of-fit checks of x_n against Brownian motion
    Gof(Flags),
    /// Per-replication sup-distances across an n grid
    Trace(Flags),
}

#[derive(Debug, Args, Default)]
struct Flags {
    /// Key-value file with defaults (keys as the long flags, `-` or `_`)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Jump law: uniform01 | exponential:<rate> | deterministic:<c> | two_point:<a>,<b>,<p> [default: uniform01]
    #[arg(long)]
    law: Option<String>,
    /// Rate exponent, β(n) = n^-k; must exceed 1 [default: 2]
    #[arg(long)]
    k: Option<f64>,
    /// Single scale index (simulate-path, couple, gof)
    #[arg(long)]
    n: Option<u64>,
    /// Comma-separated increasing scale indices (rate, trace)
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<u64>>,
    /// Replications [default: 200; gof: 5000]
    #[arg(long)]
    reps: Option<usize>,
    /// Master seed [default: 1]
    #[arg(long)]
    seed: Option<u64>,
    /// Embedding engine: exact | grid [default: grid]
    #[arg(long)]
    engine: Option<String>,
    /// Grid step h = H(n) / divisor [default: 1000]
    #[arg(long)]
    grid_step_divisor: Option<u32>,
    /// Existing output directory [default: .]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the Brownian grid path (couple, grid engine)
    #[arg(long)]
    export_grid_path: bool,
    /// Rate constant α; calibrated at the smallest n when absent (rate)
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    SimulatePath,
    Couple,
    Rate,
    Gof,
    Trace,
}

impl Subcommand {
    pub fn name(&self) -> &'static str {
        match self {
            Subcommand::SimulatePath => "simulate-path",
            Subcommand::Couple => "couple",
            Subcommand::Rate => "rate",
            Subcommand::Gof => "gof",
            Subcommand::Trace => "trace",
        }
    }

    fn needs_grid(&self) -> bool {
        matches!(self, Subcommand::Rate | Subcommand::Trace)
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub subcommand: Subcommand,
    pub law: JumpLaw,
    pub k: f64,
    pub n: Option<u64>,
    pub n_grid: Option<Vec<u64>>,
    pub reps: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub engine: Engine,
    pub grid_step_divisor: u32,
    pub export_grid_path: bool,
    pub alpha: Option<f64>,
}

impl RunConfig {
    /// One-line description used in output headers.
    pub fn describe(&self) -> String {
        let grid = self.n_grid.as_ref().map(|g| {
            g.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
        });
        format!(
            "subcommand={} law={} k={} n={} n_grid={} reps={} seed={} engine={} grid_step_divisor={} export_grid_path={} alpha={}",
            self.subcommand.name(),
            self.law,
            self.k,
            self.n.map_or("-".into(), |n| n.to_string()),
            grid.unwrap_or_else(|| "-".into()),
            self.reps,
            self.seed,
            self.engine,
            self.grid_step_divisor,
            self.export_grid_path,
            self.alpha.map_or("auto".into(), |a| a.to_string()),
        )
    }

    fn header(&self) -> Vec<String> {
        vec![
            format!("renewal-transport {VERSION}"),
            format!("config: {}", self.describe()),
            format!("seed={}", self.seed),
        ]
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| usage(format!("invalid value `{v}` for key `{key}`")))
}

/// Fills unset flags from `key = value` text. Blank lines and `#` comments
/// are skipped; unknown keys are rejected.
fn merge_file(flags: &mut Flags, text: &str) -> Result<()> {
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage(format!("config line {}: expected `key = value`", lineno + 1)))?;
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "law" => {
                flags.law.get_or_insert_with(|| value.to_string());
            }
            "k" => {
                if flags.k.is_none() {
                    flags.k = Some(parse_value(&key, value)?);
                }
            }
            "n" => {
                if flags.n.is_none() {
                    flags.n = Some(parse_value(&key, value)?);
                }
            }
            "n_grid" => {
                if flags.n_grid.is_none() {
                    flags.n_grid = Some(
                        value
                            .split(',')
                            .map(|x| parse_value(&key, x))
                            .collect::<Result<_>>()?,
                    );
                }
            }
            "reps" => {
                if flags.reps.is_none() {
                    flags.reps = Some(parse_value(&key, value)?);
                }
            }
            "seed" => {
                if flags.seed.is_none() {
                    flags.seed = Some(parse_value(&key, value)?);
                }
            }
            "engine" => {
                flags.engine.get_or_insert_with(|| value.to_string());
            }
            "grid_step_divisor" => {
                if flags.grid_step_divisor.is_none() {
                    flags.grid_step_divisor = Some(parse_value(&key, value)?);
                }
            }
            "out" => {
                flags.out.get_or_insert_with(|| PathBuf::from(value));
            }
            "export_grid_path" => {
                if !flags.export_grid_path {
                    flags.export_grid_path = parse_value(&key, value)?;
                }
            }
            "alpha" => {
                if flags.alpha.is_none() {
                    flags.alpha = Some(parse_value(&key, value)?);
                }
            }
            other => return Err(usage(format!("unknown config key `{other}`"))),
        }
    }
    Ok(())
}

/// Parses command-line tokens (without the program name), merging key-value
/// text. When `file_text` is `None` and `--config` is given, that file is read.
pub fn parse_config(tokens: &[String], file_text: Option<&str>) -> Result<RunConfig> {
    let argv = std::iter::once("renewal-transport".to_string()).chain(tokens.iter().cloned());
    let cli = Cli::try_parse_from(argv).map_err(|e| usage(e.to_string()))?;
    let (subcommand, mut flags) = match cli.command {
        Command::SimulatePath(f) => (Subcommand::SimulatePath, f),
        Command::Couple(f) => (Subcommand::Couple, f),
        Command::Rate(f) => (Subcommand::Rate, f),
        Command::Gof(f) => (Subcommand::Gof, f),
        Command::Trace(f) => (Subcommand::Trace, f),
    };
    match (file_text, &flags.config) {
        (Some(text), _) => merge_file(&mut flags, text)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            merge_file(&mut flags, &text)?;
        }
        (None, None) => {}
    }

    let law: JumpLaw = match &flags.law {
        Some(s) => s.parse().map_err(|e: Error| usage(format!("law: {e}")))?,
        None => JumpLaw::Uniform01,
    };
    if let Err(v) = law.validate() {
        let msg: Vec<String> = v.iter().map(|x| x.0.clone()).collect();
        return Err(usage(format!("law: {}", msg.join("; "))));
    }
    let k = flags.k.unwrap_or(2.0);
    if !(k > 1.0) {
        return Err(usage("k must exceed 1"));
    }
    let engine: Engine = match &flags.engine {
        Some(s) => s.parse().map_err(|e: Error| usage(format!("engine: {e}")))?,
        None => Engine::Grid,
    };
    let default_reps = if subcommand == Subcommand::Gof { 5000 } else { 200 };
    let reps = flags.reps.unwrap_or(default_reps);
    let grid_step_divisor = flags.grid_step_divisor.unwrap_or(DEFAULT_GRID_STEP_DIVISOR);
    if grid_step_divisor == 0 {
        return Err(usage("grid_step_divisor must be positive"));
    }

    if subcommand.needs_grid() {
        if flags.n.is_some() {
            return Err(usage(format!("n: {} takes --n-grid, not --n", subcommand.name())));
        }
        let grid = flags
            .n_grid
            .as_ref()
            .ok_or_else(|| usage(format!("n_grid: required by {}", subcommand.name())))?;
        if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(usage("n_grid: must be positive and strictly increasing"));
        }
    } else {
        if flags.n_grid.is_some() {
            return Err(usage(format!(
                "n_grid: {} requires a single --n",
                subcommand.name()
            )));
        }
        match flags.n {
            None => return Err(usage(format!("n: required by {}", subcommand.name()))),
            Some(0) => return Err(usage("n: must be at least 1")),
            _ => {}
        }
    }
    match subcommand {
        Subcommand::Rate if reps < 2 => return Err(usage("reps: rate needs at least 2")),
        Subcommand::Gof if reps < 100 => return Err(usage("reps: gof needs at least 100")),
        _ if reps == 0 => return Err(usage("reps: must be at least 1")),
        _ => {}
    }
    if let Some(a) = flags.alpha {
        if !(a > 0.0) {
            return Err(usage("alpha must be positive"));
        }
    }
    if flags.export_grid_path && (subcommand != Subcommand::Couple || engine != Engine::Grid) {
        return Err(usage(
            "export_grid_path: only available for couple with the grid engine",
        ));
    }

    Ok(RunConfig {
        subcommand,
        law,
        k,
        n: flags.n,
        n_grid: flags.n_grid,
        reps,
        seed: flags.seed.unwrap_or(1),
        out: flags.out.unwrap_or_else(|| PathBuf::from(".")),
        engine,
        grid_step_divisor,
        export_grid_path: flags.export_grid_path,
        alpha: flags.alpha,
    })
}

/// What a finished run reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// One-line summary for standard output.
    pub summary: String,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
    /// Process exit status.
    pub status: i32,
}

/// Exit status for an error class.
pub fn exit_status(e: &Error) -> i32 {
    match e {
        Error::Usage(_)
        | Error::Input(_)
        | Error::Parameter(_)
        | Error::RateCondition(_)
        | Error::Domain { .. } => 2,
        Error::Capacity { .. } | Error::Budget(_) => 3,
        Error::Io(_) => 4,
        Error::Numeric(_) | Error::UnsupportedMode(_) => 1,
    }
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok((path, BufWriter::new(f)))
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

/// Runs the configured subcommand and writes its files into `cfg.out`.
pub fn dispatch(cfg: &RunConfig) -> Result<Outcome> {
    if !cfg.out.is_dir() {
        return Err(Error::Io(format!(
            "output directory {} does not exist",
            cfg.out.display()
        )));
    }
    match cfg.subcommand {
        Subcommand::SimulatePath => simulate_path(cfg),
        Subcommand::Couple => couple(cfg),
        Subcommand::Rate => rate(cfg),
        Subcommand::Gof => gof(cfg),
        Subcommand::Trace => trace(cfg),
    }
}

fn simulate_path(cfg: &RunConfig) -> Result<Outcome> {
    let n = cfg.n.expect("validated");
    let sched = ScalingSchedule::new(&cfg.law, cfg.k, n)?;
    let mut rng = StreamKey::new(cfg.seed, StreamRole::RenewalPath, n, 0).rng();
    let path = sample_renewal_path(&cfg.law, &sched, 1.0, DEFAULT_EVENT_CAP, &mut rng)?;
    let tp = build_transport_path(&path, &sched);
    let mut comments = vec![format!(
        "renewal-transport path n={} k={} law={} seed={}",
        n, cfg.k, cfg.law, cfg.seed
    )];
    comments.extend(cfg.header());
    let (file, mut w) = create(&cfg.out, "path.csv")?;
    tp.write_csv(&mut w, &comments).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(Outcome {
        summary: format!(
            "simulate-path n={} events={} sign_changes={} x_n(1)={}",
            n,
            path.events.len(),
            tp.sign_changes(),
            tp.eval(1.0)?
        ),
        files: vec![file],
        status: 0,
    })
}

fn couple(cfg: &RunConfig) -> Result<Outcome> {
    let n = cfg.n.expect("validated");
    let sched = ScalingSchedule::new(&cfg.law, cfg.k, n)?;
    let h = sched.mean_gap / cfg.grid_step_divisor as f64;
    let mut rng = StreamKey::new(cfg.seed, StreamRole::Coupling, n, 0).rng();
    let step = (cfg.engine == Engine::Grid).then_some(h);
    let real = build_coupled_realization(&cfg.law, &sched, cfg.engine, step, DEFAULT_STEP_BUDGET, &mut rng)?;
    let header = cfg.header();
    let mut files = Vec::new();
    let (file, mut w) = create(&cfg.out, "realization.csv")?;
    real.write_skeleton_csv(&mut w, &header).map_err(io)?;
    w.flush().map_err(io)?;
    files.push(file);
    let mut summary = format!(
        "couple n={} engine={} steps={} covering_steps={}",
        n,
        cfg.engine,
        real.len(),
        real.covering_steps
    );
    if let Some(grid) = &real.grid {
        let d = real.decompose_sup()?;
        summary.push_str(&format!(
            " sup_skeleton={} sup_grid={} J1={} J2={} J3={} J4={}",
            real.sup_distance(SupMode::Skeleton)?,
            d.sup,
            d.j1,
            d.j2,
            d.j3,
            d.j4
        ));
        if cfg.export_grid_path {
            let (file, mut w) = create(&cfg.out, "grid_path.csv")?;
            grid.write_csv(&mut w, &header).map_err(io)?;
            w.flush().map_err(io)?;
            files.push(file);
        }
    }
    Ok(Outcome {
        summary,
        files,
        status: 0,
    })
}

fn rate(cfg: &RunConfig) -> Result<Outcome> {
    let mut rc = RateExperimentConfig::new(
        cfg.law,
        cfg.k,
        cfg.n_grid.clone().expect("validated"),
        cfg.reps,
        cfg.seed,
    );
    rc.alpha = cfg.alpha;
    rc.grid_step_divisor = cfg.grid_step_divisor;
    let res = run_rate_experiment(&rc)?;
    let header = cfg.header();
    let (csv, mut w) = create(&cfg.out, "rate.csv")?;
    res.write_csv(&mut w, &header).map_err(io)?;
    w.flush().map_err(io)?;
    let meta = vec![
        ("tool".to_string(), format!("renewal-transport {VERSION}")),
        ("config".to_string(), cfg.describe()),
        ("seed".to_string(), cfg.seed.to_string()),
        // the o(n^-q) order enters only through α
        ("q".to_string(), "unspecified (absorbed in alpha)".to_string()),
    ];
    let (summary_file, mut w) = create(&cfg.out, "rate_summary.txt")?;
    res.write_summary(&mut w, &meta).map_err(io)?;
    w.flush().map_err(io)?;
    let fit = res
        .fit
        .map_or("fit=unavailable".to_string(), |f| {
            format!("slope={} r_squared={}", f.slope, f.r_squared)
        });
    let medians: Vec<String> = res.rows.iter().map(|r| format!("{}:{}", r.n, r.median_j)).collect();
    Ok(Outcome {
        summary: format!(
            "rate rows={} complete={} alpha={} {} median_J={}",
            res.rows.len(),
            res.complete,
            res.alpha,
            fit,
            medians.join(",")
        ),
        files: vec![csv, summary_file],
        status: if res.complete { 0 } else { 3 },
    })
}

fn gof(cfg: &RunConfig) -> Result<Outcome> {
    let n = cfg.n.expect("validated");
    let sched = ScalingSchedule::new(&cfg.law, cfg.k, n)?;
    let terminal = terminal_samples(&cfg.law, &sched, cfg.reps, cfg.seed)?;
    let ks = ks_normal(&terminal)?;
    let (_, var1) = mean_var(&terminal);
    let cov_half = covariance_check(&cfg.law, cfg.k, n, 0.5, 1.0, cfg.reps, cfg.seed)?;
    let cov_one = covariance_check(&cfg.law, cfg.k, n, 1.0, 1.0, cfg.reps, cfg.seed)?;
    let (file, mut w) = create(&cfg.out, "gof.csv")?;
    for c in cfg.header() {
        writeln!(w, "# {c}").map_err(io)?;
    }
    writeln!(w, "check,target,statistic,p_value,sample_size,estimate").map_err(io)?;
    writeln!(
        w,
        "ks_terminal,{},{},{},{},{}",
        ks.target, ks.statistic, ks.p_value, ks.sample_size, var1
    )
    .map_err(io)?;
    for (name, g) in [("covariance", cov_half), ("variance", cov_one)] {
        writeln!(
            w,
            "{name},{},{},{},{},{}",
            g.target,
            g.statistic,
            g.p_value,
            g.sample_size,
            g.estimate.unwrap_or(f64::NAN)
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(Outcome {
        summary: format!(
            "gof n={} ks_D={} ks_p={} var_1={} cov_0.5_1={}",
            n,
            ks.statistic,
            ks.p_value,
            cov_one.estimate.unwrap_or(f64::NAN),
            cov_half.estimate.unwrap_or(f64::NAN)
        ),
        files: vec![file],
        status: 0,
    })
}

fn trace(cfg: &RunConfig) -> Result<Outcome> {
    let grid = cfg.n_grid.as_ref().expect("validated");
    let res = as_trace(&cfg.law, cfg.k, grid, cfg.reps, cfg.grid_step_divisor, cfg.seed)?;
    let (file, mut w) = create(&cfg.out, "trace.csv")?;
    res.write_csv(&mut w, &cfg.header()).map_err(io)?;
    w.flush().map_err(io)?;
    Ok(Outcome {
        summary: format!(
            "trace reps={} monotone_fraction={} final_below_first_fraction={}",
            cfg.reps, res.monotone_fraction, res.final_below_first_fraction
        ),
        files: vec![file],
        status: 0,
    })
}
