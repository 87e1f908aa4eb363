//! Command-line front end. Every subcommand resolves its settings from a
//! `key=value` config file, `--set key=value` overrides and explicit flags (in
//! increasing precedence), writes CSV/JSON artifacts and a `manifest.json`.

use std::sync::Mutex;
use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::experiments::output::{content_hash, fmt_f64, write_csv, write_json, CsvTable, OutputFile, RunManifest};
use crate::experiments::{
    self, contraction_curve, depth_width_sweep, double_descent_linear, swiss_roll_replication, sweep_table,
    theorem_check, BasisSelector, ContractionConfig, DoubleDescentConfig, DoubleDescentRow, ExperimentError,
    FeatureKind, LossSurfaceGrid, SwissRollConfig, SweepConfig, TheoremConfig,
};
use crate::measures::{correlation_table, measure_model, MagnitudeMode, MeasureError, MeasureField, MeasureOptions, MeasureReport};
use crate::nn::{
    init_params, load_checkpoint, train, Activation, CheckpointHeader, Dataset, MlpSpec, NnError, Optimizer, TrainConfig,
};
use crate::rng::derive_seed;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "EFFDIM_OUT";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        let usage = matches!(
            &e,
            ExperimentError::InvalidConfig(_)
                | ExperimentError::Nn(NnError::InvalidConfig(_))
                | ExperimentError::Measure(MeasureError::InvalidConfig(_))
                | ExperimentError::Measure(MeasureError::Nn(NnError::InvalidConfig(_)))
        );
        if usage { CliError::Usage(e.to_string()) } else { CliError::Failure(e.to_string()) }
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        ExperimentError::from(e).into()
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        ExperimentError::from(e).into()
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "effdim", version, about = "Effective dimensionality experiments and generalization measures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Config file of `key=value` lines.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: $EFFDIM_OUT/<subcommand>, else effdim-out/<subcommand>).
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Effective-dimensionality regularizer.
    #[arg(long)]
    pub z: Option<f64>,
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Worker threads for parallel cells.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior and Hessian effective dimensionality as observations arrive.
    ContractionCurve(ContractionArgs),
    /// Forced prior-variance eigenvalues of a random Bayesian linear model.
    TheoremCheck(TheoremArgs),
    /// Loss on planes spanned by top and degenerate Hessian eigenvectors.
    LossSurface(SwissArgs),
    /// Prediction agreement after perturbing along Hessian eigenvectors.
    PerturbAgreement(SwissArgs),
    /// Minimum-norm regression over a growing feature count.
    DoubleDescentLinear(DoubleDescentArgs),
    /// Two-spirals depth sweep with all measures.
    SweepDepth(SweepArgs),
    /// Two-spirals width sweep with all measures.
    SweepWidth(SweepArgs),
    /// Measures for one trained or loaded network.
    Measures(MeasuresArgs),
    /// Pearson correlations between measures and targets from a report CSV.
    Correlate(CorrelateArgs),
}

#[derive(Debug, Args)]
pub struct ContractionArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub n_step: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub noise_std: Option<f64>,
    #[arg(long)]
    pub z_hessian: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TheoremArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// sinusoidal or gaussian.
    #[arg(long)]
    pub features: Option<String>,
}

#[derive(Debug, Args)]
pub struct SwissArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub bottom_k: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub top_scale: Option<f64>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub degenerate_k: Option<usize>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub top_radius: Option<f64>,
    /// Radius of the degenerate grid; `norm` uses ‖θ*‖.
    #[arg(long)]
    pub degenerate_radius: Option<String>,
}

#[derive(Debug, Args)]
pub struct DoubleDescentArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub informative: Option<usize>,
    #[arg(long)]
    pub k_min: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
    #[arg(long)]
    pub k_step: Option<usize>,
    /// Number of repetitions.
    #[arg(long)]
    pub seeds: Option<usize>,
    #[arg(long)]
    pub ridge: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Axis values, e.g. `1-15` or `2,4,8`.
    #[arg(long)]
    pub values: Option<String>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub lanczos_steps: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub pac_bayes: Option<bool>,
}

#[derive(Debug, Args)]
pub struct MeasuresArgs {
    #[command(flatten)]
    pub common: Common,
    /// Load parameters from a checkpoint instead of training.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// spirals or swiss.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lanczos_steps: Option<usize>,
    #[arg(long)]
    pub mc_samples: Option<usize>,
    #[arg(long)]
    pub pac_bayes: Option<bool>,
}

#[derive(Debug, Args)]
pub struct CorrelateArgs {
    #[command(flatten)]
    pub common: Common,
    /// CSV with measure-report columns (e.g. a sweep output).
    #[arg(long, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Keep models with training loss below this.
    #[arg(long)]
    pub cutoff: Option<f64>,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(dir) => {
            println!("wrote {}", dir.join("manifest.json").display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn some<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(|x| x.to_string())
}

/// Resolved settings with access tracking, so unknown keys can be rejected.
struct Params {
    map: BTreeMap<String, String>,
    used: Mutex<BTreeSet<String>>,
    effective: Mutex<BTreeMap<String, String>>,
    file_hash: Option<String>,
}

fn normalize_key(k: &str) -> String {
    k.trim().replace('-', "_")
}

fn parse_kv(line: &str, origin: &str) -> CliResult<(String, String)> {
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("{origin}: expected key=value, got '{line}'")))?;
    let key = normalize_key(k);
    if key.is_empty() {
        return Err(CliError::Usage(format!("{origin}: empty key")));
    }
    Ok((key, v.trim().to_string()))
}

impl Params {
    fn resolve(common: &Common, flags: Vec<(&str, Option<String>)>) -> CliResult<Self> {
        let mut map = BTreeMap::new();
        let mut file_hash = None;
        if let Some(path) = &common.config {
            let bytes = std::fs::read(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            file_hash = Some(content_hash(&bytes));
            let text = String::from_utf8(bytes)
                .map_err(|_| CliError::Usage(format!("config {} is not UTF-8", path.display())))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = parse_kv(line, &format!("{}:{}", path.display(), i + 1))?;
                map.insert(k, v);
            }
        }
        for o in &common.overrides {
            let (k, v) = parse_kv(o, "--set")?;
            map.insert(k, v);
        }
        let mut all = vec![
            ("seed", some(&common.seed)),
            ("out", common.out.as_ref().map(|p| p.display().to_string())),
            ("z", some(&common.z)),
            ("jobs", some(&common.jobs)),
        ];
        all.extend(flags);
        for (k, v) in all {
            if let Some(v) = v {
                map.insert(k.to_string(), v);
            }
        }
        Ok(Params { map, used: Mutex::default(), effective: Mutex::default(), file_hash })
    }

    fn raw(&self, key: &str) -> Option<String> {
        self.used.lock().unwrap().insert(key.to_string());
        self.map.get(key).cloned()
    }

    fn parse<T: FromStr>(&self, key: &str, raw: &str) -> CliResult<T>
    where
        T::Err: Display,
    {
        raw.parse::<T>().map_err(|e| CliError::Usage(format!("invalid value '{raw}' for '{key}': {e}")))
    }

    fn opt<T: FromStr + ToString>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            Some(r) => {
                let v: T = self.parse(key, &r)?;
                self.effective.lock().unwrap().insert(key.to_string(), v.to_string());
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    fn get<T: FromStr + ToString>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: Display,
    {
        let v = self.opt(key)?.unwrap_or(default);
        self.effective.lock().unwrap().insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn seed(&self) -> CliResult<u64> {
        self.opt::<u64>("seed")?
            .ok_or_else(|| CliError::Usage("missing required flag --seed (or `seed=` in the config file)".into()))
    }

    fn values(&self, key: &str, default: &[usize]) -> CliResult<Vec<usize>> {
        let Some(raw) = self.raw(key) else {
            self.effective.lock().unwrap().insert(key.into(), join(default));
            return Ok(default.to_vec());
        };
        let mut out = Vec::new();
        for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some((a, b)) = part.split_once('-') {
                let (a, b): (usize, usize) = (self.parse(key, a.trim())?, self.parse(key, b.trim())?);
                out.extend(a..=b);
            } else {
                out.push(self.parse(key, part)?);
            }
        }
        self.effective.lock().unwrap().insert(key.into(), join(&out));
        Ok(out)
    }

    /// Rejects keys nothing asked for.
    fn finish(&self) -> CliResult<()> {
        let used = self.used.lock().unwrap();
        let unknown: Vec<&String> = self.map.keys().filter(|k| !used.contains(*k)).collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "unknown config key(s): {}",
                unknown.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(", ")
            )))
        }
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn output_dir(p: &Params, name: &str) -> CliResult<PathBuf> {
    if let Some(out) = p.raw("out") {
        return Ok(PathBuf::from(out));
    }
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("effdim-out"));
    Ok(root.join(name))
}

struct Run<'a> {
    name: &'static str,
    params: &'a Params,
    dir: PathBuf,
    outputs: Vec<OutputFile>,
}

impl Run<'_> {
    fn csv(&mut self, file: &str, table: &CsvTable) -> CliResult<()> {
        self.outputs.push(write_csv(&self.dir, file, table)?);
        Ok(())
    }

    fn json<T: serde::Serialize>(&mut self, file: &str, value: &T) -> CliResult<()> {
        self.outputs.push(write_json(&self.dir, file, value)?);
        Ok(())
    }

    fn manifest(self, seed: Option<u64>, jobs: usize) -> CliResult<PathBuf> {
        let mut m = RunManifest::new(self.name, self.params.effective.lock().unwrap().clone(), seed, jobs);
        m.config_file_hash = self.params.file_hash.clone();
        m.outputs = self.outputs;
        write_json(&self.dir, "manifest.json", &m)?;
        Ok(self.dir)
    }
}

fn execute(command: Command) -> CliResult<PathBuf> {
    match command {
        Command::ContractionCurve(a) => contraction(a),
        Command::TheoremCheck(a) => theorem(a),
        Command::LossSurface(a) => swiss("loss-surface", a),
        Command::PerturbAgreement(a) => swiss("perturb-agreement", a),
        Command::DoubleDescentLinear(a) => double_descent(a),
        Command::SweepDepth(a) => sweep("sweep-depth", a),
        Command::SweepWidth(a) => sweep("sweep-width", a),
        Command::Measures(a) => measures(a),
        Command::Correlate(a) => correlate(a),
    }
}

/// Resolves the seed, jobs and output directory, then runs `body` inside a
/// pool with `jobs` workers.
fn with_run<F>(name: &'static str, params: &Params, needs_seed: bool, body: F) -> CliResult<PathBuf>
where
    F: FnOnce(&mut Run, Option<u64>, usize) -> CliResult<()> + Send,
{
    let seed = if needs_seed { Some(params.seed()?) } else { None };
    let jobs = params.get("jobs", 1usize)?;
    let dir = output_dir(params, name)?;
    let mut run = Run { name, params, dir, outputs: Vec::new() };
    let pool = experiments::pool(jobs)?;
    pool.install(|| body(&mut run, seed, jobs))?;
    params.finish()?;
    run.manifest(seed, jobs)
}

fn contraction(a: ContractionArgs) -> CliResult<PathBuf> {
    let p = Params::resolve(
        &a.common,
        vec![
            ("k", some(&a.k)),
            ("n_max", some(&a.n_max)),
            ("n_step", some(&a.n_step)),
            ("alpha", some(&a.alpha)),
            ("noise_std", some(&a.noise_std)),
            ("z_hessian", some(&a.z_hessian)),
        ],
    )?;
    with_run("contraction-curve", &p, true, |run, seed, _| {
        let d = ContractionConfig::new(seed.unwrap_or_default());
        let cfg = ContractionConfig {
            k: p.get("k", d.k)?,
            n_max: p.get("n_max", d.n_max)?,
            n_step: p.get("n_step", d.n_step)?,
            alpha: p.get("alpha", d.alpha)?,
            noise_std: p.get("noise_std", d.noise_std)?,
            z_covariance: p.opt("z")?,
            z_hessian: p.opt("z_hessian")?,
            ..d
        };
        let recs = contraction_curve(&cfg)?;
        let mut t = CsvTable::new(&["n", "n_eff_covariance", "n_eff_hessian", "contraction", "identity_residual"]);
        for r in recs {
            t.push(vec![
                r.n.to_string(),
                fmt_f64(r.n_eff_covariance),
                fmt_f64(r.n_eff_hessian),
                fmt_f64(r.contraction),
                fmt_f64(r.identity_residual),
            ]);
        }
        run.csv("contraction.csv", &t)
    })
}

fn theorem(a: TheoremArgs) -> CliResult<PathBuf> {
    let p = Params::resolve(
        &a.common,
        vec![
            ("k", some(&a.k)),
            ("n", some(&a.n)),
            ("alpha", some(&a.alpha)),
            ("sigma", some(&a.sigma)),
            ("features", a.features.clone()),
        ],
    )?;
    let mut passed = true;
    let dir = with_run("theorem-check", &p, true, |run, seed, _| {
        let mut cfg = TheoremConfig::new(p.get("k", 200)?, p.get("n", 10)?, p.get("alpha", 1.0)?, seed.unwrap_or_default());
        cfg.sigma = p.get("sigma", 1.0)?;
        cfg.features = p.get::<String>("features", "sinusoidal".into())?.parse::<FeatureKind>()?;
        if cfg.n >= cfg.k {
            return Err(CliError::Usage(format!("theorem check needs k > n, got k={} n={}", cfg.k, cfg.n)));
        }
        let report = theorem_check(&cfg)?;
        passed = report.pass;
        run.json("theorem.json", &report)
    })?;
    if passed {
        Ok(dir)
    } else {
        Err(CliError::Failure(format!("theorem check failed; see {}", dir.join("theorem.json").display())))
    }
}

fn grid_table(grid: &LossSurfaceGrid) -> CsvTable {
    let mut t = CsvTable::new(&["alpha", "beta", "loss"]);
    for (i, a) in grid.alpha_range.iter().enumerate() {
        for (j, b) in grid.beta_range.iter().enumerate() {
            t.push(vec![fmt_f64(*a), fmt_f64(*b), fmt_f64(grid.losses[i][j])]);
        }
    }
    t
}

fn swiss(name: &'static str, a: SwissArgs) -> CliResult<PathBuf> {
    let p = Params::resolve(
        &a.common,
        vec![
            ("n", some(&a.n)),
            ("noise", some(&a.noise)),
            ("steps", some(&a.steps)),
            ("lr", some(&a.lr)),
            ("bottom_k", some(&a.bottom_k)),
            ("top_k", some(&a.top_k)),
            ("top_scale", some(&a.top_scale)),
            ("draws", some(&a.draws)),
            ("degenerate_k", some(&a.degenerate_k)),
            ("grid_points", some(&a.grid_points)),
            ("top_radius", some(&a.top_radius)),
            ("degenerate_radius", a.degenerate_radius.clone()),
        ],
    )?;
    with_run(name, &p, true, |run, seed, _| {
        let d = SwissRollConfig::new(seed.unwrap_or_default());
        let radius = match p.get::<String>("degenerate_radius", "1".into())?.as_str() {
            "norm" => None,
            r => Some(p.parse::<f64>("degenerate_radius", r)?),
        };
        let cfg = SwissRollConfig {
            n: p.get("n", d.n)?,
            noise: p.get("noise", d.noise)?,
            steps: p.get("steps", d.steps)?,
            learning_rate: p.get("lr", d.learning_rate)?,
            bottom_k: p.get("bottom_k", d.bottom_k)?,
            top_k: p.get("top_k", d.top_k)?,
            top_scale: p.get("top_scale", d.top_scale)?,
            draws: p.get("draws", d.draws)?,
            degenerate_k: p.get("degenerate_k", d.degenerate_k)?,
            grid_points: p.get("grid_points", d.grid_points)?,
            top_radius: p.get("top_radius", d.top_radius)?,
            degenerate_radius: radius,
            ..d.clone()
        };
        let o = swiss_roll_replication(&cfg)?;
        let summary = serde_json::json!({
            "param_count": o.param_count,
            "param_norm": o.param_norm,
            "train_accuracy": o.train_accuracy,
            "test_accuracy": o.test_accuracy,
            "top_eigenvalues": o.top_eigenvalues,
            "bottom_agreement_train": o.bottom_agreement_train,
            "bottom_agreement_test": o.bottom_agreement_test,
            "top_agreement_train": o.top_agreement_train,
            "top_agreement_test": o.top_agreement_test,
            "top_range": o.top_range(),
            "degenerate_range": o.degenerate_range(),
            "pass": o.passes(),
        });
        if name == "loss-surface" {
            run.csv("top_grid.csv", &grid_table(&o.top_grid))?;
            run.csv("degenerate_grid.csv", &grid_table(&o.degenerate_grid))?;
        } else {
            let mut t = CsvTable::new(&["selector", "k", "scale", "draws", "agreement_train", "agreement_test"]);
            for (sel, scale, tr, te) in [
                (BasisSelector::BottomK(cfg.bottom_k), o.bottom_scale, o.bottom_agreement_train, o.bottom_agreement_test),
                (BasisSelector::TopK(cfg.top_k), cfg.top_scale, o.top_agreement_train, o.top_agreement_test),
            ] {
                let (label, k) = match sel {
                    BasisSelector::BottomK(k) => ("bottom", k),
                    BasisSelector::TopK(k) => ("top", k),
                    _ => unreachable!(),
                };
                t.push(vec![label.into(), k.to_string(), fmt_f64(scale), cfg.draws.to_string(), fmt_f64(tr), fmt_f64(te)]);
            }
            run.csv("agreement.csv", &t)?;
        }
        run.json("summary.json", &summary)
    })
}

fn double_descent(a: DoubleDescentArgs) -> CliResult<PathBuf> {
    let p = Params::resolve(
        &a.common,
        vec![
            ("n", some(&a.n)),
            ("informative", some(&a.informative)),
            ("k_min", some(&a.k_min)),
            ("k_max", some(&a.k_max)),
            ("k_step", some(&a.k_step)),
            ("seeds", some(&a.seeds)),
            ("ridge", some(&a.ridge)),
        ],
    )?;
    with_run("double-descent-linear", &p, true, |run, seed, jobs| {
        let d = DoubleDescentConfig::new(seed.unwrap_or_default());
        let cfg = DoubleDescentConfig {
            n: p.get("n", d.n)?,
            informative: p.get("informative", d.informative)?,
            k_min: p.get("k_min", d.k_min)?,
            k_max: p.get("k_max", d.k_max)?,
            k_step: p.get("k_step", d.k_step)?,
            seeds: p.get("seeds", d.seeds)?,
            ridge: p.get("ridge", d.ridge)?,
            z: p.get("z", d.z)?,
            jobs,
            ..d
        };
        let rows = double_descent_linear(&cfg)?;
        let mut t = CsvTable::new(&DoubleDescentRow::CSV_COLUMNS);
        for r in rows {
            t.push(vec![r.k.to_string(), r.seed.to_string(), fmt_f64(r.train_loss), fmt_f64(r.test_loss), fmt_f64(r.n_eff)]);
        }
        run.csv("double_descent.csv", &t)
    })
}

fn train_config(p: &Params, steps: usize, seed: u64) -> CliResult<TrainConfig> {
    let mut tc = TrainConfig::adam(p.get("lr", 0.01)?, p.get("steps", steps)?, seed);
    tc.optimizer = p.get::<String>("optimizer", "adam".into())?.parse::<Optimizer>()?;
    if tc.optimizer == Optimizer::SgdMomentum {
        tc.momentum = p.get("momentum", 0.9)?;
    }
    tc.weight_decay = p.get("weight_decay", 0.0)?;
    tc.batch_size = p.opt("batch_size")?;
    Ok(tc)
}

fn measure_options(p: &Params, n: usize) -> CliResult<MeasureOptions> {
    let prior_variance = p.get("prior_variance", 1.0)?;
    let mut m = MeasureOptions::preset(n, prior_variance);
    m.z = p.get("z", m.z)?;
    m.lanczos.steps = p.get("lanczos_steps", m.lanczos.steps)?;
    m.sigma.mc_samples = p.get("mc_samples", m.sigma.mc_samples)?;
    m.compute_pac_bayes = p.get("pac_bayes", true)?;
    m.magnitude_mode = match p.get::<String>("magnitude_mode", "squared".into())?.as_str() {
        "squared" => MagnitudeMode::Squared,
        "absolute" => MagnitudeMode::Absolute,
        other => return Err(CliError::Usage(format!("unknown magnitude mode '{other}'"))),
    };
    Ok(m)
}

fn sweep(name: &'static str, a: SweepArgs) -> CliResult<PathBuf> {
    let p = Params::resolve(
        &a.common,
        vec![
            ("values", a.values.clone()),
            ("reps", some(&a.reps)),
            ("steps", some(&a.steps)),
            ("lr", some(&a.lr)),
            ("optimizer", a.optimizer.clone()),
            ("batch_size", some(&a.batch_size)),
            ("n_train", some(&a.n_train)),
            ("n_test", some(&a.n_test)),
            ("width", some(&a.width)),
            ("depth", some(&a.depth)),
            ("lanczos_steps", some(&a.lanczos_steps)),
            ("mc_samples", some(&a.mc_samples)),
            ("pac_bayes", some(&a.pac_bayes)),
        ],
    )?;
    with_run(name, &p, true, |run, seed, jobs| {
        let seed = seed.unwrap_or_default();
        let d = if name == "sweep-depth" { SweepConfig::depth_preset(seed) } else { SweepConfig::width_preset(seed) };
        let n_train = p.get("n_train", d.n_train)?;
        let cfg = SweepConfig {
            values: p.values("values", &d.values)?,
            repetitions: p.get("reps", d.repetitions)?,
            train: train_config(&p, d.train.steps, seed)?,
            width: if name == "sweep-depth" { p.get("width", d.width)? } else { d.width },
            depth: if name == "sweep-width" { p.get("depth", d.depth)? } else { d.depth },
            n_train,
            n_test: p.get("n_test", d.n_test)?,
            noise: p.get("noise", d.noise)?,
            activation: p.get::<String>("activation", d.activation.name().into())?.parse::<Activation>()?,
            measures: measure_options(&p, n_train)?,
            jobs,
            ..d
        };
        let rows = depth_width_sweep(&cfg)?;
        run.csv("sweep.csv", &sweep_table(&rows))
    })
}

fn report_table(reports: &[MeasureReport]) -> CsvTable {
    let mut t = CsvTable::new(&MeasureReport::CSV_COLUMNS);
    for r in reports {
        let mut row = vec![r.model_id.clone()];
        row.extend(
            [
                r.n_eff_hessian,
                r.z_used,
                r.path_norm,
                r.log_path_norm,
                r.pac_bayes,
                r.mag_pac_bayes,
                r.occam_log_factor,
                r.train_loss,
                r.train_error,
                r.test_loss,
                r.test_error,
            ]
            .map(fmt_f64),
        );
        t.push(row);
    }
    t
}

fn dataset(kind: &str, n: usize, seed: u64) -> CliResult<Dataset> {
    match kind {
        "spirals" => Ok(experiments::gen_two_spirals(n, 0.5, seed)),
        "swiss" => Ok(experiments::gen_swiss_roll(n, 0.1, seed)),
        other => Err(CliError::Usage(format!("unknown dataset '{other}' (spirals or swiss)"))),
    }
}

fn measures(a: MeasuresArgs) -> CliResult<PathBuf> {
    let p = Params::resolve(
        &a.common,
        vec![
            ("checkpoint", a.checkpoint.as_ref().map(|c| c.display().to_string())),
            ("dataset", a.dataset.clone()),
            ("n", some(&a.n)),
            ("width", some(&a.width)),
            ("depth", some(&a.depth)),
            ("steps", some(&a.steps)),
            ("lr", some(&a.lr)),
            ("lanczos_steps", some(&a.lanczos_steps)),
            ("mc_samples", some(&a.mc_samples)),
            ("pac_bayes", some(&a.pac_bayes)),
        ],
    )?;
    with_run("measures", &p, true, |run, seed, _| {
        let seed = seed.unwrap_or_default();
        let kind: String = p.get("dataset", "spirals".to_string())?;
        let n = p.get("n", 1000usize)?;
        let train_set = dataset(&kind, n, derive_seed(seed, &[0]))?;
        let test_set = dataset(&kind, n, derive_seed(seed, &[1]))?;
        let (spec, params) = match p.opt::<String>("checkpoint")? {
            Some(path) => {
                let (header, params) = load_checkpoint(Path::new(&path))?;
                (header.spec, params)
            }
            None => {
                let width = p.get("width", 20usize)?;
                let depth = p.get("depth", 3usize)?;
                let activation = p.get::<String>("activation", "elu".into())?.parse::<Activation>()?;
                let spec = MlpSpec::new(2, 1, vec![width; depth], activation, true)?;
                let tc = train_config(&p, 4000, derive_seed(seed, &[2]))?;
                let fit = train(&spec, &init_params(&spec, derive_seed(seed, &[3])), &train_set, &tc)?;
                let header = CheckpointHeader { spec: spec.clone(), seed, steps: tc.steps, param_count: spec.param_count() };
                let mut bytes = Vec::new();
                crate::nn::write_checkpoint(&mut bytes, &header, &fit.params)?;
                run.outputs.push(experiments::output::write_artifact(&run.dir, "model.ckpt", &bytes)?);
                (spec, fit.params)
            }
        };
        let mut opts = measure_options(&p, n)?;
        opts.sigma.seed = derive_seed(seed, &[4]);
        opts.lanczos.seed = derive_seed(seed, &[5]);
        let report = measure_model(&kind, &spec, &params, &train_set, &test_set, &opts)?;
        run.csv("measures.csv", &report_table(&[report]))
    })
}

fn correlate(a: CorrelateArgs) -> CliResult<PathBuf> {
    let p = Params::resolve(
        &a.common,
        vec![("input", a.input.as_ref().map(|c| c.display().to_string())), ("cutoff", some(&a.cutoff))],
    )?;
    with_run("correlate", &p, false, |run, _, _| {
        let input: String = p.opt("input")?.ok_or_else(|| CliError::Usage("missing required flag --input".into()))?;
        let cutoff = p.get("cutoff", 0.1)?;
        let mut reader = csv::Reader::from_path(&input)
            .map_err(|e| CliError::Usage(format!("cannot read {input}: {e}")))?;
        let mut reports = Vec::new();
        for rec in reader.deserialize::<MeasureReport>() {
            reports.push(rec.map_err(|e| CliError::Usage(format!("{input}: {e}")))?);
        }
        let table = correlation_table(&reports, &MeasureField::MEASURES, &MeasureField::TARGETS, cutoff);
        let mut t = CsvTable::new(&["measure", "target", "pearson", "models", "note"]);
        for e in table {
            t.push(vec![
                e.measure,
                e.target,
                e.pearson.map(fmt_f64).unwrap_or_default(),
                e.models.to_string(),
                e.note.unwrap_or_default(),
            ]);
        }
        run.csv("correlation.csv", &t)
    })
}
