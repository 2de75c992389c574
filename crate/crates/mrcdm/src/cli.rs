//! Command-line front end. Every command validates its config before any
//! compute and writes a `manifest.json` next to its outputs.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mrcdm_core::metrics::compute_metrics;
use mrcdm_core::pipeline::{Forecaster, Progress};
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{Overrides, RunConfig};
use crate::data::{load_raw, synth_start, write_ett, Prepared};
use crate::error::{Error, Result};
use crate::harness::{
    ablation_jobs, evaluate_baseline, model_forecasts, multi_horizon, multi_seed, run_jobs, sweep_jobs, test_windows, train,
    Baseline, Method, RunRow,
};
use crate::plot::{forecast_plot, line_chart, Line};
use crate::report::{write_csv, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "mrcdm", version, about = "Multi-resolution conditional diffusion forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run config, or a manifest from an earlier run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long = "seq-len")]
    pub seq_len: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic ETT-format dataset (`--seed` sets the generator seed).
    Synth(Common),
    /// Train one model per seed and save checkpoints.
    Train(Common),
    /// Forecast one test window with a trained checkpoint.
    Forecast {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Index of the test window (stride = horizon).
        #[arg(long, default_value_t = 0)]
        window: usize,
    },
    /// Score models and baselines at every configured horizon.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Score this checkpoint instead of training.
        #[arg(long, conflicts_with_all = ["pred", "truth"])]
        checkpoint: Option<PathBuf>,
        /// Score a prediction file against a truth file (single-column CSVs).
        #[arg(long, requires = "truth")]
        pred: Option<PathBuf>,
        #[arg(long, requires = "pred")]
        truth: Option<PathBuf>,
    },
    /// Train every configured variant for every seed.
    Ablate(Common),
    /// Train the configured variant at every input length for every seed.
    Sweep(Common),
    /// Check the golden fixtures.
    VerifyFixtures {
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
    },
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            variant: self.variant.clone(),
            horizon: self.horizon,
            seq_len: self.seq_len,
            out: self.out.clone(),
            plot: self.plot,
        }
    }

    /// Defaults, then the config file, then flags; validated as a whole.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        c.apply(&self.overrides());
        c.validate()?;
        Ok(c)
    }
}

fn log(msg: impl AsRef<str>) {
    eprintln!("{}", msg.as_ref());
}

struct EpochLog<'a> {
    label: &'a str,
    epochs: usize,
}

impl Progress for EpochLog<'_> {
    fn epoch(&mut self, epoch: usize, loss: f64) {
        let e = epoch + 1;
        if e == 1 || e % 10 == 0 || e == self.epochs {
            log(format!("[{}] epoch {e}/{} loss {loss:.5}", self.label, self.epochs));
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

struct Run {
    cfg: RunConfig,
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    fn start(command: &str, cfg: RunConfig, dataset_id: &str) -> Result<Self> {
        create_dir(&cfg.out_dir)?;
        let manifest = RunManifest::new(command, &cfg, dataset_id);
        Ok(Self { cfg, manifest, started: Instant::now() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        write_csv(&self.path(name), rows)?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn text(&mut self, name: &str, text: &str) -> Result<()> {
        write_text(&self.path(name), text)?;
        self.manifest.outputs.push(name.into());
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.finish(self.started.elapsed());
        self.manifest.save(&self.cfg.out_dir)?;
        log(format!("wrote {}", self.cfg.out_dir.join("manifest.json").display()));
        Ok(())
    }
}

fn baseline_rows(cfg: &RunConfig, data: &Prepared, seq_len: usize, horizons: &[usize]) -> Result<Vec<RunRow>> {
    let mut rows = Vec::new();
    for name in &cfg.baselines {
        let method = Method::parse_baseline(name).ok_or_else(|| Error::config("baselines", format!("unknown baseline `{name}`")))?;
        let b = Baseline::fit(method, data)?;
        for &h in horizons {
            let r = evaluate_baseline(&b, data, seq_len, h, 0)?;
            rows.push(RunRow::new(method, 0, seq_len, h, &r));
        }
    }
    Ok(rows)
}

fn error_plot(rows: &[RunRow]) -> String {
    let mut methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    methods.sort();
    methods.dedup();
    let colors = ["#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"];
    let summary = multi_seed(rows);
    let lines: Vec<Line> = methods
        .iter()
        .enumerate()
        .map(|(i, m)| Line {
            label: m,
            color: colors[i % colors.len()],
            points: summary.iter().filter(|s| s.method == *m).map(|s| (s.horizon as f64, s.mse_mean)).collect(),
        })
        .collect();
    line_chart("MSE by horizon", "horizon", "MSE", &lines)
}

fn cmd_synth(common: &Common) -> Result<()> {
    let mut cfg = common.resolve()?;
    if let Some(s) = common.seed {
        cfg.data.synth.seed = s;
    }
    cfg.validate()?;
    if cfg.data.path.is_some() {
        return Err(Error::config("data.path", "synth writes a synthetic dataset; remove data.path"));
    }
    let (id, series) = load_raw(&cfg)?;
    let mut run = Run::start("synth", cfg, &id)?;
    let path = run.path("data.csv");
    write_ett(&path, synth_start(), &[run.cfg.data.feature.as_str()], &[&series])?;
    run.manifest.outputs.push("data.csv".into());
    log(format!("wrote {} ({} points, dataset {id})", path.display(), series.len()));
    run.finish()
}

fn cmd_train(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let variant = cfg.variant()?;
    let data = Prepared::load(&cfg)?;
    let mut run = Run::start("train", cfg, &data.id)?;
    run.manifest.variants = vec![variant.name().into()];
    for seed in run.cfg.seeds.clone() {
        let mc = run.cfg.model_config(variant, run.cfg.seq_len, seed);
        let label = format!("{variant} seed {seed}");
        let m = train(mc, &data, &mut EpochLog { label: &label, epochs: run.cfg.model.epochs })?;
        let name = format!("checkpoint_{variant}_seed{seed}.json");
        Checkpoint::capture(&m, &data.normalizer, &data.id).save(&run.path(&name))?;
        run.manifest.outputs.push(name);
        #[derive(Serialize)]
        struct Loss {
            epoch: usize,
            loss: f64,
        }
        let losses: Vec<Loss> = m.losses.iter().enumerate().map(|(i, &l)| Loss { epoch: i + 1, loss: l }).collect();
        run.csv(&format!("losses_{variant}_seed{seed}.csv"), &losses)?;
    }
    run.finish()
}

fn load_checkpoint(path: &Path, cfg: &RunConfig, data: &Prepared) -> Result<Forecaster> {
    let ck = Checkpoint::load(path)?;
    if ck.dataset_id != data.id {
        log(format!("note: checkpoint was trained on {}, scoring on {}", ck.dataset_id, data.id));
    }
    if ck.seq_len != cfg.seq_len {
        log(format!("note: using the checkpoint's seq_len {}", ck.seq_len));
    }
    ck.restore()
}

fn cmd_forecast(common: &Common, checkpoint: &Path, window: usize) -> Result<()> {
    let cfg = common.resolve()?;
    let data = Prepared::load(&cfg)?;
    let m = load_checkpoint(checkpoint, &cfg, &data)?;
    let ck_norm = Checkpoint::load(checkpoint)?.normalizer()?;
    let h = cfg.horizon;
    let windows = test_windows(&data, m.config.seq_len, h)?;
    let w = windows
        .get(window)
        .ok_or_else(|| Error::config("window", format!("test split has {} windows of horizon {h}", windows.len())))?
        .clone();
    let pred = model_forecasts(&m, std::slice::from_ref(&w), m.config.seed)?.remove(0);
    let mut run = Run::start("forecast", cfg, &data.id)?;
    run.manifest.variants = vec![m.config.variant.name().into()];
    #[derive(Serialize)]
    struct Row {
        step: usize,
        history: Option<f64>,
        truth: Option<f64>,
        forecast: Option<f64>,
    }
    let d = |v: f64| ck_norm.invert(v);
    let n = w.history.len();
    let mut rows: Vec<Row> = w.history.iter().enumerate().map(|(i, &v)| Row { step: i, history: Some(d(v)), truth: None, forecast: None }).collect();
    rows.extend(w.target.iter().zip(&pred).enumerate().map(|(i, (&t, &p))| Row { step: n + i, history: None, truth: Some(d(t)), forecast: Some(d(p)) }));
    run.csv("forecast.csv", &rows)?;
    let r = compute_metrics(&pred, &w.target)?;
    run.manifest.reports.push(RunRow::new(Method::Model(m.config.variant), m.config.seed, m.config.seq_len, h, &r));
    if run.cfg.plot {
        let den = |v: &[f64]| v.iter().map(|&x| d(x)).collect::<Vec<_>>();
        let svg = forecast_plot(&format!("{} window {window}", m.config.variant), &den(&w.history), &den(&w.target), &den(&pred));
        run.text("forecast.svg", &svg)?;
    }
    log(format!("window {window}: mse {:.4} mae {:.4}", r.mse, r.mae));
    run.finish()
}

/// A single-column CSV: the column named `value`, or else the last one.
fn read_column(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let header = r.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
    let col = header.iter().position(|h| h == "value").unwrap_or(header.len().saturating_sub(1));
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            let cell = rec.get(col).unwrap_or("").trim();
            cell.parse::<f64>().map_err(|_| Error::Data(format!("{}: `{cell}` is not a number", path.display())))
        })
        .collect()
}

fn cmd_evaluate(common: &Common, checkpoint: Option<&Path>, pred: Option<&Path>, truth: Option<&Path>) -> Result<()> {
    let cfg = common.resolve()?;
    if let (Some(p), Some(t)) = (pred, truth) {
        let (p, t) = (read_column(p)?, read_column(t)?);
        let r = compute_metrics(&p, &t)?;
        let mut run = Run::start("evaluate", cfg, "files")?;
        let row = RunRow { method: "pred_file".into(), seed: 0, seq_len: 0, horizon: t.len(), mse: r.mse, mae: r.mae, rmse: r.rmse, n_windows: 1 };
        run.manifest.reports.push(row.clone());
        run.csv("report.csv", &[row])?;
        return run.finish();
    }
    let data = Prepared::load(&cfg)?;
    let mut rows = Vec::new();
    let mut run = Run::start("evaluate", cfg, &data.id)?;
    let horizons = run.cfg.horizons.clone();
    let seq_len = match checkpoint {
        Some(p) => {
            let m = load_checkpoint(p, &run.cfg, &data)?;
            run.manifest.variants = vec![m.config.variant.name().into()];
            rows.extend(multi_horizon(&m, &data, &horizons, m.config.seed)?);
            m.config.seq_len
        }
        None => {
            let variant = run.cfg.variant()?;
            run.manifest.variants = vec![variant.name().into()];
            for seed in run.cfg.seeds.clone() {
                let label = format!("{variant} seed {seed}");
                let mc = run.cfg.model_config(variant, run.cfg.seq_len, seed);
                let m = train(mc, &data, &mut EpochLog { label: &label, epochs: run.cfg.model.epochs })?;
                rows.extend(multi_horizon(&m, &data, &horizons, seed)?);
            }
            run.cfg.seq_len
        }
    };
    rows.extend(baseline_rows(&run.cfg, &data, seq_len, &horizons)?);
    for r in &rows {
        log(format!("{:>22} seed {:>3} h {:>3}: mse {:.4} mae {:.4}", r.method, r.seed, r.horizon, r.mse, r.mae));
    }
    run.csv("report.csv", &rows)?;
    run.csv("summary.csv", &multi_seed(&rows))?;
    if run.cfg.plot {
        run.text("errors.svg", &error_plot(&rows))?;
    }
    run.manifest.reports = rows;
    run.finish()
}

fn cmd_grid(common: &Common, sweep: bool) -> Result<()> {
    let cfg = common.resolve()?;
    let data = Prepared::load(&cfg)?;
    let name = if sweep { "sweep" } else { "ablate" };
    let mut run = Run::start(name, cfg, &data.id)?;
    let c = &run.cfg;
    let base = c.model_config(c.variant()?, c.seq_len, c.seeds[0]);
    let jobs = if sweep {
        run.manifest.variants = vec![base.variant.name().into()];
        sweep_jobs(&base, &c.seq_lens, &c.seeds, c.horizon)
    } else {
        let vs = c.variant_list()?;
        run.manifest.variants = vs.iter().map(|v| v.name().to_string()).collect();
        ablation_jobs(&base, &vs, &c.seeds, c.horizon)
    };
    log(format!("{name}: {} training runs", jobs.len()));
    let rows = run_jobs(&jobs, &data, &|_, r| {
        log(format!("{:>22} seed {:>3} seq_len {:>3}: mse {:.4} mae {:.4}", r.method, r.seed, r.seq_len, r.mse, r.mae))
    })?;
    run.csv(&format!("{name}.csv"), &rows)?;
    let mut summary = multi_seed(&rows);
    let seq_lens = if sweep { run.cfg.seq_lens.clone() } else { vec![run.cfg.seq_len] };
    let mut baselines = Vec::new();
    for l in seq_lens {
        baselines.extend(baseline_rows(&run.cfg, &data, l, &[run.cfg.horizon])?);
    }
    summary.extend(multi_seed(&baselines));
    run.csv("baselines.csv", &baselines)?;
    run.csv("summary.csv", &summary)?;
    run.manifest.reports = rows;
    run.finish()
}

fn cmd_verify(dir: &Path) -> Result<()> {
    let results = crate::fixtures::verify_fixtures(dir)?;
    let mut failed = 0;
    for r in &results {
        println!(
            "{} {:<12} max error {:.3e} (tolerance {:.0e}) {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.max_error,
            r.tolerance,
            r.detail
        );
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(Error::Numeric(format!("{failed} of {} fixtures failed", results.len())));
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Synth(c) => cmd_synth(c),
        Command::Train(c) => cmd_train(c),
        Command::Forecast { common, checkpoint, window } => cmd_forecast(common, checkpoint, *window),
        Command::Evaluate { common, checkpoint, pred, truth } => cmd_evaluate(common, checkpoint.as_deref(), pred.as_deref(), truth.as_deref()),
        Command::Ablate(c) => cmd_grid(c, false),
        Command::Sweep(c) => cmd_grid(c, true),
        Command::VerifyFixtures { dir } => cmd_verify(dir),
    }
}

/// Cap rayon's pool from `MRCDM_THREADS`.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MRCDM_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| Error::config("MRCDM_THREADS", format!("`{v}` is not a thread count")))?;
        if n == 0 {
            return Err(Error::config("MRCDM_THREADS", "must be positive"));
        }
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}
