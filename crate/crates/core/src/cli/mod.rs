//! Command-line orchestration: `excite`, `train`, `eval` and `report`.

pub mod config;
pub mod format;
pub mod io;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::control::{self, Axis, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricsReport};
use crate::narx::{self, init_weights_with, NarxModel, Prediction};
use crate::train::{self, Segment};
use config::{parse_config, AxisSelection, RunConfig};
use format::{sig17, sig9};

#[derive(Debug, Parser)]
#[command(name = "narx-sysid", version, about = "NARX identification of quadrotor attitude-rate dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalArgs,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Experiment file (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,
    /// Run bundle directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides the config's `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel axis experiments for `axis = all`.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the closed-loop PRBS experiment and write dataset.csv.
    Excite,
    /// Fit a NARX model to a dataset.
    Train,
    /// Series-parallel and free-run metrics of a model on a dataset.
    Eval,
    /// SVG plots for a complete run bundle.
    Report,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Excite => {
            for p in cmd_excite(&load_config(g)?, g.out.as_deref(), g.jobs)? {
                println!("{}", p.display());
            }
            Ok(())
        }
        Command::Train => {
            let cfg = load_config(g)?;
            let out = g.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
            let dataset = g.dataset.clone().unwrap_or_else(|| out.join("dataset.csv"));
            let summary = cmd_train(&cfg, &dataset, &out)?;
            println!("best_epoch={} best_val_mse={}", summary.best_epoch, sig9(summary.best_val_mse));
            Ok(())
        }
        Command::Eval => {
            let out = bundle_dir(g);
            let model = g.model.clone().unwrap_or_else(|| out.join("model.txt"));
            let dataset = g.dataset.clone().unwrap_or_else(|| out.join("dataset.csv"));
            let ev = cmd_eval(&model, &dataset, &out)?;
            print!("{}", ev.metrics_text());
            Ok(())
        }
        Command::Report => {
            let written = cmd_report(&bundle_dir(g))?;
            for p in written {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn bundle_dir(g: &GlobalArgs) -> PathBuf {
    if let Some(out) = &g.out {
        return out.clone();
    }
    match g.model.as_deref().and_then(Path::parent) {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("run"),
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let path = g.config.as_deref().ok_or_else(|| Error::Argument("--config is required".into()))?;
    parse_config(&io::read_text(path)?, g.seed)
}

/// Run the experiment(s) and write `dataset.csv` bundles. With `axis = all`
/// each axis gets its own subdirectory.
pub fn cmd_excite(cfg: &RunConfig, out: Option<&Path>, jobs: usize) -> Result<Vec<PathBuf>> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.clone());
    match cfg.axes {
        AxisSelection::One(axis) => Ok(vec![excite_axis(cfg, axis, &out)?]),
        AxisSelection::All => {
            let jobs = jobs.clamp(1, Axis::ALL.len());
            let mut results: Vec<Option<Result<PathBuf>>> = (0..Axis::ALL.len()).map(|_| None).collect();
            for chunk in Axis::ALL.chunks(jobs) {
                std::thread::scope(|s| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .map(|&axis| {
                            let dir = out.join(axis.as_str());
                            (axis, s.spawn(move || excite_axis(cfg, axis, &dir)))
                        })
                        .collect();
                    for (axis, h) in handles {
                        let r = h.join().unwrap_or_else(|_| Err(Error::Simulation(format!("{axis} worker panicked"))));
                        results[axis.index()] = Some(r);
                    }
                });
            }
            results.into_iter().map(|r| r.expect("every axis ran")).collect()
        }
    }
}

fn excite_axis(cfg: &RunConfig, axis: Axis, dir: &Path) -> Result<PathBuf> {
    let exp = cfg.experiment_for(axis);
    exp.validate()?;
    control::dry_run(&exp)?;
    let data = control::run_experiment(&exp)?;
    fs::create_dir_all(dir)?;
    let csv = dir.join("dataset.csv");
    io::write_dataset(&csv, &data, exp.noise.seed, &cfg.digest)?;
    io::update_manifest(
        dir,
        &[("config_digest", cfg.digest.clone()), ("dataset_sha256", io::file_digest(&csv)?)],
    )?;
    Ok(csv)
}

/// Predictions and metrics of one model on one dataset, both modes, both
/// segments. Free-run (P) figures are `None` when the simulation diverges.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub est: Segment,
    pub val: Segment,
    pub sp_est: Prediction,
    pub sp_val: Prediction,
    pub p_est: Option<Prediction>,
    pub p_val: Option<Prediction>,
    pub sp: MetricsReport,
    pub p: Option<MetricsReport>,
}

fn free_run(model: &NarxModel, seg: &Segment) -> Result<Option<Prediction>> {
    let window = model.delays().window();
    match narx::simulate_p(model, &seg.u, &seg.y.samples()[..window]) {
        Ok(sim) => Ok(Some(Prediction { offset: window, values: sim.samples()[window..].to_vec() })),
        Err(Error::Model(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn pairs<'a>(seg: &'a Segment, p: &'a Prediction) -> (&'a [f64], &'a [f64]) {
    (p.targets(seg.y.samples()), &p.values)
}

pub fn evaluate(model: &NarxModel, data: &Dataset) -> Result<Evaluation> {
    let (est, val) = train::split(data, model.delays())?;
    let sp_est = narx::predict_sp_record(model, est.u.samples(), est.y.samples())?;
    let sp_val = narx::predict_sp_record(model, val.u.samples(), val.y.samples())?;
    let n = model.n_params();
    let sp = MetricsReport::compute(pairs(&est, &sp_est), pairs(&val, &sp_val), n)?;
    let p_est = free_run(model, &est)?;
    let p_val = free_run(model, &val)?;
    let p = match (&p_est, &p_val) {
        (Some(a), Some(b)) => Some(MetricsReport::compute(pairs(&est, a), pairs(&val, b), n)?),
        _ => None,
    };
    Ok(Evaluation { est, val, sp_est, sp_val, p_est, p_val, sp, p })
}

impl Evaluation {
    /// Contents of `metrics.txt`.
    pub fn metrics_text(&self) -> String {
        let mut lines = self.sp.to_lines("sp.");
        match &self.p {
            Some(p) => lines.extend(p.to_lines("p.")),
            None => lines.push("p.status = diverged".into()),
        }
        lines.iter().map(|l| format!("{l}\n")).collect()
    }

    /// Per-sample predictions CSV over both segments.
    pub fn predictions_csv(&self, dt: f64) -> String {
        let mut out = String::from("k,t_s,segment,y,y_sp,y_p\n");
        for (name, seg, sp, p) in [
            ("est", &self.est, &self.sp_est, &self.p_est),
            ("val", &self.val, &self.sp_val, &self.p_val),
        ] {
            let y = sp.targets(seg.y.samples());
            for (i, (&yi, &si)) in y.iter().zip(&sp.values).enumerate() {
                let k = seg.start + sp.offset + i;
                let pi = p.as_ref().map_or("nan".to_string(), |p| sig9(p.values[i]));
                out.push_str(&format!("{k},{},{name},{},{},{pi}\n", sig9(k as f64 * dt), sig9(yi), sig9(si)));
            }
        }
        out
    }
}

/// What `train` prints and records besides the model.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub evaluation: Evaluation,
}

/// Fit the configured model to `dataset` and write `model.txt`,
/// `training_report.csv` and `training_summary.txt` into `out`.
pub fn cmd_train(cfg: &RunConfig, dataset: &Path, out: &Path) -> Result<TrainSummary> {
    let (data, _) = io::read_dataset(dataset)?;
    let spec = &cfg.model;
    let init = init_weights_with(spec.arch, spec.delays, spec.hidden_acts.clone(), cfg.seed)?;
    let mut opts = cfg.training.clone();
    opts.seed = cfg.seed;
    let (model, report) = train::fit(&init, &data, &opts)?;
    let evaluation = evaluate(&model, &data)?;

    fs::create_dir_all(out)?;
    let model_path = out.join("model.txt");
    fs::write(&model_path, model.to_text())?;
    fs::write(out.join("training_report.csv"), io::report_csv(&report))?;
    let mut summary = format!(
        "best_epoch = {}\nbest_val_mse = {}\nstop = {}\nepochs_run = {}\nwall_time_s = {}\nseed = {}\noptions_digest = {}\n",
        report.best_epoch,
        sig17(report.best_val_mse),
        report.stop.tag(),
        report.epochs.len() - 1,
        format::sig6(report.wall_time_s),
        report.seed,
        report.options_digest
    );
    summary.push_str(&evaluation.metrics_text());
    fs::write(out.join("training_summary.txt"), summary)?;
    io::update_manifest(
        out,
        &[("config_digest", cfg.digest.clone()), ("model_sha256", io::file_digest(&model_path)?)],
    )?;
    Ok(TrainSummary { best_epoch: report.best_epoch, best_val_mse: report.best_val_mse, evaluation })
}

pub fn load_model(path: &Path) -> Result<NarxModel> {
    NarxModel::from_text(&io::read_text(path)?)
}

fn check_compatible(model: &NarxModel, data: &Dataset) -> Result<()> {
    if let Some(tag) = model.data_tag {
        if tag.axis != data.axis {
            return Err(Error::Config(format!("model was fitted on {} data, dataset is {}", tag.axis, data.axis)));
        }
        if (tag.dt - data.dt()).abs() > 1e-12 * tag.dt.abs().max(1.0) {
            return Err(Error::Config(format!("model dt {} does not match dataset dt {}", tag.dt, data.dt())));
        }
    }
    Ok(())
}

/// Evaluate a saved model on a dataset, writing `metrics.txt` and
/// `predictions.csv` into `out`.
pub fn cmd_eval(model: &Path, dataset: &Path, out: &Path) -> Result<Evaluation> {
    let model = load_model(model)?;
    let (data, _) = io::read_dataset(dataset)?;
    check_compatible(&model, &data)?;
    let ev = evaluate(&model, &data)?;
    fs::create_dir_all(out)?;
    fs::write(out.join("metrics.txt"), ev.metrics_text())?;
    fs::write(out.join("predictions.csv"), ev.predictions_csv(data.dt()))?;
    Ok(ev)
}

pub const REPORT_FILES: [&str; 4] = ["overlay.svg", "training_curve.svg", "scatter.svg", "residual_acf.svg"];
const ACF_LAGS: usize = 50;

fn require(dir: &Path, name: &str) -> Result<PathBuf> {
    let p = dir.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact(p.display().to_string()))
    }
}

fn series(name: &str, color: &'static str, xs: Vec<f64>, ys: Vec<f64>, style: svg::Style) -> svg::Series {
    svg::Series { name: name.into(), color, xs, ys, style }
}

/// Text of the correlation annotation on the scatter plot.
pub fn r_annotation(r: f64) -> String {
    format!("R = {r:.6}")
}

/// Render the four SVG plots of a complete bundle into `dir`.
pub fn cmd_report(dir: &Path) -> Result<Vec<PathBuf>> {
    let csv = require(dir, "dataset.csv")?;
    require(dir, "dataset.meta")?;
    let model_path = require(dir, "model.txt")?;
    let report_path = require(dir, "training_report.csv")?;
    let metrics_path = require(dir, "metrics.txt")?;

    let (data, _) = io::read_dataset(&csv)?;
    let model = load_model(&model_path)?;
    check_compatible(&model, &data)?;
    let epochs = io::read_report(&report_path)?;
    io::parse_key_values(&io::read_text(&metrics_path)?, "metrics.txt")?;
    let ev = evaluate(&model, &data)?;
    let dt = data.dt();

    let time = |seg: &Segment, p: &Prediction| -> Vec<f64> {
        (0..p.len()).map(|i| (seg.start + p.offset + i) as f64 * dt).collect()
    };
    let overlay_panel = |title: &str, seg: &Segment, p: &Prediction, fit: f64| svg::Chart {
        title: title.into(),
        x_label: "time [s]".into(),
        y_label: format!("{} rate [rad/s]", data.axis),
        series: vec![
            series("measured", "#222", time(seg, p), p.targets(seg.y.samples()).to_vec(), svg::Style::Line),
            series("one-step prediction", "#d62", time(seg, p), p.values.clone(), svg::Style::Line),
        ],
        notes: vec![format!("fit = {}%", format::sig(fit, 5))],
        ..Default::default()
    };
    let overlay = svg::render(&[
        overlay_panel("Estimation segment", &ev.est, &ev.sp_est, ev.sp.fit_percent_est),
        overlay_panel("Validation segment", &ev.val, &ev.sp_val, ev.sp.fit_percent_val),
    ]);

    let best = epochs
        .iter()
        .fold(None::<&train::EpochRecord>, |b, r| match b {
            Some(b) if b.val_mse <= r.val_mse => Some(b),
            _ => Some(r),
        })
        .ok_or_else(|| Error::Parse { file: report_path.display().to_string(), row: 2, msg: "no epochs".into() })?;
    let ep: Vec<f64> = epochs.iter().map(|r| r.epoch as f64).collect();
    let curve = svg::render(&[svg::Chart {
        title: "Training performance".into(),
        x_label: "epoch".into(),
        y_label: "MSE (normalized, log scale)".into(),
        series: vec![
            series("train", "#1f77b4", ep.clone(), epochs.iter().map(|r| r.train_mse).collect(), svg::Style::Line),
            series("validation", "#2ca02c", ep, epochs.iter().map(|r| r.val_mse).collect(), svg::Style::Line),
        ],
        v_lines: vec![(best.epoch as f64, format!("best epoch {}: {}", best.epoch, format::sig6(best.val_mse)))],
        log_y: true,
        ..Default::default()
    }]);

    let (targets, preds) = pairs(&ev.val, &ev.sp_val);
    let (slope, intercept) = metrics::least_squares_line(targets, preds)?;
    let lo = targets.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scatter = svg::render(&[svg::Chart {
        title: "Validation predictions vs targets".into(),
        x_label: "target".into(),
        y_label: "prediction".into(),
        series: vec![
            series("samples", "#1f77b4", targets.to_vec(), preds.to_vec(), svg::Style::Points),
            series(
                "least-squares fit",
                "#d62",
                vec![lo, hi],
                vec![slope * lo + intercept, slope * hi + intercept],
                svg::Style::Line,
            ),
        ],
        notes: vec![r_annotation(ev.sp.r_val)],
        ..Default::default()
    }]);

    let residuals: Vec<f64> = targets.iter().zip(preds).map(|(t, p)| t - p).collect();
    let acf = metrics::residual_autocorr(&residuals, ACF_LAGS.min(residuals.len() - 1))?;
    let acf_svg = svg::render(&[svg::Chart {
        title: "Validation residual autocorrelation".into(),
        x_label: "lag".into(),
        y_label: "autocorrelation".into(),
        series: vec![series(
            "residual",
            "#1f77b4",
            (0..acf.lags.len()).map(|l| l as f64).collect(),
            acf.lags.clone(),
            svg::Style::Stems,
        )],
        h_lines: vec![acf.band, -acf.band],
        notes: vec![format!("{}/{} lags inside 95% band", acf.inside_band(), acf.lags.len() - 1)],
        ..Default::default()
    }]);

    let mut written = Vec::new();
    for (name, body) in REPORT_FILES.iter().zip([overlay, curve, scatter, acf_svg]) {
        let p = dir.join(name);
        fs::write(&p, body)?;
        written.push(p);
    }
    Ok(written)
}
