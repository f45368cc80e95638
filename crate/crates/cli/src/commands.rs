//! Command implementations. Every command is idempotent over an unchanged
//! workdir and config, and all randomness flows from the configured seed.

use std::path::{Path, PathBuf};

use epiforecast::domain::{EpiSeries, RegionSet};
use epiforecast::estimator::{self, load_checkpoint, save_checkpoint, ModelState};
use epiforecast::evaluation::{self, write_plot_csv};
use epiforecast::ingest::{self, IngestSummary};
use epiforecast::mobility::{self, MobilityConfig};
use epiforecast::ndarray::Array2;
use epiforecast::reproduction;
use epiforecast::sir::{ParamGrid, ParamTrack};
use serde::Serialize;

use crate::config::RunConfig;

pub const SERIES_FILE: &str = "series.csv";
pub const POPULATIONS_FILE: &str = "populations.csv";
pub const DISTANCES_FILE: &str = "distances.csv";
pub const INGEST_SUMMARY_FILE: &str = "ingest_summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOSS_HISTORY_FILE: &str = "loss_history.csv";
pub const EVAL_REPORT_JSON: &str = "eval_report.json";
pub const EVAL_REPORT_CSV: &str = "eval_report.csv";
pub const EVAL_PLOT_CSV: &str = "eval_plot_data.csv";
pub const R0_TRACK_FILE: &str = "r0_track.csv";
pub const R0_META_FILE: &str = "r0_meta.json";

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, missing inputs, or malformed data: exit status 2.
    Usage(String),
    /// Everything else: exit status 1.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Internal(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<epiforecast::Error> for CliError {
    fn from(err: epiforecast::Error) -> Self {
        match err {
            epiforecast::Error::NonConvergence { .. } => CliError::Internal(format!("{err}")),
            other => CliError::Usage(format!("{other}")),
        }
    }
}

pub struct Context {
    /// Raw parsed config, echoed into artifacts.
    pub config: RunConfig,
    config_dir: PathBuf,
    workdir: PathBuf,
}

impl Context {
    /// Workdir precedence: `--workdir` flag, then `EPIFORECAST_WORKDIR`,
    /// then the config value. Relative paths resolve against the config
    /// file's directory.
    pub fn new(config_path: &Path, workdir_flag: Option<PathBuf>) -> Result<Self, CliError> {
        let config = RunConfig::load(config_path).map_err(CliError::Usage)?;
        let config_dir = config_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let workdir_raw = workdir_flag
            .or_else(|| std::env::var_os("EPIFORECAST_WORKDIR").map(PathBuf::from))
            .unwrap_or_else(|| config.paths.workdir.clone());
        let workdir = if workdir_raw.is_relative() {
            config_dir.join(workdir_raw)
        } else {
            workdir_raw
        };
        Ok(Context {
            config,
            config_dir,
            workdir,
        })
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_relative() {
            self.config_dir.join(path)
        } else {
            path.to_path_buf()
        }
    }

    pub fn workdir_file(&self, name: &str) -> PathBuf {
        self.workdir.join(name)
    }

    fn require_input(&self, path: &Path, what: &str) -> Result<PathBuf, CliError> {
        let resolved = self.resolve(path);
        if !resolved.is_file() {
            return Err(CliError::Usage(format!(
                "missing {what} file: {}",
                resolved.display()
            )));
        }
        Ok(resolved)
    }

    fn require_workdir_file(&self, name: &str, hint: &str) -> Result<PathBuf, CliError> {
        let path = self.workdir_file(name);
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "missing {} (run `{hint}` first)",
                path.display()
            )));
        }
        Ok(path)
    }

    fn load_workdir_data(&self) -> Result<(RegionSet, EpiSeries), CliError> {
        let pop = self.require_workdir_file(POPULATIONS_FILE, "epiforecast ingest")?;
        let dist = self.require_workdir_file(DISTANCES_FILE, "epiforecast ingest")?;
        let series_path = self.require_workdir_file(SERIES_FILE, "epiforecast ingest")?;
        let regions = RegionSet::from_csv_files(&pop, &dist)?;
        let (names, series) = EpiSeries::read_csv(&series_path)?;
        if names != regions.names() {
            return Err(CliError::Usage(format!(
                "{} and {} disagree on region order",
                SERIES_FILE, POPULATIONS_FILE
            )));
        }
        Ok((regions, series))
    }

    fn mobility_config(&self, regions: &RegionSet) -> Result<MobilityConfig, CliError> {
        Ok(MobilityConfig::new(
            self.config.mobility.alpha,
            self.config.mobility.d,
            self.config.mobility.flight_coefficient,
            regions.total_population(),
        )?)
    }

    fn load_model(&self, checkpoint: Option<PathBuf>) -> Result<ModelState, CliError> {
        let path = match checkpoint {
            Some(p) => self.resolve(&p),
            None => self.require_workdir_file(CHECKPOINT_FILE, "epiforecast train")?,
        };
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "missing checkpoint file: {}",
                path.display()
            )));
        }
        Ok(load_checkpoint(&path)?)
    }

    fn ensure_workdir(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.workdir).map_err(|e| {
            CliError::Internal(format!("cannot create {}: {e}", self.workdir.display()))
        })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Internal(format!("serialization failed: {e}")))?;
    std::fs::write(path, json)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

pub fn cmd_validate_config(ctx: &Context) -> Result<(), CliError> {
    ctx.config.train.validate()?;
    if ctx.config.evaluation.horizons.is_empty()
        || ctx.config.evaluation.horizons.iter().any(|h| *h == 0 || *h > 28)
    {
        return Err(CliError::Usage(
            "evaluation.horizons must be non-empty with values in 1..=28".to_string(),
        ));
    }
    let populations = ctx.require_input(&ctx.config.paths.populations, "population")?;
    let distances = ctx.require_input(&ctx.config.paths.distances, "distance")?;
    ctx.require_input(&ctx.config.paths.cases, "case")?;
    let regions = RegionSet::from_csv_files(&populations, &distances)?;
    let mobility = ctx.mobility_config(&regions)?;
    let report = mobility::validate_limiting_case(&mobility, &regions);
    println!(
        "config ok: {} regions, total population {}",
        regions.len(),
        regions.total_population()
    );
    println!(
        "mobility consistency: alpha_nn*P = {} (residual {:e}) -> {}",
        report.alpha_nn_times_p,
        report.residual,
        if report.passed { "pass" } else { "FAIL" }
    );
    if !report.passed {
        return Err(CliError::Internal(
            "mobility consistency constraint violated".to_string(),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct IngestArtifact<'a> {
    summary: &'a IngestSummary,
    config_echo: &'a RunConfig,
}

pub fn cmd_ingest(
    ctx: &Context,
    gamma0: Option<f64>,
    smoothing: Option<bool>,
) -> Result<(), CliError> {
    let cases = ctx.require_input(&ctx.config.paths.cases, "case")?;
    let populations = ctx.require_input(&ctx.config.paths.populations, "population")?;
    let distances = ctx.require_input(&ctx.config.paths.distances, "distance")?;

    let mut ingest_config = ctx.config.ingest.clone();
    if let Some(g) = gamma0 {
        ingest_config.gamma0 = g;
    }
    if let Some(s) = smoothing {
        ingest_config.smoothing = s;
    }

    let regions = RegionSet::from_csv_files(&populations, &distances)?;
    let (series, summary) = ingest::ingest(&cases, &regions, &ingest_config)?;
    series.validate_conservation(&regions, 1e-6)?;

    ctx.ensure_workdir()?;
    series.write_csv(&ctx.workdir_file(SERIES_FILE), regions.names())?;
    regions.write_csv_files(
        &ctx.workdir_file(POPULATIONS_FILE),
        &ctx.workdir_file(DISTANCES_FILE),
    )?;
    write_json(
        &ctx.workdir_file(INGEST_SUMMARY_FILE),
        &IngestArtifact {
            summary: &summary,
            config_echo: &ctx.config,
        },
    )?;
    println!(
        "ingested {} regions over days {}..={} ({} negative increments clamped)",
        summary.regions, summary.first_day, summary.last_day, summary.clamped_negatives
    );
    Ok(())
}

pub fn cmd_train(
    ctx: &Context,
    epochs: Option<usize>,
    seed: Option<u64>,
    learning_rate: Option<f64>,
) -> Result<(), CliError> {
    let (regions, series) = ctx.load_workdir_data()?;
    let mut train_config = ctx.config.train.clone();
    if let Some(e) = epochs {
        train_config.epochs = e;
    }
    if let Some(s) = seed {
        train_config.seed = s;
    }
    if let Some(lr) = learning_rate {
        train_config.learning_rate = lr;
    }
    let mobility = ctx.mobility_config(&regions)?;
    let (model, history) = estimator::train(&series, &regions, &mobility, &train_config)?;
    ctx.ensure_workdir()?;
    save_checkpoint(&model, &ctx.workdir_file(CHECKPOINT_FILE))?;
    estimator::write_loss_history(&ctx.workdir_file(LOSS_HISTORY_FILE), &history)?;
    let last = history.last().expect("training ran at least one epoch");
    println!(
        "trained {} epochs: final train MAE {}, final val MAE {}",
        history.len(),
        last.train_mae,
        last.val_mae
    );
    Ok(())
}

#[derive(Serialize)]
struct ForecastMeta<'a> {
    horizon: usize,
    seed: u64,
    config_echo: &'a RunConfig,
}

pub fn cmd_forecast(
    ctx: &Context,
    horizon: Option<usize>,
    checkpoint: Option<PathBuf>,
) -> Result<(), CliError> {
    let (regions, series) = ctx.load_workdir_data()?;
    let model = ctx.load_model(checkpoint)?;
    let horizon = horizon.unwrap_or(model.config.horizon);
    let (predicted, track) = estimator::forecast(&model, &series, &regions, horizon)?;

    ctx.ensure_workdir()?;
    let mut out = String::from("region,day,predicted_new_cases,beta,gamma\n");
    for r in 0..regions.len() {
        for t in 0..predicted.n_days() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                regions.names()[r],
                predicted.dates()[t],
                predicted.new_cases()[(r, t)],
                track.beta()[(r, t)],
                track.gamma()[(r, t)],
            ));
        }
    }
    let csv_path = ctx.workdir_file(&format!("forecast_h{horizon}.csv"));
    std::fs::write(&csv_path, out)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", csv_path.display())))?;
    write_json(
        &ctx.workdir_file(&format!("forecast_h{horizon}_meta.json")),
        &ForecastMeta {
            horizon,
            seed: model.seed,
            config_echo: &ctx.config,
        },
    )?;
    println!(
        "forecast horizon {horizon}: {} regions x {} days -> {}",
        regions.len(),
        predicted.n_days(),
        csv_path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalArtifact<'a> {
    config_echo: &'a RunConfig,
    report: &'a evaluation::EvalReport,
}

pub fn cmd_evaluate(ctx: &Context, checkpoint: Option<PathBuf>) -> Result<(), CliError> {
    let (regions, series) = ctx.load_workdir_data()?;
    let model = ctx.load_model(checkpoint)?;
    let horizons = &ctx.config.evaluation.horizons;
    let grid = ParamGrid::default_grid();
    let (report, plot_rows) = evaluation::evaluate(&model, &series, &regions, horizons, &grid)?;

    ctx.ensure_workdir()?;
    write_json(
        &ctx.workdir_file(EVAL_REPORT_JSON),
        &EvalArtifact {
            config_echo: &ctx.config,
            report: &report,
        },
    )?;
    report.write_csv(&ctx.workdir_file(EVAL_REPORT_CSV))?;
    write_plot_csv(&ctx.workdir_file(EVAL_PLOT_CSV), &plot_rows)?;
    for national in &report.national {
        println!(
            "horizon {}: model MAE {}, baseline MAE {} (beta {}, gamma {})",
            national.horizon,
            national.model_mae,
            national.baseline_mae,
            national.baseline_beta,
            national.baseline_gamma
        );
    }
    if let Some(r) = report.correlation {
        println!("fit vs log10(population) correlation: {r}");
    }
    Ok(())
}

#[derive(Serialize)]
struct R0Meta<'a> {
    smoothed: bool,
    seed: u64,
    config_echo: &'a RunConfig,
}

pub fn cmd_r0(ctx: &Context, smooth: bool, checkpoint: Option<PathBuf>) -> Result<(), CliError> {
    let (regions, series) = ctx.load_workdir_data()?;
    let model = ctx.load_model(checkpoint)?;
    let t_in = model.config.window;
    if series.n_days() < t_in {
        return Err(CliError::Usage(format!(
            "series has {} days, the model window needs {}",
            series.n_days(),
            t_in
        )));
    }
    let n = regions.len();
    let n_windows = series.n_days() - t_in + 1;
    let mut beta = Array2::zeros((n, n_windows));
    let mut gamma = Array2::zeros((n, n_windows));
    let mut susceptible = Array2::zeros((n, n_windows));
    for w in 0..n_windows {
        let window = series.slice_days(w, t_in)?;
        let track = estimator::forward(&model, &window, &regions)?;
        let end = w + t_in - 1;
        for r in 0..n {
            beta[(r, w)] = track.beta()[(r, 0)];
            gamma[(r, w)] = track.gamma()[(r, 0)];
            susceptible[(r, w)] = series.susceptible()[(r, end)];
        }
    }
    let track = ParamTrack::new(beta, gamma)?;
    let interaction = model.interaction_matrix(&regions)?;
    let first_day = series.dates()[t_in - 1];
    let mut r0 = reproduction::r0_track(&track, &interaction, &regions, &susceptible, first_day)?;
    if smooth {
        r0 = r0.smoothed();
    }
    ctx.ensure_workdir()?;
    r0.write_csv(&ctx.workdir_file(R0_TRACK_FILE))?;
    write_json(
        &ctx.workdir_file(R0_META_FILE),
        &R0Meta {
            smoothed: smooth,
            seed: model.seed,
            config_echo: &ctx.config,
        },
    )?;
    println!(
        "r0 track over days {}..={} -> {}",
        r0.days.first().unwrap(),
        r0.days.last().unwrap(),
        ctx.workdir_file(R0_TRACK_FILE).display()
    );
    Ok(())
}
