//! Orchestration of the full backtest grid and its output files.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::plot::emit_plot_script;
use super::synthetic::{generate_synthetic_country, SyntheticTruth};
use super::tables::{summarize_strategy_winner, verdicts_to_text, ReportTable, StrategyVerdict};
use super::ReportError;
use crate::evaluation::{
    cell_seed, expanding_window_backtest, write_cells_csv, BacktestCell, Metric, Strategy,
};
use crate::hmd::{
    aggregate_open_age, clean_rates, load_surface, AgeRange, Country, DataError, MortalitySurface,
    Sex,
};
use crate::models::ModelKind;

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub cells: Vec<BacktestCell>,
    pub tables: Vec<ReportTable>,
    /// Strategy comparisons per (metric, horizon); absent when the grid does
    /// not allow a comparison.
    pub verdicts: Vec<(Metric, usize, Vec<StrategyVerdict>)>,
    pub files: Vec<PathBuf>,
}

impl ExperimentOutcome {
    pub fn n_failed(&self) -> usize {
        self.cells.iter().filter(|c| c.failed()).count()
    }

    /// 0 when every cell succeeded, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.n_failed() > 0)
    }
}

/// Surface for one population on ages 0..100+, cleaned.
pub fn load_population(
    config: &ExperimentConfig,
    code: &str,
    sex: Sex,
) -> Result<MortalitySurface, ReportError> {
    let raw = if config.synthetic {
        let truth_seed = cell_seed(config.seed, code, sex.code(), "truth", "synthetic", 0);
        let data_seed = cell_seed(config.seed, code, sex.code(), "deaths", "synthetic", 0);
        let truth = SyntheticTruth::lee_carter(code, sex, truth_seed);
        let (surface, truth) = generate_synthetic_country(data_seed, &truth)?;
        let dir = config.output_dir.join("truth");
        std::fs::create_dir_all(&dir)?;
        let json = serde_json::to_string_pretty(&truth)
            .map_err(|e| ReportError::BadTruth(e.to_string()))?;
        std::fs::write(dir.join(format!("{code}_{}.json", sex.code())), json + "\n")?;
        match config.last_year(code) {
            Some(last) => surface.until_year(last)?,
            None => surface,
        }
    } else {
        let dir = config.resolve_data_dir().ok_or_else(|| {
            ReportError::MissingData(format!(
                "no data directory: set data_dir in the config or {}",
                super::config::DATA_DIR_ENV
            ))
        })?;
        let country = Country::lookup(code)
            .ok_or_else(|| ReportError::ConfigInvalid(format!("unknown country '{code}'")))?;
        let last = config.last_year(code);
        load_surface(&dir, country, sex, config.start_year, last).map_err(|e| match e {
            DataError::MissingFile(path) => ReportError::MissingData(path.display().to_string()),
            other => ReportError::Data(other),
        })?
    };
    let aggregated = aggregate_open_age(&raw, AgeRange::FULL.upper)?;
    Ok(clean_rates(&aggregated)?)
}

struct Task<'a> {
    surface: &'a MortalitySurface,
    model: ModelKind,
    strategy: Strategy,
}

fn failed_cells(task: &Task<'_>, holdout: usize, reason: String) -> Vec<BacktestCell> {
    (1..=holdout)
        .map(|h| BacktestCell {
            country: task.surface.country().to_string(),
            sex: task.surface.sex(),
            model: task.model,
            strategy: task.strategy,
            horizon: h,
            mape: f64::NAN,
            rmspe: f64::NAN,
            mean_interval_score: f64::NAN,
            n_origins: holdout - h + 1,
            failure: Some(reason.clone()),
        })
        .collect()
}

/// Run every backtest cell in the configured grid. Output order follows the
/// configuration (country, sex, model, strategy, horizon) regardless of
/// scheduling.
pub fn run_grid(
    config: &ExperimentConfig,
    surfaces: &[MortalitySurface],
    progress: &(dyn Fn(&str) + Sync),
) -> Vec<BacktestCell> {
    let tasks: Vec<Task<'_>> = surfaces
        .iter()
        .flat_map(|s| {
            config.models.iter().flat_map(move |&model| {
                config.strategies.iter().map(move |&strategy| Task {
                    surface: s,
                    model,
                    strategy,
                })
            })
        })
        .collect();
    let settings = config.backtest_settings();
    let total = tasks.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<Vec<BacktestCell>> = tasks
        .par_iter()
        .map(|t| {
            let spec = config.model_spec(t.model, t.strategy);
            let cells = expanding_window_backtest(t.surface, &spec, t.strategy, &settings)
                .unwrap_or_else(|e| failed_cells(t, settings.holdout, e.to_string()));
            let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
            let failed = cells.iter().filter(|c| c.failed()).count();
            progress(&format!(
                "[{n}/{total}] {} {} {} {}: {}",
                t.surface.country(),
                t.surface.sex(),
                t.model,
                t.strategy,
                if failed == 0 {
                    "ok".to_string()
                } else {
                    format!("{failed} failed cells")
                }
            ));
            cells
        })
        .collect();
    results.into_iter().flatten().collect()
}

fn write(path: PathBuf, text: &str, files: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    std::fs::write(&path, text)?;
    files.push(path);
    Ok(())
}

/// Write cells, tables, strategy verdicts and plot scripts into `dir`.
pub fn write_outputs(
    cells: Vec<BacktestCell>,
    holdout: usize,
    dir: &Path,
) -> Result<ExperimentOutcome, ReportError> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut csv = Vec::new();
    write_cells_csv(&cells, &mut csv)?;
    write(
        dir.join("cells.csv"),
        std::str::from_utf8(&csv).expect("CSV is UTF-8"),
        &mut files,
    )?;

    let mut horizons = vec![1, holdout];
    horizons.dedup();
    let mut tables = Vec::new();
    let mut verdicts = Vec::new();
    for &h in &horizons {
        for metric in Metric::ALL {
            let table = ReportTable::build(&cells, metric, h)?;
            write(
                dir.join(format!("table_{}.csv", table.file_stem())),
                &table.to_csv(),
                &mut files,
            )?;
            write(
                dir.join(format!("table_{}.txt", table.file_stem())),
                &table.to_text(),
                &mut files,
            )?;
            if let Ok(v) = summarize_strategy_winner(&cells, metric, h) {
                let text = verdicts_to_text(&v, metric, h);
                write(
                    dir.join(format!("strategy_{}.txt", table.file_stem())),
                    &text,
                    &mut files,
                )?;
                verdicts.push((metric, h, v));
            }
            tables.push(table);
        }
    }
    files.extend(emit_plot_script(&tables, dir)?);

    let failures: Vec<String> = cells
        .iter()
        .filter_map(|c| {
            c.failure.as_ref().map(|f| {
                format!(
                    "{} {} {} {} h={}: {f}",
                    c.country, c.sex, c.model, c.strategy, c.horizon
                )
            })
        })
        .collect();
    let failures_path = dir.join("failures.txt");
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path)?;
        }
    } else {
        write(failures_path, &(failures.join("\n") + "\n"), &mut files)?;
    }
    Ok(ExperimentOutcome {
        cells,
        tables,
        verdicts,
        files,
    })
}

/// Load every population, run the grid on a pool of `config.jobs` threads
/// and write all outputs to `config.output_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    progress: &(dyn Fn(&str) + Sync),
) -> Result<ExperimentOutcome, ReportError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| {
            ReportError::ConfigInvalid(format!("cannot start {} workers: {e}", config.jobs))
        })?;
    std::fs::create_dir_all(&config.output_dir)?;
    let populations: Vec<(&str, Sex)> = config
        .countries
        .iter()
        .flat_map(|c| config.sexes.iter().map(move |&s| (c.as_str(), s)))
        .collect();
    pool.install(|| {
        let surfaces = populations
            .par_iter()
            .map(|&(code, sex)| load_population(config, code, sex))
            .collect::<Result<Vec<_>, _>>()?;
        let cells = run_grid(config, &surfaces, progress);
        write_outputs(cells, config.holdout, &config.output_dir)
    })
}
