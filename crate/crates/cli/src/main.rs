use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mortcast_core::evaluation::{read_cells_csv, Metric, Strategy};
use mortcast_core::forecast::{make_forecast, write_forecast_csv};
use mortcast_core::hmd::{truncate_ages, Country, Sex};
use mortcast_core::models::{fit, write_fitted_csv, ModelKind};
use mortcast_core::report::{
    load_population, run_experiment, summarize_strategy_winner, verdicts_to_text, ExperimentConfig,
    ReportTable,
};

#[derive(Parser)]
#[command(
    name = "mortcast",
    version,
    about = "Backtests of stochastic mortality models at retiree ages"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the expanding-window backtest grid and write cells, tables and plot scripts.
    Backtest(BacktestArgs),
    /// Fit one model to one population and write its parameters.
    Fit(FitArgs),
    /// Tabulate an existing cells CSV.
    Report(ReportArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (flat key = value file).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Simulate populations instead of reading data files.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory holding the data files; overrides the config and MORTCAST_DATA_DIR.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        if self.synthetic {
            config.synthetic = true;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(dir) = &self.data_dir {
            config.data_dir = Some(dir.clone());
        }
        Ok(config)
    }
}

#[derive(Args)]
struct BacktestArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated country codes, e.g. AUS,SWE.
    #[arg(long)]
    countries: Option<String>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Suppress per-task progress lines.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// lc-poisson, lc-gaussian, lc2-gaussian, apc or plat.
    #[arg(long)]
    model: ModelKind,
    #[arg(long)]
    country: String,
    /// F or M.
    #[arg(long)]
    sex: Sex,
    /// full (ages 0..100+) or partial (ages 60..89).
    #[arg(long, default_value = "full")]
    strategy: Strategy,
    /// Also simulate a forecast this many years ahead.
    #[arg(long)]
    horizon: Option<usize>,
    /// Where the fitted parameters (and forecast) are written.
    #[arg(long, default_value = ".")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Cells CSV written by `backtest`.
    #[arg(long)]
    from: PathBuf,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    /// mape, rmspe or mean_interval_score.
    #[arg(long, default_value = "mape")]
    metric: Metric,
    /// Print the table as CSV instead of aligned text.
    #[arg(long)]
    csv: bool,
}

fn backtest(args: BacktestArgs) -> Result<i32> {
    let mut config = args.common.load()?;
    if let Some(list) = &args.countries {
        config.set("countries", list)?;
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    if let Some(dir) = args.output_dir {
        config.output_dir = dir;
    }
    config.validate()?;
    let quiet = args.quiet;
    let outcome = run_experiment(&config, &|line| {
        if !quiet {
            eprintln!("{line}");
        }
    })?;
    for (metric, h, verdicts) in &outcome.verdicts {
        if *h == 1 && *metric == Metric::Mape {
            print!("{}", verdicts_to_text(verdicts, *metric, *h));
        }
    }
    eprintln!(
        "{} cells ({} failed), {} files in {}",
        outcome.cells.len(),
        outcome.n_failed(),
        outcome.files.len(),
        config.output_dir.display()
    );
    Ok(outcome.exit_code())
}

fn fit_one(args: FitArgs) -> Result<i32> {
    let config = args.common.load()?;
    let code = match Country::lookup(&args.country) {
        Some(c) => c.code.to_string(),
        None if config.synthetic => args.country.to_ascii_uppercase(),
        None => bail!("unknown country code '{}'", args.country),
    };
    let surface = load_population(&config, &code, args.sex)?;
    let surface = truncate_ages(&surface, args.strategy.fit_range())?;
    let spec = config.model_spec(args.model, args.strategy);
    let fitted = fit(&spec, &surface)?;
    eprintln!(
        "{} {} {} {}: {} ages x {} years ({}..{}), objective {:.6}, {} iterations{}",
        args.model.label(),
        code,
        args.sex,
        args.strategy.label(),
        fitted.n_ages(),
        fitted.n_years(),
        fitted.years[0],
        fitted.years[fitted.n_years() - 1],
        fitted.objective(),
        fitted.iterations(),
        if fitted.converged {
            ""
        } else {
            " (not converged)"
        }
    );
    std::fs::create_dir_all(&args.output_dir)?;
    let stem = format!(
        "{}_{}_{}_{}",
        args.model.id(),
        code,
        args.sex.code(),
        args.strategy.id()
    );
    let path = args.output_dir.join(format!("fitted_{stem}.csv"));
    let mut out = Vec::new();
    write_fitted_csv(&fitted, &mut out)?;
    std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
    println!("{}", path.display());
    if let Some(h) = args.horizon {
        let forecast = make_forecast(&fitted, h, config.alpha, config.n_sims, config.seed)?;
        let path = args.output_dir.join(format!("forecast_{stem}.csv"));
        let mut out = Vec::new();
        write_forecast_csv(&forecast, &mut out)?;
        std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(i32::from(!fitted.converged))
}

fn report(args: ReportArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.from)
        .with_context(|| format!("reading {}", args.from.display()))?;
    let cells = read_cells_csv(&text)?;
    if cells.is_empty() {
        bail!("{} holds no cells", args.from.display());
    }
    let table = ReportTable::build(&cells, args.metric, args.horizon)?;
    if args.csv {
        print!("{}", table.to_csv());
        return Ok(0);
    }
    print!("{}", table.to_text());
    match summarize_strategy_winner(&cells, args.metric, args.horizon) {
        Ok(v) => print!("\n{}", verdicts_to_text(&v, args.metric, args.horizon)),
        Err(e) => eprintln!("no strategy comparison: {e}"),
    }
    Ok(i32::from(cells.iter().any(|c| c.failed())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Backtest(a) => backtest(a),
        Command::Fit(a) => fit_one(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
