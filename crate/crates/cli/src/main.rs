use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use turnover::backtest::{run_ablation, run_prepared, write_ablation_csv, write_report, BacktestReport, Prepared};
use turnover::config::ModuleToggles;
use turnover::exitgrid::{write_grid_csv, GridSpec};
use turnover::marketdata::write_panel;
use turnover::{Error, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "turnover", version, about = "Multi-day turnover strategy backtester")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the global seed and every seed derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    parallel: Option<usize>,
    /// Replaces the exit grid.
    #[arg(long, global = true, value_enum)]
    grid: Option<GridChoice>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GridChoice {
    /// 8 x 7 x 6 x 4 levels.
    Default,
    /// 2 x 2 x 2 x 2 levels.
    Reduced,
    /// The configured default exit parameters only.
    Singleton,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Writes the synthetic panel as CSV.
    GenData,
    /// Runs the configured pipeline and writes the report set.
    Backtest,
    /// Evaluates the exit grid on the validation span.
    GridSearch,
    /// Runs the six-row component ablation.
    Ablation,
    /// Prints a summary of the reports in the output directory.
    Report,
}

fn resolve(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    match cli.grid {
        Some(GridChoice::Default) => cfg.exits.grid = GridSpec::default(),
        Some(GridChoice::Reduced) => cfg.exits.grid = GridSpec::reduced(),
        Some(GridChoice::Singleton) => cfg.exits.grid = GridSpec::singleton(&cfg.exits.default_params),
        None => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_config_echo(cfg: &RunConfig, dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml()?)?;
    Ok(())
}

fn summary(r: &BacktestReport) -> String {
    let m = &r.metrics;
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    format!(
        "{}: {} to {} ({} days)\n  annual return {:.4}  volatility {:.4}  sharpe {}  max drawdown {:.4}\n  win rate {}  trades {}  costs {:.2}",
        r.label,
        r.start_date,
        r.end_date,
        m.n_days,
        m.annual_return,
        m.annual_volatility,
        opt(m.sharpe),
        m.max_drawdown,
        opt(m.win_rate),
        r.n_trades,
        r.total_costs
    )
}

fn gen_data(cfg: &RunConfig) -> Result<(), Error> {
    let panel = cfg.load_panel()?;
    let dir = &cfg.output_dir;
    write_config_echo(cfg, dir)?;
    let path = dir.join("panel.csv");
    write_panel(&panel, BufWriter::new(fs::File::create(&path)?))?;
    println!(
        "wrote {}: {} instruments, {} days, {} bars",
        path.display(),
        panel.n_instruments(),
        panel.n_days(),
        panel.bars().len()
    );
    Ok(())
}

fn backtest(cfg: &RunConfig) -> Result<(), Error> {
    let panel = cfg.load_panel()?;
    let prep = Prepared::build(&panel, cfg, cfg.modules)?;
    let report = run_prepared(&prep, cfg.modules, "backtest")?;
    write_report(&report, &cfg.output_dir)?;
    write_config_echo(cfg, &cfg.output_dir)?;
    println!("{}", summary(&report));
    Ok(())
}

fn grid_search(cfg: &RunConfig) -> Result<(), Error> {
    let panel = cfg.load_panel()?;
    let toggles = ModuleToggles { grid: true, ..ModuleToggles::none() };
    let prep = Prepared::build(&panel, cfg, toggles)?;
    let grid = prep.grid.as_ref().ok_or_else(|| Error::Runtime("no validation entries to evaluate the grid on".into()))?;
    let dir = &cfg.output_dir;
    write_config_echo(cfg, dir)?;
    write_grid_csv(&grid.points, BufWriter::new(fs::File::create(dir.join("grid_objective.csv"))?))?;
    let chosen = serde_json::json!({
        "seed": cfg.seed,
        "config": cfg,
        "n_points": grid.points.len(),
        "n_entries": grid.n_entries,
        "optimum": grid.optimum,
    });
    let mut text = serde_json::to_string_pretty(&chosen).map_err(|e| Error::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join("grid_choice.json"), text)?;
    let o = &grid.optimum;
    println!("{} grid points, {} entries", grid.points.len(), grid.n_entries);
    println!("global: {:?} objective {:.6}", o.global, o.global_value);
    for (r, p) in o.per_regime.iter().enumerate() {
        let note = if o.inherited[r] { " (inherits global)" } else { "" };
        println!("regime {r}: {p:?}, {} days{note}", o.regime_days[r]);
    }
    Ok(())
}

fn ablation(cfg: &RunConfig) -> Result<(), Error> {
    let panel = cfg.load_panel()?;
    let rows = run_ablation(&panel, cfg)?;
    let dir = &cfg.output_dir;
    write_config_echo(cfg, dir)?;
    write_ablation_csv(&rows, BufWriter::new(fs::File::create(dir.join("ablation_table.csv"))?))?;
    let reports: Vec<&BacktestReport> = rows.iter().map(|r| &r.report).collect();
    let mut text = serde_json::to_string_pretty(&serde_json::json!({ "seed": cfg.seed, "config": cfg, "rows": reports }))
        .map_err(|e| Error::Runtime(e.to_string()))?;
    text.push('\n');
    fs::write(dir.join("ablation_report.json"), text)?;
    for r in &rows {
        println!("{}", summary(&r.report));
    }
    Ok(())
}

fn report(cfg: &RunConfig) -> Result<(), Error> {
    let dir = &cfg.output_dir;
    let path = dir.join("report.json");
    let mut found = false;
    if path.exists() {
        let text = fs::read_to_string(&path)?;
        let r: BacktestReport = serde_json::from_str(&text).map_err(|e| Error::Runtime(format!("{}: {e}", path.display())))?;
        println!("{}", summary(&r));
        for row in &r.regime_table {
            match &row.metrics {
                Some(m) => println!("  {:<10} {:>5} days  annual return {:.4}  max drawdown {:.4}", row.regime, row.n_days, m.annual_return, m.max_drawdown),
                None => println!("  {:<10} {:>5} days", row.regime, row.n_days),
            }
        }
        found = true;
    }
    let table = dir.join("ablation_table.csv");
    if table.exists() {
        print!("{}", fs::read_to_string(&table)?);
        found = true;
    }
    if !found {
        return Err(Error::Config(format!("no report.json or ablation_table.csv in {}", dir.display())));
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    if let Some(n) = cli.parallel {
        if n == 0 {
            return Err(Error::Config("--parallel needs at least one worker".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Runtime(e.to_string()))?;
    }
    let cfg = resolve(cli)?;
    match cli.command {
        Command::GenData => gen_data(&cfg),
        Command::Backtest => backtest(&cfg),
        Command::GridSearch => grid_search(&cfg),
        Command::Ablation => ablation(&cfg),
        Command::Report => report(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
