use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use turnover::marketdata::{load_panel, ColumnMapping};
use turnover::RunConfig;

const SMALL: &str = "seed = 7\n[data.generator]\nn_instruments = 50\nn_days = 500\n[universe]\nmin_history = 120\n";

fn turnover(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turnover")).current_dir(dir).args(args).output().expect("binary runs")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.toml"), SMALL).unwrap();
    dir
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

#[test]
fn gen_data_round_trips_and_is_deterministic() {
    let dir = setup();
    let a = turnover(dir.path(), &["--config", "small.toml", "--out", "a", "gen-data"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let b = turnover(dir.path(), &["--config", "small.toml", "--out", "b", "gen-data"]);
    assert!(b.status.success());
    assert_eq!(read(dir.path().join("a/panel.csv")), read(dir.path().join("b/panel.csv")));
    let panel = load_panel(dir.path().join("a/panel.csv"), &ColumnMapping::default()).unwrap();
    let cfg = RunConfig::from_toml_str(SMALL).unwrap();
    assert_eq!(panel, cfg.load_panel().unwrap());
}

#[test]
fn zero_instruments_is_a_configuration_error() {
    let dir = setup();
    fs::write(dir.path().join("bad.toml"), "[data.generator]\nn_instruments = 0\n").unwrap();
    let out = turnover(dir.path(), &["--config", "bad.toml", "gen-data"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration"));
}

#[test]
fn exit_statuses() {
    let dir = setup();
    assert_eq!(turnover(dir.path(), &["--config", "missing.toml", "backtest"]).status.code(), Some(1));
    assert_eq!(turnover(dir.path(), &["--no-such-flag"]).status.code(), Some(1));
    fs::write(dir.path().join("unknown.toml"), "no_such_key = 1\n").unwrap();
    assert_eq!(turnover(dir.path(), &["--config", "unknown.toml", "backtest"]).status.code(), Some(1));
    // malformed data file
    fs::write(dir.path().join("panel.csv"), "instrument_id,date\nA,not-a-date\n").unwrap();
    fs::write(dir.path().join("data.toml"), "[data]\npath = \"panel.csv\"\n").unwrap();
    let out = turnover(dir.path(), &["--config", "data.toml", "backtest"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    // nothing to report on
    assert_eq!(turnover(dir.path(), &["--out", "empty", "report"]).status.code(), Some(1));
}

#[test]
fn backtest_writes_reports_deterministically() {
    let dir = setup();
    let files = ["report.json", "equity_curve.csv", "trades.csv", "costs.csv", "regime_table.csv", "grid_objective.csv"];
    let mut first = Vec::new();
    for _ in 0..2 {
        let o = turnover(dir.path(), &["--config", "small.toml", "--grid", "reduced", "--out", "r1", "backtest"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let now: Vec<Vec<u8>> = files.iter().map(|f| read(dir.path().join("r1").join(f))).collect();
        if first.is_empty() {
            first = now;
        } else {
            for (k, f) in files.iter().enumerate() {
                assert!(first[k] == now[k], "{f} differs between runs");
            }
        }
    }
    // the echoed config is the resolved config
    let json: serde_json::Value = serde_json::from_slice(&read(dir.path().join("r1/report.json"))).unwrap();
    let echoed: RunConfig = serde_json::from_value(json["config"].clone()).unwrap();
    let toml = RunConfig::from_toml_str(&String::from_utf8(read(dir.path().join("r1/config.toml"))).unwrap()).unwrap();
    assert_eq!(echoed, toml);
    assert_eq!(echoed.exits.grid, turnover::exitgrid::GridSpec::reduced());
    assert_eq!(echoed.output_dir, Path::new("r1"));

    let o = turnover(dir.path(), &["--config", "small.toml", "--out", "r1", "report"]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("annual return"));

    let o = turnover(dir.path(), &["--config", "small.toml", "--grid", "reduced", "--seed", "8", "--out", "r3", "backtest"]);
    assert!(o.status.success());
    assert_ne!(read(dir.path().join("r1/equity_curve.csv")), read(dir.path().join("r3/equity_curve.csv")));
    let json: serde_json::Value = serde_json::from_slice(&read(dir.path().join("r3/report.json"))).unwrap();
    assert_eq!(json["seed"], 8);
}

#[test]
fn grid_search_sizes_and_schedule_independence() {
    let dir = setup();
    let o = turnover(dir.path(), &["--config", "small.toml", "--out", "full", "grid-search"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(read(dir.path().join("full/grid_objective.csv"))).unwrap();
    assert_eq!(text.lines().count(), 1 + 1344);

    let o = turnover(dir.path(), &["--config", "small.toml", "--grid", "singleton", "--out", "one", "grid-search"]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(read(dir.path().join("one/grid_objective.csv"))).unwrap().lines().count(), 2);

    let o = turnover(dir.path(), &["--config", "small.toml", "--grid", "reduced", "--parallel", "1", "--out", "s", "grid-search"]);
    assert!(o.status.success());
    let o = turnover(dir.path(), &["--config", "small.toml", "--grid", "reduced", "--parallel", "4", "--out", "p", "grid-search"]);
    assert!(o.status.success());
    assert_eq!(read(dir.path().join("s/grid_objective.csv")), read(dir.path().join("p/grid_objective.csv")));
    let choice = |d: &str| {
        let v: serde_json::Value = serde_json::from_slice(&read(dir.path().join(d).join("grid_choice.json"))).unwrap();
        v["optimum"].clone()
    };
    assert_eq!(choice("s"), choice("p"));
}

#[test]
fn ablation_table_has_six_rows_in_order() {
    let dir = setup();
    let run = || {
        let o = turnover(dir.path(), &["--config", "small.toml", "--grid", "reduced", "--out", "a1", "ablation"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (read(dir.path().join("a1/ablation_table.csv")), read(dir.path().join("a1/ablation_report.json")))
    };
    let first = run();
    assert!(first == run(), "ablation outputs differ between runs");
    let text = String::from_utf8(first.0).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "configuration,annual_return,sharpe,max_drawdown,win_rate");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        names,
        ["Baseline (Random)", "+ Cross-Sectional", "+ Opening Signals", "+ Position Sizing", "+ Grid Optimization", "+ Market Timing"]
    );
}
