//! Scenario-driven command line for the equilibrium laboratory.
//!
//! Every subcommand reads one JSON scenario document, writes its numeric
//! artifacts (CSV tables, JSON reports) plus a manifest tying the outputs
//! to the config hash, seed, and grid, and uses a fixed exit-code
//! convention:
//!
//! ```text
//! 0   success
//! 2   a feasibility check failed
//! 64  malformed configuration or invocation
//! 70  numeric failure (singularity, overflow, non-finite state)
//! 74  I/O failure
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use kyleq::analysis::{self, MetricsReport};
use kyleq::dynamics::{self, StrategySpec};
use kyleq::error::Error;
use kyleq::filter;
use kyleq::scenario::{PricingKind, Scenario, ScenarioConfig};
use kyleq::value::{self, ValueFunction};

const EXIT_CHECK_FAILED: u8 = 2;
const EXIT_CONFIG: u8 = 64;
const EXIT_NUMERIC: u8 = 70;
const EXIT_IO: u8 = 74;

#[derive(Parser)]
#[command(name = "kyleq", about = "Insider-trading equilibrium laboratory", version)]
struct Cli {
    /// Scenario configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the configured base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the configured grid size.
    #[arg(long, global = true)]
    grid_size: Option<usize>,
    /// Skip the feasibility pre-check.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the feasibility checks and write the report.
    Check,
    /// Tabulate the pricing rule H(y, t) with PDE residuals.
    Price,
    /// Simulate paths and write a long-format CSV.
    Simulate,
    /// Monte Carlo profit statistics per configured strategy.
    Mc,
    /// Filter a simulated path CSV and write the filter trajectory.
    Filter {
        /// Long-format path CSV produced by `simulate`.
        #[arg(long)]
        path_csv: PathBuf,
        /// Which path to filter.
        #[arg(long, default_value_t = 0)]
        path_index: usize,
    },
    /// Tabulate the value function and the profit bound.
    Value,
    /// Inconspicuousness tests and efficiency curves.
    Analyze,
    /// Combined metrics report (normality, bridge, efficiency, profits).
    Report,
}

struct App {
    out_dir: PathBuf,
    config_text: String,
    config: ScenarioConfig,
    scenario: Scenario,
    force: bool,
    outputs: Vec<String>,
}

enum AppError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl From<Error> for AppError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Domain(_) => AppError::Config(e.to_string()),
            _ => AppError::Numeric(e.to_string()),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Io(e.to_string())
    }
}

type AppResult<T> = Result<T, AppError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version requests are ordinary output.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(EXIT_CONFIG);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(AppError::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(AppError::Numeric(m)) => {
            eprintln!("numeric error: {m}");
            ExitCode::from(EXIT_NUMERIC)
        }
        Err(AppError::Io(m)) => {
            eprintln!("i/o error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn run(cli: Cli) -> AppResult<ExitCode> {
    let config_path = cli
        .config
        .clone()
        .ok_or_else(|| AppError::Config("--config PATH is required".into()))?;
    let config_text = std::fs::read_to_string(&config_path)
        .map_err(|e| AppError::Io(format!("{}: {e}", config_path.display())))?;
    let mut config = ScenarioConfig::from_json(&config_text).map_err(AppError::from)?;
    if let Some(seed) = cli.seed {
        config.run.base_seed = seed;
    }
    if let Some(size) = cli.grid_size {
        config.grid.size = size;
    }
    let scenario = config.build().map_err(AppError::from)?;
    std::fs::create_dir_all(&cli.out)?;
    let mut app = App {
        out_dir: cli.out,
        config_text,
        config,
        scenario,
        force: cli.force,
        outputs: Vec::new(),
    };

    let code = match cli.command {
        Command::Check => app.cmd_check()?,
        Command::Price => app.guarded(|a| a.cmd_price())?,
        Command::Simulate => app.guarded(|a| a.cmd_simulate())?,
        Command::Mc => app.guarded(|a| a.cmd_mc())?,
        Command::Filter { path_csv, path_index } => {
            app.guarded(|a| a.cmd_filter(&path_csv, path_index))?
        }
        Command::Value => app.guarded(|a| a.cmd_value())?,
        Command::Analyze => app.guarded(|a| a.cmd_analyze())?,
        Command::Report => app.guarded(|a| a.cmd_report())?,
    };
    app.write_manifest()?;
    Ok(code)
}

/// Full-precision decimal rendering (17 significant digits).
fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

impl App {
    fn artifact(&mut self, name: &str, contents: &str) -> AppResult<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
        self.outputs.push(name.to_string());
        Ok(path)
    }

    fn json_artifact<T: serde::Serialize>(&mut self, name: &str, value: &T) -> AppResult<()> {
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| AppError::Numeric(format!("serialization: {e}")))?;
        self.artifact(name, &text)?;
        Ok(())
    }

    fn write_manifest(&mut self) -> AppResult<()> {
        let digest = Sha256::digest(self.config_text.as_bytes());
        let manifest = serde_json::json!({
            "config_sha256": format!("{digest:x}"),
            "seed": self.scenario.base_seed,
            "grid_nodes": self.scenario.grid.len(),
            "version": env!("CARGO_PKG_VERSION"),
            "outputs": self.outputs,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let path = self.out_dir.join("manifest.json");
        std::fs::write(&path, text)
            .map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
        Ok(())
    }

    /// Feasibility gate for run commands.
    fn guarded(&mut self, f: impl FnOnce(&mut Self) -> AppResult<ExitCode>) -> AppResult<ExitCode> {
        if !self.force {
            let (pass, failures) = self.check_outcome();
            if !pass {
                eprintln!(
                    "feasibility check failed ({}); rerun with --force to override",
                    failures.join(", ")
                );
                return Ok(ExitCode::from(EXIT_CHECK_FAILED));
            }
        }
        f(self)
    }

    fn check_outcome(&self) -> (bool, Vec<String>) {
        match self.config.pricing.kind {
            PricingKind::Markovian => {
                let rep = self.scenario.params.check_assumptions(20);
                (rep.all_pass, rep.failures().iter().map(|s| s.to_string()).collect())
            }
            PricingKind::Weighted => {
                let w = self.scenario.weighting.as_ref().expect("weighted scenario");
                let rep = self.scenario.params.check_nonmarkovian_conditions(w, 512);
                (rep.all_pass, rep.failures().iter().map(|s| s.to_string()).collect())
            }
        }
    }

    fn cmd_check(&mut self) -> AppResult<ExitCode> {
        match self.config.pricing.kind {
            PricingKind::Markovian => {
                let rep = self.scenario.params.check_assumptions(20);
                self.json_artifact("check_report.json", &rep)?;
                if rep.all_pass {
                    println!("check: pass");
                    Ok(ExitCode::SUCCESS)
                } else {
                    println!("check: FAIL ({})", rep.failures().join(", "));
                    Ok(ExitCode::from(EXIT_CHECK_FAILED))
                }
            }
            PricingKind::Weighted => {
                let w = self.scenario.weighting.clone().expect("weighted scenario");
                let rep = self.scenario.params.check_nonmarkovian_conditions(&w, 512);
                self.json_artifact("check_report.json", &rep)?;
                if rep.all_pass {
                    println!("check: pass");
                    Ok(ExitCode::SUCCESS)
                } else {
                    println!("check: FAIL ({})", rep.failures().join(", "));
                    Ok(ExitCode::from(EXIT_CHECK_FAILED))
                }
            }
        }
    }

    fn cmd_price(&mut self) -> AppResult<ExitCode> {
        let rule = self.scenario.rule.clone();
        let breaks: Vec<f64> = self
            .scenario
            .weighting
            .as_ref()
            .map(|w| w.partition().to_vec())
            .unwrap_or_default();
        let hy = 1e-3;
        let ht = 1e-3;
        let mut csv = String::from("y,t,H,residual\r\n");
        for i in 0..=18 {
            let t = 0.05 * (i as f64 + 1.0) - 0.025;
            if t >= 0.9 {
                break;
            }
            if breaks.iter().any(|&b| (t - b).abs() <= ht + 1e-9) {
                continue;
            }
            let wsq = rule.remaining.weight_sq(t);
            for j in -12..=12 {
                let y = j as f64 * 0.25;
                let h = rule.price(y, t).map_err(AppError::from)?;
                let h_t = (rule.price(y, t + ht).map_err(AppError::from)?
                    - rule.price(y, t - ht).map_err(AppError::from)?)
                    / (2.0 * ht);
                let h_yy = (rule.price(y + hy, t).map_err(AppError::from)?
                    - 2.0 * h
                    + rule.price(y - hy, t).map_err(AppError::from)?)
                    / (hy * hy);
                let r = h_t + 0.5 * wsq * h_yy;
                let _ = write!(csv, "{},{},{},{}\r\n", fmt_f(y), fmt_f(t), fmt_f(h), fmt_f(r));
            }
        }
        self.artifact("price_table.csv", &csv)?;
        println!("price: wrote price_table.csv");
        Ok(ExitCode::SUCCESS)
    }

    fn cmd_simulate(&mut self) -> AppResult<ExitCode> {
        let s = self.scenario.clone();
        let strategies: Vec<StrategySpec> = if s.strategies.is_empty() {
            vec![StrategySpec::Zero]
        } else {
            s.strategies.clone()
        };
        let strategy = &strategies[0];
        let mut csv = String::from("path,t,Z,theta,Y,xi,P\r\n");
        for p in 0..s.n_paths {
            let bundle = dynamics::simulate_path(
                &s.params,
                &s.rule,
                strategy,
                &s.grid,
                s.base_seed.wrapping_add(p as u64),
            )
            .map_err(AppError::from)?;
            for (k, &t) in bundle.grid.nodes().iter().enumerate() {
                let _ = write!(
                    csv,
                    "{p},{},{},{},{},{},{}\r\n",
                    fmt_f(t),
                    fmt_f(bundle.z[k]),
                    fmt_f(bundle.theta[k]),
                    fmt_f(bundle.y[k]),
                    fmt_f(bundle.xi[k]),
                    fmt_f(bundle.price[k])
                );
            }
        }
        self.artifact("paths.csv", &csv)?;
        println!("simulate: wrote paths.csv ({} paths, strategy {})", s.n_paths, strategy.name());
        Ok(ExitCode::SUCCESS)
    }

    fn cmd_mc(&mut self) -> AppResult<ExitCode> {
        let s = self.scenario.clone();
        if s.strategies.is_empty() {
            return Err(AppError::Config("run.strategies is empty".into()));
        }
        let mut all = Vec::new();
        for (i, strat) in s.strategies.iter().enumerate() {
            let st = dynamics::monte_carlo(
                &s.params,
                &s.rule,
                strat,
                &s.grid,
                s.n_paths,
                s.base_seed.wrapping_add(i as u64),
            )
            .map_err(AppError::from)?;
            println!(
                "mc: {} mean {:.6} stderr {:.6} (n = {})",
                st.strategy, st.mean_wealth, st.stderr, st.n_paths
            );
            all.push(st);
        }
        self.json_artifact("profit_stats.json", &all)?;
        Ok(ExitCode::SUCCESS)
    }

    fn cmd_filter(&mut self, path_csv: &Path, path_index: usize) -> AppResult<ExitCode> {
        let text = std::fs::read_to_string(path_csv)
            .map_err(|e| AppError::Io(format!("{}: {e}", path_csv.display())))?;
        let mut times = Vec::new();
        let mut y = Vec::new();
        for line in text.lines().skip(1) {
            let cols: Vec<&str> = line.trim_end().split(',').collect();
            if cols.len() < 7 {
                continue;
            }
            let p: usize = cols[0]
                .parse()
                .map_err(|_| AppError::Config(format!("bad path id {:?}", cols[0])))?;
            if p != path_index {
                continue;
            }
            let t: f64 = cols[1]
                .parse()
                .map_err(|_| AppError::Config(format!("bad time {:?}", cols[1])))?;
            let yy: f64 = cols[4]
                .parse()
                .map_err(|_| AppError::Config(format!("bad Y {:?}", cols[4])))?;
            times.push(t);
            y.push(yy);
        }
        if times.len() < 3 {
            return Err(AppError::Config(format!("path {path_index} not found in the CSV")));
        }
        // Filtering stops before the terminal layer where the gain blows up.
        let cut = times.partition_point(|&t| t <= 1.0 - filter::FILTER_EPS);
        let (times, y) = (&times[..cut], &y[..cut]);
        let out = filter::kalman_filter(&self.scenario.params, times, y).map_err(AppError::from)?;
        let gam = filter::gamma_ode_solve(&self.scenario.params, times).map_err(AppError::from)?;
        let mut csv = String::from("t,m,gamma_numeric,gamma_analytic,innovation\r\n");
        for (k, &t) in times.iter().enumerate() {
            let innov = if k == 0 { 0.0 } else { out.innovations[k - 1] };
            let _ = write!(
                csv,
                "{},{},{},{},{}\r\n",
                fmt_f(t),
                fmt_f(out.states[k].m),
                fmt_f(gam.numeric[k]),
                fmt_f(gam.analytic[k]),
                fmt_f(innov)
            );
        }
        self.artifact("filter.csv", &csv)?;
        println!("filter: wrote filter.csv (max |gamma gap| {:.3e})", gam.max_gap);
        Ok(ExitCode::SUCCESS)
    }

    fn cmd_value(&mut self) -> AppResult<ExitCode> {
        let s = self.scenario.clone();
        let vf = ValueFunction::new(s.rule.clone(), s.params.clone());
        let bound = match &s.weighting {
            Some(w) => value::nonmarkov_profit_upper_bound(&vf, w).map_err(AppError::from)?,
            None => vf.profit_upper_bound().map_err(AppError::from)?,
        };
        let mut csv = String::from("y,z,t,V\r\n");
        for &t in &[0.0, 0.25, 0.5, 0.75] {
            for i in -4..=4 {
                let z = i as f64 * 0.5;
                for j in -4..=4 {
                    let y = j as f64 * 0.5;
                    let v = match &s.weighting {
                        Some(w) => value::value_nonmarkov(&vf, w, y, z, t).map_err(AppError::from)?,
                        None => vf.value(y, z, t).map_err(AppError::from)?,
                    };
                    let _ = write!(csv, "{},{},{},{}\r\n", fmt_f(y), fmt_f(z), fmt_f(t), fmt_f(v));
                }
            }
        }
        self.artifact("value_table.csv", &csv)?;
        self.json_artifact(
            "value_summary.json",
            &serde_json::json!({ "profit_upper_bound": bound }),
        )?;
        println!("value: bound {bound:.9}");
        Ok(ExitCode::SUCCESS)
    }

    fn probe_times(&self) -> Vec<f64> {
        if !self.scenario.probe_times.is_empty() {
            let mut p = self.scenario.probe_times.clone();
            p.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if p[0] > 0.0 {
                p.insert(0, 0.0);
            }
            p
        } else {
            (0..=16).map(|j| j as f64 / 16.0).collect()
        }
    }

    fn cmd_analyze(&mut self) -> AppResult<ExitCode> {
        let s = self.scenario.clone();
        let probes = self.probe_times();
        let strategy = match &s.weighting {
            Some(w) => StrategySpec::EquilibriumNonMarkov { weighting: w.clone() },
            None => StrategySpec::EquilibriumMarkov,
        };
        let ens = dynamics::probe_ensemble(
            &s.params, &s.rule, &strategy, &s.grid, &probes, s.n_paths, s.base_seed,
        )
        .map_err(AppError::from)?;
        let y_paths: Vec<Vec<f64>> =
            ens.values.iter().map(|path| path.iter().map(|v| v.0).collect()).collect();
        let normality =
            analysis::inconspicuousness_test(&y_paths, &ens.probe_times).map_err(AppError::from)?;
        let interior: Vec<f64> = probes.iter().copied().filter(|&t| t < 1.0).collect();
        let with_ins = analysis::efficiency_curve(
            &s.params, &s.rule, true, &s.grid, &interior, s.n_paths, s.base_seed ^ 0x5a5a,
        )
        .map_err(AppError::from)?;
        let without = analysis::efficiency_curve(
            &s.params, &s.rule, false, &s.grid, &interior, s.n_paths, s.base_seed ^ 0xa5a5,
        )
        .map_err(AppError::from)?;
        let mut csv = String::from("t,mse_with_insider,se_with,mse_without_insider,se_without\r\n");
        for (a, b) in with_ins.iter().zip(&without) {
            let _ = write!(
                csv,
                "{},{},{},{},{}\r\n",
                fmt_f(a.t),
                fmt_f(a.mean_sq_error),
                fmt_f(a.stderr),
                fmt_f(b.mean_sq_error),
                fmt_f(b.stderr)
            );
        }
        self.artifact("efficiency.csv", &csv)?;
        let report = serde_json::json!({
            "normality": normality,
            "efficiency_with_insider": with_ins,
            "efficiency_without_insider": without,
        });
        self.json_artifact("analysis_report.json", &report)?;
        println!("analyze: normality pass = {}", normality.pass);
        Ok(ExitCode::SUCCESS)
    }

    fn cmd_report(&mut self) -> AppResult<ExitCode> {
        let s = self.scenario.clone();
        let probes = self.probe_times();
        let strategy = match &s.weighting {
            Some(w) => StrategySpec::EquilibriumNonMarkov { weighting: w.clone() },
            None => StrategySpec::EquilibriumMarkov,
        };
        let ens = dynamics::probe_ensemble(
            &s.params, &s.rule, &strategy, &s.grid, &probes, s.n_paths, s.base_seed,
        )
        .map_err(AppError::from)?;
        let y_paths: Vec<Vec<f64>> =
            ens.values.iter().map(|path| path.iter().map(|v| v.0).collect()).collect();
        let normality =
            analysis::inconspicuousness_test(&y_paths, &ens.probe_times).map_err(AppError::from)?;
        let mc = dynamics::monte_carlo(
            &s.params, &s.rule, &strategy, &s.grid, s.n_paths, s.base_seed,
        )
        .map_err(AppError::from)?;
        let interior: Vec<f64> = probes.iter().copied().filter(|&t| t < 1.0).collect();
        let with_ins = analysis::efficiency_curve(
            &s.params, &s.rule, true, &s.grid, &interior, s.n_paths, s.base_seed ^ 0x5a5a,
        )
        .map_err(AppError::from)?;
        let without = analysis::efficiency_curve(
            &s.params, &s.rule, false, &s.grid, &interior, s.n_paths, s.base_seed ^ 0xa5a5,
        )
        .map_err(AppError::from)?;
        let profit = if s.strategies.is_empty() {
            None
        } else {
            Some(
                analysis::optimality_table(
                    &s.params, &s.rule, &s.strategies, &s.grid, s.n_paths, s.base_seed,
                )
                .map_err(AppError::from)?,
            )
        };
        let report = MetricsReport {
            normality: Some(normality),
            bridge: mc.bridge.clone(),
            efficiency_with_insider: with_ins,
            efficiency_without_insider: without,
            profit,
            n_paths: s.n_paths,
            base_seed: s.base_seed,
        };
        self.json_artifact("report.json", &report)?;
        println!("report: wrote report.json");
        Ok(ExitCode::SUCCESS)
    }
}
