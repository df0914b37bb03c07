//! `bvm`: command-line driver.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 hypothesis failure,
//! 3 invariant violation.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bvm_core::exact::exact_range_series_1d;
use bvm_core::harness::{
    self, fit_stretch_exponent, parse_grid, parse_window, sandwich_report, write_curve_csv, write_sandwich_csv,
    ExperimentConfig, Mode,
};
use bvm_core::kernel::Kernel;
use bvm_core::localfn::LocalFunction;
use bvm_core::range::{effective_exponent, DvConstant};
use bvm_core::Error;

#[derive(Parser)]
#[command(name = "bvm", version, about = "Biased random voter model: simulation, duality and exact oracles")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// Output CSV path (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Forward spin dynamics on a torus from η ≡ 1.
    SimulateForward(Common),
    /// Coalescing dual estimator (`mode = dual-quenched` or `dual-annealed`).
    SimulateDual(Common),
    /// Monte Carlo of E exp(-ν|R_t|) for one walk.
    Range {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        nu: Option<f64>,
        /// `log:a:b:n`, `lin:a:b:n` or a comma list.
        #[arg(long)]
        t_grid: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Exact oracles with a pass/fail report.
    Exact {
        #[arg(long, value_enum)]
        what: What,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Torus dimension (duality).
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// Torus side (duality).
        #[arg(long, default_value_t = 3)]
        side: usize,
        /// Number of random bias fields (duality).
        #[arg(long, default_value_t = 20)]
        fields: u64,
        /// Times (duality) as a comma list.
        #[arg(long, default_value = "0.1, 1, 10")]
        times: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Range penalty ν (range).
        #[arg(long, default_value_t = 1.0)]
        nu: f64,
        /// Time grid (range).
        #[arg(long, default_value = "log:100:2000:14")]
        t_grid: String,
        /// Width cap of the range chain (range).
        #[arg(long, default_value_t = 400)]
        width_cap: usize,
    },
    /// Stretched-exponent fit of one CSV column against `t`.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "estimate")]
        column: String,
        /// `a:b`; default is the last decade of the times in the file.
        #[arg(long)]
        window: Option<String>,
    },
    /// Annealed relaxation between its range bounds, with exponent fits.
    Sandwich(Common),
    /// Checks a local-function table.
    Localfn {
        /// Table file to check.
        #[arg(long)]
        check: PathBuf,
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Duality,
    Range,
}

enum Failure {
    Usage(String),
    Hypothesis(String),
    Invariant(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        if e.is_invariant_violation() {
            Failure::Invariant(e.to_string())
        } else if e.is_hypothesis_failure() {
            Failure::Hypothesis(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Failure {
        Failure::Usage(e.to_string())
    }
}

fn usage(e: impl ToString) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    // clap exits with 2 on bad arguments, which is our hypothesis code.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("bvm: {e}");
            return ExitCode::from(1);
        }
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("bvm: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Hypothesis(m)) => {
            eprintln!("bvm: hypothesis failure: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Invariant(m)) => {
            eprintln!("bvm: invariant violation: {m}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::SimulateForward(c) => curve(&c, &[Mode::Forward], Mode::Forward, |_| Ok(())),
        Command::SimulateDual(c) => curve(&c, &[Mode::DualQuenched, Mode::DualAnnealed], Mode::DualAnnealed, |_| Ok(())),
        Command::Range { common, nu, t_grid, dim } => curve(&common, &[Mode::Range], Mode::Range, |cfg| {
            if let Some(nu) = nu {
                cfg.nu = nu;
            }
            if let Some(d) = dim {
                cfg.dim = d;
            }
            if let Some(g) = &t_grid {
                cfg.t_grid = parse_grid(g).map_err(usage)?;
            }
            Ok(())
        }),
        Command::Exact {
            what,
            out,
            dim,
            side,
            fields,
            times,
            seed,
            nu,
            t_grid,
            width_cap,
        } => match what {
            What::Duality => exact_duality(out.as_deref(), dim, side, fields, &times, seed),
            What::Range => exact_range(out.as_deref(), nu, &t_grid, width_cap),
        },
        Command::Fit { input, column, window } => fit(&input, &column, window.as_deref()),
        Command::Sandwich(c) => sandwich(&c),
        Command::Localfn { check, dim } => localfn(&check, dim),
    }
}

fn load(c: &Common, allowed: &[Mode], default: Mode) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::read(p).map_err(usage)?,
        None => {
            let mut cfg = ExperimentConfig::new(default);
            cfg.mode = None;
            cfg
        }
    };
    match cfg.mode {
        None => cfg.mode = Some(default),
        Some(m) if allowed.contains(&m) => {}
        Some(m) => {
            let names: Vec<&str> = allowed.iter().map(|m| m.as_str()).collect();
            return Err(usage(format!(
                "config mode `{}` does not match this subcommand (expected {})",
                m.as_str(),
                names.join(" or ")
            )));
        }
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(r) = c.replicas {
        cfg.replicas = r;
    }
    Ok(cfg)
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn curve(
    c: &Common,
    allowed: &[Mode],
    default: Mode,
    adjust: impl Fn(&mut ExperimentConfig) -> Result<(), Failure>,
) -> Result<(), Failure> {
    let mut cfg = load(c, allowed, default)?;
    adjust(&mut cfg)?;
    cfg.validate().map_err(usage)?;
    let records = harness::run(&cfg)?;
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &cfg, &records)?;
    emit(c.out.as_deref(), &buf)?;
    if records.iter().any(|r| r.audit == Some(false)) {
        return Err(Failure::Invariant("bound ordering violated at some time".into()));
    }
    Ok(())
}

fn sandwich(c: &Common) -> Result<(), Failure> {
    let cfg = load(c, &[Mode::DualAnnealed], Mode::DualAnnealed)?;
    cfg.validate().map_err(usage)?;
    let report = sandwich_report(&cfg)?;
    let mut buf = Vec::new();
    write_sandwich_csv(&mut buf, &cfg, &report)?;
    emit(c.out.as_deref(), &buf)?;
    if !report.hypotheses_ok() {
        return Err(Failure::Hypothesis(report.notes.join("; ")));
    }
    if !report.ordering_ok || report.bracket_ok == Some(false) {
        return Err(Failure::Invariant("sandwich ordering or exponent bracket failed".into()));
    }
    Ok(())
}

fn exact_duality(out: Option<&Path>, dim: usize, side: usize, fields: u64, times: &str, seed: u64) -> Result<(), Failure> {
    let times = parse_grid(times).map_err(usage)?;
    let tk = Kernel::nearest_neighbor(dim)
        .map_err(usage)?
        .fold(side)
        .map_err(usage)?;
    let rows = harness::duality_audit(&tk, fields, &times, seed)?;
    let mut buf = Vec::new();
    writeln!(buf, "# bvm exact duality dim={dim} side={side} fields={fields} seed={seed}")?;
    writeln!(buf, "field,t,subset,forward,dual,abs_diff")?;
    for r in &rows {
        writeln!(buf, "{},{},{},{},{},{}", r.field, r.t, r.subset, r.forward, r.dual, r.gap())?;
    }
    emit(out, &buf)?;
    let worst = rows.iter().map(|r| r.gap()).fold(0.0, f64::max);
    let pass = worst <= 1e-10;
    eprintln!(
        "duality {}: {} comparisons, max |forward - dual| = {worst:e} (tolerance 1e-10)",
        if pass { "PASS" } else { "FAIL" },
        rows.len()
    );
    if !pass {
        return Err(Failure::Invariant("duality identity violated".into()));
    }
    Ok(())
}

fn exact_range(out: Option<&Path>, nu: f64, grid: &str, cap: usize) -> Result<(), Failure> {
    let grid = parse_grid(grid).map_err(usage)?;
    let values = exact_range_series_1d(nu, &grid, cap).map_err(|e| usage(Error::from(e)))?;
    let series: Vec<(f64, f64)> = grid.iter().copied().zip(values.iter().copied()).collect();
    let slopes = effective_exponent(&series).ok();
    let c = DvConstant::nearest_neighbor(1).map_err(usage)?.at(nu).map_err(usage)?;
    let mut buf = Vec::new();
    writeln!(buf, "# bvm exact range nu={nu} width_cap={cap} dv_constant={c}")?;
    writeln!(buf, "t,value,local_exponent,rate_over_dv")?;
    for (j, (t, f)) in series.iter().enumerate() {
        let e = slopes.as_ref().map_or_else(String::new, |s| s[j].1.to_string());
        writeln!(buf, "{t},{f},{e},{}", -f.ln() / t.powf(1.0 / 3.0) / c)?;
    }
    emit(out, &buf)?;
    let decreasing = values.windows(2).all(|w| w[1] < w[0]);
    eprintln!("range {}: F strictly decreasing in t", if decreasing { "PASS" } else { "FAIL" });
    if !decreasing {
        return Err(Failure::Invariant("exact range functional not decreasing".into()));
    }
    Ok(())
}

/// Reads `t` and `column` from a CSV with `#` comment lines.
fn read_columns(path: &Path, column: &str) -> Result<Vec<(f64, f64)>, Failure> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let head: Vec<&str> = lines.next().ok_or_else(|| usage("empty CSV"))?.split(',').collect();
    let find = |name: &str| {
        head.iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| usage(format!("no column `{name}`")))
    };
    let (it, ic) = (find("t")?, find(column)?);
    let mut out = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let parse = |i: usize| -> Result<f64, Failure> {
            let cell = cells.get(i).map(|c| c.trim()).unwrap_or("");
            cell.parse().map_err(|_| usage(format!("bad number `{cell}` in `{line}`")))
        };
        out.push((parse(it)?, parse(ic)?));
    }
    Ok(out)
}

fn fit(input: &Path, column: &str, window: Option<&str>) -> Result<(), Failure> {
    let curve = read_columns(input, column)?;
    let window = match window {
        Some(w) => parse_window(w).map_err(usage)?,
        None => {
            let hi = curve.iter().map(|p| p.0).fold(0.0, f64::max);
            (hi / 10.0, hi)
        }
    };
    let f = fit_stretch_exponent(&curve, window).map_err(|e| usage(Error::from(e)))?;
    println!("column,window_start,window_end,points,gamma,ci_halfwidth,intercept");
    println!("{column},{},{},{},{},{},{}", window.0, window.1, f.points, f.gamma, f.ci_halfwidth, f.intercept);
    Ok(())
}

fn localfn(path: &Path, dim: usize) -> Result<(), Failure> {
    let f = LocalFunction::read(path, dim).map_err(|e| usage(Error::from(e)))?;
    let (sigma, support) = f.sigma_and_support();
    let sites: Vec<String> = support.iter().map(|s| s.display(dim)).collect();
    println!("support = {}", sites.join(";"));
    println!("sigma = {sigma}");
    println!("gap = {}", f.gap());
    println!("monotone = {}", f.is_monotone());
    match f.lemma1_check() {
        Ok(ok) => {
            println!("coefficient_criterion = {ok}");
            if ok != f.is_monotone() {
                return Err(Failure::Invariant("coefficient criterion disagrees with monotonicity".into()));
            }
        }
        Err(e) => println!("coefficient_criterion = skipped ({e})"),
    }
    Ok(())
}
