use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msflow::inequality::{check_tint, run_ensemble, tint_spread, write_reports, Inequality, SampleSpec};
use msflow::linear::{decay_series, kernel_profile, localized_family, verify_linear_bounds, BOUND_NAMES};
use msflow::runner::{fit_decay, manifest_text, parse_config, render_report, write_run_dir, Ledger, RunConfig};
use msflow::solver::{run_simulation, sample_times};
use msflow::fit::fit_power_law;
use msflow::Error;

#[derive(Parser)]
#[command(name = "msflow", version, about = "Mullins-Sekerka graph relaxation experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Exit with status 3 when an acceptance property fails.
    #[arg(long, global = true)]
    check: bool,
    /// Root seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Linearized evolution: decay series, slopes and bound constants.
    Linear,
    /// Nonlinear evolution with ledger, snapshots and manifest.
    Evolve,
    /// Self-similar kernel profile.
    Kernel {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 20.0)]
        r_max: f64,
        #[arg(long, default_value_t = 400)]
        samples: usize,
    },
    /// Randomized inequality suites.
    Ineq {
        #[arg(long, default_value_t = 1)]
        dim: usize,
        /// eed, gns, v2, tint, curvature or all.
        #[arg(long, default_value = "all")]
        suite: String,
        /// Samples per inequality (default 10000 for eed, 1000 otherwise).
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Power-law fit of a ledger column.
    Fit {
        /// Ledger file or run directory.
        ledger: PathBuf,
        #[arg(long, default_value = "E")]
        quantity: String,
        #[arg(long)]
        t_lo: Option<f64>,
        #[arg(long)]
        t_hi: Option<f64>,
    },
    /// SVG panel and summary table for a finished run directory.
    Report {
        run: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() || matches!(e, Error::Fit(_)) {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<Vec<String>, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(threads) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Linear => linear(&cli.global),
        Command::Evolve => evolve(&cli.global),
        Command::Kernel { dim, r_max, samples } => kernel(&cli.global, *dim, *r_max, *samples),
        Command::Ineq { dim, suite, samples } => ineq(&cli.global, *dim, suite, *samples),
        Command::Fit { ledger, quantity, t_lo, t_hi } => fit(ledger, quantity, *t_lo, *t_hi),
        Command::Report { run } => report(&cli.global, run),
    };
    match outcome {
        Ok(violations) if violations.is_empty() || !cli.global.check => ExitCode::SUCCESS,
        Ok(violations) => {
            for v in violations {
                eprintln!("check failed: {v}");
            }
            ExitCode::from(3)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(2)
        }
    }
}

fn load_config(g: &Global) -> Result<RunConfig, Failure> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.out_dir = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(g: &Global, cfg: Option<&RunConfig>) -> Result<PathBuf, Failure> {
    let dir = g
        .out
        .clone()
        .or_else(|| cfg.and_then(|c| c.out_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn within(label: &str, value: f64, target: f64, tol: f64, violations: &mut Vec<String>) {
    let ok = (value - target).abs() <= tol;
    println!("{label}: {value:.4} (target {target:.4} ± {tol})");
    if !ok {
        violations.push(format!("{label} = {value:.4} outside {target:.4} ± {tol}"));
    }
}

fn linear(g: &Global) -> Outcome {
    let cfg = load_config(g)?;
    let dir = out_dir(g, Some(&cfg))?;
    let grid = cfg.grid()?;
    let h0 = cfg.initial.build(&grid, cfg.seed)?;
    let times: Vec<f64> = sample_times(cfg.t_first, cfg.t_end, cfg.samples_per_decade)[1..].to_vec();
    let series = decay_series(&h0, &times)?;
    let mut csv = String::from("t,h_inf,grad_inf,l2\n");
    for s in &series {
        csv.push_str(&format!("{:e},{:e},{:e},{:e}\n", s.t, s.h_inf, s.grad_inf, s.l2));
    }
    fs::write(dir.join("linear.csv"), csv)?;
    fs::write(dir.join("manifest.toml"), manifest_text(&cfg, None)?)?;

    let window = cfg.fit_window();
    let ts: Vec<f64> = series.iter().map(|s| s.t).collect();
    let d = cfg.dim as f64;
    let mut violations = Vec::new();
    let fh = fit_power_law("h_inf", &ts, &series.iter().map(|s| s.h_inf).collect::<Vec<_>>(), window)?;
    let fg = fit_power_law("grad_inf", &ts, &series.iter().map(|s| s.grad_inf).collect::<Vec<_>>(), window)?;
    println!("fit window [{:.4e}, {:.4e}]", window.0, window.1);
    within("slope h_inf", fh.slope, -d / 3.0, 0.05, &mut violations);
    within("slope grad_inf", fg.slope, -(d + 1.0) / 3.0, 0.05, &mut violations);

    let family = localized_family(&grid, 20, cfg.seed);
    let bounds = verify_linear_bounds(&family, &[1.0, 4.0, 16.0])?;
    let mut table = String::from("bound,T1,T4,T16,variation\n");
    for (b, name) in BOUND_NAMES.iter().enumerate() {
        let row = &bounds.constants[b];
        table.push_str(&format!("{name},{:e},{:e},{:e},{:.4}\n", row[0], row[1], row[2], bounds.variation(b)));
        if !bounds.bounded(b) {
            violations.push(format!("linear bound {name} varies by {:.3} across horizons", bounds.variation(b)));
        }
    }
    fs::write(dir.join("linear_bounds.csv"), &table)?;
    print!("{table}");
    Ok(violations)
}

fn evolve(g: &Global) -> Outcome {
    let cfg = load_config(g)?;
    let dir = out_dir(g, Some(&cfg))?;
    let result = run_simulation(&cfg)?;
    write_run_dir(&dir, &result)?;
    let mut violations = Vec::new();
    println!(
        "{} samples, {} accepted / {} rejected steps",
        result.records.len(),
        result.accepted_steps,
        result.rejected_steps
    );
    if let Some(a) = &result.abort {
        println!("aborted ({}) at t = {:e}: {}", a.kind, a.t, a.message);
        if a.kind != "contamination" {
            return Err(Failure::Numerical(a.message.clone()));
        }
        violations.push(format!("run aborted: {}", a.message));
    }
    let tol = cfg.controller.energy_tol;
    for w in result.steps.windows(2) {
        if w[1].energy > w[0].energy * (1.0 + tol) + 1e-300 {
            violations.push(format!("energy increased at t = {:e}", w[1].t));
            break;
        }
    }
    if let Some(first) = result.records.first() {
        let vmax = result.records.iter().map(|r| r.vmass).fold(0.0, f64::max);
        if vmax > 2.0 * first.vmass {
            violations.push(format!("excess mass grew to {vmax:e} > 2 x {:e}", first.vmass));
        }
    }
    Ok(violations)
}

fn kernel(g: &Global, dim: usize, r_max: f64, samples: usize) -> Outcome {
    let dir = out_dir(g, None)?;
    let profile = kernel_profile(dim, r_max, samples)?;
    profile.write_csv(BufWriter::new(fs::File::create(dir.join("kernel.csv"))?))?;
    let mut violations = Vec::new();
    println!("normalization {:.12} (domain L = {}, tail change {:.2e})", profile.normalization, profile.length, profile.tail_change);
    if (profile.normalization - 1.0).abs() > 1e-6 {
        violations.push(format!("kernel normalization {} differs from 1", profile.normalization));
    }
    if !profile.tail_converged() {
        violations.push(format!("kernel tail not converged under domain doubling ({:.2e})", profile.tail_change));
    }
    if r_max >= 20.0 {
        let fit = profile.tail_slope(5.0, 20.0)?;
        println!("tail slope over [5, 20]: {:.4} ± {:.1e}", fit.slope, fit.stderr);
        let (lo, hi) = profile.weighted_range(dim as f64 + 1.0, 5.0, 20.0);
        println!("r^(d+1) |G| over [5, 20]: [{lo:.3e}, {hi:.3e}]");
    }
    Ok(violations)
}

fn ineq(g: &Global, dim: usize, suite: &str, samples: Option<usize>) -> Outcome {
    let dir = out_dir(g, None)?;
    let (n, length) = match dim {
        1 => (256, 64.0),
        2 => (64, 32.0),
        _ => return Err(Failure::Usage(format!("--dim must be 1 or 2, got {dim}"))),
    };
    let mut items: Vec<(Inequality, usize)> = Vec::new();
    let all = suite == "all";
    let count = |default: usize| samples.unwrap_or(default);
    if all || suite == "eed" {
        items.push((Inequality::Eed, count(10_000)));
    }
    if all || suite == "gns" {
        items.extend(Inequality::gns_items(dim).into_iter().map(|i| (i, count(1000))));
    }
    if all || suite == "v2" {
        items.push((Inequality::V2, count(1000)));
    }
    if all || suite == "curvature" {
        items.push((Inequality::CurvatureL2, count(1000)));
        items.push((Inequality::HessianLp { p: 4.0 }, count(1000)));
        items.push((Inequality::HessianLp { p: 2.5 }, count(1000)));
    }
    let run_tint = all || suite == "tint";
    if items.is_empty() && !run_tint {
        return Err(Failure::Usage(format!("unknown suite {suite:?}")));
    }
    let seed = g.seed.unwrap_or(0);
    let mut violations = Vec::new();
    let mut reports = Vec::new();
    for (item, count) in items {
        let spec = SampleSpec {
            dim,
            n,
            length,
            seed,
            lip_target: if item.needs_graph() { 0.8 } else { 1.0 },
            ..Default::default()
        };
        let r = run_ensemble(item, &spec, count)?;
        println!(
            "{:<16} samples {:>6}  max {:.6e}  median {:.4e}  argmax {:>6}  drift {:.2e}",
            r.inequality_id, r.n_samples, r.max_ratio, r.median_ratio, r.argmax_seed, r.doubling_drift
        );
        if !r.max_ratio.is_finite() || !(r.doubling_drift <= 0.1) {
            violations.push(format!("{}: max ratio {} with drift {}", r.inequality_id, r.max_ratio, r.doubling_drift));
        }
        reports.push(r);
    }
    if !reports.is_empty() {
        write_reports(&reports, fs::File::create(dir.join("ineq_report.csv"))?)?;
    }
    if run_tint {
        let exps = [0.3, 0.5, 0.7, 0.9];
        let mut rows = Vec::new();
        for a in exps {
            for b in exps.iter().copied().filter(|b| a + b >= 1.0) {
                rows.extend(check_tint(&[a], &[b], &[0.1, 1.0, 10.0])?);
            }
        }
        let mut csv = String::from("a,b,T,integral,ratio\n");
        for r in &rows {
            csv.push_str(&format!("{},{},{},{:.15e},{:.15e}\n", r.a, r.b, r.horizon, r.integral, r.ratio));
        }
        fs::write(dir.join("tint.csv"), csv)?;
        let spread = tint_spread(&rows);
        println!("tint: {} rows, horizon spread {spread:.2e}", rows.len());
        if spread > 1e-8 {
            violations.push(format!("time integral not scale invariant (spread {spread:e})"));
        }
    }
    Ok(violations)
}

fn ledger_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("series.csv")
    } else {
        p.to_path_buf()
    }
}

fn fit(ledger: &Path, quantity: &str, t_lo: Option<f64>, t_hi: Option<f64>) -> Outcome {
    let path = ledger_path(ledger);
    let l = Ledger::load(&path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let ts = l.times();
    let positive: Vec<f64> = ts.iter().copied().filter(|t| *t > 0.0).collect();
    let lo = t_lo.or(positive.first().copied()).unwrap_or(0.0);
    let hi = t_hi.or(ts.last().copied()).unwrap_or(0.0);
    let f = fit_decay(&l, quantity, (lo, hi))?;
    println!(
        "{}: slope {:.6} stderr {:.3e} intercept {:.6} n {} window [{:e}, {:e}]",
        f.quantity, f.slope, f.stderr, f.intercept, f.n_points, f.window.0, f.window.1
    );
    Ok(Vec::new())
}

fn report(g: &Global, run: &Path) -> Outcome {
    let ledger = Ledger::load(&run.join("series.csv"))?;
    let manifest = fs::read_to_string(run.join("manifest.toml"))?;
    let cfg = parse_config(&manifest)?;
    let dir = g.out.clone().unwrap_or_else(|| run.to_path_buf());
    fs::create_dir_all(&dir)?;
    let rep = render_report(&ledger, cfg.fit_window())?;
    fs::write(dir.join("report.svg"), &rep.svg)?;
    print!("{}", rep.summary());
    Ok(Vec::new())
}
