use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use doubledamp::cli_io::{
    lifespan_csv, loglog_svg, norms_csv, parse_exponents, table_csv, ExperimentConfig,
    ExperimentKind, OutputDir, PlotLine, PlotSeries,
};
use doubledamp::exponents::ExponentReport;
use doubledamp::harness::{
    blowup_experiment, convergence_study, decay_experiment, gn_scaling_check, lifespan_sweep,
    GnParams,
};
use doubledamp::kernels::{decay_profile, default_t_grid, Regime};
use doubledamp::solver::{log_schedule, run, GridSpec, RunOptions};
use doubledamp::testfunc::{
    check_lemma_3_1, lemma_3_2_sweep, sigma_bar, verify_eta_condition, Eta, VerificationRecord,
};
use doubledamp::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "doubledamp",
    version,
    about = "Exponents, linear kernels and simulations of doubly damped sigma-evolution systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON configuration file (a previous `config.json` also works).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override a config field by dotted path, e.g. `--set grid.points=1024`.
    #[arg(long = "set", global = true, value_name = "PATH=VALUE")]
    set: Vec<String>,
    /// Space dimension.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    /// Comma-separated exponents p_1,..,p_k.
    #[arg(long, global = true, value_name = "P1,P2,..")]
    p: Option<String>,
    /// Data size epsilon.
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Output directory (default: $DOUBLEDAMP_OUT/<kind>-<hash>).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Exponent calculus: gamma, classification, decay and lifespan exponents.
    Exponents,
    /// Decay slopes of the linear multipliers.
    Kernels,
    /// A single run with norm output.
    Simulate,
    /// Decay-rate experiment with fitted slopes.
    Decay,
    /// Run to blow-up.
    Blowup,
    /// Lifespan sweep over epsilon.
    Lifespan,
    /// Test-function checks.
    Testfunc,
    /// Temporal and spatial convergence study.
    Convergence,
}

impl Command {
    fn kind(self) -> ExperimentKind {
        match self {
            Command::Exponents => ExperimentKind::Exponents,
            Command::Kernels => ExperimentKind::Kernels,
            Command::Simulate => ExperimentKind::Simulate,
            Command::Decay => ExperimentKind::Decay,
            Command::Blowup => ExperimentKind::Blowup,
            Command::Lifespan => ExperimentKind::Lifespan,
            Command::Testfunc => ExperimentKind::Testfunc,
            Command::Convergence => ExperimentKind::Convergence,
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let kind = cli.command.kind();
    let mut cfg = match &cli.common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::preset(kind),
    };
    cfg.kind = kind;
    let c = &cli.common;
    if let Some(n) = c.n {
        cfg.params.n = n;
        cfg.grid.n = n;
    }
    if let Some(s) = c.sigma {
        cfg.params.sigma = s;
    }
    if let Some(p) = &c.p {
        cfg.params.p = parse_exponents(p)?;
    }
    if let Some(e) = c.eps {
        cfg.data.eps = e;
    }
    cfg.apply_overrides(&c.set)?;
    cfg.fit_data_to_params();
    cfg.params.validate()?;
    Ok(cfg)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
    format!("({})", parts.join(", "))
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

fn cmd_exponents(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<bool> {
    let r = ExponentReport::build(&cfg.params, cfg.exponents)?;
    println!("gamma = {}", fmt_vec(&r.gamma.gamma));
    println!("max gamma = {}, n/(2 sigma) = {}", r.gamma_max, r.threshold);
    println!("classification: {:?}", r.classification);
    match r.lifespan_exponent {
        Some(e) => println!("lifespan exponent = {e}"),
        None => println!("lifespan exponent: n/a"),
    }
    if let (Some(l2), Some(hs)) = (&r.decay_l2, &r.decay_hsigma) {
        println!(
            "decay exponents L2 = {}, H^sigma = {}",
            fmt_vec(l2),
            fmt_vec(hs)
        );
    }
    for note in &r.notes {
        println!("note: {note}");
    }
    out.write_json("report.json", &r)?;
    Ok(true)
}

fn cmd_kernels(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<bool> {
    let (n, sigma) = (cfg.params.n, cfg.params.sigma);
    let t = default_t_grid();
    let cases = [
        (Regime::L2L2, sigma),
        (Regime::L2L2, 2.0 * sigma),
        (Regime::L1L2, 0.0),
    ];
    let mut profiles = Vec::new();
    let mut pass = true;
    let mut csv = String::from("regime,s,slope,expected,r_squared\n");
    for (regime, s) in cases {
        let p = decay_profile(s, regime, n, sigma, &t)?;
        let ok = (p.slope - p.expected).abs() <= cfg.tolerances.kernel_slope;
        pass &= ok;
        println!(
            "{regime:?} s = {s}: slope {:.4} expected {:.4} R^2 {:.5} {}",
            p.slope,
            p.expected,
            p.r_squared,
            verdict(ok)
        );
        csv.push_str(&format!(
            "{regime:?},{s:?},{:?},{:?},{:?}\n",
            p.slope, p.expected, p.r_squared
        ));
        profiles.push(p);
    }
    out.write_json("kernels.json", &profiles)?;
    out.write_text("kernels.csv", &csv)?;
    Ok(pass)
}

fn norms_plot(title: &str, records: &[doubledamp::solver::NormRecord], k: usize) -> String {
    let ts: Vec<f64> = records.iter().map(|r| r.t).collect();
    let series: Vec<PlotSeries> = (0..k)
        .map(|l| PlotSeries {
            label: format!("||u_{}||_L2", l + 1),
            xs: ts.clone(),
            ys: records.iter().map(|r| r.norms.l2[l]).collect(),
        })
        .collect();
    loglog_svg(title, "t", "norm", &series, &[])
}

fn cmd_simulate(
    cfg: &ExperimentConfig,
    out: &mut OutputDir,
    cancel: Arc<AtomicBool>,
) -> Result<bool> {
    let s = &cfg.simulate;
    let mut options = RunOptions::new(s.t_end, s.dt);
    options.output_times = log_schedule(0.1, s.t_end, s.per_decade);
    options.nonlinear = s.nonlinear;
    options.cancel = Some(cancel);
    let r = run(&cfg.params, &cfg.grid, &cfg.data, &options)?;
    let k = cfg.params.k();
    out.write_text("norms.csv", &norms_csv(&r.records, k))?;
    out.write_text("norms.svg", &norms_plot("simulation", &r.records, k))?;
    out.write_json(
        "summary.json",
        &json!({ "blowup": r.blowup, "diagnostics": r.diagnostics, "data": r.data }),
    )?;
    match r.blowup {
        Some(b) => println!("blow-up at t = {} (+/- {:e})", b.time, b.uncertainty),
        None => println!(
            "reached t = {} in {} steps",
            r.diagnostics.t_reached, r.diagnostics.steps
        ),
    }
    if r.diagnostics.cancelled {
        println!("interrupted; partial outputs written");
    }
    Ok(true)
}

fn cmd_decay(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<bool> {
    let d = decay_experiment(
        &cfg.params,
        &cfg.grid,
        &cfg.data,
        &cfg.decay,
        &cfg.tolerances,
    )?;
    let k = cfg.params.k();
    out.write_text("norms.csv", &norms_csv(&d.records, k))?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|l| format!("x_{l}")));
    let hdr: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<f64>> = (0..d.xnorm.times.len())
        .map(|i| {
            std::iter::once(d.xnorm.times[i])
                .chain((0..k).map(|l| d.xnorm.values[l][i]))
                .collect()
        })
        .collect();
    out.write_text("xnorm.csv", &table_csv(&hdr, &rows))?;
    out.write_json(
        "decay.json",
        &json!({
            "windows": d.windows, "l2": d.l2, "hs": d.hs,
            "xnorm_ratio": d.xnorm_ratio, "diagnostics": d.diagnostics, "pass": d.pass
        }),
    )?;
    let ts: Vec<f64> = d.records.iter().map(|r| r.t).collect();
    let mut series = Vec::new();
    let mut lines = Vec::new();
    for l in 0..k {
        series.push(PlotSeries {
            label: format!("||u_{}||_L2", l + 1),
            xs: ts.clone(),
            ys: d.records.iter().map(|r| r.norms.l2[l]).collect(),
        });
        let f = &d.l2[l];
        lines.push(PlotLine {
            label: format!("fit {:.3}", f.slope),
            slope: f.slope,
            intercept: f.intercept,
            x0: f.window.0,
            x1: f.window.1,
            dashed: false,
        });
        println!(
            "u_{}: window [{:.1}, {:.1}]  L2 slope {:.4} {}  H^sigma slope {:.4} {}  xnorm max/min {:.3}",
            l + 1,
            f.window.0,
            f.window.1,
            f.slope,
            verdict(f.pass),
            d.hs[l].slope,
            verdict(d.hs[l].pass),
            d.xnorm_ratio[l]
        );
    }
    if let Some(f) = d.l2.last() {
        let anchor = f.intercept + f.slope * f.window.0.ln();
        lines.push(PlotLine {
            label: format!("expected {:.3}", f.expected),
            slope: f.expected,
            intercept: anchor - f.expected * f.window.0.ln(),
            x0: f.window.0,
            x1: f.window.1,
            dashed: true,
        });
    }
    out.write_text(
        "decay.svg",
        &loglog_svg("L2 decay", "t", "||u||_L2", &series, &lines),
    )?;
    Ok(d.pass)
}

fn cmd_blowup(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<bool> {
    let b = blowup_experiment(&cfg.params, &cfg.grid, &cfg.data, &cfg.blowup)?;
    out.write_text("norms.csv", &norms_csv(&b.records, cfg.params.k()))?;
    out.write_json(
        "blowup.json",
        &json!({
            "epsilon": b.epsilon, "time": b.time, "uncertainty": b.uncertainty,
            "sup": b.sup, "cap": b.cap, "diagnostics": b.diagnostics, "pass": b.blew_up()
        }),
    )?;
    match b.time {
        Some(t) if b.blew_up() => println!("blow-up at T = {t} (cap {}) PASS", b.cap),
        _ => println!("no blow-up before cap {} FAIL", b.cap),
    }
    Ok(b.blew_up())
}

fn cmd_lifespan(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<bool> {
    let s = lifespan_sweep(
        &cfg.params,
        &cfg.grid,
        &cfg.data,
        &cfg.lifespan,
        &cfg.tolerances,
    )?;
    out.write_text("lifespan.csv", &lifespan_csv(&s))?;
    out.write_json("lifespan.json", &s)?;
    println!("{:>10} {:>14} {:>12}", "epsilon", "T", "cap");
    for p in &s.points {
        let t = p.lifespan.map_or("none".to_string(), |t| format!("{t:.4}"));
        println!("{:>10} {:>14} {:>12.1}", p.epsilon, t, p.cap);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = s
        .points
        .iter()
        .filter_map(|p| p.lifespan.map(|t| (p.epsilon, t)))
        .unzip();
    let mut lines = Vec::new();
    if let Some(f) = &s.fit {
        println!(
            "slope {:.4} vs expected {} (+/- {}), R^2 {:.5}, monotone {}",
            f.slope, s.expected_exponent, f.tolerance, f.r_squared, s.monotone
        );
        lines.push(PlotLine {
            label: format!("fit {:.3}", f.slope),
            slope: f.slope,
            intercept: f.intercept,
            x0: f.window.0,
            x1: f.window.1,
            dashed: false,
        });
        let mid = (f.window.0 * f.window.1).sqrt();
        let anchor = f.intercept + f.slope * mid.ln();
        lines.push(PlotLine {
            label: format!("expected {}", s.expected_exponent),
            slope: s.expected_exponent,
            intercept: anchor - s.expected_exponent * mid.ln(),
            x0: f.window.0,
            x1: f.window.1,
            dashed: true,
        });
    } else {
        println!("too few blow-ups for a fit");
    }
    let series = [PlotSeries {
        label: "T(eps)".into(),
        xs,
        ys,
    }];
    out.write_text(
        "lifespan.svg",
        &loglog_svg("lifespan", "epsilon", "T", &series, &lines),
    )?;
    println!("{}", verdict(s.pass));
    Ok(s.pass)
}

fn cmd_testfunc(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<bool> {
    let tc = &cfg.testfunc;
    let tol = &cfg.tolerances;
    let (n, sigma) = (cfg.params.n, cfg.params.sigma);
    let q = n as f64 + 2.0 * sigma_bar(sigma);
    let mut records = Vec::new();

    let sweep = lemma_3_2_sweep(&tc.nus, &tc.radii, q, n, tc.base_points)?;
    let mut rows = Vec::new();
    for r in &sweep {
        let pass = r.improves() && r.fine.relative_error < tol.lemma_scaling;
        println!(
            "scaling nu = {} R = {}: error {:.3e} -> {:.3e} {}",
            r.fine.nu,
            r.fine.r,
            r.coarse.relative_error,
            r.fine.relative_error,
            verdict(pass)
        );
        rows.push(vec![
            r.fine.nu,
            r.fine.r,
            r.coarse.points as f64,
            r.coarse.relative_error,
            r.fine.points as f64,
            r.fine.relative_error,
        ]);
        records.push(VerificationRecord {
            lemma: "scaling".into(),
            params: json!({ "nu": r.fine.nu, "R": r.fine.r, "q": q, "points": [r.coarse.points, r.fine.points] }),
            value: r.fine.relative_error,
            pass,
        });
    }
    out.write_text(
        "lemma32.csv",
        &table_csv(
            &[
                "nu",
                "R",
                "coarse_points",
                "coarse_error",
                "fine_points",
                "fine_error",
            ],
            &rows,
        ),
    )?;

    let mut nus = vec![sigma];
    nus.extend(
        tc.nus
            .iter()
            .copied()
            .filter(|v| (*v - sigma).abs() > 1e-12),
    );
    for nu in nus {
        let coarse = GridSpec::new(n, tc.ratio_points, tc.ratio_half_length)?;
        let fine = GridSpec::new(n, 2 * tc.ratio_points, tc.ratio_half_length)?;
        let a = check_lemma_3_1(nu, q, &coarse)?;
        let b = check_lemma_3_1(nu, q, &fine)?;
        let change = (a.sup_ratio - b.sup_ratio).abs() / b.sup_ratio;
        let pass = b.sup_ratio.is_finite() && change < tol.lemma_stability;
        println!(
            "decay ratio nu = {nu} q = {q}: sup {:.6} / {:.6} (change {:.2e}) {}",
            a.sup_ratio,
            b.sup_ratio,
            change,
            verdict(pass)
        );
        records.push(VerificationRecord {
            lemma: "decay_ratio".into(),
            params: json!({ "nu": nu, "q": q, "weight": b.weight, "points": [a.points, b.points] }),
            value: b.sup_ratio,
            pass,
        });
    }

    let mut ps = cfg.params.p.clone();
    ps.sort_by(f64::total_cmp);
    ps.dedup();
    for &p in &ps {
        let res = verify_eta_condition(p, &Eta { mu: tc.mu });
        let (value, pass) = match &res {
            Ok(c) => (c.sup, true),
            Err(Error::ConditionViolated { value, .. }) => (*value, false),
            Err(_) => (f64::NAN, false),
        };
        println!(
            "cutoff condition lambda = {p}, mu = {}: {:.4e} {}",
            tc.mu,
            value,
            verdict(pass)
        );
        records.push(VerificationRecord {
            lemma: "cutoff".into(),
            params: json!({ "lambda": p, "mu": tc.mu }),
            value,
            pass,
        });
    }

    let gn_points = if n == 1 { 4096 } else { 512 };
    let gn_grid = GridSpec::new(n, gn_points, 40.0)?;
    for q in ps.iter().flat_map(|&p| [p, 2.0 * p]) {
        let gn = GnParams {
            q,
            q1: 2.0,
            q2: 2.0,
            a: 0.0,
            s: sigma,
        };
        let r = gn_scaling_check(&gn_grid, &gn, &[0.5, 1.0, 2.0, 4.0])?;
        let pass = r.ratio_spread <= tol.gn_scaling;
        println!(
            "GN scaling q = {q}: theta {:.4}, slopes {:.4} / {:.4}, spread {:.2e} {}",
            r.theta,
            r.lhs_slope,
            r.rhs_slope,
            r.ratio_spread,
            verdict(pass)
        );
        records.push(VerificationRecord {
            lemma: "gn_scaling".into(),
            params: json!({ "q": q, "q1": 2.0, "q2": 2.0, "a": 0.0, "s": sigma, "theta": r.theta }),
            value: r.ratio_spread,
            pass,
        });
    }
    let pass = records.iter().all(|r| r.pass);
    out.write_json("testfunc.json", &records)?;
    Ok(pass)
}

fn cmd_convergence(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<bool> {
    let t = convergence_study(&cfg.params, &cfg.grid, &cfg.data, &cfg.convergence)?;
    let rows: Vec<Vec<f64>> = t
        .dts
        .iter()
        .zip(&t.errors)
        .map(|(d, e)| vec![*d, *e])
        .collect();
    out.write_text("convergence.csv", &table_csv(&["dt", "error"], &rows))?;
    for (d, e) in t.dts.iter().zip(&t.errors) {
        println!("dt {d:e}: error {e:.4e}");
    }
    println!("ratios {}", fmt_vec(&t.ratios));
    for row in &t.spatial {
        println!("N = {}: spectral tail {:.3e}", row.points, row.tail);
    }
    let pass = if cfg.convergence.nonlinear {
        t.second_order(&cfg.tolerances)
    } else {
        t.errors.iter().all(|e| *e < 1e-10)
    };
    out.write_json("convergence.json", &json!({ "table": t, "pass": pass }))?;
    println!("{}", verdict(pass));
    Ok(pass)
}

fn execute(cli: &Cli, cancel: Arc<AtomicBool>) -> Result<bool> {
    if let Some(t) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let cfg = resolve_config(cli)?;
    let mut out = OutputDir::create(&cfg.resolve_output(cli.common.out.as_deref()))?;
    out.write_config(&cfg)?;
    let pass = match cli.command {
        Command::Exponents => cmd_exponents(&cfg, &mut out)?,
        Command::Kernels => cmd_kernels(&cfg, &mut out)?,
        Command::Simulate => cmd_simulate(&cfg, &mut out, cancel)?,
        Command::Decay => cmd_decay(&cfg, &mut out)?,
        Command::Blowup => cmd_blowup(&cfg, &mut out)?,
        Command::Lifespan => cmd_lifespan(&cfg, &mut out)?,
        Command::Testfunc => cmd_testfunc(&cfg, &mut out)?,
        Command::Convergence => cmd_convergence(&cfg, &mut out)?,
    };
    println!("outputs: {}", out.path().display());
    Ok(pass)
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
    let cancel = Arc::new(AtomicBool::new(false));
    let cancellable = matches!(cli.command, Command::Simulate);
    let flag = cancel.clone();
    let _ = ctrlc::set_handler(move || {
        if !cancellable || flag.swap(true, Ordering::SeqCst) {
            std::process::exit(130);
        }
    });
    match execute(&cli, cancel) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
