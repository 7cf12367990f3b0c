use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use hysim::config::{self, Format, Overrides, Scenario};
use hysim::format::sig9;
use hysim::run::{self, write_csv, BENCHMARK_HEADER, SWEEP_HEADER};
use hysim_core::bargaining::solve_bargaining_with;
use hysim_core::market::{check_me_uniqueness, iterate_dynamics, solve_equilibrium, EquilibriumCase};
use hysim_core::pricing::{check_ne_uniqueness, solve_mscg};
use hysim_core::{validate_model, MarketShares, PriceVector};

#[derive(Parser)]
#[command(name = "hysim", version, about = "Hybrid spectrum and information market scenarios")]
struct Cli {
    /// Output file (default: the config's output.path, else stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for Monte Carlo runs
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Pricing-game convergence tolerance
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Suppress summaries on stderr
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the externality model assumptions at every R_L point
    Validate { config: PathBuf },
    /// User-choice equilibrium at fixed prices, with the adjustment trace
    Equilibrium {
        config: PathBuf,
        #[arg(long = "p_l")]
        p_l: f64,
        #[arg(long = "p_a")]
        p_a: f64,
        /// Starting shares for the trace
        #[arg(long = "eta_l0", default_value_t = 0.0)]
        eta_l0: f64,
        #[arg(long = "eta_a0", default_value_t = 0.0)]
        eta_a0: f64,
        #[arg(long = "r_l")]
        r_l: Option<f64>,
    },
    /// Price competition at a fixed revenue share
    Pcg {
        config: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long = "r_l")]
        r_l: Option<f64>,
    },
    /// Nash bargaining over the revenue share
    Bargain {
        config: PathBuf,
        #[arg(long = "r_l")]
        r_l: Option<f64>,
    },
    /// Full pipeline and benchmarks over the configured R_L points
    Sweep { config: PathBuf },
    /// Tabulate f and g from the Monte Carlo interference model
    DeriveExternality { config: PathBuf },
}

enum Status {
    Done,
    Flagged,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    run::init_threads();
    match dispatch(&cli) {
        Ok(Status::Done) => ExitCode::SUCCESS,
        Ok(Status::Flagged) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    scenario: Scenario,
}

impl Ctx<'_> {
    fn format(&self) -> Format {
        self.cli.format.or(self.scenario.config.output.format).unwrap_or_default()
    }

    /// `--out`, falling back to the config's output path for the commands
    /// that produce result files.
    fn out_path(&self) -> Option<PathBuf> {
        let files = matches!(self.cli.command, Command::Sweep { .. } | Command::DeriveExternality { .. });
        self.cli.out.clone().or_else(|| if files { self.scenario.config.output.path.clone() } else { None })
    }

    fn open(&self) -> Result<Box<dyn Write>> {
        open(self.out_path().as_deref())
    }

    fn note(&self, msg: impl AsRef<str>) {
        if !self.cli.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn open(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot write {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn dispatch(cli: &Cli) -> Result<Status> {
    let (path, r_l) = match &cli.command {
        Command::Validate { config } | Command::Sweep { config } | Command::DeriveExternality { config } => {
            (config, None)
        }
        Command::Equilibrium { config, r_l, .. } | Command::Pcg { config, r_l, .. } | Command::Bargain { config, r_l } => {
            (config, *r_l)
        }
    };
    let overrides = Overrides { seed: cli.seed, tol: cli.tol, r_l };
    let ctx = Ctx { cli, scenario: config::load(path, &overrides)? };
    match &cli.command {
        Command::Validate { .. } => validate(&ctx),
        Command::Equilibrium { p_l, p_a, eta_l0, eta_a0, .. } => equilibrium(&ctx, *p_l, *p_a, *eta_l0, *eta_a0),
        Command::Pcg { delta, .. } => pcg(&ctx, *delta),
        Command::Bargain { .. } => bargain(&ctx),
        Command::Sweep { .. } => sweep(&ctx),
        Command::DeriveExternality { .. } => derive(&ctx),
    }
}

fn validate(ctx: &Ctx) -> Result<Status> {
    let base = ctx.scenario.base_model()?;
    let mut rows = Vec::new();
    let mut passed = true;
    for r_l in ctx.scenario.points() {
        let model = base.model.with_leasing_quality(r_l)?;
        let report = validate_model(&model, base.grid_n, base.shape_tol);
        passed &= report.passed;
        for c in &report.checks {
            rows.push((r_l, c.assumption.as_str().to_string(), c.passed, c.worst, c.at, None));
        }
        let me = check_me_uniqueness(&model, base.grid_n.min(101));
        let at = Some(me.worst_at);
        rows.push((r_l, "unique market equilibrium (every point)".into(), me.forall_pass, me.worst_lhs - 1.0, 0.0, at));
        rows.push((r_l, "unique market equilibrium (some point)".into(), me.exists_pass, me.worst_lhs - 1.0, 0.0, at));
    }
    let mut w = ctx.open()?;
    match ctx.format() {
        Format::Csv => write_csv(
            &mut w,
            &["R_L", "check", "passed", "worst", "at"],
            rows.iter().map(|(r, name, ok, worst, at, shares)| {
                let at = match shares {
                    Some(s) => format!("({} {})", sig9(s.eta_l), sig9(s.eta_a)),
                    None => sig9(*at),
                };
                vec![sig9(*r), name.clone(), ok.to_string(), sig9(*worst), at]
            }),
        )?,
        Format::Json => {
            let v: Vec<_> = rows
                .iter()
                .map(|(r, name, ok, worst, at, shares)| {
                    json!({"R_L": r, "check": name, "passed": ok, "worst": finite(*worst),
                           "at": shares.map(|s| json!([s.eta_l, s.eta_a])).unwrap_or(json!(at))})
                })
                .collect();
            serde_json::to_writer_pretty(&mut w, &json!({"passed": passed, "checks": v}))?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    if !passed {
        anyhow::bail!("model assumptions fail (see report)");
    }
    ctx.note("all externality assumptions hold");
    Ok(Status::Done)
}

fn finite(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn single_model(ctx: &Ctx) -> Result<hysim_core::ExternalityModel> {
    let r_l = ctx.scenario.single_point()?;
    ctx.scenario.base_model()?.at(r_l)
}

fn equilibrium(ctx: &Ctx, p_l: f64, p_a: f64, eta_l0: f64, eta_a0: f64) -> Result<Status> {
    let model = single_model(ctx)?;
    let prices = PriceVector::new(p_l, p_a)?;
    let opts = ctx.scenario.market();
    let eq = solve_equilibrium(&model, prices, opts)?;
    let start = MarketShares::new(eta_l0, eta_a0)?;
    let trace = iterate_dynamics(&model, prices, start, opts.tol, opts.max_iter, opts.damping)?;
    let case = match eq.case {
        EquilibriumCase::A => "A",
        EquilibriumCase::B => "B",
    };
    let summary = format!(
        "eta_l={} eta_a={} case={} residual={} iterations={}{}",
        sig9(eq.shares.eta_l),
        sig9(eq.shares.eta_a),
        case,
        sig9(eq.residual),
        eq.iterations,
        if eq.multiplicity_warning { " uniqueness=unverified" } else { "" }
    );
    let steps = trace.states.iter().zip(&trace.deltas).enumerate();
    match ctx.format() {
        Format::Csv => {
            if !ctx.cli.quiet {
                println!("{summary}");
            }
            let mut w = ctx.open()?;
            if ctx.out_path().is_none() && !ctx.cli.quiet {
                writeln!(w)?;
            }
            write_csv(
                &mut w,
                &["t", "eta_l", "eta_a", "delta_l", "delta_a"],
                steps.map(|(t, (s, d))| vec![t.to_string(), sig9(s.eta_l), sig9(s.eta_a), sig9(d.0), sig9(d.1)]),
            )?;
        }
        Format::Json => {
            let trace: Vec<_> = steps.map(|(t, (s, d))| json!({"t": t, "eta_l": s.eta_l, "eta_a": s.eta_a, "delta_l": d.0, "delta_a": d.1})).collect();
            let mut w = ctx.open()?;
            serde_json::to_writer_pretty(
                &mut w,
                &json!({"eta_l": eq.shares.eta_l, "eta_a": eq.shares.eta_a, "case": case,
                        "residual": eq.residual, "iterations": eq.iterations,
                        "multiplicity_warning": eq.multiplicity_warning, "trace": trace}),
            )?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    if eq.multiplicity_warning {
        ctx.note("the sufficient uniqueness condition fails for this model; the equilibrium reached from (0, 0) is reported");
    }
    Ok(Status::Done)
}

fn pcg(ctx: &Ctx, delta: f64) -> Result<Status> {
    if !(0.0..=1.0).contains(&delta) {
        anyhow::bail!("--delta must lie in [0, 1], got {delta}");
    }
    let model = single_model(ctx)?;
    let opts = ctx.scenario.mscg();
    let eq = solve_mscg(&model, delta, opts)?;
    let converged = eq.converged(opts.tol);
    let unique = check_ne_uniqueness(&model, delta, 41, 1e-9).passed;
    let fields = [
        ("delta", delta),
        ("eta_l", eq.shares.eta_l),
        ("eta_a", eq.shares.eta_a),
        ("p_l", eq.prices.p_l),
        ("p_a", eq.prices.p_a),
        ("u_sl", eq.payoffs.u_sl),
        ("u_db", eq.payoffs.u_db),
        ("bracket_gap", eq.bracket_gap),
    ];
    emit_fields(ctx, &fields, &[("converged", converged), ("uniqueness_check", unique)])?;
    if !converged {
        ctx.note(format!("best-response brackets did not meet (gap {:e}); reporting the lower limit", eq.bracket_gap));
        return Ok(Status::Flagged);
    }
    Ok(Status::Done)
}

fn emit_fields(ctx: &Ctx, fields: &[(&str, f64)], bools: &[(&str, bool)]) -> Result<()> {
    let mut w = ctx.open()?;
    match ctx.format() {
        Format::Csv => {
            let mut header: Vec<&str> = fields.iter().map(|f| f.0).collect();
            header.extend(bools.iter().map(|b| b.0));
            let mut record: Vec<String> = fields.iter().map(|f| sig9(f.1)).collect();
            record.extend(bools.iter().map(|b| b.1.to_string()));
            write_csv(&mut w, &header, [record])?;
        }
        Format::Json => {
            let mut m = serde_json::Map::new();
            for (k, v) in fields {
                m.insert(k.to_string(), finite(*v));
            }
            for (k, v) in bools {
                m.insert(k.to_string(), json!(v));
            }
            serde_json::to_writer_pretty(&mut w, &m)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn bargain(ctx: &Ctx) -> Result<Status> {
    let model = single_model(ctx)?;
    let out = solve_bargaining_with(&model, &ctx.scenario.bargaining(), run::par_grid)?;
    let eq = &out.equilibrium;
    let fields = [
        ("delta_star", out.delta_star),
        ("w_equiv", out.w_equiv),
        ("revenue_transfer", out.revenue_transfer),
        ("eta_l", eq.shares.eta_l),
        ("eta_a", eq.shares.eta_a),
        ("p_l", eq.prices.p_l),
        ("p_a", eq.prices.p_a),
        ("u_sl", out.payoffs.u_sl),
        ("u_db", out.payoffs.u_db),
        ("u_sl_0", out.disagreement.u_sl),
        ("u_db_0", out.disagreement.u_db),
        ("nash_product", out.nash_product),
    ];
    emit_fields(ctx, &fields, &[("feasible", out.feasible), ("multiple_equilibria", out.multiple_equilibria)])?;
    if !out.feasible {
        ctx.note("no revenue share satisfies both participation constraints");
    }
    Ok(if out.feasible && !out.multiple_equilibria { Status::Done } else { Status::Flagged })
}

fn sweep(ctx: &Ctx) -> Result<Status> {
    let base = ctx.scenario.base_model()?;
    let out = run::run_sweep(&ctx.scenario, &base)?;
    let path = ctx.out_path();
    let format = ctx.format();
    let mut w = open(path.as_deref())?;
    match format {
        Format::Csv => write_csv(&mut w, &SWEEP_HEADER, out.rows.iter().map(|r| r.record()))?,
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, &out.rows)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    if let Some(p) = &path {
        let side = sidecar(p, "benchmarks", format);
        let mut w = open(Some(&side))?;
        match format {
            Format::Csv => write_csv(&mut w, &BENCHMARK_HEADER, out.benchmarks.iter().map(|b| b.record()))?,
            Format::Json => {
                serde_json::to_writer_pretty(&mut w, &out.benchmarks)?;
                writeln!(w)?;
            }
        }
        w.flush()?;
        ctx.note(format!("wrote {} rows to {} and benchmarks to {}", out.rows.len(), p.display(), side.display()));
    }
    for r in out.rows.iter().filter(|r| !r.flags.is_empty()) {
        ctx.note(format!("R_L = {}: {}", sig9(r.r_l), r.flags.join("; ")));
    }
    Ok(if out.flagged() { Status::Flagged } else { Status::Done })
}

fn sidecar(path: &Path, tag: &str, format: Format) -> PathBuf {
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    path.with_extension(format!("{tag}.{ext}"))
}

fn derive(ctx: &Ctx) -> Result<Status> {
    let mc = ctx.scenario.config.mc.as_ref().context("missing field `mc`")?;
    let im = ctx.scenario.interference_model()?;
    let r_l = ctx.scenario.points()[0];
    let d = hysim_core::infovalue::derive_externality_with(&im, &mc.x_grid, &mc.y_grid, mc.ref_eta_l, r_l, &run::par_batches)?;
    let prefix = ctx.out_path().unwrap_or_else(|| PathBuf::from("externality")).with_extension("");
    let file = |suffix: &str| PathBuf::from(format!("{}.{suffix}", prefix.display()));
    let (f_path, g_path, meta_path) = (file("f.csv"), file("g.csv"), file("meta.json"));
    let column = |path: &Path, name: &str, xs: &[f64], vs: &[f64]| -> Result<()> {
        let mut w = open(Some(path))?;
        write_csv(&mut w, &[if name == "f" { "x" } else { "y" }, name], xs.iter().zip(vs).map(|(x, v)| vec![sig9(*x), sig9(*v)]))
    };
    column(&f_path, "f", &d.x, &d.f)?;
    column(&g_path, "g", &d.y, &d.g)?;
    let (ok, total) = d.monotone_within_ci();
    let meta = json!({
        "seed": ctx.scenario.seed,
        "samples": im.samples,
        "R_L": r_l,
        "ref_eta_l": mc.ref_eta_l,
        "mc": mc,
        "raw_f": d.raw_f,
        "ci_f": d.ci_f,
        "raw_g": d.raw_g,
        "ci_g": d.ci_g,
        "shape_tolerance": d.tolerance,
        "separability_residual": d.separability_residual,
        "knot_curvature": d.knot_curvature,
        "monotone_within_ci": {"ok": ok, "total": total},
    });
    let mut w = open(Some(&meta_path))?;
    serde_json::to_writer_pretty(&mut w, &meta)?;
    writeln!(w)?;
    w.flush()?;
    ctx.note(format!(
        "wrote {}, {}, {} (separability residual {})",
        f_path.display(),
        g_path.display(),
        meta_path.display(),
        sig9(d.separability_residual)
    ));
    Ok(Status::Done)
}
