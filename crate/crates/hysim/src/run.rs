//! Scenario execution: one row per R_L point, benchmarks alongside.

use std::io::Write;

use anyhow::Result;
use rayon::prelude::*;
use serde::Serialize;

use hysim_core::bargaining::{solve_bargaining_with, BargainingPoint};
use hysim_core::benchmarks::{
    coordination_benchmark, noncooperation_benchmark, third_party_benchmark, BenchmarkResult,
};
use hysim_core::infovalue::Moments;
use hysim_core::pricing::solve_mscg;
use hysim_core::ExternalityModel;

use crate::config::{BargainingMode, BaseModel, Scenario};
use crate::format::{cell, sig9};

/// Worker count from `HYSIM_THREADS`, if set to a positive integer.
pub fn configured_threads() -> Option<usize> {
    std::env::var("HYSIM_THREADS").ok()?.trim().parse().ok().filter(|&n| n > 0)
}

/// Size the global rayon pool. Safe to call more than once.
pub fn init_threads() {
    if let Some(n) = configured_threads() {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

pub fn par_batches(n: usize, job: &(dyn Fn(usize) -> Moments + Sync)) -> Vec<Moments> {
    (0..n).into_par_iter().map(job).collect()
}

pub fn par_grid(
    deltas: &[f64],
    job: &(dyn Fn(f64) -> hysim_core::Result<BargainingPoint> + Sync),
) -> Vec<hysim_core::Result<BargainingPoint>> {
    deltas.par_iter().map(|&d| job(d)).collect()
}

pub const SWEEP_HEADER: [&str; 17] = [
    "R_L",
    "delta_star",
    "w_equiv",
    "revenue_transfer",
    "p_l",
    "p_a",
    "eta_l",
    "eta_a",
    "u_sl",
    "u_db",
    "net_rss",
    "net_coord",
    "net_noncoop",
    "net_third",
    "gain_vs_noncoop",
    "gap_vs_coord",
    "flags",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "R_L")]
    pub r_l: f64,
    pub delta_star: Option<f64>,
    pub w_equiv: Option<f64>,
    pub revenue_transfer: Option<f64>,
    pub p_l: Option<f64>,
    pub p_a: Option<f64>,
    pub eta_l: Option<f64>,
    pub eta_a: Option<f64>,
    pub u_sl: Option<f64>,
    pub u_db: Option<f64>,
    pub net_rss: Option<f64>,
    pub net_coord: Option<f64>,
    pub net_noncoop: Option<f64>,
    pub net_third: Option<f64>,
    pub gain_vs_noncoop: Option<f64>,
    pub gap_vs_coord: Option<f64>,
    pub flags: Vec<String>,
}

impl SweepRow {
    fn empty(r_l: f64) -> Self {
        SweepRow {
            r_l,
            delta_star: None,
            w_equiv: None,
            revenue_transfer: None,
            p_l: None,
            p_a: None,
            eta_l: None,
            eta_a: None,
            u_sl: None,
            u_db: None,
            net_rss: None,
            net_coord: None,
            net_noncoop: None,
            net_third: None,
            gain_vs_noncoop: None,
            gap_vs_coord: None,
            flags: Vec::new(),
        }
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![sig9(self.r_l)];
        r.extend(
            [
                self.delta_star,
                self.w_equiv,
                self.revenue_transfer,
                self.p_l,
                self.p_a,
                self.eta_l,
                self.eta_a,
                self.u_sl,
                self.u_db,
                self.net_rss,
                self.net_coord,
                self.net_noncoop,
                self.net_third,
                self.gain_vs_noncoop,
                self.gap_vs_coord,
            ]
            .map(cell),
        );
        r.push(self.flags.join(";"));
        r
    }
}

pub const BENCHMARK_HEADER: [&str; 10] =
    ["R_L", "name", "eta_l", "eta_a", "p_l", "p_a", "u_sl", "u_db", "network_profit", "note"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    #[serde(rename = "R_L")]
    pub r_l: f64,
    pub name: &'static str,
    pub eta_l: f64,
    pub eta_a: f64,
    pub p_l: f64,
    pub p_a: f64,
    pub u_sl: f64,
    pub u_db: f64,
    pub network_profit: f64,
    pub note: String,
}

impl BenchmarkRow {
    fn new(r_l: f64, b: &BenchmarkResult) -> Self {
        let mut note = Vec::new();
        if b.reconstructed {
            note.push("reconstructed");
        }
        if !b.unique {
            note.push("multiple_equilibria");
        }
        BenchmarkRow {
            r_l,
            name: b.kind.as_str(),
            eta_l: b.shares.eta_l,
            eta_a: b.shares.eta_a,
            p_l: b.prices.p_l,
            p_a: b.prices.p_a,
            u_sl: b.u_sl,
            u_db: b.u_db,
            network_profit: b.network_profit,
            note: note.join(";"),
        }
    }

    pub fn record(&self) -> Vec<String> {
        let mut r = vec![sig9(self.r_l), self.name.to_string()];
        r.extend(
            [self.eta_l, self.eta_a, self.p_l, self.p_a, self.u_sl, self.u_db, self.network_profit].map(sig9),
        );
        r.push(self.note.clone());
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub row: SweepRow,
    pub benchmarks: Vec<BenchmarkRow>,
}

fn ratio(num: Option<f64>, den: Option<f64>) -> Option<f64> {
    match (num, den) {
        (Some(n), Some(d)) if d > 0.0 => Some(n / d),
        _ => None,
    }
}

/// Solve the full pipeline at one leasing quality. Solver failures become
/// flags and empty cells rather than errors.
pub fn solve_point(scenario: &Scenario, model: &ExternalityModel) -> PointResult {
    let r_l = model.r_l();
    let mut row = SweepRow::empty(r_l);
    let mut benchmarks = Vec::new();
    let mscg = scenario.mscg();
    let br_tol = mscg.br_tol;

    let rss = match scenario.config.bargaining.mode {
        BargainingMode::Nash => solve_bargaining_with(model, &scenario.bargaining(), par_grid).map(|o| {
            if !o.feasible {
                row.flags.push("infeasible".into());
            }
            if o.multiple_equilibria {
                row.flags.push("multiple_equilibria".into());
            }
            (o.delta_star, o.w_equiv, o.revenue_transfer, o.equilibrium)
        }),
        BargainingMode::Fixed => {
            let delta = scenario.config.bargaining.delta.expect("checked at load");
            solve_mscg(model, delta, mscg).map(|eq| {
                if !eq.converged(mscg.tol) {
                    row.flags.push("multiple_equilibria".into());
                }
                let (l, p) = (eq.shares.eta_l, eq.prices.p_l);
                (delta, delta * l, delta * p * l, eq)
            })
        }
    };
    match rss {
        Ok((delta, w, transfer, eq)) => {
            row.delta_star = Some(delta);
            row.w_equiv = Some(w);
            row.revenue_transfer = Some(transfer);
            row.p_l = Some(eq.prices.p_l);
            row.p_a = Some(eq.prices.p_a);
            row.eta_l = Some(eq.shares.eta_l);
            row.eta_a = Some(eq.shares.eta_a);
            row.u_sl = Some(eq.payoffs.u_sl);
            row.u_db = Some(eq.payoffs.u_db);
            row.net_rss = Some(eq.payoffs.total());
        }
        Err(e) => row.flags.push(format!("error: {e}")),
    }

    let coord = coordination_benchmark(model, br_tol);
    let noncoop = noncooperation_benchmark(model, br_tol);
    row.net_coord = Some(coord.network_profit);
    row.net_noncoop = Some(noncoop.network_profit);
    benchmarks.push(BenchmarkRow::new(r_l, &coord));
    benchmarks.push(BenchmarkRow::new(r_l, &noncoop));
    if let Some(tp) = &scenario.config.third_party {
        match third_party_benchmark(model, tp.delta_3p, mscg) {
            Ok(b) => {
                if !b.unique {
                    row.flags.push("third_party_multiple_equilibria".into());
                }
                row.net_third = Some(b.network_profit);
                benchmarks.push(BenchmarkRow::new(r_l, &b));
            }
            Err(e) => row.flags.push(format!("third_party error: {e}")),
        }
    }

    row.gain_vs_noncoop = ratio(row.net_rss, row.net_noncoop).map(|r| r - 1.0);
    row.gap_vs_coord = ratio(row.net_rss, row.net_coord).map(|r| 1.0 - r);
    PointResult { row, benchmarks }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub benchmarks: Vec<BenchmarkRow>,
}

impl SweepOutput {
    pub fn flagged(&self) -> bool {
        self.rows.iter().any(|r| !r.flags.is_empty())
    }
}

/// Every point is validated before any solving, so a bad R_L fails the run
/// as a whole. Points run in parallel and come back sorted by R_L.
pub fn run_sweep(scenario: &Scenario, base: &BaseModel) -> Result<SweepOutput> {
    let models = scenario.points().into_iter().map(|r| base.at(r)).collect::<Result<Vec<_>>>()?;
    let mut results: Vec<PointResult> = models.par_iter().map(|m| solve_point(scenario, m)).collect();
    results.sort_by(|a, b| a.row.r_l.total_cmp(&b.row.r_l));
    let mut out = SweepOutput { rows: Vec::new(), benchmarks: Vec::new() };
    for r in results {
        out.rows.push(r.row);
        out.benchmarks.extend(r.benchmarks);
    }
    Ok(out)
}

pub fn write_csv<W: Write>(w: W, header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(header)?;
    for r in records {
        writer.write_record(&r)?;
    }
    writer.flush()?;
    Ok(())
}
