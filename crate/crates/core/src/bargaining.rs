//! Nash bargaining over the revenue share `delta`.
//!
//! Without agreement the licensee earns nothing and the database falls
//! back to the information-only market. With agreement `delta`, both earn
//! their payoffs at the price equilibrium induced by `delta`.

use alloc::vec::Vec;

use crate::error::Result;
use crate::externality::ExternalityModel;
use crate::optimize::{golden_max, linspace, GridGolden};
use crate::pricing::{solve_mscg, MscgOptions, NashEquilibrium, PayoffPair};

/// The database's optimum in the information-only market, found over the
/// inverse price map `p_a = (1 - eta_a) g(eta_a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureInformationOptimum {
    pub eta_a: f64,
    pub p_a: f64,
    pub profit: f64,
}

pub fn pure_information_optimum(model: &ExternalityModel, tol: f64) -> PureInformationOptimum {
    let m = GridGolden::new(256, tol).maximize(|y| (1.0 - y) * model.g(y) * y, 0.0, 1.0);
    let p_a = (1.0 - m.x) * model.g(m.x);
    PureInformationOptimum { eta_a: m.x, p_a, profit: m.value.max(0.0) }
}

/// `(U_SL_0, U_DB_0) = (0, pure-information profit)`. Independent of `R_L`.
pub fn disagreement_points(model: &ExternalityModel, tol: f64) -> PayoffPair {
    PayoffPair { u_sl: 0.0, u_db: pure_information_optimum(model, tol).profit }
}

/// Which disagreement payoff is subtracted from which agreement payoff.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Pairing {
    /// `(U_DB - U_DB_0)(U_SL - U_SL_0)`, the standard Nash product.
    #[default]
    Own,
    /// `(U_DB - U_SL_0)(U_SL - U_DB_0)`, crossed subscripts.
    Crossed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BargainingOptions {
    pub grid_n: usize,
    /// Refinement tolerance on `delta`.
    pub tol: f64,
    pub pairing: Pairing,
    pub mscg: MscgOptions,
}

impl Default for BargainingOptions {
    fn default() -> Self {
        BargainingOptions { grid_n: 101, tol: 1e-6, pairing: Pairing::Own, mscg: MscgOptions::default() }
    }
}

/// Objective and constraint status at one `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BargainingPoint {
    pub delta: f64,
    pub equilibrium: NashEquilibrium,
    /// The plain product of the two gains.
    pub product: f64,
    /// Equal to `product` when both gains are nonnegative, strictly
    /// negative otherwise.
    pub objective: f64,
    pub feasible: bool,
    /// The price brackets met at this `delta`.
    pub unique: bool,
}

fn gains(payoffs: PayoffPair, d: PayoffPair, pairing: Pairing) -> (f64, f64) {
    match pairing {
        Pairing::Own => (payoffs.u_db - d.u_db, payoffs.u_sl - d.u_sl),
        Pairing::Crossed => (payoffs.u_db - d.u_sl, payoffs.u_sl - d.u_db),
    }
}

pub fn evaluate(model: &ExternalityModel, delta: f64, disagreement: PayoffPair, opts: &BargainingOptions) -> Result<BargainingPoint> {
    let equilibrium = solve_mscg(model, delta, opts.mscg)?;
    let (a, b) = gains(equilibrium.payoffs, disagreement, opts.pairing);
    let product = a * b;
    let feasible = a >= 0.0 && b >= 0.0;
    let objective = if feasible { product } else { a.min(0.0) + b.min(0.0) - product.abs() };
    let unique = equilibrium.converged(opts.mscg.tol);
    Ok(BargainingPoint { delta, equilibrium, product, objective, feasible, unique })
}

/// The Nash product at `delta`; negative when a participation constraint fails.
pub fn nash_objective(model: &ExternalityModel, delta: f64, opts: &BargainingOptions) -> Result<f64> {
    let d = disagreement_points(model, opts.mscg.br_tol);
    Ok(evaluate(model, delta, d, opts)?.objective)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BargainingOutcome {
    pub delta_star: f64,
    pub payoffs: PayoffPair,
    pub disagreement: PayoffPair,
    pub nash_product: f64,
    /// `delta* * eta_l*`.
    pub w_equiv: f64,
    /// `delta* * p_l* * eta_l*`, the revenue actually handed over.
    pub revenue_transfer: f64,
    pub feasible: bool,
    /// Some `delta` visited during the search had unresolved price brackets.
    pub multiple_equilibria: bool,
    pub equilibrium: NashEquilibrium,
}

pub fn equivalent_wholesale_price(delta_star: f64, equilibrium: &NashEquilibrium) -> f64 {
    delta_star * equilibrium.shares.eta_l
}

/// Grid search over `[0, 1]` followed by golden-section refinement of the
/// best cell. Infeasible problems return the maximiser of the plain
/// product with `feasible = false`.
pub fn solve_bargaining(model: &ExternalityModel, opts: &BargainingOptions) -> Result<BargainingOutcome> {
    solve_bargaining_with(model, opts, |deltas, eval| deltas.iter().map(|&d| eval(d)).collect())
}

/// As [`solve_bargaining`], with the grid phase delegated to `grid_eval`
/// so callers can evaluate the independent grid points concurrently.
pub fn solve_bargaining_with<G>(model: &ExternalityModel, opts: &BargainingOptions, grid_eval: G) -> Result<BargainingOutcome>
where
    G: FnOnce(&[f64], &(dyn Fn(f64) -> Result<BargainingPoint> + Sync)) -> Vec<Result<BargainingPoint>>,
{
    let disagreement = disagreement_points(model, opts.mscg.br_tol);
    let eval = |delta: f64| evaluate(model, delta, disagreement, opts);
    let deltas: Vec<f64> = linspace(0.0, 1.0, opts.grid_n.max(11)).collect();
    let points = grid_eval(&deltas, &eval).into_iter().collect::<Result<Vec<_>>>()?;
    let mut multiple = points.iter().any(|p| !p.unique);

    let any_feasible = points.iter().any(|p| p.feasible);
    let score = |p: &BargainingPoint| if any_feasible { p.objective } else { p.product };
    let best_i = (0..points.len())
        .max_by(|&i, &j| score(&points[i]).total_cmp(&score(&points[j])).then(j.cmp(&i)))
        .expect("grid is not empty");
    let lo = deltas[best_i.saturating_sub(1)];
    let hi = deltas[(best_i + 1).min(deltas.len() - 1)];

    let mut refined: Option<BargainingPoint> = None;
    let mut failure = None;
    let mut f = |d: f64| match eval(d) {
        Ok(p) => {
            let v = score(&p);
            multiple |= !p.unique;
            if refined.as_ref().map_or(true, |r| v > score(r)) {
                refined = Some(p);
            }
            v
        }
        Err(e) => {
            failure = Some(e);
            f64::NEG_INFINITY
        }
    };
    golden_max(&mut f, lo, hi, opts.tol);
    if let Some(e) = failure {
        return Err(e);
    }
    let grid_best = points.into_iter().nth(best_i).expect("index in range");
    let best = match refined {
        Some(r) if score(&r) >= score(&grid_best) => r,
        _ => grid_best,
    };
    let eq = best.equilibrium;
    Ok(BargainingOutcome {
        delta_star: best.delta,
        payoffs: eq.payoffs,
        disagreement,
        nash_product: best.product,
        w_equiv: equivalent_wholesale_price(best.delta, &eq),
        revenue_transfer: best.delta * eq.prices.p_l * eq.shares.eta_l,
        feasible: best.feasible,
        multiple_equilibria: multiple,
        equilibrium: eq,
    })
}
