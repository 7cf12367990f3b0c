//! User choices and the market equilibrium for fixed prices.
//!
//! A user of type `theta ~ U[0, 1]` earns `theta * S_B` on the basic
//! service, `theta * S_A - p_a` on the advanced service and
//! `theta * R_L - p_l` on a leased channel. All users re-optimise
//! simultaneously against the shares of the previous slot.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::externality::ExternalityModel;
use crate::optimize::bisect_increasing;

/// Leasing and advanced shares; the basic share is `1 - eta_l - eta_a`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MarketShares {
    pub eta_l: f64,
    pub eta_a: f64,
}

impl MarketShares {
    /// Projects onto the simplex: `eta_l` is clamped to `[0, 1]`, then
    /// `eta_a` to `[0, 1 - eta_l]`.
    pub fn clamped(eta_l: f64, eta_a: f64) -> Self {
        let eta_l = clamp01(eta_l);
        let eta_a = eta_a.clamp(0.0, 1.0 - eta_l);
        MarketShares { eta_l, eta_a }
    }

    /// Checked constructor; accepts points within `1e-12` of the simplex.
    pub fn new(eta_l: f64, eta_a: f64) -> Result<Self> {
        let eps = 1e-12;
        if !(eta_l >= -eps && eta_a >= -eps && eta_l + eta_a <= 1.0 + eps) {
            return Err(Error::Parameter(alloc::format!(
                "shares ({eta_l}, {eta_a}) are not on the simplex"
            )));
        }
        Ok(Self::clamped(eta_l, eta_a))
    }

    pub fn eta_b(&self) -> f64 {
        (1.0 - self.eta_l - self.eta_a).max(0.0)
    }

    /// Sup-norm distance.
    pub fn distance(&self, other: &MarketShares) -> f64 {
        (self.eta_l - other.eta_l).abs().max((self.eta_a - other.eta_a).abs())
    }
}

fn clamp01(v: f64) -> f64 {
    v.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PriceVector {
    pub p_l: f64,
    pub p_a: f64,
}

impl PriceVector {
    pub fn new(p_l: f64, p_a: f64) -> Result<Self> {
        if !(p_l >= 0.0 && p_a >= 0.0 && p_l.is_finite() && p_a.is_finite()) {
            return Err(Error::Parameter(alloc::format!("prices ({p_l}, {p_a}) must be finite and nonnegative")));
        }
        Ok(PriceVector { p_l, p_a })
    }
}

/// Indifference types between pairs of services.
///
/// `lb`: leasing vs basic, `ab`: advanced vs basic, `la`: leasing vs
/// advanced. `la` is floored at zero; when `p_a > p_l` leasing dominates
/// advanced for every type and the floor does not change the shares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub lb: f64,
    pub ab: f64,
    pub la: f64,
}

pub fn thresholds(model: &ExternalityModel, prices: PriceVector, shares0: MarketShares) -> Result<Thresholds> {
    let r_l = model.r_l();
    let s_b = model.basic_utility(shares0.eta_l);
    let info = model.g(shares0.eta_a);
    let s_a = s_b + info;
    if !(r_l > s_a) {
        return Err(Error::DegenerateModel { r_l, s_a });
    }
    let lb = prices.p_l / (r_l - s_b);
    let ab = if info > 0.0 {
        prices.p_a / info
    } else if prices.p_a > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    let la = ((prices.p_l - prices.p_a) / (r_l - s_a)).max(0.0);
    Ok(Thresholds { lb, ab, la })
}

/// Shares obtained when every user best-responds to the utilities induced
/// by `shares0`. Ties go to the cheaper service (basic, then advanced).
pub fn derived_shares(model: &ExternalityModel, prices: PriceVector, shares0: MarketShares) -> Result<MarketShares> {
    let th = thresholds(model, prices, shares0)?;
    if model.g(shares0.eta_a) <= 0.0 {
        // advanced never strictly beats basic
        return Ok(MarketShares::clamped((1.0 - th.lb).max(0.0), 0.0));
    }
    let eta_l = (1.0 - th.la.max(th.lb)).max(0.0);
    let eta_a = (th.la.min(1.0) - th.ab).max(0.0);
    Ok(MarketShares::clamped(eta_l, eta_a))
}

/// Sup-norm distance between a point and its derived image.
pub fn fixed_point_residual(model: &ExternalityModel, prices: PriceVector, shares: MarketShares) -> Result<f64> {
    Ok(derived_shares(model, prices, shares)?.distance(&shares))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTrace {
    /// State at the start of each recorded slot.
    pub states: Vec<MarketShares>,
    /// Best-response step `(d eta_l, d eta_a)` observed at each state.
    pub deltas: Vec<(f64, f64)>,
    pub converged: bool,
    pub residual: f64,
}

impl DynamicsTrace {
    pub fn endpoint(&self) -> MarketShares {
        *self.states.last().expect("trace is never empty")
    }

    /// Number of updates actually applied.
    pub fn steps(&self) -> usize {
        if self.converged {
            self.states.len() - 1
        } else {
            self.states.len()
        }
    }
}

/// Damped synchronous dynamics `eta <- eta + damping * (D(eta) - eta)`.
///
/// Stops once the undamped step is within `tol` in both coordinates. A
/// trace with `converged = false` is returned (not an error) when
/// `max_iter` slots pass without settling.
pub fn iterate_dynamics(
    model: &ExternalityModel,
    prices: PriceVector,
    shares0: MarketShares,
    tol: f64,
    max_iter: usize,
    damping: f64,
) -> Result<DynamicsTrace> {
    if !(tol > 0.0) || max_iter == 0 || !(damping > 0.0 && damping <= 1.0) {
        return Err(Error::Parameter(alloc::format!(
            "need tol > 0, max_iter >= 1, damping in (0, 1]; got {tol}, {max_iter}, {damping}"
        )));
    }
    let mut eta = MarketShares::clamped(shares0.eta_l, shares0.eta_a);
    let mut states = Vec::new();
    let mut deltas = Vec::new();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iter {
        let next = derived_shares(model, prices, eta)?;
        let d = (next.eta_l - eta.eta_l, next.eta_a - eta.eta_a);
        states.push(eta);
        deltas.push(d);
        residual = d.0.abs().max(d.1.abs());
        if residual <= tol {
            return Ok(DynamicsTrace { states, deltas, converged: true, residual });
        }
        eta = MarketShares::clamped(eta.eta_l + damping * d.0, eta.eta_a + damping * d.1);
    }
    Ok(DynamicsTrace { states, deltas, converged: false, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumCase {
    /// Nobody buys information: `eta_l = 1 - theta_lb`, `eta_a = 0`.
    A,
    /// Interior information market: `eta_l = 1 - theta_la`, `eta_a = theta_la - theta_ab`.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: 1e-10, max_iter: 100_000, damping: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketEquilibrium {
    pub shares: MarketShares,
    pub case: EquilibriumCase,
    pub residual: f64,
    pub iterations: usize,
    /// Set when the sufficient uniqueness condition fails for the model;
    /// the point returned is the one reached from `(0, 0)`.
    pub multiplicity_warning: bool,
}

/// Grid used for the uniqueness flag attached to each solve.
const WARNING_GRID: usize = 21;

/// The market equilibrium for fixed prices.
///
/// When the no-information branch applies, the one-dimensional equation
/// `eta_l = 1 - theta_lb(eta_l)` is solved by bisection (its right-hand
/// side is nonincreasing in `eta_l`). Otherwise, or if that candidate is
/// not a fixed point, damped iteration from `(0, 0)` is used; a second
/// pass with stronger damping is attempted before giving up.
pub fn solve_equilibrium(model: &ExternalityModel, prices: PriceVector, opts: SolveOptions) -> Result<MarketEquilibrium> {
    let warning = !check_me_uniqueness(model, WARNING_GRID).forall_pass;
    if theorem_branch(model, prices) == EquilibriumCase::A {
        let eta_l = solve_no_information(model, prices, opts.tol)?;
        let shares = MarketShares::clamped(eta_l, 0.0);
        let residual = fixed_point_residual(model, prices, shares)?;
        if residual <= opts.tol {
            return Ok(MarketEquilibrium {
                shares,
                case: EquilibriumCase::A,
                residual,
                iterations: 0,
                multiplicity_warning: warning,
            });
        }
    }
    let mut last_residual = f64::INFINITY;
    let mut used = 0;
    for damping in [opts.damping, opts.damping * 0.2] {
        let trace = iterate_dynamics(model, prices, MarketShares::default(), opts.tol, opts.max_iter, damping)?;
        used += trace.states.len();
        last_residual = trace.residual;
        if trace.converged {
            let shares = trace.endpoint();
            let case = if shares.eta_a > 0.0 { EquilibriumCase::B } else { EquilibriumCase::A };
            return Ok(MarketEquilibrium {
                shares,
                case,
                residual: trace.residual,
                iterations: used,
                multiplicity_warning: warning,
            });
        }
    }
    Err(Error::NonConvergence { iterations: used, residual: last_residual })
}

/// Branch selected by comparing `theta_lb` at `eta_l = 0` with `theta_ab`
/// at `eta_a = 0`.
pub fn theorem_branch(model: &ExternalityModel, prices: PriceVector) -> EquilibriumCase {
    let lb0 = prices.p_l / (model.r_l() - model.f(1.0));
    let g0 = model.g(0.0);
    let ab0 = if g0 > 0.0 {
        prices.p_a / g0
    } else if prices.p_a > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    if lb0 <= ab0 {
        EquilibriumCase::A
    } else {
        EquilibriumCase::B
    }
}

fn solve_no_information(model: &ExternalityModel, prices: PriceVector, tol: f64) -> Result<f64> {
    let r_l = model.r_l();
    let mut degenerate = None;
    let root = bisect_increasing(
        |eta_l| {
            let gap = r_l - model.basic_utility(eta_l);
            if !(gap > 0.0) {
                degenerate = Some(model.basic_utility(eta_l));
                return 1.0;
            }
            eta_l - (1.0 - prices.p_l / gap).max(0.0)
        },
        0.0,
        1.0,
        tol * 1e-2,
    );
    match degenerate {
        Some(s_a) => Err(Error::DegenerateModel { r_l, s_a }),
        None => Ok(root),
    }
}

/// Sufficient-condition scan for a unique market equilibrium.
///
/// The condition `g'(eta_a) / g(eta_a) * (R_L - S_B) / (R_L - S_A) <= 1` is
/// evaluated on the feasible grid. `forall_pass` is the conservative
/// verdict (every point satisfies it); `exists_pass` holds when at least
/// one point does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeUniquenessReport {
    pub grid_n: usize,
    pub worst_lhs: f64,
    pub worst_at: MarketShares,
    pub forall_pass: bool,
    pub exists_pass: bool,
    pub evaluated: usize,
    /// Points skipped because `g(eta_a) = 0`.
    pub excluded: usize,
    /// The worst point sits on the first interior grid line `eta_a = h`
    /// or on `eta_a = 0`.
    pub worst_on_boundary: bool,
}

pub fn check_me_uniqueness(model: &ExternalityModel, grid_n: usize) -> MeUniquenessReport {
    let n = grid_n.max(2);
    let step = 1.0 / (n - 1) as f64;
    let r_l = model.r_l();
    let mut worst_lhs = f64::NEG_INFINITY;
    let mut worst_at = MarketShares::default();
    let mut worst_j = 0;
    let mut exists_pass = false;
    let mut evaluated = 0;
    let mut excluded = 0;
    for i in 0..n {
        for j in 0..(n - i) {
            let eta_l = i as f64 * step;
            let eta_a = j as f64 * step;
            let g = model.g(eta_a);
            if !(g > 0.0) {
                excluded += 1;
                continue;
            }
            evaluated += 1;
            let gp = model.g_prime(eta_a);
            let s_b = model.basic_utility(eta_l);
            let s_a = s_b + g;
            let lhs = if r_l > s_a {
                if gp == 0.0 {
                    0.0
                } else {
                    gp / g * (r_l - s_b) / (r_l - s_a)
                }
            } else {
                f64::INFINITY
            };
            if lhs <= 1.0 {
                exists_pass = true;
            }
            if lhs > worst_lhs {
                worst_lhs = lhs;
                worst_at = MarketShares { eta_l, eta_a };
                worst_j = j;
            }
        }
    }
    let first_positive = (0..n).find(|&j| model.g(j as f64 * step) > 0.0).unwrap_or(0);
    MeUniquenessReport {
        grid_n: n,
        worst_lhs,
        worst_at,
        forall_pass: evaluated > 0 && worst_lhs <= 1.0,
        exists_pass,
        evaluated,
        excluded,
        worst_on_boundary: worst_j <= first_positive,
    }
}

/// Equilibrium of the information-only market (no leasing option).
///
/// The threshold map `T(eta) = clip(1 - p_a / g(eta))` is nondecreasing,
/// so iterating from `eta = 1` descends monotonically to its largest fixed
/// point, which is the one returned.
pub fn pure_info_equilibrium(model: &ExternalityModel, p_a: f64, tol: f64, max_iter: usize) -> Result<MarketShares> {
    if !(p_a >= 0.0) {
        return Err(Error::Parameter(alloc::format!("p_a = {p_a} must be nonnegative")));
    }
    let map = |eta: f64| {
        let g = model.g(eta);
        if !(g > 0.0) {
            0.0
        } else {
            clamp01(1.0 - p_a / g)
        }
    };
    let mut eta = 1.0;
    for _ in 0..max_iter.max(1) {
        let next = map(eta);
        if (next - eta).abs() <= tol {
            return Ok(MarketShares { eta_l: 0.0, eta_a: next });
        }
        eta = next;
    }
    Err(Error::NonConvergence { iterations: max_iter, residual: (map(eta) - eta).abs() })
}
