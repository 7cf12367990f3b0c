//! Price competition between the licensee and the database, solved in
//! market-share coordinates.
//!
//! Each player picks its own market share (`eta_l` for the licensee,
//! `eta_a` for the database); prices follow from the inverse of the
//! interior market equilibrium. The resulting game is supermodular in
//! `(eta_a, -eta_l)`, so round-robin best responses started from the two
//! extreme points of the lattice bracket every equilibrium.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::externality::{ExternalityModel, Family};
use crate::market::{MarketShares, PriceVector};
use crate::optimize::{linspace, GridGolden};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PayoffPair {
    pub u_sl: f64,
    pub u_db: f64,
}

impl PayoffPair {
    pub fn total(&self) -> f64 {
        self.u_sl + self.u_db
    }
}

/// How leasing revenue is split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayoffScheme {
    /// The database receives `delta` of leasing revenue.
    RevenueShare { delta: f64 },
    /// An outside platform keeps `cut` of leasing revenue; the database
    /// earns only from information sales.
    ThirdParty { cut: f64 },
}

impl PayoffScheme {
    fn licensee_keeps(self) -> f64 {
        match self {
            PayoffScheme::RevenueShare { delta } => 1.0 - delta,
            PayoffScheme::ThirdParty { cut } => 1.0 - cut,
        }
    }

    fn database_share(self) -> f64 {
        match self {
            PayoffScheme::RevenueShare { delta } => delta,
            PayoffScheme::ThirdParty { .. } => 0.0,
        }
    }

    fn validate(self) -> Result<()> {
        let v = match self {
            PayoffScheme::RevenueShare { delta } => delta,
            PayoffScheme::ThirdParty { cut } => cut,
        };
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(Error::Parameter(alloc::format!("revenue fraction {v} is outside [0, 1]")))
        }
    }
}

/// Prices that make `shares` the interior market equilibrium:
/// `p_a = eta_b * g(eta_a)` and `p_l = (1 - eta_l)(R_L - S_A) + p_a`.
pub fn prices_from_shares(model: &ExternalityModel, shares: MarketShares) -> PriceVector {
    let g = model.g(shares.eta_a);
    let p_a = shares.eta_b() * g;
    let s_a = model.f(1.0 - shares.eta_l) + g;
    let p_l = ((1.0 - shares.eta_l) * (model.r_l() - s_a) + p_a).max(0.0);
    PriceVector { p_l, p_a }
}

pub fn payoffs_with(model: &ExternalityModel, shares: MarketShares, scheme: PayoffScheme) -> PayoffPair {
    let p = prices_from_shares(model, shares);
    let leasing = p.p_l * shares.eta_l;
    PayoffPair {
        u_sl: leasing * scheme.licensee_keeps(),
        u_db: p.p_a * shares.eta_a + leasing * scheme.database_share(),
    }
}

/// Payoffs under revenue share `delta`.
pub fn payoffs_mscg(model: &ExternalityModel, shares: MarketShares, delta: f64) -> PayoffPair {
    payoffs_with(model, shares, PayoffScheme::RevenueShare { delta })
}

fn leasing_revenue(model: &ExternalityModel, eta_l: f64, eta_a: f64) -> f64 {
    let s = MarketShares { eta_l, eta_a };
    prices_from_shares(model, s).p_l * eta_l
}

/// Licensee best response to `eta_a` over `eta_l in [0, 1 - eta_a]`.
///
/// The licensee keeps a positive fraction of leasing revenue, so its
/// argmax is that of `p_l * eta_l` whatever the fraction. When it keeps
/// nothing every share ties; the tie is broken toward the share that
/// maximises total operator revenue.
pub fn best_response_sl_with(model: &ExternalityModel, eta_a: f64, scheme: PayoffScheme, tol: f64) -> f64 {
    let hi = (1.0 - eta_a).max(0.0);
    let search = GridGolden::new(256, tol);
    if scheme.licensee_keeps() > 0.0 {
        search.maximize(|l| leasing_revenue(model, l, eta_a), 0.0, hi).x
    } else {
        search
            .maximize(|l| payoffs_with(model, MarketShares { eta_l: l, eta_a }, PayoffScheme::RevenueShare { delta: 1.0 }).u_db, 0.0, hi)
            .x
    }
}

pub fn best_response_sl(model: &ExternalityModel, eta_a: f64, delta: f64, tol: f64) -> f64 {
    best_response_sl_with(model, eta_a, PayoffScheme::RevenueShare { delta }, tol)
}

/// Database best response to `eta_l` over `eta_a in [0, 1 - eta_l]`.
pub fn best_response_db_with(model: &ExternalityModel, eta_l: f64, scheme: PayoffScheme, tol: f64) -> f64 {
    let hi = (1.0 - eta_l).max(0.0);
    GridGolden::new(256, tol)
        .maximize(|a| payoffs_with(model, MarketShares { eta_l, eta_a: a }, scheme).u_db, 0.0, hi)
        .x
}

pub fn best_response_db(model: &ExternalityModel, eta_l: f64, delta: f64, tol: f64) -> f64 {
    best_response_db_with(model, eta_l, PayoffScheme::RevenueShare { delta }, tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MscgOptions {
    /// Bracket gap at which the lower and upper iterations are deemed to meet.
    pub tol: f64,
    /// Rounds of round-robin best responses.
    pub max_iter: usize,
    /// Precision of each best response.
    pub br_tol: f64,
}

impl Default for MscgOptions {
    fn default() -> Self {
        MscgOptions { tol: 1e-8, max_iter: 500, br_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NashEquilibrium {
    pub shares: MarketShares,
    pub prices: PriceVector,
    pub payoffs: PayoffPair,
    pub lower_iterate: MarketShares,
    pub upper_iterate: MarketShares,
    pub bracket_gap: f64,
    pub iterations: usize,
    /// Iterates of the run started at `(eta_l, eta_a) = (1, 0)`.
    pub lower_path: Vec<MarketShares>,
    /// Iterates of the run started at `(eta_l, eta_a) = (0, 1)`.
    pub upper_path: Vec<MarketShares>,
    pub scheme: PayoffScheme,
}

impl NashEquilibrium {
    pub fn converged(&self, tol: f64) -> bool {
        self.bracket_gap <= tol
    }
}

/// Round-robin best responses from both extreme points.
///
/// If the brackets meet, `shares` is their midpoint. Otherwise the lower
/// limit is reported together with both limits; callers decide (see
/// [`pcg_equilibrium`] for the erroring variant).
pub fn solve_mscg_with(model: &ExternalityModel, scheme: PayoffScheme, opts: MscgOptions) -> Result<NashEquilibrium> {
    scheme.validate()?;
    let step = |s: MarketShares| {
        let eta_l = best_response_sl_with(model, s.eta_a, scheme, opts.br_tol);
        let eta_a = best_response_db_with(model, eta_l, scheme, opts.br_tol);
        MarketShares::clamped(eta_l, eta_a)
    };
    let mut lower = MarketShares { eta_l: 1.0, eta_a: 0.0 };
    let mut upper = MarketShares { eta_l: 0.0, eta_a: 1.0 };
    let mut lower_path = alloc::vec![lower];
    let mut upper_path = alloc::vec![upper];
    let mut gap = lower.distance(&upper);
    let mut rounds = 0;
    while rounds < opts.max_iter && gap > opts.tol {
        let next_lower = step(lower);
        let next_upper = step(upper);
        let stalled = next_lower.distance(&lower) == 0.0 && next_upper.distance(&upper) == 0.0;
        lower = next_lower;
        upper = next_upper;
        lower_path.push(lower);
        upper_path.push(upper);
        gap = lower.distance(&upper);
        rounds += 1;
        if stalled {
            break;
        }
    }
    let shares = if gap <= opts.tol {
        MarketShares::clamped(0.5 * (lower.eta_l + upper.eta_l), 0.5 * (lower.eta_a + upper.eta_a))
    } else {
        lower
    };
    Ok(NashEquilibrium {
        shares,
        prices: prices_from_shares(model, shares),
        payoffs: payoffs_with(model, shares, scheme),
        lower_iterate: lower,
        upper_iterate: upper,
        bracket_gap: gap,
        iterations: rounds,
        lower_path,
        upper_path,
        scheme,
    })
}

pub fn solve_mscg(model: &ExternalityModel, delta: f64, opts: MscgOptions) -> Result<NashEquilibrium> {
    solve_mscg_with(model, PayoffScheme::RevenueShare { delta }, opts)
}

/// Price equilibrium under revenue share `delta`; fails with
/// [`Error::MultipleEquilibria`] if the brackets do not meet.
pub fn pcg_equilibrium(model: &ExternalityModel, delta: f64, opts: MscgOptions) -> Result<NashEquilibrium> {
    let eq = solve_mscg(model, delta, opts)?;
    if eq.converged(opts.tol) {
        Ok(eq)
    } else {
        Err(Error::MultipleEquilibria { gap: eq.bracket_gap, iterations: eq.iterations })
    }
}

/// Largest payoff gain either player can obtain by a unilateral deviation
/// on an `n`-point grid of its feasible shares.
pub fn deviation_gain(model: &ExternalityModel, eq: &NashEquilibrium, n: usize) -> PayoffPair {
    let base = payoffs_with(model, eq.shares, eq.scheme);
    let s = eq.shares;
    let best_sl = linspace(0.0, 1.0 - s.eta_a, n)
        .map(|l| payoffs_with(model, MarketShares { eta_l: l, eta_a: s.eta_a }, eq.scheme).u_sl)
        .fold(f64::NEG_INFINITY, f64::max);
    let best_db = linspace(0.0, 1.0 - s.eta_l, n)
        .map(|a| payoffs_with(model, MarketShares { eta_l: s.eta_l, eta_a: a }, eq.scheme).u_db)
        .fold(f64::NEG_INFINITY, f64::max);
    PayoffPair { u_sl: best_sl - base.u_sl, u_db: best_db - base.u_db }
}

/// Dominant-diagonal check for a unique equilibrium.
///
/// For the licensee, `-d2U/d(-eta_l)^2 >= d2U/d(-eta_l)d(eta_a)`; for the
/// database, `-d2U/d(eta_a)^2 >= d2U/d(eta_a)d(-eta_l)`. Margins are
/// left minus right, from central differences on the feasible grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeUniquenessReport {
    pub grid_n: usize,
    pub sl_margin: f64,
    pub sl_at: MarketShares,
    pub db_margin: f64,
    pub db_at: MarketShares,
    pub evaluated: usize,
    /// Grid points whose stencil leaves the simplex.
    pub skipped: usize,
    /// `R_L - alpha1 - beta1 - beta2` for the linear family.
    pub closed_form_margin: Option<f64>,
    pub passed: bool,
}

/// Closed-form uniqueness margin of the linear family; positive means unique.
pub fn linear_uniqueness_margin(alpha1: f64, beta1: f64, beta2: f64, r_l: f64) -> f64 {
    r_l - alpha1 - beta1 - beta2
}

pub fn check_ne_uniqueness(model: &ExternalityModel, delta: f64, grid_n: usize, tol: f64) -> NeUniquenessReport {
    let n = grid_n.max(3);
    let spacing = 1.0 / (n - 1) as f64;
    let h = (0.5 * spacing).min(1e-3);
    let scheme = PayoffScheme::RevenueShare { delta };
    let u = |l: f64, a: f64| payoffs_with(model, MarketShares { eta_l: l, eta_a: a }, scheme);
    let mut sl = (f64::INFINITY, MarketShares::default());
    let mut db = (f64::INFINITY, MarketShares::default());
    let mut evaluated = 0;
    let mut skipped = 0;
    for i in 0..n {
        for j in 0..(n - i) {
            let l = i as f64 * spacing;
            let a = j as f64 * spacing;
            if l - h < 0.0 || a - h < 0.0 || l + a + 2.0 * h > 1.0 {
                skipped += 1;
                continue;
            }
            evaluated += 1;
            let c = u(l, a);
            let (lp, lm) = (u(l + h, a), u(l - h, a));
            let (ap, am) = (u(l, a + h), u(l, a - h));
            let (pp, pm, mp, mm) = (u(l + h, a + h), u(l + h, a - h), u(l - h, a + h), u(l - h, a - h));
            let h2 = h * h;
            // second derivatives in (eta_l, eta_a); flipping eta_l flips the cross term
            let sl_ll = (lp.u_sl - 2.0 * c.u_sl + lm.u_sl) / h2;
            let sl_la = (pp.u_sl - pm.u_sl - mp.u_sl + mm.u_sl) / (4.0 * h2);
            let db_aa = (ap.u_db - 2.0 * c.u_db + am.u_db) / h2;
            let db_la = (pp.u_db - pm.u_db - mp.u_db + mm.u_db) / (4.0 * h2);
            let here = MarketShares { eta_l: l, eta_a: a };
            let m_sl = -sl_ll + sl_la;
            let m_db = -db_aa + db_la;
            if m_sl < sl.0 || m_sl.is_nan() {
                sl = (m_sl, here);
            }
            if m_db < db.0 || m_db.is_nan() {
                db = (m_db, here);
            }
        }
    }
    let closed_form_margin = match model.family() {
        Family::Linear(p) => Some(linear_uniqueness_margin(p.alpha1, p.beta1, p.beta2, model.r_l())),
        _ => None,
    };
    let passed = evaluated > 0
        && sl.0 >= -tol
        && db.0 >= -tol
        && closed_form_margin.map_or(true, |m| m > 0.0);
    NeUniquenessReport {
        grid_n: n,
        sl_margin: sl.0,
        sl_at: sl.1,
        db_margin: db.0,
        db_at: db.1,
        evaluated,
        skipped,
        closed_form_margin,
        passed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::externality::{LinearParams, PowerParams};
    use crate::market::{solve_equilibrium, SolveOptions};

    fn constant() -> ExternalityModel {
        ExternalityModel::constant(1.0, 0.5, 6.0).unwrap()
    }

    fn baseline(r_l: f64) -> ExternalityModel {
        ExternalityModel::power(
            PowerParams { alpha1: 1.8, beta1: 0.8, gamma1: 0.8, alpha2: 1.0, beta2: 1.2, gamma2: 0.6 },
            r_l,
        )
        .unwrap()
    }

    fn s(eta_l: f64, eta_a: f64) -> MarketShares {
        MarketShares { eta_l, eta_a }
    }

    // closed form of the constant-model game: eta_l = (5 - eta_a/2)/10, eta_a = (1 - eta_l)/2
    const CONST_ETA_A: f64 = 0.25 / 0.975;
    const CONST_ETA_L: f64 = 0.5 - 0.05 * CONST_ETA_A;

    #[test]
    fn price_map_examples() {
        let m = constant();
        let pr = prices_from_shares(&m, s(0.4, 0.2));
        assert!((pr.p_l - 2.9).abs() < 1e-12 && (pr.p_a - 0.2).abs() < 1e-12);
        let eq = solve_equilibrium(&m, pr, SolveOptions::default()).unwrap();
        assert!(eq.shares.distance(&s(0.4, 0.2)) < 1e-9);
        assert_eq!(prices_from_shares(&baseline(6.0), s(1.0, 0.0)), PriceVector { p_l: 0.0, p_a: 0.0 });
        let pr = prices_from_shares(&m, s(CONST_ETA_L, CONST_ETA_A));
        assert!((pr.p_l - 2.435897).abs() < 1e-6 && (pr.p_a - 0.128205).abs() < 1e-6);
    }

    #[test]
    fn payoff_examples() {
        let m = constant();
        let u = payoffs_mscg(&m, s(0.4, 0.2), 0.25);
        assert!((u.u_sl - 0.87).abs() < 1e-12 && (u.u_db - 0.33).abs() < 1e-12);
        let u = payoffs_mscg(&baseline(6.0), s(0.0, 0.0), 0.7);
        assert_eq!((u.u_sl, u.u_db), (0.0, 0.0));
        let u = payoffs_mscg(&m, s(0.4, 0.2), 1.0);
        assert!(u.u_sl.abs() < 1e-15 && (u.u_db - 1.2).abs() < 1e-12);
    }

    #[test]
    fn best_responses_of_the_constant_model() {
        let m = constant();
        assert!((best_response_sl(&m, 0.2, 0.0, 1e-10) - 0.49).abs() < 1e-8);
        assert_eq!(best_response_sl(&m, 1.0, 0.0, 1e-10), 0.0);
        assert!((best_response_db(&m, 0.4, 0.0, 1e-10) - 0.3).abs() < 1e-8);
        assert_eq!(best_response_db(&m, 1.0, 0.0, 1e-10), 0.0);
    }

    fn grid_argmax(n: usize, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..n {
            let x = hi * i as f64 / (n - 1) as f64;
            let v = f(x);
            if v > best.0 {
                best = (v, x);
            }
        }
        best.1
    }

    #[test]
    fn best_responses_match_exhaustive_grids() {
        let lin = ExternalityModel::linear(LinearParams { alpha1: 1.0, beta1: 0.5, beta2: 0.3 }, 6.0).unwrap();
        let oracle = grid_argmax(1_000_000, 1.0, |l| payoffs_mscg(&lin, s(l, 0.0), 0.0).u_sl);
        assert!((best_response_sl(&lin, 0.0, 0.0, 1e-10) - oracle).abs() < 1e-4);

        let m = baseline(8.0);
        let oracle = grid_argmax(1_000_000, 0.6, |a| payoffs_mscg(&m, s(0.4, a), 0.2).u_db);
        assert!((best_response_db(&m, 0.4, 0.2, 1e-10) - oracle).abs() < 1e-4);
    }

    #[test]
    fn licensee_response_ignores_the_share() {
        let m = baseline(7.0);
        for a in [0.0, 0.1, 0.35, 0.8] {
            let base = best_response_sl(&m, a, 0.0, 1e-10);
            for d in [0.1, 0.5, 0.99] {
                assert_eq!(best_response_sl(&m, a, d, 1e-10), base);
            }
        }
    }

    #[test]
    fn constant_model_equilibrium() {
        let m = constant();
        let eq = pcg_equilibrium(&m, 0.0, MscgOptions::default()).unwrap();
        assert!(eq.shares.distance(&s(CONST_ETA_L, CONST_ETA_A)) < 1e-8, "{:?}", eq.shares);
        assert!((eq.shares.eta_l - 0.487179).abs() < 1e-6 && (eq.shares.eta_a - 0.256410).abs() < 1e-6);
        assert!((eq.prices.p_l - 2.435897).abs() < 1e-6 && (eq.prices.p_a - 0.128205).abs() < 1e-6);
        let back = solve_equilibrium(&m, eq.prices, SolveOptions::default()).unwrap();
        assert!(back.shares.distance(&eq.shares) < 1e-7);
    }

    #[test]
    fn worthless_information() {
        let m = ExternalityModel::constant(1.0, 0.0, 6.0).unwrap();
        for delta in [0.0, 0.4] {
            let eq = pcg_equilibrium(&m, delta, MscgOptions::default()).unwrap();
            assert_eq!(eq.shares.eta_a, 0.0);
            assert_eq!(eq.prices.p_a, 0.0);
            // (1 - eta_l) * 5 * eta_l peaks at one half
            assert!((eq.shares.eta_l - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn baseline_family_brackets_meet() {
        let m = baseline(8.0);
        let eq = pcg_equilibrium(&m, 0.3, MscgOptions::default()).unwrap();
        assert!(eq.lower_iterate.distance(&eq.upper_iterate) <= 1e-8);
        let gain = deviation_gain(&m, &eq, 1000);
        assert!(gain.u_sl <= 1e-6 && gain.u_db <= 1e-6, "{gain:?}");
    }

    #[test]
    fn licensee_price_rises_with_leasing_quality() {
        let lo = pcg_equilibrium(&baseline(6.0), 0.3, MscgOptions::default()).unwrap();
        let hi = pcg_equilibrium(&baseline(10.0), 0.3, MscgOptions::default()).unwrap();
        assert!(hi.prices.p_l > lo.prices.p_l);
    }

    #[test]
    fn ne_uniqueness_constant_model_margins() {
        let r = check_ne_uniqueness(&constant(), 0.0, 21, 1e-9);
        assert!(r.passed);
        assert!((r.sl_margin - 9.5).abs() < 1e-4, "{}", r.sl_margin);
        assert!((r.db_margin - 0.5).abs() < 1e-4, "{}", r.db_margin);
        assert!(r.skipped > 0);
    }

    #[test]
    fn linear_closed_form() {
        let lin = ExternalityModel::linear(LinearParams { alpha1: 1.0, beta1: 0.5, beta2: 0.3 }, 6.0).unwrap();
        let r = check_ne_uniqueness(&lin, 0.0, 21, 1e-9);
        assert!((r.closed_form_margin.unwrap() - 4.2).abs() < 1e-12);
        assert!(linear_uniqueness_margin(1.0, 0.5, 5.0, 1.6) < 0.0);
        let weak = ExternalityModel::linear(LinearParams { alpha1: 1.0, beta1: 0.5, beta2: 5.0 }, 1.6).unwrap();
        assert!(!check_ne_uniqueness(&weak, 0.0, 21, 1e-9).passed);
    }

    #[test]
    fn revenue_fraction_is_checked() {
        assert!(solve_mscg(&constant(), 1.5, MscgOptions::default()).is_err());
    }
}
