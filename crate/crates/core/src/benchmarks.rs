//! Reference schemes for judging the revenue-sharing outcome.

use crate::bargaining::pure_information_optimum;
use crate::error::{Error, Result};
use crate::externality::ExternalityModel;
use crate::market::{MarketShares, PriceVector};
use crate::optimize::GridGolden;
use crate::pricing::{prices_from_shares, solve_mscg_with, MscgOptions, PayoffScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkKind {
    Coordination,
    NonCooperation,
    ThirdParty,
}

impl BenchmarkKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchmarkKind::Coordination => "coordination",
            BenchmarkKind::NonCooperation => "noncooperation",
            BenchmarkKind::ThirdParty => "third_party",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkResult {
    pub kind: BenchmarkKind,
    pub shares: MarketShares,
    pub prices: PriceVector,
    /// `u_sl + u_db`; any platform cut is excluded.
    pub network_profit: f64,
    pub u_sl: f64,
    pub u_db: f64,
    pub platform_cut: f64,
    /// The scheme is our own reconstruction rather than a fully specified model.
    pub reconstructed: bool,
    /// Price brackets met (always true for schemes that do not compete).
    pub unique: bool,
}

fn aggregate(model: &ExternalityModel, eta_l: f64, eta_a: f64) -> f64 {
    let s = MarketShares { eta_l, eta_a };
    let p = prices_from_shares(model, s);
    p.p_l * eta_l + p.p_a * eta_a
}

const COORD_GRID: usize = 200;

/// Joint-profit maximum over the simplex: a 200x200 grid scan, then
/// coordinate-wise grid+golden ascent until the gain drops below `tol`.
pub fn coordination_benchmark(model: &ExternalityModel, tol: f64) -> BenchmarkResult {
    let step = 1.0 / (COORD_GRID - 1) as f64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..COORD_GRID {
        for j in 0..(COORD_GRID - i) {
            let (l, a) = (i as f64 * step, j as f64 * step);
            let v = aggregate(model, l, a);
            if v > best.0 {
                best = (v, l, a);
            }
        }
    }
    let line = GridGolden::new(64, tol.min(1e-10));
    let (mut value, mut l, mut a) = best;
    for _ in 0..200 {
        let before = value;
        let ml = line.maximize(|x| aggregate(model, x, a), 0.0, 1.0 - a);
        if ml.value > value {
            value = ml.value;
            l = ml.x;
        }
        let ma = line.maximize(|y| aggregate(model, l, y), 0.0, 1.0 - l);
        if ma.value > value {
            value = ma.value;
            a = ma.x;
        }
        if value - before <= tol * 1e-3 {
            break;
        }
    }
    let shares = MarketShares::clamped(l, a);
    let prices = prices_from_shares(model, shares);
    let u_sl = prices.p_l * shares.eta_l;
    let u_db = prices.p_a * shares.eta_a;
    BenchmarkResult {
        kind: BenchmarkKind::Coordination,
        shares,
        prices,
        network_profit: u_sl + u_db,
        u_sl,
        u_db,
        platform_cut: 0.0,
        reconstructed: false,
        unique: true,
    }
}

/// Information-only market: the database's pure-information optimum; no
/// leased channels are offered (`p_l` is reported as 0).
pub fn noncooperation_benchmark(model: &ExternalityModel, tol: f64) -> BenchmarkResult {
    let opt = pure_information_optimum(model, tol);
    BenchmarkResult {
        kind: BenchmarkKind::NonCooperation,
        shares: MarketShares { eta_l: 0.0, eta_a: opt.eta_a },
        prices: PriceVector { p_l: 0.0, p_a: opt.p_a },
        network_profit: opt.profit,
        u_sl: 0.0,
        u_db: opt.profit,
        platform_cut: 0.0,
        reconstructed: false,
        unique: true,
    }
}

/// Licensee sells through an outside platform that keeps `cut` of leasing
/// revenue; the database still sells information but shares in nothing.
pub fn third_party_benchmark(model: &ExternalityModel, cut: f64, opts: MscgOptions) -> Result<BenchmarkResult> {
    if !(0.0..1.0).contains(&cut) {
        return Err(Error::Parameter(alloc::format!("platform cut {cut} is outside [0, 1)")));
    }
    let eq = solve_mscg_with(model, PayoffScheme::ThirdParty { cut }, opts)?;
    Ok(BenchmarkResult {
        kind: BenchmarkKind::ThirdParty,
        shares: eq.shares,
        prices: eq.prices,
        network_profit: eq.payoffs.total(),
        u_sl: eq.payoffs.u_sl,
        u_db: eq.payoffs.u_db,
        platform_cut: cut * eq.prices.p_l * eq.shares.eta_l,
        reconstructed: true,
        unique: eq.converged(opts.tol),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bargaining::disagreement_points;
    use crate::externality::PowerParams;
    use crate::pricing::{pcg_equilibrium, solve_mscg};

    fn baseline(r_l: f64) -> ExternalityModel {
        ExternalityModel::power(
            PowerParams { alpha1: 1.8, beta1: 0.8, gamma1: 0.8, alpha2: 1.0, beta2: 1.2, gamma2: 0.6 },
            r_l,
        )
        .unwrap()
    }

    #[test]
    fn coordination_of_the_constant_model() {
        let m = ExternalityModel::constant(1.0, 0.5, 6.0).unwrap();
        let c = coordination_benchmark(&m, 1e-10);
        assert!((c.network_profit - 1.25).abs() < 1e-9);
        assert!(c.shares.distance(&MarketShares { eta_l: 0.5, eta_a: 0.0 }) < 1e-6);
    }

    #[test]
    fn coordination_without_externalities() {
        let m = ExternalityModel::constant(0.0, 0.0, 1.0).unwrap();
        let c = coordination_benchmark(&m, 1e-10);
        assert!((c.network_profit - 0.25).abs() < 1e-12);
        assert!((c.shares.eta_l - 0.5).abs() < 1e-6);
    }

    #[test]
    fn coordination_matches_a_fine_grid() {
        let m = baseline(6.0);
        let c = coordination_benchmark(&m, 1e-10);
        let n = 1000;
        let mut brute = f64::MIN;
        for i in 0..=n {
            for j in 0..=(n - i) {
                brute = brute.max(aggregate(&m, i as f64 / n as f64, j as f64 / n as f64));
            }
        }
        assert!(c.network_profit >= brute - 1e-5, "{} vs {}", c.network_profit, brute);
        assert!(c.network_profit - brute < 1e-5);
    }

    #[test]
    fn noncooperation_is_the_disagreement_point() {
        let m = baseline(6.0);
        assert_eq!(noncooperation_benchmark(&m, 1e-10).network_profit, disagreement_points(&m, 1e-10).u_db);
        let c = ExternalityModel::constant(1.0, 0.5, 6.0).unwrap();
        assert!((noncooperation_benchmark(&c, 1e-10).network_profit - 0.125).abs() < 1e-12);
        let z = ExternalityModel::constant(1.0, 0.0, 6.0).unwrap();
        assert_eq!(noncooperation_benchmark(&z, 1e-10).network_profit, 0.0);
    }

    #[test]
    fn free_platform_equals_no_sharing() {
        let m = ExternalityModel::constant(1.0, 0.5, 6.0).unwrap();
        let t = third_party_benchmark(&m, 0.0, MscgOptions::default()).unwrap();
        let e = solve_mscg(&m, 0.0, MscgOptions::default()).unwrap();
        assert_eq!(t.shares, e.shares);
        assert_eq!((t.u_sl, t.u_db), (e.payoffs.u_sl, e.payoffs.u_db));
        assert!(t.reconstructed);

        let z = ExternalityModel::constant(1.0, 0.0, 6.0).unwrap();
        let t = third_party_benchmark(&z, 0.0, MscgOptions::default()).unwrap();
        let e = pcg_equilibrium(&z, 0.0, MscgOptions::default()).unwrap();
        assert_eq!(t.shares, e.shares);
        assert_eq!(t.u_db, 0.0);
    }

    #[test]
    fn coordination_dominates() {
        for r_l in [6.0, 8.0, 10.0] {
            let m = baseline(r_l);
            let c = coordination_benchmark(&m, 1e-10).network_profit;
            assert!(c >= noncooperation_benchmark(&m, 1e-10).network_profit);
            assert!(c >= third_party_benchmark(&m, 0.3, MscgOptions::default()).unwrap().network_profit);
            for d in [0.0, 0.3, 0.7] {
                assert!(c + 1e-9 >= solve_mscg(&m, d, MscgOptions::default()).unwrap().payoffs.total());
            }
        }
    }

    #[test]
    fn platform_cut_is_checked() {
        assert!(third_party_benchmark(&baseline(6.0), 1.0, MscgOptions::default()).is_err());
    }
}
