//! Network-externality functions and the leasing quality.
//!
//! `f` is the congestion utility of the shared white space, evaluated at the
//! white-space share `x = 1 - eta_l`. `g` is the information value, evaluated
//! at the advanced share `eta_a`. `R_L` is the constant utility of a leased
//! channel.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Default grid size and tolerances for [`validate_model`].
pub const DEFAULT_VALIDATION_GRID: usize = 201;
pub const ANALYTIC_TOL: f64 = 1e-9;
pub const TABLE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FamilyTag {
    Power,
    Linear,
    Table,
    MonteCarlo,
}

impl FamilyTag {
    pub fn as_str(self) -> &'static str {
        match self {
            FamilyTag::Power => "power",
            FamilyTag::Linear => "linear",
            FamilyTag::Table => "table",
            FamilyTag::MonteCarlo => "montecarlo",
        }
    }
}

/// `f(x) = a1 - b1 x^c1`, `g(y) = a2 + (b2 - a2) y^c2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerParams {
    pub alpha1: f64,
    pub beta1: f64,
    pub gamma1: f64,
    pub alpha2: f64,
    pub beta2: f64,
    pub gamma2: f64,
}

/// `f(x) = a1 - b1 x`, `g(y) = b2 y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearParams {
    pub alpha1: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Piecewise-linear tables for `f` over `x` and `g` over `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub x: Vec<f64>,
    pub f: Vec<f64>,
    pub y: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Power(PowerParams),
    Linear(LinearParams),
    Table(Table),
}

/// The triple `(f, g, R_L)`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalityModel {
    family: Family,
    tag: FamilyTag,
    r_l: f64,
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be finite, got {v}")))
    }
}

impl ExternalityModel {
    /// Power family. Rejects negative `f(1)`, exponents outside `(0, 1]`,
    /// `beta2 < alpha2`, and `R_L <= f(0) + g(1)`.
    pub fn power(p: PowerParams, r_l: f64) -> Result<Self> {
        for (name, v) in [
            ("alpha1", p.alpha1),
            ("beta1", p.beta1),
            ("gamma1", p.gamma1),
            ("alpha2", p.alpha2),
            ("beta2", p.beta2),
            ("gamma2", p.gamma2),
            ("R_L", r_l),
        ] {
            finite(name, v)?;
        }
        if p.alpha1 - p.beta1 < 0.0 {
            return Err(Error::Parameter(format!(
                "f(1) = alpha1 - beta1 = {} is negative",
                p.alpha1 - p.beta1
            )));
        }
        if p.beta1 < 0.0 {
            return Err(Error::Parameter(format!("beta1 = {} makes f increasing", p.beta1)));
        }
        for (name, v) in [("gamma1", p.gamma1), ("gamma2", p.gamma2)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::Parameter(format!("{name} = {v} is outside (0, 1]")));
            }
        }
        if !(p.beta2 >= p.alpha2 && p.alpha2 >= 0.0) {
            return Err(Error::Parameter(format!(
                "need beta2 >= alpha2 >= 0, got alpha2 = {}, beta2 = {}",
                p.alpha2, p.beta2
            )));
        }
        let peak = p.alpha1 + p.beta2;
        if r_l <= peak {
            return Err(Error::Parameter(format!("R_L = {r_l} must exceed f(0) + g(1) = {peak}")));
        }
        Ok(ExternalityModel { family: Family::Power(p), tag: FamilyTag::Power, r_l })
    }

    /// Linear family. Only the sign conditions `alpha1 >= beta1 >= 0`,
    /// `beta2 >= 0` are enforced here; leasing dominance is left to
    /// [`validate_model`].
    pub fn linear(p: LinearParams, r_l: f64) -> Result<Self> {
        for (name, v) in [("alpha1", p.alpha1), ("beta1", p.beta1), ("beta2", p.beta2), ("R_L", r_l)] {
            finite(name, v)?;
        }
        if p.alpha1 < p.beta1 {
            return Err(Error::Parameter(format!(
                "f(1) = alpha1 - beta1 = {} is negative",
                p.alpha1 - p.beta1
            )));
        }
        if p.beta1 < 0.0 || p.beta2 < 0.0 {
            return Err(Error::Parameter(format!(
                "slopes must be nonnegative, got beta1 = {}, beta2 = {}",
                p.beta1, p.beta2
            )));
        }
        Ok(ExternalityModel { family: Family::Linear(p), tag: FamilyTag::Linear, r_l })
    }

    /// Flat model `f = f0`, `g = g0`, carried by the power family with zero slopes.
    pub fn constant(f0: f64, g0: f64, r_l: f64) -> Result<Self> {
        Self::power(
            PowerParams { alpha1: f0, beta1: 0.0, gamma1: 1.0, alpha2: g0, beta2: g0, gamma2: 1.0 },
            r_l,
        )
    }

    /// Table family validated at [`TABLE_TOL`].
    pub fn table(x: Vec<f64>, f: Vec<f64>, y: Vec<f64>, g: Vec<f64>, r_l: f64) -> Result<Self> {
        Self::table_with_tolerance(Table { x, f, y, g }, r_l, TABLE_TOL, FamilyTag::Table)
    }

    pub(crate) fn table_with_tolerance(table: Table, r_l: f64, tol: f64, tag: FamilyTag) -> Result<Self> {
        check_grid("x", &table.x, &table.f)?;
        check_grid("y", &table.y, &table.g)?;
        finite("R_L", r_l)?;
        let model = ExternalityModel { family: Family::Table(table), tag, r_l };
        let report = validate_model(&model, DEFAULT_VALIDATION_GRID, tol);
        if let Some(bad) = report.checks.iter().find(|c| !c.passed && c.assumption != Assumption::LeasingDominates) {
            return Err(Error::Shape(format!(
                "{} violated by {:e} at {}",
                bad.assumption.as_str(),
                bad.worst,
                bad.at
            )));
        }
        if !report.check(Assumption::LeasingDominates).passed {
            return Err(Error::Parameter(format!(
                "R_L = {r_l} must exceed max f + max g of the table"
            )));
        }
        Ok(model)
    }

    /// Same functions with a different leasing quality. Power models re-check
    /// their `R_L` bound; tables are re-validated.
    pub fn with_leasing_quality(&self, r_l: f64) -> Result<Self> {
        match &self.family {
            Family::Power(p) => Self::power(*p, r_l),
            Family::Linear(p) => Self::linear(*p, r_l),
            Family::Table(t) => Self::table_with_tolerance(t.clone(), r_l, f64::INFINITY, self.tag),
        }
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn tag(&self) -> FamilyTag {
        self.tag
    }

    pub fn r_l(&self) -> f64 {
        self.r_l
    }

    /// Congestion utility at white-space share `x`.
    pub fn f(&self, x: f64) -> f64 {
        match &self.family {
            Family::Power(p) => p.alpha1 - p.beta1 * pow(x, p.gamma1),
            Family::Linear(p) => p.alpha1 - p.beta1 * x,
            Family::Table(t) => interp(&t.x, &t.f, x),
        }
    }

    /// Information value at advanced share `y`.
    pub fn g(&self, y: f64) -> f64 {
        match &self.family {
            Family::Power(p) => p.alpha2 + (p.beta2 - p.alpha2) * pow(y, p.gamma2),
            Family::Linear(p) => p.beta2 * y,
            Family::Table(t) => interp(&t.y, &t.g, y),
        }
    }

    /// `g'(y)`; analytic for the parametric families, a central difference
    /// of the interpolant for tables. May be `+inf` at `y = 0`.
    pub fn g_prime(&self, y: f64) -> f64 {
        match &self.family {
            Family::Power(p) => {
                let c = (p.beta2 - p.alpha2) * p.gamma2;
                if c == 0.0 {
                    0.0
                } else {
                    c * pow(y, p.gamma2 - 1.0)
                }
            }
            Family::Linear(p) => p.beta2,
            Family::Table(t) => {
                let h = 1e-6;
                let lo = (y - h).max(0.0);
                let hi = (y + h).min(1.0);
                (interp(&t.y, &t.g, hi) - interp(&t.y, &t.g, lo)) / (hi - lo)
            }
        }
    }

    /// `S_B = f(1 - eta_l)`.
    pub fn basic_utility(&self, eta_l: f64) -> f64 {
        self.f(1.0 - eta_l)
    }

    /// `S_A = f(1 - eta_l) + g(eta_a)`.
    pub fn advanced_utility(&self, eta_l: f64, eta_a: f64) -> f64 {
        self.f(1.0 - eta_l) + self.g(eta_a)
    }
}

fn pow(x: f64, e: f64) -> f64 {
    if e == 1.0 {
        x
    } else {
        libm::pow(x, e)
    }
}

fn check_grid(name: &str, grid: &[f64], values: &[f64]) -> Result<()> {
    if grid.len() < 2 {
        return Err(Error::Grid(format!("{name} grid needs at least two points")));
    }
    if grid.len() != values.len() {
        return Err(Error::Grid(format!(
            "{name} grid has {} points but {} values",
            grid.len(),
            values.len()
        )));
    }
    if grid.iter().chain(values).any(|v| !v.is_finite()) {
        return Err(Error::Grid(format!("{name} table contains a non-finite entry")));
    }
    if let Some(w) = grid.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::Grid(format!(
            "{name} grid is not strictly increasing at index {}",
            w + 1
        )));
    }
    if grid[0].abs() > 1e-12 || (grid[grid.len() - 1] - 1.0).abs() > 1e-12 {
        return Err(Error::Grid(format!("{name} grid must span [0, 1]")));
    }
    Ok(())
}

/// Piecewise-linear interpolation, constant beyond the end knots.
pub(crate) fn interp(xs: &[f64], vs: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return vs[0];
    }
    if x >= xs[n - 1] {
        return vs[n - 1];
    }
    let i = xs.partition_point(|&k| k <= x);
    let (x0, x1) = (xs[i - 1], xs[i]);
    let t = (x - x0) / (x1 - x0);
    vs[i - 1] + t * (vs[i] - vs[i - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assumption {
    FNonNegative,
    FNonIncreasing,
    FConvex,
    GNonNegative,
    GNonDecreasing,
    GConcave,
    LeasingDominates,
}

impl Assumption {
    pub fn as_str(self) -> &'static str {
        match self {
            Assumption::FNonNegative => "f nonnegative",
            Assumption::FNonIncreasing => "f nonincreasing",
            Assumption::FConvex => "f convex",
            Assumption::GNonNegative => "g nonnegative",
            Assumption::GNonDecreasing => "g nondecreasing",
            Assumption::GConcave => "g concave",
            Assumption::LeasingDominates => "R_L > f + g",
        }
    }
}

/// Outcome of one assumption check. `worst` is the largest violation
/// (zero or negative when satisfied), located at `at`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionCheck {
    pub assumption: Assumption,
    pub passed: bool,
    pub worst: f64,
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub grid_n: usize,
    pub tol: f64,
    pub checks: Vec<AssumptionCheck>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn check(&self, a: Assumption) -> &AssumptionCheck {
        self.checks.iter().find(|c| c.assumption == a).expect("every assumption is checked")
    }
}

struct Worst {
    assumption: Assumption,
    worst: f64,
    at: f64,
}

impl Worst {
    fn new(assumption: Assumption) -> Self {
        Worst { assumption, worst: f64::NEG_INFINITY, at: 0.0 }
    }
    fn see(&mut self, violation: f64, at: f64) {
        if violation > self.worst || violation.is_nan() {
            self.worst = violation;
            self.at = at;
        }
    }
    fn finish(self, tol: f64) -> AssumptionCheck {
        AssumptionCheck {
            assumption: self.assumption,
            passed: self.worst <= tol,
            worst: self.worst,
            at: self.at,
        }
    }
}

/// Discrete check of the shape assumptions on `f`, `g` and of `R_L > f + g`.
///
/// Differences are taken on a uniform grid of `grid_n` points; table models
/// also include their own knots so kinks between grid points are seen.
/// Second differences on a non-uniform grid are slope jumps scaled by the
/// mean neighbouring spacing.
pub fn validate_model(model: &ExternalityModel, grid_n: usize, tol: f64) -> ValidationReport {
    let grid_n = grid_n.max(3);
    let mut xs: Vec<f64> = crate::optimize::linspace(0.0, 1.0, grid_n).collect();
    let mut ys = xs.clone();
    if let Family::Table(t) = &model.family {
        xs = merge_knots(xs, &t.x);
        ys = merge_knots(ys, &t.y);
    }
    let fs: Vec<f64> = xs.iter().map(|&x| model.f(x)).collect();
    let gs: Vec<f64> = ys.iter().map(|&y| model.g(y)).collect();

    let mut f_nonneg = Worst::new(Assumption::FNonNegative);
    let mut f_dec = Worst::new(Assumption::FNonIncreasing);
    let mut f_convex = Worst::new(Assumption::FConvex);
    let mut g_nonneg = Worst::new(Assumption::GNonNegative);
    let mut g_inc = Worst::new(Assumption::GNonDecreasing);
    let mut g_concave = Worst::new(Assumption::GConcave);

    shape_scan(&xs, &fs, -1.0, &mut f_nonneg, &mut f_dec, &mut f_convex);
    shape_scan(&ys, &gs, 1.0, &mut g_nonneg, &mut g_inc, &mut g_concave);

    let max_f = fs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max_g = gs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lead = max_f + max_g - model.r_l;
    let leasing = AssumptionCheck {
        assumption: Assumption::LeasingDominates,
        passed: lead < 0.0,
        worst: lead,
        at: 0.0,
    };

    let checks = alloc::vec![
        f_nonneg.finish(tol),
        f_dec.finish(tol),
        f_convex.finish(tol),
        g_nonneg.finish(tol),
        g_inc.finish(tol),
        g_concave.finish(tol),
        leasing,
    ];
    let passed = checks.iter().all(|c| c.passed);
    ValidationReport { grid_n, tol, checks, passed }
}

// direction = -1 for nonincreasing/convex, +1 for nondecreasing/concave.
fn shape_scan(xs: &[f64], vs: &[f64], direction: f64, nonneg: &mut Worst, mono: &mut Worst, curv: &mut Worst) {
    for (i, (&x, &v)) in xs.iter().zip(vs).enumerate() {
        nonneg.see(-v, x);
        if i + 1 < xs.len() {
            mono.see(-direction * (vs[i + 1] - v), x);
        }
        if i >= 1 && i + 1 < xs.len() {
            let left = (v - vs[i - 1]) / (x - xs[i - 1]);
            let right = (vs[i + 1] - v) / (xs[i + 1] - x);
            let span = 0.5 * (xs[i + 1] - xs[i - 1]);
            curv.see(direction * (right - left) * span, x);
        }
    }
}

fn merge_knots(mut grid: Vec<f64>, knots: &[f64]) -> Vec<f64> {
    grid.extend_from_slice(knots);
    grid.sort_by(f64::total_cmp);
    grid.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn baseline(r_l: f64) -> ExternalityModel {
        ExternalityModel::power(
            PowerParams { alpha1: 1.8, beta1: 0.8, gamma1: 0.8, alpha2: 1.0, beta2: 1.2, gamma2: 0.6 },
            r_l,
        )
        .unwrap()
    }

    #[test]
    fn baseline_power_family_endpoints() {
        let m = baseline(6.0);
        assert!((m.f(1.0) - 1.0).abs() < 1e-15);
        assert!((m.f(0.0) - 1.8).abs() < 1e-15);
        assert!((m.g(0.0) - 1.0).abs() < 1e-15);
        assert!((m.g(1.0) - 1.2).abs() < 1e-15);
        assert!(validate_model(&m, 201, 1e-9).passed);
    }

    #[test]
    fn zero_coefficient_power_is_constant() {
        let m = ExternalityModel::power(
            PowerParams { alpha1: 1.0, beta1: 0.0, gamma1: 1.0, alpha2: 0.0, beta2: 0.0, gamma2: 1.0 },
            6.0,
        )
        .unwrap();
        for x in [0.0, 0.3, 1.0] {
            assert_eq!(m.f(x), 1.0);
            assert_eq!(m.g(x), 0.0);
        }
    }

    #[test]
    fn power_rejects_low_leasing_quality() {
        let p = PowerParams { alpha1: 1.8, beta1: 0.8, gamma1: 0.8, alpha2: 1.0, beta2: 1.2, gamma2: 0.6 };
        assert!(matches!(ExternalityModel::power(p, 2.5), Err(Error::Parameter(_))));
        assert!(matches!(ExternalityModel::power(p, 3.0), Err(Error::Parameter(_))));
        let bad_exp = PowerParams { gamma1: 1.5, ..p };
        assert!(matches!(ExternalityModel::power(bad_exp, 6.0), Err(Error::Parameter(_))));
        let neg_f = PowerParams { alpha1: 0.5, beta1: 0.8, ..p };
        assert!(matches!(ExternalityModel::power(neg_f, 6.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn linear_family() {
        let m = ExternalityModel::linear(LinearParams { alpha1: 1.0, beta1: 0.5, beta2: 0.3 }, 6.0).unwrap();
        assert_eq!(m.f(0.4), 1.0 - 0.5 * 0.4);
        assert_eq!(m.g(0.4), 0.3 * 0.4);
        assert!(validate_model(&m, 201, 1e-12).passed);
        let bad = ExternalityModel::linear(LinearParams { alpha1: 0.5, beta1: 1.0, beta2: 0.3 }, 6.0);
        assert!(matches!(bad, Err(Error::Parameter(_))));
        let flat = ExternalityModel::linear(LinearParams { alpha1: 1.0, beta1: 0.0, beta2: 0.0 }, 6.0).unwrap();
        assert_eq!((flat.f(0.7), flat.g(0.7)), (1.0, 0.0));
    }

    #[test]
    fn two_point_table_matches_power_endpoints() {
        let m = ExternalityModel::table(vec![0.0, 1.0], vec![1.8, 1.0], vec![0.0, 1.0], vec![1.0, 1.2], 6.0).unwrap();
        assert_eq!(m.f(0.0), 1.8);
        assert_eq!(m.f(1.0), 1.0);
        assert!((m.f(0.5) - 1.4).abs() < 1e-15);
        assert!((m.g(0.5) - 1.1).abs() < 1e-15);
        assert_eq!(m.tag(), FamilyTag::Table);
    }

    #[test]
    fn increasing_f_table_is_a_shape_error() {
        let r = ExternalityModel::table(vec![0.0, 1.0], vec![1.0, 1.8], vec![0.0, 1.0], vec![1.0, 1.2], 6.0);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn bad_grids() {
        let r = ExternalityModel::table(vec![0.0, 0.5, 0.4, 1.0], vec![1.0; 4], vec![0.0, 1.0], vec![0.0, 0.0], 6.0);
        assert!(matches!(r, Err(Error::Grid(_))));
        let r = ExternalityModel::table(vec![0.0, 1.0], vec![1.0; 3], vec![0.0, 1.0], vec![0.0, 0.0], 6.0);
        assert!(matches!(r, Err(Error::Grid(_))));
        let r = ExternalityModel::table(vec![0.1, 1.0], vec![1.0; 2], vec![0.0, 1.0], vec![0.0, 0.0], 6.0);
        assert!(matches!(r, Err(Error::Grid(_))));
    }

    #[test]
    fn tabulated_power_family_tracks_the_analytic_one() {
        let m = baseline(6.0);
        let knots: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let f: Vec<f64> = knots.iter().map(|&x| m.f(x)).collect();
        let g: Vec<f64> = knots.iter().map(|&y| m.g(y)).collect();
        let t = ExternalityModel::table(knots.clone(), f, knots.clone(), g, 6.0).unwrap();
        // the first cell straddles the infinite slope of y^0.6 and x^0.8 at zero
        for (i, w) in knots.windows(2).enumerate() {
            let mid = 0.5 * (w[0] + w[1]);
            let bound = if i == 0 { 2.5e-3 } else { 1e-3 };
            assert!((t.f(mid) - m.f(mid)).abs() < bound, "{mid}");
            assert!((t.g(mid) - m.g(mid)).abs() < bound, "{mid}");
        }
    }

    #[test]
    fn table_with_increasing_f_fails_at_the_offending_interval() {
        let model = ExternalityModel {
            family: Family::Table(Table {
                x: vec![0.0, 0.5, 1.0],
                f: vec![1.5, 1.2, 1.4],
                y: vec![0.0, 1.0],
                g: vec![0.0, 0.1],
            }),
            tag: FamilyTag::Table,
            r_l: 6.0,
        };
        let report = validate_model(&model, 201, TABLE_TOL);
        assert!(!report.passed);
        let check = report.check(Assumption::FNonIncreasing);
        assert!(!check.passed);
        assert!(check.at >= 0.5 && check.at < 1.0, "{}", check.at);
    }

    #[test]
    fn flat_model_passes() {
        let m = ExternalityModel::constant(1.0, 0.5, 6.0).unwrap();
        assert!(validate_model(&m, 201, 1e-9).passed);
    }

    #[test]
    fn linear_model_failing_dominance_is_reported() {
        let m = ExternalityModel::linear(LinearParams { alpha1: 1.0, beta1: 0.5, beta2: 5.0 }, 1.6).unwrap();
        let r = validate_model(&m, 51, 1e-9);
        assert!(!r.passed);
        assert!(!r.check(Assumption::LeasingDominates).passed);
    }

    #[test]
    fn g_prime_power_matches_closed_form() {
        let m = baseline(6.0);
        let y: f64 = 0.3;
        assert!((m.g_prime(y) - 0.12 * y.powf(-0.4)).abs() < 1e-12);
        assert!(m.g_prime(0.0).is_infinite());
        assert_eq!(ExternalityModel::constant(1.0, 0.5, 6.0).unwrap().g_prime(0.0), 0.0);
    }

    #[test]
    fn with_leasing_quality_revalidates() {
        let m = baseline(6.0);
        assert_eq!(m.with_leasing_quality(8.0).unwrap().r_l(), 8.0);
        assert!(m.with_leasing_quality(2.0).is_err());
    }
}
