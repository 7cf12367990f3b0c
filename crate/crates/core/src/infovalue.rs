//! Monte Carlo value of the interference information sold by the database.
//!
//! A white-space user sees interference `X_k + Y_k` on channel `k`, where
//! `X_k` (TV station plus advanced subscribers) is known to the database and
//! `Y_k` (outside sources plus basic users) is not. A basic user picks a
//! channel at random; an advanced user picks the channel with the smallest
//! `X_k`. The gap between their utilities is the information value `g`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp, LogNormal, Poisson, Uniform};

use crate::error::{Error, Result};
use crate::externality::{ExternalityModel, FamilyTag, Table, TABLE_TOL};
use crate::isotonic;
use crate::market::MarketShares;

/// Samples per batch. Batches are the unit of seeding and parallel work.
pub const BATCH_SIZE: usize = 4096;

const Z95: f64 = 1.959963984540054;

/// Nonnegative interference distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Point(f64),
    Uniform { lo: f64, hi: f64 },
    Exponential { mean: f64 },
    LogNormal { mu: f64, sigma: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Distribution(format!("{self:?}: {m}")));
        match *self {
            Distribution::Point(v) if !(v.is_finite() && v >= 0.0) => bad("value must be finite and nonnegative"),
            Distribution::Uniform { lo, hi } if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi) => {
                bad("need 0 <= lo < hi")
            }
            Distribution::Exponential { mean } if !(mean.is_finite() && mean > 0.0) => bad("mean must be positive"),
            Distribution::LogNormal { mu, sigma } if !(mu.is_finite() && sigma.is_finite() && sigma >= 0.0) => {
                bad("need finite mu and sigma >= 0")
            }
            _ => Ok(()),
        }
    }

    fn sampler(&self) -> Sampler {
        match *self {
            Distribution::Point(v) => Sampler::Point(v),
            Distribution::Uniform { lo, hi } => Sampler::Uniform(Uniform::new(lo, hi).expect("validated")),
            Distribution::Exponential { mean } => Sampler::Exp(Exp::new(1.0 / mean).expect("validated")),
            Distribution::LogNormal { mu, sigma } => Sampler::LogNormal(LogNormal::new(mu, sigma).expect("validated")),
        }
    }
}

enum Sampler {
    Point(f64),
    Uniform(Uniform<f64>),
    Exp(Exp<f64>),
    LogNormal(LogNormal<f64>),
}

impl Sampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Point(v) => *v,
            Sampler::Uniform(d) => d.sample(rng),
            Sampler::Exp(d) => d.sample(rng),
            Sampler::LogNormal(d) => d.sample(rng),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Utility {
    /// `r^rho`, `rho` in (0, 1].
    Power { rho: f64 },
    /// `ln(1 + r)`.
    Log,
}

impl Utility {
    pub fn value(&self, r: f64) -> f64 {
        match *self {
            Utility::Power { rho } => libm::pow(r, rho),
            Utility::Log => libm::log1p(r),
        }
    }

    pub fn derivative(&self, r: f64) -> f64 {
        match *self {
            Utility::Power { rho } => rho * libm::pow(r, rho - 1.0),
            Utility::Log => 1.0 / (1.0 + r),
        }
    }
}

/// How subscribers are spread over the channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMode {
    /// `round(N * share)` users per class, split evenly with the remainder
    /// going to the lowest-numbered channels.
    #[default]
    Rounded,
    /// Independent Poisson counts with mean `(N / K) * share` per channel and sample.
    Poisson,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceModel {
    pub users: usize,
    pub channels: usize,
    pub tv: Distribution,
    pub cross: Distribution,
    pub outside: Distribution,
    /// Transmit power `P` in `R(z) = log2(1 + P / (z + n0))`.
    pub power: f64,
    pub noise: f64,
    pub utility: Utility,
    pub samples: usize,
    pub seed: u64,
    pub counts: CountMode,
}

impl InterferenceModel {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.users < self.channels {
            return Err(Error::Parameter(format!(
                "need N >= K >= 1, got N = {}, K = {}",
                self.users, self.channels
            )));
        }
        if self.samples == 0 {
            return Err(Error::Parameter("samples must be positive".into()));
        }
        if !(self.power.is_finite() && self.power > 0.0) {
            return Err(Error::Parameter(format!("transmit power must be positive, got {}", self.power)));
        }
        if !(self.noise.is_finite() && self.noise > 0.0) {
            return Err(Error::Parameter(format!("noise floor must be positive, got {}", self.noise)));
        }
        if let Utility::Power { rho } = self.utility {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::Parameter(format!("utility exponent must lie in (0, 1], got {rho}")));
            }
        }
        self.tv.validate()?;
        self.cross.validate()?;
        self.outside.validate()
    }

    pub fn rate(&self, z: f64) -> f64 {
        libm::log2(1.0 + self.power / (z + self.noise))
    }

    pub fn batch_count(&self) -> usize {
        self.samples.div_ceil(BATCH_SIZE)
    }

    fn batch_len(&self, index: usize) -> usize {
        BATCH_SIZE.min(self.samples - index * BATCH_SIZE)
    }
}

/// Running first and second moments of the paired basic/advanced rates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Moments {
    pub n: u64,
    pub mean_b: f64,
    pub mean_a: f64,
    pub m2_b: f64,
    pub m2_a: f64,
    pub c_ab: f64,
}

impl Moments {
    fn push(&mut self, rb: f64, ra: f64) {
        self.n += 1;
        let n = self.n as f64;
        let db = rb - self.mean_b;
        let da = ra - self.mean_a;
        self.mean_b += db / n;
        self.mean_a += da / n;
        self.m2_b += db * (rb - self.mean_b);
        self.m2_a += da * (ra - self.mean_a);
        self.c_ab += db * (ra - self.mean_a);
    }

    pub fn merge(&self, other: &Moments) -> Moments {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let (n1, n2) = (self.n as f64, other.n as f64);
        let n = n1 + n2;
        let db = other.mean_b - self.mean_b;
        let da = other.mean_a - self.mean_a;
        let w = n1 * n2 / n;
        Moments {
            n: self.n + other.n,
            mean_b: self.mean_b + db * n2 / n,
            mean_a: self.mean_a + da * n2 / n,
            m2_b: self.m2_b + other.m2_b + db * db * w,
            m2_a: self.m2_a + other.m2_a + da * da * w,
            c_ab: self.c_ab + other.c_ab + db * da * w,
        }
    }
}

/// Merge batch moments in a fixed pairwise tree over the batch index, so the
/// result does not depend on which worker finished first.
pub fn merge_batches(batches: &[Moments]) -> Moments {
    match batches.len() {
        0 => Moments::default(),
        1 => batches[0],
        n => {
            let (l, r) = batches.split_at(n / 2);
            merge_batches(l).merge(&merge_batches(r))
        }
    }
}

fn even_split(total: usize, k: usize) -> Vec<usize> {
    (0..k).map(|c| total / k + usize::from(c < total % k)).collect()
}

/// Simulate batch `index` (seeded by `(seed, index)`) at the given shares.
pub fn simulate_batch(imodel: &InterferenceModel, shares: MarketShares, index: usize) -> Moments {
    let k = imodel.channels;
    let mut rng = ChaCha8Rng::seed_from_u64(imodel.seed);
    rng.set_stream(index as u64);
    let (tv, cross, outside) = (imodel.tv.sampler(), imodel.cross.sampler(), imodel.outside.sampler());

    let n = imodel.users as f64;
    let (fixed_a, fixed_b) = match imodel.counts {
        CountMode::Rounded => (
            even_split(libm::round(n * shares.eta_a) as usize, k),
            even_split(libm::round(n * shares.eta_b()) as usize, k),
        ),
        CountMode::Poisson => (vec![0; k], vec![0; k]),
    };
    let per_channel = n / k as f64;
    let poisson = |share: f64| (share > 0.0).then(|| Poisson::new(per_channel * share).expect("positive mean"));
    let (pois_a, pois_b) = (poisson(shares.eta_a), poisson(shares.eta_b()));

    let mut xs = vec![0.0; k];
    let mut ys = vec![0.0; k];
    let mut m = Moments::default();
    for _ in 0..imodel.batch_len(index) {
        for c in 0..k {
            let (na, nb) = match imodel.counts {
                CountMode::Rounded => (fixed_a[c], fixed_b[c]),
                CountMode::Poisson => (
                    pois_a.as_ref().map_or(0, |d| d.sample(&mut rng) as usize),
                    pois_b.as_ref().map_or(0, |d| d.sample(&mut rng) as usize),
                ),
            };
            let mut x = tv.sample(&mut rng);
            for _ in 0..na {
                x += cross.sample(&mut rng);
            }
            let mut y = outside.sample(&mut rng);
            for _ in 0..nb {
                y += cross.sample(&mut rng);
            }
            xs[c] = x;
            ys[c] = y;
        }
        let pick = if k == 1 { 0 } else { rng.random_range(0..k) };
        let best = (1..k).fold(0, |b, c| if xs[c] < xs[b] { c } else { b });
        m.push(imodel.rate(xs[pick] + ys[pick]), imodel.rate(xs[best] + ys[best]));
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoValueEstimate {
    pub s_b: f64,
    pub ci_b: f64,
    pub s_a: f64,
    pub ci_a: f64,
    pub g_est: f64,
    /// Half-width for `g_est` using the pairing of the two rates within a sample.
    pub ci_g: f64,
    pub samples: u64,
}

/// Turn merged rate moments into utilities with delta-method 95% half-widths.
pub fn estimate_from(imodel: &InterferenceModel, m: &Moments) -> InfoValueEstimate {
    let u = imodel.utility;
    let n = m.n as f64;
    let (var_b, var_a, cov) = if m.n > 1 {
        (m.m2_b / (n - 1.0), m.m2_a / (n - 1.0), m.c_ab / (n - 1.0))
    } else {
        (f64::INFINITY, f64::INFINITY, 0.0)
    };
    let (s_b, s_a) = (u.value(m.mean_b), u.value(m.mean_a));
    let (d_b, d_a) = (u.derivative(m.mean_b), u.derivative(m.mean_a));
    let half = |var: f64| Z95 * libm::sqrt(var.max(0.0) / n);
    let ci_g = if m.n > 1 {
        half(d_a * d_a * var_a + d_b * d_b * var_b - 2.0 * d_a * d_b * cov)
    } else {
        f64::INFINITY
    };
    InfoValueEstimate {
        s_b,
        ci_b: if m.n > 1 { half(d_b * d_b * var_b) } else { f64::INFINITY },
        s_a,
        ci_a: if m.n > 1 { half(d_a * d_a * var_a) } else { f64::INFINITY },
        g_est: s_a - s_b,
        ci_g,
        samples: m.n,
    }
}

/// Runs `job` for every batch index in `0..n` and returns the results in index order.
pub type BatchRunner<'a> = dyn Fn(usize, &(dyn Fn(usize) -> Moments + Sync)) -> Vec<Moments> + 'a;

pub fn sequential(n: usize, job: &(dyn Fn(usize) -> Moments + Sync)) -> Vec<Moments> {
    (0..n).map(job).collect()
}

pub fn simulate_info_value(imodel: &InterferenceModel, shares: MarketShares) -> Result<InfoValueEstimate> {
    simulate_info_value_with(imodel, shares, &sequential)
}

pub fn simulate_info_value_with(
    imodel: &InterferenceModel,
    shares: MarketShares,
    runner: &BatchRunner<'_>,
) -> Result<InfoValueEstimate> {
    imodel.validate()?;
    let shares = MarketShares::new(shares.eta_l, shares.eta_a)?;
    let batches = runner(imodel.batch_count(), &|i| simulate_batch(imodel, shares, i));
    Ok(estimate_from(imodel, &merge_batches(&batches)))
}

/// Monte Carlo tables behind a derived externality model.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedExternality {
    pub model: ExternalityModel,
    pub x: Vec<f64>,
    pub raw_f: Vec<f64>,
    pub ci_f: Vec<f64>,
    pub f: Vec<f64>,
    pub y: Vec<f64>,
    pub raw_g: Vec<f64>,
    pub ci_g: Vec<f64>,
    pub g: Vec<f64>,
    /// Shape tolerance used when validating the smoothed tables.
    pub tolerance: f64,
    /// Max of `|S_A - f(1 - eta_l) - g(eta_a)|` over the probe grid.
    pub separability_residual: f64,
    /// Largest curvature violation (concave f or convex g) in second
    /// differences over the table's own knots. The model validator sees kinks
    /// only at its own grid spacing, so this is the coarser view.
    pub knot_curvature: f64,
}

impl DerivedExternality {
    /// Share of grid points where the raw table already respects the
    /// monotone direction within the combined half-widths of its neighbours.
    pub fn monotone_within_ci(&self) -> (usize, usize) {
        let ok_f = (1..self.x.len())
            .filter(|&i| self.raw_f[i] <= self.raw_f[i - 1] + self.ci_f[i] + self.ci_f[i - 1])
            .count();
        let ok_g = (1..self.y.len())
            .filter(|&i| self.raw_g[i] + self.ci_g[i] + self.ci_g[i - 1] >= self.raw_g[i - 1])
            .count();
        (ok_f + ok_g, self.x.len() + self.y.len() - 2)
    }
}

const PROBE_N: usize = 5;

pub fn derive_externality(
    imodel: &InterferenceModel,
    x_grid: &[f64],
    y_grid: &[f64],
    ref_eta_l: f64,
    r_l: f64,
) -> Result<DerivedExternality> {
    derive_externality_with(imodel, x_grid, y_grid, ref_eta_l, r_l, &sequential)
}

/// `f(x)` is the basic utility with white-space share `x` and no subscribers;
/// `g(y)` is the information value with `y` subscribers at `ref_eta_l`. If
/// the `y` grid stops short of 1 (because `ref_eta_l > 0`) the last value
/// is carried flat to 1.
pub fn derive_externality_with(
    imodel: &InterferenceModel,
    x_grid: &[f64],
    y_grid: &[f64],
    ref_eta_l: f64,
    r_l: f64,
    runner: &BatchRunner<'_>,
) -> Result<DerivedExternality> {
    imodel.validate()?;
    if !(0.0..1.0).contains(&ref_eta_l) {
        return Err(Error::Parameter(format!("reference eta_l must lie in [0, 1), got {ref_eta_l}")));
    }
    if let Some(&y) = y_grid.iter().find(|&&y| y > 1.0 - ref_eta_l + 1e-12) {
        return Err(Error::Grid(format!(
            "y = {y} exceeds the white-space share 1 - {ref_eta_l} left at the reference point"
        )));
    }
    let est = |eta_l: f64, eta_a: f64| simulate_info_value_with(imodel, MarketShares::clamped(eta_l, eta_a), runner);

    let mut raw_f = Vec::with_capacity(x_grid.len());
    let mut ci_f = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        let e = est(1.0 - x, 0.0)?;
        raw_f.push(e.s_b);
        ci_f.push(e.ci_b);
    }
    let mut y = y_grid.to_vec();
    let mut raw_g = Vec::with_capacity(y.len() + 1);
    let mut ci_g = Vec::with_capacity(y.len() + 1);
    for &eta_a in y_grid {
        let e = est(ref_eta_l, eta_a)?;
        raw_g.push(e.g_est);
        ci_g.push(e.ci_g);
    }
    if let Some(&last) = y.last() {
        if last < 1.0 - 1e-12 {
            y.push(1.0);
            raw_g.push(raw_g[raw_g.len() - 1]);
            ci_g.push(ci_g[ci_g.len() - 1]);
        }
    }

    let f = isotonic::nonincreasing(&raw_f, &vec![1.0; raw_f.len()]);
    let g = isotonic::nondecreasing(&raw_g, &vec![1.0; raw_g.len()]);
    let max_ci = ci_f.iter().chain(&ci_g).copied().fold(0.0, f64::max);
    let tolerance = TABLE_TOL.max(2.0 * max_ci);
    let table = Table { x: x_grid.to_vec(), f: f.clone(), y: y.clone(), g: g.clone() };
    let model = ExternalityModel::table_with_tolerance(table, r_l, tolerance, FamilyTag::MonteCarlo)?;

    let mut residual: f64 = 0.0;
    for i in 0..PROBE_N {
        let eta_l = i as f64 / PROBE_N as f64;
        for j in 0..PROBE_N {
            let eta_a = (1.0 - eta_l) * j as f64 / (PROBE_N - 1) as f64;
            let e = est(eta_l, eta_a)?;
            residual = residual.max((e.s_a - model.f(1.0 - eta_l) - model.g(eta_a)).abs());
        }
    }

    let knot_curvature = knot_curvature(x_grid, &f, -1.0).max(knot_curvature(&y, &g, 1.0));
    Ok(DerivedExternality {
        model,
        x: x_grid.to_vec(),
        raw_f,
        ci_f,
        f,
        y,
        raw_g,
        ci_g,
        g,
        tolerance,
        separability_residual: residual,
        knot_curvature,
    })
}

// direction = -1 measures concavity of f, +1 convexity of g
fn knot_curvature(xs: &[f64], vs: &[f64], direction: f64) -> f64 {
    (1..xs.len().saturating_sub(1))
        .map(|i| {
            let left = (vs[i] - vs[i - 1]) / (xs[i] - xs[i - 1]);
            let right = (vs[i + 1] - vs[i]) / (xs[i + 1] - xs[i]);
            direction * (right - left) * 0.5 * (xs[i + 1] - xs[i - 1])
        })
        .fold(0.0, f64::max)
}
