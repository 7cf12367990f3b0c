//! One-dimensional search routines shared by the solvers.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// A located maximum of a scalar function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
}

/// Coarse-grid scan followed by golden-section refinement of the best cell.
///
/// The grid guards against non-unimodal objectives: the refined point is
/// only accepted when it is at least as good as the best grid point, so the
/// result never falls below the grid maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGolden {
    pub grid: usize,
    pub tol: f64,
}

impl Default for GridGolden {
    fn default() -> Self {
        GridGolden { grid: 256, tol: 1e-10 }
    }
}

impl GridGolden {
    pub fn new(grid: usize, tol: f64) -> Self {
        GridGolden { grid: grid.max(3), tol }
    }

    pub fn maximize<F: FnMut(f64) -> f64>(&self, mut f: F, lo: f64, hi: f64) -> Maximum {
        if !(hi > lo) {
            return Maximum { x: lo, value: f(lo) };
        }
        let n = self.grid;
        let step = (hi - lo) / (n - 1) as f64;
        let at = |i: usize| if i == n - 1 { hi } else { lo + step * i as f64 };
        let mut best = Maximum { x: lo, value: f(lo) };
        let mut best_i = 0;
        for i in 1..n {
            let x = at(i);
            let v = f(x);
            if v > best.value {
                best = Maximum { x, value: v };
                best_i = i;
            }
        }
        let a = at(best_i.saturating_sub(1));
        let b = at((best_i + 1).min(n - 1));
        let refined = golden_max(&mut f, a, b, self.tol.max(1e-7 * step));
        let polished = polish(&mut f, refined, a, b, self.tol);
        if polished.value >= best.value {
            polished
        } else {
            best
        }
    }
}

/// Golden-section search for a maximum on `[a, b]`; returns the best point seen.
pub fn golden_max<F: FnMut(f64) -> f64>(f: &mut F, mut a: f64, mut b: f64, tol: f64) -> Maximum {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let fa = f(a);
    let fb = f(b);
    let mut best = if fa >= fb { Maximum { x: a, value: fa } } else { Maximum { x: b, value: fb } };
    let mut iter = 0;
    while (b - a) > tol && iter < 200 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iter += 1;
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.value {
            best = Maximum { x, value: v };
        }
    }
    best
}

// Golden section resolves the argmax only to about sqrt(eps) because the
// objective is flat at the top. Bisecting on the sign of a symmetric
// difference recovers several more digits on smooth objectives.
fn polish<F: FnMut(f64) -> f64>(f: &mut F, start: Maximum, lo: f64, hi: f64, tol: f64) -> Maximum {
    let h = 1e-3 * (hi - lo);
    let slope = |f: &mut F, x: f64| {
        let l = (x - h).max(lo);
        let r = (x + h).min(hi);
        f(r) - f(l)
    };
    // flat tops can leave the start further out than tol; widen until the slope changes sign
    let mut width = 1e3 * tol.max(1e-12);
    let (mut a, mut b) = loop {
        let a = (start.x - width).max(lo);
        let b = (start.x + width).min(hi);
        if slope(f, a) > 0.0 && slope(f, b) < 0.0 {
            break (a, b);
        }
        if width >= 1e-2 * (hi - lo) {
            return start;
        }
        width *= 10.0;
    };
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if slope(f, m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-14 {
            break;
        }
    }
    let x = 0.5 * (a + b);
    let value = f(x);
    // at the top the two values agree to rounding; trust the slope there
    if value >= start.value - 4.0 * f64::EPSILON * start.value.abs() {
        Maximum { x, value }
    } else {
        start
    }
}

/// Root of a nondecreasing function on `[lo, hi]` by bisection.
///
/// Returns `lo` if `h(lo) >= 0` and `hi` if `h(hi) <= 0`.
pub fn bisect_increasing<F: FnMut(f64) -> f64>(mut h: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    if h(lo) >= 0.0 {
        return lo;
    }
    if h(hi) <= 0.0 {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= tol {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> + Clone {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + step * i as f64 })
}
