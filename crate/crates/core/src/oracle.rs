//! Exact ground truth for small problems: dynamic programming for lattice
//! walks, gambler's ruin, principal eigenvectors of killed kernels,
//! Brownian closed forms and adaptive quadrature.

use crate::error::{invalid, Error, Result};
use crate::stats::{normal_cdf, KahanSum};

/// Largest `(x + t + 1)(t + 1)` accepted by [`exact_walk_passage`].
pub const DP_CELL_CAP: u64 = 100_000_000;

/// Exact first-passage law of a `±1` walk started at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct DpTable {
    pub barrier: u32,
    pub max_time: u32,
    /// `cumulative[s] = P(τ(x) ≤ s)` for `s = 0..=max_time`.
    pub cumulative: Vec<f64>,
    /// Sub-probability of sitting at `position` at time `max_time` without
    /// having hit `x`; index `i` is position `i - max_time`.
    pub final_occupation: Vec<f64>,
}

impl DpTable {
    pub fn at(&self, s: u32) -> f64 {
        self.cumulative[s.min(self.max_time) as usize]
    }

    pub fn final_position(&self, index: usize) -> i64 {
        index as i64 - self.max_time as i64
    }
}

/// Forward recursion over positions `-t..x-1` with absorption at `x`.
pub fn exact_walk_passage(p: f64, x: u32, t: u32) -> Result<DpTable> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", format!("{p} must lie in (0, 1)")));
    }
    if x < 1 {
        return Err(invalid("x", "barrier must be >= 1"));
    }
    let cells = (x as u64 + t as u64 + 1) * (t as u64 + 1);
    if cells > DP_CELL_CAP {
        return Err(Error::Size {
            cells,
            cap: DP_CELL_CAP,
        });
    }
    let q = 1.0 - p;
    let width = (x + t) as usize;
    let origin = t as usize;
    let top = width - 1;
    let mut cur = vec![0.0; width];
    let mut next = vec![0.0; width];
    cur[origin] = 1.0;
    let mut hit = KahanSum::new();
    let mut cumulative = Vec::with_capacity(t as usize + 1);
    cumulative.push(0.0);
    for s in 1..=t as usize {
        next.iter_mut().for_each(|v| *v = 0.0);
        // reachable positions after s-1 steps lie in origin-(s-1)..=min(top, origin+s-1)
        let lo = origin + 1 - s;
        let hi = (origin + s - 1).min(top);
        for i in lo..=hi {
            let m = cur[i];
            if m == 0.0 {
                continue;
            }
            if i == top {
                hit.add(p * m);
            } else {
                next[i + 1] += p * m;
            }
            next[i - 1] += q * m;
        }
        std::mem::swap(&mut cur, &mut next);
        cumulative.push(hit.total().min(1.0));
    }
    Ok(DpTable {
        barrier: x,
        max_time: t,
        cumulative,
        final_occupation: cur,
    })
}

/// `P(τ(x) ≤ t)` by summing over all `2^t` step sequences.
pub fn enumerate_walk_passage(p: f64, x: u32, t: u32) -> f64 {
    assert!(t <= 24, "enumeration is exponential in t");
    let mut total = KahanSum::new();
    for path in 0u32..(1u32 << t) {
        let mut z = 0i64;
        let mut weight = 1.0;
        let mut hit = false;
        for s in 0..t {
            let up = path >> s & 1 == 1;
            weight *= if up { p } else { 1.0 - p };
            z += if up { 1 } else { -1 };
            if z >= x as i64 {
                hit = true;
            }
        }
        if hit {
            total.add(weight);
        }
    }
    total.total()
}

/// Gambler's ruin for a `±1` walk started at `y0` in `(0, x)`: the
/// probability of reaching `x` before 0 and the expected exit time.
///
/// The mean time is obtained from the tridiagonal system
/// `m(y) = 1 + p m(y+1) + q m(y-1)`, `m(0) = m(x) = 0`.
pub fn exact_walk_exit(p: f64, y0: u32, x: u32) -> Result<(f64, f64)> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid("p", format!("{p} must lie in (0, 1)")));
    }
    if !(y0 > 0 && y0 < x) {
        return Err(invalid("y0", format!("{y0} must lie strictly between 0 and {x}")));
    }
    let q = 1.0 - p;
    let r = q / p;
    let upper = if (r - 1.0).abs() < 1e-15 {
        y0 as f64 / x as f64
    } else {
        // (1 - r^y0)/(1 - r^x) written with expm1 for r near 1
        let lr = r.ln();
        (y0 as f64 * lr).exp_m1() / (x as f64 * lr).exp_m1()
    };
    let n = (x - 1) as usize;
    let diag = vec![1.0; n];
    let sub = vec![-q; n];
    let sup = vec![-p; n];
    let rhs = vec![1.0; n];
    let m = solve_tridiagonal(&sub, &diag, &sup, &rhs);
    Ok((upper, m[(y0 - 1) as usize]))
}

/// Thomas algorithm; `sub[0]` and `sup[n-1]` are ignored.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut out = vec![0.0; n];
    out[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        out[i] = d[i] - c[i] * out[i + 1];
    }
    out
}

/// Principal left eigenpair of a killed kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct QsdEigen {
    /// Quasi-stationary probability vector.
    pub nu: Vec<f64>,
    /// Principal eigenvalue of the sub-stochastic kernel (or of the
    /// uniformized kernel in the generator case).
    pub eigenvalue: f64,
    /// Absorption rate: `-ln(eigenvalue)` per step, or the principal
    /// eigenvalue magnitude of the killed generator.
    pub decay_rate: f64,
    pub residual: f64,
    pub iterations: usize,
}

pub const EIGEN_TOLERANCE: f64 = 1e-12;
const EIGEN_MAX_ITER: usize = 5_000_000;

/// Quasi-stationary law of a sub-stochastic kernel on a finite interior.
///
/// Power iteration runs on the lazy kernel `(P + I)/2`, which has the same
/// eigenvectors but no periodicity.
pub fn qsd_eigen(kernel: &[Vec<f64>]) -> Result<QsdEigen> {
    let n = kernel.len();
    if n == 0 || kernel.iter().any(|row| row.len() != n) {
        return Err(invalid("kernel", "must be a non-empty square matrix"));
    }
    for row in kernel {
        let mass: f64 = row.iter().sum();
        if row.iter().any(|&v| v < 0.0) || mass > 1.0 + 1e-12 {
            return Err(invalid("kernel", "rows must be non-negative with mass <= 1"));
        }
    }
    let mut v = vec![1.0 / n as f64; n];
    let mut w = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 1..=EIGEN_MAX_ITER {
        left_multiply(kernel, &v, &mut w);
        let theta = w.iter().sum::<f64>();
        if theta <= 0.0 {
            return Err(invalid("kernel", "mass vanishes under iteration"));
        }
        residual = v
            .iter()
            .zip(&w)
            .map(|(a, b)| (b - theta * a).abs())
            .fold(0.0, f64::max);
        if residual <= EIGEN_TOLERANCE {
            return Ok(QsdEigen {
                nu: v,
                eigenvalue: theta,
                decay_rate: -theta.ln(),
                residual,
                iterations: it,
            });
        }
        let lazy_mass = 0.5 * (theta + 1.0);
        for (a, b) in v.iter_mut().zip(&w) {
            *a = 0.5 * (*a + b) / lazy_mass;
        }
    }
    Err(Error::Convergence {
        iterations: EIGEN_MAX_ITER,
        residual,
    })
}

/// Quasi-stationary law of a continuous-time chain given its generator
/// restricted to the interior (rows sum to minus the killing rate).
pub fn qsd_eigen_generator(generator: &[Vec<f64>]) -> Result<QsdEigen> {
    let n = generator.len();
    let rate = (0..n)
        .map(|i| -generator[i][i])
        .fold(0.0, f64::max)
        * 1.0001;
    if !(rate > 0.0) {
        return Err(invalid("generator", "diagonal must be negative"));
    }
    let kernel: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    (id + generator[i][j] / rate).max(0.0)
                })
                .collect()
        })
        .collect();
    let mut out = qsd_eigen(&kernel)?;
    out.decay_rate = rate * (1.0 - out.eigenvalue);
    Ok(out)
}

fn left_multiply(kernel: &[Vec<f64>], v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, row) in kernel.iter().enumerate() {
        let vi = v[i];
        if vi == 0.0 {
            continue;
        }
        for (o, k) in out.iter_mut().zip(row) {
            *o += vi * k;
        }
    }
}

/// Killed kernel of a lazy birth-death chain on `states` interior points
/// with absorption just outside both ends.
pub fn birth_death_kernel(states: usize, up: f64, down: f64) -> Vec<Vec<f64>> {
    let stay = 1.0 - up - down;
    (0..states)
        .map(|i| {
            let mut row = vec![0.0; states];
            row[i] = stay;
            if i + 1 < states {
                row[i + 1] = up;
            }
            if i > 0 {
                row[i - 1] = down;
            }
            row
        })
        .collect()
}

/// Residual `max_j |(νP)_j - θν_j|` of a candidate left eigenpair.
pub fn eigen_residual(kernel: &[Vec<f64>], nu: &[f64], theta: f64) -> f64 {
    let mut w = vec![0.0; nu.len()];
    left_multiply(kernel, nu, &mut w);
    w.iter()
        .zip(nu)
        .map(|(a, b)| (a - theta * b).abs())
        .fold(0.0, f64::max)
}

/// `P(τ(x) ≤ t)` for `-μs + σB(s)` started at 0.
pub fn brownian_passage_cdf(mu: f64, sigma: f64, x: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let sd = sigma * t.sqrt();
    let a = normal_cdf((-x - mu * t) / sd);
    let b = normal_cdf((-x + mu * t) / sd);
    a + (-2.0 * mu * x / (sigma * sigma)).exp() * b
}

/// Probability that `-μs + σB(s)` started at `y0` leaves `(0, x)` at `x`.
pub fn brownian_exit_upper(mu: f64, sigma: f64, y0: f64, x: f64) -> f64 {
    let k = 2.0 * mu / (sigma * sigma);
    (k * y0).exp_m1() / (k * x).exp_m1()
}

const SIMPSON_MAX_DEPTH: u32 = 60;

/// Adaptive Simpson quadrature with Richardson correction.
///
/// `tol` is an absolute error target for the whole interval.
pub fn quadrature(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(invalid("tol", "must be > 0"));
    }
    if a == b {
        return Ok(0.0);
    }
    // split into a few panels first so narrow features are not missed
    let panels = 16;
    let h = (b - a) / panels as f64;
    let mut total = KahanSum::new();
    let mut worst = 0.0_f64;
    for i in 0..panels {
        let l = a + i as f64 * h;
        let r = if i + 1 == panels { b } else { l + h };
        let m = 0.5 * (l + r);
        let (fl, fm, fr) = (f(l), f(m), f(r));
        let whole = (r - l) / 6.0 * (fl + 4.0 * fm + fr);
        let mut err_excess = 0.0;
        let v = simpson(&f, l, r, fl, fm, fr, whole, tol / panels as f64, SIMPSON_MAX_DEPTH, &mut err_excess);
        worst = worst.max(err_excess);
        total.add(v);
    }
    if worst > 0.0 {
        return Err(Error::ToleranceNotMet {
            tol,
            estimate: worst,
        });
    }
    Ok(total.total())
}

#[allow(clippy::too_many_arguments)]
fn simpson(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    excess: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    if depth == 0 {
        *excess = excess.max(delta.abs() / 15.0);
        return left + right + delta / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, excess)
        + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, excess)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dp_small_cases() {
        let t = exact_walk_passage(0.45, 3, 3).unwrap();
        assert!((t.at(3) - 0.45f64.powi(3)).abs() < 1e-15);
        assert_eq!(t.at(2), 0.0);
        assert_eq!(exact_walk_passage(0.45, 5, 4).unwrap().at(4), 0.0);
        assert_eq!(exact_walk_passage(0.45, 1, 0).unwrap().cumulative, vec![0.0]);
    }

    #[test]
    fn dp_matches_enumeration() {
        for &p in &[0.3, 0.45] {
            for x in 1..=5 {
                for t in 0..=12 {
                    let dp = exact_walk_passage(p, x, t).unwrap().at(t);
                    let en = enumerate_walk_passage(p, x, t);
                    assert!((dp - en).abs() < 1e-12, "p={p} x={x} t={t}");
                }
            }
        }
    }

    #[test]
    fn dp_mass_balance() {
        let t = exact_walk_passage(0.45, 7, 60).unwrap();
        let alive: f64 = t.final_occupation.iter().sum();
        assert!((alive + t.at(60) - 1.0).abs() < 1e-13);
        assert!(t.cumulative.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn dp_size_cap() {
        assert!(matches!(
            exact_walk_passage(0.45, 10, 20_000),
            Err(Error::Size { .. })
        ));
    }

    #[test]
    fn gamblers_ruin() {
        let (q, m) = exact_walk_exit(0.45, 1, 3).unwrap();
        let r: f64 = 11.0 / 9.0;
        assert!((q - (1.0 - r) / (1.0 - r.powi(3))).abs() < 1e-14);
        assert!((q - 0.269103).abs() < 1e-6);
        // from 1 in (0,3): m(1) = 1 + p m(2), m(2) = 1 + q m(1)
        let expect = (1.0 + 0.45) / (1.0 - 0.45 * 0.55);
        assert!((m - expect).abs() < 1e-13);
        let (half, _) = exact_walk_exit(0.4999, 5, 10).unwrap();
        assert!((half - 0.5).abs() < 1e-3);
        let (near, _) = exact_walk_exit(0.45, 99, 100).unwrap();
        assert!(near > 0.45);
    }

    #[test]
    fn birth_death_qsd() {
        let k = birth_death_kernel(4, 0.3, 0.5);
        let e = qsd_eigen(&k).unwrap();
        assert!(eigen_residual(&k, &e.nu, e.eigenvalue) <= 1e-10);
        assert!((e.nu.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let bigger = qsd_eigen(&birth_death_kernel(8, 0.3, 0.5)).unwrap();
        assert!(bigger.decay_rate <= e.decay_rate);
    }

    #[test]
    fn periodic_kernel_still_converges() {
        // pure ±1 chain has period 2; the lazy iteration handles it
        let k = birth_death_kernel(6, 0.4, 0.6);
        let e = qsd_eigen(&k).unwrap();
        assert!(eigen_residual(&k, &e.nu, e.eigenvalue) <= 1e-10);
    }

    #[test]
    fn generator_qsd_matches_discrete_skeleton() {
        let (l, m) = (0.7, 1.0);
        let n = 5;
        let g: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut row = vec![0.0; n];
                row[i] = -(l + m);
                if i + 1 < n {
                    row[i + 1] = l;
                }
                if i > 0 {
                    row[i - 1] = m;
                }
                row
            })
            .collect();
        let c = qsd_eigen_generator(&g).unwrap();
        let jump = qsd_eigen(&birth_death_kernel(n, l / (l + m), m / (l + m))).unwrap();
        // constant total rate: same QSD, decay rate scales with the jump rate
        for (a, b) in c.nu.iter().zip(&jump.nu) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((c.decay_rate - (l + m) * (1.0 - jump.eigenvalue)).abs() < 1e-9);
    }

    #[test]
    fn quadrature_basic() {
        let v = quadrature(|y| y.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-11);
        let e = quadrature(|y| (2.0 * y).exp(), 0.0, 50.0, 1e30).unwrap();
        let exact = (100.0f64).exp_m1() / 2.0;
        assert!((e - exact).abs() / exact < 1e-9);
    }

    #[test]
    fn brownian_forms() {
        // (e^2 - 1)/(e^4 - 1) = 1/(e^2 + 1)
        let e2 = 2.0f64.exp();
        assert!((brownian_exit_upper(0.2, 1.0, 5.0, 10.0) - 1.0 / (e2 + 1.0)).abs() < 1e-14);
        let far = brownian_passage_cdf(0.2, 1.0, 10.0, 1e7);
        assert!((far - (-4.0f64).exp()).abs() < 1e-12);
        assert_eq!(brownian_passage_cdf(0.2, 1.0, 10.0, 0.0), 0.0);
    }
}
