//! Cumulant (log moment generating) functions of the driving noise, their
//! derivatives, the Cramér root, the Legendre transform, exponential tilting
//! and the optimal number of independent explorers.
//!
//! Two families are supported:
//!
//! * [`IncrementLaw`]: i.i.d. increments of a discrete-time random walk,
//!   either `±1` steps or Gaussian steps.
//! * [`LevyModel`]: drift `-μ`, diffusion `σ` and two-sided compound Poisson
//!   jumps with exponential sizes, whose exponent is
//!
//! ```text
//! ψ(λ) = -μλ + σ²λ²/2 + rλ/(α-λ) - sλ/(β+λ),   -β < λ < α.
//! ```
//!
//! Every evaluator is a closed form; derivatives are analytic.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Evaluations that touch an open endpoint closer than this are rejected.
pub const ENDPOINT_GUARD: f64 = 1e-12;

/// A cumulant function `ψ(λ) = log E[exp(λ Z(1))]` on its open domain.
pub trait Cumulant {
    /// Open interval on which `ψ` is finite.
    fn domain(&self) -> (f64, f64);
    fn psi(&self, lambda: f64) -> Result<f64>;
    fn psi_prime(&self, lambda: f64) -> Result<f64>;
    fn psi_second(&self, lambda: f64) -> Result<f64>;
    /// Infimum and supremum of `ψ'` over the domain.
    fn psi_prime_range(&self) -> (f64, f64);

    fn check_domain(&self, lambda: f64) -> Result<()> {
        let (lo, hi) = self.domain();
        let inside = lambda.is_finite()
            && (lo == f64::NEG_INFINITY || lambda > lo + ENDPOINT_GUARD)
            && (hi == f64::INFINITY || lambda < hi - ENDPOINT_GUARD);
        if inside {
            Ok(())
        } else {
            Err(Error::Domain { lambda, lo, hi })
        }
    }
}

/// Law of the i.i.d. increments of a discrete-time walk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum IncrementLaw {
    /// `+1` with probability `p`, `-1` otherwise.
    TwoPoint { p: f64 },
    /// Gaussian steps.
    Normal { mean_step: f64, var_step: f64 },
}

impl IncrementLaw {
    pub fn two_point(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", format!("{p} must lie in (0, 1)")));
        }
        Ok(Self::TwoPoint { p })
    }

    pub fn normal(mean_step: f64, var_step: f64) -> Result<Self> {
        if !mean_step.is_finite() {
            return Err(invalid("mean_step", "must be finite"));
        }
        if !(var_step > 0.0 && var_step.is_finite()) {
            return Err(invalid("var_step", format!("{var_step} must be > 0")));
        }
        Ok(Self::Normal {
            mean_step,
            var_step,
        })
    }

    /// Exponentially tilted law: `P^λ(dy) = e^{λy - ψ(λ)} P(dy)`.
    pub fn tilt(&self, lambda: f64) -> Result<Self> {
        self.check_domain(lambda)?;
        Ok(match *self {
            Self::TwoPoint { p } => {
                let up = p * lambda.exp();
                let down = (1.0 - p) * (-lambda).exp();
                Self::TwoPoint { p: up / (up + down) }
            }
            Self::Normal {
                mean_step,
                var_step,
            } => Self::Normal {
                mean_step: mean_step + lambda * var_step,
                var_step,
            },
        })
    }
}

impl Cumulant for IncrementLaw {
    fn domain(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn psi(&self, lambda: f64) -> Result<f64> {
        self.check_domain(lambda)?;
        if lambda == 0.0 {
            return Ok(0.0);
        }
        Ok(match *self {
            // log(p e^λ + q e^-λ) = log(2√(pq)) + log cosh(λ + ½log(p/q))
            Self::TwoPoint { p } => {
                let q = 1.0 - p;
                let z = lambda + 0.5 * (p / q).ln();
                (2.0 * (p * q).sqrt()).ln() + log_cosh(z)
            }
            Self::Normal {
                mean_step,
                var_step,
            } => mean_step * lambda + 0.5 * var_step * lambda * lambda,
        })
    }

    fn psi_prime(&self, lambda: f64) -> Result<f64> {
        self.check_domain(lambda)?;
        Ok(match *self {
            Self::TwoPoint { p } => (lambda + 0.5 * (p / (1.0 - p)).ln()).tanh(),
            Self::Normal {
                mean_step,
                var_step,
            } => mean_step + var_step * lambda,
        })
    }

    fn psi_second(&self, lambda: f64) -> Result<f64> {
        self.check_domain(lambda)?;
        Ok(match *self {
            Self::TwoPoint { p } => {
                let c = (lambda + 0.5 * (p / (1.0 - p)).ln()).cosh();
                1.0 / (c * c)
            }
            Self::Normal { var_step, .. } => var_step,
        })
    }

    fn psi_prime_range(&self) -> (f64, f64) {
        match self {
            Self::TwoPoint { .. } => (-1.0, 1.0),
            Self::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }
}

fn log_cosh(z: f64) -> f64 {
    let a = z.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Brownian motion with drift plus two-sided exponential jumps.
///
/// The process drift is `-drift_mu`. Positive jumps arrive at rate
/// `pos_rate` with `Exp(pos_jump_rate)` sizes; negative jumps at rate
/// `neg_rate` with `Exp(neg_jump_rate)` sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyModel {
    pub drift_mu: f64,
    pub sigma: f64,
    pub pos_rate: f64,
    pub pos_jump_rate: f64,
    pub neg_rate: f64,
    pub neg_jump_rate: f64,
}

impl LevyModel {
    /// Validates the triplet. The drift sign is not restricted here because
    /// tilted models routinely have positive drift; the negative-mean
    /// requirement is enforced by [`CumulantProfile::new`].
    pub fn new(
        drift_mu: f64,
        sigma: f64,
        pos_rate: f64,
        pos_jump_rate: f64,
        neg_rate: f64,
        neg_jump_rate: f64,
    ) -> Result<Self> {
        if !drift_mu.is_finite() {
            return Err(invalid("drift_mu", "must be finite"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(
                "sigma",
                format!("{sigma} must be > 0 (finite-variation processes are excluded)"),
            ));
        }
        for (name, v) in [("pos_rate", pos_rate), ("neg_rate", neg_rate)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be >= 0")));
            }
        }
        for (name, v) in [("pos_jump_rate", pos_jump_rate), ("neg_jump_rate", neg_jump_rate)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("{v} must be > 0")));
            }
        }
        Ok(Self {
            drift_mu,
            sigma,
            pos_rate,
            pos_jump_rate,
            neg_rate,
            neg_jump_rate,
        })
    }

    /// Linear Brownian motion `-μt + σB(t)`.
    pub fn brownian(drift_mu: f64, sigma: f64) -> Result<Self> {
        Self::new(drift_mu, sigma, 0.0, 1.0, 0.0, 1.0)
    }

    /// The worked example with `μ = σ = 1`, positive jumps at rate 2 with
    /// mean size 1/4, negative jumps at rate 3 with mean size 1.
    pub fn exponential_jump_example() -> Self {
        Self {
            drift_mu: 1.0,
            sigma: 1.0,
            pos_rate: 2.0,
            pos_jump_rate: 4.0,
            neg_rate: 3.0,
            neg_jump_rate: 1.0,
        }
    }

    pub fn is_brownian(&self) -> bool {
        self.pos_rate == 0.0 && self.neg_rate == 0.0
    }

    /// `E[Z(1)] = ψ'(0)`.
    pub fn mean(&self) -> f64 {
        -self.drift_mu + self.pos_rate / self.pos_jump_rate - self.neg_rate / self.neg_jump_rate
    }

    /// Tilted triplet: drift `-μ + λσ²`, jump intensities `rα/(α-λ)` and
    /// `sβ/(β+λ)`, jump rates `α-λ` and `β+λ`.
    pub fn tilt(&self, lambda: f64) -> Result<Self> {
        self.check_domain(lambda)?;
        Ok(Self {
            drift_mu: self.drift_mu - lambda * self.sigma * self.sigma,
            sigma: self.sigma,
            pos_rate: self.pos_rate * self.pos_jump_rate / (self.pos_jump_rate - lambda),
            pos_jump_rate: self.pos_jump_rate - lambda,
            neg_rate: self.neg_rate * self.neg_jump_rate / (self.neg_jump_rate + lambda),
            neg_jump_rate: self.neg_jump_rate + lambda,
        })
    }
}

impl Cumulant for LevyModel {
    fn domain(&self) -> (f64, f64) {
        let lo = if self.neg_rate > 0.0 {
            -self.neg_jump_rate
        } else {
            f64::NEG_INFINITY
        };
        let hi = if self.pos_rate > 0.0 {
            self.pos_jump_rate
        } else {
            f64::INFINITY
        };
        (lo, hi)
    }

    fn psi(&self, lambda: f64) -> Result<f64> {
        self.check_domain(lambda)?;
        if lambda == 0.0 {
            return Ok(0.0);
        }
        let s2 = self.sigma * self.sigma;
        Ok(-self.drift_mu * lambda
            + 0.5 * s2 * lambda * lambda
            + self.pos_rate * lambda / (self.pos_jump_rate - lambda)
            - self.neg_rate * lambda / (self.neg_jump_rate + lambda))
    }

    fn psi_prime(&self, lambda: f64) -> Result<f64> {
        self.check_domain(lambda)?;
        let a = self.pos_jump_rate - lambda;
        let b = self.neg_jump_rate + lambda;
        Ok(-self.drift_mu
            + self.sigma * self.sigma * lambda
            + self.pos_rate * self.pos_jump_rate / (a * a)
            - self.neg_rate * self.neg_jump_rate / (b * b))
    }

    fn psi_second(&self, lambda: f64) -> Result<f64> {
        self.check_domain(lambda)?;
        let a = self.pos_jump_rate - lambda;
        let b = self.neg_jump_rate + lambda;
        Ok(self.sigma * self.sigma
            + 2.0 * self.pos_rate * self.pos_jump_rate / (a * a * a)
            + 2.0 * self.neg_rate * self.neg_jump_rate / (b * b * b))
    }

    fn psi_prime_range(&self) -> (f64, f64) {
        // σ > 0 makes ψ' unbounded in both directions
        (f64::NEG_INFINITY, f64::INFINITY)
    }
}

/// Either driving-noise family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Walk(IncrementLaw),
    Levy(LevyModel),
}

impl Model {
    pub fn tilt(&self, lambda: f64) -> Result<Self> {
        Ok(match self {
            Self::Walk(law) => Self::Walk(law.tilt(lambda)?),
            Self::Levy(m) => Self::Levy(m.tilt(lambda)?),
        })
    }

    pub fn is_walk(&self) -> bool {
        matches!(self, Self::Walk(_))
    }
}

impl From<IncrementLaw> for Model {
    fn from(law: IncrementLaw) -> Self {
        Self::Walk(law)
    }
}

impl From<LevyModel> for Model {
    fn from(m: LevyModel) -> Self {
        Self::Levy(m)
    }
}

impl Cumulant for Model {
    fn domain(&self) -> (f64, f64) {
        match self {
            Self::Walk(l) => l.domain(),
            Self::Levy(m) => m.domain(),
        }
    }
    fn psi(&self, lambda: f64) -> Result<f64> {
        match self {
            Self::Walk(l) => l.psi(lambda),
            Self::Levy(m) => m.psi(lambda),
        }
    }
    fn psi_prime(&self, lambda: f64) -> Result<f64> {
        match self {
            Self::Walk(l) => l.psi_prime(lambda),
            Self::Levy(m) => m.psi_prime(lambda),
        }
    }
    fn psi_second(&self, lambda: f64) -> Result<f64> {
        match self {
            Self::Walk(l) => l.psi_second(lambda),
            Self::Levy(m) => m.psi_second(lambda),
        }
    }
    fn psi_prime_range(&self) -> (f64, f64) {
        match self {
            Self::Walk(l) => l.psi_prime_range(),
            Self::Levy(m) => m.psi_prime_range(),
        }
    }
}

/// Solved constants of one model: the Cramér root `λ*`, the minimiser
/// `λ₀` of `ψ`, and the right end `λ_max` of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CumulantProfile {
    model: Model,
    lambda_star: f64,
    lambda_zero: f64,
    lambda_max: f64,
    psi_prime_star: f64,
}

impl CumulantProfile {
    pub fn new(model: impl Into<Model>) -> Result<Self> {
        let model = model.into();
        let mean = model.psi_prime(0.0)?;
        if mean >= 0.0 {
            return Err(Error::NoCramerRoot(format!(
                "mean increment psi'(0) = {mean} is not negative, so the barrier is not a rare target"
            )));
        }
        let (_, lambda_max) = model.domain();
        let derivative = |l: f64| -> Result<(f64, f64)> {
            Ok((model.psi_prime(l)?, model.psi_second(l)?))
        };
        let hi0 = upper_bracket(lambda_max, 0.0, |l| Ok(model.psi_prime(l)? > 0.0))?
            .ok_or_else(|| Error::NoCramerRoot("psi' never becomes positive".into()))?;
        let lambda_zero = solve_increasing(derivative, 0.0, hi0, 0.0)?;

        let value = |l: f64| -> Result<(f64, f64)> { Ok((model.psi(l)?, model.psi_prime(l)?)) };
        let hi = upper_bracket(lambda_max, lambda_zero, |l| Ok(model.psi(l)? > 0.0))?
            .ok_or_else(|| {
                Error::NoCramerRoot("psi stays negative on the whole positive domain".into())
            })?;
        let lambda_star = solve_increasing(value, lambda_zero, hi, 1e-12)?;
        let psi_prime_star = model.psi_prime(lambda_star)?;
        Ok(Self {
            model,
            lambda_star,
            lambda_zero,
            lambda_max,
            psi_prime_star,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    /// Positive root of `ψ`.
    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    /// Positive root of `ψ'`.
    pub fn lambda_zero(&self) -> f64 {
        self.lambda_zero
    }

    /// Right end of the domain of `ψ` (`+∞` when unbounded).
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// Drift of the process conditioned to reach a high barrier, `ψ'(λ*)`.
    pub fn psi_prime_star(&self) -> f64 {
        self.psi_prime_star
    }

    pub fn psi(&self, lambda: f64) -> Result<f64> {
        self.model.psi(lambda)
    }

    pub fn psi_prime(&self, lambda: f64) -> Result<f64> {
        self.model.psi_prime(lambda)
    }

    pub fn psi_second(&self, lambda: f64) -> Result<f64> {
        self.model.psi_second(lambda)
    }

    pub fn tilt(&self, lambda: f64) -> Result<Model> {
        self.model.tilt(lambda)
    }

    /// The model under `P^{λ*}`, where reaching the barrier is typical.
    pub fn tilted_at_star(&self) -> Model {
        self.model
            .tilt(self.lambda_star)
            .expect("lambda* lies inside the domain")
    }

    /// The `λ > λ₀` with `ψ'(λ) = target_drift`.
    ///
    /// A budget `B(x) = Cx` corresponds to `target_drift = 1/C`.
    pub fn solve_lambda_for_drift(&self, target_drift: f64) -> Result<f64> {
        if !(target_drift > 0.0) {
            return Err(invalid(
                "target_drift",
                format!("{target_drift} must be > 0"),
            ));
        }
        let (_, sup) = self.model.psi_prime_range();
        if target_drift >= sup {
            return Err(Error::DriftOutOfRange {
                target: target_drift,
                sup,
            });
        }
        let f = |l: f64| -> Result<(f64, f64)> {
            Ok((
                self.model.psi_prime(l)? - target_drift,
                self.model.psi_second(l)?,
            ))
        };
        let hi = upper_bracket(self.lambda_max, self.lambda_zero, |l| {
            Ok(self.model.psi_prime(l)? > target_drift)
        })?
        .ok_or(Error::DriftOutOfRange {
            target: target_drift,
            sup,
        })?;
        solve_increasing(f, self.lambda_zero, hi, 1e-13)
    }

    /// Convex conjugate `ζ[s] = sup_λ {λs - ψ(λ)}`.
    pub fn legendre(&self, s: f64) -> Result<f64> {
        let (inf, sup) = self.model.psi_prime_range();
        if let Model::Walk(IncrementLaw::TwoPoint { p }) = self.model {
            // closure of the range: the supremum is approached as λ → ±∞
            if s == 1.0 {
                return Ok(-p.ln());
            }
            if s == -1.0 {
                return Ok(-(1.0 - p).ln());
            }
        }
        if !(s > inf && s < sup) {
            return Err(Error::DriftOutOfRange { target: s, sup });
        }
        let at_zero = self.model.psi_prime(0.0)?;
        if at_zero == s {
            return Ok(0.0);
        }
        let (lo_dom, hi_dom) = self.model.domain();
        let f = |l: f64| -> Result<(f64, f64)> {
            Ok((self.model.psi_prime(l)? - s, self.model.psi_second(l)?))
        };
        let lambda_s = if at_zero < s {
            let hi = upper_bracket(hi_dom, 0.0, |l| Ok(self.model.psi_prime(l)? > s))?
                .ok_or(Error::DriftOutOfRange { target: s, sup })?;
            solve_increasing(f, 0.0, hi, 1e-14)?
        } else {
            let lo = lower_bracket(lo_dom, 0.0, |l| Ok(self.model.psi_prime(l)? < s))?
                .ok_or(Error::DriftOutOfRange { target: s, sup })?;
            solve_increasing(f, lo, 0.0, 1e-14)?
        };
        Ok(lambda_s * s - self.model.psi(lambda_s)?)
    }

    /// `ψ'(λ*) · C`: the particle count at which a budget `B(x) = Cx`
    /// split evenly stops being enough for each particle.
    pub fn threshold_particles(&self, budget_slope: f64) -> f64 {
        self.psi_prime_star * budget_slope
    }

    /// Asymptotically optimal number of independent particles for a
    /// budget `B(x) = Cx`: the largest `N ≥ 1` with `N/C < ψ'(λ*)`.
    ///
    /// Products within `1e-9` (relative) of an integer are treated as that
    /// integer, so the boundary `N·ψ'(λ) = ψ'(λ*)` is excluded.
    pub fn optimal_particles(&self, budget_slope: f64) -> Result<u64> {
        if !(budget_slope > 0.0 && budget_slope.is_finite()) {
            return Err(invalid(
                "budget_slope",
                format!("{budget_slope} must be > 0"),
            ));
        }
        let mut ratio = self.threshold_particles(budget_slope);
        let nearest = ratio.round();
        if (ratio - nearest).abs() <= 1e-9 * ratio.max(1.0) {
            ratio = nearest;
        }
        if ratio <= 1.0 {
            Ok(1)
        } else {
            Ok(ratio.ceil() as u64 - 1)
        }
    }
}

/// Find `h` in `(start, domain_hi)` with `pred(h)` true, doubling outward.
fn upper_bracket(
    domain_hi: f64,
    start: f64,
    pred: impl Fn(f64) -> Result<bool>,
) -> Result<Option<f64>> {
    if domain_hi.is_finite() {
        let h = domain_hi - 2.0 * ENDPOINT_GUARD;
        return Ok(if pred(h)? { Some(h) } else { None });
    }
    let mut step = 1.0_f64.max(start.abs());
    while step < 1e9 {
        let h = start + step;
        if pred(h)? {
            return Ok(Some(h));
        }
        step *= 2.0;
    }
    Ok(None)
}

fn lower_bracket(
    domain_lo: f64,
    start: f64,
    pred: impl Fn(f64) -> Result<bool>,
) -> Result<Option<f64>> {
    if domain_lo.is_finite() {
        let l = domain_lo + 2.0 * ENDPOINT_GUARD;
        return Ok(if pred(l)? { Some(l) } else { None });
    }
    let mut step = 1.0_f64.max(start.abs());
    while step < 1e9 {
        let l = start - step;
        if pred(l)? {
            return Ok(Some(l));
        }
        step *= 2.0;
    }
    Ok(None)
}

/// Root of a strictly increasing function on `[lo, hi]` (with
/// `f(lo) ≤ 0 ≤ f(hi)`) by Newton steps safeguarded with bisection.
///
/// `f` returns the value and derivative. Iteration stops when
/// `|f| ≤ rel_tol · max(1, |f'|)` or the bracket collapses.
pub(crate) fn solve_increasing(
    f: impl Fn(f64) -> Result<(f64, f64)>,
    mut lo: f64,
    mut hi: f64,
    rel_tol: f64,
) -> Result<f64> {
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let (v, d) = f(x)?;
        if v == 0.0 || (rel_tol > 0.0 && v.abs() <= rel_tol * d.abs().max(1.0)) {
            // polish with one more Newton step if it stays in the bracket
            let polished = x - v / d;
            if d > 0.0 && polished > lo && polished < hi {
                let (pv, _) = f(polished)?;
                if pv.abs() < v.abs() {
                    return Ok(polished);
                }
            }
            return Ok(x);
        }
        if v < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * x.abs().max(1e-300) {
            return Ok(x);
        }
        let newton = if d > 0.0 { x - v / d } else { f64::NAN };
        x = if newton.is_finite() && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(x)
}
