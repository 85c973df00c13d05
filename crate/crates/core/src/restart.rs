//! Restarted processes on `(0, x)`.
//!
//! Each cycle starts from a draw of a restart measure `ν_x` and runs until
//! the path leaves `(0, x)`. Cycles concatenate until one leaves through
//! `x` (success) or the cumulative time exceeds the budget.

use std::f64::consts::PI;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::{CumulantProfile, LevyModel, Model};
use crate::error::{invalid, Error, Result};
use crate::oracle;
use crate::paths::{simulate_exit, ExitOutcome, ExitSide, SimConfig};
use crate::rng::{experiment_id, stream, sub_experiment};
use crate::stats::{ks_exponential, BinomialEstimate, KahanSum, KsResult, Z95};

/// Distribution on `(0, x)` used to re-initialise the process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RestartMeasure {
    /// Density `θe^{-θy}/(1 - e^{-θx})`.
    TruncatedExponential { rate: f64, upper: f64 },
    /// Quasi-stationary law of `-μt + B(t)` killed outside `(0, x)`:
    /// density `D sin(πy/x) e^{-μy}`.
    BrownianQsd { mu: f64, upper: f64 },
    /// Uniform draw from a list of points.
    Empirical { samples: Vec<f64>, upper: f64 },
}

impl RestartMeasure {
    pub fn truncated_exponential(rate: f64, upper: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid("rate", format!("{rate} must be > 0")));
        }
        check_upper(upper)?;
        Ok(Self::TruncatedExponential { rate, upper })
    }

    pub fn brownian_qsd(mu: f64, upper: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(invalid("mu", format!("{mu} must be > 0")));
        }
        check_upper(upper)?;
        Ok(Self::BrownianQsd { mu, upper })
    }

    pub fn empirical(samples: Vec<f64>, upper: f64) -> Result<Self> {
        check_upper(upper)?;
        if samples.is_empty() {
            return Err(invalid("samples", "need at least one point"));
        }
        if samples.iter().any(|&y| !(y > 0.0 && y < upper)) {
            return Err(invalid("samples", format!("all points must lie in (0, {upper})")));
        }
        Ok(Self::Empirical { samples, upper })
    }

    pub fn upper(&self) -> f64 {
        match *self {
            Self::TruncatedExponential { upper, .. }
            | Self::BrownianQsd { upper, .. }
            | Self::Empirical { upper, .. } => upper,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::TruncatedExponential { rate, upper } => sample_trunc_exp(*rate, *upper, rng),
            Self::BrownianQsd { mu, upper } => loop {
                // envelope: truncated exponential with the same decay
                let y = sample_trunc_exp(*mu, *upper, rng);
                if rng.random::<f64>() < (PI * y / upper).sin() {
                    break y;
                }
            },
            Self::Empirical { samples, .. } => samples[rng.random_range(0..samples.len())],
        }
    }

    /// `∫ e^{λy} ν(dy)`.
    pub fn exp_moment(&self, lambda: f64) -> f64 {
        if lambda == 0.0 {
            return 1.0;
        }
        match self {
            Self::TruncatedExponential { rate, upper } => {
                rate * expm1_over(lambda - rate, *upper) / -(-rate * upper).exp_m1()
            }
            Self::BrownianQsd { mu, upper } => {
                let a = lambda - mu;
                let w = PI / upper;
                qsd_constant(*mu, *upper) * w * ((a * upper).exp() + 1.0) / (a * a + w * w)
            }
            Self::Empirical { samples, .. } => {
                let s: KahanSum = samples.iter().map(|y| (lambda * y).exp()).collect();
                s.total() / samples.len() as f64
            }
        }
    }

    /// Density on `(0, x)`; `None` for empirical measures.
    pub fn density(&self, y: f64) -> Option<f64> {
        let x = self.upper();
        if !(y > 0.0 && y < x) {
            return match self {
                Self::Empirical { .. } => None,
                _ => Some(0.0),
            };
        }
        match *self {
            Self::TruncatedExponential { rate, upper } => {
                Some(rate * (-rate * y).exp() / -(-rate * upper).exp_m1())
            }
            Self::BrownianQsd { mu, upper } => {
                Some(qsd_constant(mu, upper) * (PI * y / upper).sin() * (-mu * y).exp())
            }
            Self::Empirical { .. } => None,
        }
    }

    pub fn cdf(&self, y: f64) -> f64 {
        let x = self.upper();
        if y <= 0.0 {
            return 0.0;
        }
        if y >= x {
            return 1.0;
        }
        match self {
            Self::TruncatedExponential { rate, upper } => {
                (-rate * y).exp_m1() / (-rate * upper).exp_m1()
            }
            Self::BrownianQsd { mu, upper } => {
                let w = PI / upper;
                let e = (-mu * y).exp();
                let part = w - e * (mu * (w * y).sin() + w * (w * y).cos());
                qsd_constant(*mu, *upper) * part / (mu * mu + w * w)
            }
            Self::Empirical { samples, .. } => {
                samples.iter().filter(|&&s| s <= y).count() as f64 / samples.len() as f64
            }
        }
    }

    /// Mean of the measure.
    pub fn mean(&self) -> f64 {
        match self {
            Self::TruncatedExponential { rate, upper } => {
                1.0 / rate - upper * (-rate * upper).exp() / -(-rate * upper).exp_m1()
            }
            Self::BrownianQsd { .. } => oracle::quadrature(
                |y| y * self.density(y).unwrap_or(0.0),
                0.0,
                self.upper(),
                1e-12,
            )
            .expect("smooth integrand"),
            Self::Empirical { samples, .. } => {
                samples.iter().copied().collect::<KahanSum>().total() / samples.len() as f64
            }
        }
    }
}

fn check_upper(upper: f64) -> Result<()> {
    if !(upper > 0.0 && upper.is_finite()) {
        return Err(invalid("upper", format!("{upper} must be > 0")));
    }
    Ok(())
}

/// `(e^{ax} - 1)/a`, continuous at `a = 0`.
fn expm1_over(a: f64, x: f64) -> f64 {
    let ax = a * x;
    if ax.abs() < 1e-5 {
        x * (1.0 + ax / 2.0 + ax * ax / 6.0)
    } else {
        ax.exp_m1() / a
    }
}

fn sample_trunc_exp<R: Rng + ?Sized>(rate: f64, upper: f64, rng: &mut R) -> f64 {
    let span = (-rate * upper).exp_m1();
    loop {
        let u: f64 = rng.random();
        let y = -(u * span).ln_1p() / rate;
        if y > 0.0 && y < upper {
            return y;
        }
    }
}

/// Normalising constant `D = (μ²x² + π²)/(πx(e^{-μx} + 1))`.
pub fn qsd_constant(mu: f64, x: f64) -> f64 {
    (mu * mu * x * x + PI * PI) / (PI * x * ((-mu * x).exp() + 1.0))
}

/// Absorption rate of the Brownian QSD on `(0, x)`: `½(μ² + π²/x²)`.
pub fn brownian_qsd_beta(mu: f64, x: f64) -> f64 {
    0.5 * (mu * mu + PI * PI / (x * x))
}

/// `q(x)` for a continuous-path process with Cramér root `λ*`, from the
/// optional-stopping identity `E_ν e^{λ*Z(0)} = e^{λ*x}q + (1 - q)`.
pub fn continuous_q(measure: &RestartMeasure, lambda_star: f64, x: f64) -> f64 {
    (measure.exp_moment(lambda_star) - 1.0) / (lambda_star * x).exp_m1()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleRecord {
    pub start: f64,
    pub exit: ExitOutcome,
}

/// One restart cycle: draw a start point, run until exit.
pub fn simulate_cycle<R: Rng + ?Sized>(
    model: &Model,
    measure: &RestartMeasure,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<CycleRecord> {
    let start = measure.sample(rng);
    let exit = simulate_exit(model, start, measure.upper(), cfg, rng)?;
    Ok(CycleRecord { start, exit })
}

const CYCLES: u64 = experiment_id("restart/cycles");
const RUNS: u64 = experiment_id("restart/runs");

/// Independent cycles, simulated in parallel and returned in index order.
/// Cycles that hit the event cap are dropped and counted.
pub fn simulate_cycles(
    model: &Model,
    measure: &RestartMeasure,
    count: u64,
    cfg: &SimConfig,
    tag: u64,
) -> Result<(Vec<CycleRecord>, u64)> {
    cfg.validate()?;
    let exp = sub_experiment(CYCLES, &[tag]);
    let results: Vec<Result<CycleRecord>> = (0..count)
        .into_par_iter()
        .map(|i| simulate_cycle(model, measure, cfg, &mut stream(cfg.master_seed, exp, i)))
        .collect();
    let mut cycles = Vec::with_capacity(results.len());
    let mut discarded = 0;
    for r in results {
        match r {
            Ok(c) => cycles.push(c),
            Err(Error::BudgetCapExceeded { .. }) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
    Ok((cycles, discarded))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QEstimate {
    pub q_hat: f64,
    pub ci_half_width: f64,
    pub cycles: u64,
    pub discarded: u64,
}

/// Fraction of independent cycles that leave through the upper barrier.
pub fn estimate_q(
    model: &Model,
    measure: &RestartMeasure,
    reps: u64,
    cfg: &SimConfig,
    tag: u64,
) -> Result<QEstimate> {
    if reps == 0 {
        return Err(invalid("reps", "must be >= 1"));
    }
    let (cycles, discarded) = simulate_cycles(model, measure, reps, cfg, tag)?;
    Ok(q_from_cycles(&cycles, discarded))
}

pub fn q_from_cycles(cycles: &[CycleRecord], discarded: u64) -> QEstimate {
    let ups = cycles.iter().filter(|c| c.exit.side == ExitSide::Upper).count() as u64;
    let b = BinomialEstimate::new(ups, cycles.len() as u64);
    QEstimate {
        q_hat: b.p(),
        ci_half_width: b.ci_half_width(),
        cycles: cycles.len() as u64,
        discarded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaFit {
    pub rate: f64,
    /// KS test of the cycle times against `Exp(rate)`; the exponential law
    /// is exact only under quasi-stationary restart.
    pub ks: Option<KsResult>,
    pub closed_form: bool,
}

/// `β(x)`: closed form for Brownian QSD restart, otherwise the maximum
/// likelihood exponential rate of simulated cycle times.
pub fn beta_rate(
    model: &Model,
    measure: &RestartMeasure,
    cycles: u64,
    cfg: &SimConfig,
) -> Result<BetaFit> {
    if let (Model::Levy(m), RestartMeasure::BrownianQsd { mu, upper }) = (model, measure) {
        if m.is_brownian() && m.sigma == 1.0 && m.drift_mu == *mu {
            return Ok(BetaFit {
                rate: brownian_qsd_beta(*mu, *upper),
                ks: None,
                closed_form: true,
            });
        }
    }
    let (cs, _) = simulate_cycles(model, measure, cycles, cfg, experiment_id("beta"))?;
    let times: Vec<f64> = cs.iter().map(|c| c.exit.time).collect();
    Ok(fit_exponential(&times))
}

pub fn fit_exponential(times: &[f64]) -> BetaFit {
    let total: KahanSum = times.iter().copied().collect();
    let rate = times.len() as f64 / total.total();
    BetaFit {
        rate,
        ks: (times.len() >= 2).then(|| ks_exponential(times, rate)),
        closed_form: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RestartRunResult {
    pub success: bool,
    /// Time of the successful exit, or the budget on failure.
    pub total_time: f64,
    /// Completed cycles, including the successful one.
    pub cycle_count: u64,
    /// Total duration of completed cycles that left through 0.
    pub failed_time: f64,
    pub failed_cycles: u64,
    /// Duration of the successful cycle.
    pub success_cycle_time: Option<f64>,
}

impl RestartRunResult {
    /// Mean length of the failed cycles `η`.
    pub fn mean_failed(&self) -> Option<f64> {
        (self.failed_cycles > 0).then(|| self.failed_time / self.failed_cycles as f64)
    }
}

/// Restarted passage within `budget`. A cycle straddling the budget counts
/// as failure even if it would have succeeded later.
pub fn simulate_restarted_passage<R: Rng + ?Sized>(
    model: &Model,
    measure: &RestartMeasure,
    budget: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<RestartRunResult> {
    if !(budget > 0.0) {
        return Err(invalid("budget", format!("{budget} must be > 0")));
    }
    let mut elapsed = KahanSum::new();
    let mut failed = KahanSum::new();
    let mut cycle_count = 0;
    let mut failed_cycles = 0;
    loop {
        let c = simulate_cycle(model, measure, cfg, rng)?;
        let end = elapsed.total() + c.exit.time;
        if end > budget {
            return Ok(RestartRunResult {
                success: false,
                total_time: budget,
                cycle_count,
                failed_time: failed.total(),
                failed_cycles,
                success_cycle_time: None,
            });
        }
        elapsed.add(c.exit.time);
        cycle_count += 1;
        if c.exit.side == ExitSide::Upper {
            return Ok(RestartRunResult {
                success: true,
                total_time: elapsed.total(),
                cycle_count,
                failed_time: failed.total(),
                failed_cycles,
                success_cycle_time: Some(c.exit.time),
            });
        }
        failed.add(c.exit.time);
        failed_cycles += 1;
    }
}

/// Independent restarted runs in parallel, in index order.
pub fn simulate_runs(
    model: &Model,
    measure: &RestartMeasure,
    budget: f64,
    reps: u64,
    cfg: &SimConfig,
    tag: u64,
) -> Result<Vec<RestartRunResult>> {
    cfg.validate()?;
    let exp = sub_experiment(RUNS, &[tag, budget.to_bits()]);
    (0..reps)
        .into_par_iter()
        .map(|i| {
            simulate_restarted_passage(model, measure, budget, cfg, &mut stream(cfg.master_seed, exp, i))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub x: f64,
    pub budget: f64,
    /// `P̂(τ^ν ≤ B) / (P(τ ≤ B)·B·∫e^{λ*y}ν(dy))`.
    pub gain: f64,
    pub ci_half_width: f64,
    pub success_probability: f64,
    /// `P(τ(x) ≤ B)` for the process started at 0.
    pub passage_probability: f64,
    pub q_hat: f64,
    pub beta_hat: f64,
    pub exp_moment: f64,
    /// Under QSD restart the success time is `Exp(βq)`, so the predicted
    /// gain is `(1 - e^{-βqB})/(P(τ ≤ B)·B·∫e^{λ*y}ν(dy))`.
    pub analytic_prediction: Option<f64>,
    pub mean_success_cycle: Option<f64>,
    pub mean_failed_cycle: Option<f64>,
}

/// Exact `P(τ(x) ≤ B)` where an oracle exists: Brownian motion and `±1`
/// walks (integer barrier and budget).
pub fn exact_passage_probability(model: &Model, x: f64, budget: f64) -> Option<f64> {
    match model {
        Model::Levy(m) if m.is_brownian() => {
            Some(oracle::brownian_passage_cdf(m.drift_mu, m.sigma, x, budget))
        }
        Model::Walk(crate::IncrementLaw::TwoPoint { p }) if x.fract() == 0.0 => {
            oracle::exact_walk_passage(*p, x as u32, budget.floor() as u32)
                .ok()
                .map(|t| t.at(budget.floor() as u32))
        }
        _ => None,
    }
}

/// Restart gain relative to the single-start benchmark.
///
/// `passage_probability` overrides the oracle for models without one
/// (estimate it with the tilted pool of [`crate::parallel`]).
pub fn restart_gain_report(
    model: &Model,
    measure: &RestartMeasure,
    budget: f64,
    reps: u64,
    passage_probability: Option<f64>,
    cfg: &SimConfig,
) -> Result<GainReport> {
    let x = measure.upper();
    let profile = CumulantProfile::new(*model)?;
    let p_tau = passage_probability
        .or_else(|| exact_passage_probability(model, x, budget))
        .ok_or_else(|| invalid("passage_probability", "no oracle for this model; supply an estimate"))?;
    if !(p_tau > 0.0) {
        return Err(Error::InsufficientSignal(
            "single-start passage probability is zero".into(),
        ));
    }
    let runs = simulate_runs(model, measure, budget, reps, cfg, x.to_bits())?;
    let successes = runs.iter().filter(|r| r.success).count() as u64;
    let b = BinomialEstimate::new(successes, reps);
    let moment = measure.exp_moment(profile.lambda_star());
    let scale = p_tau * budget * moment;

    let cycles: u64 = runs.iter().map(|r| r.cycle_count).sum();
    let cycle_time: KahanSum = runs
        .iter()
        .map(|r| r.failed_time + r.success_cycle_time.unwrap_or(0.0))
        .collect();
    let ups: u64 = successes;
    let q_hat = if cycles > 0 { ups as f64 / cycles as f64 } else { f64::NAN };
    let beta_hat = if cycles > 0 {
        cycles as f64 / cycle_time.total()
    } else {
        f64::NAN
    };
    let succ: Vec<f64> = runs.iter().filter_map(|r| r.success_cycle_time).collect();
    let failed_cycles: u64 = runs.iter().map(|r| r.failed_cycles).sum();
    let failed_time: KahanSum = runs.iter().map(|r| r.failed_time).collect();

    let analytic_prediction = match (model, measure) {
        (Model::Levy(m), RestartMeasure::BrownianQsd { mu, upper })
            if m.is_brownian() && m.sigma == 1.0 && m.drift_mu == *mu =>
        {
            let beta = brownian_qsd_beta(*mu, *upper);
            let q = continuous_q(measure, profile.lambda_star(), x);
            Some(-(-beta * q * budget).exp_m1() / scale)
        }
        _ => None,
    };
    Ok(GainReport {
        x,
        budget,
        gain: b.p() / scale,
        ci_half_width: Z95 * b.std_err() / scale,
        success_probability: b.p(),
        passage_probability: p_tau,
        q_hat,
        beta_hat,
        exp_moment: moment,
        analytic_prediction,
        mean_success_cycle: (!succ.is_empty())
            .then(|| succ.iter().sum::<f64>() / succ.len() as f64),
        mean_failed_cycle: (failed_cycles > 0).then(|| failed_time.total() / failed_cycles as f64),
    })
}

/// Convenience: the standard Brownian model with unit diffusion.
pub fn standard_brownian(mu: f64) -> Result<Model> {
    Ok(Model::Levy(LevyModel::brownian(mu, 1.0)?))
}
