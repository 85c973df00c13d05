//! Single trajectories: first passage over a barrier and exit from an
//! interval, for discrete-time walks and for Lévy processes with
//! two-sided exponential jumps.
//!
//! Lévy paths are event driven. Jump epochs come from one exponential clock
//! per jump sign; between jumps the Brownian part moves on sub-steps of at
//! most `dt`. With bridge correction on, a sub-step whose endpoints both lie
//! inside the domain is still counted as a crossing with the Brownian-bridge
//! crossing probability of each barrier. Diffusive crossings land exactly on
//! the barrier (continuous paths do not overshoot); jumps may overshoot.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cumulant::{Cumulant, IncrementLaw, LevyModel, Model};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub master_seed: u64,
    /// Longest Brownian sub-step for Lévy paths.
    pub dt: f64,
    pub bridge_correction: bool,
    /// Cap on sub-steps plus jumps (or walk steps) for a single trajectory.
    pub max_events: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            master_seed: 0,
            dt: DEFAULT_DT,
            bridge_correction: true,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }
}

impl SimConfig {
    pub fn with_seed(master_seed: u64) -> Self {
        Self {
            master_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("{} must be > 0", self.dt)));
        }
        if self.max_events == 0 {
            return Err(invalid("max_events", "must be >= 1"));
        }
        Ok(())
    }
}

/// Likelihood-ratio bookkeeping for simulation under `P^λ`.
///
/// The density of `P` with respect to `P^λ` on `F_τ` is
/// `exp(-λ Z(τ) + τ ψ(λ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tilt {
    pub lambda: f64,
    /// `ψ(λ)` of the original (untilted) model.
    pub psi: f64,
}

impl Tilt {
    pub const NONE: Tilt = Tilt {
        lambda: 0.0,
        psi: 0.0,
    };

    pub fn at(model: &impl Cumulant, lambda: f64) -> Result<Self> {
        Ok(Self {
            lambda,
            psi: model.psi(lambda)?,
        })
    }

    pub fn log_weight(&self, position: f64, time: f64) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        -self.lambda * position + time * self.psi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PassageOutcome {
    pub hit: bool,
    /// Steps for walks, real time for Lévy paths; equals the budget on a miss.
    pub time: f64,
    pub terminal_position: f64,
    /// `Z(τ) - x` on a hit, 0 otherwise.
    pub overshoot: f64,
    /// Log likelihood ratio `-λZ(τ) + τψ(λ)`; 0 without tilt.
    pub log_weight: f64,
}

impl PassageOutcome {
    fn miss(budget: f64, position: f64, tilt: &Tilt) -> Self {
        Self {
            hit: false,
            time: budget,
            terminal_position: position,
            overshoot: 0.0,
            log_weight: tilt.log_weight(position, budget),
        }
    }

    fn hit(time: f64, position: f64, x: f64, tilt: &Tilt) -> Self {
        Self {
            hit: true,
            time,
            terminal_position: position,
            overshoot: (position - x).max(0.0),
            log_weight: tilt.log_weight(position, time),
        }
    }

    /// Hit indicator times the likelihood ratio, the unbiased summand for
    /// `P(τ(x) ≤ budget)` under the original measure.
    pub fn weighted_hit(&self) -> f64 {
        if self.hit {
            self.log_weight.exp()
        } else {
            0.0
        }
    }

    /// Same as [`weighted_hit`](Self::weighted_hit) for a shorter budget.
    pub fn weighted_hit_by(&self, budget: f64) -> f64 {
        if self.hit && self.time <= budget {
            self.log_weight.exp()
        } else {
            0.0
        }
    }
}

/// `exp(-λZ(τ) + τψ(λ))` for an outcome simulated under `P^λ`.
pub fn passage_weight(outcome: &PassageOutcome, tilt: &Tilt) -> f64 {
    tilt.log_weight(outcome.terminal_position, outcome.time).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExitSide {
    Upper,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitOutcome {
    pub side: ExitSide,
    pub time: f64,
    pub terminal_position: f64,
}

fn walk_step<R: Rng + ?Sized>(law: &IncrementLaw, rng: &mut R) -> f64 {
    match *law {
        IncrementLaw::TwoPoint { p } => {
            if rng.random::<f64>() < p {
                1.0
            } else {
                -1.0
            }
        }
        IncrementLaw::Normal {
            mean_step,
            var_step,
        } => {
            let n: f64 = StandardNormal.sample(rng);
            mean_step + var_step.sqrt() * n
        }
    }
}

/// First passage of a walk from 0 over `x` within `budget` steps.
pub fn simulate_walk_passage<R: Rng + ?Sized>(
    law: &IncrementLaw,
    x: f64,
    budget: u64,
    tilt: &Tilt,
    rng: &mut R,
) -> PassageOutcome {
    let mut z = 0.0;
    if let IncrementLaw::TwoPoint { p } = *law {
        // integer arithmetic keeps lattice positions exact
        let target = x.ceil() as i64;
        let mut zi = 0i64;
        for s in 1..=budget {
            zi += if rng.random::<f64>() < p { 1 } else { -1 };
            if zi >= target {
                return PassageOutcome::hit(s as f64, zi as f64, x, tilt);
            }
        }
        return PassageOutcome::miss(budget as f64, zi as f64, tilt);
    }
    for s in 1..=budget {
        z += walk_step(law, rng);
        if z >= x {
            return PassageOutcome::hit(s as f64, z, x, tilt);
        }
    }
    PassageOutcome::miss(budget as f64, z, tilt)
}

/// Exit of a walk from `(0, x)` started at `y0`.
pub fn simulate_walk_exit<R: Rng + ?Sized>(
    law: &IncrementLaw,
    y0: f64,
    x: f64,
    max_events: u64,
    rng: &mut R,
) -> Result<ExitOutcome> {
    check_start(y0, x)?;
    let mut z = y0;
    for s in 1..=max_events {
        z += walk_step(law, rng);
        if z >= x {
            return Ok(ExitOutcome {
                side: ExitSide::Upper,
                time: s as f64,
                terminal_position: z,
            });
        }
        if z <= 0.0 {
            return Ok(ExitOutcome {
                side: ExitSide::Lower,
                time: s as f64,
                terminal_position: z,
            });
        }
    }
    Err(Error::BudgetCapExceeded { cap: max_events })
}

fn check_start(y0: f64, x: f64) -> Result<()> {
    if !(x > 0.0 && y0 > 0.0 && y0 < x) {
        return Err(invalid("y0", format!("{y0} must lie strictly inside (0, {x})")));
    }
    Ok(())
}

/// Where a Lévy sub-step ended relative to the barriers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Crossing {
    Inside,
    Upper,
    Lower,
}

/// Mutable state of one Lévy trajectory: position, clock and the absolute
/// times of the next jump of each sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevyState {
    pub z: f64,
    pub t: f64,
    next_pos: f64,
    next_neg: f64,
}

/// Step generator for a fixed [`LevyModel`].
#[derive(Debug, Clone, Copy)]
pub struct LevyEngine {
    drift: f64,
    sigma: f64,
    pos_rate: f64,
    pos_jump_rate: f64,
    neg_rate: f64,
    neg_jump_rate: f64,
    dt: f64,
    bridge: bool,
}

impl LevyEngine {
    pub fn new(model: &LevyModel, cfg: &SimConfig) -> Self {
        Self {
            drift: -model.drift_mu,
            sigma: model.sigma,
            pos_rate: model.pos_rate,
            pos_jump_rate: model.pos_jump_rate,
            neg_rate: model.neg_rate,
            neg_jump_rate: model.neg_jump_rate,
            dt: cfg.dt,
            bridge: cfg.bridge_correction,
        }
    }

    fn clock<R: Rng + ?Sized>(rate: f64, now: f64, rng: &mut R) -> f64 {
        if rate > 0.0 {
            let e: f64 = Exp1.sample(rng);
            now + e / rate
        } else {
            f64::INFINITY
        }
    }

    /// Fresh state at `(z, t)` with newly drawn jump clocks.
    pub fn start<R: Rng + ?Sized>(&self, z: f64, t: f64, rng: &mut R) -> LevyState {
        LevyState {
            z,
            t,
            next_pos: Self::clock(self.pos_rate, t, rng),
            next_neg: Self::clock(self.neg_rate, t, rng),
        }
    }

    /// One diffusion sub-step ending no later than `horizon`, followed by a
    /// jump if a jump epoch is reached. `events` counts sub-steps and jumps.
    ///
    /// Barriers: the process is stopped at `upper` from below, and at
    /// `lower` from above when given.
    pub fn step<R: Rng + ?Sized>(
        &self,
        s: &mut LevyState,
        horizon: f64,
        upper: f64,
        lower: Option<f64>,
        events: &mut u64,
        rng: &mut R,
    ) -> Crossing {
        let next_jump = s.next_pos.min(s.next_neg);
        let mut h = self.dt;
        let mut jump_due = false;
        if next_jump - s.t <= h {
            h = next_jump - s.t;
            jump_due = true;
        }
        if horizon - s.t < h {
            h = horizon - s.t;
            jump_due = false;
        }
        if h > 0.0 {
            *events += 1;
            let a = s.z;
            let n: f64 = StandardNormal.sample(rng);
            let b = a + self.drift * h + self.sigma * h.sqrt() * n;
            s.t += h;
            if b >= upper {
                s.z = upper;
                return Crossing::Upper;
            }
            if let Some(lo) = lower {
                if b <= lo {
                    s.z = lo;
                    return Crossing::Lower;
                }
            }
            if self.bridge {
                let v = self.sigma * self.sigma * h;
                let p_up = (-2.0 * (upper - a) * (upper - b) / v).exp();
                if rng.random::<f64>() < p_up {
                    s.z = upper;
                    return Crossing::Upper;
                }
                if let Some(lo) = lower {
                    let p_lo = (-2.0 * (a - lo) * (b - lo) / v).exp();
                    if rng.random::<f64>() < p_lo {
                        s.z = lo;
                        return Crossing::Lower;
                    }
                }
            }
            s.z = b;
        } else if !jump_due {
            return Crossing::Inside;
        }
        if jump_due {
            *events += 1;
            let e: f64 = Exp1.sample(rng);
            if s.next_pos <= s.next_neg {
                s.z += e / self.pos_jump_rate;
                s.next_pos = Self::clock(self.pos_rate, s.t, rng);
            } else {
                s.z -= e / self.neg_jump_rate;
                s.next_neg = Self::clock(self.neg_rate, s.t, rng);
            }
            if s.z >= upper {
                return Crossing::Upper;
            }
            if let Some(lo) = lower {
                if s.z <= lo {
                    return Crossing::Lower;
                }
            }
        }
        Crossing::Inside
    }
}

/// First passage of a Lévy path from 0 over `x` within real time `budget`.
pub fn simulate_levy_passage<R: Rng + ?Sized>(
    model: &LevyModel,
    x: f64,
    budget: f64,
    tilt: &Tilt,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PassageOutcome> {
    if !(budget > 0.0) {
        return Ok(PassageOutcome::miss(budget.max(0.0), 0.0, tilt));
    }
    let engine = LevyEngine::new(model, cfg);
    let mut s = engine.start(0.0, 0.0, rng);
    let mut events = 0u64;
    while s.t < budget {
        if engine.step(&mut s, budget, x, None, &mut events, rng) == Crossing::Upper {
            return Ok(PassageOutcome::hit(s.t, s.z, x, tilt));
        }
        if events > cfg.max_events {
            return Err(Error::EventCapExceeded {
                cap: cfg.max_events,
            });
        }
    }
    Ok(PassageOutcome::miss(budget, s.z, tilt))
}

/// Exit of a Lévy path from `(0, x)` started at `y0`.
pub fn simulate_levy_exit<R: Rng + ?Sized>(
    model: &LevyModel,
    y0: f64,
    x: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<ExitOutcome> {
    check_start(y0, x)?;
    let engine = LevyEngine::new(model, cfg);
    let mut s = engine.start(y0, 0.0, rng);
    let mut events = 0u64;
    loop {
        match engine.step(&mut s, f64::INFINITY, x, Some(0.0), &mut events, rng) {
            Crossing::Upper => {
                return Ok(ExitOutcome {
                    side: ExitSide::Upper,
                    time: s.t,
                    terminal_position: s.z,
                })
            }
            Crossing::Lower => {
                return Ok(ExitOutcome {
                    side: ExitSide::Lower,
                    time: s.t,
                    terminal_position: s.z,
                })
            }
            Crossing::Inside => {}
        }
        if events > cfg.max_events {
            return Err(Error::BudgetCapExceeded {
                cap: cfg.max_events,
            });
        }
    }
}

/// Exit from `(0, x)` for either model family.
pub fn simulate_exit<R: Rng + ?Sized>(
    model: &Model,
    y0: f64,
    x: f64,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<ExitOutcome> {
    match model {
        Model::Walk(law) => simulate_walk_exit(law, y0, x, cfg.max_events, rng),
        Model::Levy(m) => simulate_levy_exit(m, y0, x, cfg, rng),
    }
}

/// First passage for either family; walk budgets are floored to whole steps.
pub fn simulate_passage<R: Rng + ?Sized>(
    model: &Model,
    x: f64,
    budget: f64,
    tilt: &Tilt,
    cfg: &SimConfig,
    rng: &mut R,
) -> Result<PassageOutcome> {
    match model {
        Model::Walk(law) => Ok(simulate_walk_passage(
            law,
            x,
            budget.max(0.0).floor() as u64,
            tilt,
            rng,
        )),
        Model::Levy(m) => simulate_levy_passage(m, x, budget, tilt, cfg, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::CumulantProfile;

    #[test]
    fn walk_single_step() {
        let law = IncrementLaw::two_point(0.45).unwrap();
        let n = 20_000;
        let hits = (0..n)
            .filter(|&i| simulate_walk_passage(&law, 1.0, 1, &Tilt::NONE, &mut stream(1, 2, i)).hit)
            .count();
        let f = hits as f64 / n as f64;
        let sd = (0.45 * 0.55 / n as f64).sqrt();
        assert!((f - 0.45).abs() < 4.0 * sd);
    }

    #[test]
    fn zero_budget_is_a_miss() {
        let law = IncrementLaw::two_point(0.45).unwrap();
        let o = simulate_walk_passage(&law, 3.0, 0, &Tilt::NONE, &mut stream(1, 1, 1));
        assert!(!o.hit);
        assert_eq!(o.time, 0.0);
        let m = LevyModel::exponential_jump_example();
        let o = simulate_levy_passage(&m, 3.0, 0.0, &Tilt::NONE, &SimConfig::default(), &mut stream(1, 1, 1))
            .unwrap();
        assert!(!o.hit);
        assert_eq!(o.time, 0.0);
    }

    #[test]
    fn lattice_weight_is_deterministic() {
        let law = IncrementLaw::two_point(0.45).unwrap();
        let prof = CumulantProfile::new(law).unwrap();
        let tilt = Tilt::at(&law, prof.lambda_star()).unwrap();
        let tilted = law.tilt(prof.lambda_star()).unwrap();
        let x = 12.0;
        for i in 0..200 {
            let o = simulate_walk_passage(&tilted, x, 10_000, &tilt, &mut stream(3, 3, i));
            if o.hit {
                assert_eq!(o.overshoot, 0.0);
                let w = passage_weight(&o, &tilt);
                assert!((w - (-prof.lambda_star() * x).exp()).abs() < 1e-12 * w);
            }
        }
    }

    #[test]
    fn brownian_weight_is_deterministic() {
        let m = LevyModel::brownian(0.2, 1.0).unwrap();
        let prof = CumulantProfile::new(m).unwrap();
        assert!((prof.lambda_star() - 0.4).abs() < 1e-12);
        let tilt = Tilt::at(&m, 0.4).unwrap();
        let tilted = m.tilt(0.4).unwrap();
        let cfg = SimConfig::default();
        let o = simulate_levy_passage(&tilted, 10.0, 1e4, &tilt, &cfg, &mut stream(0, 0, 0)).unwrap();
        assert!(o.hit);
        assert_eq!(o.overshoot, 0.0);
        assert!((passage_weight(&o, &tilt) - (-4.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn same_stream_same_path() {
        let m = LevyModel::exponential_jump_example().tilt(2.0).unwrap();
        let cfg = SimConfig::default();
        let a = simulate_levy_passage(&m, 10.0, 50.0, &Tilt::NONE, &cfg, &mut stream(9, 9, 4)).unwrap();
        let b = simulate_levy_passage(&m, 10.0, 50.0, &Tilt::NONE, &cfg, &mut stream(9, 9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn event_cap() {
        let m = LevyModel::brownian(0.2, 1.0).unwrap();
        let cfg = SimConfig {
            max_events: 10,
            ..SimConfig::default()
        };
        let e = simulate_levy_passage(&m, 50.0, 1e3, &Tilt::NONE, &cfg, &mut stream(0, 0, 0)).unwrap_err();
        assert!(matches!(e, Error::EventCapExceeded { cap: 10 }));
        let e = simulate_levy_exit(&m, 25.0, 50.0, &cfg, &mut stream(0, 0, 0)).unwrap_err();
        assert!(matches!(e, Error::BudgetCapExceeded { cap: 10 }));
    }

    #[test]
    fn exit_sides_are_consistent() {
        let m = LevyModel::exponential_jump_example();
        let cfg = SimConfig::default();
        for i in 0..300 {
            let o = simulate_levy_exit(&m, 1.0, 3.0, &cfg, &mut stream(5, 5, i)).unwrap();
            match o.side {
                ExitSide::Upper => assert!(o.terminal_position >= 3.0),
                ExitSide::Lower => assert!(o.terminal_position <= 0.0),
            }
            assert!(o.time > 0.0);
        }
        assert!(simulate_levy_exit(&m, 0.0, 3.0, &cfg, &mut stream(5, 5, 0)).is_err());
    }
}
