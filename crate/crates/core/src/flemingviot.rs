//! Fleming-Viot particle systems.
//!
//! `N` particles evolve independently; a particle that is absorbed jumps to
//! the current position of a uniformly chosen survivor. All particles move
//! on a shared clock: one step for finite chains, one sync interval of
//! length `dt` for Lévy paths on `(0, x)`. Absorptions within the same step
//! are processed in ascending particle index and each copies a particle that
//! was not absorbed in that step. A copied Lévy particle gets fresh jump
//! clocks.

use rand::Rng;

use crate::cumulant::LevyModel;
use crate::error::{invalid, Error, Result};
use crate::oracle;
use crate::paths::{Crossing, LevyEngine, LevyState, SimConfig};
use crate::restart::RestartMeasure;
use crate::rng::{experiment_id, stream, sub_experiment};
use crate::stats::total_variation;
use crate::table::ResultTable;

/// Common interface of the two particle systems.
pub trait FvSystem {
    fn particle_count(&self) -> usize;
    /// Elapsed time (steps for chains).
    fn time(&self) -> f64;
    /// Absorptions (copy jumps) so far.
    fn absorptions(&self) -> u64;
    /// Advance by one shared step; returns the number of absorptions.
    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize>;

    /// Advance until at least `duration` more time has elapsed.
    fn advance<R: Rng + ?Sized>(&mut self, duration: f64, rng: &mut R) -> Result<()> {
        if !(duration > 0.0) {
            return Err(invalid("duration", format!("{duration} must be > 0")));
        }
        let end = self.time() + duration;
        while self.time() < end - 1e-9 {
            self.step(rng)?;
        }
        Ok(())
    }

    /// Run until the elapsed time is `factor` times the mean single-particle
    /// absorption time, estimated on the fly as `N·t / absorptions`.
    fn burn_in<R: Rng + ?Sized>(&mut self, factor: f64, max_time: f64, rng: &mut R) -> Result<()> {
        let start = self.time();
        loop {
            self.step(rng)?;
            let elapsed = self.time() - start;
            if elapsed >= max_time {
                return Ok(());
            }
            let a = self.absorptions();
            if a > 0 {
                let mean_life = self.particle_count() as f64 * self.time() / a as f64;
                if elapsed >= factor * mean_life {
                    return Ok(());
                }
            }
        }
    }
}

/// Burn-in multiple of the mean absorption time.
pub const BURN_IN_FACTOR: f64 = 10.0;

/// Choose, for every absorbed index in ascending order, a uniformly drawn
/// index among those not absorbed.
fn pick_donors<R: Rng + ?Sized>(absorbed: &[bool], rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let survivors: Vec<usize> = (0..absorbed.len()).filter(|&i| !absorbed[i]).collect();
    if survivors.is_empty() {
        return Err(Error::Extinction(absorbed.len()));
    }
    Ok((0..absorbed.len())
        .filter(|&i| absorbed[i])
        .map(|i| (i, survivors[rng.random_range(0..survivors.len())]))
        .collect())
}

/// Fleming-Viot system for a finite killed chain. Row `i` of the kernel
/// gives the transition probabilities to interior states; the missing mass
/// is the absorption probability.
#[derive(Debug, Clone)]
pub struct ChainFv {
    kernel: Vec<Vec<f64>>,
    states: Vec<usize>,
    steps: u64,
    absorptions: u64,
    /// Absorptions in each step, for survival-curve estimators.
    pub absorption_log: Vec<u32>,
    record_log: bool,
}

impl ChainFv {
    pub fn new(kernel: Vec<Vec<f64>>, initial: Vec<usize>) -> Result<Self> {
        let n = kernel.len();
        if n == 0 || kernel.iter().any(|r| r.len() != n) {
            return Err(invalid("kernel", "must be a non-empty square matrix"));
        }
        if initial.len() < 2 {
            return Err(invalid("particles", "need at least 2 particles"));
        }
        if initial.iter().any(|&s| s >= n) {
            return Err(invalid("initial", "state index out of range"));
        }
        Ok(Self {
            kernel,
            states: initial,
            steps: 0,
            absorptions: 0,
            absorption_log: Vec::new(),
            record_log: false,
        })
    }

    /// Keep a per-step absorption count in `absorption_log`.
    pub fn record_absorptions(mut self) -> Self {
        self.record_log = true;
        self
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn state_count(&self) -> usize {
        self.kernel.len()
    }

    /// Fraction of particles in each state.
    pub fn occupation(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.kernel.len()];
        for &s in &self.states {
            out[s] += 1.0;
        }
        let n = self.states.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    /// The particle positions as a restart measure on `(0, upper)`, with
    /// state `i` placed at `offset + i`.
    pub fn empirical_measure(&self, offset: f64, upper: f64) -> Result<RestartMeasure> {
        RestartMeasure::empirical(self.states.iter().map(|&s| offset + s as f64).collect(), upper)
    }
}

impl FvSystem for ChainFv {
    fn particle_count(&self) -> usize {
        self.states.len()
    }

    fn time(&self) -> f64 {
        self.steps as f64
    }

    fn absorptions(&self) -> u64 {
        self.absorptions
    }

    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let mut absorbed = vec![false; self.states.len()];
        let mut any = 0;
        for (i, s) in self.states.iter_mut().enumerate() {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut next = None;
            for (j, &p) in self.kernel[*s].iter().enumerate() {
                acc += p;
                if u < acc {
                    next = Some(j);
                    break;
                }
            }
            match next {
                Some(j) => *s = j,
                None => {
                    absorbed[i] = true;
                    any += 1;
                }
            }
        }
        self.steps += 1;
        if any > 0 {
            for (i, donor) in pick_donors(&absorbed, rng)? {
                self.states[i] = self.states[donor];
            }
            self.absorptions += any as u64;
        }
        if self.record_log {
            self.absorption_log.push(any as u32);
        }
        Ok(any)
    }
}

/// Fleming-Viot system for a Lévy process killed outside `(0, x)`.
#[derive(Debug, Clone)]
pub struct LevyFv {
    engine: LevyEngine,
    upper: f64,
    particles: Vec<LevyState>,
    clock: f64,
    sync: f64,
    absorptions: u64,
    max_events: u64,
    pub events: u64,
}

impl LevyFv {
    pub fn new<R: Rng + ?Sized>(
        model: &LevyModel,
        upper: f64,
        initial: &[f64],
        cfg: &SimConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if initial.len() < 2 {
            return Err(invalid("particles", "need at least 2 particles"));
        }
        if initial.iter().any(|&y| !(y > 0.0 && y < upper)) {
            return Err(invalid("initial", format!("positions must lie in (0, {upper})")));
        }
        let engine = LevyEngine::new(model, cfg);
        let particles = initial.iter().map(|&y| engine.start(y, 0.0, rng)).collect();
        Ok(Self {
            engine,
            upper,
            particles,
            clock: 0.0,
            sync: cfg.dt,
            absorptions: 0,
            // the cap applies per particle
            max_events: cfg.max_events.saturating_mul(initial.len() as u64),
            events: 0,
        })
    }

    pub fn positions(&self) -> Vec<f64> {
        self.particles.iter().map(|p| p.z).collect()
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Current particle positions as an empirical restart measure.
    pub fn empirical_measure(&self) -> Result<RestartMeasure> {
        RestartMeasure::empirical(self.positions(), self.upper)
    }

    /// Fraction of particles in each of `bins` equal bins of `(0, x)`.
    pub fn histogram(&self, bins: usize) -> Vec<f64> {
        histogram(&self.positions(), self.upper, bins)
    }
}

impl FvSystem for LevyFv {
    fn particle_count(&self) -> usize {
        self.particles.len()
    }

    fn time(&self) -> f64 {
        self.clock
    }

    fn absorptions(&self) -> u64 {
        self.absorptions
    }

    fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        let target = self.clock + self.sync;
        let mut absorbed = vec![false; self.particles.len()];
        let mut any = 0;
        for (i, p) in self.particles.iter_mut().enumerate() {
            while p.t < target {
                let c = self
                    .engine
                    .step(p, target, self.upper, Some(0.0), &mut self.events, rng);
                if c != Crossing::Inside {
                    absorbed[i] = true;
                    any += 1;
                    break;
                }
            }
        }
        if self.events > self.max_events {
            return Err(Error::EventCapExceeded {
                cap: self.max_events,
            });
        }
        self.clock = target;
        if any > 0 {
            for (i, donor) in pick_donors(&absorbed, rng)? {
                let z = self.particles[donor].z;
                self.particles[i] = self.engine.start(z, target, rng);
            }
            self.absorptions += any as u64;
        }
        for p in &mut self.particles {
            p.t = target;
        }
        Ok(any)
    }
}

pub fn histogram(values: &[f64], upper: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &v in values {
        let b = ((v / upper) * bins as f64).floor() as isize;
        h[b.clamp(0, bins as isize - 1) as usize] += 1.0;
    }
    let n = values.len() as f64;
    h.iter_mut().for_each(|v| *v /= n);
    h
}

/// Bin probabilities of a restart measure with a closed-form CDF.
pub fn bin_probabilities(measure: &RestartMeasure, bins: usize) -> Vec<f64> {
    let x = measure.upper();
    (0..bins)
        .map(|i| {
            let lo = x * i as f64 / bins as f64;
            let hi = x * (i + 1) as f64 / bins as f64;
            measure.cdf(hi) - measure.cdf(lo)
        })
        .collect()
}

/// What a convergence curve is measured on.
#[derive(Debug, Clone)]
pub enum FvTarget {
    /// Killed finite chain; compared with its principal eigenvector.
    Chain { kernel: Vec<Vec<f64>> },
    /// Brownian motion `-μt + B(t)` on `(0, x)`; compared with the closed
    /// form density on `bins` equal bins.
    Brownian { mu: f64, x: f64, bins: usize },
}

/// Run one system past burn-in and return the TV distance of its empirical
/// measure to the exact quasi-stationary law.
pub fn fv_tv_distance(
    target: &FvTarget,
    particles: usize,
    run_length: f64,
    cfg: &SimConfig,
    replication: u64,
) -> Result<f64> {
    let exp = sub_experiment(experiment_id("fv"), &[particles as u64]);
    let mut rng = stream(cfg.master_seed, exp, replication);
    match target {
        FvTarget::Chain { kernel } => {
            let exact = oracle::qsd_eigen(kernel)?;
            let n = kernel.len();
            let init = (0..particles).map(|i| i % n).collect();
            let mut fv = ChainFv::new(kernel.clone(), init)?;
            fv.burn_in(BURN_IN_FACTOR, run_length.max(1.0), &mut rng)?;
            Ok(total_variation(&fv.occupation(), &exact.nu))
        }
        FvTarget::Brownian { mu, x, bins } => {
            let model = LevyModel::brownian(*mu, 1.0)?;
            let init: Vec<f64> = (0..particles)
                .map(|i| x * (i as f64 + 0.5) / particles as f64)
                .collect();
            let mut fv = LevyFv::new(&model, *x, &init, cfg, &mut rng)?;
            fv.burn_in(BURN_IN_FACTOR, run_length.max(cfg.dt), &mut rng)?;
            let exact = bin_probabilities(&RestartMeasure::brownian_qsd(*mu, *x)?, *bins);
            Ok(total_variation(&fv.histogram(*bins), &exact))
        }
    }
}

/// TV distance to the exact QSD for each particle count, averaged over
/// `seeds` independent systems.
pub fn convergence_curve(
    target: &FvTarget,
    particle_grid: &[usize],
    run_length: f64,
    seeds: u64,
    cfg: &SimConfig,
) -> Result<ResultTable> {
    if particle_grid.is_empty() {
        return Err(invalid("particle_grid", "must not be empty"));
    }
    if particle_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(invalid("particle_grid", "must be strictly ascending"));
    }
    use rayon::prelude::*;
    let mut t = ResultTable::new("fv-converge", &["N", "meanTV", "minTV", "maxTV", "seeds"]);
    for &n in particle_grid {
        let tvs = (0..seeds)
            .into_par_iter()
            .map(|s| fv_tv_distance(target, n, run_length, cfg, s))
            .collect::<Result<Vec<_>>>()?;
        let mean = tvs.iter().sum::<f64>() / tvs.len() as f64;
        let min = tvs.iter().copied().fold(f64::INFINITY, f64::min);
        let max = tvs.iter().copied().fold(0.0, f64::max);
        t.push(vec![n.into(), mean.into(), min.into(), max.into(), seeds.into()]);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_particles_copy_the_survivor() {
        // state 0 is always absorbed, state 1 stays put
        let kernel = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let mut fv = ChainFv::new(kernel, vec![0, 1]).unwrap();
        let mut rng = stream(0, 0, 0);
        assert_eq!(fv.step(&mut rng).unwrap(), 1);
        assert_eq!(fv.states(), &[1, 1]);
        assert_eq!(fv.particle_count(), 2);
    }

    #[test]
    fn extinction_is_reported() {
        let kernel = vec![vec![0.0]];
        let mut fv = ChainFv::new(kernel, vec![0, 0, 0]).unwrap();
        assert!(matches!(fv.step(&mut stream(0, 0, 0)), Err(Error::Extinction(3))));
    }

    #[test]
    fn levy_particles_stay_inside() {
        let m = LevyModel::brownian(0.2, 1.0).unwrap();
        let mut rng = stream(1, 1, 1);
        let init: Vec<f64> = (1..50).map(|i| i as f64 * 0.2).collect();
        let mut fv = LevyFv::new(&m, 10.0, &init, &SimConfig::default(), &mut rng).unwrap();
        fv.advance(20.0, &mut rng).unwrap();
        assert_eq!(fv.particle_count(), 49);
        assert!(fv.positions().iter().all(|&y| y > 0.0 && y < 10.0));
        assert!(fv.absorptions() > 0);
    }

    #[test]
    fn identical_particles_give_point_mass() {
        let kernel = oracle::birth_death_kernel(4, 0.3, 0.5);
        let fv = ChainFv::new(kernel, vec![2; 10]).unwrap();
        let m = fv.empirical_measure(1.0, 5.0).unwrap();
        assert!((m.exp_moment(0.7) - (0.7f64 * 3.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn histogram_bins() {
        let h = histogram(&[0.5, 1.5, 9.99, 9.0], 10.0, 10);
        assert_eq!(h[0], 0.25);
        assert_eq!(h[9], 0.5);
    }
}
