//! Independent particles sharing a time budget.
//!
//! `N` independent copies each receive `B(x)/N`; the quantity of interest
//! is the ratio `P(τ^{(N)}(x) ≤ B(x)/N) / P(τ(x) ≤ B(x))`, where
//! `τ^{(N)}` is the minimum of the `N` passage times. Both probabilities
//! are estimated by simulating under the `λ*`-tilted law and reweighting.

use rayon::prelude::*;

use crate::cumulant::{CumulantProfile, Model};
use crate::error::{invalid, Error, Result};
use crate::paths::{simulate_passage, PassageOutcome, SimConfig, Tilt};
use crate::rng::{experiment_id, stream, sub_experiment};
use crate::stats::{MeanEstimate, Z95};
use crate::table::ResultTable;

const EXPERIMENT: u64 = experiment_id("parallel");
const ROLE_NUMERATOR: u64 = 1;
const ROLE_DENOMINATOR: u64 = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelSpec {
    pub model: Model,
    /// `C` in `B(x) = Cx`.
    pub budget_slope: f64,
    pub barriers: Vec<f64>,
    pub particle_grid: Vec<u64>,
    pub reps: u64,
    pub tilt_at_lambda_star: bool,
    pub sim: SimConfig,
}

impl ParallelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.budget_slope > 0.0 && self.budget_slope.is_finite()) {
            return Err(invalid("budget_slope", format!("{} must be > 0", self.budget_slope)));
        }
        if self.barriers.is_empty() || self.barriers.iter().any(|&x| !(x > 0.0)) {
            return Err(invalid("barriers", "need at least one barrier, all > 0"));
        }
        if self.particle_grid.is_empty() || self.particle_grid.contains(&0) {
            return Err(invalid("particle_grid", "need at least one N, all >= 1"));
        }
        if self.reps == 0 {
            return Err(invalid("reps", "must be >= 1"));
        }
        self.sim.validate()
    }

    pub fn budget(&self, x: f64) -> f64 {
        self.budget_slope * x
    }

    /// Per-particle budget `B(x)/N`, floored to whole steps for walks.
    pub fn per_particle_budget(&self, x: f64, n: u64) -> f64 {
        let b = self.budget(x) / n as f64;
        if self.model.is_walk() {
            b.floor()
        } else {
            b
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatioCell {
    pub x: f64,
    pub n: u64,
    pub ratio: f64,
    /// 95% delta-method half-width.
    pub ci_half_width: f64,
    /// Estimate of `P(τ(x) ≤ B(x))`.
    pub p_single: f64,
    /// Estimate of `P(τ^{(N)}(x) ≤ B(x)/N)`.
    pub p_min: f64,
    /// Set when the cell could not be estimated meaningfully.
    pub flag: Option<String>,
}

/// `1 - (1 - p)^N`, accurate for tiny `p`.
pub fn min_passage_probability(p_single: f64, n: u64) -> f64 {
    if p_single <= 0.0 {
        return 0.0;
    }
    if p_single >= 1.0 {
        return 1.0;
    }
    -(n as f64 * (-p_single).ln_1p()).exp_m1()
}

/// Weighted passage samples from one pool of tilted trajectories.
#[derive(Debug, Clone)]
pub struct Pool {
    outcomes: Vec<PassageOutcome>,
    pub budget: f64,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Reweighted estimate of `P(τ(x) ≤ t)` for `t ≤ budget`.
    pub fn estimate(&self, t: f64) -> MeanEstimate {
        assert!(t <= self.budget, "pool was simulated only up to {}", self.budget);
        let values: Vec<f64> = self.outcomes.iter().map(|o| o.weighted_hit_by(t)).collect();
        MeanEstimate::from_samples(&values)
    }

    pub fn outcomes(&self) -> &[PassageOutcome] {
        &self.outcomes
    }
}

/// Simulate `reps` trajectories with the given budget in parallel.
pub fn simulate_pool(
    profile: &CumulantProfile,
    x: f64,
    budget: f64,
    reps: u64,
    tilted: bool,
    sim: &SimConfig,
    experiment: u64,
) -> Result<Pool> {
    let (model, tilt) = if tilted {
        (
            profile.tilted_at_star(),
            Tilt::at(profile.model(), profile.lambda_star())?,
        )
    } else {
        (*profile.model(), Tilt::NONE)
    };
    let outcomes = (0..reps)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(sim.master_seed, experiment, i);
            simulate_passage(&model, x, budget, &tilt, sim, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Pool { outcomes, budget })
}

fn pool_id(x: f64, role: u64, n: u64) -> u64 {
    sub_experiment(EXPERIMENT, &[x.to_bits(), role, n])
}

/// Combine independent numerator and denominator estimates.
pub fn assemble_ratio(x: f64, n: u64, per_particle: MeanEstimate, single: MeanEstimate) -> RatioCell {
    let p1 = single.mean;
    let pn = per_particle.mean;
    let g = min_passage_probability(pn, n);
    if n == 1 {
        return RatioCell {
            x,
            n,
            ratio: 1.0,
            ci_half_width: 0.0,
            p_single: p1,
            p_min: p1,
            flag: None,
        };
    }
    if p1 <= 0.0 {
        return RatioCell {
            x,
            n,
            ratio: 0.0,
            ci_half_width: 0.0,
            p_single: p1,
            p_min: g,
            flag: Some("no single-particle passage observed".into()),
        };
    }
    let dg = n as f64 * (1.0 - pn).max(0.0).powf(n as f64 - 1.0);
    let var_n = per_particle.std_err * per_particle.std_err;
    let var_1 = single.std_err * single.std_err;
    let var = dg * dg * var_n / (p1 * p1) + g * g * var_1 / (p1 * p1 * p1 * p1);
    RatioCell {
        x,
        n,
        ratio: g / p1,
        ci_half_width: Z95 * var.sqrt(),
        p_single: p1,
        p_min: g,
        flag: None,
    }
}

fn degenerate_cell(x: f64, n: u64, p_single: f64, budget: f64) -> RatioCell {
    RatioCell {
        x,
        n,
        ratio: 0.0,
        ci_half_width: 0.0,
        p_single,
        p_min: 0.0,
        flag: Some(Error::DegenerateBudget { budget }.to_string()),
    }
}

/// One cell with its own numerator pool (budget `B/N`) and denominator
/// pool (budget `B`).
pub fn estimate_ratio(spec: &ParallelSpec, x: f64, n: u64) -> Result<RatioCell> {
    spec.validate()?;
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let profile = CumulantProfile::new(spec.model)?;
    let budget = spec.budget(x);
    let den = simulate_pool(
        &profile,
        x,
        budget,
        spec.reps,
        spec.tilt_at_lambda_star,
        &spec.sim,
        pool_id(x, ROLE_DENOMINATOR, 0),
    )?;
    let single = den.estimate(budget);
    let share = spec.per_particle_budget(x, n);
    if spec.model.is_walk() && share < 1.0 {
        return Err(Error::DegenerateBudget {
            budget: budget / n as f64,
        });
    }
    if n == 1 {
        return Ok(assemble_ratio(x, 1, single, single));
    }
    let num = simulate_pool(
        &profile,
        x,
        share,
        spec.reps,
        spec.tilt_at_lambda_star,
        &spec.sim,
        pool_id(x, ROLE_NUMERATOR, n),
    )?;
    Ok(assemble_ratio(x, n, num.estimate(share), single))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseTransition {
    pub cells: Vec<RatioCell>,
    /// `ψ'(λ*)·C`.
    pub threshold_n: f64,
    pub n_star: u64,
}

impl PhaseTransition {
    pub fn cell(&self, x: f64, n: u64) -> Option<&RatioCell> {
        self.cells.iter().find(|c| c.x == x && c.n == n)
    }

    pub fn to_table(&self) -> ResultTable {
        let mut t = ResultTable::new(
            "parallel-sweep",
            &["x", "N", "ratio", "ci", "pSingle", "pMin", "thresholdN", "nStar"],
        );
        for c in &self.cells {
            t.push(vec![
                c.x.into(),
                c.n.into(),
                c.ratio.into(),
                c.ci_half_width.into(),
                c.p_single.into(),
                c.p_min.into(),
                self.threshold_n.into(),
                self.n_star.into(),
            ]);
        }
        let flagged: Vec<String> = self
            .cells
            .iter()
            .filter_map(|c| c.flag.as_ref().map(|f| format!("x={} N={}: {f}", c.x, c.n)))
            .collect();
        if !flagged.is_empty() {
            t.note("flagged", flagged.join("; "));
        }
        t
    }
}

/// Every `(x, N)` cell of the spec.
///
/// For each barrier one numerator pool is simulated with the full budget
/// `B(x)` and every `N` reads it at its own share `B(x)/N`; the
/// denominator pool is independent. Cells that cannot be estimated are
/// flagged rather than aborting the sweep.
pub fn sweep_phase_transition(spec: &ParallelSpec) -> Result<PhaseTransition> {
    spec.validate()?;
    let profile = CumulantProfile::new(spec.model)?;
    let mut cells = Vec::new();
    for &x in &spec.barriers {
        let budget = spec.budget(x);
        let pools = simulate_pool(
            &profile,
            x,
            budget,
            spec.reps,
            spec.tilt_at_lambda_star,
            &spec.sim,
            pool_id(x, ROLE_DENOMINATOR, 0),
        )
        .and_then(|den| {
            simulate_pool(
                &profile,
                x,
                budget,
                spec.reps,
                spec.tilt_at_lambda_star,
                &spec.sim,
                pool_id(x, ROLE_NUMERATOR, 0),
            )
            .map(|num| (num, den))
        });
        let (num, den) = match pools {
            Ok(p) => p,
            Err(e) => {
                for &n in &spec.particle_grid {
                    let mut c = degenerate_cell(x, n, f64::NAN, budget);
                    c.flag = Some(e.to_string());
                    cells.push(c);
                }
                continue;
            }
        };
        let single = den.estimate(budget);
        for &n in &spec.particle_grid {
            let share = spec.per_particle_budget(x, n);
            if spec.model.is_walk() && share < 1.0 {
                cells.push(degenerate_cell(x, n, single.mean, budget / n as f64));
                continue;
            }
            cells.push(assemble_ratio(x, n, num.estimate(share), single));
        }
    }
    Ok(PhaseTransition {
        cells,
        threshold_n: profile.threshold_particles(spec.budget_slope),
        n_star: profile.optimal_particles(spec.budget_slope)?,
    })
}
