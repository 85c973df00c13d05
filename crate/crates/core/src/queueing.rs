//! M/M/1 and M/M/1/K stationary estimation under event budgets.
//!
//! Only state-changing events are simulated: an arrival at full capacity is
//! blocked and never generated, so `eventsUsed` counts accepted arrivals
//! plus departures.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cumulant::{CumulantProfile, IncrementLaw};
use crate::error::{invalid, Error, Result};
use crate::flemingviot::{ChainFv, FvSystem};
use crate::rng::{experiment_id, stream, sub_experiment};
use crate::stats::{BinomialEstimate, KahanSum, MeanEstimate, Z95};
use crate::table::ResultTable;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueueConfig {
    pub arrival_rate: f64,
    pub service_rate: f64,
    /// Capacity `K`; states are `0..=K`.
    pub capacity: u32,
    /// Absorption threshold `J` of the Fleming-Viot and renewal estimators.
    pub absorb_threshold: u32,
    pub reward_b: f64,
    pub reward_base: f64,
    pub x_ref: i64,
    pub theta: f64,
}

impl QueueConfig {
    /// `K = 40`, `J = 12`, `λ = 0.7`, `μ = 1`.
    pub fn threshold_example() -> Self {
        Self {
            arrival_rate: 0.7,
            service_rate: 1.0,
            capacity: 40,
            absorb_threshold: 12,
            reward_b: 1.0,
            reward_base: 2.0,
            x_ref: 39,
            theta: 39.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.arrival_rate > 0.0 && self.service_rate > 0.0) {
            return Err(invalid("arrival_rate", "rates must be > 0"));
        }
        if self.rho() >= 1.0 {
            return Err(invalid("arrival_rate", format!("load {} must be < 1", self.rho())));
        }
        if self.capacity == 0 {
            return Err(invalid("capacity", "must be >= 1"));
        }
        if self.absorb_threshold >= self.capacity {
            return Err(invalid("absorb_threshold", "J must be < K"));
        }
        if !(self.reward_b > 0.0) {
            return Err(invalid("reward_b", "must be > 0"));
        }
        if !(self.reward_base > 1.0) {
            return Err(invalid("reward_base", "must be > 1"));
        }
        Ok(())
    }

    pub fn rho(&self) -> f64 {
        self.arrival_rate / self.service_rate
    }

    /// Blocking reward `B(1 + b^{x - x_ref})`.
    pub fn blocking_reward(&self, x: u32) -> f64 {
        self.reward_b * (1.0 + self.reward_base.powf(x as f64 - self.x_ref as f64))
    }

    /// The up-probability `λ/(λ+μ)` of the embedded jump chain away from
    /// the boundaries, as a `±1` walk.
    pub fn embedded_walk(&self) -> Result<IncrementLaw> {
        IncrementLaw::two_point(self.arrival_rate / (self.arrival_rate + self.service_rate))
    }

    fn up_rate(&self, n: u32) -> f64 {
        if n < self.capacity {
            self.arrival_rate
        } else {
            0.0
        }
    }

    fn down_rate(&self, n: u32) -> f64 {
        if n > 0 {
            self.service_rate
        } else {
            0.0
        }
    }
}

/// `π(k) = (1-ρ)ρ^k / (1-ρ^{K+1})`.
pub fn stationary_pi(cfg: &QueueConfig, k: u32) -> Result<f64> {
    cfg.validate()?;
    if k > cfg.capacity {
        return Err(invalid("k", format!("{k} exceeds capacity {}", cfg.capacity)));
    }
    let rho = cfg.rho();
    let norm = -(((cfg.capacity + 1) as f64) * rho.ln()).exp_m1();
    Ok((1.0 - rho) * rho.powi(k as i32) / norm)
}

/// Stopping rule for [`simulate_queue`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    /// Stop after this many events.
    Events(u64),
    /// Stop at this time.
    Time(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueueRun {
    /// Time spent in each state `0..=K`.
    pub occupation: Vec<f64>,
    pub total_time: f64,
    pub arrivals: u64,
    pub departures: u64,
    /// First time each state was entered (`None` if never).
    pub first_hit: Vec<Option<f64>>,
    pub final_state: u32,
}

impl QueueRun {
    pub fn events(&self) -> u64 {
        self.arrivals + self.departures
    }

    pub fn fraction(&self, k: u32) -> f64 {
        if self.total_time > 0.0 {
            self.occupation[k as usize] / self.total_time
        } else {
            0.0
        }
    }
}

/// Exact CTMC simulation from `start`.
pub fn simulate_queue<R: Rng + ?Sized>(
    cfg: &QueueConfig,
    start: u32,
    horizon: Horizon,
    rng: &mut R,
) -> QueueRun {
    let states = cfg.capacity as usize + 1;
    let mut occ = vec![KahanSum::new(); states];
    let mut first_hit = vec![None; states];
    let mut n = start.min(cfg.capacity);
    first_hit[n as usize] = Some(0.0);
    let mut t = 0.0;
    let (mut arrivals, mut departures) = (0u64, 0u64);
    loop {
        if let Horizon::Events(e) = horizon {
            if arrivals + departures >= e {
                break;
            }
        }
        let up = cfg.up_rate(n);
        let total = up + cfg.down_rate(n);
        let e: f64 = Exp1.sample(rng);
        let hold = e / total;
        if let Horizon::Time(limit) = horizon {
            if t + hold >= limit {
                occ[n as usize].add(limit - t);
                t = limit;
                break;
            }
        }
        occ[n as usize].add(hold);
        t += hold;
        if rng.random::<f64>() * total < up {
            n += 1;
            arrivals += 1;
        } else {
            n -= 1;
            departures += 1;
        }
        first_hit[n as usize].get_or_insert(t);
    }
    QueueRun {
        occupation: occ.iter().map(KahanSum::total).collect(),
        total_time: t,
        arrivals,
        departures,
        first_hit,
        final_state: n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Method {
    Exact,
    NaiveMc,
    Renewal,
    Fv,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::NaiveMc => "naiveMC",
            Method::Renewal => "renewal",
            Method::Fv => "fv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub k: u32,
    pub method: Method,
    pub estimate: f64,
    pub ci: f64,
    pub events_used: u64,
    pub seeds: u64,
}

pub fn report_table(reports: &[EstimatorReport]) -> ResultTable {
    let mut t = ResultTable::new("queue", &["method", "k", "estimate", "ci", "eventsUsed", "seeds"]);
    for r in reports {
        t.push(vec![
            r.method.name().into(),
            (r.k as u64).into(),
            r.estimate.into(),
            r.ci.into(),
            r.events_used.into(),
            r.seeds.into(),
        ]);
    }
    t
}

const NAIVE: u64 = experiment_id("queue/naive");
const RENEWAL: u64 = experiment_id("queue/renewal");
const FV: u64 = experiment_id("queue/fv");
const LINK: u64 = experiment_id("queue/variance-link");

/// Time-average occupation of `k` over `reps` independent runs from state 0,
/// each stopped after `events` events.
pub fn naive_pi_hat(
    cfg: &QueueConfig,
    k: u32,
    events: u64,
    reps: u64,
    master_seed: u64,
) -> Result<EstimatorReport> {
    cfg.validate()?;
    if events == 0 || reps == 0 {
        return Err(invalid("events", "budget and reps must be >= 1"));
    }
    if k > cfg.capacity {
        return Err(invalid("k", "exceeds capacity"));
    }
    let runs: Vec<QueueRun> = (0..reps)
        .into_par_iter()
        .map(|i| simulate_queue(cfg, 0, Horizon::Events(events), &mut stream(master_seed, NAIVE, i)))
        .collect();
    let fr: Vec<f64> = runs.iter().map(|r| r.fraction(k)).collect();
    let m = MeanEstimate::from_samples(&fr);
    Ok(EstimatorReport {
        k,
        method: Method::NaiveMc,
        estimate: m.mean,
        ci: if reps > 1 { m.ci_half_width() } else { f64::NAN },
        events_used: runs.iter().map(QueueRun::events).sum(),
        seeds: reps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceLink {
    pub k: u32,
    pub budget: f64,
    pub c: f64,
    pub mean_pi_hat: f64,
    pub var_pi_hat: f64,
    pub var_xi: f64,
    /// Estimate of `P_0(τ(k) ≤ B(k))`.
    pub p_hit: f64,
    /// `|Var π̂ - Var ξ| / P`.
    pub ratio: f64,
    /// `2(1 + c)·max(c, 1 - c)`, valid because `0 ≤ π̂ ≤ 1` and `π̂ = ξ = 0`
    /// off the hitting event.
    pub bound_constant: f64,
}

/// Variance of the time-average estimator against the surrogate
/// `ξ = c·1(τ(k) < B)` from `reps` runs of length `budget` (time units).
pub fn variance_link_check(
    cfg: &QueueConfig,
    k: u32,
    budget: f64,
    c: f64,
    reps: u64,
    master_seed: u64,
) -> Result<VarianceLink> {
    cfg.validate()?;
    if !(c >= 0.0) {
        return Err(invalid("c", "must be >= 0"));
    }
    if reps < 2 {
        return Err(invalid("reps", "need at least 2 runs for a variance"));
    }
    let exp = sub_experiment(LINK, &[k as u64, budget.to_bits()]);
    let runs: Vec<(f64, bool)> = (0..reps)
        .into_par_iter()
        .map(|i| {
            let r = simulate_queue(cfg, 0, Horizon::Time(budget), &mut stream(master_seed, exp, i));
            (r.fraction(k), r.first_hit[k as usize].is_some())
        })
        .collect();
    let hits = runs.iter().filter(|r| r.1).count() as u64;
    if hits == 0 {
        return Err(Error::InsufficientSignal(format!(
            "state {k} was never reached within {budget} in {reps} runs"
        )));
    }
    let pi: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let xi: Vec<f64> = runs.iter().map(|r| if r.1 { c } else { 0.0 }).collect();
    let pi_est = MeanEstimate::from_samples(&pi);
    let var_pi_hat = pi_est.variance();
    let var_xi = MeanEstimate::from_samples(&xi).variance();
    let p_hit = BinomialEstimate::new(hits, reps).p();
    Ok(VarianceLink {
        k,
        budget,
        c,
        mean_pi_hat: pi_est.mean,
        var_pi_hat,
        var_xi,
        p_hit,
        ratio: (var_pi_hat - var_xi).abs() / p_hit,
        bound_constant: 2.0 * (1.0 + c) * c.max(1.0 - c),
    })
}

/// Parameters of the renewal estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenewalPlan {
    /// Total event budget.
    pub events: u64,
    /// Share of the budget spent on full return cycles to `J`.
    pub return_share: f64,
    /// Independent replicas running excursions above `J - 1`.
    pub n_parallel: u64,
}

/// Typical event count of a round trip `J → k → J - 1` for the embedded
/// walk: `2(k - J)/ψ'(λ*)`.
pub fn round_trip_events(cfg: &QueueConfig, k: u32) -> Result<f64> {
    let prof = CumulantProfile::new(cfg.embedded_walk()?)?;
    Ok(2.0 * (k - cfg.absorb_threshold) as f64 / prof.psi_prime_star())
}

/// Replica count for a budget: `N*` of the embedded walk for the budget
/// slope `C = events/(k - J)`, capped so that every replica can hold ten
/// typical round trips (excursions cut by the replica horizon are lost).
pub fn plan_replicas(cfg: &QueueConfig, k: u32, events: u64, return_share: f64) -> Result<RenewalPlan> {
    cfg.validate()?;
    if !(k > cfg.absorb_threshold && k <= cfg.capacity) {
        return Err(invalid("k", "need J < k <= K"));
    }
    let prof = CumulantProfile::new(cfg.embedded_walk()?)?;
    let slope = events as f64 / (k - cfg.absorb_threshold) as f64;
    let n_star = prof.optimal_particles(slope)?;
    let excursion_budget = events as f64 * (1.0 - return_share);
    let cap = (excursion_budget / (10.0 * round_trip_events(cfg, k)?)).floor().max(1.0) as u64;
    Ok(RenewalPlan {
        events,
        return_share,
        n_parallel: n_star.min(cap),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct ExcursionStats {
    excursions: u64,
    time_at_k: f64,
    time_sq: f64,
    hits: u64,
    events: u64,
}

/// Run excursions from `J` until `J - 1`, restarting at `J`, for `budget`
/// events. Only completed excursions are counted.
fn excursion_replica<R: Rng + ?Sized>(cfg: &QueueConfig, k: u32, budget: u64, rng: &mut R) -> ExcursionStats {
    let j = cfg.absorb_threshold;
    let mut s = ExcursionStats::default();
    let mut used = 0u64;
    'outer: loop {
        let mut n = j;
        let mut at_k = 0.0;
        let mut hit = false;
        let mut ev = 0u64;
        loop {
            if used + ev >= budget {
                break 'outer;
            }
            let up = cfg.up_rate(n);
            let total = up + cfg.down_rate(n);
            let e: f64 = Exp1.sample(rng);
            if n == k {
                at_k += e / total;
            }
            ev += 1;
            if rng.random::<f64>() * total < up {
                n += 1;
                hit |= n == k;
            } else {
                n -= 1;
                if n < j {
                    break;
                }
            }
        }
        used += ev;
        s.excursions += 1;
        s.time_at_k += at_k;
        s.time_sq += at_k * at_k;
        s.hits += hit as u64;
    }
    s.events = used;
    s
}

/// Mean length of full cycles `J → J - 1 → J`, from one run of `budget`
/// events started at `J`. Returns (mean, std error, events, cycles).
fn return_cycles<R: Rng + ?Sized>(cfg: &QueueConfig, budget: u64, rng: &mut R) -> (f64, f64, u64, u64) {
    let j = cfg.absorb_threshold;
    let mut lengths = Vec::new();
    let mut n = j;
    let mut t = 0.0;
    let mut start = 0.0;
    let mut below = false;
    let mut ev = 0u64;
    let mut counted = 0u64;
    while ev < budget {
        let up = cfg.up_rate(n);
        let total = up + cfg.down_rate(n);
        let e: f64 = Exp1.sample(rng);
        t += e / total;
        ev += 1;
        if rng.random::<f64>() * total < up {
            n += 1;
        } else {
            n -= 1;
        }
        if n < j {
            below = true;
        } else if below && n == j {
            lengths.push(t - start);
            start = t;
            below = false;
            counted = ev;
        }
    }
    let m = MeanEstimate::from_samples(&lengths);
    (m.mean, m.std_err, counted, lengths.len() as u64)
}

/// Mean return time to `J` (full cycles `J → J - 1 → J`) from one run of
/// `events` events.
pub fn mean_return_time(cfg: &QueueConfig, events: u64, master_seed: u64) -> Result<MeanEstimate> {
    cfg.validate()?;
    if cfg.absorb_threshold == 0 {
        return Err(invalid("absorb_threshold", "J must be >= 1"));
    }
    let exp = sub_experiment(RENEWAL, &[events]);
    let (mean, std_err, _, cycles) = return_cycles(cfg, events, &mut stream(master_seed, exp, 0));
    if cycles < 2 {
        return Err(Error::InsufficientSignal("fewer than two return cycles".into()));
    }
    Ok(MeanEstimate {
        mean,
        std_err,
        count: cycles as usize,
    })
}

/// Renewal estimate of `π(k)` for `J < k ≤ K`:
///
/// `π(k) = E_J[time at k before J - 1] / E[return time to J]`.
///
/// A share of the budget estimates the mean return time from full cycles;
/// the rest is split over `n_parallel` replicas that run restarted
/// excursions from `J`.
pub fn renewal_estimator(
    cfg: &QueueConfig,
    k: u32,
    plan: &RenewalPlan,
    master_seed: u64,
) -> Result<EstimatorReport> {
    cfg.validate()?;
    let j = cfg.absorb_threshold;
    if !(j > 0 && k > j && k <= cfg.capacity) {
        return Err(invalid("k", "need 0 < J < k <= K"));
    }
    if !(plan.return_share > 0.0 && plan.return_share < 1.0) || plan.n_parallel == 0 {
        return Err(invalid("plan", "return share must lie in (0,1) and n_parallel >= 1"));
    }
    let exp = sub_experiment(RENEWAL, &[k as u64, plan.events, plan.n_parallel]);
    let return_budget = (plan.events as f64 * plan.return_share) as u64;
    let (mean_r, se_r, ev_r, cycles) = return_cycles(cfg, return_budget, &mut stream(master_seed, exp, 0));
    if cycles < 2 {
        return Err(Error::InsufficientSignal("fewer than two return cycles".into()));
    }
    let per = (plan.events - return_budget) / plan.n_parallel;
    let reps: Vec<ExcursionStats> = (0..plan.n_parallel)
        .into_par_iter()
        .map(|i| excursion_replica(cfg, k, per, &mut stream(master_seed, exp, i + 1)))
        .collect();
    let exc: u64 = reps.iter().map(|s| s.excursions).sum();
    let hits: u64 = reps.iter().map(|s| s.hits).sum();
    let events_used = ev_r + reps.iter().map(|s| s.events).sum::<u64>();
    if hits == 0 || exc == 0 {
        return Err(Error::InsufficientSignal(format!(
            "no excursion from {j} reached {k} ({exc} excursions)"
        )));
    }
    let sum: KahanSum = reps.iter().map(|s| s.time_at_k).collect();
    let sum_sq: KahanSum = reps.iter().map(|s| s.time_sq).collect();
    let n = exc as f64;
    let mean_a = sum.total() / n;
    let var_a = (sum_sq.total() / n - mean_a * mean_a).max(0.0) * n / (n - 1.0).max(1.0);
    let se_a = (var_a / n).sqrt();
    let est = mean_a / mean_r;
    let rel = ((se_a / mean_a).powi(2) + (se_r / mean_r).powi(2)).sqrt();
    Ok(EstimatorReport {
        k,
        method: Method::Renewal,
        estimate: est,
        ci: Z95 * est * rel,
        events_used,
        seeds: 1,
    })
}

/// Fleming-Viot estimate of `π(k)`.
///
/// `N` particles run the uniformized chain on `{J..K}` killed below `J`,
/// all started at `J`. With `m_t` the empirical law and
/// `Ŝ(t) = Π_{s≤t}(1 - A_s/N)` the survival estimate (`A_s` absorptions in
/// step `s`), `E_J[time at k before J - 1] ≈ Σ_t m_t(k)Ŝ(t)/Λ`, which is
/// divided by the mean return time estimated from full cycles.
pub fn fv_estimator(
    cfg: &QueueConfig,
    k: u32,
    particles: usize,
    events: u64,
    return_share: f64,
    master_seed: u64,
) -> Result<EstimatorReport> {
    cfg.validate()?;
    let j = cfg.absorb_threshold;
    if !(j > 0 && k >= j && k <= cfg.capacity) {
        return Err(invalid("k", "need 0 < J <= k <= K"));
    }
    let exp = sub_experiment(FV, &[k as u64, particles as u64, events]);
    let return_budget = (events as f64 * return_share) as u64;
    let (mean_r, se_r, ev_r, cycles) = return_cycles(cfg, return_budget, &mut stream(master_seed, exp, 0));
    if cycles < 2 {
        return Err(Error::InsufficientSignal("fewer than two return cycles".into()));
    }
    let rate = cfg.arrival_rate + cfg.service_rate;
    let (up, down) = (cfg.arrival_rate / rate, cfg.service_rate / rate);
    let states = (cfg.capacity - j + 1) as usize;
    let kernel: Vec<Vec<f64>> = (0..states)
        .map(|i| {
            let mut row = vec![0.0; states];
            if i + 1 < states {
                row[i + 1] = up;
            } else {
                row[i] += up;
            }
            if i > 0 {
                row[i - 1] = down;
            }
            row
        })
        .collect();
    let mut fv = ChainFv::new(kernel, vec![0; particles])?;
    let mut rng = stream(master_seed, exp, 1);
    let target = (k - j) as usize;
    let mut survival = 1.0;
    let mut acc = KahanSum::new();
    acc.add(if target == 0 { 1.0 } else { 0.0 });
    let mut used = ev_r;
    let fv_budget = events - return_budget;
    let mut prev = fv.states().to_vec();
    while used < fv_budget + ev_r && survival > 1e-300 {
        let absorbed = fv.step(&mut rng)?;
        // uniformized self-loops at K are not real events
        used += fv
            .states()
            .iter()
            .zip(&prev)
            .filter(|(a, b)| a != b)
            .count() as u64
            + absorbed as u64;
        prev.copy_from_slice(fv.states());
        survival *= 1.0 - absorbed as f64 / particles as f64;
        acc.add(fv.occupation()[target] * survival);
    }
    let mean_a = acc.total() / rate;
    let est = mean_a / mean_r;
    Ok(EstimatorReport {
        k,
        method: Method::Fv,
        estimate: est,
        ci: Z95 * est * se_r / mean_r,
        events_used: used,
        seeds: 1,
    })
}

/// `p̂(K-1)·(Q(K-1, accept) - Q(K-1, block))`.
pub fn gradient_assembly(p_km1: f64, q_accept: f64, q_block: f64) -> Result<f64> {
    if !(p_km1 >= 0.0) {
        return Err(invalid("p_km1", "must be >= 0"));
    }
    Ok(p_km1 * (q_accept - q_block))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_values() {
        let cfg = QueueConfig::threshold_example();
        let p40 = stationary_pi(&cfg, 40).unwrap();
        assert!((p40 - 1.9100425795e-7).abs() < 1e-16);
        let p0 = stationary_pi(&cfg, 0).unwrap();
        assert!((p0 - 0.3 / (1.0 - 0.7f64.powi(41))).abs() < 1e-15);
        let total: f64 = (0..=40).map(|k| stationary_pi(&cfg, k).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(stationary_pi(&cfg, 41).is_err());
    }

    #[test]
    fn event_accounting() {
        let cfg = QueueConfig::threshold_example();
        let r = simulate_queue(&cfg, 0, Horizon::Events(1000), &mut stream(1, 1, 1));
        assert_eq!(r.events(), 1000);
        assert_eq!(r.arrivals - r.departures, r.final_state as u64);
        let tot: f64 = r.occupation.iter().sum();
        assert!((tot - r.total_time).abs() < 1e-9 * r.total_time);
    }

    #[test]
    fn short_horizon_stays_put() {
        let cfg = QueueConfig::threshold_example();
        let r = simulate_queue(&cfg, 3, Horizon::Time(1e-9), &mut stream(0, 0, 0));
        assert_eq!(r.events(), 0);
        assert_eq!(r.occupation[3], 1e-9);
    }

    #[test]
    fn gradient_cases() {
        assert_eq!(gradient_assembly(0.0, 3.0, 1.0).unwrap(), 0.0);
        assert_eq!(gradient_assembly(0.2, 1.5, 1.5).unwrap(), 0.0);
        let g = gradient_assembly(1.9e-7 / 0.7, 1.0, 0.0).unwrap();
        assert!((g - 2.714e-7).abs() < 1e-10);
    }

    #[test]
    fn replica_plan() {
        let cfg = QueueConfig::threshold_example();
        let plan = plan_replicas(&cfg, 40, 10_000_000, 0.1).unwrap();
        let prof = CumulantProfile::new(cfg.embedded_walk().unwrap()).unwrap();
        let n_star = prof.optimal_particles(1e7 / 28.0).unwrap();
        assert!(plan.n_parallel <= n_star);
        assert!(plan.n_parallel > 1000);
    }
}
