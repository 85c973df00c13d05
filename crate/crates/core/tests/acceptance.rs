//! Acceptance suite. Each criterion prints one PASS/FAIL line; the binary
//! exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use rare_reach::flemingviot::{fv_tv_distance, FvTarget};
use rare_reach::oracle::{birth_death_kernel, exact_walk_passage, quadrature};
use rare_reach::parallel::{simulate_pool, sweep_phase_transition, ParallelSpec};
use rare_reach::paths::SimConfig;
use rare_reach::queueing::{self, QueueConfig};
use rare_reach::restart::{
    brownian_qsd_beta, estimate_q, simulate_cycles, simulate_runs, standard_brownian, RestartMeasure,
};
use rare_reach::rng::experiment_id;
use rare_reach::stats::{ks_exponential, linear_fit, BinomialEstimate};
use rare_reach::{CumulantProfile, IncrementLaw, LevyModel, Model};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn ac1() -> Outcome {
    let prof = CumulantProfile::new(LevyModel::exponential_jump_example()).unwrap();
    let root = prof.lambda_star();
    let slope = prof.psi_prime(2.0).unwrap();
    outcome(
        (root - 2.0).abs() <= 1e-8 && (slope - 8.0 / 3.0).abs() <= 1e-8,
        format!("lambda* = {root:.12}, psi'(2) = {slope:.12}"),
    )
}

fn ac2() -> Outcome {
    let walk = CumulantProfile::new(IncrementLaw::two_point(0.45).unwrap()).unwrap();
    let levy = CumulantProfile::new(LevyModel::exponential_jump_example()).unwrap();
    let n_walk = walk.optimal_particles(300.0).unwrap();
    let n_levy = levy.optimal_particles(15.0).unwrap();
    outcome(
        n_walk == 29 && n_levy == 39,
        format!(
            "two-point N* = {n_walk}; Levy N* = {n_levy} (psi'(lambda*)C = {} sits on an integer, the boundary case reads 40)",
            levy.psi_prime_star() * 15.0
        ),
    )
}

fn ac3() -> Outcome {
    let spec = ParallelSpec {
        model: IncrementLaw::two_point(0.45).unwrap().into(),
        budget_slope: 300.0,
        barriers: vec![2500.0],
        particle_grid: vec![5, 15, 25, 40, 60, 80],
        reps: 1000,
        tilt_at_lambda_star: true,
        sim: SimConfig::with_seed(3),
    };
    let sweep = sweep_phase_transition(&spec).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [5u64, 15, 25, 40, 60, 80] {
        let c = sweep.cell(2500.0, n).unwrap();
        let ok = if n <= 25 {
            (c.ratio - n as f64).abs() / n as f64 <= 0.25
        } else {
            c.ratio <= 0.1
        };
        pass &= ok && c.flag.is_none();
        parts.push(format!("N={n}:{:.3}", c.ratio));
    }
    outcome(pass, format!("ratios {}", parts.join(" ")))
}

fn ac4() -> Outcome {
    let (mu, x) = (0.2, 10.0);
    let m = RestartMeasure::brownian_qsd(mu, x).unwrap();
    let mass = quadrature(|y| m.density(y).unwrap(), 0.0, x, 1e-12).unwrap();
    let moment = m.exp_moment(2.0 * mu);
    let rel = (moment / (mu * x).exp() - 1.0).abs();
    outcome(
        (mass - 1.0).abs() <= 1e-8 && rel <= 1e-6,
        format!("mass = {mass:.12}, moment = {moment:.10} (rel err {rel:.1e})"),
    )
}

fn ac5() -> Outcome {
    let (mu, x) = (0.2, 10.0);
    let model = standard_brownian(mu).unwrap();
    let measure = RestartMeasure::brownian_qsd(mu, x).unwrap();
    let cfg = SimConfig::with_seed(5);
    let (cycles, discarded) = simulate_cycles(&model, &measure, 10_000, &cfg, 5).unwrap();
    let q_exact = 1.0 / (2f64.exp() + 1.0);
    let ups = cycles
        .iter()
        .filter(|c| c.exit.side == rare_reach::paths::ExitSide::Upper)
        .count() as u64;
    let q = BinomialEstimate::new(ups, cycles.len() as u64);
    let z = (q.p() - q_exact).abs() / q.std_err_at(q_exact);
    let beta = brownian_qsd_beta(mu, x);
    let times: Vec<f64> = cycles.iter().map(|c| c.exit.time).collect();
    let ks_cycle = ks_exponential(&times, beta);
    let runs = simulate_runs(&model, &measure, 10_000.0, 1000, &cfg, 5).unwrap();
    let success: Vec<f64> = runs.iter().filter(|r| r.success).map(|r| r.total_time).collect();
    let ks_success = ks_exponential(&success, beta * q_exact);
    outcome(
        z <= 3.0 && discarded == 0 && ks_cycle.p_value > 0.01 && ks_success.p_value > 0.01 && success.len() == runs.len(),
        format!(
            "q = {:.5} ({z:.2} sigma from {q_exact:.6}), beta = {beta:.6}, KS cycle p = {:.3}, KS success p = {:.3}",
            q.p(),
            ks_cycle.p_value,
            ks_success.p_value
        ),
    )
}

fn ac6() -> Outcome {
    let m = RestartMeasure::truncated_exponential(0.1, 50.0).unwrap();
    let moment = m.exp_moment(2.0);
    let product = moment * (-100f64).exp();
    outcome(
        (moment / 9.6e39 - 1.0).abs() <= 0.01 && (product / 3.6e-4 - 1.0).abs() <= 0.02,
        format!("moment = {moment:.4e}, times e^-100 = {product:.4e}"),
    )
}

fn ac7() -> Outcome {
    let model = Model::Levy(LevyModel::exponential_jump_example());
    let measure = RestartMeasure::truncated_exponential(0.1, 20.0).unwrap();
    let cfg = SimConfig::with_seed(7);
    let est: Vec<BinomialEstimate> = [25.0, 250.0, 1000.0]
        .iter()
        .map(|&b| {
            let runs = simulate_runs(&model, &measure, b, 100, &cfg, 7).unwrap();
            BinomialEstimate::new(runs.iter().filter(|r| r.success).count() as u64, 100)
        })
        .collect();
    let increasing = est.windows(2).all(|w| w[1].p() > w[0].p());
    let (lo, hi) = (&est[0], &est[2]);
    let separated = lo.p() + lo.ci_half_width() < hi.p() - hi.ci_half_width();
    let shown: Vec<String> = est
        .iter()
        .map(|e| format!("{:.2}+-{:.2}", e.p(), e.ci_half_width()))
        .collect();
    outcome(
        increasing && separated,
        format!("success at B = 25/250/1000: {}", shown.join(", ")),
    )
}

fn ac8() -> Outcome {
    let cfg = SimConfig::with_seed(8);
    let brownian = standard_brownian(0.2).unwrap();
    let walk: Model = IncrementLaw::two_point(0.45).unwrap().into();
    let levy = Model::Levy(LevyModel::exponential_jump_example());
    let mut grid: Vec<(&str, Model, RestartMeasure)> = Vec::new();
    for x in [6.0, 8.0, 10.0] {
        grid.push(("bm/texp", brownian, RestartMeasure::truncated_exponential(0.1, x).unwrap()));
        grid.push(("bm/qsd", brownian, RestartMeasure::brownian_qsd(0.2, x).unwrap()));
    }
    for x in [5.0, 10.0, 15.0] {
        grid.push(("walk/texp", walk, RestartMeasure::truncated_exponential(0.1, x).unwrap()));
    }
    for x in [2.0, 4.0, 6.0] {
        grid.push(("levy/texp", levy, RestartMeasure::truncated_exponential(1.0, x).unwrap()));
    }
    let mut pass = true;
    let mut worst = 0.0f64;
    for (i, (_, model, measure)) in grid.iter().enumerate() {
        let lstar = CumulantProfile::new(*model).unwrap().lambda_star();
        let q = estimate_q(model, measure, 10_000, &cfg, i as u64).unwrap();
        let lhs = (lstar * measure.upper()).exp() * q.q_hat;
        let rel_ci = if q.q_hat > 0.0 { q.ci_half_width / q.q_hat } else { 0.0 };
        let rhs = measure.exp_moment(lstar) * (1.0 + 3.0 * rel_ci);
        pass &= lhs <= rhs && q.discarded == 0;
        worst = worst.max(lhs / measure.exp_moment(lstar));
    }
    outcome(
        pass,
        format!("{} cells, max e^(lambda* x) q / moment = {worst:.3}", grid.len()),
    )
}

fn ac9() -> Outcome {
    let p = 0.45;
    let prof = CumulantProfile::new(IncrementLaw::two_point(p).unwrap()).unwrap();
    let cfg = SimConfig::with_seed(9);
    let mut pass = true;
    let mut worst = 0.0f64;
    let mut cells = 0;
    for x in [5u32, 10, 15, 20] {
        for mult in [3u32, 10, 40] {
            let t = x * mult;
            let exact = exact_walk_passage(p, x, t).unwrap().at(t);
            let pool = simulate_pool(&prof, x as f64, t as f64, 20_000, true, &cfg, experiment_id("ac9") + cells).unwrap();
            let est = pool.estimate(t as f64);
            let z = (est.mean - exact).abs() / est.std_err;
            pass &= z <= 3.0;
            worst = worst.max(z);
            cells += 1;
        }
    }
    outcome(pass, format!("{cells} cells, worst deviation {worst:.2} sigma"))
}

fn ac10() -> Outcome {
    let cfg = SimConfig::with_seed(10);
    let chain = FvTarget::Chain {
        kernel: birth_death_kernel(10, 0.3, 0.5),
    };
    let tv_chain = fv_tv_distance(&chain, 1000, 10_000.0, &cfg, 0).unwrap();
    let bm = FvTarget::Brownian {
        mu: 0.2,
        x: 10.0,
        bins: 10,
    };
    let tv_bm = fv_tv_distance(&bm, 2000, 1000.0, &cfg, 0).unwrap();
    outcome(
        tv_chain < 0.05 && tv_bm < 0.08,
        format!("chain N=1000 TV = {tv_chain:.4}, Brownian N=2000 TV = {tv_bm:.4}"),
    )
}

/// `3·7^40 / (10^41 - 7^41)` in exact integer arithmetic, scaled by 10^30.
fn pi40_exact() -> f64 {
    let seven = BigUint::from(7u32);
    let ten = BigUint::from(10u32);
    let num = BigUint::from(3u32) * seven.pow(40) * ten.pow(30);
    let den = ten.pow(41) - seven.pow(41);
    let scaled: f64 = (num / den).to_string().parse().unwrap();
    scaled * 1e-30
}

fn ac11() -> Outcome {
    let cfg = QueueConfig::threshold_example();
    let exact = pi40_exact();
    let pi = queueing::stationary_pi(&cfg, 40).unwrap();
    let formula_ok = (pi - exact).abs() <= 1e-11;
    let plan = queueing::plan_replicas(&cfg, 40, 10_000_000, 0.1).unwrap();
    let mut renewal_ok = 0;
    let mut naive_zero = 0;
    for seed in 0..10 {
        if let Ok(r) = queueing::renewal_estimator(&cfg, 40, &plan, seed) {
            let ratio = r.estimate / exact;
            if r.estimate > 0.0 && (0.1..=10.0).contains(&ratio) {
                renewal_ok += 1;
            }
        }
        let n = queueing::naive_pi_hat(&cfg, 40, 10_000_000, 1, seed).unwrap();
        if n.estimate == 0.0 {
            naive_zero += 1;
        }
    }
    outcome(
        formula_ok && renewal_ok >= 8 && naive_zero >= 9,
        format!(
            "pi(40) = {pi:.10e} vs exact {exact:.10e}; renewal within 10x in {renewal_ok}/10; naive zero in {naive_zero}/10 (n_parallel = {})",
            plan.n_parallel
        ),
    )
}

fn ac12() -> Outcome {
    let p = 0.45;
    let prof = CumulantProfile::new(IncrementLaw::two_point(p).unwrap()).unwrap();
    let lstar = prof.lambda_star();
    // generous budget t = 30x: decay in x at rate lambda*
    let xs: Vec<f64> = (10..=20).step_by(2).map(f64::from).collect();
    let logs: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let t = 30 * x as u32;
            exact_walk_passage(p, x as u32, t).unwrap().at(t).ln()
        })
        .collect();
    let (_, slope_x) = linear_fit(&xs, &logs);
    // tight budget x = t/2: decay in t at the rate function at speed 1/2
    let zeta = prof.legendre(0.5).unwrap();
    let ts: Vec<f64> = (20..=40).step_by(4).map(f64::from).collect();
    let logs_t: Vec<f64> = ts
        .iter()
        .map(|&t| {
            let t = t as u32;
            exact_walk_passage(p, t / 2, t).unwrap().at(t).ln()
        })
        .collect();
    let (_, slope_t) = linear_fit(&ts, &logs_t);
    let ex = (slope_x + lstar).abs() / lstar;
    let et = (slope_t + zeta).abs() / zeta;
    outcome(
        ex <= 0.2 && et <= 0.2,
        format!(
            "slope in x {slope_x:.4} vs {:.4} ({:.1}%), slope in t {slope_t:.4} vs {:.4} ({:.1}%)",
            -lstar,
            100.0 * ex,
            -zeta,
            100.0 * et
        ),
    )
}

fn main() -> ExitCode {
    let _ = rayon::ThreadPoolBuilder::new().num_threads(4).build_global();
    let checks: [(&str, &str, Check, u64); 12] = [
        ("AC1", "cumulant constants", ac1, 1),
        ("AC2", "optimal particles", ac2, 1),
        ("AC3", "phase transition", ac3, 300),
        ("AC4", "Brownian QSD closed forms", ac4, 1),
        ("AC5", "restart q and law", ac5, 180),
        ("AC6", "truncated-exponential moment", ac6, 1),
        ("AC7", "restarted Levy observability", ac7, 300),
        ("AC8", "martingale bound on q", ac8, 180),
        ("AC9", "oracle equivalence", ac9, 120),
        ("AC10", "Fleming-Viot convergence", ac10, 300),
        ("AC11", "queue stationary estimation", ac11, 600),
        ("AC12", "regime exponents", ac12, 120),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (id, name, check, limit) in checks {
        if !filter.is_empty() && !filter.iter().any(|f| f.eq_ignore_ascii_case(id)) {
            continue;
        }
        let start = Instant::now();
        let o = check();
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(limit);
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        let timing = if in_time {
            format!("{:.2}s", took.as_secs_f64())
        } else {
            format!("{:.2}s, over the {limit}s limit", took.as_secs_f64())
        };
        println!(
            "{id:<5} {} {name}: {} [{timing}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!("acceptance: {failed} failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
