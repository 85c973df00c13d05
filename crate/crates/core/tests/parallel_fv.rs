use rare_reach::flemingviot::{convergence_curve, ChainFv, FvSystem, FvTarget};
use rare_reach::oracle::{birth_death_kernel, exact_walk_passage, qsd_eigen};
use rare_reach::parallel::{estimate_ratio, min_passage_probability, sweep_phase_transition, ParallelSpec};
use rare_reach::paths::{simulate_walk_passage, SimConfig, Tilt};
use rare_reach::restart::{estimate_q, RestartMeasure};
use rare_reach::rng::stream;
use rare_reach::stats::{total_variation, BinomialEstimate};
use rare_reach::{Error, IncrementLaw, Model};

fn walk_spec(c: f64, barriers: Vec<f64>, grid: Vec<u64>, reps: u64) -> ParallelSpec {
    ParallelSpec {
        model: IncrementLaw::two_point(0.45).unwrap().into(),
        budget_slope: c,
        barriers,
        particle_grid: grid,
        reps,
        tilt_at_lambda_star: true,
        sim: SimConfig::with_seed(21),
    }
}

#[test]
fn independent_particles_match_the_product_identity() {
    let law = IncrementLaw::two_point(0.45).unwrap();
    let exact = exact_walk_passage(0.45, 5, 20).unwrap().at(20);
    let n = 4;
    let trials = 20_000;
    let hits = (0..trials)
        .filter(|&i| {
            let mut rng = stream(22, 1, i);
            (0..n).any(|_| simulate_walk_passage(&law, 5.0, 20, &Tilt::NONE, &mut rng).hit)
        })
        .count() as u64;
    let b = BinomialEstimate::new(hits, trials);
    let p = min_passage_probability(exact, n);
    assert!((b.p() - p).abs() < 3.0 * b.std_err_at(p), "{} vs {p}", b.p());
}

#[test]
fn tilted_ratio_matches_the_oracle() {
    let spec = walk_spec(30.0, vec![20.0], vec![3], 20_000);
    let cell = estimate_ratio(&spec, 20.0, 3).unwrap();
    let single = exact_walk_passage(0.45, 20, 600).unwrap().at(600);
    let share = exact_walk_passage(0.45, 20, 200).unwrap().at(200);
    let exact = min_passage_probability(share, 3) / single;
    assert!((cell.ratio - exact).abs() < 1.5 * cell.ci_half_width, "{} vs {exact}", cell.ratio);
}

#[test]
fn single_particle_ratio_is_one() {
    let spec = walk_spec(30.0, vec![10.0, 20.0], vec![1], 200);
    let sweep = sweep_phase_transition(&spec).unwrap();
    assert!(sweep.cells.iter().all(|c| c.ratio == 1.0 && c.ci_half_width == 0.0));
    assert_eq!(estimate_ratio(&spec, 10.0, 1).unwrap().ratio, 1.0);
}

#[test]
fn empty_per_particle_budget_is_flagged() {
    let spec = walk_spec(1.0, vec![5.0], vec![2, 10], 100);
    assert!(matches!(estimate_ratio(&spec, 5.0, 10), Err(Error::DegenerateBudget { .. })));
    let sweep = sweep_phase_transition(&spec).unwrap();
    let cell = sweep.cell(5.0, 10).unwrap();
    assert_eq!(cell.ratio, 0.0);
    assert!(cell.flag.is_some());
    assert!(sweep.cell(5.0, 2).unwrap().flag.is_none());
}

#[test]
fn sweep_table_carries_thresholds() {
    let spec = walk_spec(300.0, vec![20.0], vec![1, 10, 40], 200);
    let t = sweep_phase_transition(&spec).unwrap().to_table();
    assert_eq!(t.value(0, "nStar"), Some(29.0));
    let thr = t.value(0, "thresholdN").unwrap();
    assert!((thr - 30.0).abs() < 1e-9);
    assert_eq!(t.rows.len(), 3);
}

#[test]
fn more_particles_bring_the_chain_closer() {
    let target = FvTarget::Chain {
        kernel: birth_death_kernel(8, 0.3, 0.5),
    };
    let t = convergence_curve(&target, &[20, 2000], 5000.0, 3, &SimConfig::with_seed(23)).unwrap();
    let (small, large) = (t.value(0, "meanTV").unwrap(), t.value(1, "meanTV").unwrap());
    assert!(large < small && large < 0.05, "{small} {large}");
}

#[test]
fn empirical_restart_from_fleming_viot() {
    // a killed walk on {1..9}, made lazy (same QSD, no periodicity); its
    // FV cloud restarts the walk below barrier 10
    let kernel = birth_death_kernel(9, 0.225, 0.275);
    let exact = qsd_eigen(&kernel).unwrap();
    let mut fv = ChainFv::new(kernel, vec![4; 2000]).unwrap();
    let mut rng = stream(24, 0, 0);
    fv.burn_in(10.0, 1e5, &mut rng).unwrap();
    assert!(total_variation(&fv.occupation(), &exact.nu) < 0.05);
    let measure = fv.empirical_measure(1.0, 10.0).unwrap();
    let walk: Model = IncrementLaw::two_point(0.45).unwrap().into();
    let q = estimate_q(&walk, &measure, 20_000, &SimConfig::with_seed(24), 0).unwrap();
    // exact: average gambler's ruin over the QSD
    let r = 0.55f64 / 0.45;
    let q_exact: f64 = exact
        .nu
        .iter()
        .enumerate()
        .map(|(i, w)| w * (1.0 - r.powi(i as i32 + 1)) / (1.0 - r.powi(10)))
        .sum();
    let se = BinomialEstimate::new(0, 20_000).std_err_at(q_exact);
    assert!((q.q_hat - q_exact).abs() < 4.0 * se + 0.05 * q_exact, "{} vs {q_exact}", q.q_hat);
    assert!(matches!(measure, RestartMeasure::Empirical { .. }));
}
