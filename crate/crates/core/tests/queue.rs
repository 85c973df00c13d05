use rare_reach::queueing::{
    fv_estimator, mean_return_time, naive_pi_hat, plan_replicas, renewal_estimator, report_table, stationary_pi,
    variance_link_check, QueueConfig, RenewalPlan,
};
use rare_reach::stats::Z95;

fn cfg() -> QueueConfig {
    QueueConfig::threshold_example()
}

#[test]
fn time_averages_match_stationary_law() {
    let c = cfg();
    for k in 0..=8 {
        let r = naive_pi_hat(&c, k, 100_000, 20, 1).unwrap();
        let exact = stationary_pi(&c, k).unwrap();
        let se = r.ci / Z95;
        assert!((r.estimate - exact).abs() <= 3.0 * se, "k={k}: {} vs {exact} (se {se})", r.estimate);
        assert_eq!(r.events_used, 20 * 100_000);
    }
}

#[test]
fn return_time_to_threshold_is_of_order_hundred() {
    let c = cfg();
    // cycles run between entries into J from below, at rate π(J)μ
    let exact = 1.0 / (stationary_pi(&c, 12).unwrap() * c.service_rate);
    let m = mean_return_time(&c, 1_000_000, 2).unwrap();
    assert!((m.mean - exact).abs() < 3.5 * m.std_err, "{} vs {exact}", m.mean);
    assert!((100.0..1000.0).contains(&m.mean));
}

#[test]
fn renewal_matches_exact_just_above_threshold() {
    let c = cfg();
    let plan = RenewalPlan {
        events: 1_000_000,
        return_share: 0.3,
        n_parallel: 4,
    };
    let r = renewal_estimator(&c, 13, &plan, 3).unwrap();
    let exact = stationary_pi(&c, 13).unwrap();
    assert!((r.estimate - exact).abs() < 3.0 * r.ci / Z95, "{} vs {exact}", r.estimate);
    assert!(r.events_used <= plan.events);
}

#[test]
fn renewal_improves_with_horizon() {
    let c = cfg();
    let exact = stationary_pi(&c, 40).unwrap();
    let mean_log_error = |events: u64| {
        let plan = plan_replicas(&c, 40, events, 0.1).unwrap();
        (0..6)
            .map(|s| match renewal_estimator(&c, 40, &plan, 100 + s) {
                Ok(r) => (r.estimate / exact).ln().abs().min(5.0),
                Err(_) => 5.0,
            })
            .sum::<f64>()
            / 6.0
    };
    let (small, large) = (mean_log_error(100_000), mean_log_error(10_000_000));
    assert!(large < small, "{large} vs {small}");
    assert!(large < 0.7);
}

#[test]
fn renewal_sees_the_top_state_more_often_than_naive() {
    let c = cfg();
    let plan = plan_replicas(&c, 40, 1_000_000, 0.1).unwrap();
    let mut renewal = 0;
    let mut naive = 0;
    for s in 0..20 {
        renewal += renewal_estimator(&c, 40, &plan, s).is_ok_and(|r| r.estimate > 0.0) as u32;
        naive += (naive_pi_hat(&c, 40, 1_000_000, 1, s).unwrap().estimate > 0.0) as u32;
    }
    assert!(renewal > naive, "{renewal} vs {naive}");
    assert!(naive <= 2);
}

#[test]
fn fleming_viot_route_is_in_range() {
    let c = cfg();
    let exact = stationary_pi(&c, 30).unwrap();
    let ratios: Vec<f64> = (0..4)
        .map(|s| fv_estimator(&c, 30, 500, 2_000_000, 0.1, s).unwrap().estimate / exact)
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((0.7..1.3).contains(&mean), "{ratios:?}");
}

#[test]
fn variance_link_constant_transfers() {
    let c = cfg();
    let small = variance_link_check(&c, 10, 300.0, 0.5, 20_000, 4).unwrap();
    let large = variance_link_check(&c, 15, 450.0, 0.5, 20_000, 4).unwrap();
    let fitted = 1.5 * small.ratio;
    assert!(large.ratio <= fitted.max(small.bound_constant), "{} vs {fitted}", large.ratio);
    assert!(small.ratio <= small.bound_constant && large.ratio <= large.bound_constant);

    let zero = variance_link_check(&c, 10, 300.0, 0.0, 2000, 5).unwrap();
    assert_eq!(zero.var_xi, 0.0);
    assert!(zero.var_pi_hat <= zero.bound_constant * zero.p_hit);
}

#[test]
fn report_table_layout() {
    let c = cfg();
    let r = naive_pi_hat(&c, 2, 1000, 2, 0).unwrap();
    let t = report_table(&[r]);
    assert!(t.to_csv().starts_with("method,k,estimate,ci,eventsUsed,seeds\nnaiveMC,2,"));
}
