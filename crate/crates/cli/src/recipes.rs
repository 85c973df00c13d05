//! Built-in experiment recipes reproducing the reference figures at desk
//! scale.

use crate::experiments::Kind;

pub struct Recipe {
    pub name: &'static str,
    pub kind: Kind,
    pub description: &'static str,
    /// Declared wall-clock budget in seconds on a 4-core laptop.
    pub budget_secs: u64,
    pub config: &'static str,
}

pub const RECIPES: &[Recipe] = &[
    Recipe {
        name: "fig1",
        kind: Kind::ParallelSweep,
        description: "phase transition of the particle ratio, two-point walk p=0.45, C=300",
        budget_secs: 300,
        config: "\
[model]
family = two-point
p = 0.45

[sweep]
slope = 300
barriers = 20, 100, 500, 1000, 2500
particles = 1..100
reps = 1000
tilt = true
",
    },
    Recipe {
        name: "fig2",
        kind: Kind::ParallelSweep,
        description: "particle ratio for the exponential-jump Levy example, C=15",
        budget_secs: 300,
        config: "\
[model]
family = levy-example

[sweep]
slope = 15
barriers = 2, 4, 8
particles = 1..60
reps = 1000
tilt = true
",
    },
    Recipe {
        name: "fig3",
        kind: Kind::RestartRun,
        description: "restarted Levy example from a truncated exponential, barrier 50",
        budget_secs: 300,
        config: "\
[model]
family = levy-example

[measure]
kind = truncexp
rate = 0.1

[run]
barrier = 50
budgets = 100, 1000, 10000
reps = 100
",
    },
    Recipe {
        name: "fig4",
        kind: Kind::Mm1kAppendix3,
        description: "M/M/1/K stationary probability of the full state: exact, naive, renewal, Fleming-Viot",
        budget_secs: 600,
        config: "\
[queue]
arrival_rate = 0.7
service_rate = 1
capacity = 40
absorb_threshold = 12

[appendix3]
k = 40
budgets = 100000, 1000000, 10000000
seeds = 10
methods = naive, renewal, fv
",
    },
    Recipe {
        name: "appendix1",
        kind: Kind::Mm1Appendix1,
        description: "M/M/1 time-average estimator under linear budgets and its variance link",
        budget_secs: 300,
        config: "\
[queue]
arrival_rate = 0.7
service_rate = 1

[appendix1]
targets = 1..15
slope = 30
c = 0.5
reps = 5000
fit_k = 10
test_k = 15
",
    },
];

pub fn find(name: &str) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.name == name)
}

pub fn list() -> Vec<&'static str> {
    RECIPES.iter().map(|r| r.name).collect()
}
