use std::sync::OnceLock;

use isac_core::{run_sensing, run_trial, sweep, trial_seed, ScenarioConfig, SweepAxis, SweepMode, SweepPlan, TrialRecord};

fn reduced_ce(c: &mut ScenarioConfig) {
    for ce in [&mut c.beam.isac, &mut c.beam.pc, &mut c.beam.genie] {
        ce.samples = 100;
        ce.elites = 10;
        ce.max_iterations = 20;
    }
}

fn small() -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.geometry.reflect = [8, 8];
    c.geometry.semi = [8, 8];
    c.users.count = 2;
    reduced_ce(&mut c);
    c
}

#[test]
fn default_seed_smoke() {
    let c = ScenarioConfig::default();
    let s = c.build().unwrap();
    let r = run_trial(&s, trial_seed(c.seed, 0));
    assert_eq!(r.failure, None);
    assert_eq!(r.slots, 1200);
    let b1 = r.block1.unwrap();
    let b2 = r.block2.unwrap();
    assert!(b1.rmse.assigned.is_finite() && b2.rmse.assigned.is_finite());
    let rates = r.rates.unwrap();
    assert!(rates.proposed.pc > 0.0 && rates.proposed.isac > 0.0);
    assert!(rates.proposed.overall.is_finite());
}

#[test]
fn trials_repeat_per_seed() {
    let c = small();
    let s = c.build().unwrap();
    for i in 0..3 {
        let seed = trial_seed(c.seed, i);
        let a = run_trial(&s, seed);
        let b = run_trial(&s, seed);
        assert_eq!(a, b);
        assert_eq!(run_sensing(&s, seed).block1, a.block1);
    }
    assert_ne!(run_trial(&s, 1).users, run_trial(&s, 2).users);
}

fn low_noise_records() -> &'static [TrialRecord] {
    static RECORDS: OnceLock<Vec<TrialRecord>> = OnceLock::new();
    RECORDS.get_or_init(|| {
        let mut c = ScenarioConfig::default();
        c.power.sigma2_dbm = -120.0;
        reduced_ce(&mut c);
        let s = c.build().unwrap();
        (0..50).map(|i| run_trial(&s, trial_seed(c.seed, i))).collect()
    })
}

#[test]
fn second_block_refines_location_at_low_noise() {
    let records = low_noise_records();
    let better = records
        .iter()
        .filter(|r| match (&r.block1, &r.block2) {
            (Some(a), Some(b)) => b.rmse.assigned <= a.rmse.assigned,
            _ => false,
        })
        .count();
    assert!(better >= 45, "block 2 at least as accurate in {better}/50 trials");
}

#[test]
fn designed_phases_beat_random_phases() {
    let records = low_noise_records();
    let rates: Vec<_> = records.iter().filter_map(|r| r.rates).take(20).collect();
    assert_eq!(rates.len(), 20);
    let mean = |f: fn(&isac_core::TrialRates) -> f64| rates.iter().map(f).sum::<f64>() / rates.len() as f64;
    let genie = mean(|r| r.genie.isac);
    let random = mean(|r| r.random.isac);
    assert!(genie >= random, "genie {genie} vs random {random}");
}

#[test]
fn more_users_under_total_power_lower_rate_and_accuracy() {
    let mut c = ScenarioConfig::default().with_axis(SweepAxis::MSemi, 16.0).unwrap();
    c.power.total = true;
    let plan = SweepPlan { axis: SweepAxis::Users, values: vec![1.0, 2.0, 3.0], mode: SweepMode::Full, trials: 4, workers: 1 };
    let rows = sweep(&c, &plan).unwrap();
    let column = |metric: &str| -> Vec<f64> { rows.iter().filter(|r| r.metric == metric).map(|r| r.mean).collect() };
    let rate = column("rate_overall_proposed");
    let err = column("rmse_block1");
    assert_eq!(rate.len(), 3);
    assert!(rate.windows(2).all(|w| w[1] < w[0]), "{rate:?}");
    assert!(err.windows(2).all(|w| w[1] > w[0]), "{err:?}");
}
