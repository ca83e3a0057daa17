//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero on any failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use isac_core::beamforming::{phase_alphabet, CeParams};
use isac_core::doa::{enumerate_micro_surfaces, Axis};
use isac_core::geometry::steering_ura;
use isac_core::linalg::wrap_angle;
use isac_core::signal::{complex_awgn, sum_rate_effective, CascadeModel};
use isac_core::sweep::percentile;
use isac_core::PeriodRates;
use isac_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(v: &[f64]) -> String {
    let s: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", s.join(", "))
}

// 1. Noiseless ESPRIT and MUSIC pairing.

fn random_sources(k: usize, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    loop {
        let s: Vec<(f64, f64)> =
            (0..k).map(|_| (rng.random_range(-0.9 * PI..0.9 * PI), rng.random_range(-0.9 * PI..0.9 * PI))).collect();
        let separated = s.iter().enumerate().all(|(i, a)| {
            s[i + 1..].iter().all(|b| wrap_angle(a.0 - b.0).abs() >= 0.2 && wrap_angle(a.1 - b.1).abs() >= 0.2)
        });
        if separated {
            return s;
        }
    }
}

fn noiseless_block(panel: &PanelGeometry, sources: &[(f64, f64)], tau: usize, rng: &mut ChaCha8Rng) -> SnapshotBlock {
    let mut x = CMatrix::zeros(panel.elements(), tau);
    for &(u, v) in sources {
        let b = steering_ura(u, v, panel).unwrap();
        for t in 0..tau {
            let s = C64::from_polar(1.0, PI / 4.0 + PI / 2.0 * rng.random_range(0..4) as f64);
            for r in 0..b.len() {
                x[(r, t)] += b[r] * s;
            }
        }
    }
    SnapshotBlock { samples: x, panel: 2, first_slot: 0 }
}

fn max_set_error(got: &[f64], want: &[f64]) -> f64 {
    let mut g = got.to_vec();
    let mut w = want.to_vec();
    if g.len() != w.len() {
        return f64::INFINITY;
    }
    g.sort_by(f64::total_cmp);
    w.sort_by(f64::total_cmp);
    g.iter().zip(&w).map(|(a, b)| wrap_angle(a - b).abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let panel = PanelGeometry::square(12).unwrap();
    let ms = enumerate_micro_surfaces(&panel, 8, 8, 4).unwrap();
    let mut worst = 0.0f64;
    let mut paired = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1 + (seed % 3) as usize;
        let src = random_sources(k, &mut rng);
        let block = noiseless_block(&panel, &src, 64, &mut rng);
        let cov = fbss_covariance(&block, &ms).unwrap();
        let (Ok(u), Ok(v)) = (esprit_axis(&cov, &ms, Axis::Y, k), esprit_axis(&cov, &ms, Axis::Z, k)) else {
            worst = f64::INFINITY;
            continue;
        };
        let tu: Vec<f64> = src.iter().map(|s| s.0).collect();
        let tv: Vec<f64> = src.iter().map(|s| s.1).collect();
        worst = worst.max(max_set_error(&u, &tu)).max(max_set_error(&v, &tv));
        if let Ok(pairs) = music_pair(&u, &v, &cov, &ms) {
            let mut used = vec![false; k];
            let ok = pairs.iter().all(|p| {
                let hit = src.iter().enumerate().position(|(i, s)| {
                    !used[i] && wrap_angle(p.0 - s.0).abs() < 1e-6 && wrap_angle(p.1 - s.1).abs() < 1e-6
                });
                hit.map(|i| used[i] = true).is_some()
            });
            if ok && pairs.len() == k {
                paired += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-6 && paired == 100 && t < Duration::from_secs(10),
        format!("max angle error {worst:.2e} rad, pairing {paired}/100, {:.2}s", t.as_secs_f64()),
    )
}

// 2. Localization error percentiles.

fn p90_block1(config: &ScenarioConfig, trials: u64) -> (f64, usize) {
    let scenario = config.build().unwrap();
    let mut errors = Vec::new();
    let mut failures = 0;
    for i in 0..trials {
        match run_sensing(&scenario, trial_seed(config.seed, i)).block1 {
            Some(b) => errors.push(b.rmse.assigned),
            None => {
                failures += 1;
                errors.push(f64::INFINITY);
            }
        }
    }
    errors.sort_by(f64::total_cmp);
    (percentile(&errors, 90.0), failures)
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let base = ScenarioConfig::default();
    let (p144, f144) = p90_block1(&base, 200);
    let (p400, f400) = p90_block1(&base.with_axis(SweepAxis::MSemi, 400.0).unwrap(), 200);
    outcome(
        p144 <= 0.05 && p400 <= 0.01,
        format!(
            "p90 {:.2} mm at 12x12 (<= 50), {:.2} mm at 20x20 (<= 10), failures {f144}/{f400}, {:.0}s",
            p144 * 1e3,
            p400 * 1e3,
            start.elapsed().as_secs_f64()
        ),
    )
}

// 3 and 4. Localization trends.

fn sense_means(config: &ScenarioConfig, axis: SweepAxis, values: &[f64], trials: usize) -> Vec<f64> {
    let plan = SweepPlan { axis, values: values.to_vec(), mode: SweepMode::Sense, trials, workers: 1 };
    sweep(config, &plan).unwrap().iter().map(|r| r.mean).collect()
}

fn criterion_3() -> Outcome {
    let base = ScenarioConfig::default();
    let rho = sense_means(&base, SweepAxis::Rho, &[0.0, 10.0, 20.0, 30.0], 50);
    let users = sense_means(&base, SweepAxis::Users, &[2.0, 3.0], 50);
    outcome(
        strictly_decreasing(&rho) && users[0] < users[1],
        format!("mean RMSE vs rho {}; K=2 {:.3e} < K=3 {:.3e}", fmt_list(&rho), users[0], users[1]),
    )
}

fn criterion_4() -> Outcome {
    let mut config = ScenarioConfig::default();
    config.users.placement = Placement::Sector { distance: 10.0, depth: 4.0, azimuth_deg: [-45.0, 45.0] };
    let m = sense_means(&config, SweepAxis::Tau1, &[20.0, 50.0, 90.0], 50);
    outcome(strictly_decreasing(&m), format!("mean RMSE vs tau1 {{20, 50, 90}} {}", fmt_list(&m)))
}

// 5. Cross-entropy against exhaustive search.

fn small_scene(users: Vec<Position>, geometry: [PanelGeometry; 3]) -> Scene {
    let d = ScenarioConfig::default().geometry;
    Scene { bs: d.bs, panels: d.panels, panel_geometry: geometry, bs_antennas: 8, users, path_loss: PathLossModel::default() }
}

fn enumerate(bits: u32, m: usize) -> impl Iterator<Item = PhaseShiftConfig> {
    let levels = 1usize << bits;
    (0..levels.pow(m as u32)).map(move |code| {
        let idx = (0..m).map(|e| ((code / levels.pow(e as u32)) % levels) as u16).collect();
        PhaseShiftConfig::new(bits, idx).unwrap()
    })
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let params = |bits| CeParams { samples: 100, elites: 10, kappa: 1e-9, max_iterations: 50, bits };
    let (rho, sigma2) = (0.1, 1e-11);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let mut isac_hits = 0;
    let g4 = PanelGeometry::square(4).unwrap();
    for seed in 0..100u64 {
        let user = Position::new(rng.random_range(0.0..9.0), rng.random_range(-5.0..5.0), 0.0);
        let sc = small_scene(vec![user], [PanelGeometry::new(4, 2).unwrap(), g4, g4]);
        let ch = build_channels(&sc, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let sensed = SensedChannelMagnitude::from_true(&ch, 1).unwrap();
        let w = mrc_combiner(ch.i2b[0].arrival_angles.u, 8, 1).unwrap();
        let model = CascadeModel::isac(&ch).unwrap();
        let best = enumerate(1, 8)
            .map(|t| sum_rate_effective(&model.effective(&t.reflection()).unwrap(), &w, rho, sigma2).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let d = ce_optimize_isac(&sensed, &ch.i2b[0], &w, &params(1), rho, sigma2, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap();
        if d.outcome.best_score >= best - 1e-9 {
            isac_hits += 1;
        }
    }
    let t_isac = start.elapsed();

    let start = Instant::now();
    let mut pc_hits = 0;
    let g2 = PanelGeometry::new(2, 1).unwrap();
    for seed in 0..100u64 {
        let users = (0..2)
            .map(|_| Position::new(rng.random_range(0.0..9.0), rng.random_range(-5.0..5.0), 0.0))
            .collect();
        let sc = small_scene(users, [g2, g2, g2]);
        let ch = build_channels(&sc, &mut ChaCha8Rng::seed_from_u64(1000 + seed)).unwrap();
        let truth = [1, 2, 3].map(|p| SensedChannelMagnitude::from_true(&ch, p).unwrap());
        let model = CascadeModel::pc(&ch).unwrap();
        let best = enumerate(1, 6)
            .map(|t| {
                let h = model.effective(&t.reflection()).unwrap();
                zf_combiner(&h).map_or(0.0, |w| sum_rate_effective(&h, &w, rho, sigma2).unwrap())
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let d = ce_optimize_pc(&truth, &ch.i2b, &params(1), rho, sigma2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        if d.outcome.best_score >= best - 1e-9 {
            pc_hits += 1;
        }
    }
    let t_pc = start.elapsed();
    let limit = Duration::from_secs(60);
    outcome(
        isac_hits >= 95 && pc_hits >= 95 && t_isac < limit && t_pc < limit,
        format!(
            "ISAC {isac_hits}/100 ({:.2}s), PC {pc_hits}/100 ({:.2}s)",
            t_isac.as_secs_f64(),
            t_pc.as_secs_f64()
        ),
    )
}

// 6. Zero-forcing contract.

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut cross, mut norm) = (0.0f64, 0.0f64);
    let mut failures = 0;
    for _ in 0..200 {
        let h = complex_awgn(8, 3, 1.0, &mut rng);
        let Ok(w) = zf_combiner(&h) else {
            failures += 1;
            continue;
        };
        for k in 0..3 {
            norm = norm.max((w.column(k).norm() - 1.0).abs());
            for j in 0..3 {
                if j != k {
                    cross = cross.max(w.column(k).dotc(&h.column(j)).norm());
                }
            }
        }
    }
    outcome(
        failures == 0 && cross < 1e-9 && norm <= 1e-12,
        format!("max |w_k^H h_j| {cross:.2e}, max | ||w_k|| - 1 | {norm:.2e}, failures {failures}"),
    )
}

// 7. Phase-offset recovery with grid-aligned offsets.

fn criterion_7() -> Outcome {
    let base = ScenarioConfig::default();
    let mut summary = Vec::new();
    let mut pass = true;
    for k in [1usize, 2] {
        for bits in [2u32, 4] {
            let mut hits = 0;
            for seed in 0..100u64 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + k as u64 * 7 + bits as u64);
                let mut config = base.clone();
                config.users.count = k;
                let scenario = config.build().unwrap();
                let users = scenario.place_users(&mut rng).unwrap();
                let scene = scenario.scene(users.clone());
                let mut ch = build_channels(&scene, &mut rng).unwrap();
                let grid = phase_alphabet(bits).unwrap();
                let levels = 1u16 << bits;
                let truth: Vec<[u16; 2]> =
                    (0..k).map(|_| [rng.random_range(0..levels), rng.random_range(0..levels)]).collect();
                for u in 0..k {
                    let psi1 = ch.u2i[0][u].gain.arg();
                    for p in 1..3 {
                        let mag = ch.u2i[p][u].gain.norm();
                        ch.u2i[p][u].gain = C64::from_polar(mag, psi1 + grid[truth[u][p - 1] as usize]);
                    }
                }
                let sensed = [1, 2, 3].map(|p| sensed_channel(&users, p, &scene).unwrap());
                let w = mrc_combiner(ch.i2b[0].arrival_angles.u, scenario.bs_antennas, k).unwrap();
                let theta1 = PhaseShiftConfig::random(scenario.ce_isac.bits, ch.panel_elements(1), &mut rng).unwrap();
                let records = record_powers_pc(&ch, &theta1, &w, 4, scenario.rho, scenario.sigma2, &mut rng).unwrap();
                let est = estimate_phase_offsets(
                    &records,
                    &sensed,
                    &ch.i2b,
                    &w,
                    bits,
                    scenario.rho,
                    scenario.sigma2,
                    scenario.offset_budget,
                )
                .unwrap();
                if est.exhaustive && est.indices == truth {
                    hits += 1;
                }
            }
            pass &= hits == 100;
            summary.push(format!("K={k} b={bits}: {hits}/100"));
        }
    }
    outcome(pass, summary.join(", "))
}

// 8. Beamforming ordering with bootstrap confidence.

fn bootstrap_lower(diffs: &[f64], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = diffs.len();
    let mut means: Vec<f64> =
        (0..10_000).map(|_| (0..n).map(|_| diffs[rng.random_range(0..n)]).sum::<f64>() / n as f64).collect();
    means.sort_by(f64::total_cmp);
    percentile(&means, 2.5)
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let config = ScenarioConfig::default().with_axis(SweepAxis::MSemi, 16.0).unwrap();
    let scenario = config.build().unwrap();
    let mut rates = Vec::new();
    let mut failures = 0;
    for i in 0..50 {
        match run_trial(&scenario, trial_seed(config.seed, i)).rates {
            Some(r) => rates.push(r),
            None => failures += 1,
        }
    }
    let mut pass = failures == 0;
    let mut parts = Vec::new();
    let periods: [(&str, fn(&PeriodRates) -> f64); 2] = [("ISAC", |p| p.isac), ("PC", |p| p.pc)];
    for (name, get) in periods {
        let prop: Vec<f64> = rates.iter().map(|r| get(&r.proposed)).collect();
        let rand: Vec<f64> = rates.iter().map(|r| get(&r.random)).collect();
        let genie: Vec<f64> = rates.iter().map(|r| get(&r.genie)).collect();
        let up: Vec<f64> = prop.iter().zip(&rand).map(|(a, b)| a - b).collect();
        let down: Vec<f64> = genie.iter().zip(&prop).map(|(a, b)| a - b).collect();
        let (lo_up, lo_down) = (bootstrap_lower(&up, 1), bootstrap_lower(&down, 2));
        pass &= lo_up > 0.0 && lo_down > 0.0;
        parts.push(format!(
            "{name} random {:.2} < proposed {:.2} <= genie {:.2} (95% lower bounds {lo_up:.2}, {lo_down:.2})",
            mean(&rand),
            mean(&prop),
            mean(&genie)
        ));
    }
    outcome(pass, format!("{}; failures {failures}; {:.0}s", parts.join("; "), start.elapsed().as_secs_f64()))
}

// 9. Triangulation round trip.

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = PathLossModel::default();
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let q2 = Position::new(rng.random_range(-5.0..-3.0), rng.random_range(-12.0..-6.0), rng.random_range(4.0..10.0));
        let q3 = Position::new(rng.random_range(-5.0..-3.0), rng.random_range(6.0..12.0), rng.random_range(4.0..10.0));
        let user = Position::new(rng.random_range(0.0..12.0), rng.random_range(-6.0..6.0), rng.random_range(0.0..2.0));
        let a2 = EffectiveAngles::of_link(&user, &q2).unwrap();
        let a3 = EffectiveAngles::of_link(&user, &q3).unwrap();
        let err = match triangulate((a2.u, a2.v), &q2, (a3.u, a3.v), &q3, &model) {
            Ok(c) if c.feasible => c.position.distance(&user),
            _ => f64::INFINITY,
        };
        worst = worst.max(err);
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-9 && t < Duration::from_secs(5),
        format!("max error {worst:.2e} m over 1000 scenes, {:.3}s", t.as_secs_f64()),
    )
}

// 10. Sweep determinism across worker counts.

fn csv_bytes(config: &ScenarioConfig, plan: &SweepPlan) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&sweep(config, plan).unwrap(), &mut buf).unwrap();
    buf
}

fn criterion_10() -> Outcome {
    let sense = ScenarioConfig::default();
    let mut full = ScenarioConfig::default();
    full.geometry.reflect = [8, 8];
    full.geometry.semi = [8, 8];
    for ce in [&mut full.beam.isac, &mut full.beam.pc, &mut full.beam.genie] {
        ce.samples = 200;
        ce.elites = 40;
    }
    let mut identical = 0;
    let mut cases = 0;
    for (config, mode, axis, values, trials) in [
        (&sense, SweepMode::Sense, SweepAxis::Rho, vec![0.0, 20.0], 8),
        (&full, SweepMode::Full, SweepAxis::Tau1, vec![20.0, 60.0], 4),
    ] {
        let plan = |workers| SweepPlan { axis, values: values.clone(), mode, trials, workers };
        let runs = [csv_bytes(config, &plan(1)), csv_bytes(config, &plan(1)), csv_bytes(config, &plan(8)), csv_bytes(config, &plan(8))];
        cases += 1;
        if runs.iter().all(|r| r == &runs[0]) && runs[0].len() > 60 {
            identical += 1;
        }
    }
    outcome(identical == cases, format!("{identical}/{cases} sweeps byte-identical over workers 1, 1, 8, 8"))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "noiseless subspace exactness", criterion_1),
        (2, "localization error percentiles", criterion_2),
        (3, "RMSE decreasing in transmit power, larger for more users", criterion_3),
        (4, "RMSE decreasing in block-1 length", criterion_4),
        (5, "cross-entropy matches exhaustive search", criterion_5),
        (6, "zero-forcing nulls and unit norms", criterion_6),
        (7, "grid-aligned phase-offset recovery", criterion_7),
        (8, "random < proposed <= genie in both periods", criterion_8),
        (9, "triangulation round trip", criterion_9),
        (10, "sweep determinism across worker counts", criterion_10),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let o = run();
        println!("{} criterion {id}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
