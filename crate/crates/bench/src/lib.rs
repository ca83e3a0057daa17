//! Fixtures shared by the benchmarks.

use std::f64::consts::PI;

use isac_core::geometry::steering_ura;
use isac_core::{build_channels, ChannelSet, CMatrix, PanelGeometry, Scenario, ScenarioConfig, Scene, SnapshotBlock, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Default scenario with one placement and one channel draw.
pub struct Fixture {
    pub scenario: Scenario,
    pub scene: Scene,
    pub channels: ChannelSet,
}

pub fn fixture(config: &ScenarioConfig, seed: u64) -> Fixture {
    let scenario = config.build().expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = scenario.place_users(&mut rng).expect("placement");
    let scene = scenario.scene(users);
    let channels = build_channels(&scene, &mut rng).expect("channels");
    Fixture { scenario, scene, channels }
}

/// Noiseless QPSK snapshots of plane waves arriving at `panel`.
pub fn synthetic_snapshots(panel: &PanelGeometry, sources: &[(f64, f64)], tau: usize, seed: u64) -> SnapshotBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = CMatrix::zeros(panel.elements(), tau);
    for &(u, v) in sources {
        let b = steering_ura(u, v, panel).expect("steering");
        for t in 0..tau {
            let s = C64::from_polar(1.0, PI / 4.0 + PI / 2.0 * rng.random_range(0..4) as f64);
            for r in 0..b.len() {
                x[(r, t)] += b[r] * s;
            }
        }
    }
    SnapshotBlock { samples: x, panel: 2, first_slot: 0 }
}

/// Complex Gaussian `rows × cols` matrix with unit-variance entries.
pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> CMatrix {
    isac_core::signal::complex_awgn(rows, cols, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}
