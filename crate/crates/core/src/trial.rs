//! One coherence block of the full protocol, end to end.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::beamforming::{
    apply_offsets, ce_optimize_isac, ce_optimize_pc, estimate_phase_offsets, mrc_combiner, record_powers_pc,
    sensed_channel, zf_from_sensed, CeOutcome, PhaseOffsetGrid, SensedChannelMagnitude,
};
use crate::error::Result;
use crate::geometry::{build_channels, ChannelSet, Position, Scene};
use crate::localization::{rmse, sense_locations, RmseReport};
use crate::scenario::Scenario;
use crate::signal::{generate_symbols, receive_at_sub_irs, sum_rate, NoiseModel, Period, PhaseShiftConfig};

mod stream {
    pub const USERS: u64 = 1;
    pub const CHANNELS: u64 = 2;
    pub const THETA_BLOCK1: u64 = 3;
    pub const SYMBOLS_BLOCK1: u64 = 4;
    pub const NOISE_BLOCK1: [u64; 2] = [5, 6];
    pub const CE_ISAC: u64 = 7;
    pub const SYMBOLS_BLOCK2: u64 = 8;
    pub const NOISE_BLOCK2: [u64; 2] = [9, 10];
    pub const RECORDS: u64 = 11;
    pub const CE_PC: u64 = 12;
    pub const RANDOM: u64 = 13;
    pub const GENIE: u64 = 14;
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer applied to `master + index · golden`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sensed positions of one block and their error against the truth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockSensing {
    pub positions: Vec<Position>,
    pub rmse: RmseReport,
}

/// Mean sum rates of one beamforming variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodRates {
    pub isac: f64,
    pub pc: f64,
    pub overall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialRates {
    pub proposed: PeriodRates,
    pub random: PeriodRates,
    pub genie: PeriodRates,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CeDiagnostics {
    pub stage: &'static str,
    pub iterations: usize,
    pub converged: bool,
    pub best_score: f64,
}

impl CeDiagnostics {
    fn of(stage: &'static str, o: &CeOutcome) -> Self {
        Self { stage, iterations: o.iterations, converged: o.converged, best_score: o.best_score }
    }
}

/// Outcome of [`run_trial`]. Equality ignores `elapsed`.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub users: Vec<Position>,
    pub block1: Option<BlockSensing>,
    pub block2: Option<BlockSensing>,
    pub rates: Option<TrialRates>,
    pub offsets: Option<PhaseOffsetGrid>,
    pub ce: Vec<CeDiagnostics>,
    /// Slots accounted for by the protocol.
    pub slots: usize,
    pub failure: Option<String>,
    pub elapsed: Duration,
}

impl PartialEq for TrialRecord {
    fn eq(&self, o: &Self) -> bool {
        self.seed == o.seed
            && self.users == o.users
            && self.block1 == o.block1
            && self.block2 == o.block2
            && self.rates == o.rates
            && self.offsets == o.offsets
            && self.ce == o.ce
            && self.slots == o.slots
            && self.failure == o.failure
    }
}

/// Users and channels of one seed.
struct Setup {
    scene: Scene,
    channels: ChannelSet,
}

fn setup(scenario: &Scenario, seed: u64) -> Result<Setup> {
    let users = scenario.place_users(&mut rng_for(seed, stream::USERS))?;
    let scene = scenario.scene(users);
    scene.validate()?;
    let channels = build_channels(&scene, &mut rng_for(seed, stream::CHANNELS))?;
    Ok(Setup { scene, channels })
}

fn sense_block(
    scenario: &Scenario,
    s: &Setup,
    theta1: &PhaseShiftConfig,
    slots: usize,
    first_slot: usize,
    streams: (u64, [u64; 2]),
    seed: u64,
    block: usize,
) -> Result<BlockSensing> {
    let symbols = generate_symbols(scenario.k_users, slots, &mut rng_for(seed, streams.0))?;
    let noise = NoiseModel::new(scenario.sigma2)?;
    let mut snaps = Vec::with_capacity(2);
    for (i, panel) in [2usize, 3].into_iter().enumerate() {
        let mut rng = rng_for(seed, streams.1[i]);
        snaps.push(receive_at_sub_irs(&s.channels, theta1, &symbols, scenario.rho, &noise, panel, first_slot, &mut rng)?);
    }
    let out = sense_locations(&snaps[0], &snaps[1], &s.scene, &scenario.micro, scenario.rho, scenario.sigma2, block)?;
    let report = rmse(&out.estimate.positions, &s.scene.users)?;
    Ok(BlockSensing { positions: out.estimate.positions, rmse: report })
}

/// Block-1 localization only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SenseRecord {
    pub seed: u64,
    pub users: Vec<Position>,
    pub block1: Option<BlockSensing>,
    pub failure: Option<String>,
}

/// Runs block 1 (random passive beam, τ_1 snapshots) and the sensing pipeline.
pub fn run_sensing(scenario: &Scenario, seed: u64) -> SenseRecord {
    let attempt = || -> Result<(Vec<Position>, BlockSensing)> {
        let s = setup(scenario, seed)?;
        let theta1 = PhaseShiftConfig::random(
            scenario.ce_isac.bits,
            s.channels.panel_elements(1),
            &mut rng_for(seed, stream::THETA_BLOCK1),
        )?;
        let b = sense_block(
            scenario,
            &s,
            &theta1,
            scenario.block1_slots,
            0,
            (stream::SYMBOLS_BLOCK1, stream::NOISE_BLOCK1),
            seed,
            1,
        )?;
        Ok((s.scene.users, b))
    };
    match attempt() {
        Ok((users, b)) => SenseRecord { seed, users, block1: Some(b), failure: None },
        Err(e) => SenseRecord {
            seed,
            users: scenario.place_users(&mut rng_for(seed, stream::USERS)).unwrap_or_default(),
            block1: None,
            failure: Some(format!("block 1: {e}")),
        },
    }
}

fn period_rates(scenario: &Scenario, isac: f64, pc: f64) -> PeriodRates {
    let t1 = scenario.isac_slots as f64;
    let t2 = scenario.pc_slots() as f64;
    PeriodRates { isac, pc, overall: (t1 * isac + t2 * pc) / (t1 + t2) }
}

fn true_sensed(ch: &ChannelSet) -> Result<[SensedChannelMagnitude; 3]> {
    Ok([
        SensedChannelMagnitude::from_true(ch, 1)?,
        SensedChannelMagnitude::from_true(ch, 2)?,
        SensedChannelMagnitude::from_true(ch, 3)?,
    ])
}

struct Partial {
    stage: &'static str,
    block1: Option<BlockSensing>,
    block2: Option<BlockSensing>,
    offsets: Option<PhaseOffsetGrid>,
    ce: Vec<CeDiagnostics>,
}

fn protocol(scenario: &Scenario, s: &Setup, seed: u64, p: &mut Partial) -> Result<TrialRates> {
    let ch = &s.channels;
    let k = scenario.k_users;
    let (rho, sigma2) = (scenario.rho, scenario.sigma2);
    let m1 = ch.panel_elements(1);
    let m_all = m1 + ch.panel_elements(2) + ch.panel_elements(3);
    let bits = scenario.ce_isac.bits;
    let mrc = mrc_combiner(ch.i2b[0].arrival_angles.u, scenario.bs_antennas, k)?;
    let (tau1, tau2) = (scenario.block1_slots, scenario.block2_slots());
    let (c_slots, t2) = (scenario.record_slots, scenario.pc_slots());

    // Block 1: random passive beam, MRC, sensing.
    let theta_b1 = PhaseShiftConfig::random(bits, m1, &mut rng_for(seed, stream::THETA_BLOCK1))?;
    p.stage = "block 1";
    let b1 = sense_block(scenario, s, &theta_b1, tau1, 0, (stream::SYMBOLS_BLOCK1, stream::NOISE_BLOCK1), seed, 1)?;
    let est1 = b1.positions.clone();
    p.block1 = Some(b1);

    // Block 2: designed passive beam from block-1 locations, concurrent sensing.
    p.stage = "block 2";
    let sensed1 = sensed_channel(&est1, 1, &s.scene)?;
    let isac = ce_optimize_isac(&sensed1, &ch.i2b[0], &mrc, &scenario.ce_isac, rho, sigma2, &mut rng_for(seed, stream::CE_ISAC))?;
    p.ce.push(CeDiagnostics::of("isac", &isac.outcome));
    let b2 = sense_block(scenario, s, &isac.theta, tau2, tau1, (stream::SYMBOLS_BLOCK2, stream::NOISE_BLOCK2), seed, 2)?;
    let est2 = b2.positions.clone();
    p.block2 = Some(b2);

    let r_b1 = sum_rate(ch, &mrc, &theta_b1, rho, sigma2, Period::Isac)?;
    let r_b2 = sum_rate(ch, &mrc, &isac.theta, rho, sigma2, Period::Isac)?;
    let isac_proposed = (tau1 as f64 * r_b1 + tau2 as f64 * r_b2) / (tau1 + tau2) as f64;

    // PC: power records, offset recovery, joint design.
    p.stage = "pc";
    let records = record_powers_pc(ch, &isac.theta, &mrc, c_slots, rho, sigma2, &mut rng_for(seed, stream::RECORDS))?;
    let sensed = [
        sensed_channel(&est2, 1, &s.scene)?,
        sensed_channel(&est2, 2, &s.scene)?,
        sensed_channel(&est2, 3, &s.scene)?,
    ];
    let offsets = estimate_phase_offsets(
        &records,
        &sensed,
        &ch.i2b,
        &mrc,
        scenario.offset_bits,
        rho,
        sigma2,
        scenario.offset_budget,
    )?;
    let corrected = apply_offsets(&sensed, &offsets);
    let pc_info = corrected.clone();
    p.offsets = Some(offsets);
    let pc = ce_optimize_pc(&corrected, &ch.i2b, &scenario.ce_pc, rho, sigma2, &mut rng_for(seed, stream::CE_PC))?;
    p.ce.push(CeDiagnostics::of("pc", &pc.outcome));
    let mut r_records = 0.0;
    for r in &records {
        r_records += sum_rate(ch, &mrc, &r.theta, rho, sigma2, Period::Pc)?;
    }
    let r_pc = sum_rate(ch, &pc.w, &pc.theta, rho, sigma2, Period::Pc)?;
    let pc_proposed = (r_records + (t2 - c_slots) as f64 * r_pc) / t2 as f64;

    // Random phases, one draw per period, with the same channel knowledge as the proposed design.
    p.stage = "baselines";
    let mut rng = rng_for(seed, stream::RANDOM);
    let rand_isac = PhaseShiftConfig::random(bits, m1, &mut rng)?;
    let rand_pc = PhaseShiftConfig::random(bits, m_all, &mut rng)?;
    let isac_random = sum_rate(ch, &mrc, &rand_isac, rho, sigma2, Period::Isac)?;
    let w_rand = zf_from_sensed(&pc_info, &ch.i2b, &rand_pc).unwrap_or_else(|_| mrc.clone());
    let pc_random = sum_rate(ch, &w_rand, &rand_pc, rho, sigma2, Period::Pc)?;

    // Genie: fine phases designed on the true channels, no sensing or recording overhead.
    let truth = true_sensed(ch)?;
    let mut rng = rng_for(seed, stream::GENIE);
    let g_isac = ce_optimize_isac(&truth[0], &ch.i2b[0], &mrc, &scenario.ce_genie_isac, rho, sigma2, &mut rng)?;
    p.ce.push(CeDiagnostics::of("genie_isac", &g_isac.outcome));
    let g_pc = ce_optimize_pc(&truth, &ch.i2b, &scenario.ce_genie_pc, rho, sigma2, &mut rng)?;
    p.ce.push(CeDiagnostics::of("genie_pc", &g_pc.outcome));
    let isac_genie = sum_rate(ch, &mrc, &g_isac.theta, rho, sigma2, Period::Isac)?;
    let pc_genie = sum_rate(ch, &g_pc.w, &g_pc.theta, rho, sigma2, Period::Pc)?;

    Ok(TrialRates {
        proposed: period_rates(scenario, isac_proposed, pc_proposed),
        random: period_rates(scenario, isac_random, pc_random),
        genie: period_rates(scenario, isac_genie, pc_genie),
    })
}

/// Full protocol for one seed. Failures are recorded, never propagated.
pub fn run_trial(scenario: &Scenario, seed: u64) -> TrialRecord {
    let start = Instant::now();
    let mut p = Partial { stage: "setup", block1: None, block2: None, offsets: None, ce: Vec::new() };
    let slots = scenario.block1_slots + scenario.block2_slots() + scenario.record_slots
        + (scenario.pc_slots() - scenario.record_slots);
    let (users, outcome) = match setup(scenario, seed) {
        Ok(s) => {
            let r = protocol(scenario, &s, seed, &mut p);
            (s.scene.users, r)
        }
        Err(e) => (scenario.place_users(&mut rng_for(seed, stream::USERS)).unwrap_or_default(), Err(e)),
    };
    let (rates, failure) = match outcome {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(format!("{}: {e}", p.stage))),
    };
    TrialRecord {
        seed,
        users,
        block1: p.block1,
        block2: p.block2,
        rates,
        offsets: p.offsets,
        ce: p.ce,
        slots,
        failure,
        elapsed: start.elapsed(),
    }
}
