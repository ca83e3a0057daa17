//! Pure-communication period: relative phase recovery and joint design.

use rand::Rng;
use serde::Serialize;

use super::ce::{cross_entropy, CeOutcome, CeParams};
use super::{phase_alphabet, zf_combiner, FastCascade, SensedChannelMagnitude};
use crate::error::{IsacError, Result};
use crate::geometry::{ChannelSet, RankOneLink};
use crate::linalg::{CMatrix, C64};
use crate::signal::{rate_from_gains, CascadeModel, CascadePanel, PhaseShiftConfig};

/// One received-power measurement under a known stacked phase configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerRecord {
    pub theta: PhaseShiftConfig,
    pub power: f64,
}

/// `Σ_k ρ|w_kᴴ H Θ h_k|² + σ²` for every column of `heq`.
fn received_power(heq: &CMatrix, w: &CMatrix, rho: f64, sigma2: f64) -> f64 {
    (0..heq.ncols()).map(|k| rho * w.column(k).dotc(&heq.column(k)).norm_sqr()).sum::<f64>() + sigma2
}

/// Records received power over `slots` slots with panel 1 frozen and panels 2–3 random.
pub fn record_powers_pc<R: Rng + ?Sized>(
    channels: &ChannelSet,
    theta1: &PhaseShiftConfig,
    w: &CMatrix,
    slots: usize,
    rho: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<Vec<PowerRecord>> {
    let model = CascadeModel::pc(channels)?;
    let m23 = channels.panel_elements(2) + channels.panel_elements(3);
    let mut out = Vec::with_capacity(slots);
    for _ in 0..slots {
        let rest = PhaseShiftConfig::random(theta1.bits, m23, rng)?;
        let theta = PhaseShiftConfig::stack(&[theta1, &rest])?;
        let heq = model.effective(&theta.reflection())?;
        out.push(PowerRecord { power: received_power(&heq, w, rho, sigma2), theta });
    }
    Ok(out)
}

/// Estimated relative phases of panels 2 and 3 with respect to panel 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseOffsetGrid {
    pub bits: u32,
    pub grid: Vec<f64>,
    /// `[panel-2 index, panel-3 index]` into `grid` for each user.
    pub indices: Vec<[u16; 2]>,
    /// Exhaustive search (true) or coordinate descent (false).
    pub exhaustive: bool,
    pub objective: f64,
}

impl PhaseOffsetGrid {
    /// `Δ̂` for `panel` ∈ {2, 3}; zero for panel 1.
    pub fn offset(&self, panel: usize, user: usize) -> f64 {
        match panel {
            2 | 3 => self.grid[self.indices[user][panel - 2] as usize],
            _ => 0.0,
        }
    }
}

/// Multiplies panel-2/3 surrogates by `e^{jΔ̂}`.
pub fn apply_offsets(sensed: &[SensedChannelMagnitude; 3], offsets: &PhaseOffsetGrid) -> [SensedChannelMagnitude; 3] {
    let mut out = sensed.clone();
    for (p, s) in out.iter_mut().enumerate().skip(1) {
        for (k, v) in s.vectors.iter_mut().enumerate() {
            *v *= C64::from_polar(1.0, offsets.offset(p + 1, k));
        }
    }
    out
}

/// Precomputed per-user predicted powers over the offset grid.
struct OffsetTables {
    levels: usize,
    /// `[user][slot][a * levels + b]`.
    tables: Vec<Vec<Vec<f64>>>,
    measured: Vec<f64>,
    sigma2: f64,
}

impl OffsetTables {
    fn objective(&self, choice: &[usize]) -> f64 {
        (0..self.measured.len())
            .map(|t| {
                let predicted: f64 = choice.iter().enumerate().map(|(k, &c)| self.tables[k][t][c]).sum::<f64>() + self.sigma2;
                (predicted - self.measured[t]).abs()
            })
            .sum()
    }
}

fn build_tables(
    records: &[PowerRecord],
    sensed: &[SensedChannelMagnitude; 3],
    i2b: &[RankOneLink],
    w: &CMatrix,
    bits: u32,
    rho: f64,
    sigma2: f64,
) -> Result<OffsetTables> {
    if records.is_empty() {
        return Err(IsacError::InsufficientData("no power records".into()));
    }
    if i2b.len() != 3 {
        return Err(IsacError::InvalidInput("three panel-to-BS links required".into()));
    }
    let panels: Vec<CascadePanel> = sensed.iter().zip(i2b).map(|(s, l)| s.cascade(l)).collect::<Result<_>>()?;
    let k = panels[0].coeffs.nrows();
    if w.ncols() != k {
        return Err(IsacError::InvalidDimension(format!("combiner has {} columns for {k} users", w.ncols())));
    }
    let total: usize = panels.iter().map(CascadePanel::elements).sum();
    let grid: Vec<C64> = phase_alphabet(bits)?.into_iter().map(|p| C64::from_polar(1.0, p)).collect();
    let levels = grid.len();
    let combined: Vec<Vec<C64>> = panels
        .iter()
        .map(|p| (0..k).map(|u| w.column(u).dotc(&p.bs_response)).collect())
        .collect();

    let mut tables = vec![Vec::with_capacity(records.len()); k];
    for rec in records {
        if rec.theta.len() != total {
            return Err(IsacError::InvalidDimension(format!("record covers {} of {total} elements", rec.theta.len())));
        }
        let xi = rec.theta.reflection();
        let mut off = 0;
        let mut s = vec![vec![C64::new(0.0, 0.0); k]; 3];
        for (p, panel) in panels.iter().enumerate() {
            let g = panel.gains(&xi[off..off + panel.elements()]);
            off += panel.elements();
            for u in 0..k {
                s[p][u] = combined[p][u] * g[u];
            }
        }
        for (u, table) in tables.iter_mut().enumerate() {
            let mut row = Vec::with_capacity(levels * levels);
            for a in &grid {
                for b in &grid {
                    row.push(rho * (s[0][u] + a * s[1][u] + b * s[2][u]).norm_sqr());
                }
            }
            table.push(row);
        }
    }
    Ok(OffsetTables { levels, tables, measured: records.iter().map(|r| r.power).collect(), sigma2 })
}

/// `Σ_t |P̌(D, Θ(t)) − P(Θ(t))|` for explicit offset indices.
pub fn offset_objective(
    records: &[PowerRecord],
    sensed: &[SensedChannelMagnitude; 3],
    i2b: &[RankOneLink],
    w: &CMatrix,
    bits: u32,
    indices: &[[u16; 2]],
    rho: f64,
    sigma2: f64,
) -> Result<f64> {
    let t = build_tables(records, sensed, i2b, w, bits, rho, sigma2)?;
    let choice: Vec<usize> = indices.iter().map(|c| c[0] as usize * t.levels + c[1] as usize).collect();
    Ok(t.objective(&choice))
}

/// Grid search for the relative phases that best explain the recorded powers.
pub fn estimate_phase_offsets(
    records: &[PowerRecord],
    sensed: &[SensedChannelMagnitude; 3],
    i2b: &[RankOneLink],
    w: &CMatrix,
    bits: u32,
    rho: f64,
    sigma2: f64,
    budget: u64,
) -> Result<PhaseOffsetGrid> {
    let tables = build_tables(records, sensed, i2b, w, bits, rho, sigma2)?;
    let k = tables.tables.len();
    let per_user = tables.levels * tables.levels;
    let space = (per_user as f64).powi(k as i32);
    let (choice, objective, exhaustive) = if space <= budget as f64 {
        let total = per_user.pow(k as u32);
        let mut choice = vec![0usize; k];
        let mut best = (f64::INFINITY, choice.clone());
        for code in 0..total {
            let mut c = code;
            for slot in choice.iter_mut() {
                *slot = c % per_user;
                c /= per_user;
            }
            let f = tables.objective(&choice);
            if f < best.0 {
                best = (f, choice.clone());
            }
        }
        (best.1, best.0, true)
    } else {
        let mut choice = vec![0usize; k];
        let mut current = tables.objective(&choice);
        for _ in 0..3 {
            for u in 0..k {
                let keep = choice[u];
                let mut best = (current, keep);
                for c in 0..per_user {
                    choice[u] = c;
                    let f = tables.objective(&choice);
                    if f < best.0 {
                        best = (f, c);
                    }
                }
                choice[u] = best.1;
                current = best.0;
            }
        }
        (choice, current, false)
    };
    let levels = tables.levels;
    Ok(PhaseOffsetGrid {
        bits,
        grid: phase_alphabet(bits)?,
        indices: choice.iter().map(|&c| [(c / levels) as u16, (c % levels) as u16]).collect(),
        exhaustive,
        objective,
    })
}

/// Designed phases of all panels with the matching zero-forcing combiner.
#[derive(Debug, Clone, PartialEq)]
pub struct PcDesign {
    pub theta: PhaseShiftConfig,
    pub w: CMatrix,
    pub outcome: CeOutcome,
}

/// Cross-entropy maximization of the zero-forcing sum rate over all panels.
pub fn ce_optimize_pc<R: Rng + ?Sized>(
    sensed: &[SensedChannelMagnitude; 3],
    i2b: &[RankOneLink],
    params: &CeParams,
    rho: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<PcDesign> {
    if i2b.len() != 3 {
        return Err(IsacError::InvalidInput("three panel-to-BS links required".into()));
    }
    let panels: Vec<CascadePanel> = sensed.iter().zip(i2b).map(|(s, l)| s.cascade(l)).collect::<Result<_>>()?;
    let fast = FastCascade::new(&panels, params.bits)?;
    let outcome = cross_entropy(
        fast.elements(),
        params,
        |idx| {
            let heq = fast.effective(idx);
            match zf_combiner(&heq) {
                Ok(w) => rate_from_gains(&(w.adjoint() * heq), rho, sigma2),
                Err(_) => 0.0,
            }
        },
        rng,
    )?;
    let theta = PhaseShiftConfig::new(params.bits, outcome.best.clone())?;
    let w = zf_combiner(&fast.effective(&outcome.best))?;
    Ok(PcDesign { theta, w, outcome })
}

/// Zero-forcing combiner for `theta` designed on the sensed channels.
pub fn zf_from_sensed(sensed: &[SensedChannelMagnitude; 3], i2b: &[RankOneLink], theta: &PhaseShiftConfig) -> Result<CMatrix> {
    if i2b.len() != 3 {
        return Err(IsacError::InvalidInput("three panel-to-BS links required".into()));
    }
    let panels: Vec<CascadePanel> = sensed.iter().zip(i2b).map(|(s, l)| s.cascade(l)).collect::<Result<_>>()?;
    let fast = FastCascade::new(&panels, theta.bits)?;
    if theta.indices.len() != fast.elements() {
        return Err(IsacError::InvalidDimension(format!("{} phases for {} elements", theta.indices.len(), fast.elements())));
    }
    zf_combiner(&fast.effective(&theta.indices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamforming::{mrc_combiner, sensed_channel};
    use crate::geometry::{build_channels, PanelGeometry, PathLossModel, Position, Scene};
    use crate::signal::sum_rate_effective;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scene(users: Vec<Position>, side1: usize, side23: usize) -> Scene {
        Scene {
            bs: Position::new(43.23, 0.0, 20.0),
            panels: [Position::new(-4.0, 0.0, 5.0), Position::new(-4.0, -10.0, 7.0), Position::new(-4.0, 10.0, 9.0)],
            panel_geometry: [
                PanelGeometry::square(side1).unwrap(),
                PanelGeometry::square(side23).unwrap(),
                PanelGeometry::square(side23).unwrap(),
            ],
            bs_antennas: 8,
            users,
            path_loss: PathLossModel::default(),
        }
    }

    #[test]
    fn noiseless_records_match_direct_power() {
        let sc = scene(vec![Position::new(3.0, -4.0, 0.0)], 4, 3);
        let ch = build_channels(&sc, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let th1 = PhaseShiftConfig::random(3, 16, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let w = mrc_combiner(ch.i2b[0].arrival_angles.u, 8, 1).unwrap();
        let recs = record_powers_pc(&ch, &th1, &w, 4, 0.1, 1e-11, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(recs.len(), 4);
        for r in &recs {
            assert_eq!(&r.theta.indices[..16], &th1.indices[..]);
            let heq = CascadeModel::pc(&ch).unwrap().effective(&r.theta.reflection()).unwrap();
            let want = 0.1 * w.column(0).dotc(&heq.column(0)).norm_sqr() + 1e-11;
            assert!((r.power - want).abs() < 1e-12 * want);
        }
        let again = record_powers_pc(&ch, &th1, &w, 4, 0.1, 1e-11, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(recs, again);
        assert!(record_powers_pc(&ch, &th1, &w, 0, 0.1, 1e-11, &mut ChaCha8Rng::seed_from_u64(3)).unwrap().is_empty());
    }

    /// Channels whose panel-2/3 phases sit exactly `grid` steps from panel 1.
    fn aligned_instance(k: usize, bits: u32, seed: u64) -> (ChannelSet, [SensedChannelMagnitude; 3], Vec<[u16; 2]>, Scene) {
        let users: Vec<Position> = [Position::new(3.0, -4.0, 0.0), Position::new(7.0, 3.0, 0.0)][..k].to_vec();
        let sc = scene(users.clone(), 6, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ch = build_channels(&sc, &mut rng).unwrap();
        let levels = 1u16 << bits;
        let truth: Vec<[u16; 2]> = (0..k).map(|_| [rng.random_range(0..levels), rng.random_range(0..levels)]).collect();
        let grid = phase_alphabet(bits).unwrap();
        for u in 0..k {
            let psi1 = ch.u2i[0][u].gain.arg();
            for p in 1..3 {
                let mag = ch.u2i[p][u].gain.norm();
                ch.u2i[p][u].gain = C64::from_polar(mag, psi1 + grid[truth[u][p - 1] as usize]);
            }
        }
        let sensed = [
            sensed_channel(&users, 1, &sc).unwrap(),
            sensed_channel(&users, 2, &sc).unwrap(),
            sensed_channel(&users, 3, &sc).unwrap(),
        ];
        (ch, sensed, truth, sc)
    }

    #[test]
    fn exact_offset_recovery_single_user() {
        let (ch, sensed, truth, _) = aligned_instance(1, 4, 5);
        let th1 = PhaseShiftConfig::random(3, 36, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        let w = mrc_combiner(ch.i2b[0].arrival_angles.u, 8, 1).unwrap();
        let recs = record_powers_pc(&ch, &th1, &w, 4, 0.1, 1e-11, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let est = estimate_phase_offsets(&recs, &sensed, &ch.i2b, &w, 4, 0.1, 1e-11, 1_000_000).unwrap();
        assert!(est.exhaustive);
        assert_eq!(est.indices, truth);
    }

    #[test]
    fn returned_offset_is_enumeration_minimum() {
        let (ch, sensed, _, _) = aligned_instance(1, 3, 8);
        let th1 = PhaseShiftConfig::random(3, 36, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let w = mrc_combiner(ch.i2b[0].arrival_angles.u, 8, 1).unwrap();
        let recs = record_powers_pc(&ch, &th1, &w, 4, 0.1, 1e-11, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        let est = estimate_phase_offsets(&recs, &sensed, &ch.i2b, &w, 2, 0.1, 1e-11, 1_000_000).unwrap();
        let mut best = f64::INFINITY;
        for a in 0..4u16 {
            for b in 0..4u16 {
                best = best.min(offset_objective(&recs, &sensed, &ch.i2b, &w, 2, &[[a, b]], 0.1, 1e-11).unwrap());
            }
        }
        assert_eq!(est.objective, best);
        let at = offset_objective(&recs, &sensed, &ch.i2b, &w, 2, &est.indices, 0.1, 1e-11).unwrap();
        assert_eq!(at, best);
    }

    #[test]
    fn offset_argmin_invariant_to_consistent_power_scaling() {
        let (ch, sensed, _, _) = aligned_instance(2, 2, 11);
        let th1 = PhaseShiftConfig::random(3, 36, &mut ChaCha8Rng::seed_from_u64(12)).unwrap();
        let w = mrc_combiner(ch.i2b[0].arrival_angles.u, 8, 2).unwrap();
        let a_recs = record_powers_pc(&ch, &th1, &w, 4, 0.1, 1e-11, &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
        let b_recs = record_powers_pc(&ch, &th1, &w, 4, 0.4, 1e-11, &mut ChaCha8Rng::seed_from_u64(13)).unwrap();
        let a = estimate_phase_offsets(&a_recs, &sensed, &ch.i2b, &w, 2, 0.1, 1e-11, 1_000_000).unwrap();
        let b = estimate_phase_offsets(&b_recs, &sensed, &ch.i2b, &w, 2, 0.4, 1e-11, 1_000_000).unwrap();
        assert_eq!(a.indices, b.indices);
    }

    #[test]
    fn offsets_need_records_and_fall_back_beyond_budget() {
        let (ch, sensed, truth, _) = aligned_instance(2, 2, 14);
        let w = mrc_combiner(ch.i2b[0].arrival_angles.u, 8, 2).unwrap();
        assert!(matches!(
            estimate_phase_offsets(&[], &sensed, &ch.i2b, &w, 2, 0.1, 1e-11, 10),
            Err(IsacError::InsufficientData(_))
        ));
        let th1 = PhaseShiftConfig::random(3, 36, &mut ChaCha8Rng::seed_from_u64(15)).unwrap();
        let recs = record_powers_pc(&ch, &th1, &w, 4, 0.1, 1e-11, &mut ChaCha8Rng::seed_from_u64(16)).unwrap();
        let est = estimate_phase_offsets(&recs, &sensed, &ch.i2b, &w, 2, 0.1, 1e-11, 10).unwrap();
        assert!(!est.exhaustive);
        let at_truth = offset_objective(&recs, &sensed, &ch.i2b, &w, 2, &truth, 0.1, 1e-11).unwrap();
        assert!(est.objective >= at_truth);
    }

    #[test]
    fn single_user_pc_is_snr_maximization() {
        let sc = scene(vec![Position::new(3.0, -4.0, 0.0)], 2, 1);
        let ch = build_channels(&sc, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
        let sensed = [
            SensedChannelMagnitude::from_true(&ch, 1).unwrap(),
            SensedChannelMagnitude::from_true(&ch, 2).unwrap(),
            SensedChannelMagnitude::from_true(&ch, 3).unwrap(),
        ];
        let params = CeParams { samples: 60, elites: 6, kappa: 1e-9, max_iterations: 50, bits: 1 };
        let d = ce_optimize_pc(&sensed, &ch.i2b, &params, 0.1, 1e-11, &mut ChaCha8Rng::seed_from_u64(18)).unwrap();
        let model = CascadeModel::pc(&ch).unwrap();
        let mut best = 0.0f64;
        for code in 0..64u32 {
            let idx: Vec<u16> = (0..6).map(|e| ((code >> e) & 1) as u16).collect();
            let h = model.effective(&PhaseShiftConfig::new(1, idx).unwrap().reflection()).unwrap();
            best = best.max((1.0 + 0.1 * h.column(0).norm_squared() / 1e-11).log2());
        }
        assert!((d.outcome.best_score - best).abs() < 1e-9);
        let h = model.effective(&d.theta.reflection()).unwrap();
        let mf = h.column(0) / C64::new(h.column(0).norm(), 0.0);
        assert!((d.w.column(0) - mf).norm() < 1e-9);
        assert!((sum_rate_effective(&h, &d.w, 0.1, 1e-11).unwrap() - best).abs() < 1e-9);
    }

    #[test]
    fn full_elite_pc_update_is_empirical() {
        let sc = scene(vec![Position::new(3.0, -4.0, 0.0), Position::new(6.0, 3.0, 0.0)], 2, 1);
        let ch = build_channels(&sc, &mut ChaCha8Rng::seed_from_u64(19)).unwrap();
        let sensed = [
            SensedChannelMagnitude::from_true(&ch, 1).unwrap(),
            SensedChannelMagnitude::from_true(&ch, 2).unwrap(),
            SensedChannelMagnitude::from_true(&ch, 3).unwrap(),
        ];
        let params = CeParams { samples: 16, elites: 16, kappa: 1e-9, max_iterations: 1, bits: 1 };
        let d = ce_optimize_pc(&sensed, &ch.i2b, &params, 0.1, 1e-11, &mut ChaCha8Rng::seed_from_u64(20)).unwrap();
        for m in 0..6 {
            let col = d.outcome.state.column(m);
            assert!((col[0] * 16.0).fract() == 0.0 && (col[0] + col[1] - 1.0).abs() < 1e-12);
        }
    }
}
