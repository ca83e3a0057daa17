//! Combiner and phase-shift design from sensed user locations.

mod ce;
mod pc;

pub use ce::{cross_entropy, CeOutcome, CeParams, CeState};
pub use pc::{
    apply_offsets, ce_optimize_pc, estimate_phase_offsets, offset_objective, record_powers_pc, PcDesign,
    PhaseOffsetGrid, PowerRecord, zf_from_sensed,
};

use std::f64::consts::PI;

use rand::Rng;

use crate::error::{IsacError, Result};
use crate::geometry::{path_gain_magnitude, steering_ula, steering_ura, ChannelSet, EffectiveAngles, Position, RankOneLink, Scene};
use crate::linalg::{condition_number, CMatrix, CVector, C64};
use crate::signal::{CascadePanel, PhaseShiftConfig};

/// `{2πl / 2^b}` for l = 0..2^b.
pub fn phase_alphabet(bits: u32) -> Result<Vec<f64>> {
    if bits == 0 || bits > 16 {
        return Err(IsacError::InvalidConfiguration(format!("{bits}-bit alphabet")));
    }
    let n = 1usize << bits;
    Ok((0..n).map(|l| 2.0 * PI * l as f64 / n as f64).collect())
}

/// Every column is the unit-norm BS response toward panel 1.
pub fn mrc_combiner(u_i2b1: f64, bs_antennas: usize, k_users: usize) -> Result<CMatrix> {
    let a = steering_ula(u_i2b1, bs_antennas)? / C64::new((bs_antennas as f64).sqrt(), 0.0);
    Ok(CMatrix::from_fn(bs_antennas, k_users, |r, _| a[r]))
}

/// Normalized zero-forcing combiner: `w_kᴴ h_j = 0` for `j ≠ k`.
pub fn zf_combiner(heq: &CMatrix) -> Result<CMatrix> {
    let (n, k) = heq.shape();
    if k == 0 || k > n {
        return Err(IsacError::InvalidDimension(format!("zero-forcing a {n}x{k} channel")));
    }
    let qr = heq.clone().qr();
    let r = qr.r();
    let condition = condition_number(&r);
    if !(condition < 1e10) {
        return Err(IsacError::IllConditioned { what: "effective channel", condition });
    }
    let rinv = r
        .solve_upper_triangular(&CMatrix::identity(k, k))
        .ok_or(IsacError::IllConditioned { what: "effective channel", condition })?;
    let mut w = qr.q() * rinv.adjoint();
    for mut col in w.column_iter_mut() {
        let norm = col.norm();
        col /= C64::new(norm, 0.0);
    }
    Ok(w)
}

/// Magnitude-only channel surrogate of one sensed user.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedUser {
    pub magnitude: f64,
    pub angles: EffectiveAngles,
    pub distance: f64,
}

/// Surrogate channels `|α̂| b(û, v̂)` of all users at one panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SensedChannelMagnitude {
    pub panel: usize,
    pub users: Vec<SensedUser>,
    pub vectors: Vec<CVector>,
}

impl SensedChannelMagnitude {
    /// The true channel vectors, phases included.
    pub fn from_true(channels: &ChannelSet, panel: usize) -> Result<Self> {
        let links = channels.u2i.get(panel.wrapping_sub(1)).ok_or(IsacError::InvalidPanel(panel))?;
        Ok(Self {
            panel,
            users: links
                .iter()
                .map(|l| SensedUser { magnitude: l.gain.norm(), angles: l.arrival_angles, distance: l.distance })
                .collect(),
            vectors: links.iter().map(RankOneLink::vector).collect(),
        })
    }

    pub fn cascade(&self, i2b: &RankOneLink) -> Result<CascadePanel> {
        CascadePanel::new(i2b, &self.vectors)
    }
}

/// Builds `ĥ_abs` at `panel` from sensed user positions.
pub fn sensed_channel(positions: &[Position], panel: usize, scene: &Scene) -> Result<SensedChannelMagnitude> {
    let q = scene.panel_position(panel)?;
    let geo = scene.panel_geometry(panel)?;
    let mut users = Vec::with_capacity(positions.len());
    let mut vectors = Vec::with_capacity(positions.len());
    for p in positions {
        if !p.is_finite() {
            return Err(IsacError::InvalidInput(format!("sensed position {p:?}")));
        }
        let angles = EffectiveAngles::of_link(p, q)?;
        let distance = p.distance(q);
        let magnitude = path_gain_magnitude(distance, scene.path_loss.exp_u2i, &scene.path_loss)?;
        vectors.push(steering_ura(angles.u, angles.v, geo)? * C64::new(magnitude, 0.0));
        users.push(SensedUser { magnitude, angles, distance });
    }
    Ok(SensedChannelMagnitude { panel, users, vectors })
}

/// Per-panel coefficient rows with a lookup table of reflection values.
pub(crate) struct FastCascade {
    pub bs: Vec<CVector>,
    /// `[panel][user]` rows of `conj(b_D,m) ĥ_m`.
    pub coeffs: Vec<Vec<Vec<C64>>>,
    pub offsets: Vec<usize>,
    pub table: Vec<C64>,
}

impl FastCascade {
    pub fn new(panels: &[CascadePanel], bits: u32) -> Result<Self> {
        let table = phase_alphabet(bits)?.into_iter().map(|p| C64::from_polar(1.0, p)).collect();
        let mut offsets = Vec::with_capacity(panels.len());
        let mut off = 0;
        for p in panels {
            offsets.push(off);
            off += p.elements();
        }
        Ok(Self {
            bs: panels.iter().map(|p| p.bs_response.clone()).collect(),
            coeffs: panels
                .iter()
                .map(|p| p.coeffs.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
            offsets,
            table,
        })
    }

    pub fn elements(&self) -> usize {
        self.offsets.last().copied().unwrap_or(0) + self.coeffs.last().and_then(|p| p.first()).map_or(0, Vec::len)
    }

    pub fn k_users(&self) -> usize {
        self.coeffs.first().map_or(0, Vec::len)
    }

    /// `Σ_m coeff_k,m e^{jϑ_m}` for panel `p` and user `k`.
    pub fn gain(&self, p: usize, k: usize, idx: &[u16]) -> C64 {
        let row = &self.coeffs[p][k];
        let sel = &idx[self.offsets[p]..self.offsets[p] + row.len()];
        let mut acc = C64::new(0.0, 0.0);
        for (c, &i) in row.iter().zip(sel) {
            acc += c * self.table[i as usize];
        }
        acc
    }

    pub fn effective(&self, idx: &[u16]) -> CMatrix {
        let n = self.bs[0].len();
        let k = self.k_users();
        let mut h = CMatrix::zeros(n, k);
        for p in 0..self.bs.len() {
            for u in 0..k {
                let g = self.gain(p, u, idx);
                for r in 0..n {
                    h[(r, u)] += self.bs[p][r] * g;
                }
            }
        }
        h
    }
}

/// Designed panel-1 beam of the ISAC period.
#[derive(Debug, Clone, PartialEq)]
pub struct IsacDesign {
    pub theta: PhaseShiftConfig,
    pub outcome: CeOutcome,
}

/// Cross-entropy maximization of the ISAC sum rate over panel-1 phases.
pub fn ce_optimize_isac<R: Rng + ?Sized>(
    sensed: &SensedChannelMagnitude,
    i2b1: &RankOneLink,
    w: &CMatrix,
    params: &CeParams,
    rho: f64,
    sigma2: f64,
    rng: &mut R,
) -> Result<IsacDesign> {
    let panel = sensed.cascade(i2b1)?;
    let k = panel.coeffs.nrows();
    if w.ncols() != k || w.nrows() != panel.bs_response.len() {
        return Err(IsacError::InvalidDimension(format!("combiner {:?} for {k} users", w.shape())));
    }
    let fast = FastCascade::new(std::slice::from_ref(&panel), params.bits)?;
    let c: Vec<C64> = (0..k).map(|j| w.column(j).dotc(&panel.bs_response)).collect();
    let mut z = vec![C64::new(0.0, 0.0); k];
    let outcome = ce::cross_entropy(
        panel.elements(),
        params,
        |idx| {
            for (u, zu) in z.iter_mut().enumerate() {
                *zu = fast.gain(0, u, idx);
            }
            let g = CMatrix::from_fn(k, k, |a, b| c[a] * z[b]);
            crate::signal::rate_from_gains(&g, rho, sigma2)
        },
        rng,
    )?;
    let theta = PhaseShiftConfig::new(params.bits, outcome.best.clone())?;
    Ok(IsacDesign { theta, outcome })
}
