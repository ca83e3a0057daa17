//! Transmitted symbols, received samples and achievable rates.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{IsacError, Result};
use crate::geometry::{ChannelSet, RankOneLink};
use crate::linalg::{CMatrix, CVector, C64};

/// Unit-modulus symbols, one row per user.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolBlock {
    pub samples: CMatrix,
}

impl SymbolBlock {
    pub fn k_users(&self) -> usize {
        self.samples.nrows()
    }

    pub fn slots(&self) -> usize {
        self.samples.ncols()
    }

    /// Columns `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> SymbolBlock {
        SymbolBlock { samples: self.samples.columns(start, len).into_owned() }
    }
}

/// Uniform-random QPSK streams.
pub fn generate_symbols<R: Rng + ?Sized>(k_users: usize, slots: usize, rng: &mut R) -> Result<SymbolBlock> {
    if k_users == 0 || slots == 0 {
        return Err(IsacError::InvalidDimension(format!("symbol block {k_users}x{slots}")));
    }
    let mut samples = CMatrix::zeros(k_users, slots);
    for t in 0..slots {
        for k in 0..k_users {
            let q = rng.random_range(0..4u8) as f64;
            samples[(k, t)] = C64::from_polar(1.0, PI / 4.0 + q * PI / 2.0);
        }
    }
    Ok(SymbolBlock { samples })
}

/// Quantized phase shifts of one or more stacked panels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseShiftConfig {
    pub bits: u32,
    pub indices: Vec<u16>,
}

impl PhaseShiftConfig {
    pub fn new(bits: u32, indices: Vec<u16>) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(IsacError::InvalidConfiguration(format!("{bits}-bit phase shifters")));
        }
        let levels = 1u32 << bits;
        if let Some(bad) = indices.iter().find(|&&i| u32::from(i) >= levels) {
            return Err(IsacError::InvalidInput(format!("phase index {bad} outside {levels} levels")));
        }
        Ok(Self { bits, indices })
    }

    pub fn zeros(bits: u32, elements: usize) -> Result<Self> {
        Self::new(bits, vec![0; elements])
    }

    pub fn random<R: Rng + ?Sized>(bits: u32, elements: usize, rng: &mut R) -> Result<Self> {
        let levels = 1u32 << bits.min(16);
        Self::new(bits, (0..elements).map(|_| rng.random_range(0..levels) as u16).collect())
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn phases(&self) -> Vec<f64> {
        let step = 2.0 * PI / f64::from(1u32 << self.bits);
        self.indices.iter().map(|&i| f64::from(i) * step).collect()
    }

    /// Reflection coefficients `e^{jϑ}`.
    pub fn reflection(&self) -> Vec<C64> {
        self.phases().into_iter().map(|p| C64::from_polar(1.0, p)).collect()
    }

    /// Concatenation `[self; others...]` at a common bit depth.
    pub fn stack(parts: &[&PhaseShiftConfig]) -> Result<Self> {
        let bits = parts.first().map(|p| p.bits).ok_or_else(|| IsacError::InvalidInput("nothing to stack".into()))?;
        if parts.iter().any(|p| p.bits != bits) {
            return Err(IsacError::InvalidInput("mixed bit depths".into()));
        }
        Self::new(bits, parts.iter().flat_map(|p| p.indices.iter().copied()).collect())
    }
}

/// Samples recorded by a semi-passive panel.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotBlock {
    pub samples: CMatrix,
    pub panel: usize,
    pub first_slot: usize,
}

impl SnapshotBlock {
    pub fn slots(&self) -> usize {
        self.samples.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(IsacError::InvalidConfiguration(format!("noise variance {variance}")));
        }
        Ok(Self { variance })
    }
}

/// Circularly symmetric Gaussian samples with variance `variance` per entry.
pub fn complex_awgn<R: Rng + ?Sized>(rows: usize, cols: usize, variance: f64, rng: &mut R) -> CMatrix {
    let s = (variance / 2.0).sqrt();
    let mut m = CMatrix::zeros(rows, cols);
    for c in 0..cols {
        for r in 0..rows {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(r, c)] = C64::new(s * re, s * im);
        }
    }
    m
}

/// The three additive terms of a semi-passive panel's received signal.
#[derive(Debug, Clone, PartialEq)]
pub struct SubIrsTerms {
    pub direct: CMatrix,
    pub inter_irs: CMatrix,
    pub noise: CMatrix,
}

impl SubIrsTerms {
    pub fn total(&self) -> CMatrix {
        &self.direct + &self.inter_irs + &self.noise
    }
}

fn check_sensing_panel(channels: &ChannelSet, panel: usize) -> Result<()> {
    if panel != 2 && panel != 3 {
        return Err(IsacError::InvalidPanel(panel));
    }
    if panel > channels.u2i.len() {
        return Err(IsacError::InvalidPanel(panel));
    }
    Ok(())
}

/// `b_Dᴴ Θ h` for a panel-departing link and a user vector.
fn cascade_scalar(departure: &CVector, xi: &[C64], h: &CVector) -> C64 {
    departure.iter().zip(xi).zip(h.iter()).map(|((b, x), h)| b.conj() * x * h).sum()
}

fn user_matrix(links: &[RankOneLink]) -> CMatrix {
    let m = links.first().map_or(0, |l| l.arrival.len());
    CMatrix::from_fn(m, links.len(), |r, k| links[k].gain * links[k].arrival[r])
}

/// Additive decomposition of the snapshots at panel 2 or 3.
pub fn receive_at_sub_irs_terms<R: Rng + ?Sized>(
    channels: &ChannelSet,
    theta1: &PhaseShiftConfig,
    symbols: &SymbolBlock,
    rho: f64,
    noise: &NoiseModel,
    panel: usize,
    rng: &mut R,
) -> Result<SubIrsTerms> {
    check_sensing_panel(channels, panel)?;
    let k = channels.k_users();
    if symbols.k_users() != k {
        return Err(IsacError::InvalidDimension(format!("{} symbol rows for {k} users", symbols.k_users())));
    }
    let m1 = channels.panel_elements(1);
    if theta1.len() != m1 {
        return Err(IsacError::InvalidDimension(format!("{} phases for {m1} passive elements", theta1.len())));
    }
    let amp = rho.sqrt();
    let xi = theta1.reflection();
    let h_direct = user_matrix(&channels.u2i[panel - 1]);
    let direct = (&h_direct * &symbols.samples) * C64::new(amp, 0.0);

    let link = channels.i2i(panel)?;
    let dep = link.departure.as_ref().expect("inter-panel link has a departure vector");
    let coupling = CVector::from_iterator(
        k,
        channels.u2i[0].iter().map(|u| link.gain * cascade_scalar(dep, &xi, &u.vector())),
    );
    let aggregate = coupling.transpose() * &symbols.samples;
    let inter_irs = (&link.arrival * aggregate) * C64::new(amp, 0.0);

    let noise = complex_awgn(h_direct.nrows(), symbols.slots(), noise.variance, rng);
    Ok(SubIrsTerms { direct, inter_irs, noise })
}

/// Snapshots recorded by semi-passive panel `panel` while panel 1 reflects with `theta1`.
pub fn receive_at_sub_irs<R: Rng + ?Sized>(
    channels: &ChannelSet,
    theta1: &PhaseShiftConfig,
    symbols: &SymbolBlock,
    rho: f64,
    noise: &NoiseModel,
    panel: usize,
    first_slot: usize,
    rng: &mut R,
) -> Result<SnapshotBlock> {
    let terms = receive_at_sub_irs_terms(channels, theta1, symbols, rho, noise, panel, rng)?;
    Ok(SnapshotBlock { samples: terms.total(), panel, first_slot })
}

/// Per-panel factorization `H_I2B,i Θ_i h_i,k = bs_response_i · (coeffs_i ξ_i)_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadePanel {
    /// `α_I2B,i a(u_i)`, length N.
    pub bs_response: CVector,
    /// `conj(b_D,m) h_k,m`, K × M_i.
    pub coeffs: CMatrix,
}

impl CascadePanel {
    pub fn new(i2b: &RankOneLink, users: &[CVector]) -> Result<Self> {
        let dep = i2b
            .departure
            .as_ref()
            .ok_or_else(|| IsacError::InvalidInput("panel-to-BS link without departure vector".into()))?;
        if users.iter().any(|h| h.len() != dep.len()) {
            return Err(IsacError::InvalidDimension("user vector length differs from panel size".into()));
        }
        let coeffs = CMatrix::from_fn(users.len(), dep.len(), |k, m| dep[m].conj() * users[k][m]);
        Ok(Self { bs_response: i2b.vector(), coeffs })
    }

    pub fn elements(&self) -> usize {
        self.coeffs.ncols()
    }

    /// `coeffs · ξ`, one scalar per user.
    pub fn gains(&self, xi: &[C64]) -> CVector {
        let mut g = CVector::zeros(self.coeffs.nrows());
        for (m, x) in xi.iter().enumerate() {
            for k in 0..self.coeffs.nrows() {
                g[k] += self.coeffs[(k, m)] * x;
            }
        }
        g
    }
}

/// Effective BS-side channels of a set of reflecting panels.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeModel {
    pub panels: Vec<CascadePanel>,
}

impl CascadeModel {
    /// Panel 1 only (ISAC period).
    pub fn isac(channels: &ChannelSet) -> Result<Self> {
        Self::from_channels(channels, &[1])
    }

    /// All three panels stacked (PC period).
    pub fn pc(channels: &ChannelSet) -> Result<Self> {
        Self::from_channels(channels, &[1, 2, 3])
    }

    pub fn from_channels(channels: &ChannelSet, panels: &[usize]) -> Result<Self> {
        let mut out = Vec::with_capacity(panels.len());
        for &p in panels {
            if !(1..=channels.i2b.len()).contains(&p) {
                return Err(IsacError::InvalidPanel(p));
            }
            let users: Vec<CVector> = channels.u2i[p - 1].iter().map(RankOneLink::vector).collect();
            out.push(CascadePanel::new(&channels.i2b[p - 1], &users)?);
        }
        Ok(Self { panels: out })
    }

    pub fn elements(&self) -> usize {
        self.panels.iter().map(CascadePanel::elements).sum()
    }

    pub fn k_users(&self) -> usize {
        self.panels.first().map_or(0, |p| p.coeffs.nrows())
    }

    pub fn bs_antennas(&self) -> usize {
        self.panels.first().map_or(0, |p| p.bs_response.len())
    }

    /// `H_I2B Θ [h_1 … h_K]`, N × K, for stacked reflection coefficients `xi`.
    pub fn effective(&self, xi: &[C64]) -> Result<CMatrix> {
        if xi.len() != self.elements() {
            return Err(IsacError::InvalidDimension(format!(
                "{} reflection coefficients for {} elements",
                xi.len(),
                self.elements()
            )));
        }
        let mut h = CMatrix::zeros(self.bs_antennas(), self.k_users());
        let mut offset = 0;
        for p in &self.panels {
            let g = p.gains(&xi[offset..offset + p.elements()]);
            offset += p.elements();
            for k in 0..g.len() {
                for n in 0..h.nrows() {
                    h[(n, k)] += p.bs_response[n] * g[k];
                }
            }
        }
        Ok(h)
    }
}

/// Which protocol period a rate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Period {
    Isac,
    Pc,
}

pub fn check_unit_columns(w: &CMatrix, tol: f64) -> Result<()> {
    for (k, col) in w.column_iter().enumerate() {
        let n = col.norm();
        if (n - 1.0).abs() > tol {
            return Err(IsacError::ContractViolation(format!("combiner column {k} has norm {n}")));
        }
    }
    Ok(())
}

/// Combined samples `w_kᴴ(√ρ Σ_j h_eq,j s_j + n)`, one row per user.
fn combine_at_bs<R: Rng + ?Sized>(
    heq: &CMatrix,
    w: &CMatrix,
    symbols: &SymbolBlock,
    rho: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<CMatrix> {
    check_unit_columns(w, 1e-9)?;
    if w.shape() != heq.shape() || symbols.k_users() != heq.ncols() {
        return Err(IsacError::InvalidDimension(format!(
            "combiner {:?}, channel {:?}, {} symbol rows",
            w.shape(),
            heq.shape(),
            symbols.k_users()
        )));
    }
    let rx = heq * &symbols.samples * C64::new(rho.sqrt(), 0.0)
        + complex_awgn(heq.nrows(), symbols.slots(), noise.variance, rng);
    Ok(w.adjoint() * rx)
}

/// BS samples during the ISAC period (panel 1 reflecting).
pub fn receive_at_bs_isac<R: Rng + ?Sized>(
    channels: &ChannelSet,
    theta1: &PhaseShiftConfig,
    w: &CMatrix,
    symbols: &SymbolBlock,
    rho: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<CMatrix> {
    let heq = CascadeModel::isac(channels)?.effective(&theta1.reflection())?;
    combine_at_bs(&heq, w, symbols, rho, noise, rng)
}

/// BS samples during the PC period (all panels reflecting, `theta_full` stacked).
pub fn receive_at_bs_pc<R: Rng + ?Sized>(
    channels: &ChannelSet,
    theta_full: &PhaseShiftConfig,
    w: &CMatrix,
    symbols: &SymbolBlock,
    rho: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<CMatrix> {
    let heq = CascadeModel::pc(channels)?.effective(&theta_full.reflection())?;
    combine_at_bs(&heq, w, symbols, rho, noise, rng)
}

/// `Σ_k log2(1 + SINR_k)` for effective channels `heq` (N × K) and combiner `w`.
pub fn sum_rate_effective(heq: &CMatrix, w: &CMatrix, rho: f64, sigma2: f64) -> Result<f64> {
    check_unit_columns(w, 1e-9)?;
    if w.shape() != heq.shape() {
        return Err(IsacError::InvalidDimension(format!("combiner {:?} vs channel {:?}", w.shape(), heq.shape())));
    }
    let g = w.adjoint() * heq;
    Ok(rate_from_gains(&g, rho, sigma2))
}

/// Sum rate from the K × K matrix of combined gains `w_kᴴ h_j`.
pub(crate) fn rate_from_gains(g: &CMatrix, rho: f64, sigma2: f64) -> f64 {
    let k = g.nrows();
    let mut total = 0.0;
    for i in 0..k {
        let signal = rho * g[(i, i)].norm_sqr();
        if signal == 0.0 {
            continue;
        }
        let interference: f64 = (0..k).filter(|&j| j != i).map(|j| g[(i, j)].norm_sqr()).sum::<f64>() * rho;
        total += (1.0 + signal / (interference + sigma2)).log2();
    }
    total
}

/// Sum rate of the ISAC (panel 1) or PC (stacked) link for phases `theta`.
pub fn sum_rate(
    channels: &ChannelSet,
    w: &CMatrix,
    theta: &PhaseShiftConfig,
    rho: f64,
    sigma2: f64,
    period: Period,
) -> Result<f64> {
    let model = match period {
        Period::Isac => CascadeModel::isac(channels)?,
        Period::Pc => CascadeModel::pc(channels)?,
    };
    let heq = model.effective(&theta.reflection())?;
    sum_rate_effective(&heq, w, rho, sigma2)
}
