//! Angle-of-arrival estimation at a semi-passive panel.
//!
//! Snapshots are smoothed over shifted micro-surfaces (forward-backward),
//! each axis is resolved with TLS-ESPRIT, and the two candidate lists are
//! paired by the MUSIC null spectrum.

use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::geometry::{steering_ura, EffectiveAngles, PanelGeometry, Scene};
use crate::linalg::{complex_eigenvalues, hermitian_eig_desc, wrap_angle, CMatrix, C64};
use crate::signal::SnapshotBlock;

/// Shifted sub-grids of one panel used for spatial smoothing.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroSurfaceSet {
    pub panel: PanelGeometry,
    pub micro: PanelGeometry,
    /// `(column shift along y, row shift along z)` of each micro-surface.
    pub offsets: Vec<(usize, usize)>,
    /// Parent-panel index of every micro-surface element, in micro flattening order.
    pub maps: Vec<Vec<usize>>,
}

impl MicroSurfaceSet {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn elements(&self) -> usize {
        self.micro.elements()
    }
}

/// Enumerates `n_micro` sub-grids of `q_y × q_z`, shifting along y first.
pub fn enumerate_micro_surfaces(panel: &PanelGeometry, q_y: usize, q_z: usize, n_micro: usize) -> Result<MicroSurfaceSet> {
    if q_y == 0 || q_z == 0 || q_y > panel.cols_y || q_z > panel.rows_z {
        return Err(IsacError::InvalidConfiguration(format!(
            "micro-surface {q_y}x{q_z} does not fit panel {}x{}",
            panel.cols_y, panel.rows_z
        )));
    }
    let shifts_y = panel.cols_y - q_y + 1;
    let shifts_z = panel.rows_z - q_z + 1;
    if n_micro == 0 || n_micro > shifts_y * shifts_z {
        return Err(IsacError::InvalidConfiguration(format!(
            "{n_micro} micro-surfaces requested, {} available",
            shifts_y * shifts_z
        )));
    }
    let micro = PanelGeometry::new(q_y, q_z)?;
    let offsets: Vec<(usize, usize)> = (0..n_micro).map(|i| (i % shifts_y, i / shifts_y)).collect();
    let maps = offsets
        .iter()
        .map(|&(oy, oz)| {
            let mut map = Vec::with_capacity(q_y * q_z);
            for jy in 0..q_y {
                for jz in 0..q_z {
                    map.push(panel.index(oy + jy, oz + jz));
                }
            }
            map
        })
        .collect();
    Ok(MicroSurfaceSet { panel: *panel, micro, offsets, maps })
}

/// Smoothed covariance with its eigendecomposition (eigenvalues descending).
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub matrix: CMatrix,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMatrix,
}

impl CovarianceEstimate {
    pub fn from_matrix(matrix: CMatrix) -> Self {
        let (eigenvalues, eigenvectors) = hermitian_eig_desc(&matrix);
        Self { matrix, eigenvalues, eigenvectors }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn signal_subspace(&self, order: usize) -> CMatrix {
        self.eigenvectors.columns(0, order).into_owned()
    }

    pub fn noise_subspace(&self, order: usize) -> CMatrix {
        self.eigenvectors.columns(order, self.dim() - order).into_owned()
    }
}

/// Forward-backward smoothed covariance over all micro-surfaces and slots.
pub fn fbss_covariance(snapshots: &SnapshotBlock, ms: &MicroSurfaceSet) -> Result<CovarianceEstimate> {
    let tau = snapshots.slots();
    if tau == 0 {
        return Err(IsacError::InsufficientData("no snapshots".into()));
    }
    if snapshots.samples.nrows() != ms.panel.elements() {
        return Err(IsacError::InvalidDimension(format!(
            "{} snapshot rows for a {}-element panel",
            snapshots.samples.nrows(),
            ms.panel.elements()
        )));
    }
    let l = ms.elements();
    let mut x = CMatrix::zeros(l, tau * ms.len());
    for t in 0..tau {
        for (m, map) in ms.maps.iter().enumerate() {
            let col = t * ms.len() + m;
            for (r, &idx) in map.iter().enumerate() {
                x[(r, col)] = snapshots.samples[(idx, t)];
            }
        }
    }
    let forward = (&x * x.adjoint()) / C64::new((tau * ms.len()) as f64, 0.0);
    let matrix = CMatrix::from_fn(l, l, |a, b| {
        (forward[(a, b)] + forward[(l - 1 - a, l - 1 - b)].conj()) * 0.5
    });
    Ok(CovarianceEstimate::from_matrix(matrix))
}

/// Array axis along which a shift invariance is exploited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    Y,
    Z,
}

/// Row indices of the two shifted auxiliary sub-surfaces of a micro-surface.
pub fn selection_rows(micro: &PanelGeometry, axis: Axis) -> (Vec<usize>, Vec<usize>) {
    let (qy, qz) = (micro.cols_y, micro.rows_z);
    let mut first = Vec::new();
    let mut second = Vec::new();
    match axis {
        Axis::Y => {
            for jy in 0..qy.saturating_sub(1) {
                for jz in 0..qz {
                    first.push(micro.index(jy, jz));
                    second.push(micro.index(jy + 1, jz));
                }
            }
        }
        Axis::Z => {
            for jy in 0..qy {
                for jz in 0..qz.saturating_sub(1) {
                    first.push(micro.index(jy, jz));
                    second.push(micro.index(jy, jz + 1));
                }
            }
        }
    }
    (first, second)
}

/// TLS-ESPRIT estimates of the `model_order` effective angles along one axis.
pub fn esprit_axis(cov: &CovarianceEstimate, ms: &MicroSurfaceSet, axis: Axis, model_order: usize) -> Result<Vec<f64>> {
    let l = ms.elements();
    if cov.dim() != l {
        return Err(IsacError::InvalidDimension(format!("covariance {} vs micro-surface {l}", cov.dim())));
    }
    if model_order == 0 || model_order >= l {
        return Err(IsacError::InvalidConfiguration(format!("model order {model_order} for {l} elements")));
    }
    let (j1, j2) = selection_rows(&ms.micro, axis);
    if j1.len() < model_order + 1 {
        return Err(IsacError::InvalidConfiguration(format!(
            "auxiliary sub-surface of {} elements cannot resolve model order {model_order}",
            j1.len()
        )));
    }
    let us = cov.signal_subspace(model_order);
    let d = model_order;
    let rows = j1.len();
    let mut stacked = CMatrix::zeros(rows, 2 * d);
    for (r, (&a, &b)) in j1.iter().zip(&j2).enumerate() {
        for c in 0..d {
            stacked[(r, c)] = us[(a, c)];
            stacked[(r, d + c)] = us[(b, c)];
        }
    }
    let c = stacked.adjoint() * &stacked;
    let (_, v) = hermitian_eig_desc(&c);
    let v12 = v.view((0, d), (d, d)).into_owned();
    let v22 = v.view((d, d), (d, d)).into_owned();
    let v22_inv = v22
        .clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
        .ok_or_else(|| IsacError::DegenerateSubspace("V22 block is singular".into()))?;
    let phi = -(v12 * v22_inv);
    let eig = complex_eigenvalues(&phi)
        .ok_or_else(|| IsacError::DegenerateSubspace("rotation operator eigenvalues did not converge".into()))?;
    Ok(eig.iter().map(|z| wrap_angle(z.arg())).collect())
}

/// MUSIC null-spectrum value `‖b_microᴴ(u, v) U_N‖²`.
pub fn music_spectrum(u: f64, v: f64, noise_subspace: &CMatrix, micro: &PanelGeometry) -> Result<f64> {
    let b = steering_ura(u, v, micro)?;
    Ok((noise_subspace.adjoint() * b).norm_squared())
}

/// Pairs the per-axis candidates one-to-one, smallest spectrum value first.
pub fn music_pair(cands_u: &[f64], cands_v: &[f64], cov: &CovarianceEstimate, ms: &MicroSurfaceSet) -> Result<Vec<(f64, f64)>> {
    let d = cands_u.len();
    if d == 0 || cands_v.len() != d {
        return Err(IsacError::InvalidInput(format!("{} u and {} v candidates", d, cands_v.len())));
    }
    if d >= cov.dim() {
        return Err(IsacError::InvalidConfiguration("noise subspace is empty".into()));
    }
    let un = cov.noise_subspace(d);
    let mut f = vec![vec![0.0; d]; d];
    for (i, &u) in cands_u.iter().enumerate() {
        for (j, &v) in cands_v.iter().enumerate() {
            f[i][j] = music_spectrum(u, v, &un, &ms.micro)?;
        }
    }
    let mut used_u = vec![false; d];
    let mut used_v = vec![false; d];
    let mut pairs = Vec::with_capacity(d);
    for _ in 0..d {
        let mut best = (f64::INFINITY, 0, 0);
        for i in (0..d).filter(|&i| !used_u[i]) {
            for j in (0..d).filter(|&j| !used_v[j]) {
                if f[i][j] < best.0 {
                    best = (f[i][j], i, j);
                }
            }
        }
        let (_, i, j) = best;
        used_u[i] = true;
        used_v[j] = true;
        pairs.push((cands_u[i], cands_v[j]));
    }
    Ok(pairs)
}

/// Angle pairs attributed to users at one panel.
#[derive(Debug, Clone, PartialEq)]
pub struct AoaPairSet {
    pub panel: usize,
    pub block: usize,
    pub pairs: Vec<EffectiveAngles>,
    pub losses: Option<Vec<f64>>,
}

fn wrapped_distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    wrap_angle(a.0 - b.0).hypot(wrap_angle(a.1 - b.1))
}

/// Drops the pair closest to the known panel-1 → panel-`panel` angles.
pub fn exclude_inter_irs(pairs: &[(f64, f64)], panel: usize, block: usize, scene: &Scene) -> Result<AoaPairSet> {
    if pairs.is_empty() {
        return Err(IsacError::InvalidInput("no angle pairs".into()));
    }
    let known = scene.inter_irs_angles(panel)?;
    let drop = pairs
        .iter()
        .enumerate()
        .map(|(i, &p)| (i, wrapped_distance(p, (known.u, known.v))))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
        .expect("nonempty");
    let kept = pairs
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != drop)
        .map(|(_, &(u, v))| EffectiveAngles::from_phases(u, v))
        .collect();
    Ok(AoaPairSet { panel, block, pairs: kept, losses: None })
}

/// Micro-surface layout and model order used at a semi-passive panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MicroConfig {
    pub q_y: usize,
    pub q_z: usize,
    pub n_micro: usize,
}

impl MicroConfig {
    /// `side − 4` per axis for panels of side ≥ 8, `side − 1` otherwise; four shifts.
    pub fn default_for(panel: &PanelGeometry) -> Self {
        let q = |s: usize| if s >= 8 { s - 4 } else { s.saturating_sub(1).max(1) };
        Self { q_y: q(panel.cols_y), q_z: q(panel.rows_z), n_micro: 4 }
    }
}

/// Output of the per-panel estimation chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelAoas {
    /// All `K + 1` paired estimates, including the inter-panel path.
    pub paired: Vec<(f64, f64)>,
    pub users: AoaPairSet,
}

/// FBSS → ESPRIT on both axes → MUSIC pairing → inter-panel exclusion.
pub fn estimate_panel_aoas(
    snapshots: &SnapshotBlock,
    micro: &MicroConfig,
    k_users: usize,
    block: usize,
    scene: &Scene,
) -> Result<PanelAoas> {
    let geo = scene.panel_geometry(snapshots.panel)?;
    let ms = enumerate_micro_surfaces(geo, micro.q_y, micro.q_z, micro.n_micro)?;
    let cov = fbss_covariance(snapshots, &ms)?;
    let order = k_users + 1;
    let cu = esprit_axis(&cov, &ms, Axis::Y, order)?;
    let cv = esprit_axis(&cov, &ms, Axis::Z, order)?;
    let paired = music_pair(&cu, &cv, &cov, &ms)?;
    let users = exclude_inter_irs(&paired, snapshots.panel, block, scene)?;
    Ok(PanelAoas { paired, users })
}
