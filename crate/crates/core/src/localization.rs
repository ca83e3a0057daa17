//! Multi-user positioning from the angle sets of the two semi-passive panels.

use std::f64::consts::PI;

use serde::Serialize;

use crate::doa::{estimate_panel_aoas, AoaPairSet, MicroConfig};
use crate::error::{IsacError, Result};
use crate::geometry::{path_gain_magnitude, steering_ura, PathLossModel, Position, Scene};
use crate::linalg::{hermitian_eig_desc, CMatrix, C64};
use crate::signal::SnapshotBlock;

/// Estimated link magnitudes at one panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLossEstimates {
    pub panel: usize,
    /// `|α̂_l|` in the order of the user pairs.
    pub users: Vec<f64>,
    /// Magnitude of the aggregate passive-panel term.
    pub inter_irs: f64,
}

/// Path-loss magnitudes from `Bᴴ R B` and `Bᴴ B`.
fn losses_from_projection(gram: &CMatrix, projected: &CMatrix, rho: f64, sigma2: f64) -> Result<Vec<f64>> {
    let (vals, _) = hermitian_eig_desc(gram);
    let max = vals[0];
    let min = *vals.last().expect("nonempty gram");
    if !(min > 0.0) || max / min > 1e12 {
        return Err(IsacError::IllConditioned { what: "steering matrix", condition: (max / min).sqrt() });
    }
    let ginv = gram
        .clone()
        .try_inverse()
        .ok_or(IsacError::IllConditioned { what: "steering matrix", condition: f64::INFINITY })?;
    let r_beta = (&ginv * projected * &ginv - &ginv * C64::new(sigma2, 0.0)) / C64::new(rho, 0.0);
    Ok((0..r_beta.nrows()).map(|i| r_beta[(i, i)].re.max(0.0).sqrt()).collect())
}

fn steering_columns(pairs: &AoaPairSet, scene: &Scene) -> Result<CMatrix> {
    let geo = scene.panel_geometry(pairs.panel)?;
    let known = scene.inter_irs_angles(pairs.panel)?;
    let mut cols = Vec::with_capacity(pairs.pairs.len() + 1);
    for p in &pairs.pairs {
        cols.push(steering_ura(p.u, p.v, geo)?);
    }
    cols.push(steering_ura(known.u, known.v, geo)?);
    Ok(CMatrix::from_columns(&cols))
}

/// Magnitudes from the sample covariance projected on the estimated steering vectors.
pub fn estimate_path_losses(
    snapshots: &SnapshotBlock,
    pairs: &AoaPairSet,
    scene: &Scene,
    rho: f64,
    sigma2: f64,
) -> Result<PathLossEstimates> {
    if snapshots.panel != pairs.panel {
        return Err(IsacError::InvalidInput(format!(
            "snapshots from panel {} with pairs from panel {}",
            snapshots.panel, pairs.panel
        )));
    }
    let tau = snapshots.slots();
    if tau == 0 {
        return Err(IsacError::InsufficientData("no snapshots".into()));
    }
    let b = steering_columns(pairs, scene)?;
    let y = b.adjoint() * &snapshots.samples;
    let projected = (&y * y.adjoint()) / C64::new(tau as f64, 0.0);
    let mut mags = losses_from_projection(&(b.adjoint() * &b), &projected, rho, sigma2)?;
    let inter_irs = mags.pop().expect("inter-panel column");
    Ok(PathLossEstimates { panel: pairs.panel, users: mags, inter_irs })
}

/// Same estimator fed with a known covariance matrix.
pub fn path_losses_from_covariance(
    covariance: &CMatrix,
    pairs: &AoaPairSet,
    scene: &Scene,
    rho: f64,
    sigma2: f64,
) -> Result<PathLossEstimates> {
    let b = steering_columns(pairs, scene)?;
    let projected = b.adjoint() * covariance * &b;
    let mut mags = losses_from_projection(&(b.adjoint() * &b), &projected, rho, sigma2)?;
    let inter_irs = mags.pop().expect("inter-panel column");
    Ok(PathLossEstimates { panel: pairs.panel, users: mags, inter_irs })
}

/// One candidate user position from a pair of angle observations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateLocation {
    pub position: Position,
    pub d2: f64,
    pub d3: f64,
    /// Predicted magnitudes at panels 2 and 3; infinite when infeasible.
    pub losses: [f64; 2],
    pub feasible: bool,
}

/// Intersects the rays implied by effective angles `pair2` at `q2` and `pair3` at `q3`.
///
/// Angles are phase progressions; they are divided by π to obtain cosines.
pub fn triangulate(
    pair2: (f64, f64),
    q2: &Position,
    pair3: (f64, f64),
    q3: &Position,
    model: &PathLossModel,
) -> Result<CandidateLocation> {
    let (u2, v2) = (pair2.0 / PI, pair2.1 / PI);
    let (u3, v3) = (pair3.0 / PI, pair3.1 / PI);
    let den = u3 * v2 - u2 * v3;
    if den.abs() < 1e-12 {
        return Err(IsacError::DegenerateGeometry(format!("parallel bearings (denominator {den:e})")));
    }
    let d2 = (u3 * (q2.z - q3.z) - v3 * (q2.y - q3.y)) / den;
    let d3 = (u2 * (q3.z - q2.z) - v2 * (q3.y - q2.y)) / (u2 * v3 - u3 * v2);
    let y = q2.y - u2 * d2;
    let z = q2.z - v2 * d2;

    let radicand = |d: f64, q: &Position| d * d - (y - q.y).powi(2) - (z - q.z).powi(2);
    let r2 = radicand(d2, q2);
    let r3 = radicand(d3, q3);
    let tol = 1e-12 * (d2 * d2 + d3 * d3);
    let mut feasible = d2 > 0.0 && d3 > 0.0 && r2 >= -tol && r3 >= -tol;
    let dx2 = r2.max(0.0).sqrt();
    let dx3 = r3.max(0.0).sqrt();

    let mut best: Option<(f64, f64)> = None;
    let scale = 1e-9 * (1.0 + q2.x.abs() + q3.x.abs() + dx2 + dx3);
    for s2 in [1.0, -1.0] {
        for s3 in [1.0, -1.0] {
            let w2 = q2.x + s2 * dx2;
            let w3 = q3.x + s3 * dx3;
            let gap = (w2 - w3).abs();
            best = match best {
                None => Some((gap, w2)),
                Some((g, w)) if gap < g - scale || ((gap - g).abs() <= scale && w2 > w) => Some((gap, w2)),
                keep => keep,
            };
        }
    }
    let x = best.expect("four branches").1;
    let position = Position::new(x, y, z);
    if !position.is_finite() {
        feasible = false;
    }
    let losses = if feasible {
        [path_gain_magnitude(d2, model.exp_u2i, model)?, path_gain_magnitude(d3, model.exp_u2i, model)?]
    } else {
        [f64::INFINITY; 2]
    };
    Ok(CandidateLocation { position, d2, d3, losses, feasible })
}

/// All K × K candidates; entry `[l][s]` pairs panel-2 pair `l` with panel-3 pair `s`.
pub fn candidate_grid(a2: &AoaPairSet, a3: &AoaPairSet, scene: &Scene) -> Result<Vec<Vec<CandidateLocation>>> {
    let q2 = scene.panel_position(2)?;
    let q3 = scene.panel_position(3)?;
    let mut grid = Vec::with_capacity(a2.pairs.len());
    for p2 in &a2.pairs {
        let mut row = Vec::with_capacity(a3.pairs.len());
        for p3 in &a3.pairs {
            let c = match triangulate((p2.u, p2.v), q2, (p3.u, p3.v), q3, &scene.path_loss) {
                Ok(c) => c,
                Err(IsacError::DegenerateGeometry(_)) => CandidateLocation {
                    position: Position::new(f64::NAN, f64::NAN, f64::NAN),
                    d2: f64::NAN,
                    d3: f64::NAN,
                    losses: [f64::INFINITY; 2],
                    feasible: false,
                },
                Err(e) => return Err(e),
            };
            row.push(c);
        }
        grid.push(row);
    }
    Ok(grid)
}

/// Sensed user positions of one time block.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationEstimate {
    pub block: usize,
    pub positions: Vec<Position>,
    /// Panel-3 pair chosen for each panel-2 pair.
    pub assignment: Vec<usize>,
}

/// Loss-consistency distance of candidate `(l, s)`.
pub fn matching_cost(c: &CandidateLocation, measured2: f64, measured3: f64) -> f64 {
    if !c.feasible {
        return f64::INFINITY;
    }
    (c.losses[0] - measured2).hypot(c.losses[1] - measured3)
}

/// Greedy per-user pairing of panel-2 and panel-3 angle pairs by path-loss consistency.
pub fn match_aoas(
    losses2: &PathLossEstimates,
    losses3: &PathLossEstimates,
    candidates: &[Vec<CandidateLocation>],
    block: usize,
) -> Result<LocationEstimate> {
    let k = candidates.len();
    if losses2.users.len() != k || losses3.users.len() != k || candidates.iter().any(|r| r.len() != k) {
        return Err(IsacError::InvalidDimension(format!("candidate grid is not {k}x{k}")));
    }
    let mut remaining: Vec<usize> = (0..k).collect();
    let mut positions = Vec::with_capacity(k);
    let mut assignment = Vec::with_capacity(k);
    for l in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for (idx, &s) in remaining.iter().enumerate() {
            let cost = matching_cost(&candidates[l][s], losses2.users[l], losses3.users[s]);
            if cost.is_finite() && best.is_none_or(|(c, _)| cost < c) {
                best = Some((cost, idx));
            }
        }
        let (_, idx) = best.ok_or(IsacError::MatchingFailure { user: l })?;
        let s = remaining.remove(idx);
        positions.push(candidates[l][s].position);
        assignment.push(s);
    }
    Ok(LocationEstimate { block, positions, assignment })
}

/// Intermediate products of one sensing run.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingOutput {
    pub estimate: LocationEstimate,
    pub pairs: [AoaPairSet; 2],
    pub losses: [PathLossEstimates; 2],
}

/// Full pipeline from the two panels' snapshots to K positions.
pub fn sense_locations(
    snap2: &SnapshotBlock,
    snap3: &SnapshotBlock,
    scene: &Scene,
    micro: &[MicroConfig; 2],
    rho: f64,
    sigma2: f64,
    block: usize,
) -> Result<SensingOutput> {
    if snap2.panel != 2 || snap3.panel != 3 {
        return Err(IsacError::InvalidInput("snapshots must come from panels 2 and 3".into()));
    }
    if snap2.slots() != snap3.slots() || snap2.first_slot != snap3.first_slot {
        return Err(IsacError::InvalidInput("panels observed different slots".into()));
    }
    let k = scene.k_users();
    let a2 = estimate_panel_aoas(snap2, &micro[0], k, block, scene)?.users;
    let a3 = estimate_panel_aoas(snap3, &micro[1], k, block, scene)?.users;
    let l2 = estimate_path_losses(snap2, &a2, scene, rho, sigma2)?;
    let l3 = estimate_path_losses(snap3, &a3, scene, rho, sigma2)?;
    let grid = candidate_grid(&a2, &a3, scene)?;
    let estimate = match_aoas(&l2, &l3, &grid, block)?;
    let mut a2 = a2;
    let mut a3 = a3;
    a2.losses = Some(l2.users.clone());
    a3.losses = Some(l3.users.clone());
    Ok(SensingOutput { estimate, pairs: [a2, a3], losses: [l2, l3] })
}

/// Position error summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RmseReport {
    /// Estimates compared in their own labeling.
    pub raw: f64,
    /// After the minimum-total-squared-distance assignment.
    pub assigned: f64,
    /// `assignment[k]` is the true user matched to estimate `k`.
    pub assignment: Vec<usize>,
}

fn sq(a: &Position, b: &Position) -> f64 {
    let d = a.distance(b);
    d * d
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Root-mean-square position error, raw and assignment-corrected.
pub fn rmse(estimates: &[Position], truth: &[Position]) -> Result<RmseReport> {
    let k = truth.len();
    if estimates.len() != k || k == 0 {
        return Err(IsacError::InvalidInput(format!("{} estimates for {k} users", estimates.len())));
    }
    if k > 8 {
        return Err(IsacError::InvalidInput("assignment search supports at most 8 users".into()));
    }
    let raw = (estimates.iter().zip(truth).map(|(e, t)| sq(e, t)).sum::<f64>() / k as f64).sqrt();
    let mut best = (f64::INFINITY, Vec::new());
    for p in permutations(k) {
        let cost: f64 = p.iter().enumerate().map(|(e, &t)| sq(&estimates[e], &truth[t])).sum();
        if cost < best.0 {
            best = (cost, p);
        }
    }
    Ok(RmseReport { raw, assigned: (best.0 / k as f64).sqrt(), assignment: best.1 })
}
