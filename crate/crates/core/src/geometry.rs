//! Scene geometry, array responses and line-of-sight channels.
//!
//! Panels are uniform rectangular arrays in a plane of constant x with
//! half-wavelength spacing, so an effective angle is `π` times the matching
//! direction cosine. URA vectors are flattened y-major: element `(iy, iz)`
//! sits at index `iy * rows_z + iz`.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};
use crate::linalg::{CMatrix, CVector, C64};

/// A point in the scene, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2)).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Element layout of one panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelGeometry {
    pub cols_y: usize,
    pub rows_z: usize,
}

impl PanelGeometry {
    pub fn new(cols_y: usize, rows_z: usize) -> Result<Self> {
        if cols_y == 0 || rows_z == 0 {
            return Err(IsacError::InvalidDimension(format!(
                "panel {cols_y}x{rows_z} has an empty axis"
            )));
        }
        Ok(Self { cols_y, rows_z })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn elements(&self) -> usize {
        self.cols_y * self.rows_z
    }

    /// Flat index of element `(iy, iz)`.
    pub fn index(&self, iy: usize, iz: usize) -> usize {
        iy * self.rows_z + iz
    }
}

/// Phase progression per element along y and z, with the underlying cosines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveAngles {
    pub u: f64,
    pub v: f64,
    pub cos_y: f64,
    pub cos_z: f64,
}

impl EffectiveAngles {
    pub fn from_cosines(cos_y: f64, cos_z: f64) -> Self {
        Self { u: PI * cos_y, v: PI * cos_z, cos_y, cos_z }
    }

    pub fn from_phases(u: f64, v: f64) -> Self {
        Self { u, v, cos_y: u / PI, cos_z: v / PI }
    }

    /// Angles of the plane wave leaving `src` toward `dst`.
    pub fn of_link(src: &Position, dst: &Position) -> Result<Self> {
        let (cy, cz) = direction_cosines(src, dst)?;
        Ok(Self::from_cosines(cy, cz))
    }
}

/// Log-distance path-loss model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    pub pl0_db: f64,
    pub d0: f64,
    pub exp_u2i: f64,
    pub exp_i2b: f64,
    pub exp_i2i: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self { pl0_db: 30.0, d0: 1.0, exp_u2i: 2.2, exp_i2b: 2.3, exp_i2i: 2.1 }
    }
}

impl PathLossModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.d0 > 0.0) || !(self.exp_u2i > 0.0 && self.exp_i2b > 0.0 && self.exp_i2i > 0.0) {
            return Err(IsacError::InvalidConfiguration(
                "path-loss reference distance and exponents must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `e^{j(n-1)u}` for n = 1..N.
pub fn steering_ula(u: f64, n: usize) -> Result<CVector> {
    if n == 0 {
        return Err(IsacError::InvalidDimension("ULA with zero elements".into()));
    }
    Ok(CVector::from_iterator(n, (0..n).map(|m| C64::from_polar(1.0, m as f64 * u))))
}

/// Kronecker product of the y factor (angle `u`) with the z factor (angle `v`).
pub fn steering_ura(u: f64, v: f64, geometry: &PanelGeometry) -> Result<CVector> {
    let ay = steering_ula(u, geometry.cols_y)?;
    let az = steering_ula(v, geometry.rows_z)?;
    Ok(ay.kronecker(&az))
}

/// Cosines of the unit vector from `src` to `dst` against the y and z axes.
pub fn direction_cosines(src: &Position, dst: &Position) -> Result<(f64, f64)> {
    let d = src.distance(dst);
    if !(d > 0.0) || !d.is_finite() {
        return Err(IsacError::DegenerateGeometry(format!(
            "coincident or non-finite points {src:?} and {dst:?}"
        )));
    }
    Ok(((dst.y - src.y) / d, (dst.z - src.z) / d))
}

/// Linear amplitude gain at distance `d`; distances below `d0` are clamped.
pub fn path_gain_magnitude(d: f64, exponent: f64, model: &PathLossModel) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(IsacError::InvalidDistance(d));
    }
    let d = d.max(model.d0);
    let loss_db = model.pl0_db + 10.0 * exponent * (d / model.d0).log10();
    Ok(10f64.powf(-loss_db / 20.0))
}

/// Rank-one line-of-sight link `gain · arrival · departureᴴ`.
///
/// User links have no departure vector and act as column vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneLink {
    pub gain: C64,
    pub arrival: CVector,
    pub departure: Option<CVector>,
    pub arrival_angles: EffectiveAngles,
    pub departure_angles: Option<EffectiveAngles>,
    pub distance: f64,
}

impl RankOneLink {
    pub fn matrix(&self) -> CMatrix {
        let col = &self.arrival * self.gain;
        match &self.departure {
            Some(dep) => col * dep.adjoint(),
            None => CMatrix::from_column_slice(col.len(), 1, col.as_slice()),
        }
    }

    /// Channel vector for user links (`gain · arrival`).
    pub fn vector(&self) -> CVector {
        &self.arrival * self.gain
    }
}

/// Positions and array sizes of one deployment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub bs: Position,
    /// Panel 1 (passive) followed by the two semi-passive panels.
    pub panels: [Position; 3],
    pub panel_geometry: [PanelGeometry; 3],
    pub bs_antennas: usize,
    pub users: Vec<Position>,
    pub path_loss: PathLossModel,
}

impl Scene {
    pub fn k_users(&self) -> usize {
        self.users.len()
    }

    pub fn panel_position(&self, panel: usize) -> Result<&Position> {
        if !(1..=3).contains(&panel) {
            return Err(IsacError::InvalidPanel(panel));
        }
        Ok(&self.panels[panel - 1])
    }

    pub fn panel_geometry(&self, panel: usize) -> Result<&PanelGeometry> {
        if !(1..=3).contains(&panel) {
            return Err(IsacError::InvalidPanel(panel));
        }
        Ok(&self.panel_geometry[panel - 1])
    }

    /// Geometric effective angles of the panel-1 → panel-`i` link.
    pub fn inter_irs_angles(&self, panel: usize) -> Result<EffectiveAngles> {
        if panel != 2 && panel != 3 {
            return Err(IsacError::InvalidPanel(panel));
        }
        EffectiveAngles::of_link(&self.panels[0], &self.panels[panel - 1])
    }

    pub fn validate(&self) -> Result<()> {
        self.path_loss.validate()?;
        if self.bs_antennas == 0 {
            return Err(IsacError::InvalidDimension("BS has no antennas".into()));
        }
        let mut points = vec![self.bs];
        points.extend_from_slice(&self.panels);
        points.extend_from_slice(&self.users);
        for (i, p) in points.iter().enumerate() {
            if !p.is_finite() {
                return Err(IsacError::DegenerateGeometry(format!("non-finite position {p:?}")));
            }
            for q in &points[..i] {
                if !(p.distance(q) > 0.0) {
                    return Err(IsacError::DegenerateGeometry(format!("coincident positions {p:?}")));
                }
            }
        }
        Ok(())
    }
}

/// All channels of one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Panel → BS, indexed by panel − 1.
    pub i2b: Vec<RankOneLink>,
    /// User → panel, indexed `[panel − 1][user]`.
    pub u2i: Vec<Vec<RankOneLink>>,
    /// Panel 1 → panel 2 and panel 1 → panel 3.
    pub i2i: Vec<RankOneLink>,
}

impl ChannelSet {
    pub fn k_users(&self) -> usize {
        self.u2i[0].len()
    }

    pub fn panel_elements(&self, panel: usize) -> usize {
        self.u2i[panel - 1]
            .first()
            .map(|l| l.arrival.len())
            .unwrap_or_else(|| self.i2b[panel - 1].departure.as_ref().map_or(0, |d| d.len()))
    }

    pub fn bs_antennas(&self) -> usize {
        self.i2b[0].arrival.len()
    }

    pub fn i2i(&self, panel: usize) -> Result<&RankOneLink> {
        match panel {
            2 | 3 => Ok(&self.i2i[panel - 2]),
            _ => Err(IsacError::InvalidPanel(panel)),
        }
    }
}

fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() * 2.0 * PI
}

/// Builds every channel of the scene with uniformly random gain phases.
pub fn build_channels<R: Rng + ?Sized>(scene: &Scene, rng: &mut R) -> Result<ChannelSet> {
    scene.validate()?;
    let pl = &scene.path_loss;
    let n = scene.bs_antennas;

    let mut i2b = Vec::with_capacity(3);
    for (panel, geo) in scene.panels.iter().zip(&scene.panel_geometry) {
        let ang = EffectiveAngles::of_link(panel, &scene.bs)?;
        let d = panel.distance(&scene.bs);
        let gain = C64::from_polar(path_gain_magnitude(d, pl.exp_i2b, pl)?, random_phase(rng));
        i2b.push(RankOneLink {
            gain,
            arrival: steering_ula(ang.u, n)?,
            departure: Some(steering_ura(ang.u, ang.v, geo)?),
            arrival_angles: ang,
            departure_angles: Some(ang),
            distance: d,
        });
    }

    let mut u2i = Vec::with_capacity(3);
    for (panel, geo) in scene.panels.iter().zip(&scene.panel_geometry) {
        let mut links = Vec::with_capacity(scene.users.len());
        for user in &scene.users {
            let ang = EffectiveAngles::of_link(user, panel)?;
            let d = user.distance(panel);
            let gain = C64::from_polar(path_gain_magnitude(d, pl.exp_u2i, pl)?, random_phase(rng));
            links.push(RankOneLink {
                gain,
                arrival: steering_ura(ang.u, ang.v, geo)?,
                departure: None,
                arrival_angles: ang,
                departure_angles: None,
                distance: d,
            });
        }
        u2i.push(links);
    }

    let mut i2i = Vec::with_capacity(2);
    for p in 1..3 {
        let ang = EffectiveAngles::of_link(&scene.panels[0], &scene.panels[p])?;
        let d = scene.panels[0].distance(&scene.panels[p]);
        let gain = C64::from_polar(path_gain_magnitude(d, pl.exp_i2i, pl)?, random_phase(rng));
        i2i.push(RankOneLink {
            gain,
            arrival: steering_ura(ang.u, ang.v, &scene.panel_geometry[p])?,
            departure: Some(steering_ura(ang.u, ang.v, &scene.panel_geometry[0])?),
            arrival_angles: ang,
            departure_angles: Some(ang),
            distance: d,
        });
    }

    Ok(ChannelSet { i2b, u2i, i2i })
}
