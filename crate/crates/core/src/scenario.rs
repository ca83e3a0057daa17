//! Experiment configuration: the on-disk schema and the validated scenario.
//!
//! Powers in the file are dBm, geometry is meters, durations are slot counts.
//! [`ScenarioConfig::build`] converts to linear units once.

use std::f64::consts::PI;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::beamforming::CeParams;
use crate::doa::MicroConfig;
use crate::error::{IsacError, Result};
use crate::geometry::{PanelGeometry, PathLossModel, Position, Scene};

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Where the users are.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    /// Uniform over a horizontal square of side `side` centered at `center`.
    Square { center: Position, side: f64 },
    /// On the floor in a sector around the foot of panel 2. Slant distance to
    /// the panel is uniform in `distance ± depth / 2`, azimuth uniform in
    /// `azimuth_deg`, measured from +x toward +y.
    Sector { distance: f64, depth: f64, azimuth_deg: [f64; 2] },
    Fixed { positions: Vec<Position> },
}

impl Default for Placement {
    fn default() -> Self {
        Placement::Square { center: Position::new(4.0, 0.0, 0.0), side: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryConfig {
    pub bs: Position,
    pub panels: [Position; 3],
    /// Per-axis element counts `[y, z]` of the passive panel.
    pub reflect: [usize; 2],
    /// Per-axis element counts `[y, z]` of each semi-passive panel.
    pub semi: [usize; 2],
    pub bs_antennas: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            bs: Position::new(43.23, 0.0, 20.0),
            panels: [Position::new(-4.0, 10.0, 5.0), Position::new(-4.0, -10.0, 7.0), Position::new(-4.0, 0.0, 9.0)],
            reflect: [32, 32],
            semi: [12, 12],
            bs_antennas: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsersConfig {
    pub count: usize,
    pub placement: Placement,
    /// Smallest distance between two randomly placed users, meters.
    pub min_separation: f64,
}

impl Default for UsersConfig {
    fn default() -> Self {
        Self { count: 3, placement: Placement::default(), min_separation: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    /// Transmit power in dBm, per user unless `total` is set.
    pub rho_dbm: f64,
    pub sigma2_dbm: f64,
    /// Treat `rho_dbm` as the sum over users.
    pub total: bool,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { rho_dbm: 20.0, sigma2_dbm: -80.0, total: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    /// T.
    pub slots: usize,
    /// T_1.
    pub isac_slots: usize,
    /// τ_1.
    pub block1_slots: usize,
    /// C.
    pub record_slots: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { slots: 1200, isac_slots: 120, block1_slots: 20, record_slots: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeConfig {
    pub samples: usize,
    pub elites: usize,
    pub kappa: f64,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    /// b.
    pub bits: u32,
    /// b_Δ.
    pub offset_bits: u32,
    /// Largest offset search space enumerated exhaustively.
    pub offset_budget: u64,
    pub genie_bits: u32,
    pub isac: CeConfig,
    pub pc: CeConfig,
    pub genie: CeConfig,
}

impl Default for CeConfig {
    fn default() -> Self {
        Self { samples: 1500, elites: 300, kappa: 0.01, max_iterations: 50 }
    }
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            bits: 3,
            offset_bits: 4,
            offset_budget: 1_000_000,
            genie_bits: 10,
            isac: CeConfig::default(),
            pc: CeConfig { samples: 2000, elites: 400, ..CeConfig::default() },
            genie: CeConfig { samples: 2000, elites: 400, ..CeConfig::default() },
        }
    }
}

/// Sub-array layout override shared by both semi-passive panels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicroOverride {
    pub q_y: usize,
    pub q_z: usize,
    pub n_micro: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Block-1 localization only.
    Sense,
    /// Full protocol with all baselines.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: Option<String>,
    pub values: Vec<f64>,
    pub mode: SweepMode,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { axis: None, values: Vec::new(), mode: SweepMode::Full }
    }
}

/// Everything a config file may set. Missing keys take the defaults above.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub trials: usize,
    pub geometry: GeometryConfig,
    pub users: UsersConfig,
    pub power: PowerConfig,
    pub protocol: ProtocolConfig,
    pub path_loss: PathLossModel,
    pub beam: BeamConfig,
    pub micro: Option<MicroOverride>,
    pub sweep: SweepConfig,
}

/// Sweepable scenario parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Rho,
    Tau1,
    Users,
    MSemi,
    MReflect,
    Tau1OverT1,
    T1OverT,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 7] = [
        SweepAxis::Rho,
        SweepAxis::Tau1,
        SweepAxis::Users,
        SweepAxis::MSemi,
        SweepAxis::MReflect,
        SweepAxis::Tau1OverT1,
        SweepAxis::T1OverT,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Rho => "rho",
            SweepAxis::Tau1 => "tau1",
            SweepAxis::Users => "users",
            SweepAxis::MSemi => "m_semi",
            SweepAxis::MReflect => "m_reflect",
            SweepAxis::Tau1OverT1 => "tau1_over_t1",
            SweepAxis::T1OverT => "t1_over_t",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        let lower = name.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|a| a.name() == lower)
            .ok_or_else(|| IsacError::InvalidConfiguration(format!("unknown sweep axis `{name}`")))
    }
}

fn whole(value: f64, what: &str) -> Result<usize> {
    if !(value >= 0.0) || value.fract() != 0.0 || value > u32::MAX as f64 {
        return Err(IsacError::InvalidConfiguration(format!("{what} must be a whole number, got {value}")));
    }
    Ok(value as usize)
}

fn square_side(elements: f64, what: &str) -> Result<usize> {
    let n = whole(elements, what)?;
    let side = (n as f64).sqrt().round() as usize;
    if side * side != n || n == 0 {
        return Err(IsacError::InvalidConfiguration(format!("{what} = {n} is not a square panel")));
    }
    Ok(side)
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| IsacError::InvalidConfiguration(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Copy with one sweep parameter replaced.
    pub fn with_axis(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut c = self.clone();
        match axis {
            SweepAxis::Rho => c.power.rho_dbm = value,
            SweepAxis::Tau1 => c.protocol.block1_slots = whole(value, "tau1")?,
            SweepAxis::Users => c.users.count = whole(value, "users")?,
            SweepAxis::MSemi => {
                let s = square_side(value, "m_semi")?;
                c.geometry.semi = [s, s];
            }
            SweepAxis::MReflect => {
                let s = square_side(value, "m_reflect")?;
                c.geometry.reflect = [s, s];
            }
            SweepAxis::Tau1OverT1 => {
                c.protocol.block1_slots = (value * c.protocol.isac_slots as f64).round() as usize;
            }
            SweepAxis::T1OverT => {
                c.protocol.isac_slots = (value * c.protocol.slots as f64).round() as usize;
            }
        }
        Ok(c)
    }

    pub fn build(&self) -> Result<Scenario> {
        let g = &self.geometry;
        let k = self.users.count;
        let rho_dbm = if self.power.total { self.power.rho_dbm - 10.0 * (k.max(1) as f64).log10() } else { self.power.rho_dbm };
        let geometry = [
            PanelGeometry::new(g.reflect[0], g.reflect[1])?,
            PanelGeometry::new(g.semi[0], g.semi[1])?,
            PanelGeometry::new(g.semi[0], g.semi[1])?,
        ];
        let micro = match self.micro {
            Some(m) => MicroConfig { q_y: m.q_y, q_z: m.q_z, n_micro: m.n_micro },
            None => MicroConfig::default_for(&geometry[1]),
        };
        let ce = |c: &CeConfig, bits: u32| CeParams {
            samples: c.samples,
            elites: c.elites,
            kappa: c.kappa,
            max_iterations: c.max_iterations,
            bits,
        };
        let p = &self.protocol;
        let s = Scenario {
            bs: g.bs,
            panels: g.panels,
            panel_geometry: geometry,
            bs_antennas: g.bs_antennas,
            k_users: k,
            placement: self.users.placement.clone(),
            min_separation: self.users.min_separation,
            micro: [micro, micro],
            rho: dbm_to_watts(rho_dbm),
            sigma2: dbm_to_watts(self.power.sigma2_dbm),
            slots: p.slots,
            isac_slots: p.isac_slots,
            block1_slots: p.block1_slots,
            record_slots: p.record_slots,
            path_loss: self.path_loss,
            offset_bits: self.beam.offset_bits,
            offset_budget: self.beam.offset_budget,
            ce_isac: ce(&self.beam.isac, self.beam.bits),
            ce_pc: ce(&self.beam.pc, self.beam.bits),
            ce_genie_isac: ce(&self.beam.genie, self.beam.genie_bits),
            ce_genie_pc: ce(&self.beam.genie, self.beam.genie_bits),
            seed: self.seed,
        };
        s.validate()?;
        Ok(s)
    }
}

/// Validated scenario in linear units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub bs: Position,
    pub panels: [Position; 3],
    pub panel_geometry: [PanelGeometry; 3],
    pub bs_antennas: usize,
    pub k_users: usize,
    pub placement: Placement,
    pub min_separation: f64,
    /// Sub-array layouts of panels 2 and 3.
    pub micro: [MicroConfig; 2],
    /// Per-user transmit power in watts.
    pub rho: f64,
    pub sigma2: f64,
    pub slots: usize,
    pub isac_slots: usize,
    pub block1_slots: usize,
    pub record_slots: usize,
    pub path_loss: PathLossModel,
    pub offset_bits: u32,
    pub offset_budget: u64,
    pub ce_isac: CeParams,
    pub ce_pc: CeParams,
    pub ce_genie_isac: CeParams,
    pub ce_genie_pc: CeParams,
    pub seed: u64,
}

impl Scenario {
    /// τ_2.
    pub fn block2_slots(&self) -> usize {
        self.isac_slots - self.block1_slots
    }

    /// T_2.
    pub fn pc_slots(&self) -> usize {
        self.slots - self.isac_slots
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(IsacError::InvalidConfiguration(m));
        if self.k_users == 0 || self.bs_antennas == 0 {
            return bad("need at least one user and one BS antenna".into());
        }
        if self.k_users >= self.bs_antennas {
            return bad(format!("{} users need more than {} BS antennas", self.k_users, self.bs_antennas));
        }
        if self.block1_slots == 0 || self.block1_slots >= self.isac_slots {
            return bad(format!("tau1 = {} must lie in 1..T1 = {}", self.block1_slots, self.isac_slots));
        }
        if self.isac_slots >= self.slots {
            return bad(format!("T1 = {} must be below T = {}", self.isac_slots, self.slots));
        }
        if self.record_slots == 0 || self.record_slots * 10 > self.pc_slots() {
            return bad(format!("C = {} must lie in 1..=T2/10 with T2 = {}", self.record_slots, self.pc_slots()));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) || !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return bad("powers must be finite".into());
        }
        if self.offset_bits == 0 || self.offset_bits > 8 {
            return bad(format!("offset grid of {} bits", self.offset_bits));
        }
        for p in [&self.ce_isac, &self.ce_pc, &self.ce_genie_isac, &self.ce_genie_pc] {
            p.validate()?;
        }
        for m in &self.micro {
            let g = &self.panel_geometry[1];
            if m.q_y == 0 || m.q_z == 0 || m.q_y > g.cols_y || m.q_z > g.rows_z || m.n_micro == 0 {
                return bad(format!("micro-surface {m:?} on a {}x{} panel", g.cols_y, g.rows_z));
            }
            if m.q_y * m.q_z <= self.k_users + 1 {
                return bad(format!("micro-surface {m:?} cannot resolve {} paths", self.k_users + 1));
            }
        }
        if !(self.min_separation >= 0.0) {
            return bad(format!("minimum user separation {}", self.min_separation));
        }
        match &self.placement {
            Placement::Square { side, center } if !(*side > 0.0) || !center.is_finite() => {
                return bad(format!("square of side {side}"));
            }
            Placement::Sector { distance, depth, azimuth_deg } => {
                if !(*depth >= 0.0) || !(distance - depth / 2.0 > self.panels[1].z) || !(azimuth_deg[0] <= azimuth_deg[1]) {
                    return bad(format!("sector at {distance} m over azimuths {azimuth_deg:?}"));
                }
            }
            Placement::Fixed { positions } if positions.len() != self.k_users => {
                return bad(format!("{} fixed positions for {} users", positions.len(), self.k_users));
            }
            _ => {}
        }
        self.scene(Vec::new()).validate()
    }

    fn draw_user<R: Rng + ?Sized>(&self, rng: &mut R) -> Position {
        match &self.placement {
            Placement::Square { center, side } => Position::new(
                center.x + side * (rng.random::<f64>() - 0.5),
                center.y + side * (rng.random::<f64>() - 0.5),
                center.z,
            ),
            Placement::Sector { distance, depth, azimuth_deg } => {
                let q = self.panels[1];
                let d = distance + depth * (rng.random::<f64>() - 0.5);
                let r = (d * d - q.z * q.z).sqrt();
                let deg = azimuth_deg[0] + (azimuth_deg[1] - azimuth_deg[0]) * rng.random::<f64>();
                let a = deg * PI / 180.0;
                Position::new(q.x + r * a.cos(), q.y + r * a.sin(), 0.0)
            }
            Placement::Fixed { .. } => unreachable!("fixed placements are not drawn"),
        }
    }

    /// Draws one set of user positions, redrawing any user closer than
    /// `min_separation` to an earlier one.
    pub fn place_users<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Position>> {
        if let Placement::Fixed { positions } = &self.placement {
            return Ok(positions.clone());
        }
        let mut users: Vec<Position> = Vec::with_capacity(self.k_users);
        for _ in 0..self.k_users {
            let mut attempts = 0;
            loop {
                let p = self.draw_user(rng);
                if users.iter().all(|u| u.distance(&p) >= self.min_separation) {
                    users.push(p);
                    break;
                }
                attempts += 1;
                if attempts == 10_000 {
                    return Err(IsacError::InvalidConfiguration(format!(
                        "cannot place {} users {} m apart",
                        self.k_users, self.min_separation
                    )));
                }
            }
        }
        Ok(users)
    }

    pub fn scene(&self, users: Vec<Position>) -> Scene {
        Scene {
            bs: self.bs,
            panels: self.panels,
            panel_geometry: self.panel_geometry,
            bs_antennas: self.bs_antennas,
            users,
            path_loss: self.path_loss,
        }
    }
}
