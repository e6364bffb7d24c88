//! Room geometry and scenario configuration.
//!
//! All external lengths are centimeters. The x-y origin sits at the room
//! center, the floor is z = 0 and the ceiling-mounted LEDs face straight
//! down while photodiodes face straight up. Channel math converts to meters
//! through [`cm_to_m`] only.

use std::ops::{Add, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Diagnostic, Error, Result};
use crate::modem::{DimmingPlan, PamConstellation};

/// Centimeters to meters. The single place where units change.
#[inline]
pub fn cm_to_m(cm: f64) -> f64 {
    cm * 0.01
}

/// A point or offset in centimeters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn horizontal_distance(&self, other: &Vec3) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

/// Lambertian order for a half-power semi-angle: m = -ln 2 / ln(cos Φ½).
pub fn lambertian_order_from_half_angle(half_angle_deg: f64) -> f64 {
    -std::f64::consts::LN_2 / half_angle_deg.to_radians().cos().ln()
}

/// Inverse of [`lambertian_order_from_half_angle`].
pub fn half_angle_from_lambertian_order(order: f64) -> f64 {
    2f64.powf(-1.0 / order).acos().to_degrees()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedConfig {
    pub position: Vec3,
    pub transmit_power_w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_angle_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambertian_order: Option<f64>,
}

impl LedConfig {
    /// Lambertian order, derived from the half-angle when not given.
    pub fn order(&self) -> f64 {
        match (self.lambertian_order, self.half_angle_deg) {
            (Some(m), _) => m,
            (None, Some(phi)) => lambertian_order_from_half_angle(phi),
            (None, None) => f64::NAN,
        }
    }

    fn fill_derived(&mut self) {
        match (self.lambertian_order, self.half_angle_deg) {
            (None, Some(phi)) => self.lambertian_order = Some(lambertian_order_from_half_angle(phi)),
            (Some(m), None) if m > 0.0 => {
                self.half_angle_deg = Some(half_angle_from_lambertian_order(m))
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdConfig {
    /// Offset from the receiver's reference point.
    pub offset: Vec3,
    pub area_cm2: f64,
    pub fov_half_angle_deg: f64,
    /// Lumped filter/concentrator gain. 1 leaves the LOS gain untouched.
    #[serde(default = "unity")]
    pub optical_gain_factor: f64,
}

fn unity() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomConfig {
    /// Length x width x height.
    pub dims: Vec3,
    pub wall_reflectivity: f64,
    pub grid_resolution_cm: f64,
    pub height_grid_resolution_cm: f64,
}

impl RoomConfig {
    /// Closed room volume test, with the x-y origin at the room center.
    pub fn contains(&self, p: &Vec3) -> bool {
        let eps = 1e-9;
        p.is_finite()
            && p.x.abs() <= self.dims.x / 2.0 + eps
            && p.y.abs() <= self.dims.y / 2.0 + eps
            && p.z >= -eps
            && p.z <= self.dims.z + eps
    }
}

/// Zone membership matrix (one row per LED) and per-zone dimming levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimmingConfig {
    pub zones: Vec<Vec<f64>>,
    pub kappa: Vec<f64>,
    pub rho_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationConfig {
    /// PAM order M.
    pub order: usize,
    /// PAM scaling factor A.
    pub scale: f64,
    pub v_dc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    pub count: usize,
}

/// Which links set the reference power when an SNR is turned into a noise
/// variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrReference {
    /// A fixed receiver at the room center on the floor: the noise floor is
    /// a property of the scenario, so receivers farther out see less SNR.
    RoomCenter,
    /// The receiver under test: every position sees the nominal SNR.
    Receiver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrConfig {
    pub sweep: Vec<f64>,
    pub reference: SnrReference,
}

/// Rician K-factor selection for every LED-PD link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum RicianMode {
    /// Same K on every link; `"inf"` means LOS only.
    Fixed {
        #[serde(with = "k_factor_serde")]
        k: f64,
    },
    /// K from the wall-segment reflection sum.
    Geometric { segment_size_cm: f64 },
}

mod k_factor_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(k: &f64, s: S) -> Result<S::Ok, S::Error> {
        if k.is_infinite() && *k > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*k)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) if s == "inf" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(de::Error::custom(format!(
                "expected a number or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// Everything a run needs. Immutable once validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub room: RoomConfig,
    pub leds: Vec<LedConfig>,
    pub pds: Vec<PdConfig>,
    pub dimming: DimmingConfig,
    pub modulation: ModulationConfig,
    pub pilots: PilotConfig,
    pub snr_db: SnrConfig,
    pub rician: RicianMode,
    pub seed: u64,
}

/// The four ceiling LEDs of the reference layout, in cm.
pub fn default_led_positions() -> Vec<Vec3> {
    vec![
        Vec3::new(50.0, 50.0, 300.0),
        Vec3::new(50.0, -50.0, 300.0),
        Vec3::new(-50.0, 50.0, 300.0),
        Vec3::new(-50.0, -50.0, 300.0),
    ]
}

/// PD separation used when none is configured.
pub const DEFAULT_PD_SEPARATION_CM: f64 = 10.0;

impl Default for ScenarioConfig {
    /// The reference room: 300 cm cube, four 20 W LEDs with m = 0.647, two
    /// 1 cm² photodiodes with a 60° field of view 10 cm apart, 5 cm RSS grid,
    /// 400 pilots, two dimming zones.
    fn default() -> Self {
        let leds = default_led_positions()
            .into_iter()
            .map(|position| LedConfig {
                position,
                transmit_power_w: 20.0,
                half_angle_deg: None,
                lambertian_order: Some(0.647),
            })
            .collect();
        let pd = |offset| PdConfig {
            offset,
            area_cm2: 1.0,
            fov_half_angle_deg: 60.0,
            optical_gain_factor: 1.0,
        };
        let mut cfg = ScenarioConfig {
            room: RoomConfig {
                dims: Vec3::new(300.0, 300.0, 300.0),
                wall_reflectivity: 0.8,
                grid_resolution_cm: 5.0,
                height_grid_resolution_cm: 1.0,
            },
            leds,
            // The second PD sits on the -x side so receivers up to the +x
            // wall keep both PDs inside the room.
            pds: vec![
                pd(Vec3::new(0.0, 0.0, 0.0)),
                pd(Vec3::new(-DEFAULT_PD_SEPARATION_CM, 0.0, 0.0)),
            ],
            dimming: DimmingConfig {
                zones: vec![
                    vec![1.0, 0.0],
                    vec![1.0, 0.0],
                    vec![0.0, 1.0],
                    vec![0.0, 1.0],
                ],
                kappa: vec![1.0, 0.8],
                rho_min: 0.7,
            },
            modulation: ModulationConfig {
                order: 2,
                scale: 1.0,
                v_dc: 10.0,
            },
            pilots: PilotConfig { count: 400 },
            snr_db: SnrConfig {
                sweep: vec![20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0],
                reference: SnrReference::RoomCenter,
            },
            rician: RicianMode::Fixed { k: f64::INFINITY },
            seed: 0,
        };
        cfg.fill_derived();
        cfg
    }
}

impl ScenarioConfig {
    pub fn n_t(&self) -> usize {
        self.leds.len()
    }

    pub fn n_r(&self) -> usize {
        self.pds.len()
    }

    /// Absolute PD positions for a receiver whose reference point is `reference`.
    pub fn pd_positions(&self, reference: Vec3) -> Vec<Vec3> {
        self.pds.iter().map(|pd| reference + pd.offset).collect()
    }

    /// Distance between the first two PDs (the known separation d).
    pub fn pd_separation_cm(&self) -> Option<f64> {
        match self.pds.as_slice() {
            [a, b, ..] => Some((a.offset - b.offset).norm()),
            _ => None,
        }
    }

    pub fn constellation(&self) -> Result<PamConstellation> {
        PamConstellation::new(self.modulation.order, self.modulation.scale)
    }

    pub fn dimming_plan(&self) -> Result<DimmingPlan> {
        DimmingPlan::new(
            self.dimming.zones.clone(),
            self.dimming.kappa.clone(),
            self.modulation.v_dc,
            self.dimming.rho_min,
        )
    }

    /// Lowest LED height; every receiver must sit strictly below it.
    pub fn led_plane_cm(&self) -> f64 {
        self.leds
            .iter()
            .map(|l| l.position.z)
            .fold(f64::INFINITY, f64::min)
    }

    fn fill_derived(&mut self) {
        for led in &mut self.leds {
            led.fill_derived();
        }
    }

    /// Serialize to the scenario JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        load_scenario(&text)
    }
}

/// Parse, fill derived quantities and validate a scenario document.
pub fn load_scenario(document: &str) -> Result<ScenarioConfig> {
    let mut cfg: ScenarioConfig =
        serde_json::from_str(document).map_err(|e| Error::Schema(e.to_string()))?;
    // Consistency of a user-supplied (half-angle, order) pair is checked
    // before filling so a mismatch cannot be masked.
    let diags = validate_scenario(&cfg);
    if !diags.is_empty() {
        return Err(Error::Validation(diags));
    }
    cfg.fill_derived();
    Ok(cfg)
}

fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// Check every scenario invariant. Empty iff the scenario is valid.
pub fn validate_scenario(cfg: &ScenarioConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut err = |path: String, msg: String| out.push(Diagnostic::error(path, msg));

    let room = &cfg.room;
    let d = room.dims;
    if !(d.is_finite() && d.x > 0.0 && d.y > 0.0 && d.z > 0.0) {
        err("room.dims".into(), "all room dimensions must be finite and > 0".into());
    }
    if !(0.0..=1.0).contains(&room.wall_reflectivity) {
        err("room.wall_reflectivity".into(), "must lie in [0, 1]".into());
    }
    if !(room.grid_resolution_cm > 0.0 && room.grid_resolution_cm <= d.x.min(d.y)) {
        err(
            "room.grid_resolution_cm".into(),
            "must satisfy 0 < resolution <= min(L, W)".into(),
        );
    }
    if !(room.height_grid_resolution_cm > 0.0 && room.height_grid_resolution_cm <= d.z) {
        err(
            "room.height_grid_resolution_cm".into(),
            "must satisfy 0 < resolution <= H".into(),
        );
    }

    let n_t = cfg.leds.len();
    if n_t < 2 || !is_power_of_two(n_t) {
        err("leds".into(), format!("N_t must be a power of two >= 2, got {n_t}"));
    }
    let peak_swing = cfg.modulation.scale * (cfg.modulation.order as f64 - 1.0);
    let max_rho = cfg.dimming.kappa.iter().cloned().fold(0.0, f64::max);
    for (i, led) in cfg.leds.iter().enumerate() {
        let p = format!("leds[{i}]");
        if !led.position.is_finite() {
            err(format!("{p}.position"), "coordinates must be finite".into());
        } else if !room.contains(&led.position) {
            err(format!("{p}.position"), "LED lies outside the room".into());
        }
        if !(led.transmit_power_w > 0.0) {
            err(format!("{p}.transmit_power_w"), "must be > 0".into());
        }
        if let Some(phi) = led.half_angle_deg {
            if !(phi > 0.0 && phi < 90.0) {
                err(format!("{p}.half_angle_deg"), "must lie in (0, 90)".into());
            }
        }
        match (led.half_angle_deg, led.lambertian_order) {
            (None, None) => err(
                p.to_string(),
                "one of half_angle_deg or lambertian_order is required".into(),
            ),
            (_, Some(m)) if !(m > 0.0 && m.is_finite()) => {
                err(format!("{p}.lambertian_order"), "must be finite and > 0".into())
            }
            (Some(phi), Some(m)) if phi > 0.0 && phi < 90.0 => {
                let derived = lambertian_order_from_half_angle(phi);
                if ((derived - m) / m).abs() > 1e-6 {
                    err(
                        format!("{p}.lambertian_order"),
                        format!(
                            "inconsistent with half_angle_deg: -ln2/ln(cos {phi}°) = {derived:.6}, \
                             but lambertian_order = {m}"
                        ),
                    );
                }
            }
            _ => {}
        }
        if peak_swing + cfg.modulation.v_dc * max_rho > led.transmit_power_w {
            err(
                format!("{p}.transmit_power_w"),
                format!(
                    "peak intensity A(M-1) + V_dc max(rho) = {} exceeds the LED budget",
                    peak_swing + cfg.modulation.v_dc * max_rho
                ),
            );
        }
    }

    if cfg.pds.is_empty() {
        err("pds".into(), "at least one photodiode is required".into());
    }
    for (i, pd) in cfg.pds.iter().enumerate() {
        let p = format!("pds[{i}]");
        if !pd.offset.is_finite() {
            err(format!("{p}.offset"), "must be finite".into());
        }
        if !(pd.area_cm2 > 0.0) {
            err(format!("{p}.area_cm2"), "must be > 0".into());
        }
        if !(pd.fov_half_angle_deg > 0.0 && pd.fov_half_angle_deg <= 90.0) {
            err(format!("{p}.fov_half_angle_deg"), "must lie in (0, 90]".into());
        }
        if !(pd.optical_gain_factor >= 1.0) {
            err(format!("{p}.optical_gain_factor"), "must be >= 1".into());
        }
        if pd.offset.z != cfg.pds[0].offset.z {
            err(
                format!("{p}.offset.z"),
                "photodiodes must be coplanar (equal z offsets)".into(),
            );
        }
    }
    if let Some(sep) = cfg.pd_separation_cm() {
        if !(sep > 0.0) {
            err("pds".into(), "the first two photodiodes must be separated".into());
        }
    }

    let m = cfg.modulation.order;
    if m < 2 || !is_power_of_two(m) {
        err("modulation.order".into(), "M must be a power of two".into());
    }
    if !(cfg.modulation.scale > 0.0 && cfg.modulation.scale.is_finite()) {
        err("modulation.scale".into(), "A must be finite and > 0".into());
    }
    if !(cfg.modulation.v_dc >= 0.0 && cfg.modulation.v_dc.is_finite()) {
        err("modulation.v_dc".into(), "V_dc must be finite and >= 0".into());
    }

    let dim = &cfg.dimming;
    let n_dim = dim.kappa.len();
    if n_dim == 0 {
        err("dimming.kappa".into(), "at least one dimming zone is required".into());
    }
    if !(dim.rho_min > 0.0 && dim.rho_min <= 1.0) {
        err("dimming.rho_min".into(), "must lie in (0, 1]".into());
    }
    if dim.zones.len() != n_t {
        err(
            "dimming.zones".into(),
            format!("needs one row per LED ({n_t}), got {}", dim.zones.len()),
        );
    }
    for (i, row) in dim.zones.iter().enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if row.len() != n_dim || ones != 1 || ones + zeros != row.len() {
            err(
                format!("dimming.zones[{i}]"),
                format!("must be a 0/1 row of length {n_dim} with exactly one 1"),
            );
        } else {
            let zone = row.iter().position(|&v| v == 1.0).unwrap_or(0);
            let rho = dim.kappa[zone];
            if !(rho >= dim.rho_min && rho <= 1.0) {
                err(
                    format!("dimming.zones[{i}]"),
                    format!("dimming level rho = {rho} outside [rho_min, 1]"),
                );
            }
        }
    }
    if cfg.modulation.v_dc * dim.rho_min < peak_swing {
        err(
            "modulation.v_dc".into(),
            format!(
                "V_dc * rho_min = {} < A(M-1) = {peak_swing}: the lowest PAM level would drive \
                 an LED negative",
                cfg.modulation.v_dc * dim.rho_min
            ),
        );
    }

    let n_p = cfg.pilots.count;
    if n_t > 0 && (n_p == 0 || !n_p.is_multiple_of(2 * n_t)) {
        err(
            "pilots.count".into(),
            format!("must be a positive multiple of 2 N_t = {}", 2 * n_t),
        );
    }

    if cfg.snr_db.sweep.is_empty() || cfg.snr_db.sweep.iter().any(|s| s.is_nan()) {
        err("snr_db.sweep".into(), "must be a non-empty list of dB values".into());
    }

    match cfg.rician {
        RicianMode::Fixed { k } => {
            if !(k > 0.0) {
                err("rician.k".into(), "fixed K must be > 0 (or \"inf\")".into());
            }
        }
        RicianMode::Geometric { segment_size_cm } => {
            if !(segment_size_cm > 0.0 && segment_size_cm <= d.x.min(d.y).min(d.z)) {
                err(
                    "rician.segment_size_cm".into(),
                    "must be > 0 and no larger than the smallest wall edge".into(),
                );
            }
        }
    }

    out
}
