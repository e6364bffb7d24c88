//! Optical channel: Lambertian LOS gains, Rician link statistics, channel
//! matrix sampling and SNR calibration.
//!
//! Geometry arrives in centimeters and is converted to meters here, so every
//! gain is the dimensionless SI value.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modem::PamConstellation;
use crate::scene::{cm_to_m, LedConfig, PdConfig, RicianMode, RoomConfig, ScenarioConfig, SnrReference, Vec3};

/// Lower and upper clamp applied to the geometric K-factor.
pub const K_MIN: f64 = 1e-3;
pub const K_MAX: f64 = 1e9;

/// Rician statistics of one LED-PD link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub mu: f64,
    pub sigma2: f64,
    pub omega: f64,
    pub k_factor: f64,
}

impl LinkStats {
    pub fn los_only(mu: f64) -> Self {
        LinkStats { mu, sigma2: 0.0, omega: mu * mu, k_factor: f64::INFINITY }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }
}

/// N_r x N_t link statistics, row = PD, column = LED.
pub type StatsGrid = Vec<Vec<LinkStats>>;

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub stats: StatsGrid,
    pub gains: DMatrix<f64>,
    pub seed_tag: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma2_w: f64,
    pub snr_db: f64,
    pub p_ref: f64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel { sigma2_w: 0.0, snr_db: f64::INFINITY, p_ref: 0.0 }
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma2_w.sqrt()
    }
}

/// Lambertian gain as a function of horizontal distance `r_m` and vertical
/// drop `dz_m`, both in meters.
pub fn los_gain_radial(order: f64, area_m2: f64, fov_deg: f64, gain_factor: f64, r_m: f64, dz_m: f64) -> f64 {
    let d2 = r_m * r_m + dz_m * dz_m;
    let cos_phi = dz_m / d2.sqrt();
    if cos_phi < fov_deg.to_radians().cos() {
        return 0.0;
    }
    (order + 1.0) * area_m2 / (2.0 * std::f64::consts::PI * d2) * cos_phi.powf(order + 1.0) * gain_factor
}

/// LOS DC gain from `led` to an upward-facing PD at `pd_position`.
pub fn los_gain(led: &LedConfig, pd_position: Vec3, pd: &PdConfig) -> Result<f64> {
    let delta = led.position - pd_position;
    if delta.norm() == 0.0 {
        return Err(Error::Geometry("LED and PD coincide".into()));
    }
    if delta.z <= 0.0 {
        return Err(Error::Geometry(format!(
            "PD at z = {} cm is not below the LED at z = {} cm",
            pd_position.z, led.position.z
        )));
    }
    Ok(los_gain_radial(
        led.order(),
        pd.area_cm2 * 1e-4,
        pd.fov_half_angle_deg,
        pd.optical_gain_factor,
        cm_to_m(led.position.horizontal_distance(&pd_position)),
        cm_to_m(delta.z),
    ))
}

/// μ = h_LOS, σ² = μ²/K.
pub fn rician_params(h_los: f64, k_factor: f64) -> Result<LinkStats> {
    if !(h_los >= 0.0 && h_los.is_finite()) {
        return Err(Error::Domain(format!("LOS gain must be finite and >= 0, got {h_los}")));
    }
    if !(k_factor >= 0.0) {
        return Err(Error::Domain(format!("K must be >= 0, got {k_factor}")));
    }
    if k_factor == 0.0 && h_los > 0.0 {
        return Err(Error::Domain(
            "K = 0 with a nonzero LOS gain; declare pure-diffuse links with h_los = 0".into(),
        ));
    }
    let sigma2 = if h_los == 0.0 || k_factor.is_infinite() { 0.0 } else { h_los * h_los / k_factor };
    Ok(LinkStats { mu: h_los, sigma2, omega: h_los * h_los + sigma2, k_factor })
}

/// The two factors of the wall-segment K expression, before clamping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KFactorBreakdown {
    /// ℓ² Δs / (ρ D⁴), SI units.
    pub prefactor: f64,
    /// Σ_j ζ_j √(D₁² - (z - z_j)²) √(D₂² - (z_r - z_j)²) / (D₁⁴ D₂⁴).
    pub diffuse_sum: f64,
    pub segments: usize,
}

impl KFactorBreakdown {
    pub fn raw(&self) -> f64 {
        if self.diffuse_sum > 0.0 {
            self.prefactor / self.diffuse_sum
        } else {
            f64::INFINITY
        }
    }
}

/// Centers of the wall segments, in meters, with the origin at the room's
/// floor center.
fn wall_segments(room: &RoomConfig, segment_m: f64) -> Vec<[f64; 3]> {
    let (lx, ly, lz) = (cm_to_m(room.dims.x), cm_to_m(room.dims.y), cm_to_m(room.dims.z));
    let cells = |edge: f64| ((edge / segment_m).round() as usize).max(1);
    let centers = |edge: f64, offset: f64| {
        let n = cells(edge);
        (0..n).map(move |i| offset + (i as f64 + 0.5) * edge / n as f64)
    };
    let mut out = Vec::new();
    for z in centers(lz, 0.0) {
        for y in centers(ly, -ly / 2.0) {
            out.push([lx / 2.0, y, z]);
            out.push([-lx / 2.0, y, z]);
        }
        for x in centers(lx, -lx / 2.0) {
            out.push([x, ly / 2.0, z]);
            out.push([x, -ly / 2.0, z]);
        }
    }
    out
}

/// Evaluate the wall-reflection K expression term by term. ℓ is the room
/// height in meters and D the direct LED-PD distance. Only the four walls are
/// summed; segments with a negative radicand are skipped.
pub fn k_factor_breakdown(room: &RoomConfig, led_position: Vec3, pd_position: Vec3, segment_size_cm: f64) -> Result<KFactorBreakdown> {
    if !(segment_size_cm > 0.0) {
        return Err(Error::Domain(format!("segment size must be > 0, got {segment_size_cm}")));
    }
    if !(room.contains(&led_position) && room.contains(&pd_position)) {
        return Err(Error::Geometry("LED and PD must lie inside the room".into()));
    }
    let m = |v: Vec3| [cm_to_m(v.x), cm_to_m(v.y), cm_to_m(v.z)];
    let (tx, rx) = (m(led_position), m(pd_position));
    let dist2 = |a: [f64; 3], b: [f64; 3]| (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>();
    let d2 = dist2(tx, rx);
    if d2 == 0.0 {
        return Err(Error::Geometry("LED and PD coincide".into()));
    }
    let ell = cm_to_m(room.dims.z);
    let seg = cm_to_m(segment_size_cm);
    let segments = wall_segments(room, seg);
    let mut sum = 0.0;
    for s in &segments {
        let d1sq = dist2(tx, *s);
        let d2sq = dist2(*s, rx);
        if d1sq == 0.0 || d2sq == 0.0 {
            return Err(Error::Geometry("an endpoint lies on a wall segment center".into()));
        }
        let zj = s[2];
        let r1 = d1sq - (tx[2] - zj).powi(2);
        let r2 = d2sq - (rx[2] - zj).powi(2);
        if r1 < 0.0 || r2 < 0.0 {
            continue;
        }
        let zeta = (ell + zj) * (zj - ell + 5.0);
        sum += zeta * r1.sqrt() * r2.sqrt() / (d1sq * d1sq * d2sq * d2sq);
    }
    Ok(KFactorBreakdown {
        prefactor: ell * ell * seg * seg / (room.wall_reflectivity * d2 * d2),
        diffuse_sum: sum,
        segments: segments.len(),
    })
}

/// Geometric K-factor clamped to [`K_MIN`, `K_MAX`].
pub fn k_factor_from_geometry(room: &RoomConfig, led_position: Vec3, pd_position: Vec3, segment_size_cm: f64) -> Result<f64> {
    let raw = k_factor_breakdown(room, led_position, pd_position, segment_size_cm)?.raw();
    Ok(if raw.is_nan() { K_MAX } else { raw.clamp(K_MIN, K_MAX) })
}

/// Link statistics for every (PD, LED) pair, PDs at `pd_positions`.
pub fn link_stats(cfg: &ScenarioConfig, pd_positions: &[Vec3]) -> Result<StatsGrid> {
    if pd_positions.len() != cfg.n_r() {
        return Err(Error::Length(format!(
            "{} PD positions for {} PDs",
            pd_positions.len(),
            cfg.n_r()
        )));
    }
    pd_positions
        .iter()
        .zip(&cfg.pds)
        .map(|(&pos, pd)| {
            cfg.leds
                .iter()
                .map(|led| {
                    let mu = los_gain(led, pos, pd)?;
                    let k = match cfg.rician {
                        RicianMode::Fixed { k } => k,
                        RicianMode::Geometric { segment_size_cm } => {
                            k_factor_from_geometry(&cfg.room, led.position, pos, segment_size_cm)?
                        }
                    };
                    rician_params(mu, k)
                })
                .collect()
        })
        .collect()
}

/// Draw h = μ + σ h̆ for every link. One normal is consumed per link even
/// when σ = 0 so the stream stays aligned across K values.
pub fn sample_gains<R: Rng + ?Sized>(stats: &StatsGrid, rng: &mut R) -> DMatrix<f64> {
    let n_r = stats.len();
    let n_t = stats.first().map_or(0, |r| r.len());
    let mut h = DMatrix::zeros(n_r, n_t);
    for (r, row) in stats.iter().enumerate() {
        for (t, s) in row.iter().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            h[(r, t)] = s.mu + s.sigma() * z;
        }
    }
    h
}

pub fn sample_channel_matrix<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    pd_positions: &[Vec3],
    rng: &mut R,
    seed_tag: u64,
) -> Result<ChannelRealization> {
    let stats = link_stats(cfg, pd_positions)?;
    let gains = sample_gains(&stats, rng);
    Ok(ChannelRealization { stats, gains, seed_tag })
}

/// σ²_w = Ē_s mean(μ²) / 10^(SNR/10).
pub fn noise_variance_for_snr(stats: &StatsGrid, constellation: &PamConstellation, snr_db: f64) -> Result<NoiseModel> {
    let mus: Vec<f64> = stats.iter().flatten().map(|s| s.mu).collect();
    if mus.is_empty() || mus.iter().all(|&m| m == 0.0) {
        return Err(Error::Domain("every link has zero LOS gain; SNR is undefined".into()));
    }
    let mean_mu2 = mus.iter().map(|m| m * m).sum::<f64>() / mus.len() as f64;
    let p_ref = constellation.mean_energy() * mean_mu2;
    let sigma2_w = if snr_db == f64::INFINITY { 0.0 } else { p_ref / 10f64.powf(snr_db / 10.0) };
    Ok(NoiseModel { sigma2_w, snr_db, p_ref })
}

/// Noise model for a receiver whose PDs see `receiver_stats`, honoring the
/// scenario's SNR reference.
pub fn calibrate_noise(cfg: &ScenarioConfig, receiver_stats: &StatsGrid, snr_db: f64) -> Result<NoiseModel> {
    let constellation = cfg.constellation()?;
    match cfg.snr_db.reference {
        SnrReference::Receiver => noise_variance_for_snr(receiver_stats, &constellation, snr_db),
        SnrReference::RoomCenter => {
            let stats = link_stats(cfg, &cfg.pd_positions(Vec3::new(0.0, 0.0, 0.0)))?;
            noise_variance_for_snr(&stats, &constellation, snr_db)
        }
    }
}
