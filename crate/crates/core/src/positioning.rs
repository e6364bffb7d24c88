//! RSS-based positioning: iso-RSS circles around each LED's floor
//! projection, the radical-axis solve for 2D, and a height search using the
//! known PD separation for 3D.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{link_stats, los_gain_radial, NoiseModel};
use crate::error::{Error, Result};
use crate::modem::Pilot;
use crate::scene::{cm_to_m, LedConfig, PdConfig, RicianMode, ScenarioConfig, Vec3};

/// Mean square of each LED's debiased pilot observations.
pub fn measure_rss(obs_per_led: &[Vec<f64>]) -> Result<Vec<f64>> {
    obs_per_led
        .iter()
        .enumerate()
        .map(|(i, obs)| {
            if obs.is_empty() {
                Err(Error::Length(format!("no pilot observations for LED {i}")))
            } else {
                Ok(obs.iter().map(|y| y * y).sum::<f64>() / obs.len() as f64)
            }
        })
        .collect()
}

/// Per-PD, per-LED RSS from an N_r x n_P block of debiased pilot observations.
pub fn pilot_rss(debiased: &DMatrix<f64>, schedule: &[Pilot], n_t: usize) -> Result<DMatrix<f64>> {
    if debiased.ncols() != schedule.len() {
        return Err(Error::Length(format!(
            "{} observations for {} pilots",
            debiased.ncols(),
            schedule.len()
        )));
    }
    let mut out = DMatrix::zeros(debiased.nrows(), n_t);
    for r in 0..debiased.nrows() {
        let mut groups = vec![Vec::new(); n_t];
        for (p, pilot) in schedule.iter().enumerate() {
            groups[pilot.led_index].push(debiased[(r, p)]);
        }
        for (t, v) in measure_rss(&groups)?.into_iter().enumerate() {
            out[(r, t)] = v;
        }
    }
    Ok(out)
}

/// Expected RSS as a function of horizontal LED-PD distance at a fixed height:
/// A² μ(r)² (1 + 1/K) + σ²_w.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialRssModel {
    order: f64,
    area_m2: f64,
    fov_deg: f64,
    gain_factor: f64,
    dz_m: f64,
    /// A² (1 + 1/K).
    power_scale: f64,
    pub floor: f64,
}

impl RadialRssModel {
    /// `nlos_ratio` is 1/K; zero for a LOS-only reference.
    pub fn new(led: &LedConfig, pd: &PdConfig, height_cm: f64, pilot_amplitude: f64, nlos_ratio: f64, noise: &NoiseModel) -> Result<Self> {
        if !(height_cm < led.position.z) {
            return Err(Error::Geometry(format!(
                "height {height_cm} cm is not below the LED at {} cm",
                led.position.z
            )));
        }
        Ok(RadialRssModel {
            order: led.order(),
            area_m2: pd.area_cm2 * 1e-4,
            fov_deg: pd.fov_half_angle_deg,
            gain_factor: pd.optical_gain_factor,
            dz_m: cm_to_m(led.position.z - height_cm),
            power_scale: pilot_amplitude * pilot_amplitude * (1.0 + nlos_ratio),
            floor: noise.sigma2_w,
        })
    }

    /// Expected RSS at horizontal distance `r_cm`.
    pub fn rss(&self, r_cm: f64) -> f64 {
        let h = los_gain_radial(self.order, self.area_m2, self.fov_deg, self.gain_factor, cm_to_m(r_cm), self.dz_m);
        self.power_scale * h * h + self.floor
    }

    pub fn max_rss(&self) -> f64 {
        self.rss(0.0)
    }

    /// Horizontal radius of the FoV edge, infinite at 90°.
    pub fn fov_radius_cm(&self) -> f64 {
        if self.fov_deg >= 90.0 {
            f64::INFINITY
        } else {
            self.dz_m * self.fov_deg.to_radians().tan() * 100.0
        }
    }

    /// Invert the forward model. μ² ∝ dz^{2(m+1)} / (r² + dz²)^{m+3} has a
    /// closed-form inverse; readings weaker than the FoV edge clamp to it.
    pub fn radius(&self, rss: f64) -> Result<f64> {
        let max = self.max_rss();
        if !(rss > self.floor) {
            return Err(Error::OutOfRange(format!("RSS {rss:e} at or below the ambient floor {:e}", self.floor)));
        }
        if rss > max {
            return Err(Error::OutOfRange(format!("RSS {rss:e} exceeds the beneath-LED maximum {max:e}")));
        }
        let m = self.order;
        let c = (m + 1.0) * self.area_m2 * self.gain_factor / (2.0 * std::f64::consts::PI);
        let mu2 = (rss - self.floor) / self.power_scale;
        // μ = c dz^{m+1} / d^{m+3}
        let d2 = (c * c * self.dz_m.powf(2.0 * (m + 1.0)) / mu2).powf(1.0 / (m + 3.0));
        let r_cm = (d2 - self.dz_m * self.dz_m).max(0.0).sqrt() * 100.0;
        Ok(r_cm.min(self.fov_radius_cm()))
    }
}

/// How iso-RSS radii are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusMode {
    /// Invert the continuous forward model.
    #[default]
    Analytic,
    /// Horizontal distance of the reference-grid point whose expected RSS is
    /// nearest the measurement.
    Grid,
}

/// How the radical axes are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisSolve {
    /// All pairwise axes in one least-squares solve.
    #[default]
    LeastSquares,
    /// Centroid of the triangle cut by three axes.
    TriangleCentroid,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PositioningOptions {
    pub radius_mode: RadiusMode,
    pub axis_solve: AxisSolve,
    /// Ignore the NLOS term in the reference model.
    pub los_only_reference: bool,
}

fn nlos_ratio(cfg: &ScenarioConfig, opts: &PositioningOptions) -> f64 {
    match cfg.rician {
        _ if opts.los_only_reference => 0.0,
        RicianMode::Fixed { k } => 1.0 / k,
        // Position-dependent K has no radial form; the reference stays LOS.
        RicianMode::Geometric { .. } => 0.0,
    }
}

/// Forward models for every LED as seen by PD `pd_index` at `height_cm`.
pub fn radial_models(cfg: &ScenarioConfig, pd_index: usize, height_cm: f64, noise: &NoiseModel, opts: &PositioningOptions) -> Result<Vec<RadialRssModel>> {
    let pd = &cfg.pds[pd_index];
    let a = cfg.modulation.scale;
    let q = nlos_ratio(cfg, opts);
    cfg.leds
        .iter()
        .map(|led| RadialRssModel::new(led, pd, height_cm, a, q, noise))
        .collect()
}

/// Iso-RSS radius in cm for one LED.
pub fn radius_from_rss(rss: f64, model: &RadialRssModel, mode: RadiusMode, led: &LedConfig, cfg: &ScenarioConfig) -> Result<f64> {
    match mode {
        RadiusMode::Analytic => model.radius(rss),
        RadiusMode::Grid => {
            if !(rss > model.floor) || rss > model.max_rss() {
                return model.radius(rss);
            }
            let (xs, ys) = grid_axes(cfg);
            let mut best = (f64::INFINITY, 0.0);
            for &y in &ys {
                for &x in &xs {
                    let r = (x - led.position.x).hypot(y - led.position.y);
                    let diff = (model.rss(r) - rss).abs();
                    if diff < best.0 {
                        best = (diff, r);
                    }
                }
            }
            Ok(best.1)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle2D {
    pub center: [f64; 2],
    pub radius: f64,
}

fn axis_row(a: &Circle2D, b: &Circle2D) -> ([f64; 2], f64) {
    let [ax, ay] = a.center;
    let [bx, by] = b.center;
    (
        [2.0 * (bx - ax), 2.0 * (by - ay)],
        bx * bx + by * by - ax * ax - ay * ay - (b.radius * b.radius - a.radius * a.radius),
    )
}

fn intersect(l1: ([f64; 2], f64), l2: ([f64; 2], f64)) -> Result<[f64; 2]> {
    let m = Matrix2::new(l1.0[0], l1.0[1], l2.0[0], l2.0[1]);
    let scale = m.norm_squared();
    if m.determinant().abs() <= 1e-12 * scale {
        return Err(Error::Collinear);
    }
    let p = m.try_inverse().ok_or(Error::Collinear)? * Vector2::new(l1.1, l2.1);
    Ok([p.x, p.y])
}

/// Point minimizing the squared residuals of the radical-axis equations.
pub fn radical_axis_position_2d(circles: &[Circle2D], solve: AxisSolve) -> Result<[f64; 2]> {
    if circles.len() < 2 {
        return Err(Error::InsufficientCircles { usable: circles.len(), needed: 2 });
    }
    match solve {
        AxisSolve::LeastSquares => {
            let mut ata = Matrix2::zeros();
            let mut atb = Vector2::zeros();
            for i in 0..circles.len() {
                for j in i + 1..circles.len() {
                    let (a, b) = axis_row(&circles[i], &circles[j]);
                    let a = Vector2::new(a[0], a[1]);
                    ata += a * a.transpose();
                    atb += a * b;
                }
            }
            let eig = ata.symmetric_eigenvalues();
            if eig.min() <= 1e-12 * eig.max() {
                return Err(Error::Collinear);
            }
            let p = ata.try_inverse().ok_or(Error::Collinear)? * atb;
            Ok([p.x, p.y])
        }
        AxisSolve::TriangleCentroid => {
            if circles.len() < 3 {
                return Err(Error::InsufficientCircles { usable: circles.len(), needed: 3 });
            }
            // Three pairwise non-parallel axes, drawing on a fourth circle when
            // there is one; three circles alone give concurrent axes.
            let pairs: Vec<(usize, usize)> = (0..circles.len())
                .flat_map(|i| (i + 1..circles.len()).map(move |j| (i, j)))
                .collect();
            let spans = |t: &[(usize, usize)]| {
                let mut ids: Vec<usize> = t.iter().flat_map(|&(i, j)| [i, j]).collect();
                ids.sort_unstable();
                ids.dedup();
                ids.len()
            };
            let want = circles.len().min(4);
            let mut chosen = None;
            'search: for a in 0..pairs.len() {
                for b in a + 1..pairs.len() {
                    for c in b + 1..pairs.len() {
                        let t = [pairs[a], pairs[b], pairs[c]];
                        let rows = t.map(|(i, j)| axis_row(&circles[i], &circles[j]));
                        let ok = [(0, 1), (1, 2), (0, 2)]
                            .iter()
                            .all(|&(u, v)| intersect(rows[u], rows[v]).is_ok());
                        if ok && spans(&t) >= want {
                            chosen = Some(rows);
                            break 'search;
                        }
                    }
                }
            }
            let axes = chosen.ok_or(Error::Collinear)?;
            let mut sum = [0.0; 2];
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                let p = intersect(axes[a], axes[b])?;
                sum[0] += p[0] / 3.0;
                sum[1] += p[1] / 3.0;
            }
            Ok(sum)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub coords: Vec3,
    pub per_axis_error: Option<Vec3>,
    pub euclidean_error_cm: Option<f64>,
}

impl PositionEstimate {
    pub fn new(coords: Vec3) -> Self {
        PositionEstimate { coords, per_axis_error: None, euclidean_error_cm: None }
    }

    pub fn with_truth(mut self, truth: Vec3) -> Self {
        let e = self.coords - truth;
        self.per_axis_error = Some(e);
        self.euclidean_error_cm = Some(e.norm());
        self
    }
}

/// Minimum number of circles for a 2D fix.
pub const MIN_CIRCLES: usize = 3;

/// 2D fix for PD `pd_index` assumed at `height_cm`, from one RSS per LED.
pub fn position_2d(
    rss: &[f64],
    cfg: &ScenarioConfig,
    pd_index: usize,
    height_cm: f64,
    noise: &NoiseModel,
    opts: &PositioningOptions,
) -> Result<PositionEstimate> {
    let models = radial_models(cfg, pd_index, height_cm, noise, opts)?;
    position_2d_with_models(rss, cfg, &models, height_cm, opts)
}

fn position_2d_with_models(
    rss: &[f64],
    cfg: &ScenarioConfig,
    models: &[RadialRssModel],
    height_cm: f64,
    opts: &PositioningOptions,
) -> Result<PositionEstimate> {
    if rss.len() != cfg.n_t() {
        return Err(Error::Length(format!("{} RSS values for {} LEDs", rss.len(), cfg.n_t())));
    }
    let circles: Vec<Circle2D> = cfg
        .leds
        .iter()
        .zip(models)
        .zip(rss)
        .filter_map(|((led, model), &v)| {
            radius_from_rss(v, model, opts.radius_mode, led, cfg).ok().map(|radius| Circle2D {
                center: [led.position.x, led.position.y],
                radius,
            })
        })
        .collect();
    if circles.len() < MIN_CIRCLES {
        return Err(Error::InsufficientCircles { usable: circles.len(), needed: MIN_CIRCLES });
    }
    let [x, y] = radical_axis_position_2d(&circles, opts.axis_solve)?;
    Ok(PositionEstimate::new(Vec3::new(x, y, height_cm)))
}

/// Candidate receiver heights: multiples of the height resolution below the
/// LED plane down to the floor, in ascending order.
pub fn height_grid(cfg: &ScenarioConfig) -> Vec<f64> {
    let top = cfg.led_plane_cm();
    let res = cfg.room.height_grid_resolution_cm;
    let mut out: Vec<f64> = (1..)
        .map(|k| top - k as f64 * res)
        .take_while(|&z| z >= -1e-9)
        .collect();
    out.reverse();
    out
}

/// Index minimizing |distance - d|; `None` entries are skipped and ties go
/// to the lower index (lower height).
pub fn select_height(distances: &[Option<f64>], d: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, dist) in distances.iter().enumerate() {
        if let Some(v) = dist {
            let gap = (v - d).abs();
            if best.is_none_or(|(_, g)| gap < g) {
                best = Some((i, gap));
            }
        }
    }
    best.map(|(i, _)| i)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Position3d {
    pub pds: [PositionEstimate; 2],
    pub height_cm: f64,
    pub heights: Vec<f64>,
    /// Inter-PD distance of the two 2D fixes per height, where both succeeded.
    pub distances: Vec<Option<f64>>,
}

/// 3D fix: solve 2D at every candidate height for both PDs and keep the
/// height whose inter-PD distance best matches the known separation.
pub fn position_3d(rss_pd0: &[f64], rss_pd1: &[f64], cfg: &ScenarioConfig, noise: &NoiseModel, opts: &PositioningOptions) -> Result<Position3d> {
    if cfg.n_r() < 2 {
        return Err(Error::Domain("3D positioning needs two photodiodes".into()));
    }
    let d = cfg.pd_separation_cm().unwrap_or(0.0);
    let heights = height_grid(cfg);
    let mut last_err = Error::InsufficientCircles { usable: 0, needed: MIN_CIRCLES };
    let mut fixes = Vec::with_capacity(heights.len());
    for &z in &heights {
        let fix = position_2d(rss_pd0, cfg, 0, z, noise, opts)
            .and_then(|a| position_2d(rss_pd1, cfg, 1, z, noise, opts).map(|b| (a, b)));
        match fix {
            Ok(pair) => fixes.push(Some(pair)),
            Err(e) => {
                last_err = e;
                fixes.push(None);
            }
        }
    }
    let distances: Vec<Option<f64>> = fixes
        .iter()
        .map(|f| f.map(|(a, b)| a.coords.horizontal_distance(&b.coords)))
        .collect();
    let Some(k) = select_height(&distances, d) else {
        return Err(last_err);
    };
    let (a, b) = fixes[k].expect("selected height has a fix");
    Ok(Position3d { pds: [a, b], height_cm: heights[k], heights, distances })
}

/// Grid coordinates along x and y covering the whole floor plan.
pub fn grid_axes(cfg: &ScenarioConfig) -> (Vec<f64>, Vec<f64>) {
    let res = cfg.room.grid_resolution_cm;
    let axis = |len: f64| {
        let n = (len / res + 1e-9).floor() as usize;
        (0..=n).map(|i| -len / 2.0 + i as f64 * res).collect::<Vec<_>>()
    };
    (axis(cfg.room.dims.x), axis(cfg.room.dims.y))
}

/// Expected RSS A² Ω + σ²_w per LED on a floor-plan grid at one height.
#[derive(Debug, Clone, PartialEq)]
pub struct RssTable {
    pub height_cm: f64,
    pub resolution_cm: f64,
    pub grid_origin: Vec3,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `per_led[t][iy * xs.len() + ix]`.
    pub per_led: Vec<Vec<f64>>,
}

impl RssTable {
    pub fn at(&self, led: usize, ix: usize, iy: usize) -> f64 {
        self.per_led[led][iy * self.xs.len() + ix]
    }

    /// Grid point with the expected RSS nearest `rss` for one LED.
    pub fn nearest(&self, led: usize, rss: f64) -> (f64, f64) {
        let (k, _) = self.per_led[led]
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |best, (k, &v)| {
                let diff = (v - rss).abs();
                if diff < best.1 { (k, diff) } else { best }
            });
        (self.xs[k % self.xs.len()], self.ys[k / self.xs.len()])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x_cm", "y_cm", "led_index", "expected_rss"]).map_err(csv_err)?;
        for (iy, y) in self.ys.iter().enumerate() {
            for (ix, x) in self.xs.iter().enumerate() {
                for t in 0..self.per_led.len() {
                    w.write_record(&[x.to_string(), y.to_string(), t.to_string(), format!("{:e}", self.at(t, ix, iy))])
                        .map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Reference RSS table for PD 0's optics at `height_cm`, using the full link
/// model (LOS plus NLOS variance) at every grid point.
pub fn build_reference_grid(cfg: &ScenarioConfig, height_cm: f64, noise: &NoiseModel) -> Result<RssTable> {
    if !(height_cm >= 0.0 && height_cm < cfg.led_plane_cm()) {
        return Err(Error::Geometry(format!(
            "table height {height_cm} cm must lie in [0, {})",
            cfg.led_plane_cm()
        )));
    }
    let (xs, ys) = grid_axes(cfg);
    let a2 = cfg.modulation.scale * cfg.modulation.scale;
    let single = ScenarioConfig { pds: vec![cfg.pds[0].clone()], ..cfg.clone() };
    let rows: Vec<Vec<Vec<f64>>> = ys
        .par_iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| {
                    let p = Vec3::new(x, y, height_cm);
                    let stats = link_stats(&single, &[p])?;
                    Ok(stats[0].iter().map(|s| a2 * s.omega + noise.sigma2_w).collect())
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut per_led = vec![Vec::with_capacity(xs.len() * ys.len()); cfg.n_t()];
    for row in rows {
        for point in row {
            for (t, v) in point.into_iter().enumerate() {
                per_led[t].push(v);
            }
        }
    }
    Ok(RssTable {
        height_cm,
        resolution_cm: cfg.room.grid_resolution_cm,
        grid_origin: Vec3::new(xs[0], ys[0], height_cm),
        xs,
        ys,
        per_led,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{los_gain, rician_params};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn noiseless_rss(cfg: &ScenarioConfig, pd: usize, p: Vec3) -> Vec<f64> {
        let a2 = cfg.modulation.scale.powi(2);
        cfg.leds.iter().map(|l| a2 * los_gain(l, p, &cfg.pds[pd]).unwrap().powi(2)).collect()
    }

    #[test]
    fn rss_examples() {
        assert_eq!(measure_rss(&[vec![2.0, -2.0]]).unwrap(), vec![4.0]);
        let a = measure_rss(&[vec![0.3, -0.7, 0.1]]).unwrap()[0];
        let b = measure_rss(&[vec![0.6, -1.4, 0.2]]).unwrap()[0];
        assert_relative_eq!(b, 4.0 * a, max_relative = 1e-14);
        assert!(matches!(measure_rss(&[vec![]]), Err(Error::Length(_))));
    }

    fn m1_led() -> LedConfig {
        LedConfig {
            position: Vec3::new(0.0, 0.0, 300.0),
            transmit_power_w: 20.0,
            half_angle_deg: None,
            lambertian_order: Some(1.0),
        }
    }

    fn pd90() -> PdConfig {
        PdConfig { offset: Vec3::default(), area_cm2: 1.0, fov_half_angle_deg: 90.0, optical_gain_factor: 1.0 }
    }

    /// Bisection on the forward model, used as the inversion oracle.
    fn bisect(model: &RadialRssModel, rss: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1.0);
        while model.rss(hi) > rss {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if model.rss(mid) > rss { lo = mid } else { hi = mid }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn radius_inversion_example() {
        let model = RadialRssModel::new(&m1_led(), &pd90(), 0.0, 1.0, 0.0, &NoiseModel::noiseless()).unwrap();
        let h = 9e-4 / (std::f64::consts::PI * 85.5625);
        assert_relative_eq!(model.rss(50.0).sqrt(), h, max_relative = 1e-12);
        assert_relative_eq!(h, 3.3482e-6, max_relative = 1e-4);
        let r = model.radius(h * h).unwrap();
        assert!((r - 50.0).abs() < 1e-4, "{r}");
        assert_relative_eq!(r, bisect(&model, h * h), max_relative = 1e-9);
        assert_eq!(model.radius(model.max_rss()).unwrap(), 0.0);
    }

    #[test]
    fn radius_out_of_range() {
        let noise = NoiseModel { sigma2_w: 1e-14, snr_db: 0.0, p_ref: 0.0 };
        let model = RadialRssModel::new(&m1_led(), &pd90(), 0.0, 1.0, 0.0, &noise).unwrap();
        assert!(matches!(model.radius(5e-15), Err(Error::OutOfRange(_))));
        assert!(matches!(model.radius(1e-14), Err(Error::OutOfRange(_))));
        assert!(matches!(model.radius(model.max_rss() * 1.01), Err(Error::OutOfRange(_))));
    }

    #[test]
    fn weak_reading_clamps_to_fov_edge() {
        let mut pd = pd90();
        pd.fov_half_angle_deg = 60.0;
        let model = RadialRssModel::new(&m1_led(), &pd, 0.0, 1.0, 0.0, &NoiseModel::noiseless()).unwrap();
        let r = model.radius(1e-30).unwrap();
        assert_relative_eq!(r, 300.0 * 3f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn radical_center_examples() {
        let c = |x: f64, y: f64, r: f64| Circle2D { center: [x, y], radius: r };
        let s2 = 2f64.sqrt();
        let p = radical_axis_position_2d(&[c(0., 0., s2), c(2., 0., s2), c(0., 2., s2)], AxisSolve::LeastSquares).unwrap();
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[1], 1.0, epsilon = 1e-12);
        let p = radical_axis_position_2d(&[c(0., 0., 1.), c(2., 0., 1.), c(1., 2., s2)], AxisSolve::LeastSquares).unwrap();
        assert_relative_eq!(p[0], 1.0, epsilon = 1e-12);
        assert!(matches!(
            radical_axis_position_2d(&[c(0., 0., 1.), c(1., 0., 1.), c(3., 0., 2.)], AxisSolve::LeastSquares),
            Err(Error::Collinear)
        ));
    }

    /// Brute-force minimizer of the summed squared axis residuals on a
    /// 1 mm lattice around the answer.
    fn brute_force(circles: &[Circle2D], around: [f64; 2]) -> [f64; 2] {
        let cost = |x: f64, y: f64| {
            let mut s = 0.0;
            for i in 0..circles.len() {
                for j in i + 1..circles.len() {
                    let (a, b) = axis_row(&circles[i], &circles[j]);
                    s += (a[0] * x + a[1] * y - b).powi(2);
                }
            }
            s
        };
        let mut best = (f64::INFINITY, around);
        for i in -200..=200 {
            for j in -200..=200 {
                let (x, y) = (around[0] + i as f64 * 0.1, around[1] + j as f64 * 0.1);
                let v = cost(x, y);
                if v < best.0 {
                    best = (v, [x, y]);
                }
            }
        }
        best.1
    }

    #[test]
    fn perturbed_radii_stay_close() {
        let s2 = 100.0 * 2f64.sqrt() * 1.01;
        let circles = [
            Circle2D { center: [0.0, 0.0], radius: s2 },
            Circle2D { center: [200.0, 0.0], radius: s2 },
            Circle2D { center: [0.0, 200.0], radius: s2 },
        ];
        let p = radical_axis_position_2d(&circles, AxisSolve::LeastSquares).unwrap();
        assert!((p[0] - 100.0).hypot(p[1] - 100.0) < 3.0);
        let b = brute_force(&circles, [100.0, 100.0]);
        assert!((p[0] - b[0]).hypot(p[1] - b[1]) < 0.1);
    }

    #[test]
    fn noiseless_2d_fixes() {
        let cfg = ScenarioConfig::default();
        let noise = NoiseModel::noiseless();
        for truth in [Vec3::new(0.0, 0.0, 0.0), Vec3::new(100.0, 100.0, 0.0), Vec3::new(-37.0, 81.0, 0.0)] {
            let rss = noiseless_rss(&cfg, 0, truth);
            let est = position_2d(&rss, &cfg, 0, 0.0, &noise, &PositioningOptions::default())
                .unwrap()
                .with_truth(truth);
            assert!(est.euclidean_error_cm.unwrap() < 1e-3, "{truth:?} {est:?}");
        }
    }

    #[test]
    fn grid_mode_within_resolution() {
        let cfg = ScenarioConfig::default();
        let truth = Vec3::new(100.0, 100.0, 0.0);
        let rss = noiseless_rss(&cfg, 0, truth);
        let opts = PositioningOptions { radius_mode: RadiusMode::Grid, ..Default::default() };
        let est = position_2d(&rss, &cfg, 0, 0.0, &NoiseModel::noiseless(), &opts).unwrap().with_truth(truth);
        assert!(est.euclidean_error_cm.unwrap() <= 5.0 / 2f64.sqrt(), "{est:?}");
    }

    #[test]
    fn triangle_centroid_agrees_on_consistent_data() {
        let cfg = ScenarioConfig::default();
        let truth = Vec3::new(-60.0, 20.0, 0.0);
        let rss = noiseless_rss(&cfg, 0, truth);
        let opts = PositioningOptions { axis_solve: AxisSolve::TriangleCentroid, ..Default::default() };
        let est = position_2d(&rss, &cfg, 0, 0.0, &NoiseModel::noiseless(), &opts).unwrap().with_truth(truth);
        assert!(est.euclidean_error_cm.unwrap() < 1e-3);
    }

    #[test]
    fn height_selection() {
        let d = 10.0;
        assert_eq!(select_height(&[Some(d + 3.0), Some(d + 0.4), Some(d + 7.0)], d), Some(1));
        assert_eq!(select_height(&[None, Some(d + 1.0), Some(d - 1.0)], d), Some(1));
        assert_eq!(select_height(&[None, None], d), None);
    }

    #[test]
    fn noiseless_3d_fix() {
        let mut cfg = ScenarioConfig::default();
        for pd in &mut cfg.pds {
            pd.fov_half_angle_deg = 90.0;
        }
        let reference = Vec3::new(100.0, 100.0, 150.0);
        let p = cfg.pd_positions(reference);
        let est = position_3d(
            &noiseless_rss(&cfg, 0, p[0]),
            &noiseless_rss(&cfg, 1, p[1]),
            &cfg,
            &NoiseModel::noiseless(),
            &PositioningOptions::default(),
        )
        .unwrap();
        assert_eq!(est.height_cm, 150.0);
        assert!(est.pds[0].coords.horizontal_distance(&p[0]) < 1e-3);
        assert_eq!(est.heights.len(), 300);
    }

    #[test]
    fn reference_grid() {
        let cfg = ScenarioConfig::default();
        let table = build_reference_grid(&cfg, 0.0, &NoiseModel::noiseless()).unwrap();
        assert_eq!((table.xs.len(), table.ys.len()), (61, 61));
        // Beneath LED 0 at (50, 50) is its maximum.
        let max = table.per_led[0].iter().cloned().fold(0.0, f64::max);
        assert_eq!(table.nearest(0, max), (50.0, 50.0));
        let g = los_gain(&cfg.leds[0], Vec3::new(50.0, 50.0, 0.0), &cfg.pds[0]).unwrap();
        assert_relative_eq!(table.at(0, 40, 40), g * g, max_relative = 1e-12);
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 61 * 61 * 4);
        assert!(text.starts_with("x_cm,y_cm,led_index,expected_rss\n"));
    }

    #[test]
    fn reference_includes_nlos() {
        let mut cfg = ScenarioConfig::default();
        cfg.rician = RicianMode::Fixed { k: 4.0 };
        let noise = NoiseModel { sigma2_w: 1e-15, snr_db: 0.0, p_ref: 0.0 };
        let table = build_reference_grid(&cfg, 0.0, &noise).unwrap();
        let mu = los_gain(&cfg.leds[2], Vec3::new(0.0, 0.0, 0.0), &cfg.pds[0]).unwrap();
        let s = rician_params(mu, 4.0).unwrap();
        assert_relative_eq!(table.at(2, 30, 30), s.omega + 1e-15, max_relative = 1e-12);
        let models = radial_models(&cfg, 0, 0.0, &noise, &PositioningOptions::default()).unwrap();
        let r = models[2].radius(table.at(2, 30, 30)).unwrap();
        assert_relative_eq!(r, 50.0 * 2f64.sqrt(), max_relative = 1e-9);
    }

    proptest! {
        #[test]
        fn forward_inverse(x in -149.0f64..149.0, y in -149.0f64..149.0, z in 0.0f64..250.0) {
            let cfg = ScenarioConfig::default();
            let noise = NoiseModel { sigma2_w: 1e-16, snr_db: 0.0, p_ref: 0.0 };
            let models = radial_models(&cfg, 0, z, &noise, &PositioningOptions::default()).unwrap();
            let p = Vec3::new(x, y, z);
            for (led, model) in cfg.leds.iter().zip(&models) {
                let h = los_gain(led, p, &cfg.pds[0]).unwrap();
                prop_assume!(h > 0.0);
                let r_true = led.position.horizontal_distance(&p);
                let r = model.radius(h * h + 1e-16).unwrap();
                prop_assert!((r - r_true).abs() <= 1e-6 * r_true.max(1.0));
            }
        }

        #[test]
        fn radical_axis_scale_invariant(
            px in -100.0f64..100.0, py in -100.0f64..100.0, lambda in 0.1f64..10.0,
        ) {
            let centers = [[50.0, 50.0], [50.0, -50.0], [-50.0, 50.0], [-50.0, -50.0]];
            let circles: Vec<Circle2D> = centers
                .iter()
                .map(|c| Circle2D { center: *c, radius: (c[0] - px).hypot(c[1] - py) * 1.02 })
                .collect();
            let scaled: Vec<Circle2D> = circles
                .iter()
                .map(|c| Circle2D { center: [c.center[0] * lambda, c.center[1] * lambda], radius: c.radius * lambda })
                .collect();
            let a = radical_axis_position_2d(&circles, AxisSolve::LeastSquares).unwrap();
            let b = radical_axis_position_2d(&scaled, AxisSolve::LeastSquares).unwrap();
            prop_assert!((a[0] * lambda - b[0]).abs() < 1e-9 * lambda * 200.0);
            prop_assert!((a[1] * lambda - b[1]).abs() < 1e-9 * lambda * 200.0);
        }

        #[test]
        fn consistent_circles_any_subset(px in -140.0f64..140.0, py in -140.0f64..140.0, skip in 0usize..4) {
            let centers = [[50.0, 50.0], [50.0, -50.0], [-50.0, 50.0], [-50.0, -50.0]];
            let circles: Vec<Circle2D> = centers
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != skip)
                .map(|(_, c)| Circle2D { center: *c, radius: (c[0] - px).hypot(c[1] - py) })
                .collect();
            let p = radical_axis_position_2d(&circles, AxisSolve::LeastSquares).unwrap();
            prop_assert!((p[0] - px).abs() <= 1e-9 * 150.0);
            prop_assert!((p[1] - py).abs() <= 1e-9 * 150.0);
        }
    }
}
