//! Monte Carlo sweeps: BER, 2D and 3D positioning error, spiral trajectories
//! and empirical CDFs.
//!
//! A sweep is a set of series (one receiver position, or one position and PAM
//! order) evaluated at every SNR point. Each trial draws its channel, payload
//! and unit-variance noise once from its own stream (see [`crate::rng`]) and
//! reuses them at every SNR, scaling the noise by σ_w. Per-point sums are
//! combined in trial order, so results do not depend on the thread count.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{calibrate_noise, link_stats, sample_gains, NoiseModel, StatsGrid};
use crate::error::{Error, Result};
use crate::modem::{build_frame, crc16, DimmingPlan, FrameLayout, PamConstellation, Pilot};
use crate::positioning::{pilot_rss, position_2d, position_3d, PositioningOptions};
use crate::receiver::{estimate_channel_and_bias, ls_joint_estimate, remove_dc_bias, sm_decode_bits, Detector};
use crate::rng::trial_rng;
use crate::scene::{ScenarioConfig, Vec3};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Cap on persisted error samples per point.
pub const MAX_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub scenario: ScenarioConfig,
    pub snr_db: Vec<f64>,
    /// Frames per point for BER, position fixes per point otherwise.
    pub trials_per_point: usize,
    /// Payload bits per frame (BER only).
    pub payload_bits: usize,
    pub positioning: PositioningOptions,
}

impl SweepSpec {
    pub fn new(scenario: ScenarioConfig, snr_db: Vec<f64>, trials_per_point: usize) -> Self {
        SweepSpec {
            scenario,
            snr_db,
            trials_per_point,
            payload_bits: DEFAULT_PAYLOAD_BITS,
            positioning: PositioningOptions::default(),
        }
    }

    /// Frames needed to send at least `bits` payload bits.
    pub fn with_min_bits(mut self, bits: u64) -> Self {
        self.trials_per_point = bits.div_ceil(self.payload_bits as u64) as usize;
        self
    }

    fn check(&self) -> Result<()> {
        if self.snr_db.is_empty() {
            return Err(Error::Domain("sweep needs at least one SNR value".into()));
        }
        if self.trials_per_point == 0 {
            return Err(Error::Domain("trials per point must be >= 1".into()));
        }
        let diags = crate::scene::validate_scenario(&self.scenario);
        if !diags.is_empty() {
            return Err(Error::Validation(diags));
        }
        Ok(())
    }
}

/// Payload length divisible by every η up to 6 bits per symbol.
pub const DEFAULT_PAYLOAD_BITS: usize = 1200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub sweep_var: String,
    pub value: f64,
    /// ber, fer, mean_error_cm or height_error_cm.
    pub metric: String,
    pub position: Vec3,
    pub order: usize,
    pub mean: f64,
    pub ci_half_width: f64,
    pub trials: usize,
    /// Trials whose fix or estimate failed.
    pub failures: usize,
    pub seed: u64,
    /// RNG series id; trials 0..trials of this series replay the point.
    pub series: u32,
}

impl MetricsRecord {
    /// Metric name qualified by series coordinates, used in the CSV.
    pub fn label(&self) -> String {
        let p = self.position;
        if self.metric == "ber" || self.metric == "fer" {
            format!("{}[M={},x={},y={},z={}]", self.metric, self.order, p.x, p.y, p.z)
        } else {
            format!("{}[x={},y={},z={}]", self.metric, p.x, p.y, p.z)
        }
    }
}

/// Raw per-trial errors for one (series, SNR) point. Failed trials are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub series: u32,
    pub position: Vec3,
    pub snr_db: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub kind: String,
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub samples: Vec<SampleSet>,
}

/// Normal-approximation half-width for a proportion.
pub fn proportion_ci(p: f64, n: f64) -> f64 {
    Z95 * (p * (1.0 - p) / n).sqrt()
}

/// Sample mean and 95% half-width of the finite entries.
pub fn mean_ci(values: &[f64]) -> (f64, f64, usize) {
    let ok: Vec<f64> = values.iter().cloned().filter(|v| v.is_finite()).collect();
    let n = ok.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = ok.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY, n);
    }
    let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, Z95 * (var / n as f64).sqrt(), n)
}

fn standard_normals<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Noiseless pilot observations H x̃_p for every pilot slot, N_r x n_P.
pub fn clean_pilot_block(h: &DMatrix<f64>, schedule: &[Pilot], plan: &DimmingPlan) -> DMatrix<f64> {
    let bias = h * plan.bias();
    DMatrix::from_fn(h.nrows(), schedule.len(), |r, p| {
        schedule[p].amplitude * h[(r, schedule[p].led_index)] + bias[r]
    })
}

/// Link statistics at `reference` and the noise model for every SNR point.
fn point_models(cfg: &ScenarioConfig, reference: Vec3, snr_db: &[f64]) -> Result<(StatsGrid, Vec<NoiseModel>)> {
    let pds = cfg.pd_positions(reference);
    if let Some(p) = pds.iter().find(|p| !cfg.room.contains(p)) {
        return Err(Error::Domain(format!("PD position {p:?} lies outside the room")));
    }
    let stats = link_stats(cfg, &pds)?;
    let noise = snr_db
        .iter()
        .map(|&s| calibrate_noise(cfg, &stats, s))
        .collect::<Result<Vec<_>>>()?;
    Ok((stats, noise))
}

#[derive(Default, Clone)]
struct BerTally {
    bit_errors: u64,
    frame_errors: u64,
    failures: u64,
}

/// One frame through the full chain at every SNR.
#[allow(clippy::too_many_arguments)]
fn ber_trial(
    cfg: &ScenarioConfig,
    layout: &FrameLayout,
    plan: &DimmingPlan,
    stats: &StatsGrid,
    noise: &[NoiseModel],
    payload_bits: usize,
    seed: u64,
    series: u32,
    trial: u32,
) -> Result<Vec<BerTally>> {
    let mut rng = trial_rng(seed, series, trial);
    let h = sample_gains(stats, &mut rng);
    let bits: Vec<u8> = (0..payload_bits).map(|_| rng.random::<bool>() as u8).collect();
    let frame = build_frame(&bits, layout)?;
    let x = frame.intensities(plan)?;
    let n_slots = x.len();
    let x = DMatrix::from_fn(cfg.n_t(), n_slots, |t, k| x[k][t]);
    let clean = &h * x;
    let w = standard_normals(&mut rng, cfg.n_r(), n_slots);
    let n_p = layout.n_pilots;
    let schedule = &frame.pilots;
    let crc = crc16(&bits);

    noise
        .iter()
        .map(|nm| {
            let y = &clean + &w * nm.sigma_w();
            let pilots = y.columns(0, n_p).into_owned();
            let mut tally = BerTally::default();
            let decoded = ls_joint_estimate(&pilots, schedule, plan.psi(), plan.v_dc())
                .and_then(|est| Detector::new(&est.h_hat, &layout.constellation).map(|d| (est, d)))
                .map(|(est, det)| {
                    let results: Vec<_> = (n_p..n_slots)
                        .map(|k| {
                            let yk = DVector::from_iterator(cfg.n_r(), y.column(k).iter().cloned());
                            det.detect(remove_dc_bias(&yk, &est, plan.v_dc()).as_slice())
                        })
                        .collect();
                    sm_decode_bits(&results, cfg.n_t(), &layout.constellation)
                });
            match decoded {
                Ok(rx) => {
                    tally.bit_errors = rx.iter().zip(&bits).filter(|(a, b)| a != b).count() as u64;
                    tally.frame_errors = (crc16(&rx) != crc) as u64;
                }
                // An unusable estimate is a decoding failure: score it as
                // guessing every bit.
                Err(Error::Rank(_)) | Err(Error::DegenerateChannel) => {
                    tally.bit_errors = payload_bits as u64 / 2;
                    tally.frame_errors = 1;
                    tally.failures = 1;
                }
                Err(e) => return Err(e),
            }
            Ok(tally)
        })
        .collect()
}

/// BER and frame error rate for every (receiver, order) series at every SNR.
/// `receivers` are reference points; each PD sits at its configured offset.
pub fn run_ber_sweep(spec: &SweepSpec, receivers: &[Vec3], orders: &[usize]) -> Result<SweepResult> {
    spec.check()?;
    let mut records = Vec::new();
    let mut series = 0u32;
    for &rx in receivers {
        for &order in orders {
            let mut cfg = spec.scenario.clone();
            cfg.modulation.order = order;
            let diags = crate::scene::validate_scenario(&cfg);
            if !diags.is_empty() {
                return Err(Error::Validation(diags));
            }
            let constellation = PamConstellation::new(order, cfg.modulation.scale)?;
            let eta = crate::modem::sm_bits_per_symbol(cfg.n_t(), &constellation)?;
            if spec.payload_bits == 0 || !spec.payload_bits.is_multiple_of(eta) {
                return Err(Error::Length(format!(
                    "payload of {} bits is not a positive multiple of {eta}",
                    spec.payload_bits
                )));
            }
            let layout = FrameLayout::from_scenario(&cfg)?;
            let plan = cfg.dimming_plan()?;
            let (stats, noise) = point_models(&cfg, rx, &spec.snr_db)?;
            let n = spec.trials_per_point;
            let tallies = (0..n as u32)
                .into_par_iter()
                .map(|t| ber_trial(&cfg, &layout, &plan, &stats, &noise, spec.payload_bits, cfg.seed, series, t))
                .collect::<Result<Vec<_>>>()?;
            for (k, &snr) in spec.snr_db.iter().enumerate() {
                let mut sum = BerTally::default();
                for t in &tallies {
                    sum.bit_errors += t[k].bit_errors;
                    sum.frame_errors += t[k].frame_errors;
                    sum.failures += t[k].failures;
                }
                let bits = (n * spec.payload_bits) as f64;
                let ber = sum.bit_errors as f64 / bits;
                let fer = sum.frame_errors as f64 / n as f64;
                let base = MetricsRecord {
                    sweep_var: "snr_db".into(),
                    value: snr,
                    metric: "ber".into(),
                    position: rx,
                    order,
                    mean: ber,
                    ci_half_width: proportion_ci(ber, bits),
                    trials: n,
                    failures: sum.failures as usize,
                    seed: cfg.seed,
                    series,
                };
                records.push(MetricsRecord {
                    metric: "fer".into(),
                    mean: fer,
                    ci_half_width: proportion_ci(fer, n as f64),
                    ..base.clone()
                });
                records.push(base);
            }
            series += 1;
        }
    }
    records.sort_by_key(|r| (r.series, r.metric != "ber"));
    Ok(SweepResult { kind: "ber".into(), seed: spec.scenario.seed, records, samples: Vec::new() })
}

/// Debiased pilot RSS (N_r x N_t) at every SNR for one trial.
#[allow(clippy::too_many_arguments)]
fn rss_trial(
    cfg: &ScenarioConfig,
    schedule: &[Pilot],
    plan: &DimmingPlan,
    stats: &StatsGrid,
    noise: &[NoiseModel],
    seed: u64,
    series: u32,
    trial: u32,
) -> Vec<Result<DMatrix<f64>>> {
    let mut rng = trial_rng(seed, series, trial);
    let h = sample_gains(stats, &mut rng);
    let clean = clean_pilot_block(&h, schedule, plan);
    let w = standard_normals(&mut rng, cfg.n_r(), schedule.len());
    noise
        .iter()
        .map(|nm| {
            let y = &clean + &w * nm.sigma_w();
            let (_, c_hat) = estimate_channel_and_bias(&y, schedule, cfg.n_t(), plan.v_dc())?;
            let mut debiased = y;
            for mut col in debiased.column_iter_mut() {
                col -= &c_hat * plan.v_dc();
            }
            pilot_rss(&debiased, schedule, cfg.n_t())
        })
        .collect()
}

fn is_fix_failure(e: &Error) -> bool {
    matches!(
        e,
        Error::InsufficientCircles { .. } | Error::Collinear | Error::OutOfRange(_) | Error::Rank(_) | Error::Schedule(_)
    )
}

enum Dim {
    Two,
    Three,
}

fn run_positioning(spec: &SweepSpec, positions: &[Vec3], dim: Dim) -> Result<SweepResult> {
    spec.check()?;
    let cfg = &spec.scenario;
    if matches!(dim, Dim::Three) && cfg.n_r() < 2 {
        return Err(Error::Domain("3D positioning needs two photodiodes".into()));
    }
    let plan = cfg.dimming_plan()?;
    let schedule = crate::modem::pilot_schedule(cfg.n_t(), cfg.modulation.scale, cfg.pilots.count)?;
    let (metric, kind) = match dim {
        Dim::Two => ("mean_error_cm", "pos2d"),
        Dim::Three => ("mean_error_cm", "pos3d"),
    };
    let mut records = Vec::new();
    let mut samples = Vec::new();
    for (s, &reference) in positions.iter().enumerate() {
        let series = s as u32;
        let (stats, noise) = point_models(cfg, reference, &spec.snr_db)?;
        let truth = cfg.pd_positions(reference)[0];
        let n = spec.trials_per_point;
        // errors[trial][snr]
        let errors = (0..n as u32)
            .into_par_iter()
            .map(|t| {
                rss_trial(cfg, &schedule, &plan, &stats, &noise, cfg.seed, series, t)
                    .into_iter()
                    .zip(&noise)
                    .map(|(rss, nm)| {
                        let fix = rss.and_then(|rss| {
                            let row = |r: usize| rss.row(r).iter().cloned().collect::<Vec<f64>>();
                            match dim {
                                Dim::Two => position_2d(&row(0), cfg, 0, truth.z, nm, &spec.positioning),
                                Dim::Three => position_3d(&row(0), &row(1), cfg, nm, &spec.positioning)
                                    .map(|p| p.pds[0]),
                            }
                        });
                        match fix {
                            Ok(est) => Ok((est.coords - truth).norm()),
                            Err(e) if is_fix_failure(&e) => Ok(f64::NAN),
                            Err(e) => Err(e),
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (k, &snr) in spec.snr_db.iter().enumerate() {
            let values: Vec<f64> = errors.iter().map(|e| e[k]).collect();
            let (mean, ci, ok) = mean_ci(&values);
            records.push(MetricsRecord {
                sweep_var: "snr_db".into(),
                value: snr,
                metric: metric.into(),
                position: reference,
                order: cfg.modulation.order,
                mean,
                ci_half_width: ci,
                trials: n,
                failures: n - ok,
                seed: cfg.seed,
                series,
            });
            samples.push(SampleSet {
                series,
                position: reference,
                snr_db: snr,
                values: values.into_iter().take(MAX_SAMPLES).collect(),
            });
        }
    }
    Ok(SweepResult { kind: kind.into(), seed: cfg.seed, records, samples })
}

/// Mean 2D error of PD 0 at each position (z taken as known) and SNR.
pub fn run_positioning_sweep_2d(spec: &SweepSpec, positions: &[Vec3]) -> Result<SweepResult> {
    run_positioning(spec, positions, Dim::Two)
}

/// Mean 3D error of PD 0 from the height search at each position and SNR.
pub fn run_positioning_sweep_3d(spec: &SweepSpec, positions: &[Vec3]) -> Result<SweepResult> {
    run_positioning(spec, positions, Dim::Three)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpiralParams {
    pub center: Vec3,
    pub r_start: f64,
    pub r_end: f64,
    pub z_start: f64,
    pub z_end: f64,
    pub turns: f64,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpiralKind {
    /// Constant height `z_start`.
    Planar,
    /// Height runs from `z_start` to `z_end`.
    Helical,
}

/// Points of an Archimedean-style spiral with radius and height linear in
/// t = k/(n-1), checked against `cfg`'s room.
pub fn spiral_trajectory(kind: SpiralKind, p: &SpiralParams, cfg: &ScenarioConfig) -> Result<Vec<Vec3>> {
    if p.n_points < 2 || p.r_start < 0.0 || p.r_end < 0.0 {
        return Err(Error::Domain("a spiral needs n_points >= 2 and non-negative radii".into()));
    }
    let pts: Vec<Vec3> = (0..p.n_points)
        .map(|k| {
            let t = k as f64 / (p.n_points - 1) as f64;
            let r = p.r_start + (p.r_end - p.r_start) * t;
            let theta = 2.0 * std::f64::consts::PI * p.turns * t;
            let z = match kind {
                SpiralKind::Planar => p.z_start,
                SpiralKind::Helical => p.z_start + (p.z_end - p.z_start) * t,
            };
            Vec3::new(p.center.x + r * theta.cos(), p.center.y + r * theta.sin(), z)
        })
        .collect();
    if let Some(q) = pts.iter().find(|q| !cfg.room.contains(q)) {
        return Err(Error::Domain(format!("spiral point {q:?} lies outside the room")));
    }
    Ok(pts)
}

/// Right-continuous empirical CDF as (value, F(value)) steps.
pub fn empirical_cdf(samples: &[f64]) -> Result<Vec<(f64, f64)>> {
    if samples.is_empty() {
        return Err(Error::Empty);
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for (i, x) in v.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = f,
            _ => out.push((*x, f)),
        }
    }
    Ok(out)
}

/// F(x) for a CDF built by [`empirical_cdf`].
pub fn cdf_at(cdf: &[(f64, f64)], x: f64) -> f64 {
    cdf.iter().take_while(|(v, _)| *v <= x).last().map_or(0.0, |s| s.1)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// `sweep_var,value,metric,mean,ci_half_width,trials,seed`.
pub fn write_metrics_csv<W: Write>(records: &[MetricsRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["sweep_var", "value", "metric", "mean", "ci_half_width", "trials", "seed"])
        .map_err(csv_err)?;
    for r in records {
        w.write_record(&[
            r.sweep_var.clone(),
            r.value.to_string(),
            r.label(),
            format!("{:e}", r.mean),
            format!("{:e}", r.ci_half_width),
            r.trials.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per trial: series, position, SNR, trial index and error (empty
/// when the fix failed).
pub fn write_samples_csv<W: Write>(samples: &[SampleSet], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["series", "x_cm", "y_cm", "z_cm", "snr_db", "trial", "error_cm"]).map_err(csv_err)?;
    for s in samples {
        for (t, v) in s.values.iter().enumerate() {
            let val = if v.is_finite() { format!("{v:e}") } else { String::new() };
            w.write_record(&[
                s.series.to_string(),
                s.position.x.to_string(),
                s.position.y.to_string(),
                s.position.z.to_string(),
                s.snr_db.to_string(),
                t.to_string(),
                val,
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// The full result as one JSON document; failed samples become null.
pub fn write_json_report<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, result).map_err(|e| Error::Io(std::io::Error::other(e)))
}
