//! Pilot-aided joint estimation of the channel and the dimming coefficients,
//! DC bias removal and ML detection of (LED index, PAM symbol).
//!
//! Estimation runs in two linear stages. Stage 1 regresses each PD's pilot
//! observations on the per-LED pilot amplitudes plus a constant, which yields
//! Ĥ and the composite bias ĉ = Ĥ Ψ κ. Stage 2 recovers κ from ĉ given Ĥ.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modem::{push_symbol_bits, PamConstellation, Pilot};

/// Condition number of the stage-2 normal matrix above which the solve
/// switches to an SVD pseudo-inverse.
pub const PINV_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct JointEstimate {
    pub h_hat: DMatrix<f64>,
    pub c_hat: DVector<f64>,
    pub kappa_hat: DVector<f64>,
    pub rho_hat: DVector<f64>,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionResult {
    pub led_index: usize,
    pub pam_index: usize,
    pub metric: f64,
}

/// Stage 1: for each PD, least squares over (h_1..h_Nt, c) in
/// y_p = s_p h_{i(p)} + V_dc c + w_p. `pilot_obs` is N_r x n_P, one column
/// per pilot slot. Returns (Ĥ, ĉ).
pub fn estimate_channel_and_bias(
    pilot_obs: &DMatrix<f64>,
    schedule: &[Pilot],
    n_t: usize,
    v_dc: f64,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if !(v_dc > 0.0) {
        return Err(Error::Domain(format!("V_dc must be > 0 to separate the bias, got {v_dc}")));
    }
    if pilot_obs.ncols() != schedule.len() {
        return Err(Error::Length(format!(
            "{} pilot observations for a schedule of {}",
            pilot_obs.ncols(),
            schedule.len()
        )));
    }
    if schedule.len() < 2 * n_t {
        return Err(Error::Schedule(format!("{} pilots cannot cover 2 N_t = {}", schedule.len(), 2 * n_t)));
    }
    let mut ss = vec![0.0; n_t];
    let mut s1 = vec![0.0; n_t];
    for p in schedule {
        if p.led_index >= n_t {
            return Err(Error::Schedule(format!("pilot names LED {} of {n_t}", p.led_index)));
        }
        ss[p.led_index] += p.amplitude * p.amplitude;
        s1[p.led_index] += p.amplitude;
    }
    if let Some(i) = ss.iter().position(|&v| v == 0.0) {
        return Err(Error::Schedule(format!("LED {i} never carries a nonzero pilot")));
    }
    let n = n_t + 1;
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n_t {
        gram[(i, i)] = ss[i];
        gram[(i, n_t)] = v_dc * s1[i];
        gram[(n_t, i)] = v_dc * s1[i];
    }
    gram[(n_t, n_t)] = v_dc * v_dc * schedule.len() as f64;
    let chol = gram.clone().cholesky().filter(|_| {
        let sv = gram.singular_values();
        sv.min() > sv.max() * 1e-12
    });
    let Some(chol) = chol else {
        return Err(Error::Schedule(
            "pilot amplitudes do not separate the channel from the bias (use bipolar pilots)".into(),
        ));
    };

    let n_r = pilot_obs.nrows();
    let mut h_hat = DMatrix::zeros(n_r, n_t);
    let mut c_hat = DVector::zeros(n_r);
    for r in 0..n_r {
        let mut rhs = DVector::zeros(n);
        for (p, pilot) in schedule.iter().enumerate() {
            let y = pilot_obs[(r, p)];
            rhs[pilot.led_index] += pilot.amplitude * y;
            rhs[n_t] += v_dc * y;
        }
        let sol = chol.solve(&rhs);
        for i in 0..n_t {
            h_hat[(r, i)] = sol[i];
        }
        c_hat[r] = sol[n_t];
    }
    Ok((h_hat, c_hat))
}

/// Stage 2: κ̂ = argmin ‖ĉ - Ĥ Ψ κ‖².
pub fn estimate_dimming(h_hat: &DMatrix<f64>, c_hat: &DVector<f64>, psi: &DMatrix<f64>) -> Result<DVector<f64>> {
    let g = h_hat * psi;
    let n_dim = psi.ncols();
    if g.nrows() < n_dim {
        return Err(Error::Rank(format!(
            "{} PDs cannot resolve {n_dim} dimming zones",
            g.nrows()
        )));
    }
    let svd = g.clone().svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    let tol = f64::EPSILON * smax * g.nrows().max(n_dim) as f64;
    if !(smin > tol) {
        return Err(Error::Rank(format!(
            "Ĥ Ψ has rank below {n_dim} (singular values {:?})",
            svd.singular_values.as_slice()
        )));
    }
    let normal = g.transpose() * &g;
    let cond = (smax / smin).powi(2);
    if cond > PINV_CONDITION {
        return svd.solve(c_hat, tol).map_err(|e| Error::Rank(e.to_string()));
    }
    normal
        .cholesky()
        .map(|ch| ch.solve(&(g.transpose() * c_hat)))
        .ok_or_else(|| Error::Rank("normal matrix is not positive definite".into()))
}

/// Two-stage LS joint estimate of H, κ and ρ = Ψ κ.
pub fn ls_joint_estimate(
    pilot_obs: &DMatrix<f64>,
    schedule: &[Pilot],
    psi: &DMatrix<f64>,
    v_dc: f64,
) -> Result<JointEstimate> {
    let (h_hat, c_hat) = estimate_channel_and_bias(pilot_obs, schedule, psi.nrows(), v_dc)?;
    let kappa_hat = estimate_dimming(&h_hat, &c_hat, psi)?;
    let rho_hat = psi * &kappa_hat;
    let residual_norm = (&c_hat - &h_hat * &rho_hat).norm();
    Ok(JointEstimate { h_hat, c_hat, kappa_hat, rho_hat, residual_norm })
}

/// ỹ = y - V_dc Ĥ ρ̂.
pub fn remove_dc_bias(y: &DVector<f64>, estimate: &JointEstimate, v_dc: f64) -> DVector<f64> {
    y - (&estimate.h_hat * &estimate.rho_hat) * v_dc
}

/// Exhaustive ML detector with the M N_t candidate vectors s_i ĥ_j
/// precomputed, ordered by (LED, PAM index).
#[derive(Debug, Clone)]
pub struct Detector {
    n_r: usize,
    order: usize,
    candidates: Vec<f64>,
}

impl Detector {
    pub fn new(h_hat: &DMatrix<f64>, constellation: &PamConstellation) -> Result<Self> {
        if h_hat.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateChannel);
        }
        let n_r = h_hat.nrows();
        let mut candidates = Vec::with_capacity(n_r * h_hat.ncols() * constellation.order());
        for j in 0..h_hat.ncols() {
            for &s in constellation.levels() {
                candidates.extend(h_hat.column(j).iter().map(|h| s * h));
            }
        }
        Ok(Detector { n_r, order: constellation.order(), candidates })
    }

    pub fn detect(&self, y: &[f64]) -> DetectionResult {
        let mut best = (0, f64::INFINITY);
        for (k, cand) in self.candidates.chunks_exact(self.n_r).enumerate() {
            let d: f64 = cand.iter().zip(y).map(|(c, y)| (y - c) * (y - c)).sum();
            // Strict comparison keeps the lexicographically first minimizer.
            if d < best.1 {
                best = (k, d);
            }
        }
        DetectionResult {
            led_index: best.0 / self.order,
            pam_index: best.0 % self.order,
            metric: best.1,
        }
    }
}

/// argmin over (i, j) of ‖y - s_i ĥ_j‖².
pub fn ml_detect(y_debiased: &DVector<f64>, h_hat: &DMatrix<f64>, constellation: &PamConstellation) -> Result<DetectionResult> {
    Ok(Detector::new(h_hat, constellation)?.detect(y_debiased.as_slice()))
}

/// Inverse of the SM bit mapping.
pub fn sm_decode_bits(results: &[DetectionResult], n_t: usize, constellation: &PamConstellation) -> Vec<u8> {
    let mut out = Vec::with_capacity(results.len() * 8);
    for r in results {
        push_symbol_bits(&mut out, r.led_index, r.pam_index, n_t, constellation);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modem::{pilot_schedule, sm_encode_bits};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn observe(h: &DMatrix<f64>, psi: &DMatrix<f64>, kappa: &DVector<f64>, v_dc: f64, sched: &[Pilot]) -> DMatrix<f64> {
        let bias = h * (psi * kappa) * v_dc;
        DMatrix::from_fn(h.nrows(), sched.len(), |r, p| {
            sched[p].amplitude * h[(r, sched[p].led_index)] + bias[r]
        })
    }

    #[test]
    fn hand_worked_two_by_two() {
        let h = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.2, 0.4]);
        let psi = DMatrix::identity(2, 2);
        let kappa = DVector::from_vec(vec![0.8, 0.9]);
        let sched = pilot_schedule(2, 1.0, 4).unwrap();
        let y = observe(&h, &psi, &kappa, 1.0, &sched);
        let row: Vec<f64> = y.row(0).iter().cloned().collect();
        for (a, b) in row.iter().zip([1.125, 0.125, 0.875, 0.375]) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
        let est = ls_joint_estimate(&y, &sched, &psi, 1.0).unwrap();
        assert_relative_eq!(est.h_hat, h, epsilon = 1e-14);
        assert_relative_eq!(est.c_hat[0], 0.625, epsilon = 1e-14);
        assert_relative_eq!(est.c_hat[1], 0.52, epsilon = 1e-14);
        assert_relative_eq!(est.kappa_hat, kappa, epsilon = 1e-13);
        assert!(est.residual_norm < 1e-13);
    }

    #[test]
    fn too_many_zones_is_rank_error() {
        let h = DMatrix::from_row_slice(2, 4, &[0.5, 0.25, 0.3, 0.1, 0.2, 0.4, 0.1, 0.3]);
        let psi = DMatrix::from_row_slice(4, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1., 0., 0., 1.]);
        let kappa = DVector::from_vec(vec![0.8, 0.9, 1.0]);
        let sched = pilot_schedule(4, 1.0, 8).unwrap();
        let y = observe(&h, &psi, &kappa, 2.0, &sched);
        assert!(matches!(ls_joint_estimate(&y, &sched, &psi, 2.0), Err(Error::Rank(_))));
    }

    #[test]
    fn unipolar_pilots_are_rejected() {
        let sched: Vec<Pilot> = (0..4).map(|i| Pilot { led_index: i % 2, amplitude: 1.0 }).collect();
        let y = DMatrix::zeros(2, 4);
        assert!(matches!(
            estimate_channel_and_bias(&y, &sched, 2, 1.0),
            Err(Error::Schedule(_))
        ));
        let missing: Vec<Pilot> =
            [1.0, -1.0, 1.0, -1.0].iter().map(|&a| Pilot { led_index: 0, amplitude: a }).collect();
        assert!(matches!(
            estimate_channel_and_bias(&y, &missing, 2, 1.0),
            Err(Error::Schedule(_))
        ));
    }

    #[test]
    fn debias_identities() {
        let h = DMatrix::from_row_slice(2, 2, &[0.5, 0.25, 0.2, 0.4]);
        let est = JointEstimate {
            h_hat: h.clone(),
            c_hat: DVector::zeros(2),
            kappa_hat: DVector::from_vec(vec![0.8, 0.9]),
            rho_hat: DVector::from_vec(vec![0.8, 0.9]),
            residual_norm: 0.0,
        };
        let s = -1.0;
        let y = h.column(1) * s + &h * &est.rho_hat * 3.0;
        let out = remove_dc_bias(&y, &est, 3.0);
        assert_relative_eq!(out, h.column(1) * s, epsilon = 1e-14);
        let y = DVector::from_vec(vec![0.3, -0.1]);
        assert_eq!(remove_dc_bias(&y, &est, 0.0), y);
    }

    #[test]
    fn detection_examples() {
        let h = DMatrix::from_row_slice(2, 2, &[0.5, 0.3, 0.2, 0.4]);
        let c2 = PamConstellation::new(2, 1.0).unwrap();
        let r = ml_detect(&DVector::from_vec(vec![0.5, 0.2]), &h, &c2).unwrap();
        assert_eq!((r.led_index, r.pam_index, r.metric), (0, 1, 0.0));
        let c4 = PamConstellation::new(4, 1.0).unwrap();
        let y = DVector::from_vec(vec![-0.9, -1.2]);
        let r = ml_detect(&y, &h, &c4).unwrap();
        assert_eq!((r.led_index, r.pam_index), (1, 0));
        let same = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.2, 0.2]);
        let r = ml_detect(&DVector::from_vec(vec![0.5, 0.2]), &same, &c2).unwrap();
        assert_eq!(r.led_index, 0);
        assert!(matches!(ml_detect(&y, &DMatrix::zeros(2, 2), &c2), Err(Error::DegenerateChannel)));
    }

    #[test]
    fn decode_examples() {
        let c2 = PamConstellation::new(2, 1.0).unwrap();
        let r = DetectionResult { led_index: 2, pam_index: 1, metric: 0.0 };
        assert_eq!(sm_decode_bits(&[r], 4, &c2), vec![1, 0, 1]);
        assert!(sm_decode_bits(&[], 4, &c2).is_empty());
    }

    #[test]
    fn decode_inverts_encode_exhaustively() {
        let c8 = PamConstellation::new(8, 1.0).unwrap();
        for g in 0..32usize {
            let bits: Vec<u8> = (0..5).rev().map(|k| ((g >> k) & 1) as u8).collect();
            let sym = sm_encode_bits(&bits, 4, &c8).unwrap();
            let det: Vec<_> = sym
                .iter()
                .map(|s| DetectionResult { led_index: s.led_index, pam_index: s.pam_index, metric: 0.0 })
                .collect();
            assert_eq!(sm_decode_bits(&det, 4, &c8), bits);
        }
    }

    /// One-shot LS with H known: unknowns are (h_r, κ) with the bias regressor
    /// V_dc H Ψ supplied from the true channel.
    fn known_h_oracle(
        y: &DMatrix<f64>,
        sched: &[Pilot],
        h_true: &DMatrix<f64>,
        psi: &DMatrix<f64>,
        v_dc: f64,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let (n_r, n_t, n_dim) = (h_true.nrows(), h_true.ncols(), psi.ncols());
        let g = h_true * psi * v_dc;
        let unknowns = n_r * n_t + n_dim;
        let rows = n_r * sched.len();
        let mut q = DMatrix::zeros(rows, unknowns);
        let mut v = DVector::zeros(rows);
        for (p, pilot) in sched.iter().enumerate() {
            for r in 0..n_r {
                let row = p * n_r + r;
                q[(row, r * n_t + pilot.led_index)] = pilot.amplitude;
                for k in 0..n_dim {
                    q[(row, n_r * n_t + k)] = g[(r, k)];
                }
                v[row] = y[(r, p)];
            }
        }
        let xi = q.svd(true, true).solve(&v, 1e-14).unwrap();
        let h = DMatrix::from_fn(n_r, n_t, |r, t| xi[r * n_t + t]);
        (h, xi.rows(n_r * n_t, n_dim).into_owned())
    }

    #[test]
    fn two_stage_matches_known_h_oracle() {
        let h = DMatrix::from_row_slice(2, 4, &[3.1, 2.4, 1.7, 1.2, 2.9, 2.0, 1.9, 1.4]);
        let psi = DMatrix::from_row_slice(4, 2, &[1., 0., 1., 0., 0., 1., 0., 1.]);
        let kappa = DVector::from_vec(vec![1.0, 0.8]);
        let sched = pilot_schedule(4, 1.0, 16).unwrap();
        let y = observe(&h, &psi, &kappa, 10.0, &sched);
        let est = ls_joint_estimate(&y, &sched, &psi, 10.0).unwrap();
        let (h_o, k_o) = known_h_oracle(&y, &sched, &h, &psi, 10.0);
        assert_relative_eq!(est.h_hat, h_o, epsilon = 1e-10);
        assert_relative_eq!(est.kappa_hat, k_o, epsilon = 1e-10);
    }

    fn naive(y: &[f64], h: &DMatrix<f64>, levels: &[f64]) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::INFINITY);
        for j in 0..h.ncols() {
            for (i, s) in levels.iter().enumerate() {
                let d: f64 = (0..h.nrows()).map(|r| (y[r] - s * h[(r, j)]).powi(2)).sum();
                if d < best.2 {
                    best = (j, i, d);
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn detector_equals_naive_search(
            hv in proptest::collection::vec(-2.0f64..2.0, 8),
            y in proptest::collection::vec(-6.0f64..6.0, 2),
            log_m in 1usize..4,
        ) {
            let h = DMatrix::from_row_slice(2, 4, &hv);
            let c = PamConstellation::new(1 << log_m, 0.7).unwrap();
            let r = ml_detect(&DVector::from_vec(y.clone()), &h, &c).unwrap();
            let (j, i, d) = naive(&y, &h, c.levels());
            prop_assert_eq!((r.led_index, r.pam_index), (j, i));
            prop_assert!((r.metric - d).abs() <= 1e-12 * d.max(1.0));
        }

        #[test]
        fn noiseless_recovery(
            hv in proptest::collection::vec(0.1f64..5.0, 8),
            k0 in 0.7f64..1.0,
            k1 in 0.7f64..1.0,
        ) {
            let h = DMatrix::from_row_slice(2, 4, &hv);
            let psi = DMatrix::from_row_slice(4, 2, &[1., 0., 1., 0., 0., 1., 0., 1.]);
            let g = &h * &psi;
            prop_assume!(g.determinant().abs() > 1e-3 * g.norm_squared());
            let kappa = DVector::from_vec(vec![k0, k1]);
            let sched = pilot_schedule(4, 1.0, 40).unwrap();
            let y = observe(&h, &psi, &kappa, 10.0, &sched);
            let est = ls_joint_estimate(&y, &sched, &psi, 10.0).unwrap();
            prop_assert!((&est.h_hat - &h).norm() <= 1e-9 * h.norm());
            prop_assert!((&est.kappa_hat - &kappa).norm() <= 1e-9 * kappa.norm());
        }
    }
}
