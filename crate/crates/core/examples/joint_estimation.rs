//! Joint channel and dimming estimation from a noisy pilot block.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use vlc_jcp::channel::{calibrate_noise, link_stats, sample_gains};
use vlc_jcp::harness::clean_pilot_block;
use vlc_jcp::modem::pilot_schedule;
use vlc_jcp::receiver::ls_joint_estimate;
use vlc_jcp::{ScenarioConfig, Vec3};

fn main() {
    let cfg = ScenarioConfig::default();
    let plan = cfg.dimming_plan().unwrap();
    let stats = link_stats(&cfg, &cfg.pd_positions(Vec3::new(40.0, -60.0, 0.0))).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = sample_gains(&stats, &mut rng);
    println!("true kappa {:?}", plan.kappa().as_slice());

    for snr in [30.0, 50.0, 70.0] {
        let noise = calibrate_noise(&cfg, &stats, snr).unwrap();
        for n_p in [16, 128, 1024] {
            let schedule = pilot_schedule(cfg.n_t(), cfg.modulation.scale, n_p).unwrap();
            let w = DMatrix::from_fn(cfg.n_r(), n_p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let y = clean_pilot_block(&h, &schedule, &plan) + w * noise.sigma_w();
            let est = ls_joint_estimate(&y, &schedule, plan.psi(), plan.v_dc()).unwrap();
            println!(
                "SNR {snr:>4} dB, n_P {n_p:>4}: rel H error {:.2e}, kappa {:.4?}",
                (&est.h_hat - &h).norm() / h.norm(),
                est.kappa_hat.as_slice()
            );
        }
    }
}
