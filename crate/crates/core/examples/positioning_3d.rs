//! Height search with two PDs; the wide field of view keeps several LEDs in sight.

use vlc_jcp::channel::{link_stats, sample_gains, NoiseModel};
use vlc_jcp::positioning::{position_3d, PositioningOptions};
use vlc_jcp::{ScenarioConfig, Vec3};

fn main() {
    let mut cfg = ScenarioConfig::default();
    for pd in &mut cfg.pds {
        pd.fov_half_angle_deg = 90.0;
    }
    let amp2 = cfg.modulation.scale * cfg.modulation.scale;
    let mut rng = rand::rng();
    for z in [50.0, 150.0, 250.0] {
        let truth = Vec3::new(100.0, 100.0, z);
        let stats = link_stats(&cfg, &cfg.pd_positions(truth)).unwrap();
        let h = sample_gains(&stats, &mut rng);
        let rss: Vec<Vec<f64>> = (0..2).map(|r| h.row(r).iter().map(|g| amp2 * g * g).collect()).collect();
        let fix = position_3d(&rss[0], &rss[1], &cfg, &NoiseModel::noiseless(), &PositioningOptions::default()).unwrap();
        let est = fix.pds[0].with_truth(cfg.pd_positions(truth)[0]);
        println!(
            "truth z = {z:>5} cm: estimate ({:.2}, {:.2}, {:.2}), error {:.3} cm over {} candidate heights",
            est.coords.x,
            est.coords.y,
            est.coords.z,
            est.euclidean_error_cm.unwrap(),
            fix.heights.len()
        );
    }
}
