//! Track a planar spiral at 30 dB and summarise the error distribution.

use vlc_jcp::harness::{cdf_at, empirical_cdf, run_positioning_sweep_2d, spiral_trajectory, SpiralKind, SpiralParams, SweepSpec};
use vlc_jcp::{ScenarioConfig, Vec3};

fn main() {
    let cfg = ScenarioConfig::default();
    let params = SpiralParams {
        center: Vec3::new(0.0, 0.0, 0.0),
        r_start: 10.0,
        r_end: 140.0,
        z_start: 0.0,
        z_end: 0.0,
        turns: 3.0,
        n_points: 60,
    };
    let path = spiral_trajectory(SpiralKind::Planar, &params, &cfg).unwrap();
    let res = run_positioning_sweep_2d(&SweepSpec::new(cfg, vec![30.0], 50), &path).unwrap();
    let errors: Vec<f64> = res.samples.iter().flat_map(|s| s.values.iter().copied()).filter(|v| v.is_finite()).collect();
    let cdf = empirical_cdf(&errors).unwrap();
    println!("{} fixes along {} spiral points", errors.len(), path.len());
    for x in [1.0, 2.0, 5.0, 10.0] {
        println!("P(error <= {x:>4} cm) = {:.3}", cdf_at(&cdf, x));
    }
}
