//! Mean 2D error at a few floor points as SNR rises.

use vlc_jcp::harness::{run_positioning_sweep_2d, SweepSpec};
use vlc_jcp::{ScenarioConfig, Vec3};

fn main() {
    let cfg = ScenarioConfig::default();
    let snr = vec![20.0, 40.0, 60.0, 80.0];
    let positions = [Vec3::new(0.0, 0.0, 0.0), Vec3::new(100.0, 100.0, 0.0), Vec3::new(149.0, 149.0, 0.0)];
    let res = run_positioning_sweep_2d(&SweepSpec::new(cfg, snr, 300), &positions).unwrap();
    for r in res.records.iter().filter(|r| r.metric == "mean_error_cm") {
        println!("{:<40} {:>9.4} cm +/- {:.4} ({} failed)", r.label(), r.mean, r.ci_half_width, r.failures);
    }
}
