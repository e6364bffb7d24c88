//! LOS gain from every LED to a few floor points, plus the geometric K-factor.

use vlc_jcp::channel::{k_factor_breakdown, los_gain};
use vlc_jcp::{ScenarioConfig, Vec3};

fn main() {
    let cfg = ScenarioConfig::default();
    let pd = &cfg.pds[0];
    for p in [Vec3::new(0.0, 0.0, 0.0), Vec3::new(75.0, -20.0, 0.0), Vec3::new(149.0, 149.0, 0.0)] {
        let gains: Vec<String> = cfg
            .leds
            .iter()
            .map(|led| match los_gain(led, p, pd) {
                Ok(h) => format!("{h:.4e}"),
                Err(e) => format!("({e})"),
            })
            .collect();
        println!("PD at ({}, {}, {}): {}", p.x, p.y, p.z, gains.join("  "));
    }

    let led = cfg.leds[0].position;
    for seg in [20.0, 10.0, 5.0] {
        let b = k_factor_breakdown(&cfg.room, led, Vec3::new(0.0, 0.0, 0.0), seg).unwrap();
        println!("wall segment {seg} cm: {} segments, K = {:.3e}", b.segments, b.raw());
    }
}
