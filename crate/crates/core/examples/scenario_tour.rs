//! Print the built-in reference scenario as JSON, or validate a file.
//!
//! cargo run --example scenario_tour [path/to/scenario.json]

use vlc_jcp::scene::{load_scenario, ScenarioConfig};

fn main() {
    match std::env::args().nth(1) {
        None => println!("{}", ScenarioConfig::default().to_json()),
        Some(path) => {
            let text = std::fs::read_to_string(&path).expect("readable scenario file");
            match load_scenario(&text) {
                Ok(cfg) => {
                    println!("{path}: valid, {} LEDs, {} PDs", cfg.n_t(), cfg.n_r());
                    for (i, led) in cfg.leds.iter().enumerate() {
                        println!(
                            "  LED {i} at ({}, {}, {}) cm, m = {:.4}, half-angle {:.2} deg",
                            led.position.x,
                            led.position.y,
                            led.position.z,
                            led.order(),
                            led.half_angle_deg.unwrap_or(f64::NAN)
                        );
                    }
                }
                Err(e) => println!("{path}: {e}"),
            }
        }
    }
}
