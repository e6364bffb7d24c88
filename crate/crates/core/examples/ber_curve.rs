//! BER against SNR for several PAM orders near the room center.
//!
//! cargo run --release --example ber_curve

use vlc_jcp::harness::{run_ber_sweep, SweepSpec};
use vlc_jcp::{ScenarioConfig, Vec3};

fn main() {
    let snr: Vec<f64> = (0..=6).map(|k| 50.0 + 5.0 * k as f64).collect();
    let spec = SweepSpec::new(ScenarioConfig::default(), snr.clone(), 1).with_min_bits(200_000);
    let rx = Vec3::new(-2.5, 1.5, 0.0);
    let res = run_ber_sweep(&spec, &[rx], &[2, 4, 8]).unwrap();

    print!("{:>8}", "SNR dB");
    for m in [2, 4, 8] {
        print!("{:>12}", format!("M={m}"));
    }
    println!();
    for s in &snr {
        print!("{s:>8}");
        for m in [2, 4, 8] {
            let r = res.records.iter().find(|r| r.metric == "ber" && r.order == m && r.value == *s).unwrap();
            print!("{:>12.2e}", r.mean);
        }
        println!();
    }
}
