//! Build a frame from a short message, flip one bit, and watch the CRC catch it.

use vlc_jcp::modem::{build_frame, bytes_to_bits, parse_frame, FrameLayout};
use vlc_jcp::ScenarioConfig;

fn main() {
    let cfg = ScenarioConfig::default();
    let layout = FrameLayout::from_scenario(&cfg).unwrap();
    let payload = bytes_to_bits(b"lights");
    let frame = build_frame(&payload, &layout).unwrap();
    let wire = frame.to_bits(&layout);
    println!("{} payload bits -> {} frame bits, {} bits per symbol", payload.len(), wire.len(), layout.bits_per_symbol());

    let head: Vec<String> = frame.slots().take(12).map(|(led, a)| format!("{led}:{a:+}")).collect();
    println!("first slots (led:amplitude) {}", head.join(" "));

    assert_eq!(parse_frame(&wire, &layout).unwrap(), payload);
    let mut corrupted = wire.clone();
    let k = wire.len() - 40;
    corrupted[k] ^= 1;
    println!("bit {k} flipped: {}", parse_frame(&corrupted, &layout).unwrap_err());
}
