use serde::Deserialize;
use vlc_jcp::modem::{build_frame, crc16, parse_frame, FrameLayout, PamConstellation};
use vlc_jcp::Error;

#[derive(Deserialize)]
struct Vector {
    n_t: usize,
    order: usize,
    scale: f64,
    n_pilots: usize,
    payload_bits: String,
    crc16: u16,
    frame_bits: String,
}

fn bits(s: &str) -> Vec<u8> {
    s.bytes().map(|b| b - b'0').collect()
}

fn vectors() -> Vec<Vector> {
    serde_json::from_str(include_str!("data/frame-vectors.json")).unwrap()
}

#[test]
fn golden_frames_round_trip() {
    let vs = vectors();
    assert_eq!(vs.len(), 10);
    for v in vs {
        let layout = FrameLayout::new(v.n_t, PamConstellation::new(v.order, v.scale).unwrap(), v.n_pilots).unwrap();
        let payload = bits(&v.payload_bits);
        assert_eq!(crc16(&payload), v.crc16);
        let frame = build_frame(&payload, &layout).unwrap();
        assert_eq!(frame.to_bits(&layout), bits(&v.frame_bits), "N_t={} M={}", v.n_t, v.order);
        assert_eq!(parse_frame(&bits(&v.frame_bits), &layout).unwrap(), payload);
    }
}

#[test]
fn every_single_payload_flip_is_caught() {
    for v in vectors() {
        let layout = FrameLayout::new(v.n_t, PamConstellation::new(v.order, v.scale).unwrap(), v.n_pilots).unwrap();
        let frame = bits(&v.frame_bits);
        let start = 8 + v.n_pilots * layout.bits_per_symbol();
        for k in 0..v.payload_bits.len() {
            let mut f = frame.clone();
            f[start + k] ^= 1;
            assert!(matches!(parse_frame(&f, &layout), Err(Error::Crc { .. })));
        }
    }
}
