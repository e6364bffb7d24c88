//! Random stream splitting for Monte Carlo runs.
//!
//! Every trial owns a ChaCha8 stream keyed by the scenario seed, with the
//! stream id `(series << 32) | trial`. A series is one curve of a sweep
//! (a position, an order, a pilot count). The SNR point is deliberately not
//! part of the key, so all points of a curve share their channel and noise
//! draws and the curve is smooth in SNR.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn trial_rng(seed: u64, series: u32, trial: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((series as u64) << 32) | trial as u64);
    rng
}
