//! Transmit side: PAM constellation, spatial-modulation bit mapping, DC bias
//! with zone dimming, the pilot sequence and the frame codec.
//!
//! Frame layout on the wire, MSB first:
//!
//! ```text
//! [0xA5][pilot slots][payload][CRC-16 big-endian][0x5A]
//! ```
//!
//! Pilot slots and payload symbols are both written as SM bit groups
//! (`log2 N_t` LED bits followed by `log2 M` PAM index bits). The CRC is
//! CRC-16/CCITT-FALSE over the payload bits only.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const START_MARKER: u8 = 0xA5;
pub const END_MARKER: u8 = 0x5A;

fn log2_exact(n: usize, what: &str) -> Result<usize> {
    if n >= 2 && n.is_power_of_two() {
        Ok(n.trailing_zeros() as usize)
    } else {
        Err(Error::Domain(format!("{what} must be a power of two >= 2, got {n}")))
    }
}

/// M-PAM levels `A (2m - 1 - M)`, m = 1..M.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PamConstellation {
    order: usize,
    scale: f64,
    levels: Vec<f64>,
}

impl PamConstellation {
    pub fn new(order: usize, scale: f64) -> Result<Self> {
        log2_exact(order, "M")?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Domain(format!("scale must be finite and > 0, got {scale}")));
        }
        let levels = (1..=order)
            .map(|m| scale * (2.0 * m as f64 - 1.0 - order as f64))
            .collect();
        Ok(PamConstellation { order, scale, levels })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.order.trailing_zeros() as usize
    }

    /// Mean symbol energy A²(M²-1)/3.
    pub fn mean_energy(&self) -> f64 {
        let m = self.order as f64;
        self.scale * self.scale * (m * m - 1.0) / 3.0
    }

    /// Index of a level equal to `amplitude`, if any.
    pub fn index_of(&self, amplitude: f64) -> Option<usize> {
        self.levels.iter().position(|&l| l == amplitude)
    }
}

/// Zone dimming: ρ = Ψ_DIM κ, transmitted bias V_dc ρ.
#[derive(Debug, Clone, PartialEq)]
pub struct DimmingPlan {
    psi: DMatrix<f64>,
    kappa: DVector<f64>,
    v_dc: f64,
    rho_min: f64,
}

impl DimmingPlan {
    /// `zones` has one row per LED with a single 1 marking its zone.
    pub fn new(zones: Vec<Vec<f64>>, kappa: Vec<f64>, v_dc: f64, rho_min: f64) -> Result<Self> {
        let n_t = zones.len();
        let n_dim = kappa.len();
        if n_t == 0 || n_dim == 0 {
            return Err(Error::Domain("dimming plan needs LEDs and zones".into()));
        }
        for (i, row) in zones.iter().enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            if row.len() != n_dim || ones != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Domain(format!(
                    "zone row {i} must be 0/1 of length {n_dim} with exactly one 1"
                )));
            }
        }
        let psi = DMatrix::from_fn(n_t, n_dim, |r, c| zones[r][c]);
        let plan = DimmingPlan {
            psi,
            kappa: DVector::from_vec(kappa),
            v_dc,
            rho_min,
        };
        if let Some((i, r)) = plan.rho().iter().enumerate().find(|(_, &r)| r < rho_min || r > 1.0) {
            return Err(Error::Domain(format!(
                "LED {i} dimming level {r} outside [{rho_min}, 1]"
            )));
        }
        Ok(plan)
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn kappa(&self) -> &DVector<f64> {
        &self.kappa
    }

    pub fn v_dc(&self) -> f64 {
        self.v_dc
    }

    pub fn rho_min(&self) -> f64 {
        self.rho_min
    }

    pub fn n_t(&self) -> usize {
        self.psi.nrows()
    }

    pub fn n_zones(&self) -> usize {
        self.psi.ncols()
    }

    pub fn rho(&self) -> DVector<f64> {
        &self.psi * &self.kappa
    }

    /// Per-LED DC bias V_dc Ψ κ.
    pub fn bias(&self) -> DVector<f64> {
        self.rho() * self.v_dc
    }
}

/// x̃ = x + V_dc Ψ κ.
pub fn apply_dimming_bias(symbol_vector: &[f64], plan: &DimmingPlan) -> Result<Vec<f64>> {
    if symbol_vector.len() != plan.n_t() {
        return Err(Error::Length(format!(
            "symbol vector has {} entries for {} LEDs",
            symbol_vector.len(),
            plan.n_t()
        )));
    }
    let bias = plan.bias();
    symbol_vector
        .iter()
        .zip(bias.iter())
        .enumerate()
        .map(|(led, (x, b))| {
            let v = x + b;
            if v < 0.0 {
                Err(Error::NonNegativity { led, value: v })
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// One signaling slot: a single active LED emitting one PAM level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmSymbol {
    pub led_index: usize,
    pub pam_index: usize,
    pub amplitude: f64,
}

impl SmSymbol {
    /// The N_t-long modulation vector with only the active LED nonzero.
    pub fn modulation_vector(&self, n_t: usize) -> Vec<f64> {
        let mut x = vec![0.0; n_t];
        x[self.led_index] = self.amplitude;
        x
    }
}

/// Known pilot slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pilot {
    pub led_index: usize,
    pub amplitude: f64,
}

/// Bits per SM symbol, log2 N_t + log2 M.
pub fn sm_bits_per_symbol(n_t: usize, constellation: &PamConstellation) -> Result<usize> {
    Ok(log2_exact(n_t, "N_t")? + constellation.bits_per_symbol())
}

fn read_bits(bits: &[u8]) -> usize {
    bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)
}

fn push_bits(out: &mut Vec<u8>, value: usize, width: usize) {
    for k in (0..width).rev() {
        out.push(((value >> k) & 1) as u8);
    }
}

/// Map bits onto SM symbols, MSB first: LED index bits then PAM index bits.
pub fn sm_encode_bits(
    bits: &[u8],
    n_t: usize,
    constellation: &PamConstellation,
) -> Result<Vec<SmSymbol>> {
    let led_bits = log2_exact(n_t, "N_t")?;
    let eta = led_bits + constellation.bits_per_symbol();
    if !bits.len().is_multiple_of(eta) {
        return Err(Error::Length(format!(
            "{} bits is not a multiple of {eta} bits per symbol",
            bits.len()
        )));
    }
    Ok(bits
        .chunks_exact(eta)
        .map(|group| {
            let led_index = read_bits(&group[..led_bits]);
            let pam_index = read_bits(&group[led_bits..]);
            SmSymbol {
                led_index,
                pam_index,
                amplitude: constellation.levels()[pam_index],
            }
        })
        .collect())
}

/// Append the SM bit group of (led, pam) to `out`.
pub(crate) fn push_symbol_bits(
    out: &mut Vec<u8>,
    led_index: usize,
    pam_index: usize,
    n_t: usize,
    constellation: &PamConstellation,
) {
    push_bits(out, led_index, n_t.trailing_zeros() as usize);
    push_bits(out, pam_index, constellation.bits_per_symbol());
}

/// LEDs 0..N_t-1 in turn, each sending +A then -A, repeated n_P / 2N_t times.
pub fn pilot_schedule(n_t: usize, scale: f64, n_p: usize) -> Result<Vec<Pilot>> {
    if n_t == 0 || n_p == 0 || !n_p.is_multiple_of(2 * n_t) {
        return Err(Error::Domain(format!(
            "pilot count {n_p} must be a positive multiple of 2 N_t = {}",
            2 * n_t
        )));
    }
    let cycle = (0..n_t).flat_map(|led_index| {
        [scale, -scale].map(|amplitude| Pilot { led_index, amplitude })
    });
    Ok(cycle.cycle().take(n_p).collect())
}

/// CRC-16/CCITT-FALSE over a bit sequence, MSB first.
pub fn crc16(bits: &[u8]) -> u16 {
    let mut crc: u16 = 0xFFFF;
    for &b in bits {
        let top = (crc >> 15) as u8 ^ (b & 1);
        crc <<= 1;
        if top == 1 {
            crc ^= 0x1021;
        }
    }
    crc
}

/// Bytes to bits, MSB first.
pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(bytes.len() * 8);
    for &byte in bytes {
        push_bits(&mut out, byte as usize, 8);
    }
    out
}

/// Static frame parameters shared by both ends of the link.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameLayout {
    pub n_t: usize,
    pub constellation: PamConstellation,
    pub n_pilots: usize,
}

impl FrameLayout {
    pub fn new(n_t: usize, constellation: PamConstellation, n_pilots: usize) -> Result<Self> {
        log2_exact(n_t, "N_t")?;
        pilot_schedule(n_t, constellation.scale(), n_pilots)?;
        Ok(FrameLayout { n_t, constellation, n_pilots })
    }

    pub fn from_scenario(cfg: &crate::scene::ScenarioConfig) -> Result<Self> {
        FrameLayout::new(cfg.n_t(), cfg.constellation()?, cfg.pilots.count)
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.n_t.trailing_zeros() as usize + self.constellation.bits_per_symbol()
    }

    pub fn schedule(&self) -> Vec<Pilot> {
        pilot_schedule(self.n_t, self.constellation.scale(), self.n_pilots)
            .expect("layout was validated")
    }

    fn pilot_pam_index(&self, amplitude: f64) -> usize {
        // ±A sit at the two middle levels.
        let half = self.constellation.order() / 2;
        if amplitude > 0.0 {
            half
        } else {
            half - 1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmFrame {
    pub start_marker: u8,
    pub pilots: Vec<Pilot>,
    pub payload: Vec<SmSymbol>,
    pub crc16: u16,
    pub end_marker: u8,
}

impl SmFrame {
    /// Every signaling slot (pilots then payload) as (LED, amplitude).
    pub fn slots(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pilots
            .iter()
            .map(|p| (p.led_index, p.amplitude))
            .chain(self.payload.iter().map(|s| (s.led_index, s.amplitude)))
    }

    /// Per-slot LED drive intensities after bias and dimming.
    pub fn intensities(&self, plan: &DimmingPlan) -> Result<Vec<Vec<f64>>> {
        self.slots()
            .map(|(led, amp)| {
                let mut x = vec![0.0; plan.n_t()];
                x[led] = amp;
                apply_dimming_bias(&x, plan)
            })
            .collect()
    }

    /// Bit-exact wire serialization.
    pub fn to_bits(&self, layout: &FrameLayout) -> Vec<u8> {
        let eta = layout.bits_per_symbol();
        let mut out =
            Vec::with_capacity(32 + eta * (self.pilots.len() + self.payload.len()));
        push_bits(&mut out, self.start_marker as usize, 8);
        for p in &self.pilots {
            let idx = layout.pilot_pam_index(p.amplitude);
            push_symbol_bits(&mut out, p.led_index, idx, layout.n_t, &layout.constellation);
        }
        for s in &self.payload {
            push_symbol_bits(&mut out, s.led_index, s.pam_index, layout.n_t, &layout.constellation);
        }
        push_bits(&mut out, self.crc16 as usize, 16);
        push_bits(&mut out, self.end_marker as usize, 8);
        out
    }
}

/// Assemble marker, pilots, payload, CRC and end marker.
pub fn build_frame(payload_bits: &[u8], layout: &FrameLayout) -> Result<SmFrame> {
    let payload = sm_encode_bits(payload_bits, layout.n_t, &layout.constellation)?;
    Ok(SmFrame {
        start_marker: START_MARKER,
        pilots: layout.schedule(),
        payload,
        crc16: crc16(payload_bits),
        end_marker: END_MARKER,
    })
}

/// Check markers, pilot slots and CRC of a serialized frame and return the
/// payload bits.
pub fn parse_frame(bits: &[u8], layout: &FrameLayout) -> Result<Vec<u8>> {
    let eta = layout.bits_per_symbol();
    let pilot_bits = layout.n_pilots * eta;
    let overhead = 32 + pilot_bits;
    if bits.len() < overhead || !(bits.len() - overhead).is_multiple_of(eta) {
        return Err(Error::Length(format!(
            "frame of {} bits does not fit {} overhead bits plus whole {eta}-bit symbols",
            bits.len(),
            overhead
        )));
    }
    let start = read_bits(&bits[..8]) as u8;
    if start != START_MARKER {
        return Err(Error::Framing(format!("start marker {start:#04x}")));
    }
    let end = read_bits(&bits[bits.len() - 8..]) as u8;
    if end != END_MARKER {
        return Err(Error::Framing(format!("end marker {end:#04x}")));
    }
    let mut expected_pilots = Vec::with_capacity(pilot_bits);
    for p in layout.schedule() {
        let idx = layout.pilot_pam_index(p.amplitude);
        push_symbol_bits(&mut expected_pilots, p.led_index, idx, layout.n_t, &layout.constellation);
    }
    if bits[8..8 + pilot_bits] != expected_pilots[..] {
        return Err(Error::Framing("pilot block does not match the schedule".into()));
    }
    let payload = &bits[8 + pilot_bits..bits.len() - 24];
    let received = read_bits(&bits[bits.len() - 24..bits.len() - 8]) as u16;
    let computed = crc16(payload);
    if received != computed {
        return Err(Error::Crc { received, computed });
    }
    Ok(payload.to_vec())
}
