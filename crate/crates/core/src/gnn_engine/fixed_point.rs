//! Integer requantization: `round_half_even(v * M / 2^shift)`.

use serde::{Deserialize, Serialize};

/// Largest legal multiplier: the datapath holds `M` in a 31-bit register.
pub const MAX_MULTIPLIER: u32 = (1 << 31) - 1;
/// Largest legal shift; keeps `1 << shift` inside a 64-bit word.
pub const MAX_SHIFT: u32 = 62;

/// Fixed-point scale factor `M · 2^-shift`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Requant {
    #[serde(rename = "M")]
    pub multiplier: u32,
    pub shift: u32,
}

impl Requant {
    /// Scale factor 1.
    pub const IDENTITY: Requant = Requant {
        multiplier: 1 << 30,
        shift: 30,
    };

    pub fn new(multiplier: u32, shift: u32) -> Self {
        Self { multiplier, shift }
    }

    /// The real factor this multiplier/shift pair represents.
    pub fn as_f64(&self) -> f64 {
        f64::from(self.multiplier) * 2f64.powi(-(self.shift as i32))
    }

    /// Whether the pair fits the 31-bit multiplier / 6-bit shift registers
    /// the integer datapath assumes.
    pub fn in_datapath_range(&self) -> bool {
        self.multiplier <= MAX_MULTIPLIER && self.shift <= MAX_SHIFT
    }

    /// Closest `(M, shift)` to `real` with `M` normalized into `[2^30, 2^31)`
    /// where possible. Relative error is below `2^-30` for any `real` in
    /// `[2^-32, 2^31)`.
    pub fn from_real(real: f64) -> Option<Self> {
        if !(real.is_finite() && real > 0.0) {
            return None;
        }
        // real = frac * 2^exp with frac in [0.5, 1)
        let exp = real.log2().floor() as i32 + 1;
        let mut shift = 31 - exp;
        if shift < 0 {
            return None;
        }
        if shift as u32 > MAX_SHIFT {
            shift = MAX_SHIFT as i32;
        }
        let mut m = (real * 2f64.powi(shift)).round();
        if m > f64::from(MAX_MULTIPLIER) {
            // rounding carried into bit 31
            if shift == 0 {
                return None;
            }
            shift -= 1;
            m = (real * 2f64.powi(shift)).round();
        }
        if m < 1.0 {
            return None;
        }
        Some(Self {
            multiplier: m as u32,
            shift: shift as u32,
        })
    }
}

/// Datapath requantization of an accumulator value.
///
/// Emulates the hardware: a 64-bit product register (wrapping) followed by
/// an arithmetic right shift with round-half-to-even on the dropped bits.
/// The shift field is 6 bits wide. Exact whenever `|v| < 2^32` and the
/// parameters are within [`Requant::in_datapath_range`].
pub fn requantize(v: i64, rq: Requant) -> i64 {
    let product = v.wrapping_mul(i64::from(rq.multiplier));
    rounding_shift_right(product, rq.shift & 63)
}

/// Arithmetic right shift by `shift` (< 64) with round-half-to-even.
pub fn rounding_shift_right(value: i64, shift: u32) -> i64 {
    debug_assert!(shift < 64);
    if shift == 0 {
        return value;
    }
    let floor = value >> shift;
    let mask = (1u64 << shift) - 1;
    let rem = (value as u64) & mask;
    let half = 1u64 << (shift - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}

/// Round-half-to-even of a real value, saturated into the INT8 range
/// `[-127, 127]` used for weights.
pub fn quantize_symmetric(value: f64, scale: f64) -> i8 {
    let q = round_half_even(value / scale);
    q.clamp(-127.0, 127.0) as i8
}

pub fn round_half_even(v: f64) -> f64 {
    v.round_ties_even()
}
