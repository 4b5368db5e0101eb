//! 8-bit minifloat used to store context magnitudes.
//!
//! Layout `S EEEE MMM`: one sign bit, four exponent bits with bias 7, three
//! mantissa bits. Exponent field 0 encodes subnormals (`M * 2^-9`). There are
//! no infinities or NaNs: every code is finite and out-of-range inputs
//! saturate to ±480. Encoding rounds to nearest, ties to the even mantissa.

use std::fmt;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Minifloat8(u8);

const EXP_BIAS: i32 = 7;
const MANT_BITS: u32 = 3;
/// Smallest normal exponent (unbiased).
const MIN_EXP: i32 = 1 - EXP_BIAS;

impl Minifloat8 {
    pub const ZERO: Self = Self(0);
    /// Largest finite magnitude, `1.875 * 2^8`.
    pub const MAX: f64 = 480.0;
    /// Smallest positive subnormal, `2^-9`.
    pub const MIN_POSITIVE_SUBNORMAL: f64 = 1.0 / 512.0;

    pub const fn from_bits(bits: u8) -> Self {
        Self(bits)
    }

    pub const fn to_bits(self) -> u8 {
        self.0
    }

    /// Round `v` to the nearest representable value. NaN saturates like an
    /// overflow; negative zero encodes as `+0`.
    pub fn from_f64(v: f64) -> Self {
        let sign = if v < 0.0 { 0x80 } else { 0 };
        let a = v.abs();
        if a.is_nan() || a >= Self::MAX {
            return Self(sign | 0x7f);
        }
        if a == 0.0 {
            return Self(0);
        }

        let mut exp = if a < f64::powi(2.0, MIN_EXP) {
            MIN_EXP
        } else {
            // a is a normal f64 here, so the biased exponent field is exact.
            ((a.to_bits() >> 52) & 0x7ff) as i32 - 1023
        };
        let quantum = f64::powi(2.0, exp - MANT_BITS as i32);
        let mut steps = (a / quantum).round_ties_even() as u32;
        if steps == 0 {
            return Self(sign);
        }
        if steps == 16 {
            steps = 8;
            exp += 1;
        }
        let (exp_field, mant) = if steps >= 8 { ((exp + EXP_BIAS) as u8, (steps - 8) as u8) } else { (0, steps as u8) };
        Self(sign | (exp_field << MANT_BITS) | mant)
    }

    pub fn to_f64(self) -> f64 {
        let exp_field = i32::from((self.0 >> MANT_BITS) & 0x0f);
        let mant = f64::from(self.0 & 0x07);
        let mag = if exp_field == 0 {
            mant * Self::MIN_POSITIVE_SUBNORMAL
        } else {
            (8.0 + mant) * f64::powi(2.0, exp_field - EXP_BIAS - MANT_BITS as i32)
        };
        if self.0 & 0x80 != 0 {
            -mag
        } else {
            mag
        }
    }

    pub fn is_sign_negative(self) -> bool {
        self.0 & 0x80 != 0
    }
}

impl fmt::Debug for Minifloat8 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Minifloat8({:#04x} = {})", self.0, self.to_f64())
    }
}

impl From<Minifloat8> for f64 {
    fn from(m: Minifloat8) -> f64 {
        m.to_f64()
    }
}
