//! Floating-point abstraction over the two supported working precisions.

use std::fmt;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

/// Working precision of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Single,
    Double,
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "f32" => Ok(Precision::Single),
            "double" | "f64" => Ok(Precision::Double),
            other => Err(format!("unknown precision '{other}' (expected single or double)")),
        }
    }
}

/// IEEE 754 scalar the solver kernels are generic over (`f32` or `f64`).
pub trait Real:
    Float + FromPrimitive + Default + Send + Sync + fmt::Debug + fmt::Display + 'static
{
    const PRECISION: Precision;

    /// `exp(x)` is exactly `0` for every `x` below this value.
    const EXP_UNDERFLOW: Self;

    /// Floor applied to the shifted exponential sum before taking its log.
    const SUM_FLOOR: Self;

    fn of(x: f64) -> Self;

    fn widen(self) -> f64;

    /// Raw bits widened to 64 bits, for bit-identity comparisons.
    fn bit_pattern(self) -> u64;

    /// Branch-free exponential built from IEEE arithmetic only, so it
    /// vectorizes and returns the same bits on every platform. Accurate to a
    /// few ulps; underflows to exactly `0` below [`Real::EXP_UNDERFLOW`],
    /// overflows to `+inf` and propagates NaN.
    fn exp_kernel(self) -> Self;
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;
    const EXP_UNDERFLOW: Self = -105.0;
    const SUM_FLOOR: Self = 1e-30;

    #[inline(always)]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline(always)]
    fn widen(self) -> f64 {
        self as f64
    }

    fn bit_pattern(self) -> u64 {
        self.to_bits() as u64
    }

    #[inline(always)]
    fn exp_kernel(self) -> Self {
        // 1.5 * 2^23: adding it rounds to an integer held in the low mantissa bits
        const SHIFT: f32 = 12_582_912.0;
        const LN2_HI: f32 = 0.693_145_75;
        const LN2_LO: f32 = 1.428_606_8e-6;
        const OVERFLOW: f32 = 88.722_84;
        // lanes that end up 0 are evaluated at 0, keeping subnormals out of the arithmetic
        let x = if self < Self::EXP_UNDERFLOW { 0.0 } else { self.min(OVERFLOW) };
        let shifted = x * std::f32::consts::LOG2_E + SHIFT;
        let k = shifted - SHIFT;
        let r = (x - k * LN2_HI) - k * LN2_LO;
        // Taylor terms 2..7 in Estrin form
        let r2 = r * r;
        let q0 = 0.5 + r * (1.0 / 6.0);
        let q1 = 1.0 / 24.0 + r * (1.0 / 120.0);
        let q2 = 1.0 / 720.0 + r * (1.0 / 5040.0);
        let tail = q0 + r2 * (q1 + r2 * q2);
        let p = 1.0 + (r + r2 * tail);
        // 2^k split as 2^(e/2) * 2^(e - e/2) with e = k + 2 * bias, so that
        // results in the subnormal range are rounded only once
        let e = shifted.to_bits().wrapping_sub(SHIFT.to_bits() - 254);
        let half = e >> 1;
        let s1 = f32::from_bits(half << 23);
        let s2 = f32::from_bits((e - half) << 23);
        let y = p * s1 * s2;
        let y = if self < Self::EXP_UNDERFLOW { 0.0 } else { y };
        let y = if self > OVERFLOW { f32::INFINITY } else { y };
        if self.is_nan() {
            self
        } else {
            y
        }
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;
    const EXP_UNDERFLOW: Self = -746.0;
    const SUM_FLOOR: Self = 1e-30;

    #[inline(always)]
    fn of(x: f64) -> Self {
        x
    }

    #[inline(always)]
    fn widen(self) -> f64 {
        self
    }

    fn bit_pattern(self) -> u64 {
        self.to_bits()
    }

    #[inline(always)]
    fn exp_kernel(self) -> Self {
        // 1.5 * 2^52
        const SHIFT: f64 = 6_755_399_441_055_744.0;
        const LN2_HI: f64 = 6.931_471_803_691_238e-1;
        const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
        const OVERFLOW: f64 = 709.782_712_893_384;
        // lanes that end up 0 are evaluated at 0, keeping subnormals out of the arithmetic
        let x = if self < Self::EXP_UNDERFLOW { 0.0 } else { self.min(OVERFLOW) };
        let shifted = x * std::f64::consts::LOG2_E + SHIFT;
        let k = shifted - SHIFT;
        let r = (x - k * LN2_HI) - k * LN2_LO;
        // Taylor terms 2..13 in Estrin form
        let r2 = r * r;
        let r4 = r2 * r2;
        let q0 = 0.5 + r * (1.0 / 6.0);
        let q1 = 1.0 / 24.0 + r * (1.0 / 120.0);
        let q2 = 1.0 / 720.0 + r * (1.0 / 5_040.0);
        let q3 = 1.0 / 40_320.0 + r * (1.0 / 362_880.0);
        let q4 = 1.0 / 3_628_800.0 + r * (1.0 / 39_916_800.0);
        let q5 = 1.0 / 479_001_600.0 + r * (1.0 / 6_227_020_800.0);
        let s0 = q0 + r2 * q1;
        let s1 = q2 + r2 * q3;
        let s2 = q4 + r2 * q5;
        let tail = s0 + r4 * (s1 + r4 * s2);
        let p = 1.0 + (r + r2 * tail);
        let e = shifted.to_bits().wrapping_sub(SHIFT.to_bits() - 2046);
        let half = e >> 1;
        let s1 = f64::from_bits(half << 52);
        let s2 = f64::from_bits((e - half) << 52);
        let y = p * s1 * s2;
        let y = if self < Self::EXP_UNDERFLOW { 0.0 } else { y };
        let y = if self > OVERFLOW { f64::INFINITY } else { y };
        if self.is_nan() {
            self
        } else {
            y
        }
    }
}
