//! Scalar abstraction over the two supported float widths.
//!
//! Everything numeric is generic over [`Scalar`] so the same kernel code runs
//! in f64 for correctness suites and f32 for training and benchmarks.
//!
//! `fast_exp` is a branch-free polynomial exponential. Gate kernels
//! exponentiate cumulative log-gate differences in inner loops, and a libm
//! call per element is the single largest cost there; the polynomial version
//! vectorizes. Both float widths use the classic scheme: round `x / ln 2` to
//! an integer n with the shifter trick, evaluate a Taylor polynomial on the
//! reduced argument, then scale by 2^n through exponent bits. Relative error
//! is below 8e-15 (f64) and 3e-7 (f32). Arguments outside the representable
//! range saturate instead of producing inf/0; in-library arguments are
//! log-space gate sums (always <= 0) and shifted softmax logits, which never
//! reach the clamp.

use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub trait Scalar:
    Copy
    + Default
    + PartialOrd
    + PartialEq
    + Send
    + Sync
    + 'static
    + fmt::Debug
    + fmt::Display
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    const ZERO: Self;
    const ONE: Self;
    const DTYPE: Dtype;
    /// Machine epsilon of this width, as f64, for tolerance scaling.
    const EPS: f64;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn ln(self) -> Self;
    fn ln_1p(self) -> Self;
    /// libm exponential; numeric code on gate paths uses [`Scalar::fast_exp`].
    fn exp_std(self) -> Self;
    fn mul_add(self, b: Self, c: Self) -> Self;
    fn is_finite(self) -> bool;
    /// Branch-free polynomial exponential (see module docs).
    fn fast_exp(self) -> Self;
}

impl Scalar for f64 {
    const ZERO: f64 = 0.0;
    const ONE: f64 = 1.0;
    const DTYPE: Dtype = Dtype::F64;
    const EPS: f64 = f64::EPSILON;

    #[inline(always)]
    fn from_f64(v: f64) -> f64 {
        v
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    #[inline(always)]
    fn sqrt(self) -> f64 {
        f64::sqrt(self)
    }
    #[inline(always)]
    fn ln(self) -> f64 {
        f64::ln(self)
    }
    #[inline(always)]
    fn ln_1p(self) -> f64 {
        f64::ln_1p(self)
    }
    #[inline(always)]
    fn exp_std(self) -> f64 {
        f64::exp(self)
    }
    #[inline(always)]
    fn mul_add(self, b: f64, c: f64) -> f64 {
        f64::mul_add(self, b, c)
    }
    #[inline(always)]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }

    #[inline(always)]
    fn fast_exp(self) -> f64 {
        // Shifter constant 1.5 * 2^52: adding it rounds to the nearest
        // integer and leaves that integer in the low mantissa bits.
        const MAGIC: f64 = 6_755_399_441_055_744.0;
        const LOG2E: f64 = std::f64::consts::LOG2_E;
        // ln 2 split so that n * LN2_HI is exact for |n| < 2^20.
        const LN2_HI: f64 = 6.931_471_803_691_238_164_9e-1;
        const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
        // Taylor coefficients 1/k!; |r| <= (ln 2)/2 keeps the truncation
        // term r^13/13! around 2e-16 relative.
        const C: [f64; 13] = [
            1.0,
            1.0,
            5.0e-1,
            1.666_666_666_666_666_6e-1,
            4.166_666_666_666_666_4e-2,
            8.333_333_333_333_333e-3,
            1.388_888_888_888_889e-3,
            1.984_126_984_126_984e-4,
            2.480_158_730_158_73e-5,
            2.755_731_922_398_589e-6,
            2.755_731_922_398_589e-7,
            2.505_210_838_544_172e-8,
            2.087_675_698_786_81e-9,
        ];

        let x = self.max(-708.0).min(709.0);
        let t = x.mul_add(LOG2E, MAGIC);
        let n = t - MAGIC;
        let ni = (t.to_bits() as i64).wrapping_sub(MAGIC.to_bits() as i64);
        let r = x - n * LN2_HI - n * LN2_LO;

        let mut p = C[12];
        p = p.mul_add(r, C[11]);
        p = p.mul_add(r, C[10]);
        p = p.mul_add(r, C[9]);
        p = p.mul_add(r, C[8]);
        p = p.mul_add(r, C[7]);
        p = p.mul_add(r, C[6]);
        p = p.mul_add(r, C[5]);
        p = p.mul_add(r, C[4]);
        p = p.mul_add(r, C[3]);
        p = p.mul_add(r, C[2]);
        p = p.mul_add(r, C[1]);
        p = p.mul_add(r, C[0]);

        let scale = f64::from_bits(((1023 + ni) as u64) << 52);
        p * scale
    }
}

impl Scalar for f32 {
    const ZERO: f32 = 0.0;
    const ONE: f32 = 1.0;
    const DTYPE: Dtype = Dtype::F32;
    const EPS: f64 = f32::EPSILON as f64;

    #[inline(always)]
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn abs(self) -> f32 {
        f32::abs(self)
    }
    #[inline(always)]
    fn sqrt(self) -> f32 {
        f32::sqrt(self)
    }
    #[inline(always)]
    fn ln(self) -> f32 {
        f32::ln(self)
    }
    #[inline(always)]
    fn ln_1p(self) -> f32 {
        f32::ln_1p(self)
    }
    #[inline(always)]
    fn exp_std(self) -> f32 {
        f32::exp(self)
    }
    #[inline(always)]
    fn mul_add(self, b: f32, c: f32) -> f32 {
        f32::mul_add(self, b, c)
    }
    #[inline(always)]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }

    #[inline(always)]
    fn fast_exp(self) -> f32 {
        const MAGIC: f32 = 12_582_912.0; // 1.5 * 2^23
        const LOG2E: f32 = std::f32::consts::LOG2_E;
        const LN2_HI: f32 = 6.933_593_75e-1;
        const LN2_LO: f32 = -2.121_944_4e-4;
        const C: [f32; 7] = [
            1.0,
            1.0,
            5.0e-1,
            1.666_666_7e-1,
            4.166_666_8e-2,
            8.333_334e-3,
            1.388_888_9e-3,
        ];

        let x = self.max(-87.0).min(88.0);
        let t = x.mul_add(LOG2E, MAGIC);
        let n = t - MAGIC;
        let ni = (t.to_bits() as i32).wrapping_sub(MAGIC.to_bits() as i32);
        let r = x - n * LN2_HI - n * LN2_LO;

        let mut p = C[6];
        p = p.mul_add(r, C[5]);
        p = p.mul_add(r, C[4]);
        p = p.mul_add(r, C[3]);
        p = p.mul_add(r, C[2]);
        p = p.mul_add(r, C[1]);
        p = p.mul_add(r, C[0]);

        let scale = f32::from_bits(((127 + ni) as u32) << 23);
        p * scale
    }
}

/// In-place exponential over a slice; the loop body is branch-free so the
/// compiler vectorizes it.
#[inline]
pub fn exp_slice<T: Scalar>(xs: &mut [T]) {
    for x in xs.iter_mut() {
        *x = x.fast_exp();
    }
}

/// Logistic sigmoid, branch-free so elementwise maps vectorize. The
/// clamped exponential keeps the ratio finite on both tails, saturating to
/// 0 and 1 exactly where the true function is within one ulp of them.
#[inline(always)]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    let e = (-x).fast_exp();
    T::ONE / (T::ONE + e)
}

/// x * sigmoid(x).
#[inline(always)]
pub fn swish<T: Scalar>(x: T) -> T {
    x * sigmoid(x)
}

/// Derivative of swish: sigmoid(x) * (1 + x * (1 - sigmoid(x))).
#[inline(always)]
pub fn swish_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::ONE + x * (T::ONE - s))
}

/// log(sigmoid(x)) = -softplus(-x), stable on both tails.
#[inline(always)]
pub fn log_sigmoid<T: Scalar>(x: T) -> T {
    -softplus(-x)
}

/// log(1 + e^x) without overflow; exact-enough linear tail for large x.
#[inline(always)]
pub fn softplus<T: Scalar>(x: T) -> T {
    let cut = T::from_f64(30.0);
    if x > cut {
        x
    } else if x < -cut {
        x.exp_std()
    } else {
        (T::ONE + x.exp_std()).ln()
    }
}
