use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar used by embeddings, indexes and scoring: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`.
    fn of(value: f64) -> Self;

    /// Widening (or identity) conversion to `f64`.
    fn widen(self) -> f64;

    /// Storage form used by the index file and the encoder wire protocol.
    fn to_f32_lossy(self) -> f32;

    fn from_stored(value: f32) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn of(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn widen(self) -> f64 {
        self as f64
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self
    }

    #[inline]
    fn from_stored(value: f32) -> Self {
        value
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(value: f64) -> Self {
        value
    }

    #[inline]
    fn widen(self) -> f64 {
        self
    }

    #[inline]
    fn to_f32_lossy(self) -> f32 {
        self as f32
    }

    #[inline]
    fn from_stored(value: f32) -> Self {
        value as f64
    }
}

/// Dot product with sixteen independent lane accumulators.
///
/// The summation order is fixed, so results are reproducible bit-for-bit for
/// identical inputs on every platform.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    const LANES: usize = 16;
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::zero(); LANES];
    let chunks_a = a.chunks_exact(LANES);
    let chunks_b = b.chunks_exact(LANES);
    let rem_a = chunks_a.remainder();
    let rem_b = chunks_b.remainder();
    for (ca, cb) in chunks_a.zip(chunks_b) {
        let ca: &[S; LANES] = ca.try_into().expect("exact chunk");
        let cb: &[S; LANES] = cb.try_into().expect("exact chunk");
        for i in 0..LANES {
            acc[i] += ca[i] * cb[i];
        }
    }
    let mut tail = S::zero();
    for (x, y) in rem_a.iter().zip(rem_b) {
        tail += *x * *y;
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for i in 0..width {
            acc[i] += acc[i + width];
        }
    }
    acc[0] + tail
}

/// Euclidean norm, accumulated in `f64`.
pub fn norm<S: Scalar>(values: &[S]) -> f64 {
    values
        .iter()
        .map(|v| {
            let w = v.widen();
            w * w
        })
        .sum::<f64>()
        .sqrt()
}
