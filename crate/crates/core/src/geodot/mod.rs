//! Approximate geometric dot products.
//!
//! `x · y ≈ ‖x‖ ‖y‖ cos(π/k · HD(sign(xC), sign(yC)))`, with the magnitudes
//! stored as [`Minifloat8`] and the cosine replaced by a three-piece linear
//! approximation ([`approx_cosine`]).

mod hash;
mod minifloat;
mod projection;

use std::f64::consts::PI;

pub(crate) use hash::xor_popcount;
pub use hash::{hamming_distance, HashBits};
pub use minifloat::Minifloat8;
pub(crate) use projection::{gaussian_vector, splitmix64};
pub use projection::{layer_seed, ProjectionMatrix};

use crate::{Error, Result};

/// Exact inner product in double precision, accumulated left to right.
/// This is the reference every approximation is measured against.
pub fn algebraic_dot(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.is_empty() {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }
    Ok(x.iter().zip(y).fold(0.0, |acc, (a, b)| acc + a * b))
}

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |acc, v| acc + v * v).sqrt()
}

/// `sign(xC)` as bits; a projection of exactly zero maps to 1.
pub fn sign_hash(x: &[f64], c: &ProjectionMatrix) -> Result<HashBits> {
    let mut buf = vec![0.0; c.k()];
    sign_hash_with(x, c, &mut buf)
}

/// [`sign_hash`] with a caller-provided scratch buffer of length `k`.
pub fn sign_hash_with(x: &[f64], c: &ProjectionMatrix, scratch: &mut [f64]) -> Result<HashBits> {
    c.project_into(x, scratch)?;
    let mut words = vec![0u64; c.k().div_ceil(64)];
    for (j, v) in scratch.iter().enumerate() {
        if *v >= 0.0 {
            words[j / 64] |= 1 << (j % 64);
        }
    }
    Ok(HashBits::from_words(words, c.k()))
}

/// `π · hd / k`.
pub fn estimate_angle(hd: u32, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::out_of_range("hash length", k));
    }
    if hd as usize > k {
        return Err(Error::out_of_range("hamming distance", format!("{hd} > {k}")));
    }
    Ok(PI * f64::from(hd) / k as f64)
}

/// Piecewise-linear cosine:
///
/// * `1 - θ/π` for `0 ≤ θ ≤ π/3`
/// * `-0.96 θ + 1.51` for `π/3 < θ ≤ π/2`
/// * `-approx_cosine(π - θ)` for `θ > π/2`
///
/// The pieces are used verbatim, so the function jumps from `2/3` to about
/// `0.505` at `π/3`, and `approx_cosine(π/2) ≈ 0.00204` while values just
/// above `π/2` are close to `-0.00204`. No clamping is applied.
pub fn approx_cosine(theta: f64) -> Result<f64> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::out_of_range("angle", theta));
    }
    Ok(piecewise_cosine(theta))
}

fn piecewise_cosine(theta: f64) -> f64 {
    if theta > PI / 2.0 {
        -piecewise_cosine(PI - theta)
    } else if theta <= PI / 3.0 {
        1.0 - theta / PI
    } else {
        -0.96 * theta + 1.51
    }
}

/// Which cosine to apply to the estimated angle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CosineModel {
    /// The hardware-friendly piecewise-linear approximation.
    #[default]
    Piecewise,
    /// `f64::cos`, for measuring how much error the approximation adds.
    Exact,
}

impl CosineModel {
    pub fn eval(self, theta: f64) -> f64 {
        match self {
            CosineModel::Piecewise => piecewise_cosine(theta),
            CosineModel::Exact => theta.cos(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CosineModel::Piecewise => "piecewise",
            CosineModel::Exact => "exact",
        }
    }
}

/// Hashed representation of one vector.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Context {
    pub norm: Minifloat8,
    pub hash: HashBits,
}

impl Context {
    pub fn k(&self) -> usize {
        self.hash.len()
    }
}

/// Norm is computed on the full-precision vector and only then quantized.
/// A zero vector yields norm 0 and an all-ones hash.
pub fn build_context(x: &[f64], c: &ProjectionMatrix) -> Result<Context> {
    let mut scratch = vec![0.0; c.k()];
    build_context_with(x, c, &mut scratch)
}

pub fn build_context_with(x: &[f64], c: &ProjectionMatrix, scratch: &mut [f64]) -> Result<Context> {
    let hash = sign_hash_with(x, c, scratch)?;
    Ok(Context { norm: Minifloat8::from_f64(l2_norm(x)), hash })
}

/// Final step of the approximate product once the hamming distance is known:
/// `norm_a * norm_b * cos(π hd / k)`, multiplied in that order.
#[inline]
pub fn dot_from_distance(norm_a: Minifloat8, norm_b: Minifloat8, hd: u32, k: usize, cosine: CosineModel) -> f64 {
    let theta = PI * f64::from(hd) / k as f64;
    norm_a.to_f64() * norm_b.to_f64() * cosine.eval(theta)
}

pub fn approx_dot(cx: &Context, cy: &Context) -> Result<f64> {
    approx_dot_with(cx, cy, CosineModel::Piecewise)
}

pub fn approx_dot_with(cx: &Context, cy: &Context, cosine: CosineModel) -> Result<f64> {
    let hd = hamming_distance(&cx.hash, &cy.hash)?;
    Ok(dot_from_distance(cx.norm, cy.norm, hd, cx.k(), cosine))
}
