use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};

use crate::{Error, Result};

/// Gaussian random matrix `C` (n inputs × k hash bits) for sign hashing.
///
/// Generation is pinned so that `(seed, n, k)` reproduces the same entries on
/// any platform:
///
/// * Column `j` is drawn from `ChaCha20Rng::seed_from_u64(seed)` switched to
///   stream `j`, so columns are independent of each other and of `k`. The
///   matrix for a shorter hash is the column prefix of a longer one.
/// * Uniforms use the top 53 bits of `next_u64`: `u = (x >> 11) * 2^-53`.
/// * Normals come in Box-Muller pairs, `sqrt(-2 ln(1 - u1)) * (cos, sin)(2π u2)`,
///   evaluated with `libm`; an odd trailing draw is discarded.
///
/// Entries are stored row-major (`entries[i * k + j]`).
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionMatrix {
    seed: u64,
    n: usize,
    k: usize,
    entries: Vec<f64>,
}

fn unit_uniform(rng: &mut ChaCha20Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// `n` standard normals from stream `stream` of the generator seeded with `seed`.
pub(crate) fn gaussian_vector(seed: u64, stream: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut out = Vec::with_capacity(n + 1);
    while out.len() < n {
        let u1 = 1.0 - unit_uniform(&mut rng);
        let u2 = unit_uniform(&mut rng);
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let angle = 2.0 * std::f64::consts::PI * u2;
        out.push(r * libm::cos(angle));
        out.push(r * libm::sin(angle));
    }
    out.truncate(n);
    out
}

impl ProjectionMatrix {
    pub fn generate(seed: u64, n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::Config(format!("projection matrix needs n >= 1 and k >= 1 (got n={n}, k={k})")));
        }
        let mut entries = vec![0.0; n * k];
        for j in 0..k {
            for (i, v) in gaussian_vector(seed, j as u64, n).into_iter().enumerate() {
                entries[i * k + j] = v;
            }
        }
        Ok(Self { seed, n, k, entries })
    }

    /// Build from explicit row-major entries. Used for test doubles; the
    /// seed is reported as 0.
    pub fn from_rows(n: usize, k: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::Config("empty projection matrix".into()));
        }
        if entries.len() != n * k {
            return Err(Error::DimensionMismatch { expected: n * k, found: entries.len() });
        }
        Ok(Self { seed: 0, n, k, entries })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Input dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Hash length in bits.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.k + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.k..(row + 1) * self.k]
    }

    /// The first `k` columns. Equal to `generate(seed, n, k)` for generated
    /// matrices.
    pub fn prefix(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k {
            return Err(Error::out_of_range("prefix length", k));
        }
        let mut entries = Vec::with_capacity(self.n * k);
        for i in 0..self.n {
            entries.extend_from_slice(&self.row(i)[..k]);
        }
        Ok(Self { seed: self.seed, n: self.n, k, entries })
    }

    /// Writes `x · C` into `out` (length k) in double precision.
    ///
    /// Every output column accumulates `x[i] * C[i][j]` for `i = 0..n` in
    /// order. Zero inputs are skipped: they can only change an accumulator
    /// between +0 and -0, which does not affect the sign bit.
    pub fn project_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: x.len() });
        }
        if out.len() != self.k {
            return Err(Error::DimensionMismatch { expected: self.k, found: out.len() });
        }
        out.fill(0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (acc, &c) in out.iter_mut().zip(self.row(i)) {
                *acc += xi * c;
            }
        }
        Ok(())
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.k];
        self.project_into(x, &mut out)?;
        Ok(out)
    }
}

/// Seed for the projection matrix of one dot-product layer.
///
/// Mixes the run seed, the layer's position in the model and its input
/// dimension with SplitMix64 finalizers. The hash length is deliberately not
/// mixed in, so the matrices of one layer at different hash lengths are
/// column prefixes of each other.
pub fn layer_seed(global_seed: u64, layer_index: usize, n: usize) -> u64 {
    let mut h = splitmix64(global_seed);
    h = splitmix64(h ^ layer_index as u64);
    splitmix64(h ^ n as u64)
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
