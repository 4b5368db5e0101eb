//! Digital post-processing: everything after the dot products.

use super::{ActivationTensor, BatchNorm, Dims, Layer, Pool};
use crate::{Error, Result};

/// Transpose a `patches x kernels` result into a `kernels x H x W` map.
pub fn feature_map(pre: &[f64], kernels: usize, dims: Dims) -> Result<ActivationTensor> {
    if dims.channels != kernels || pre.len() != dims.len() {
        return Err(Error::DimensionMismatch { expected: dims.len(), found: pre.len() });
    }
    let patches = dims.height * dims.width;
    let mut data = vec![0.0; pre.len()];
    for p in 0..patches {
        for j in 0..kernels {
            data[j * patches + p] = pre[p * kernels + j];
        }
    }
    Ok(ActivationTensor { dims, data, batch_index: 0 })
}

pub fn relu(t: &mut ActivationTensor) {
    for v in &mut t.data {
        *v = v.max(0.0);
    }
}

fn pool_with(
    t: &ActivationTensor,
    pool: &Pool,
    init: f64,
    fold: impl Fn(f64, f64) -> f64,
    scale: f64,
) -> Result<ActivationTensor> {
    let out = Layer::MaxPool(*pool).output_dims(t.dims)?;
    let mut data = Vec::with_capacity(out.len());
    for c in 0..out.channels {
        for oy in 0..out.height {
            for ox in 0..out.width {
                let mut acc = init;
                for ky in 0..pool.kernel {
                    for kx in 0..pool.kernel {
                        acc = fold(acc, t.at(c, oy * pool.stride + ky, ox * pool.stride + kx));
                    }
                }
                data.push(acc * scale);
            }
        }
    }
    Ok(ActivationTensor { dims: out, data, batch_index: t.batch_index })
}

pub fn max_pool(t: &ActivationTensor, pool: &Pool) -> Result<ActivationTensor> {
    pool_with(t, pool, f64::NEG_INFINITY, f64::max, 1.0)
}

pub fn avg_pool(t: &ActivationTensor, pool: &Pool) -> Result<ActivationTensor> {
    let area = (pool.kernel * pool.kernel) as f64;
    pool_with(t, pool, 0.0, |a, b| a + b, 1.0 / area)
}

pub fn batch_norm(t: &mut ActivationTensor, bn: &BatchNorm) -> Result<()> {
    Layer::BatchNorm(bn.clone()).output_dims(t.dims)?;
    let plane = t.dims.height * t.dims.width;
    for c in 0..t.dims.channels {
        let scale = f64::from(bn.gamma[c]) / (f64::from(bn.var[c]) + f64::from(bn.eps)).sqrt();
        let shift = f64::from(bn.beta[c]) - f64::from(bn.mean[c]) * scale;
        for v in &mut t.data[c * plane..(c + 1) * plane] {
            *v = *v * scale + shift;
        }
    }
    Ok(())
}

/// Apply a chain of non-dot layers in order.
pub fn post_process(mut t: ActivationTensor, chain: &[Layer]) -> Result<ActivationTensor> {
    for layer in chain {
        t = match layer {
            Layer::Relu => {
                relu(&mut t);
                t
            }
            Layer::MaxPool(p) => max_pool(&t, p)?,
            Layer::AvgPool(p) => avg_pool(&t, p)?,
            Layer::BatchNorm(bn) => {
                batch_norm(&mut t, bn)?;
                t
            }
            Layer::Flatten => {
                t.dims = Dims::new(t.dims.len(), 1, 1);
                t
            }
            Layer::Conv2d(_) | Layer::Linear(_) => {
                return Err(Error::Config("post_process only handles non-dot layers".into()))
            }
        };
    }
    Ok(t)
}
