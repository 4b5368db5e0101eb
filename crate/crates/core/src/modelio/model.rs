use std::path::Path;

use super::{checked_product, format_error, read_file, write_file, FormatError, Reader, FORMAT_VERSION, MODEL_MAGIC};
use crate::netexec::{BatchNorm, Conv2d, Dims, Layer, Linear, NetworkModel, Pool};

const FLAG_BIAS: u8 = 1;
const FLAG_RELU: u8 = 2;

fn tag(layer: &Layer) -> u8 {
    match layer {
        Layer::Conv2d(_) => 0,
        Layer::Linear(_) => 1,
        Layer::Relu => 2,
        Layer::MaxPool(_) => 3,
        Layer::AvgPool(_) => 4,
        Layer::BatchNorm(_) => 5,
        Layer::Flatten => 6,
    }
}

fn count(offset: usize, what: &'static str, dims: &[usize]) -> Result<usize, FormatError> {
    checked_product(dims).ok_or(FormatError::Invalid { offset, what, reason: format!("{dims:?} is too large") })
}

fn read_layer(r: &mut Reader) -> Result<Layer, FormatError> {
    let start = r.offset();
    let kind = r.u8("layer kind")?;
    if kind > 6 {
        return Err(FormatError::UnknownKind { offset: start, tag: kind });
    }
    let flags_at = r.offset();
    let flags = r.u8("layer flags")?;
    let allowed = if kind <= 1 { FLAG_BIAS | FLAG_RELU } else { 0 };
    if flags & !allowed != 0 {
        return Err(FormatError::Invalid {
            offset: flags_at,
            what: "layer flags",
            reason: format!("0x{flags:02x} not allowed for kind {kind}"),
        });
    }
    let (has_bias, relu) = (flags & FLAG_BIAS != 0, flags & FLAG_RELU != 0);
    Ok(match kind {
        0 => {
            let geo_at = r.offset();
            let mut g = [0usize; 6];
            for v in &mut g {
                *v = r.u32("conv2d geometry")?;
            }
            let [in_channels, out_channels, kernel_h, kernel_w, stride, padding] = g;
            let n = count(geo_at, "conv2d geometry", &[out_channels, in_channels, kernel_h, kernel_w])?;
            let weights = r.f32s(n, "conv2d weights")?;
            let bias = if has_bias { Some(r.f32s(out_channels, "conv2d bias")?) } else { None };
            Layer::Conv2d(Conv2d {
                in_channels,
                out_channels,
                kernel_h,
                kernel_w,
                stride,
                padding,
                weights,
                bias,
                relu,
            })
        }
        1 => {
            let geo_at = r.offset();
            let in_features = r.u32("linear geometry")?;
            let out_features = r.u32("linear geometry")?;
            let n = count(geo_at, "linear geometry", &[out_features, in_features])?;
            let weights = r.f32s(n, "linear weights")?;
            let bias = if has_bias { Some(r.f32s(out_features, "linear bias")?) } else { None };
            Layer::Linear(Linear { in_features, out_features, weights, bias, relu })
        }
        2 => Layer::Relu,
        3 | 4 => {
            let pool = Pool { kernel: r.u32("pool geometry")?, stride: r.u32("pool geometry")? };
            if kind == 3 {
                Layer::MaxPool(pool)
            } else {
                Layer::AvgPool(pool)
            }
        }
        5 => {
            let c = r.u32("batchnorm channels")?;
            let eps_check = r.offset();
            let bn = BatchNorm {
                gamma: r.f32s(c, "batchnorm gamma")?,
                beta: r.f32s(c, "batchnorm beta")?,
                mean: r.f32s(c, "batchnorm mean")?,
                var: r.f32s(c, "batchnorm var")?,
                eps: r.f32s(1, "batchnorm eps")?[0],
            };
            if bn.eps < 0.0 || bn.var.iter().any(|v| *v + bn.eps <= 0.0) {
                return Err(FormatError::Invalid {
                    offset: eps_check,
                    what: "batchnorm parameters",
                    reason: "var + eps must be positive".into(),
                });
            }
            Layer::BatchNorm(bn)
        }
        6 => Layer::Flatten,
        _ => unreachable!(),
    })
}

pub fn parse_model(bytes: &[u8]) -> Result<NetworkModel, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    r.version()?;
    let layer_count = r.u16("layer count")? as usize;
    let dims_at = r.offset();
    let (c, h, w) = (r.u32("input dims")?, r.u32("input dims")?, r.u32("input dims")?);
    if count(dims_at, "input dims", &[c, h, w])? == 0 {
        return Err(FormatError::Invalid { offset: dims_at, what: "input dims", reason: "empty input".into() });
    }
    let mut layers = Vec::with_capacity(layer_count.min(r.remaining() / 2));
    let mut offsets = Vec::with_capacity(layers.capacity());
    for _ in 0..layer_count {
        offsets.push(r.offset());
        layers.push(read_layer(&mut r)?);
    }
    r.finish()?;

    let mut dims = Dims::new(c, h, w);
    for (i, layer) in layers.iter().enumerate() {
        let shape_error = |reason: String| FormatError::Shape { offset: offsets[i], layer: i, reason };
        dims = layer.output_dims(dims).map_err(|e| shape_error(e.to_string()))?;
        if checked_product(&[dims.channels, dims.height, dims.width]).is_none() {
            return Err(shape_error(format!("output {dims} is too large")));
        }
    }
    NetworkModel::new(Dims::new(c, h, w), layers).map_err(|e| FormatError::Shape {
        offset: 0,
        layer: 0,
        reason: e.to_string(),
    })
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    let v = u32::try_from(v).expect("geometry exceeds u32");
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, vs: &[f32]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Encode a model. Geometry values beyond `u32` cannot be represented and
/// panic; every model produced by [`parse_model`] round-trips exactly.
pub fn serialize_model(model: &NetworkModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MODEL_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let n = u16::try_from(model.layers().len()).expect("more than 65535 layers");
    out.extend_from_slice(&n.to_le_bytes());
    let d = model.input_dims();
    for v in [d.channels, d.height, d.width] {
        put_u32(&mut out, v);
    }
    for layer in model.layers() {
        out.push(tag(layer));
        let flags = |bias: &Option<Vec<f32>>, relu: bool| {
            (if bias.is_some() { FLAG_BIAS } else { 0 }) | (if relu { FLAG_RELU } else { 0 })
        };
        match layer {
            Layer::Conv2d(c) => {
                out.push(flags(&c.bias, c.relu));
                for v in [c.in_channels, c.out_channels, c.kernel_h, c.kernel_w, c.stride, c.padding] {
                    put_u32(&mut out, v);
                }
                put_f32s(&mut out, &c.weights);
                if let Some(b) = &c.bias {
                    put_f32s(&mut out, b);
                }
            }
            Layer::Linear(l) => {
                out.push(flags(&l.bias, l.relu));
                put_u32(&mut out, l.in_features);
                put_u32(&mut out, l.out_features);
                put_f32s(&mut out, &l.weights);
                if let Some(b) = &l.bias {
                    put_f32s(&mut out, b);
                }
            }
            Layer::MaxPool(p) | Layer::AvgPool(p) => {
                out.push(0);
                put_u32(&mut out, p.kernel);
                put_u32(&mut out, p.stride);
            }
            Layer::BatchNorm(bn) => {
                out.push(0);
                put_u32(&mut out, bn.gamma.len());
                for v in [&bn.gamma, &bn.beta, &bn.mean, &bn.var] {
                    put_f32s(&mut out, v);
                }
                put_f32s(&mut out, &[bn.eps]);
            }
            Layer::Relu | Layer::Flatten => out.push(0),
        }
    }
    out
}

pub fn load_model(path: impl AsRef<Path>) -> crate::Result<NetworkModel> {
    let path = path.as_ref();
    parse_model(&read_file(path)?).map_err(|e| format_error(path, e))
}

pub fn save_model(path: impl AsRef<Path>, model: &NetworkModel) -> crate::Result<()> {
    write_file(path.as_ref(), &serialize_model(model))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> NetworkModel {
        NetworkModel::new(
            Dims::new(2, 6, 6),
            vec![
                Layer::Conv2d(Conv2d {
                    in_channels: 2,
                    out_channels: 3,
                    kernel_h: 3,
                    kernel_w: 3,
                    stride: 1,
                    padding: 1,
                    weights: (0..54).map(|i| i as f32 * 0.01).collect(),
                    bias: Some(vec![0.1, -0.2, 0.3]),
                    relu: true,
                }),
                Layer::BatchNorm(BatchNorm {
                    gamma: vec![1.0; 3],
                    beta: vec![0.0; 3],
                    mean: vec![0.5; 3],
                    var: vec![2.0; 3],
                    eps: 1e-5,
                }),
                Layer::AvgPool(Pool { kernel: 2, stride: 2 }),
                Layer::Relu,
                Layer::Flatten,
                Layer::Linear(Linear {
                    in_features: 27,
                    out_features: 4,
                    weights: vec![0.25; 108],
                    bias: None,
                    relu: false,
                }),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let m = small();
        let bytes = serialize_model(&m);
        assert_eq!(parse_model(&bytes).unwrap(), m);
        assert_eq!(serialize_model(&parse_model(&bytes).unwrap()), bytes);
    }

    #[test]
    fn empty_file_is_bad_magic() {
        assert!(matches!(parse_model(&[]), Err(FormatError::BadMagic { .. })));
        assert!(matches!(parse_model(b"DCDS\x01\x00"), Err(FormatError::BadMagic { .. })));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = serialize_model(&small());
        bytes[4] = 2;
        assert_eq!(parse_model(&bytes), Err(FormatError::UnsupportedVersion { offset: 4, found: 2, expected: 1 }));
    }

    #[test]
    fn truncated_blob_reports_offset() {
        let bytes = serialize_model(&small());
        let cut = &bytes[..50];
        match parse_model(cut) {
            Err(FormatError::Truncated { offset, what, .. }) => {
                assert_eq!(offset, 20 + 2 + 24);
                assert_eq!(what, "conv2d weights");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_kind_and_flags() {
        let mut bytes = serialize_model(&small());
        let relu_at = bytes.len() - (2 + 8 + 108 * 4) - 2 - 2;
        assert_eq!(bytes[relu_at], 2);
        bytes[relu_at + 1] = 1;
        assert!(matches!(parse_model(&bytes), Err(FormatError::Invalid { what: "layer flags", .. })));
        bytes[relu_at] = 9;
        assert_eq!(parse_model(&bytes), Err(FormatError::UnknownKind { offset: relu_at, tag: 9 }));
    }

    #[test]
    fn trailing_bytes() {
        let mut bytes = serialize_model(&small());
        let len = bytes.len();
        bytes.push(0);
        assert_eq!(parse_model(&bytes), Err(FormatError::TrailingBytes { offset: len, extra: 1 }));
    }

    #[test]
    fn shape_inconsistency_names_the_layer() {
        // a linear layer expecting 9 inputs after a 27-element flatten
        let good = serialize_model(&small());
        let linear_at = good.len() - (2 + 8 + 108 * 4);
        let mut bytes = good[..linear_at].to_vec();
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&9u32.to_le_bytes());
        bytes.extend_from_slice(&4u32.to_le_bytes());
        bytes.extend(std::iter::repeat(0u8).take(36 * 4));
        match parse_model(&bytes) {
            Err(FormatError::Shape { offset, layer, .. }) => assert_eq!((offset, layer), (linear_at, 5)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_finite_weights_rejected() {
        let mut bytes = serialize_model(&small());
        let w0 = 20 + 2 + 24;
        bytes[w0..w0 + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(parse_model(&bytes), Err(FormatError::Invalid { offset, .. }) if offset == w0));
    }

    #[test]
    fn huge_geometry_does_not_allocate() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"DCAM\x01\x00\x01\x00");
        for v in [1u32, 4, 4] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes.extend_from_slice(&[1, 0]);
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        bytes.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(matches!(parse_model(&bytes), Err(FormatError::Invalid { .. })));
        let mut bytes2 = bytes.clone();
        bytes2.truncate(bytes.len() - 8);
        bytes2.extend_from_slice(&60000u32.to_le_bytes());
        bytes2.extend_from_slice(&30000u32.to_le_bytes());
        assert!(matches!(parse_model(&bytes2), Err(FormatError::Truncated { .. })));
    }
}
