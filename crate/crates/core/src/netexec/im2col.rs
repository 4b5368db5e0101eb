use super::{ActivationTensor, Dims};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn patch_len(&self) -> usize {
        self.in_channels * self.kernel_h * self.kernel_w
    }

    pub fn output_hw(&self, input: Dims) -> Result<(usize, usize)> {
        if input.channels != self.in_channels {
            return Err(Error::Geometry(format!(
                "kernel expects {} input channels, input is {input}",
                self.in_channels
            )));
        }
        if self.kernel_h == 0 || self.kernel_w == 0 || self.stride == 0 || self.in_channels == 0 {
            return Err(Error::Geometry("kernel size, stride and channels must be positive".into()));
        }
        let ph = input.height + 2 * self.padding;
        let pw = input.width + 2 * self.padding;
        if self.kernel_h > ph || self.kernel_w > pw {
            return Err(Error::Geometry(format!(
                "kernel {}x{} larger than padded input {ph}x{pw}",
                self.kernel_h, self.kernel_w
            )));
        }
        if self.stride > ph || self.stride > pw {
            return Err(Error::Geometry(format!("stride {} larger than padded input {ph}x{pw}", self.stride)));
        }
        Ok(((ph - self.kernel_h) / self.stride + 1, (pw - self.kernel_w) / self.stride + 1))
    }
}

/// Row-major matrix of flattened vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct Patches {
    pub count: usize,
    pub len: usize,
    pub data: Vec<f64>,
}

impl Patches {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.len..(i + 1) * self.len]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.len.max(1)).take(self.count)
    }
}

/// One patch per output position (row-major over `(oy, ox)`), each flattened
/// in `(channel, ky, kx)` order to match `[out][in][kh][kw]` kernels.
/// Out-of-bounds taps read zero padding.
pub fn im2col(input: &ActivationTensor, geom: &ConvGeometry) -> Result<Patches> {
    let (oh, ow) = geom.output_hw(input.dims)?;
    let len = geom.patch_len();
    let (h, w) = (input.dims.height as isize, input.dims.width as isize);
    let mut data = Vec::with_capacity(oh * ow * len);
    for oy in 0..oh {
        for ox in 0..ow {
            let y0 = (oy * geom.stride) as isize - geom.padding as isize;
            let x0 = (ox * geom.stride) as isize - geom.padding as isize;
            for c in 0..geom.in_channels {
                for ky in 0..geom.kernel_h as isize {
                    for kx in 0..geom.kernel_w as isize {
                        let (y, x) = (y0 + ky, x0 + kx);
                        let v =
                            if y < 0 || x < 0 || y >= h || x >= w { 0.0 } else { input.at(c, y as usize, x as usize) };
                        data.push(v);
                    }
                }
            }
        }
    }
    Ok(Patches { count: oh * ow, len, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(c: usize, h: usize, w: usize) -> ActivationTensor {
        let dims = Dims::new(c, h, w);
        ActivationTensor::new(dims, (0..dims.len()).map(|i| i as f64).collect()).unwrap()
    }

    fn geom(c: usize, k: usize, stride: usize, padding: usize) -> ConvGeometry {
        ConvGeometry { in_channels: c, kernel_h: k, kernel_w: k, stride, padding }
    }

    #[test]
    fn lenet_first_layer_patch_count() {
        let p = im2col(&tensor(1, 32, 32), &geom(1, 5, 1, 0)).unwrap();
        assert_eq!((p.count, p.len), (784, 25));
        let p = im2col(&tensor(1, 28, 28), &geom(1, 5, 1, 2)).unwrap();
        assert_eq!((p.count, p.len), (784, 25));
    }

    #[test]
    fn full_window_is_flattened_input() {
        let t = tensor(1, 5, 5);
        let p = im2col(&t, &geom(1, 5, 1, 0)).unwrap();
        assert_eq!(p.count, 1);
        assert_eq!(p.row(0), &t.data[..]);
    }

    #[test]
    fn stride_larger_than_input_is_an_error() {
        assert!(im2col(&tensor(1, 5, 5), &geom(1, 5, 6, 0)).is_err());
        assert!(im2col(&tensor(1, 5, 5), &geom(1, 6, 1, 0)).is_err());
        assert!(im2col(&tensor(2, 5, 5), &geom(1, 3, 1, 0)).is_err());
    }

    #[test]
    fn padding_and_channel_order() {
        let t = tensor(2, 2, 2); // channel 0: 0..4, channel 1: 4..8
        let p = im2col(&t, &geom(2, 2, 1, 1)).unwrap();
        assert_eq!(p.count, 9);
        // top-left window covers one real pixel per channel, bottom-right of the window
        assert_eq!(p.row(0), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 4.0]);
        // centre window covers the whole input
        assert_eq!(p.row(4), &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn strided_positions_are_row_major() {
        let t = tensor(1, 4, 4);
        let p = im2col(&t, &geom(1, 2, 2, 0)).unwrap();
        assert_eq!(p.count, 4);
        let firsts: Vec<f64> = p.rows().map(|r| r[0]).collect();
        assert_eq!(firsts, vec![0.0, 2.0, 8.0, 10.0]);
    }
}
