use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};
use crate::tensor::ConvKernel;

/// `channels x height x width` activations, channel-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(shape_err(
                "FeatureMap::new",
                format!("{channels}x{height}x{width} needs {} values, got {}", channels * height * width, data.len()),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }
}

/// Stride-1 cross-correlation with zero "same" padding. For even kernel sizes
/// the extra padding goes to the bottom/right.
pub fn conv2d_forward(kernel: &ConvKernel, input: &FeatureMap) -> Result<FeatureMap> {
    if kernel.c_in() != input.channels {
        return Err(shape_err(
            "conv2d_forward",
            format!("kernel expects {} input channels, got {}", kernel.c_in(), input.channels),
        ));
    }
    let (h, w) = (input.height, input.width);
    let (kh, kw, c_in) = (kernel.k_h(), kernel.k_w(), kernel.c_in());
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut out = FeatureMap::zeros(kernel.c_out(), h, w);
    let kd = kernel.data();
    for co in 0..kernel.c_out() {
        for dy in 0..kh {
            let y_lo = ph.saturating_sub(dy);
            let y_hi = (h + ph).saturating_sub(dy).min(h);
            for dx in 0..kw {
                let x_lo = pw.saturating_sub(dx);
                let x_hi = (w + pw).saturating_sub(dx).min(w);
                let tap = &kd[((co * kh + dy) * kw + dx) * c_in..][..c_in];
                for (ci, &k) in tap.iter().enumerate() {
                    if k == 0.0 {
                        continue;
                    }
                    for y in y_lo..y_hi {
                        let sy = y + dy - ph;
                        let src = &input.data[(ci * h + sy) * w..][..w];
                        let dst = &mut out.data[(co * h + y) * w..][..w];
                        for x in x_lo..x_hi {
                            dst[x] += k * src[x + dx - pw];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::channel_maintain;
    use crate::tensor::{gaussian_matrix, Rng};

    fn naive(kernel: &ConvKernel, input: &FeatureMap) -> FeatureMap {
        let k = kernel.k_h() as isize;
        let p = (k - 1) / 2;
        let mut out = FeatureMap::zeros(kernel.c_out(), input.height, input.width);
        for co in 0..kernel.c_out() {
            for y in 0..input.height as isize {
                for x in 0..input.width as isize {
                    let mut s = 0.0;
                    for dy in 0..k {
                        for dx in 0..k {
                            for ci in 0..kernel.c_in() {
                                let (sy, sx) = (y + dy - p, x + dx - p);
                                if sy < 0 || sx < 0 || sy >= input.height as isize || sx >= input.width as isize {
                                    continue;
                                }
                                s += kernel.get(co, dy as usize, dx as usize, ci)
                                    * input.get(ci, sy as usize, sx as usize);
                            }
                        }
                    }
                    out.set(co, y as usize, x as usize, s);
                }
            }
        }
        out
    }

    fn random_map(rng: &mut Rng, c: usize, h: usize, w: usize) -> FeatureMap {
        FeatureMap::new(c, h, w, gaussian_matrix(rng, 1, c * h * w, 0.0, 1.0).into_data()).unwrap()
    }

    #[test]
    fn matches_loop_oracle() {
        let mut rng = Rng::new(5);
        for (k, c_in, c_out) in [(3, 2, 3), (1, 3, 2), (5, 1, 2)] {
            let m = gaussian_matrix(&mut rng, c_out, k * k * c_in, 0.0, 1.0);
            let kernel = ConvKernel::from_matrix(m, k, k, c_in).unwrap();
            let input = random_map(&mut rng, c_in, 4, 4);
            let fast = conv2d_forward(&kernel, &input).unwrap();
            let slow = naive(&kernel, &input);
            for (a, b) in fast.data.iter().zip(&slow.data) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_kernels_transit_input() {
        let mut rng = Rng::new(6);
        let input = random_map(&mut rng, 3, 5, 6);
        let cm = channel_maintain(3, 3, 3, 1.0).unwrap();
        assert_eq!(conv2d_forward(&cm, &input).unwrap(), input);
        let one = ConvKernel::from_matrix(crate::tensor::Matrix::identity(3), 1, 1, 3).unwrap();
        assert_eq!(conv2d_forward(&one, &input).unwrap(), input);
    }

    #[test]
    fn channel_mismatch() {
        let k = ConvKernel::zeros(3, 3, 2, 2);
        assert!(conv2d_forward(&k, &FeatureMap::zeros(3, 2, 2)).is_err());
    }
}
