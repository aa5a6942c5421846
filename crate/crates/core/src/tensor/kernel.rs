use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Result};

use super::Matrix;

/// 4-D convolution kernel.
///
/// Storage is `[c_out][k_h][k_w][c_in]`, row-major, which is exactly the
/// row-major layout of the `c_out x (k_h·k_w·c_in)` matrix view: row = output
/// channel, column = `(dy·k_w + dx)·c_in + ci` with the input channel
/// varying fastest. Converting between the two views never moves data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvKernel {
    k_h: usize,
    k_w: usize,
    c_in: usize,
    c_out: usize,
    data: Vec<f64>,
}

impl ConvKernel {
    pub fn zeros(k_h: usize, k_w: usize, c_in: usize, c_out: usize) -> Self {
        Self {
            k_h,
            k_w,
            c_in,
            c_out,
            data: vec![0.0; k_h * k_w * c_in * c_out],
        }
    }

    pub fn new(k_h: usize, k_w: usize, c_in: usize, c_out: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != k_h * k_w * c_in * c_out {
            return Err(shape_err(
                "ConvKernel::new",
                format!(
                    "{k_h}x{k_w}x{c_in}x{c_out} needs {} values, got {}",
                    k_h * k_w * c_in * c_out,
                    data.len()
                ),
            ));
        }
        Ok(Self {
            k_h,
            k_w,
            c_in,
            c_out,
            data,
        })
    }

    /// Inverse of [`ConvKernel::to_matrix`]. `m` must be `c_out x (k_h·k_w·c_in)`.
    pub fn from_matrix(m: Matrix, k_h: usize, k_w: usize, c_in: usize) -> Result<Self> {
        let c_out = m.rows();
        if m.cols() != k_h * k_w * c_in {
            return Err(shape_err(
                "ConvKernel::from_matrix",
                format!(
                    "matrix has {} columns, kernel {k_h}x{k_w}x{c_in} needs {}",
                    m.cols(),
                    k_h * k_w * c_in
                ),
            ));
        }
        Ok(Self {
            k_h,
            k_w,
            c_in,
            c_out,
            data: m.into_data(),
        })
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::new(self.c_out, self.k_h * self.k_w * self.c_in, self.data.clone())
            .expect("kernel storage always matches its matrix view")
    }

    pub fn k_h(&self) -> usize {
        self.k_h
    }

    pub fn k_w(&self) -> usize {
        self.k_w
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn offset(&self, co: usize, dy: usize, dx: usize, ci: usize) -> usize {
        ((co * self.k_h + dy) * self.k_w + dx) * self.c_in + ci
    }

    #[inline]
    pub fn get(&self, co: usize, dy: usize, dx: usize, ci: usize) -> f64 {
        self.data[self.offset(co, dy, dx, ci)]
    }

    pub fn set(&mut self, co: usize, dy: usize, dx: usize, ci: usize, v: f64) {
        let o = self.offset(co, dy, dx, ci);
        self.data[o] = v;
    }
}
