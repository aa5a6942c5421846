use crate::error::{shape_err, Result};
use crate::tensor::{matmul, Matrix};

use super::{conv2d_forward, forward, predict, FeatureMap, LayerParams, LayerSpec, NetworkSpec, ParamSet};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// `∂output/∂input` at the single sample `x` (`d_out x d_in`). Exact chain
/// rule for networks without nonlinearities, central differences otherwise.
pub fn io_jacobian(net: &NetworkSpec, params: &ParamSet, x: &[f64]) -> Result<Matrix> {
    if net.is_linear() {
        io_jacobian_chain(net, params, x)
    } else {
        io_jacobian_fd(net, params, x, FD_STEP)
    }
}

/// Column-by-column central differences with step `h`.
pub fn io_jacobian_fd(net: &NetworkSpec, params: &ParamSet, x: &[f64], h: f64) -> Result<Matrix> {
    let d_in = net.input_dim();
    if x.len() != d_in {
        return Err(shape_err("io_jacobian", format!("expected {d_in} inputs, got {}", x.len())));
    }
    // All 2·d_in perturbed copies go through the network as one batch.
    let mut batch = Matrix::zeros(2 * d_in, d_in);
    for j in 0..d_in {
        batch.row_mut(2 * j).copy_from_slice(x);
        batch.row_mut(2 * j + 1).copy_from_slice(x);
        batch[(2 * j, j)] += h;
        batch[(2 * j + 1, j)] -= h;
    }
    let out = predict(net, params, &batch)?;
    let d_out = net.output_dim();
    let mut jac = Matrix::zeros(d_out, d_in);
    for j in 0..d_in {
        let (plus, minus) = (out.row(2 * j), out.row(2 * j + 1));
        for i in 0..d_out {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

fn scale_rows(m: &mut Matrix, pre: &[f64], act: super::Activation) {
    for (r, z) in pre.iter().enumerate() {
        let d = act.derivative(*z);
        if d != 1.0 {
            m.row_mut(r).iter_mut().for_each(|v| *v *= d);
        }
    }
}

/// Jacobian by the chain rule, multiplying per-layer maps
/// `diag(a'(z))·W` (dense), `I + g·W_L·diag(a'(z))·…·W_1` (residual) and the
/// conv operator's matrix, built from its action on unit inputs.
pub fn io_jacobian_chain(net: &NetworkSpec, params: &ParamSet, x: &[f64]) -> Result<Matrix> {
    let d_in = net.input_dim();
    if x.len() != d_in {
        return Err(shape_err("io_jacobian", format!("expected {d_in} inputs, got {}", x.len())));
    }
    let xm = Matrix::new(1, d_in, x.to_vec())?;
    let trace = forward(net, params, &xm)?;
    let mut jac = Matrix::identity(d_in);
    for (i, (spec, p)) in net.layers.iter().zip(&params.layers).enumerate() {
        let input = trace.activations[i].row(0);
        let local = match (spec, p) {
            (LayerSpec::Dense { activation, .. }, LayerParams::Dense { weight }) => {
                let pre = matmul(weight, &Matrix::column(input))?;
                let mut w = weight.clone();
                scale_rows(&mut w, pre.data(), *activation);
                w
            }
            (LayerSpec::Residual { activation, width, .. }, LayerParams::Residual { stem, gate }) => {
                let mut h = Matrix::column(input);
                let mut branch = Matrix::identity(*width);
                for (s, w) in stem.iter().enumerate() {
                    let z = matmul(w, &h)?;
                    branch = matmul(w, &branch)?;
                    if s + 1 < stem.len() {
                        scale_rows(&mut branch, z.data(), *activation);
                        h = activation.apply(&z);
                    }
                }
                let g = gate.as_ref().map_or(1.0, |g| g[(0, 0)]);
                let mut local = Matrix::identity(*width);
                local.axpy(g, &branch)?;
                local
            }
            (
                LayerSpec::Conv2d {
                    c_in,
                    height,
                    width,
                    activation,
                    ..
                },
                LayerParams::Conv { kernel },
            ) => {
                let n_in = spec.input_dim();
                let mut op = Matrix::zeros(spec.output_dim(), n_in);
                for j in 0..n_in {
                    let mut e = FeatureMap::zeros(*c_in, *height, *width);
                    e.data[j] = 1.0;
                    let col = conv2d_forward(kernel, &e)?;
                    for (r, v) in col.data.iter().enumerate() {
                        op[(r, j)] = *v;
                    }
                }
                let pre = conv2d_forward(kernel, &FeatureMap::new(*c_in, *height, *width, input.to_vec())?)?;
                scale_rows(&mut op, &pre.data, *activation);
                op
            }
            _ => return Err(shape_err("io_jacobian", "parameters do not match the layer kind")),
        };
        jac = matmul(&local, &jac)?;
    }
    Ok(jac)
}
