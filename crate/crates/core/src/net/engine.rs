use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{matmul, matmul_nt, matmul_tn, Matrix};

use super::{conv2d_forward, Activation, FeatureMap, LayerParams, LayerSpec, NetworkSpec, ParamSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// `1/(2B)·Σ‖ŷ − y‖²`, so one sample gives the gradient `(ŷ − y)xᵀ`.
    Mse,
    /// Batch mean of `−Σ y·log softmax(ŷ)`.
    SoftmaxCrossEntropy,
}

impl Loss {
    pub fn value(self, output: &Matrix, targets: &Matrix) -> Result<f64> {
        self.value_and_grad(output, targets).map(|(l, _)| l)
    }

    /// Loss and its gradient with respect to the network output.
    pub fn value_and_grad(self, output: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
        if output.shape() != targets.shape() {
            return Err(shape_err(
                "loss",
                format!("output {:?} vs targets {:?}", output.shape(), targets.shape()),
            ));
        }
        let b = output.rows() as f64;
        match self {
            Loss::Mse => {
                let diff = output.sub(targets)?;
                let loss = diff.frobenius_norm_sq() / (2.0 * b);
                Ok((loss, diff.scale(1.0 / b)))
            }
            Loss::SoftmaxCrossEntropy => {
                let mut grad = Matrix::zeros(output.rows(), output.cols());
                let mut loss = 0.0;
                for r in 0..output.rows() {
                    let z = output.row(r);
                    let y = targets.row(r);
                    let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
                    let log_sum = sum.ln();
                    let g = grad.row_mut(r);
                    for c in 0..z.len() {
                        let log_p = z[c] - zmax - log_sum;
                        loss -= y[c] * log_p;
                        g[c] = (log_p.exp() - y[c]) / b;
                    }
                }
                Ok((loss / b, grad))
            }
        }
    }
}

enum LayerCache {
    Dense { pre: Matrix },
    Residual { pre: Vec<Matrix>, hidden: Vec<Matrix> },
    Conv,
}

/// Everything `backward` needs: the input and output of every layer plus
/// per-layer pre-activations.
pub struct ForwardTrace {
    /// `activations[0]` is the input and `activations[i + 1]` the output of
    /// layer `i`.
    pub activations: Vec<Matrix>,
    caches: Vec<LayerCache>,
}

impl ForwardTrace {
    pub fn output(&self) -> &Matrix {
        self.activations.last().expect("trace holds at least the input")
    }
}

fn check_input(net: &NetworkSpec, x: &Matrix) -> Result<()> {
    if x.cols() != net.input_dim() {
        return Err(shape_err(
            "forward",
            format!("network takes {} features, input has {}", net.input_dim(), x.cols()),
        ));
    }
    Ok(())
}

fn conv_rows(spec: &LayerSpec, params: &LayerParams, x: &Matrix) -> Result<Matrix> {
    let (LayerSpec::Conv2d { height, width, c_in, activation, .. }, LayerParams::Conv { kernel }) = (spec, params) else {
        unreachable!("conv_rows called on a non-conv layer");
    };
    let mut out = Matrix::zeros(x.rows(), spec.output_dim());
    for r in 0..x.rows() {
        let map = FeatureMap::new(*c_in, *height, *width, x.row(r).to_vec())?;
        let y = conv2d_forward(kernel, &map)?;
        for (o, v) in out.row_mut(r).iter_mut().zip(&y.data) {
            *o = activation.eval(*v);
        }
    }
    Ok(out)
}

fn layer_forward(spec: &LayerSpec, params: &LayerParams, x: &Matrix) -> Result<(Matrix, LayerCache)> {
    match (spec, params) {
        (LayerSpec::Dense { activation, .. }, LayerParams::Dense { weight }) => {
            let pre = matmul_nt(x, weight)?;
            Ok((activation.apply(&pre), LayerCache::Dense { pre }))
        }
        (LayerSpec::Residual { activation, .. }, LayerParams::Residual { stem, gate }) => {
            let mut hidden = vec![x.clone()];
            let mut pre = Vec::with_capacity(stem.len());
            for (s, w) in stem.iter().enumerate() {
                let z = matmul_nt(&hidden[s], w)?;
                if s + 1 < stem.len() {
                    hidden.push(activation.apply(&z));
                }
                pre.push(z);
            }
            let branch = pre.last().expect("stem depth >= 1");
            let mut out = x.clone();
            out.axpy(gate.as_ref().map_or(1.0, |g| g[(0, 0)]), branch)?;
            Ok((out, LayerCache::Residual { pre, hidden }))
        }
        (LayerSpec::Conv2d { .. }, LayerParams::Conv { .. }) => Ok((conv_rows(spec, params, x)?, LayerCache::Conv)),
        _ => Err(shape_err("forward", "parameters do not match the layer kind")),
    }
}

/// Forward pass that keeps every intermediate value.
pub fn forward(net: &NetworkSpec, params: &ParamSet, x: &Matrix) -> Result<ForwardTrace> {
    check_input(net, x)?;
    let mut activations = vec![x.clone()];
    let mut caches = Vec::with_capacity(net.layers.len());
    for (spec, p) in net.layers.iter().zip(&params.layers) {
        let (out, cache) = layer_forward(spec, p, activations.last().unwrap())?;
        activations.push(out);
        caches.push(cache);
    }
    Ok(ForwardTrace { activations, caches })
}

/// Forward pass that only returns the output.
pub fn predict(net: &NetworkSpec, params: &ParamSet, x: &Matrix) -> Result<Matrix> {
    check_input(net, x)?;
    let mut h = x.clone();
    for (spec, p) in net.layers.iter().zip(&params.layers) {
        h = layer_forward(spec, p, &h)?.0;
    }
    Ok(h)
}

fn mul_derivative(mut d: Matrix, pre: &Matrix, activation: Activation) -> Matrix {
    if activation != Activation::Identity {
        for (g, z) in d.data_mut().iter_mut().zip(pre.data()) {
            *g *= activation.derivative(*z);
        }
    }
    d
}

/// Gradients of the loss with respect to every trainable tensor, in the
/// canonical [`ParamSet`] order, given `d_output = ∂loss/∂output`.
pub fn backward(net: &NetworkSpec, params: &ParamSet, trace: &ForwardTrace, d_output: &Matrix) -> Result<Vec<Matrix>> {
    if net.has_conv() {
        return Err(Error::UnsupportedInTraining("convolution"));
    }
    if d_output.shape() != trace.output().shape() {
        return Err(shape_err("backward", "output gradient does not match the network output"));
    }
    let mut per_layer: Vec<Vec<Matrix>> = Vec::with_capacity(net.layers.len());
    let mut delta = d_output.clone();
    for i in (0..net.layers.len()).rev() {
        let x = &trace.activations[i];
        let need_dx = i > 0;
        match (&net.layers[i], &params.layers[i], &trace.caches[i]) {
            (LayerSpec::Dense { activation, .. }, LayerParams::Dense { weight }, LayerCache::Dense { pre }) => {
                let dz = mul_derivative(delta, pre, *activation);
                per_layer.push(vec![matmul_tn(&dz, x)?]);
                delta = if need_dx { matmul(&dz, weight)? } else { dz };
            }
            (
                LayerSpec::Residual { activation, .. },
                LayerParams::Residual { stem, gate },
                LayerCache::Residual { pre, hidden },
            ) => {
                let depth = stem.len();
                let mut grads = vec![Matrix::zeros(0, 0); depth];
                let mut gate_grad = None;
                let mut dz = match gate {
                    Some(g) => {
                        let branch = &pre[depth - 1];
                        let dg: f64 = delta.data().iter().zip(branch.data()).map(|(a, b)| a * b).sum();
                        gate_grad = Some(Matrix::filled(1, 1, dg));
                        delta.scale(g[(0, 0)])
                    }
                    None => delta.clone(),
                };
                for s in (0..depth).rev() {
                    grads[s] = matmul_tn(&dz, &hidden[s])?;
                    if s > 0 {
                        let dh = matmul(&dz, &stem[s])?;
                        dz = mul_derivative(dh, &pre[s - 1], *activation);
                    } else if need_dx {
                        delta.axpy(1.0, &matmul(&dz, &stem[0])?)?;
                    }
                }
                grads.extend(gate_grad);
                per_layer.push(grads);
            }
            _ => return Err(shape_err("backward", "trace does not match the network")),
        }
    }
    Ok(per_layer.into_iter().rev().flatten().collect())
}

/// Loss and gradients for one batch.
pub fn gradients(net: &NetworkSpec, params: &ParamSet, x: &Matrix, y: &Matrix, loss: Loss) -> Result<(f64, Vec<Matrix>)> {
    let trace = forward(net, params, x)?;
    let (value, d_out) = loss.value_and_grad(trace.output(), y)?;
    Ok((value, backward(net, params, &trace, &d_out)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{init_network, InitPolicy};
    use crate::tensor::{gaussian_matrix, outer, Rng};

    #[test]
    fn dense_identity_is_transparent() {
        let net = NetworkSpec::mlp(&[3, 3], Activation::Identity, Activation::Identity).unwrap();
        let params = ParamSet::new(&net, vec![LayerParams::Dense { weight: Matrix::identity(3) }]).unwrap();
        let x = gaussian_matrix(&mut Rng::new(0), 5, 3, 0.0, 1.0);
        assert_eq!(predict(&net, &params, &x).unwrap(), x);
    }

    #[test]
    fn two_layer_matches_composition() {
        let mut rng = Rng::new(1);
        let net = NetworkSpec::mlp(&[4, 6, 3], Activation::Tanh, Activation::Identity).unwrap();
        let w0 = gaussian_matrix(&mut rng, 6, 4, 0.0, 0.5);
        let w1 = gaussian_matrix(&mut rng, 3, 6, 0.0, 0.5);
        let params = ParamSet::new(
            &net,
            vec![LayerParams::Dense { weight: w0.clone() }, LayerParams::Dense { weight: w1.clone() }],
        )
        .unwrap();
        let x = gaussian_matrix(&mut rng, 7, 4, 0.0, 1.0);
        let h = matmul(&x, &w0.transpose()).unwrap().map(f64::tanh);
        let want = matmul(&h, &w1.transpose()).unwrap();
        assert!(predict(&net, &params, &x).unwrap().max_abs_diff(&want).unwrap() < 1e-12);
    }

    #[test]
    fn zero_stem_residual_is_identity() {
        let net = NetworkSpec::residual_mlp(8, 5, 2, Activation::Relu, None).unwrap();
        let policy = InitPolicy::IdInit { epsilon: 0.0, loose_eps: 0.0 };
        let mut rng = Rng::new(0);
        // epsilon = 0 is rejected by InitSpec but allowed at the network level.
        let params = init_network(&net, policy, &mut rng).unwrap();
        let x = gaussian_matrix(&mut rng, 4, 8, 0.0, 1.0);
        assert_eq!(predict(&net, &params, &x).unwrap(), x);
    }

    #[test]
    fn single_pair_mse_gradient() {
        let net = NetworkSpec::mlp(&[4, 4], Activation::Identity, Activation::Identity).unwrap();
        let params = ParamSet::new(&net, vec![LayerParams::Dense { weight: Matrix::identity(4) }]).unwrap();
        let mut rng = Rng::new(2);
        let x = gaussian_matrix(&mut rng, 1, 4, 0.0, 1.0);
        let y = gaussian_matrix(&mut rng, 1, 4, 0.0, 1.0);
        let (_, g) = gradients(&net, &params, &x, &y, Loss::Mse).unwrap();
        let diff: Vec<f64> = x.row(0).iter().zip(y.row(0)).map(|(a, b)| a - b).collect();
        assert!(g[0].max_abs_diff(&outer(&diff, x.row(0))).unwrap() < 1e-15);

        let (l, g) = gradients(&net, &params, &x, &x, Loss::Mse).unwrap();
        assert_eq!(l, 0.0);
        assert_eq!(g[0], Matrix::zeros(4, 4));
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let out = Matrix::zeros(2, 4);
        let y = Matrix::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]]).unwrap();
        let (l, g) = Loss::SoftmaxCrossEntropy.value_and_grad(&out, &y).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        assert!((g[(0, 0)] - (0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!(g.row_sums().iter().all(|s| s.abs() < 1e-15));
    }

    #[test]
    fn conv_nets_cannot_be_trained() {
        let net = NetworkSpec::new(vec![LayerSpec::Conv2d {
            k: 3,
            c_in: 1,
            c_out: 1,
            height: 2,
            width: 2,
            activation: Activation::Identity,
        }])
        .unwrap();
        let params = init_network(&net, InitPolicy::idinit(), &mut Rng::new(0)).unwrap();
        let x = Matrix::zeros(1, 4);
        assert!(matches!(
            gradients(&net, &params, &x, &x, Loss::Mse),
            Err(Error::UnsupportedInTraining(_))
        ));
    }
}
