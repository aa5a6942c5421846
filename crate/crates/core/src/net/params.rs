use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::tensor::{io, ConvKernel, Matrix};

use super::{LayerSpec, NetworkSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LayerParams {
    Dense {
        weight: Matrix,
    },
    /// `stem[0]` is applied first; `stem.last()` feeds the skip sum. The gate
    /// is a trainable 1x1 matrix.
    Residual {
        stem: Vec<Matrix>,
        gate: Option<Matrix>,
    },
    Conv {
        kernel: ConvKernel,
    },
}

/// Live weights of a network plus one momentum buffer per trainable tensor.
///
/// Trainable tensors are enumerated in a fixed order: layer by layer, and
/// within a residual block the stem weights first-to-last followed by the
/// gate. Gradients and momentum buffers use the same order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<LayerParams>,
    velocity: Vec<Matrix>,
}

/// One trainable tensor in a snapshot manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub index: usize,
    pub layer: usize,
    pub role: String,
    pub rows: usize,
    pub cols: usize,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub network: NetworkSpec,
    pub params: Vec<ParamEntry>,
}

impl ParamSet {
    /// Checks `layers` against `net` and attaches zeroed momentum buffers.
    pub fn new(net: &NetworkSpec, layers: Vec<LayerParams>) -> Result<Self> {
        if layers.len() != net.layers.len() {
            return Err(shape_err(
                "ParamSet::new",
                format!("{} layer specs but {} parameter groups", net.layers.len(), layers.len()),
            ));
        }
        for (i, (spec, p)) in net.layers.iter().zip(&layers).enumerate() {
            let ok = match (spec, p) {
                (LayerSpec::Dense { d_in, d_out, .. }, LayerParams::Dense { weight }) => {
                    weight.shape() == (*d_out, *d_in)
                }
                (
                    LayerSpec::Residual {
                        width,
                        stem_depth,
                        gate,
                        ..
                    },
                    LayerParams::Residual { stem, gate: g },
                ) => {
                    stem.len() == *stem_depth
                        && stem.iter().all(|w| w.shape() == (*width, *width))
                        && gate.is_some() == g.is_some()
                        && g.as_ref().is_none_or(|g| g.shape() == (1, 1))
                }
                (LayerSpec::Conv2d { k, c_in, c_out, .. }, LayerParams::Conv { kernel }) => {
                    kernel.k_h() == *k
                        && kernel.k_w() == *k
                        && kernel.c_in() == *c_in
                        && kernel.c_out() == *c_out
                }
                _ => false,
            };
            if !ok {
                return Err(shape_err(
                    "ParamSet::new",
                    format!("parameters of layer {i} do not match {spec:?}"),
                ));
            }
        }
        let mut set = Self {
            layers,
            velocity: Vec::new(),
        };
        set.velocity = set
            .tensors()
            .iter()
            .map(|t| Matrix::zeros(t.rows(), t.cols()))
            .collect();
        Ok(set)
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                LayerParams::Dense { weight } => out.push(weight),
                LayerParams::Residual { stem, gate } => {
                    out.extend(stem.iter());
                    out.extend(gate.iter());
                }
                LayerParams::Conv { .. } => {}
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerParams::Dense { weight } => out.push(weight),
                LayerParams::Residual { stem, gate } => {
                    out.extend(stem.iter_mut());
                    out.extend(gate.iter_mut());
                }
                LayerParams::Conv { .. } => {}
            }
        }
        out
    }

    /// `(layer index, role)` for every trainable tensor, in canonical order.
    pub fn roles(&self) -> Vec<(usize, String)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Dense { .. } => out.push((i, "dense".to_string())),
                LayerParams::Residual { stem, gate } => {
                    out.extend((0..stem.len()).map(|s| (i, format!("stem{s}"))));
                    if gate.is_some() {
                        out.push((i, "gate".to_string()));
                    }
                }
                LayerParams::Conv { .. } => {}
            }
        }
        out
    }

    pub fn velocity(&self) -> &[Matrix] {
        &self.velocity
    }

    pub(crate) fn tensors_and_velocity_mut(&mut self) -> (Vec<&mut Matrix>, &mut [Matrix]) {
        let Self { layers, velocity } = self;
        let mut out = Vec::new();
        for layer in layers.iter_mut() {
            match layer {
                LayerParams::Dense { weight } => out.push(weight),
                LayerParams::Residual { stem, gate } => {
                    out.extend(stem.iter_mut());
                    out.extend(gate.iter_mut());
                }
                LayerParams::Conv { .. } => {}
            }
        }
        (out, velocity.as_mut_slice())
    }

    pub fn reset_velocity(&mut self) {
        for v in &mut self.velocity {
            v.data_mut().fill(0.0);
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Writes every trainable tensor as `param-NNN.bin` plus `manifest.json`.
    /// Conv kernels are written through their matrix view with role `kernel`.
    pub fn write_snapshot(&self, net: &NetworkSpec, dir: &Path) -> Result<SnapshotManifest> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::new();
        let mut write = |layer: usize, role: String, m: &Matrix| -> Result<()> {
            let index = entries.len();
            let file = format!("param-{index:03}.bin");
            io::write_binary(m, BufWriter::new(File::create(dir.join(&file))?))?;
            entries.push(ParamEntry {
                index,
                layer,
                role,
                rows: m.rows(),
                cols: m.cols(),
                file,
            });
            Ok(())
        };
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Dense { weight } => write(i, "dense".into(), weight)?,
                LayerParams::Residual { stem, gate } => {
                    for (s, w) in stem.iter().enumerate() {
                        write(i, format!("stem{s}"), w)?;
                    }
                    if let Some(g) = gate {
                        write(i, "gate".into(), g)?;
                    }
                }
                LayerParams::Conv { kernel } => write(i, "kernel".into(), &kernel.to_matrix())?,
            }
        }
        let manifest = SnapshotManifest {
            network: net.clone(),
            params: entries,
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("manifest.json"))?), &manifest)?;
        Ok(manifest)
    }

    /// Inverse of [`ParamSet::write_snapshot`]; momentum buffers start at 0.
    pub fn read_snapshot(dir: &Path) -> Result<(NetworkSpec, ParamSet)> {
        let manifest: SnapshotManifest =
            serde_json::from_reader(BufReader::new(File::open(dir.join("manifest.json"))?))?;
        let mut mats = manifest.params.iter().map(|e| -> Result<(String, Matrix)> {
            let m = io::read_binary(BufReader::new(File::open(dir.join(&e.file))?))?;
            if m.shape() != (e.rows, e.cols) {
                return Err(shape_err("read_snapshot", format!("{} is not {}x{}", e.file, e.rows, e.cols)));
            }
            Ok((e.role.clone(), m))
        });
        let mut next = |want: &str| -> Result<Matrix> {
            let (role, m) = mats
                .next()
                .ok_or_else(|| Error::InvalidArgument("snapshot manifest is missing tensors".into()))??;
            if role != want {
                return Err(Error::InvalidArgument(format!("expected role {want}, found {role}")));
            }
            Ok(m)
        };
        let mut layers = Vec::new();
        for spec in &manifest.network.layers {
            layers.push(match *spec {
                LayerSpec::Dense { .. } => LayerParams::Dense {
                    weight: next("dense")?,
                },
                LayerSpec::Residual {
                    stem_depth, gate, ..
                } => {
                    let stem = (0..stem_depth)
                        .map(|s| next(&format!("stem{s}")))
                        .collect::<Result<Vec<_>>>()?;
                    let gate = match gate {
                        Some(_) => Some(next("gate")?),
                        None => None,
                    };
                    LayerParams::Residual { stem, gate }
                }
                LayerSpec::Conv2d { k, c_in, .. } => LayerParams::Conv {
                    kernel: ConvKernel::from_matrix(next("kernel")?, k, k, c_in)?,
                },
            });
        }
        let params = ParamSet::new(&manifest.network, layers)?;
        Ok((manifest.network, params))
    }
}
