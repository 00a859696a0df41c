//! Trainable parameter containers, initialization, and flat tensor access.

use super::config::ArchitectureConfig;
use super::real::Real;
use ndarray::{Array1, Array2, Array4};
use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2dParams<F> {
    /// [out_channels, in_channels, k, k]
    pub weight: Array4<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<F> {
    /// [out, in]
    pub weight: Array2<F>,
    pub bias: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormParams<F> {
    pub gamma: Array1<F>,
    pub beta: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeParams<F> {
    pub fc1: DenseParams<F>,
    pub fc2: DenseParams<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeGatedLayerParams<F> {
    pub conv_a: Conv2dParams<F>,
    pub conv_b: Conv2dParams<F>,
    pub norm: NormParams<F>,
    pub se: SeParams<F>,
}

/// One GRU direction. Gate rows are stacked [reset; update; candidate].
#[derive(Debug, Clone, PartialEq)]
pub struct GruDirParams<F> {
    /// [3 * units, input_dim]
    pub w_ih: Array2<F>,
    /// [3 * units, units]
    pub w_hh: Array2<F>,
    pub b_ih: Array1<F>,
    pub b_hh: Array1<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiGruParams<F> {
    pub fwd: GruDirParams<F>,
    pub bwd: GruDirParams<F>,
}

/// The full trainable parameter set of the PSE-CRNN. Student and teacher are
/// two instances of this type with identical shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<F> {
    pub pyramid: Vec<Conv2dParams<F>>,
    pub layers: Vec<SeGatedLayerParams<F>>,
    pub gru: Vec<BiGruParams<F>>,
    pub strong_head: DenseParams<F>,
    pub attention_head: DenseParams<F>,
}

fn uniform_fan_in<F: Real, R: Rng>(rng: &mut R, fan_in: usize, n: usize) -> Vec<F> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| F::of(rng.gen_range(-bound..bound))).collect()
}

/// Rows of a Gaussian matrix orthonormalized by modified Gram-Schmidt.
fn orthogonal<F: Real, R: Rng>(rng: &mut R, n: usize) -> Array2<F> {
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let u1: f64 = rng.gen_range(1e-12..1.0);
                    let u2: f64 = rng.gen_range(0.0..1.0);
                    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                })
                .collect()
        })
        .collect();
    for i in 0..n {
        for j in 0..i {
            let dot: f64 = (0..n).map(|k| rows[i][k] * rows[j][k]).sum();
            for k in 0..n {
                rows[i][k] -= dot * rows[j][k];
            }
        }
        let norm: f64 = (0..n).map(|k| rows[i][k] * rows[i][k]).sum::<f64>().sqrt();
        let inv = if norm > 1e-12 { 1.0 / norm } else { 0.0 };
        for k in 0..n {
            rows[i][k] *= inv;
        }
    }
    Array2::from_shape_fn((n, n), |(i, j)| F::of(rows[i][j]))
}

impl<F: Real> Conv2dParams<F> {
    fn init<R: Rng>(rng: &mut R, out_c: usize, in_c: usize, k: usize) -> Self {
        let fan_in = in_c * k * k;
        let w = uniform_fan_in(rng, fan_in, out_c * in_c * k * k);
        Conv2dParams {
            weight: Array4::from_shape_vec((out_c, in_c, k, k), w).unwrap(),
            bias: Array1::zeros(out_c),
        }
    }

    fn zeros(out_c: usize, in_c: usize, k: usize) -> Self {
        Conv2dParams {
            weight: Array4::zeros((out_c, in_c, k, k)),
            bias: Array1::zeros(out_c),
        }
    }
}

impl<F: Real> DenseParams<F> {
    fn init<R: Rng>(rng: &mut R, out: usize, inp: usize) -> Self {
        Self::init_biased(rng, out, inp, 0.0)
    }

    fn init_biased<R: Rng>(rng: &mut R, out: usize, inp: usize, bias: f64) -> Self {
        DenseParams {
            weight: Array2::from_shape_vec((out, inp), uniform_fan_in(rng, inp, out * inp))
                .unwrap(),
            bias: Array1::from_elem(out, F::of(bias)),
        }
    }

    fn zeros(out: usize, inp: usize) -> Self {
        DenseParams {
            weight: Array2::zeros((out, inp)),
            bias: Array1::zeros(out),
        }
    }
}

impl<F: Real> GruDirParams<F> {
    fn init<R: Rng>(rng: &mut R, units: usize, input_dim: usize) -> Self {
        let w_ih = Array2::from_shape_vec(
            (3 * units, input_dim),
            uniform_fan_in(rng, input_dim, 3 * units * input_dim),
        )
        .unwrap();
        let mut w_hh = Array2::zeros((3 * units, units));
        for g in 0..3 {
            let block: Array2<F> = orthogonal(rng, units);
            let scaled = block.mapv(|v| v * F::of(0.8));
            w_hh
                .slice_mut(ndarray::s![g * units..(g + 1) * units, ..])
                .assign(&scaled);
        }
        GruDirParams {
            w_ih,
            w_hh,
            b_ih: Array1::zeros(3 * units),
            b_hh: Array1::zeros(3 * units),
        }
    }

    fn zeros(units: usize, input_dim: usize) -> Self {
        GruDirParams {
            w_ih: Array2::zeros((3 * units, input_dim)),
            w_hh: Array2::zeros((3 * units, units)),
            b_ih: Array1::zeros(3 * units),
            b_hh: Array1::zeros(3 * units),
        }
    }
}

impl<F: Real> ModelParams<F> {
    /// Fan-in scaled uniform init for convolutions and dense layers,
    /// orthogonal recurrent matrices, unit norm gains.
    pub fn init<R: Rng>(cfg: &ArchitectureConfig, rng: &mut R) -> Self {
        Self::build(cfg, true, rng)
    }

    /// All-zero parameter set with the architecture's shapes (gradient
    /// accumulators, optimizer state).
    pub fn zeros(cfg: &ArchitectureConfig) -> Self {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        Self::build(cfg, false, &mut rng)
    }

    fn build<R: Rng>(cfg: &ArchitectureConfig, random: bool, rng: &mut R) -> Self {
        let conv = |out_c: usize, in_c: usize, k: usize, rng: &mut R| {
            if random {
                Conv2dParams::init(rng, out_c, in_c, k)
            } else {
                Conv2dParams::zeros(out_c, in_c, k)
            }
        };
        let dense = |out: usize, inp: usize, rng: &mut R| {
            if random {
                DenseParams::init(rng, out, inp)
            } else {
                DenseParams::zeros(out, inp)
            }
        };
        let gru_dir = |units: usize, inp: usize, rng: &mut R| {
            if random {
                GruDirParams::init(rng, units, inp)
            } else {
                GruDirParams::zeros(units, inp)
            }
        };

        let pyramid = cfg
            .pyramid_kernels
            .iter()
            .map(|&k| conv(cfg.pyramid_branch_filters, 1, k, rng))
            .collect();
        let mut layers = Vec::with_capacity(cfg.se_filters.len());
        let mut in_c = cfg.pyramid_channels();
        for &out_c in &cfg.se_filters {
            let bottleneck = cfg.se_bottleneck(out_c);
            let gamma = if random {
                Array1::from_elem(out_c, F::one())
            } else {
                Array1::zeros(out_c)
            };
            layers.push(SeGatedLayerParams {
                conv_a: conv(out_c, in_c, cfg.se_kernel, rng),
                conv_b: conv(out_c, in_c, cfg.se_kernel, rng),
                norm: NormParams {
                    gamma,
                    beta: Array1::zeros(out_c),
                },
                se: SeParams {
                    // Channel norm makes the squeeze input start at exactly
                    // beta = 0; a small positive bias keeps the excitation
                    // ReLU active from the first step.
                    fc1: if random {
                        DenseParams::init_biased(rng, bottleneck, out_c, 0.1)
                    } else {
                        DenseParams::zeros(bottleneck, out_c)
                    },
                    fc2: dense(out_c, bottleneck, rng),
                },
            });
            in_c = out_c;
        }
        let mut gru = Vec::with_capacity(2);
        let mut gru_in = cfg.gru_input_dim();
        for _ in 0..2 {
            gru.push(BiGruParams {
                fwd: gru_dir(cfg.gru_units, gru_in, rng),
                bwd: gru_dir(cfg.gru_units, gru_in, rng),
            });
            gru_in = 2 * cfg.gru_units;
        }
        ModelParams {
            pyramid,
            layers,
            gru,
            strong_head: dense(cfg.classes, 2 * cfg.gru_units, rng),
            attention_head: dense(cfg.classes, 2 * cfg.gru_units, rng),
        }
    }

    /// Visit every tensor as a named flat slice, in a stable order that also
    /// defines the checkpoint layout.
    pub fn tensors(&self) -> Vec<(String, &[F])> {
        let mut out = Vec::new();
        for (i, c) in self.pyramid.iter().enumerate() {
            out.push((format!("pyramid.{i}.weight"), c.weight.as_slice().unwrap()));
            out.push((format!("pyramid.{i}.bias"), c.bias.as_slice().unwrap()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.conv_a.weight"), l.conv_a.weight.as_slice().unwrap()));
            out.push((format!("layer{i}.conv_a.bias"), l.conv_a.bias.as_slice().unwrap()));
            out.push((format!("layer{i}.conv_b.weight"), l.conv_b.weight.as_slice().unwrap()));
            out.push((format!("layer{i}.conv_b.bias"), l.conv_b.bias.as_slice().unwrap()));
            out.push((format!("layer{i}.norm.gamma"), l.norm.gamma.as_slice().unwrap()));
            out.push((format!("layer{i}.norm.beta"), l.norm.beta.as_slice().unwrap()));
            out.push((format!("layer{i}.se.fc1.weight"), l.se.fc1.weight.as_slice().unwrap()));
            out.push((format!("layer{i}.se.fc1.bias"), l.se.fc1.bias.as_slice().unwrap()));
            out.push((format!("layer{i}.se.fc2.weight"), l.se.fc2.weight.as_slice().unwrap()));
            out.push((format!("layer{i}.se.fc2.bias"), l.se.fc2.bias.as_slice().unwrap()));
        }
        for (i, g) in self.gru.iter().enumerate() {
            for (dir, d) in [("fwd", &g.fwd), ("bwd", &g.bwd)] {
                out.push((format!("gru{i}.{dir}.w_ih"), d.w_ih.as_slice().unwrap()));
                out.push((format!("gru{i}.{dir}.w_hh"), d.w_hh.as_slice().unwrap()));
                out.push((format!("gru{i}.{dir}.b_ih"), d.b_ih.as_slice().unwrap()));
                out.push((format!("gru{i}.{dir}.b_hh"), d.b_hh.as_slice().unwrap()));
            }
        }
        out.push(("strong.weight".into(), self.strong_head.weight.as_slice().unwrap()));
        out.push(("strong.bias".into(), self.strong_head.bias.as_slice().unwrap()));
        out.push(("attn.weight".into(), self.attention_head.weight.as_slice().unwrap()));
        out.push(("attn.bias".into(), self.attention_head.bias.as_slice().unwrap()));
        out
    }

    /// Mutable counterpart of [`tensors`](Self::tensors), same order.
    pub fn tensors_mut(&mut self) -> Vec<(String, &mut [F])> {
        let ModelParams {
            pyramid,
            layers,
            gru,
            strong_head,
            attention_head,
        } = self;
        let mut out: Vec<(String, &mut [F])> = Vec::new();
        for (i, c) in pyramid.iter_mut().enumerate() {
            out.push((format!("pyramid.{i}.weight"), c.weight.as_slice_mut().unwrap()));
            out.push((format!("pyramid.{i}.bias"), c.bias.as_slice_mut().unwrap()));
        }
        for (i, l) in layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.conv_a.weight"), l.conv_a.weight.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.conv_a.bias"), l.conv_a.bias.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.conv_b.weight"), l.conv_b.weight.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.conv_b.bias"), l.conv_b.bias.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.norm.gamma"), l.norm.gamma.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.norm.beta"), l.norm.beta.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.se.fc1.weight"), l.se.fc1.weight.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.se.fc1.bias"), l.se.fc1.bias.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.se.fc2.weight"), l.se.fc2.weight.as_slice_mut().unwrap()));
            out.push((format!("layer{i}.se.fc2.bias"), l.se.fc2.bias.as_slice_mut().unwrap()));
        }
        for (i, g) in gru.iter_mut().enumerate() {
            let BiGruParams { fwd, bwd } = g;
            for (dir, d) in [("fwd", fwd), ("bwd", bwd)] {
                out.push((format!("gru{i}.{dir}.w_ih"), d.w_ih.as_slice_mut().unwrap()));
                out.push((format!("gru{i}.{dir}.w_hh"), d.w_hh.as_slice_mut().unwrap()));
                out.push((format!("gru{i}.{dir}.b_ih"), d.b_ih.as_slice_mut().unwrap()));
                out.push((format!("gru{i}.{dir}.b_hh"), d.b_hh.as_slice_mut().unwrap()));
            }
        }
        out.push(("strong.weight".into(), strong_head.weight.as_slice_mut().unwrap()));
        out.push(("strong.bias".into(), strong_head.bias.as_slice_mut().unwrap()));
        out.push(("attn.weight".into(), attention_head.weight.as_slice_mut().unwrap()));
        out.push(("attn.bias".into(), attention_head.bias.as_slice_mut().unwrap()));
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    /// Convert between precisions (f32 checkpoints to f64 test models etc).
    pub fn cast<G: Real>(&self) -> ModelParams<G> {
        let cast1 = |a: &Array1<F>| a.mapv(|v| G::of(v.as_f64()));
        let cast2 = |a: &Array2<F>| a.mapv(|v| G::of(v.as_f64()));
        let cast4 = |a: &Array4<F>| a.mapv(|v| G::of(v.as_f64()));
        let conv = |c: &Conv2dParams<F>| Conv2dParams {
            weight: cast4(&c.weight),
            bias: cast1(&c.bias),
        };
        let dense = |d: &DenseParams<F>| DenseParams {
            weight: cast2(&d.weight),
            bias: cast1(&d.bias),
        };
        let dir = |d: &GruDirParams<F>| GruDirParams {
            w_ih: cast2(&d.w_ih),
            w_hh: cast2(&d.w_hh),
            b_ih: cast1(&d.b_ih),
            b_hh: cast1(&d.b_hh),
        };
        ModelParams {
            pyramid: self.pyramid.iter().map(conv).collect(),
            layers: self
                .layers
                .iter()
                .map(|l| SeGatedLayerParams {
                    conv_a: conv(&l.conv_a),
                    conv_b: conv(&l.conv_b),
                    norm: NormParams {
                        gamma: cast1(&l.norm.gamma),
                        beta: cast1(&l.norm.beta),
                    },
                    se: SeParams {
                        fc1: dense(&l.se.fc1),
                        fc2: dense(&l.se.fc2),
                    },
                })
                .collect(),
            gru: self
                .gru
                .iter()
                .map(|g| BiGruParams {
                    fwd: dir(&g.fwd),
                    bwd: dir(&g.bwd),
                })
                .collect(),
            strong_head: dense(&self.strong_head),
            attention_head: dense(&self.attention_head),
        }
    }
}

use rand_chacha::rand_core::SeedableRng;
