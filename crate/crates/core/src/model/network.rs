//! The PSE-CRNN: pyramid multi-kernel convolution front, seven
//! squeeze-excitation gated convolutional layers with average pooling, two
//! bidirectional GRU layers, a sigmoid frame head and an attention-pooled
//! clip head.

use super::config::ArchitectureConfig;
use super::gru::{bigru_backward, bigru_forward, BiGruCache};
use super::ops::*;
use super::params::{ModelParams, SeGatedLayerParams};
use super::real::{sigmoid, Real};
use crate::error::{Result, SedError};
use ndarray::{s, Array1, Array2, Array3, Axis};

/// Frame-level and clip-level posterior probabilities for one clip.
#[derive(Debug, Clone)]
pub struct Predictions<F> {
    /// [output_frames, classes]
    pub strong: Array2<F>,
    /// [classes]
    pub weak: Array1<F>,
}

impl<F: Real> Predictions<F> {
    pub fn cast<G: Real>(&self) -> Predictions<G> {
        Predictions {
            strong: self.strong.mapv(|v| G::of(v.as_f64())),
            weak: self.weak.mapv(|v| G::of(v.as_f64())),
        }
    }
}

/// Parallel same-padded convolutions at each pyramid kernel size, outputs
/// concatenated along the channel axis.
pub fn pyramid_conv<F: Real>(
    input: &Array2<F>,
    params: &ModelParams<F>,
    cfg: &ArchitectureConfig,
) -> Result<Array3<F>> {
    if input.dim() != (cfg.n_mels, cfg.n_frames) {
        return Err(SedError::Shape(format!(
            "expected input {}x{}, got {}x{}",
            cfg.n_mels,
            cfg.n_frames,
            input.dim().0,
            input.dim().1
        )));
    }
    let x = input
        .to_owned()
        .into_shape_with_order((1, cfg.n_mels, cfg.n_frames))
        .expect("reshape 2d to 3d");
    let bf = cfg.pyramid_branch_filters;
    let mut out = Array3::from_elem(
        (cfg.pyramid_channels(), cfg.n_mels, cfg.n_frames),
        F::zero(),
    );
    for (i, conv) in params.pyramid.iter().enumerate() {
        let branch = conv2d_same(&x, conv);
        out.slice_mut(s![i * bf..(i + 1) * bf, .., ..]).assign(&branch);
    }
    Ok(out)
}

pub struct LayerCache<F> {
    pub input: Array3<F>,
    pub a: Array3<F>,
    pub sb: Array3<F>,
    pub norm: Option<NormCache<F>>,
    /// Normalized map entering the SE gates.
    pub se_in: Array3<F>,
    pub se: SeCache<F>,
}

/// One squeeze-excitation gated convolutional layer: paired convs, GLU,
/// per-clip channel norm, SE recalibration, average pooling.
pub fn se_gated_conv_layer<F: Real>(
    input: &Array3<F>,
    layer: &SeGatedLayerParams<F>,
    pooling: (usize, usize),
    channel_norm_on: bool,
) -> (Array3<F>, LayerCache<F>) {
    let a = conv2d_same(input, &layer.conv_a);
    let b = conv2d_same(input, &layer.conv_b);
    let (g, sb) = glu(&a, &b);
    let (normed, norm_cache) = if channel_norm_on {
        let (n, c) = channel_norm(&g, &layer.norm);
        (n, Some(c))
    } else {
        (g, None)
    };
    let (se_out, se_cache) = se_block(&normed, &layer.se);
    let (pool_t, pool_f) = pooling;
    let pooled = avg_pool(&se_out, pool_f, pool_t);
    (
        pooled,
        LayerCache {
            input: input.clone(),
            a,
            sb,
            norm: norm_cache,
            se_in: normed,
            se: se_cache,
        },
    )
}

fn layer_backward<F: Real>(
    d_pooled: &Array3<F>,
    layer: &SeGatedLayerParams<F>,
    cache: &LayerCache<F>,
    pooling: (usize, usize),
    want_d_input: bool,
    d_layer: &mut SeGatedLayerParams<F>,
) -> Option<Array3<F>> {
    let (pool_t, pool_f) = pooling;
    let d_se_out = avg_pool_backward(d_pooled, pool_f, pool_t);
    let d_normed = se_block_backward(&cache.se_in, &d_se_out, &cache.se, &layer.se, &mut d_layer.se);
    let d_g = match &cache.norm {
        Some(norm_cache) => {
            channel_norm_backward(&d_normed, norm_cache, &layer.norm, &mut d_layer.norm)
        }
        None => d_normed,
    };
    let (d_a, d_b) = glu_backward(&cache.a, &cache.sb, &d_g);
    let mut d_input = want_d_input.then(|| Array3::from_elem(cache.input.dim(), F::zero()));
    conv2d_same_backward(
        &cache.input,
        &layer.conv_a,
        &d_a,
        d_input.as_mut(),
        &mut d_layer.conv_a,
    );
    conv2d_same_backward(
        &cache.input,
        &layer.conv_b,
        &d_b,
        d_input.as_mut(),
        &mut d_layer.conv_b,
    );
    d_input
}

/// Per-frame affine map of the GRU output to class logits, sigmoid applied.
pub fn strong_head<F: Real>(h: &Array2<F>, params: &ModelParams<F>) -> Array2<F> {
    let logits = h.dot(&params.strong_head.weight.t()) + &params.strong_head.bias;
    logits.mapv(sigmoid)
}

/// Attention-pooled clip probabilities: per-class softmax over time applied
/// to an affine map of the GRU output, then a weighted average of the strong
/// probabilities. Each weak output is a convex combination of its strong
/// column.
pub fn weak_head<F: Real>(
    h: &Array2<F>,
    strong: &Array2<F>,
    params: &ModelParams<F>,
) -> (Array1<F>, Array2<F>) {
    let logits = h.dot(&params.attention_head.weight.t()) + &params.attention_head.bias;
    let attn = softmax_over_time(&logits);
    let weak = (&attn * strong).sum_axis(Axis(0));
    (weak, attn)
}

pub struct ForwardCache<F> {
    pub input: Array2<F>,
    pub layer_caches: Vec<LayerCache<F>>,
    /// Input sequence to the first GRU layer, [T, C].
    pub gru_in: Array2<F>,
    pub gru_caches: Vec<(Array2<F>, BiGruCache<F>)>,
    /// Final recurrent output, [T, 2 * units].
    pub h: Array2<F>,
    pub strong: Array2<F>,
    pub attn: Array2<F>,
    pub weak: Array1<F>,
}

fn check_finite<F: Real>(vals: &Array3<F>, layer: usize, context: &str) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SedError::NonFinite {
            context: context.into(),
            layer,
        })
    }
}

fn run<F: Real>(
    cfg: &ArchitectureConfig,
    params: &ModelParams<F>,
    input: &Array2<F>,
    with_cache: bool,
) -> Result<(Predictions<F>, Option<ForwardCache<F>>)> {
    let mut x = pyramid_conv(input, params, cfg)?;
    check_finite(&x, 0, "pyramid convolution output")?;
    let mut layer_caches = Vec::with_capacity(params.layers.len());
    for (i, (layer, &pooling)) in params.layers.iter().zip(&cfg.poolings).enumerate() {
        let (pooled, cache) = se_gated_conv_layer(&x, layer, pooling, cfg.channel_norm);
        check_finite(&pooled, i + 1, "gated conv layer output")?;
        x = pooled;
        if with_cache {
            layer_caches.push(cache);
        }
    }
    let (c, h_freq, t_len) = x.dim();
    debug_assert_eq!(h_freq, 1);
    debug_assert_eq!(t_len, cfg.output_frames());
    // Squeeze the collapsed frequency axis and go time-major.
    let mut seq = Array2::from_elem((t_len, c), F::zero());
    for ci in 0..c {
        for t in 0..t_len {
            seq[[t, ci]] = x[[ci, 0, t]];
        }
    }
    let gru_in = seq.clone();
    let mut gru_caches = Vec::with_capacity(params.gru.len());
    for (i, g) in params.gru.iter().enumerate() {
        let (out, cache) = bigru_forward(&seq, g);
        if !out.iter().all(|v| v.is_finite()) {
            return Err(SedError::NonFinite {
                context: "recurrent layer output".into(),
                layer: params.layers.len() + 1 + i,
            });
        }
        if with_cache {
            gru_caches.push((seq.clone(), cache));
        }
        seq = out;
    }
    let strong = strong_head(&seq, params);
    let (weak, attn) = weak_head(&seq, &strong, params);
    let preds = Predictions {
        strong: strong.clone(),
        weak: weak.clone(),
    };
    let cache = with_cache.then(|| ForwardCache {
        input: input.clone(),
        layer_caches,
        gru_in,
        gru_caches,
        h: seq,
        strong,
        attn,
        weak,
    });
    Ok((preds, cache))
}

/// Inference forward pass.
pub fn forward<F: Real>(
    cfg: &ArchitectureConfig,
    params: &ModelParams<F>,
    input: &Array2<F>,
) -> Result<Predictions<F>> {
    run(cfg, params, input, false).map(|(p, _)| p)
}

/// Forward pass that retains every intermediate needed by [`backward`].
pub fn forward_training<F: Real>(
    cfg: &ArchitectureConfig,
    params: &ModelParams<F>,
    input: &Array2<F>,
) -> Result<(Predictions<F>, ForwardCache<F>)> {
    run(cfg, params, input, true).map(|(p, c)| (p, c.expect("cache requested")))
}

/// Accumulate parameter gradients for one clip given the loss gradients with
/// respect to the strong probability grid and the weak probability vector.
pub fn backward<F: Real>(
    cfg: &ArchitectureConfig,
    params: &ModelParams<F>,
    cache: &ForwardCache<F>,
    d_strong_probs: &Array2<F>,
    d_weak: &Array1<F>,
    grads: &mut ModelParams<F>,
) {
    let (t_len, classes) = cache.strong.dim();
    // Weak head: weak_c = sum_t attn[t,c] * strong[t,c].
    let mut d_attn = Array2::from_elem((t_len, classes), F::zero());
    let mut d_strong = d_strong_probs.clone();
    for c in 0..classes {
        let dw = d_weak[c];
        if dw != F::zero() {
            for t in 0..t_len {
                d_attn[[t, c]] = dw * cache.strong[[t, c]];
                d_strong[[t, c]] += dw * cache.attn[[t, c]];
            }
        }
    }
    let d_attn_logits = softmax_over_time_backward(&cache.attn, &d_attn);
    // Attention head affine.
    let d_wa = d_attn_logits.t().dot(&cache.h);
    grads.attention_head.weight += &d_wa;
    grads.attention_head.bias += &d_attn_logits.sum_axis(Axis(0));
    let mut d_h = d_attn_logits.dot(&params.attention_head.weight);
    // Strong head: sigmoid then affine.
    let d_strong_logits = ndarray::Zip::from(&d_strong)
        .and(&cache.strong)
        .map_collect(|&d, &p| d * p * (F::one() - p));
    let d_ws = d_strong_logits.t().dot(&cache.h);
    grads.strong_head.weight += &d_ws;
    grads.strong_head.bias += &d_strong_logits.sum_axis(Axis(0));
    d_h += &d_strong_logits.dot(&params.strong_head.weight);

    // Recurrent stack.
    for (i, g) in params.gru.iter().enumerate().rev() {
        let (layer_in, cache_g) = &cache.gru_caches[i];
        d_h = bigru_backward(layer_in, g, cache_g, &d_h, &mut grads.gru[i]);
    }

    // Unsqueeze back to [C, 1, T].
    let c = d_h.ncols();
    let t_len = d_h.nrows();
    let mut d_x = Array3::from_elem((c, 1, t_len), F::zero());
    for ci in 0..c {
        for t in 0..t_len {
            d_x[[ci, 0, t]] = d_h[[t, ci]];
        }
    }

    // Conv stack in reverse; layer 0's input gradient feeds the pyramid.
    let mut d_cur = d_x;
    for i in (0..params.layers.len()).rev() {
        let d_in = layer_backward(
            &d_cur,
            &params.layers[i],
            &cache.layer_caches[i],
            cfg.poolings[i],
            true,
            &mut grads.layers[i],
        );
        d_cur = d_in.expect("input gradient requested");
    }

    // Pyramid branches: split the channel gradient; the raw input needs no grad.
    let bf = cfg.pyramid_branch_filters;
    let x0 = cache
        .input
        .to_owned()
        .into_shape_with_order((1, cfg.n_mels, cfg.n_frames))
        .expect("reshape");
    for (i, conv) in params.pyramid.iter().enumerate() {
        let d_branch = d_cur.slice(s![i * bf..(i + 1) * bf, .., ..]).to_owned();
        conv2d_same_backward(&x0, conv, &d_branch, None, &mut grads.pyramid[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> ArchitectureConfig {
        ArchitectureConfig {
            n_mels: 128,
            n_frames: 32,
            pyramid_branch_filters: 2,
            se_filters: vec![2, 2, 4, 4, 4, 4, 4],
            gru_units: 3,
            ..Default::default()
        }
    }

    fn rand_input(cfg: &ArchitectureConfig, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((cfg.n_mels, cfg.n_frames), |_| rng.gen_range(-2.0..2.0))
    }

    #[test]
    fn pyramid_output_shape_and_zero_case() {
        let cfg = ArchitectureConfig::default();
        let params = ModelParams::<f32>::zeros(&cfg);
        let input = Array2::<f32>::zeros((128, 1024));
        let out = pyramid_conv(&input, &params, &cfg).unwrap();
        assert_eq!(out.dim(), (48, 128, 1024));
        assert!(out.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pyramid_branch_concatenation_semantics() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut params = ModelParams::<f64>::init(&cfg, &mut rng);
        // Zero every branch but the first; channels 0..bf must equal that
        // branch's convolution alone, the rest zero.
        for conv in params.pyramid.iter_mut().skip(1) {
            conv.weight.fill(0.0);
            conv.bias.fill(0.0);
        }
        let input = rand_input(&cfg, 10);
        let out = pyramid_conv(&input, &params, &cfg).unwrap();
        let x3 = input
            .clone()
            .into_shape_with_order((1, cfg.n_mels, cfg.n_frames))
            .unwrap();
        let solo = conv2d_same(&x3, &params.pyramid[0]);
        let bf = cfg.pyramid_branch_filters;
        assert_eq!(out.slice(s![..bf, .., ..]), solo.view());
        assert!(out.slice(s![bf.., .., ..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_stack_shape_trace() {
        let cfg = ArchitectureConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = ModelParams::<f32>::init(&cfg, &mut rng);
        let input = Array2::<f32>::zeros((128, 1024));
        let mut x = pyramid_conv(&input, &params, &cfg).unwrap();
        assert_eq!(x.dim(), (48, 128, 1024));
        let expected = [
            (16, 64, 512),
            (32, 32, 256),
            (64, 16, 256),
            (128, 8, 256),
            (128, 4, 256),
            (128, 2, 256),
            (128, 1, 256),
        ];
        for (i, (layer, &pooling)) in params.layers.iter().zip(&cfg.poolings).enumerate() {
            let (pooled, _) = se_gated_conv_layer(&x, layer, pooling, cfg.channel_norm);
            assert_eq!(pooled.dim(), expected[i], "layer {i}");
            x = pooled;
        }
    }

    #[test]
    fn saturated_gate_closes_layer() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = ModelParams::<f64>::init(&cfg, &mut rng);
        params.layers[0].conv_b.bias.fill(-60.0);
        params.layers[0].conv_b.weight.fill(0.0);
        let input = rand_input(&cfg, 3);
        let x = pyramid_conv(&input, &params, &cfg).unwrap();
        let (_, cache) = se_gated_conv_layer(
            &x,
            &params.layers[0],
            cfg.poolings[0],
            false,
        );
        let gated = ndarray::Zip::from(&cache.a)
            .and(&cache.sb)
            .map_collect(|&a, &s| a * s);
        assert!(gated.iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn strong_head_zero_params_give_half() {
        let cfg = tiny_cfg();
        let params = ModelParams::<f64>::zeros(&cfg);
        let h = Array2::<f64>::zeros((8, 6));
        let out = strong_head(&h, &params);
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn weak_head_is_convex_combination() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = ModelParams::<f64>::init(&cfg, &mut rng);
        let h = Array2::from_shape_fn((8, 6), |_| rng.gen_range(-1.0..1.0));
        let strong = Array2::from_shape_fn((8, 10), |_| rng.gen_range(0.0..1.0));
        let (weak, attn) = weak_head(&h, &strong, &params);
        for c in 0..10 {
            let col = strong.column(c);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(weak[c] >= lo - 1e-12 && weak[c] <= hi + 1e-12);
            let s: f64 = attn.column(c).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // Constant strong column passes through regardless of attention.
        let constant = Array2::from_elem((8, 10), 0.37);
        let (weak_const, _) = weak_head(&h, &constant, &params);
        assert!(weak_const.iter().all(|&v| (v - 0.37).abs() < 1e-12));
        // Zero attention parameters mean uniform weights: plain average.
        let zero = ModelParams::<f64>::zeros(&cfg);
        let (weak_mean, _) = weak_head(&h, &strong, &zero);
        for c in 0..10 {
            let mean: f64 = strong.column(c).sum() / 8.0;
            assert!((weak_mean[c] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_shape_contract_and_determinism() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = ModelParams::<f64>::init(&cfg, &mut rng);
        let input = rand_input(&cfg, 6);
        let a = forward(&cfg, &params, &input).unwrap();
        let b = forward(&cfg, &params, &input).unwrap();
        assert_eq!(a.strong.dim(), (8, 10));
        assert_eq!(a.weak.len(), 10);
        assert_eq!(a.strong, b.strong);
        assert_eq!(a.weak, b.weak);
        assert!(a.strong.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(a.weak.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn forward_rejects_bad_shape() {
        let cfg = tiny_cfg();
        let params = ModelParams::<f64>::zeros(&cfg);
        let input = Array2::<f64>::zeros((64, 32));
        assert!(forward(&cfg, &params, &input).is_err());
    }

    /// End-to-end gradient probe on a tiny model: backward against central
    /// differences through a fixed linear functional of the outputs. Every
    /// tensor is jittered off its init so no activation sits on a kink.
    #[test]
    fn backward_matches_finite_difference_end_to_end() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut params = ModelParams::<f64>::init(&cfg, &mut rng);
        for (_, tensor) in params.tensors_mut() {
            for v in tensor.iter_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
        }
        let params = params;
        let input = rand_input(&cfg, 8);
        let t_out = cfg.output_frames();
        let w_strong = Array2::from_shape_fn((t_out, 10), |_| rng.gen_range(-1.0..1.0));
        let w_weak = Array1::from_shape_fn(10, |_| rng.gen_range(-1.0..1.0));
        let loss = |p: &ModelParams<f64>| -> f64 {
            let preds = forward(&cfg, p, &input).unwrap();
            preds
                .strong
                .iter()
                .zip(w_strong.iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                + preds.weak.iter().zip(w_weak.iter()).map(|(a, b)| a * b).sum::<f64>()
        };
        let (_, cache) = forward_training(&cfg, &params, &input).unwrap();
        let mut grads = ModelParams::<f64>::zeros(&cfg);
        backward(&cfg, &params, &cache, &w_strong, &w_weak, &mut grads);

        let h = 1e-6;
        let mut p = params.clone();
        let names: Vec<String> = p.tensors().iter().map(|(n, _)| n.clone()).collect();
        let mut rng2 = ChaCha8Rng::seed_from_u64(100);
        let mut worst: f64 = 0.0;
        for (ti, name) in names.iter().enumerate() {
            let len = p.tensors()[ti].1.len();
            for _ in 0..2 {
                let ei = rng2.gen_range(0..len);
                let orig = p.tensors()[ti].1[ei];
                p.tensors_mut()[ti].1[ei] = orig + h;
                let up = loss(&p);
                p.tensors_mut()[ti].1[ei] = orig - h;
                let dn = loss(&p);
                p.tensors_mut()[ti].1[ei] = orig;
                let fd = (up - dn) / (2.0 * h);
                let an = grads.tensors()[ti].1[ei];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
                worst = worst.max(err);
                assert!(err < 1e-4, "{name}[{ei}]: fd {fd} vs analytic {an}");
            }
        }
        assert!(worst < 1e-4);
    }
}
