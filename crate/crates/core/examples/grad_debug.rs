use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sedlab::model::{backward, forward, forward_training, ArchitectureConfig, ModelParams};
use std::time::Instant;

fn main() {
    let cfg = ArchitectureConfig::reduced();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = ModelParams::<f32>::init(&cfg, &mut rng);
    let input = Array2::from_shape_fn((cfg.n_mels, cfg.n_frames), |_| rng.gen_range(-2.0..2.0f32));
    let n = 30;
    let t0 = Instant::now();
    for _ in 0..n { let _ = forward(&cfg, &params, &input).unwrap(); }
    let fwd = t0.elapsed().as_secs_f64() / n as f64;
    println!("forward: {:.1} ms", fwd * 1e3);
    let t_out = cfg.output_frames();
    let d_strong = Array2::from_shape_fn((t_out, 10), |_| rng.gen_range(-1.0..1.0f32));
    let d_weak = Array1::from_shape_fn(10, |_| rng.gen_range(-1.0..1.0f32));
    let t1 = Instant::now();
    for _ in 0..n {
        let (_, cache) = forward_training(&cfg, &params, &input).unwrap();
        let mut grads = ModelParams::<f32>::zeros(&cfg);
        backward(&cfg, &params, &cache, &d_strong, &d_weak, &mut grads);
    }
    let fb = t1.elapsed().as_secs_f64() / n as f64;
    println!("forward+backward: {:.1} ms", fb * 1e3);
    println!("est CCT step (2 threads): {:.2} s", (24.0 * fb + 24.0 * fwd) / 2.0);
}
