// Minimal repro: norm -> SE -> weighted sum, FD on beta/gamma.
use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sedlab::model::ops::*;
use sedlab::model::params::{DenseParams, NormParams, SeParams};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let input = Array3::from_shape_fn((3, 4, 5), |_| rng.gen_range(-1.0..1.0f64));
    let norm_p = NormParams {
        gamma: Array1::from_shape_fn(3, |_| rng.gen_range(0.5..1.5)),
        beta: Array1::from_shape_fn(3, |_| rng.gen_range(-0.5..0.5)),
    };
    let se_p = SeParams {
        fc1: DenseParams {
            weight: Array2::from_shape_fn((2, 3), |_| rng.gen_range(-1.0..1.0)),
            bias: Array1::from_shape_fn(2, |_| rng.gen_range(-0.2..0.2)),
        },
        fc2: DenseParams {
            weight: Array2::from_shape_fn((3, 2), |_| rng.gen_range(-1.0..1.0)),
            bias: Array1::from_shape_fn(3, |_| rng.gen_range(-0.2..0.2)),
        },
    };
    let dy = Array3::from_shape_fn((3, 4, 5), |_| rng.gen_range(-1.0..1.0f64));

    let loss = |np: &NormParams<f64>, sp: &SeParams<f64>| -> f64 {
        let (n, _) = channel_norm(&input, np);
        let (o, _) = se_block(&n, sp);
        o.iter().zip(dy.iter()).map(|(a, b)| a * b).sum()
    };

    let (n, ncache) = channel_norm(&input, &norm_p);
    let (_, scache) = se_block(&n, &se_p);
    let mut d_se = SeParams {
        fc1: DenseParams { weight: Array2::zeros((2, 3)), bias: Array1::zeros(2) },
        fc2: DenseParams { weight: Array2::zeros((3, 2)), bias: Array1::zeros(3) },
    };
    let d_n = se_block_backward(&n, &dy, &scache, &se_p, &mut d_se);
    let mut d_norm = NormParams { gamma: Array1::zeros(3), beta: Array1::zeros(3) };
    let _d_in = channel_norm_backward(&d_n, &ncache, &norm_p, &mut d_norm);

    let h = 1e-6;
    for i in 0..3 {
        let mut np = norm_p.clone();
        np.beta[i] += h;
        let up = loss(&np, &se_p);
        np.beta[i] -= 2.0 * h;
        let dn = loss(&np, &se_p);
        let fd = (up - dn) / (2.0 * h);
        println!("beta[{i}]: fd {fd:.10} analytic {:.10} diff {:.2e}", d_norm.beta[i], (fd - d_norm.beta[i]).abs());
    }
    for i in 0..3 {
        let mut np = norm_p.clone();
        np.gamma[i] += h;
        let up = loss(&np, &se_p);
        np.gamma[i] -= 2.0 * h;
        let dn = loss(&np, &se_p);
        let fd = (up - dn) / (2.0 * h);
        println!("gamma[{i}]: fd {fd:.10} analytic {:.10} diff {:.2e}", d_norm.gamma[i], (fd - d_norm.gamma[i]).abs());
    }
    // SE fc params too
    let mut sp = se_p.clone();
    let orig = sp.fc1.weight[[0,1]];
    sp.fc1.weight[[0,1]] = orig + h;
    let up = loss(&norm_p, &sp);
    sp.fc1.weight[[0,1]] = orig - h;
    let dn = loss(&norm_p, &sp);
    let fd = (up - dn) / (2.0 * h);
    println!("fc1.w[0,1]: fd {fd:.10} analytic {:.10}", d_se.fc1.weight[[0,1]]);
}
