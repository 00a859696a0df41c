//! Label-consistent spectrogram perturbations: white noise injected into
//! linear mel energies before the log, plus wrap-around rolls along time and
//! frequency. Time rolls shift frame-level labels with the clip.

use crate::error::{Result, SedError};
use crate::features::log_compress;
use ndarray::{Array2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Largest frequency roll, floor(5% of 128 mel bands).
pub const MAX_FREQ_SHIFT: i64 = 6;
/// The network's total pooling along time; label grids live at this resolution.
pub const TIME_POOL: usize = 4;

/// One sampled perturbation. `time_shift` is in network input frames and is
/// taken modulo the frame count; `freq_shift` is in mel bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationSpec {
    pub noise_sigma: f32,
    pub time_shift: i64,
    pub freq_shift: i64,
    pub rng_seed: u64,
}

impl AugmentationSpec {
    pub fn identity() -> Self {
        AugmentationSpec {
            noise_sigma: 0.0,
            time_shift: 0,
            freq_shift: 0,
            rng_seed: 0,
        }
    }

    /// Same rolls, fresh noise draw. Used by plain mean-teacher consistency so
    /// student and teacher see temporally aligned inputs.
    pub fn with_noise_seed(&self, seed: u64) -> Self {
        AugmentationSpec {
            rng_seed: seed,
            ..*self
        }
    }
}

/// An augmented clip: the perturbed log-mel grid and, when the source carries
/// frame labels, the correspondingly shifted label grid.
#[derive(Debug, Clone)]
pub struct AugmentedClip {
    pub spec: Array2<f32>,
    pub applied: AugmentationSpec,
    pub shifted_strong_labels: Option<Array2<f32>>,
}

/// Add zero-mean Gaussian noise with standard deviation `sigma * mean(grid)`
/// to linear mel energies, clamping at zero. `sigma == 0` is an exact identity.
pub fn add_white_noise(linear_mel: &Array2<f32>, sigma: f32, seed: u64) -> Result<Array2<f32>> {
    if sigma < 0.0 {
        return Err(SedError::InvalidInput(format!(
            "noise sigma must be nonnegative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(linear_mel.clone());
    }
    let mean = linear_mel.iter().map(|&v| f64::from(v)).sum::<f64>() / linear_mel.len() as f64;
    let scale = sigma * mean as f32;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = linear_mel.clone();
    for v in out.iter_mut() {
        let n: f64 = StandardNormal.sample(&mut rng);
        *v = (*v + scale * n as f32).max(0.0);
    }
    Ok(out)
}

fn roll_axis(grid: &Array2<f32>, axis: Axis, shift: i64) -> Array2<f32> {
    let n = grid.len_of(axis) as i64;
    let s = shift.rem_euclid(n);
    if s == 0 {
        return grid.clone();
    }
    let mut out = grid.clone();
    for (i, src) in grid.axis_iter(axis).enumerate() {
        let j = (i as i64 + s).rem_euclid(n) as usize;
        out.index_axis_mut(axis, j).assign(&src);
    }
    out
}

/// Roll frame columns by `shift` with wrap-around.
pub fn temporal_shift(spec: &Array2<f32>, shift: i64) -> Array2<f32> {
    roll_axis(spec, Axis(1), shift)
}

/// Roll mel-band rows by `bins` with wrap-around. |bins| is capped at 5% of
/// the band count.
pub fn freq_shift(spec: &Array2<f32>, bins: i64) -> Result<Array2<f32>> {
    if bins.abs() > MAX_FREQ_SHIFT {
        return Err(SedError::InvalidInput(format!(
            "frequency shift {bins} outside [-{MAX_FREQ_SHIFT}, {MAX_FREQ_SHIFT}]"
        )));
    }
    Ok(roll_axis(spec, Axis(0), bins))
}

/// Roll a frame-level label grid ([frames x classes], frames at 1/TIME_POOL of
/// input resolution) to track a temporal shift of `input_frame_shift`.
pub fn shift_strong_labels(grid: &Array2<f32>, input_frame_shift: i64) -> Array2<f32> {
    let rows = (input_frame_shift as f64 / TIME_POOL as f64).round() as i64;
    roll_axis(grid, Axis(0), rows)
}

/// Sample a perturbation: uniform time roll over all frames, frequency roll in
/// [-6, 6], fresh noise seed.
pub fn sample_spec<R: Rng>(rng: &mut R, n_frames: usize, noise_sigma: f32) -> AugmentationSpec {
    AugmentationSpec {
        noise_sigma,
        time_shift: rng.gen_range(0..n_frames as i64),
        freq_shift: rng.gen_range(-MAX_FREQ_SHIFT..=MAX_FREQ_SHIFT),
        rng_seed: rng.gen(),
    }
}

/// Apply a spec to a clip's linear mel energies (noise, log, rolls), shifting
/// the strong-label grid when present.
pub fn apply(
    linear_mel: &Array2<f32>,
    strong_labels: Option<&Array2<f32>>,
    spec: AugmentationSpec,
) -> Result<AugmentedClip> {
    let noisy = add_white_noise(linear_mel, spec.noise_sigma, spec.rng_seed)?;
    let logm = log_compress(&noisy);
    let rolled = temporal_shift(&freq_shift(&logm, spec.freq_shift)?, spec.time_shift);
    let shifted = strong_labels.map(|g| shift_strong_labels(g, spec.time_shift));
    Ok(AugmentedClip {
        spec: rolled,
        applied: spec,
        shifted_strong_labels: shifted,
    })
}

/// Two independently sampled augmentations of the same source clip.
pub fn make_two_augmentations<R: Rng>(
    linear_mel: &Array2<f32>,
    strong_labels: Option<&Array2<f32>>,
    noise_sigma: f32,
    rng: &mut R,
) -> Result<(AugmentedClip, AugmentedClip)> {
    let n_frames = linear_mel.ncols();
    let a = sample_spec(rng, n_frames, noise_sigma);
    let b = sample_spec(rng, n_frames, noise_sigma);
    Ok((
        apply(linear_mel, strong_labels, a)?,
        apply(linear_mel, strong_labels, b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn grid(rows: usize, cols: usize, seed: u64) -> Array2<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((rows, cols), |_| rng.gen::<f32>())
    }

    #[test]
    fn zero_sigma_is_identity() {
        let g = grid(16, 32, 1);
        let out = add_white_noise(&g, 0.0, 99).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn noise_is_deterministic_under_seed() {
        let g = grid(16, 32, 2);
        let a = add_white_noise(&g, 0.1, 7).unwrap();
        let b = add_white_noise(&g, 0.1, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn negative_sigma_rejected() {
        let g = grid(4, 4, 3);
        assert!(add_white_noise(&g, -0.1, 0).is_err());
    }

    #[test]
    fn noise_std_matches_sigma_on_unit_grid() {
        let g = Array2::<f32>::ones((1000, 1000));
        let out = add_white_noise(&g, 0.1, 42).unwrap();
        let diffs: Vec<f64> = out
            .iter()
            .zip(g.iter())
            .map(|(a, b)| f64::from(a - b))
            .collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var =
            diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (diffs.len() - 1) as f64;
        let std = var.sqrt();
        assert!((std - 0.1).abs() < 0.005, "std {std}");
    }

    #[test]
    fn temporal_shift_identities() {
        let g = grid(8, 1024, 4);
        assert_eq!(temporal_shift(&g, 0), g);
        assert_eq!(temporal_shift(&g, 1024), g);
        let roundtrip = temporal_shift(&temporal_shift(&g, 37), -37);
        assert_eq!(roundtrip, g);
    }

    #[test]
    fn freq_shift_roll_definition() {
        let g = grid(128, 16, 5);
        let out = freq_shift(&g, 2).unwrap();
        for r in 0..128usize {
            let src = (r as i64 - 2).rem_euclid(128) as usize;
            assert_eq!(out.row(r), g.row(src));
        }
        let back = freq_shift(&freq_shift(&g, 3).unwrap(), -3).unwrap();
        assert_eq!(back, g);
        assert_eq!(freq_shift(&g, 0).unwrap(), g);
        assert!(freq_shift(&g, 7).is_err());
    }

    #[test]
    fn label_shift_follows_pooling_factor() {
        let g = grid(256, 10, 6);
        assert_eq!(shift_strong_labels(&g, 0), g);
        assert_eq!(shift_strong_labels(&g, 1024), g);
        let by_four = shift_strong_labels(&g, 4);
        for r in 0..256usize {
            let src = (r as i64 - 1).rem_euclid(256) as usize;
            assert_eq!(by_four.row(r), g.row(src));
        }
    }

    #[test]
    fn two_augmentations_reproducible_and_distinct() {
        let g = grid(128, 256, 7);
        let (a1, b1) = make_two_augmentations(&g, None, 0.05, &mut stream(9, "aug", 0)).unwrap();
        let (a2, b2) = make_two_augmentations(&g, None, 0.05, &mut stream(9, "aug", 0)).unwrap();
        assert_eq!(a1.spec, a2.spec);
        assert_eq!(b1.spec, b2.spec);

        let mut distinct = 0;
        for i in 0..100u64 {
            let (a, b) = make_two_augmentations(&g, None, 0.05, &mut stream(i, "aug", i)).unwrap();
            if (a.applied.time_shift, a.applied.freq_shift)
                != (b.applied.time_shift, b.applied.freq_shift)
            {
                distinct += 1;
            }
        }
        assert!(distinct >= 95, "only {distinct}/100 pairs differed");
    }

    #[test]
    fn identity_config_reproduces_source() {
        let g = grid(128, 64, 8);
        let clean = log_compress(&g);
        let out = apply(&g, None, AugmentationSpec::identity()).unwrap();
        assert_eq!(out.spec, clean);
    }

    proptest! {
        #[test]
        fn rolls_preserve_value_multiset(tshift in -2048i64..2048, fshift in -6i64..=6, seed in 0u64..1000) {
            let g = grid(32, 64, seed);
            let rolled = temporal_shift(&freq_shift(&g, fshift).unwrap(), tshift);
            let mut a: Vec<f32> = g.iter().copied().collect();
            let mut b: Vec<f32> = rolled.iter().copied().collect();
            a.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            prop_assert_eq!(a, b);
        }
    }
}
