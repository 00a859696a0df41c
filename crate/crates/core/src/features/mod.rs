//! Log-mel front end: fixed 10 s clips at 44.1 kHz mapped to 128x1024 grids.
//!
//! Analysis uses Hann windows of length 2048 with hop 431, 128 triangular mel
//! filters spanning 0..22050 Hz on the magnitude spectrum, and log(x + 1e-10)
//! compression. Non-centered framing of 441000 samples yields 1019 frames; the
//! grid is right-padded to 1024 frames (zero energy, i.e. log-floor).

pub mod wav;

use crate::error::{Result, SedError};
use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

pub const SAMPLE_RATE: u32 = 44100;
pub const CLIP_SECONDS: f64 = 10.0;
pub const CLIP_SAMPLES: usize = 441_000;
pub const N_FFT: usize = 2048;
pub const HOP: usize = 431;
pub const N_MELS: usize = 128;
pub const N_FRAMES: usize = 1024;
/// Frames actually produced by non-centered framing; the rest is padding.
pub const N_REAL_FRAMES: usize = 1019;
pub const LOG_EPS: f32 = 1e-10;

/// Raw audio clip. Sample rate is always 44100 in this pipeline.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>) -> Self {
        Waveform {
            samples,
            sample_rate: SAMPLE_RATE,
        }
    }
}

/// Log mel-band energies, shape [128 bands x 1024 frames].
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram(Array2<f32>);

impl MelSpectrogram {
    pub fn from_grid(grid: Array2<f32>) -> Result<Self> {
        if grid.dim() != (N_MELS, N_FRAMES) {
            return Err(SedError::Shape(format!(
                "mel spectrogram must be {}x{}, got {}x{}",
                N_MELS,
                N_FRAMES,
                grid.dim().0,
                grid.dim().1
            )));
        }
        if !grid.iter().all(|v| v.is_finite()) {
            return Err(SedError::InvalidInput(
                "mel spectrogram contains non-finite values".into(),
            ));
        }
        Ok(MelSpectrogram(grid))
    }

    pub fn grid(&self) -> &Array2<f32> {
        &self.0
    }

    pub fn into_grid(self) -> Array2<f32> {
        self.0
    }

    /// Seconds per frame column.
    pub fn frame_hop_seconds() -> f64 {
        HOP as f64 / f64::from(SAMPLE_RATE)
    }
}

/// Pad with trailing zeros or truncate so the clip is exactly 10 s.
pub fn normalize_duration(w: &Waveform) -> Result<Waveform> {
    if w.samples.is_empty() {
        return Err(SedError::InvalidInput("empty waveform".into()));
    }
    if w.sample_rate != SAMPLE_RATE {
        return Err(SedError::InvalidInput(format!(
            "expected {} Hz, got {}",
            SAMPLE_RATE, w.sample_rate
        )));
    }
    let mut samples = w.samples.clone();
    samples.resize(CLIP_SAMPLES, 0.0);
    Ok(Waveform::new(samples))
}

/// Reusable STFT + mel filterbank state.
///
/// Pure with respect to its configuration: extraction may run concurrently
/// across clips against one shared extractor.
pub struct FeatureExtractor {
    fft: Arc<dyn Fft<f32>>,
    window: Vec<f32>,
    // Per band: first FFT bin with nonzero weight, plus the weights.
    filters: Vec<(usize, Vec<f32>)>,
    centers_hz: Vec<f32>,
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

impl FeatureExtractor {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(N_FFT);
        // Periodic Hann window.
        let window: Vec<f32> = (0..N_FFT)
            .map(|n| {
                let x = 2.0 * std::f64::consts::PI * n as f64 / N_FFT as f64;
                (0.5 * (1.0 - x.cos())) as f32
            })
            .collect();

        let n_bins = N_FFT / 2 + 1;
        let f_max = f64::from(SAMPLE_RATE) / 2.0;
        let mel_max = hz_to_mel(f_max);
        let mel_points: Vec<f64> = (0..N_MELS + 2)
            .map(|i| mel_max * i as f64 / (N_MELS + 1) as f64)
            .collect();
        let hz_points: Vec<f64> = mel_points.iter().map(|&m| mel_to_hz(m)).collect();
        let bin_hz = f64::from(SAMPLE_RATE) / N_FFT as f64;

        let mut filters = Vec::with_capacity(N_MELS);
        let mut centers_hz = Vec::with_capacity(N_MELS);
        for b in 0..N_MELS {
            let (lo, center, hi) = (hz_points[b], hz_points[b + 1], hz_points[b + 2]);
            centers_hz.push(center as f32);
            let k_lo = (lo / bin_hz).ceil().max(0.0) as usize;
            let k_hi = ((hi / bin_hz).floor() as usize).min(n_bins - 1);
            let mut weights = Vec::new();
            let mut first = k_lo;
            let mut seen = false;
            for k in k_lo..=k_hi {
                let f = k as f64 * bin_hz;
                let w = if f <= center {
                    if center > lo {
                        (f - lo) / (center - lo)
                    } else {
                        0.0
                    }
                } else if hi > center {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                if w > 0.0 {
                    if !seen {
                        first = k;
                        seen = true;
                    }
                    weights.push(w as f32);
                } else if seen {
                    break;
                }
            }
            filters.push((first, weights));
        }
        FeatureExtractor {
            fft,
            window,
            filters,
            centers_hz,
        }
    }

    /// Center frequency of each mel band, in Hz.
    pub fn mel_center_frequencies_hz(&self) -> &[f32] {
        &self.centers_hz
    }

    /// Linear mel-band energies of a normalized 10 s clip, shape [128, 1024].
    ///
    /// Columns past the 1019 real analysis frames are zero.
    pub fn linear_mel(&self, w: &Waveform) -> Result<Array2<f32>> {
        if w.samples.len() != CLIP_SAMPLES {
            return Err(SedError::InvalidInput(format!(
                "expected a normalized clip of {} samples, got {}",
                CLIP_SAMPLES,
                w.samples.len()
            )));
        }
        let mut out = Array2::<f32>::zeros((N_MELS, N_FRAMES));
        let mut buf = vec![Complex::new(0.0f32, 0.0); N_FFT];
        let mut scratch = vec![Complex::new(0.0f32, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mags = vec![0.0f32; N_FFT / 2 + 1];
        for t in 0..N_REAL_FRAMES {
            let start = t * HOP;
            for (i, c) in buf.iter_mut().enumerate() {
                *c = Complex::new(w.samples[start + i] * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, m) in mags.iter_mut().enumerate() {
                *m = buf[k].norm();
            }
            for (b, (first, weights)) in self.filters.iter().enumerate() {
                let mut e = 0.0f32;
                for (j, &wgt) in weights.iter().enumerate() {
                    e += wgt * mags[first + j];
                }
                out[[b, t]] = e;
            }
        }
        Ok(out)
    }

    /// Full front end: linear mel followed by log compression.
    pub fn log_mel(&self, w: &Waveform) -> Result<MelSpectrogram> {
        let linear = self.linear_mel(w)?;
        MelSpectrogram::from_grid(log_compress(&linear))
    }
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new()
    }
}

/// log(x + 1e-10), elementwise.
pub fn log_compress(linear: &Array2<f32>) -> Array2<f32> {
    linear.mapv(|v| (v + LOG_EPS).ln())
}

/// Inverse of `log_compress`, clamped at zero.
pub fn log_expand(log: &Array2<f32>) -> Array2<f32> {
    log.mapv(|v| (v.exp() - LOG_EPS).max(0.0))
}

/// Mean-pool frames by `factor` along the time axis (for the reduced pipeline).
pub fn time_pool_mean(grid: &Array2<f32>, factor: usize) -> Array2<f32> {
    assert!(factor >= 1 && grid.ncols() % factor == 0);
    let (bands, frames) = grid.dim();
    let out_frames = frames / factor;
    let mut out = Array2::<f32>::zeros((bands, out_frames));
    let inv = 1.0 / factor as f32;
    for b in 0..bands {
        for t in 0..out_frames {
            let mut s = 0.0;
            for j in 0..factor {
                s += grid[[b, t * factor + j]];
            }
            out[[b, t]] = s * inv;
        }
    }
    out
}

const CACHE_MAGIC: &[u8; 8] = b"HPSED1\0\0";

/// Write a feature grid to the binary cache format: 8-byte magic, two u32
/// little-endian dims (bands, frames), then row-major f32 little-endian data.
pub fn write_feature_cache(path: &Path, grid: &Array2<f32>) -> Result<()> {
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| SedError::io(path, e))?,
    );
    let (bands, frames) = grid.dim();
    f.write_all(CACHE_MAGIC).map_err(|e| SedError::io(path, e))?;
    f.write_all(&(bands as u32).to_le_bytes())
        .map_err(|e| SedError::io(path, e))?;
    f.write_all(&(frames as u32).to_le_bytes())
        .map_err(|e| SedError::io(path, e))?;
    for v in grid.iter() {
        f.write_all(&v.to_le_bytes())
            .map_err(|e| SedError::io(path, e))?;
    }
    f.flush().map_err(|e| SedError::io(path, e))
}

/// Read a feature grid written by [`write_feature_cache`].
pub fn read_feature_cache(path: &Path) -> Result<Array2<f32>> {
    let mut f = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| SedError::io(path, e))?,
    );
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(|e| SedError::io(path, e))?;
    if &magic != CACHE_MAGIC {
        return Err(SedError::Format {
            path: path.to_path_buf(),
            message: "bad magic".into(),
        });
    }
    let mut dim = [0u8; 4];
    f.read_exact(&mut dim).map_err(|e| SedError::io(path, e))?;
    let bands = u32::from_le_bytes(dim) as usize;
    f.read_exact(&mut dim).map_err(|e| SedError::io(path, e))?;
    let frames = u32::from_le_bytes(dim) as usize;
    if bands == 0 || frames == 0 || bands * frames > (1 << 28) {
        return Err(SedError::Format {
            path: path.to_path_buf(),
            message: format!("implausible dimensions {}x{}", bands, frames),
        });
    }
    let mut data = vec![0.0f32; bands * frames];
    let mut b4 = [0u8; 4];
    for v in data.iter_mut() {
        f.read_exact(&mut b4).map_err(|e| SedError::io(path, e))?;
        *v = f32::from_le_bytes(b4);
    }
    Array2::from_shape_vec((bands, frames), data).map_err(|e| SedError::Shape(e.to_string()))
}
