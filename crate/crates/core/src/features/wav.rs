//! Mono WAV reading and writing at the pipeline's fixed 44.1 kHz rate.

use crate::error::{Result, SedError};
use crate::features::SAMPLE_RATE;
use std::path::Path;

/// Read a mono PCM WAV (16-bit int or 32-bit float) at 44.1 kHz.
///
/// Other sample rates are rejected; there is no resampler in this pipeline.
pub fn read_wav(path: &Path) -> Result<Vec<f32>> {
    let reader = hound::WavReader::open(path).map_err(|e| SedError::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(SedError::Wav {
            path: path.to_path_buf(),
            message: format!("expected mono audio, got {} channels", spec.channels),
        });
    }
    if spec.sample_rate != SAMPLE_RATE {
        return Err(SedError::Wav {
            path: path.to_path_buf(),
            message: format!("expected {} Hz, got {} Hz", SAMPLE_RATE, spec.sample_rate),
        });
    }
    let samples: std::result::Result<Vec<f32>, hound::Error> = match spec.sample_format {
        hound::SampleFormat::Int if spec.bits_per_sample == 16 => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect(),
        hound::SampleFormat::Float if spec.bits_per_sample == 32 => {
            reader.into_samples::<f32>().collect()
        }
        _ => {
            return Err(SedError::Wav {
                path: path.to_path_buf(),
                message: format!(
                    "unsupported format: {:?} {} bits",
                    spec.sample_format, spec.bits_per_sample
                ),
            })
        }
    };
    samples.map_err(|e| SedError::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Write samples as 16-bit PCM mono at 44.1 kHz, clamping to [-1, 1].
pub fn write_wav(path: &Path, samples: &[f32]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: SAMPLE_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| SedError::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| SedError::Wav {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    }
    writer.finalize().map_err(|e| SedError::Wav {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Quantize to 16-bit and back, matching what a WAV round trip does to samples.
pub fn quantize_i16(samples: &mut [f32]) {
    for s in samples.iter_mut() {
        *s = f32::from((s.clamp(-1.0, 1.0) * 32767.0).round() as i16) / 32768.0;
    }
}
