//! Binary checkpoint archive: a JSON header (architecture, step counter,
//! master seed, tensor manifest) followed by raw little-endian f32 tensors.
//! Student, teacher and optimizer moments are stored so a resumed run
//! reproduces the uninterrupted trajectory exactly.

use super::config::ArchitectureConfig;
use super::params::ModelParams;
use crate::error::{Result, SedError};
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"HPSEDCP1";

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ArchitectureConfig,
    pub step: u64,
    pub master_seed: u64,
    pub student: ModelParams<f32>,
    pub teacher: ModelParams<f32>,
    pub opt_m: ModelParams<f32>,
    pub opt_v: ModelParams<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    config: ArchitectureConfig,
    step: u64,
    master_seed: u64,
    /// Name and element count per tensor, in file order.
    tensors: Vec<(String, usize)>,
}

fn manifest(p: &ModelParams<f32>, prefix: &str) -> Vec<(String, usize)> {
    p.tensors()
        .iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t.len()))
        .collect()
}

pub fn save(path: &Path, ck: &Checkpoint) -> Result<()> {
    let mut tensors = Vec::new();
    tensors.extend(manifest(&ck.student, "student"));
    tensors.extend(manifest(&ck.teacher, "teacher"));
    tensors.extend(manifest(&ck.opt_m, "opt_m"));
    tensors.extend(manifest(&ck.opt_v, "opt_v"));
    let header = Header {
        format_version: 1,
        config: ck.config.clone(),
        step: ck.step,
        master_seed: ck.master_seed,
        tensors,
    };
    let json = serde_json::to_vec(&header)
        .map_err(|e| SedError::Config(format!("serialize checkpoint header: {e}")))?;

    let mut f = BufWriter::new(std::fs::File::create(path).map_err(|e| SedError::io(path, e))?);
    f.write_all(MAGIC).map_err(|e| SedError::io(path, e))?;
    f.write_all(&(json.len() as u32).to_le_bytes())
        .map_err(|e| SedError::io(path, e))?;
    f.write_all(&json).map_err(|e| SedError::io(path, e))?;
    for part in [&ck.student, &ck.teacher, &ck.opt_m, &ck.opt_v] {
        for (_, tensor) in part.tensors() {
            for v in tensor {
                f.write_all(&v.to_le_bytes())
                    .map_err(|e| SedError::io(path, e))?;
            }
        }
    }
    f.flush().map_err(|e| SedError::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let mut f = BufReader::new(std::fs::File::open(path).map_err(|e| SedError::io(path, e))?);
    let mut magic = [0u8; 8];
    f.read_exact(&mut magic).map_err(|e| SedError::io(path, e))?;
    if &magic != MAGIC {
        return Err(SedError::Format {
            path: path.to_path_buf(),
            message: "bad checkpoint magic".into(),
        });
    }
    let mut len4 = [0u8; 4];
    f.read_exact(&mut len4).map_err(|e| SedError::io(path, e))?;
    let json_len = u32::from_le_bytes(len4) as usize;
    if json_len > (1 << 24) {
        return Err(SedError::Format {
            path: path.to_path_buf(),
            message: "implausible header length".into(),
        });
    }
    let mut json = vec![0u8; json_len];
    f.read_exact(&mut json).map_err(|e| SedError::io(path, e))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| SedError::Format {
        path: path.to_path_buf(),
        message: format!("bad header: {e}"),
    })?;
    if header.format_version != 1 {
        return Err(SedError::Format {
            path: path.to_path_buf(),
            message: format!("unsupported format version {}", header.format_version),
        });
    }
    header.config.validate()?;

    let mut parts = Vec::with_capacity(4);
    let mut cursor = 0usize;
    for prefix in ["student", "teacher", "opt_m", "opt_v"] {
        let mut params = ModelParams::<f32>::zeros(&header.config);
        for (name, tensor) in params.tensors_mut() {
            let full = format!("{prefix}.{name}");
            let Some((hname, hlen)) = header.tensors.get(cursor) else {
                return Err(SedError::Format {
                    path: path.to_path_buf(),
                    message: format!("manifest too short at {full}"),
                });
            };
            if hname != &full || *hlen != tensor.len() {
                return Err(SedError::Format {
                    path: path.to_path_buf(),
                    message: format!(
                        "manifest mismatch: expected {full} ({}), found {hname} ({hlen})",
                        tensor.len()
                    ),
                });
            }
            cursor += 1;
            let mut b4 = [0u8; 4];
            for v in tensor.iter_mut() {
                f.read_exact(&mut b4).map_err(|e| SedError::io(path, e))?;
                *v = f32::from_le_bytes(b4);
            }
        }
        parts.push(params);
    }
    let opt_v = parts.pop().expect("four parts");
    let opt_m = parts.pop().expect("four parts");
    let teacher = parts.pop().expect("four parts");
    let student = parts.pop().expect("four parts");
    Ok(Checkpoint {
        config: header.config,
        step: header.step,
        master_seed: header.master_seed,
        student,
        teacher,
        opt_m,
        opt_v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn save_load_round_trip_is_bit_exact() {
        let cfg = ArchitectureConfig {
            n_frames: 32,
            pyramid_branch_filters: 2,
            se_filters: vec![2, 2, 4, 4, 4, 4, 4],
            gru_units: 3,
            ..Default::default()
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let student = ModelParams::<f32>::init(&cfg, &mut rng);
        let teacher = ModelParams::<f32>::init(&cfg, &mut rng);
        let opt_m = ModelParams::<f32>::init(&cfg, &mut rng);
        let opt_v = ModelParams::<f32>::init(&cfg, &mut rng);
        let ck = Checkpoint {
            config: cfg,
            step: 1234,
            master_seed: 99,
            student,
            teacher,
            opt_m,
            opt_v,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save(&path, &ck).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(back.step, 1234);
        assert_eq!(back.master_seed, 99);
        assert_eq!(back.config, ck.config);
        assert_eq!(back.student, ck.student);
        assert_eq!(back.teacher, ck.teacher);
        assert_eq!(back.opt_m, ck.opt_m);
        assert_eq!(back.opt_v, ck.opt_v);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"HPSEDCP1\x10\x00\x00\x00only").unwrap();
        assert!(load(&path).is_err());
    }
}
