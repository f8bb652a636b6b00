//! Single-file checkpoints.
//!
//! Layout: an ASCII magic line, an 8-byte little-endian header length, a
//! JSON header (fingerprint, phase, epoch, normalization stats, config
//! snapshot, tensor directory, payload digest), then every tensor as raw
//! little-endian f64 in directory order. The header is plain text so two
//! checkpoints can be diffed without special tooling; the digest catches
//! truncation and bit rot. Writes go to a temporary file in the target
//! directory and are renamed into place, so readers never see a partial
//! checkpoint.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::imaging::NormStats;
use crate::nn::ParamVisit;

const MAGIC: &[u8] = b"NSALCKPT v1\n";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    #[serde(skip)]
    pub values: ArrayD<f64>,
}

/// Everything needed to resume or evaluate a model: weights, the
/// architecture fingerprint they belong to, the input normalization
/// fitted at training time, and the config that produced them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub fingerprint: String,
    pub phase: String,
    pub epoch: usize,
    pub norm: Option<NormStats>,
    pub config_toml: String,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: u32,
    fingerprint: String,
    phase: String,
    epoch: usize,
    norm: Option<NormStats>,
    config_toml: String,
    tensors: Vec<TensorEntry>,
    payload_len: usize,
    payload_sha256: String,
}

/// Snapshots every parameter and state tensor of a model, in visit order.
pub fn collect_tensors<M: ParamVisit + ?Sized>(model: &mut M) -> Vec<NamedTensor> {
    let mut out = Vec::new();
    model.visit_params(&mut |p| {
        out.push(NamedTensor {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            values: p.value.clone(),
        });
    });
    model.visit_state(&mut |name, value| {
        out.push(NamedTensor {
            name: name.to_string(),
            shape: value.shape().to_vec(),
            values: value.clone(),
        });
    });
    out
}

impl Checkpoint {
    pub fn from_model<M: ParamVisit + ?Sized>(
        model: &mut M,
        fingerprint: String,
        phase: &str,
        epoch: usize,
        norm: Option<NormStats>,
        config_toml: String,
    ) -> Checkpoint {
        Checkpoint {
            fingerprint,
            phase: phase.to_string(),
            epoch,
            norm,
            config_toml,
            tensors: collect_tensors(model),
        }
    }

    /// Writes every stored tensor back into the model. The caller passes
    /// the model's own fingerprint; a mismatch refuses the restore and
    /// quotes both prints so the wrong-architecture case is unambiguous.
    pub fn restore_into<M: ParamVisit + ?Sized>(
        &self,
        model_fingerprint: &str,
        model: &mut M,
    ) -> Result<()> {
        if self.fingerprint != model_fingerprint {
            return Err(Error::checkpoint(format!(
                "architecture mismatch: checkpoint was saved from {} but the model is {}",
                self.fingerprint, model_fingerprint
            )));
        }
        // Equal fingerprints pin names, shapes, and visit order, so a
        // positional walk is safe; the asserts below are belt and braces.
        let mut idx = 0usize;
        let mut apply = |name: &str, value: &mut ArrayD<f64>| -> Result<()> {
            let t = self.tensors.get(idx).ok_or_else(|| {
                Error::checkpoint(format!("checkpoint ran out of tensors at {name}"))
            })?;
            if t.name != name || t.shape != value.shape() {
                return Err(Error::checkpoint(format!(
                    "tensor mismatch: checkpoint has {} {:?}, model expects {} {:?}",
                    t.name,
                    t.shape,
                    name,
                    value.shape()
                )));
            }
            *value = t.values.clone();
            idx += 1;
            Ok(())
        };
        let mut failure: Option<Error> = None;
        model.visit_params(&mut |p| {
            if failure.is_none() {
                if let Err(e) = apply(&p.name, &mut p.value) {
                    failure = Some(e);
                }
            }
        });
        model.visit_state(&mut |name, value| {
            if failure.is_none() {
                if let Err(e) = apply(name, value) {
                    failure = Some(e);
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        if idx != self.tensors.len() {
            return Err(Error::checkpoint(format!(
                "checkpoint holds {} tensors, model consumed {}",
                self.tensors.len(),
                idx
            )));
        }
        Ok(())
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let mut payload = Vec::new();
    for t in &ckpt.tensors {
        if t.values.len() != t.shape.iter().product::<usize>() {
            return Err(Error::checkpoint(format!(
                "tensor {} has {} values for shape {:?}",
                t.name,
                t.values.len(),
                t.shape
            )));
        }
        for &v in t.values.iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        schema: 1,
        fingerprint: ckpt.fingerprint.clone(),
        phase: ckpt.phase.clone(),
        epoch: ckpt.epoch,
        norm: ckpt.norm,
        config_toml: ckpt.config_toml.clone(),
        tensors: ckpt
            .tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
        payload_len: payload.len(),
        payload_sha256: hex(&Sha256::digest(&payload)),
    };
    let header_json = serde_json::to_vec(&header)?;

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(MAGIC)?;
        f.write_all(&(header_json.len() as u64).to_le_bytes())?;
        f.write_all(&header_json)?;
        f.write_all(&payload)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let integrity = |msg: &str| Error::checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(integrity("not a checkpoint file"));
    }
    let mut off = MAGIC.len();
    let header_len = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize;
    off += 8;
    if bytes.len() < off + header_len {
        return Err(integrity("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[off..off + header_len])
        .map_err(|e| integrity(&format!("bad header: {e}")))?;
    off += header_len;
    if header.schema != 1 {
        return Err(integrity(&format!("unsupported schema {}", header.schema)));
    }
    let payload = &bytes[off..];
    if payload.len() != header.payload_len {
        return Err(integrity(&format!(
            "truncated payload: expected {} bytes, found {}",
            header.payload_len,
            payload.len()
        )));
    }
    if hex(&Sha256::digest(payload)) != header.payload_sha256 {
        return Err(integrity("payload digest mismatch"));
    }

    let mut tensors = Vec::with_capacity(header.tensors.len());
    let mut cursor = 0usize;
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let end = cursor + n * 8;
        if end > payload.len() {
            return Err(integrity(&format!("tensor {} overruns payload", entry.name)));
        }
        let values: Vec<f64> = payload[cursor..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor {
            name: entry.name.clone(),
            shape: entry.shape.clone(),
            values: ArrayD::from_shape_vec(entry.shape.clone(), values)
                .map_err(|e| integrity(&e.to_string()))?,
        });
        cursor = end;
    }
    if cursor != payload.len() {
        return Err(integrity("payload longer than tensor directory"));
    }
    Ok(Checkpoint {
        fingerprint: header.fingerprint,
        phase: header.phase,
        epoch: header.epoch,
        norm: header.norm,
        config_toml: header.config_toml,
        tensors,
    })
}

fn hex(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;
    use crate::models::{eeg_vae, saliency_vae};
    use tempfile::tempdir;

    fn tiny_ckpt() -> (crate::models::Vae, Checkpoint) {
        let cfg = ModelConfig::tiny(5);
        let mut rng = crate::rng::seeded(3);
        let mut vae = saliency_vae(&cfg, &mut rng);
        let fp = vae.fingerprint();
        let ckpt = Checkpoint::from_model(
            &mut vae,
            fp,
            "vae_saliency",
            17,
            Some(NormStats { mean: 1.5, std: 2.25 }),
            "epochs = 17\n".into(),
        );
        (vae, ckpt)
    }

    #[test]
    fn save_load_save_is_bit_identical() {
        let (_, ckpt) = tiny_ckpt();
        let dir = tempdir().unwrap();
        let p1 = dir.path().join("a.ckpt");
        let p2 = dir.path().join("b.ckpt");
        save_checkpoint(&ckpt, &p1).unwrap();
        let loaded = load_checkpoint(&p1).unwrap();
        save_checkpoint(&loaded, &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
        assert_eq!(loaded.epoch, 17);
        assert_eq!(loaded.phase, "vae_saliency");
        assert_eq!(loaded.norm, Some(NormStats { mean: 1.5, std: 2.25 }));
        assert_eq!(loaded.config_toml, "epochs = 17\n");
    }

    #[test]
    fn restore_recovers_exact_weights_and_running_state() {
        let (mut vae, ckpt) = tiny_ckpt();
        let before = collect_tensors(&mut vae);
        // Scramble everything, then restore.
        vae.visit_params(&mut |p| p.value.mapv_inplace(|v| 2.0 * v + 0.1));
        vae.visit_state(&mut |_, s| s.mapv_inplace(|v| v + 3.0));
        let fp = vae.fingerprint();
        ckpt.restore_into(&fp, &mut vae).unwrap();
        let after = collect_tensors(&mut vae);
        assert_eq!(before.len(), after.len());
        for (a, b) in before.iter().zip(&after) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.values, b.values);
        }
    }

    #[test]
    fn wrong_architecture_is_refused_with_both_fingerprints() {
        let (_, ckpt) = tiny_ckpt();
        let cfg = ModelConfig::tiny(5);
        let mut rng = crate::rng::seeded(4);
        let mut other = eeg_vae(&cfg, &mut rng);
        let fp = other.fingerprint();
        let err = ckpt.restore_into(&fp, &mut other).unwrap_err().to_string();
        assert!(err.contains(&ckpt.fingerprint), "missing source print: {err}");
        assert!(err.contains(&fp), "missing target print: {err}");
    }

    #[test]
    fn truncated_and_corrupted_files_fail_integrity() {
        let (_, ckpt) = tiny_ckpt();
        let dir = tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();
        let bytes = fs::read(&path).unwrap();

        fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");

        let mut flipped = bytes.clone();
        let last = flipped.len() - 1;
        flipped[last] ^= 0x40;
        fs::write(&path, &flipped).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("digest"), "{err}");

        fs::write(&path, b"junk").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn no_temporary_file_survives_a_save() {
        let (_, ckpt) = tiny_ckpt();
        let dir = tempdir().unwrap();
        save_checkpoint(&ckpt, &dir.path().join("d.ckpt")).unwrap();
        let names: Vec<String> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        assert_eq!(names, vec!["d.ckpt".to_string()]);
    }

    #[test]
    fn reloaded_generator_reproduces_its_outputs_exactly() {
        use crate::models::Generator;
        let cfg = ModelConfig::tiny(5);
        let mut rng = crate::rng::seeded(8);
        let sal = saliency_vae(&cfg, &mut rng);
        let eeg = eeg_vae(&cfg, &mut rng);
        let mut gen = Generator::assemble(eeg, sal, &cfg, &mut rng);

        let img = crate::EEGImage {
            frames: ndarray::Array3::from_shape_fn((5, 32, 32), |(f, r, c)| {
                ((f + 2 * r + 3 * c) % 7) as f64 * 0.1 - 0.3
            }),
            zero_mask: ndarray::Array2::from_elem((32, 32), false),
            trial_id: 0,
        };
        let mut s = crate::rng::seeded(99);
        let before = gen.generate(&img, &mut s);

        let fp = gen.fingerprint();
        let ckpt = Checkpoint::from_model(&mut gen, fp.clone(), "gan", 3, None, String::new());
        let dir = tempdir().unwrap();
        let path = dir.path().join("g.ckpt");
        save_checkpoint(&ckpt, &path).unwrap();

        gen.visit_params(&mut |p| p.value.mapv_inplace(|v| v - 0.05));
        let reloaded = load_checkpoint(&path).unwrap();
        reloaded.restore_into(&fp, &mut gen).unwrap();
        let mut s = crate::rng::seeded(99);
        let after = gen.generate(&img, &mut s);
        assert_eq!(before, after);
    }
}
