//! Checkpoint file format, all integers little-endian:
//! magic "SMCK", version u16, meta length u64, meta JSON (config, class
//! stats, epoch, parameter shape table, log), parameter tensors as f64
//! blobs in table order, momentum buffers likewise, RNG state (32-byte
//! seed, stream u64, word position u128). f64 bits are preserved
//! exactly, so save/load/continue is bit-identical to an uninterrupted
//! run.

use super::{Checkpoint, TrainConfig, TrainLog};
use crate::dataset::io::{parse_err, Cursor};
use crate::dataset::ClassStats;
use crate::error::Result;
use crate::model::{ModelLayout, ModelParams};
use crate::rng::RngState;
use crate::sgd::SgdState;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SMCK";
const VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    config: TrainConfig,
    stats: ClassStats,
    epoch: usize,
    shapes: Vec<(String, Vec<usize>)>,
    log: TrainLog,
}

fn write_tensor(w: &mut impl Write, t: &Tensor) -> Result<()> {
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_checkpoint(ck: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let meta = Meta {
        config: ck.config.clone(),
        stats: ck.stats.clone(),
        epoch: ck.epoch,
        shapes: ck.params.layout.tensor_shapes(),
        log: ck.log.clone(),
    };
    let meta_json = serde_json::to_vec(&meta)?;
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta_json.len() as u64).to_le_bytes())?;
    w.write_all(&meta_json)?;
    for t in &ck.params.tensors {
        write_tensor(&mut w, t)?;
    }
    for t in ck.optimizer.velocities() {
        write_tensor(&mut w, t)?;
    }
    w.write_all(&ck.rng.seed)?;
    w.write_all(&ck.rng.stream.to_le_bytes())?;
    w.write_all(&ck.rng.word_pos.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let mut cur = Cursor::new(path, buf);

    if cur.take(4, "magic")? != MAGIC {
        return Err(parse_err(path, "byte 0", "bad magic, not a checkpoint file"));
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(parse_err(path, "byte 4", format!("unsupported version {version}")));
    }
    let meta_len = cur.u64("meta length")? as usize;
    let meta: Meta = serde_json::from_slice(cur.take(meta_len, "meta JSON")?)
        .map_err(|e| parse_err(path, "meta JSON", e.to_string()))?;
    meta.config.validate()?;

    // The shape table must agree with what the config and stats imply;
    // a mismatch means the file was written by other settings.
    let layout = ModelLayout {
        input_dim: meta
            .shapes
            .first()
            .and_then(|(_, s)| s.first().copied())
            .ok_or_else(|| parse_err(path, "meta JSON", "empty shape table"))?,
        encoder_widths: meta.config.encoder_widths.clone(),
        head_dim: meta.config.head_dim,
        num_classes: meta.stats.num_classes(),
    };
    if layout.tensor_shapes() != meta.shapes {
        return Err(parse_err(
            path,
            "meta JSON",
            "shape table disagrees with the config's architecture",
        ));
    }

    let read_set = |what: &str, cur: &mut Cursor| -> Result<Vec<Tensor>> {
        meta.shapes
            .iter()
            .map(|(name, shape)| {
                let numel: usize = shape.iter().product();
                let raw = cur.take(8 * numel, &format!("{what} {name}"))?;
                let data = raw
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                    .collect();
                Ok(Tensor::new(shape.clone(), data))
            })
            .collect()
    };
    let tensors = read_set("tensor", &mut cur)?;
    let velocities = read_set("velocity", &mut cur)?;

    let seed: [u8; 32] = cur.take(32, "rng seed")?.try_into().unwrap();
    let rng = RngState {
        seed,
        stream: cur.u64("rng stream")?,
        word_pos: cur.u128("rng word position")?,
    };
    cur.expect_eof()?;

    Ok(Checkpoint {
        config: meta.config,
        params: ModelParams { layout, tensors },
        optimizer: SgdState::from_velocities(velocities),
        stats: meta.stats,
        epoch: meta.epoch,
        rng,
        log: meta.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_longtail, ImageDims};
    use crate::error::Error;
    use crate::trainer::{resume, train, train_until};

    fn fixture() -> (crate::dataset::Dataset, TrainConfig) {
        let dataset = synth_longtail(3, 4.0, 10, ImageDims { c: 1, h: 8, w: 8 }, 31)
            .unwrap()
            .dataset;
        let config = TrainConfig {
            epochs: 3,
            batch_size: 6,
            lr: 0.05,
            lr_decay_epochs: vec![2],
            encoder_widths: vec![24, 12],
            head_dim: 8,
            split_t_many: 8,
            split_t_few: 4,
            pad: 1,
            ..TrainConfig::default()
        };
        (dataset, config)
    }

    #[test]
    fn save_load_resume_is_bit_identical_to_uninterrupted() {
        let (dataset, config) = fixture();
        let full = train(&config, &dataset).unwrap();
        let half = train_until(&config, &dataset, 1).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("half.smck");
        save_checkpoint(&half, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.epoch, 1);
        assert_eq!(loaded.config, config);
        assert_eq!(loaded.rng, half.rng);

        let resumed = resume(loaded, &dataset).unwrap();
        assert_eq!(resumed.log, full.log);
        for (a, b) in resumed.params.tensors.iter().zip(&full.params.tensors) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn resave_is_byte_stable() {
        let (dataset, config) = fixture();
        let ck = train_until(&config, &dataset, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.smck");
        let b = dir.path().join("b.smck");
        save_checkpoint(&ck, &a).unwrap();
        save_checkpoint(&load_checkpoint(&a).unwrap(), &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn truncation_and_bad_magic_are_parse_errors() {
        let (dataset, config) = fixture();
        let ck = train_until(&config, &dataset, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.smck");
        save_checkpoint(&ck, &path).unwrap();

        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Parse { detail, .. }) => assert!(detail.contains("truncated")),
            other => panic!("expected parse error, got {other:?}"),
        }

        let mut bad = bytes.clone();
        bad[0] = b'X';
        std::fs::write(&path, &bad).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Parse { detail, .. }) => assert!(detail.contains("magic")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn tampered_architecture_is_rejected() {
        let (dataset, config) = fixture();
        let ck = train_until(&config, &dataset, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.smck");
        let mut mangled = ck.clone();
        mangled.config.encoder_widths = vec![24, 13];
        save_checkpoint(&mangled, &path).unwrap();
        match load_checkpoint(&path) {
            Err(Error::Parse { detail, .. }) => assert!(detail.contains("shape table")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
