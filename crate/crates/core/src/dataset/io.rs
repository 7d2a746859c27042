//! Dataset and semantic-vector file formats.
//!
//! Dataset binary layout, all integers little-endian:
//! magic "SMCD", version u16, class count C u32, per-class counts C×u32,
//! dims (c,h,w) u16 each, pixel payload (sample-major f32), labels (u32
//! per sample). Round-trips are bit-exact because pixels are stored at
//! their in-memory f32 precision.
//!
//! Semantic vectors are UTF-8 text: one `class_id v1 v2 ... vd` line per
//! class, floats in Rust's shortest round-trip notation.

use super::{Dataset, ImageDims, ImageSample, SemanticVectors};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SMCD";
const VERSION: u16 = 1;

pub(crate) fn parse_err(
    path: &Path,
    location: impl Into<String>,
    detail: impl Into<String>,
) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        location: location.into(),
        detail: detail.into(),
    }
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dims = dataset.dims();
    assert!(
        dims.c <= u16::MAX as usize && dims.h <= u16::MAX as usize && dims.w <= u16::MAX as usize,
        "image dims exceed the format's u16 fields"
    );
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(dataset.num_classes() as u32).to_le_bytes())?;
    for &n in dataset.counts() {
        w.write_all(&n.to_le_bytes())?;
    }
    for d in [dims.c, dims.h, dims.w] {
        w.write_all(&(d as u16).to_le_bytes())?;
    }
    for s in dataset.samples() {
        for &p in &s.pixels {
            w.write_all(&p.to_le_bytes())?;
        }
    }
    for s in dataset.samples() {
        w.write_all(&(s.class_id as u32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) struct Cursor<'a> {
    path: &'a Path,
    buf: Vec<u8>,
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(path: &'a Path, buf: Vec<u8>) -> Self {
        Cursor { path, buf, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn expect_eof(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(parse_err(
                self.path,
                format!("byte {}", self.pos),
                format!("{} trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.pos + n > self.buf.len() {
            return Err(parse_err(
                self.path,
                format!("byte {}", self.pos),
                format!("file truncated reading {what}"),
            ));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    pub(crate) fn u128(&mut self, what: &str) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16, what)?.try_into().unwrap()))
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let mut cur = Cursor::new(path, buf);

    if cur.take(4, "magic")? != MAGIC {
        return Err(parse_err(path, "byte 0", "bad magic, not a dataset file"));
    }
    let version = cur.u16("version")?;
    if version != VERSION {
        return Err(parse_err(
            path,
            "byte 4",
            format!("unsupported version {version}"),
        ));
    }
    let num_classes = cur.u32("class count")? as usize;
    if num_classes == 0 {
        return Err(parse_err(path, "byte 6", "zero classes"));
    }
    let mut counts = Vec::with_capacity(num_classes);
    for k in 0..num_classes {
        counts.push(cur.u32(&format!("count of class {k}"))?);
    }
    let dims = ImageDims {
        c: cur.u16("channel dim")? as usize,
        h: cur.u16("height dim")? as usize,
        w: cur.u16("width dim")? as usize,
    };
    if dims.numel() == 0 {
        return Err(parse_err(path, "dims header", "zero-sized images"));
    }

    let total: usize = counts.iter().map(|&n| n as usize).sum();
    let d = dims.numel();
    let mut samples = Vec::with_capacity(total);
    for i in 0..total {
        let raw = cur.take(4 * d, &format!("pixels of sample {i}"))?;
        let pixels: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if let Some(j) = pixels.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(parse_err(
                path,
                format!("sample {i} pixel {j}"),
                format!("pixel value {} outside [0,1]", pixels[j]),
            ));
        }
        samples.push(ImageSample {
            pixels,
            class_id: 0,
            instance_id: i as u64,
        });
    }
    for (i, s) in samples.iter_mut().enumerate() {
        let label = cur.u32(&format!("label of sample {i}"))? as usize;
        if label >= num_classes {
            return Err(parse_err(
                path,
                format!("label of sample {i}"),
                format!("class {label} outside [0,{num_classes})"),
            ));
        }
        s.class_id = label;
    }
    cur.expect_eof()?;

    let dataset = Dataset::new(dims, num_classes, samples)?;
    if dataset.counts() != counts {
        return Err(parse_err(
            path,
            "labels section",
            format!(
                "label tallies {:?} disagree with header counts {:?}",
                dataset.counts(),
                counts
            ),
        ));
    }
    Ok(dataset)
}

pub fn save_semantic_vectors(vectors: &SemanticVectors, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path.as_ref())?);
    for k in 0..vectors.num_classes() {
        write!(w, "{k}")?;
        for v in vectors.vector(k) {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Loads semantic vectors. Rows may appear in any order; the class count
/// is inferred from the largest id, and every class below it must be
/// present exactly once.
pub fn load_semantic_vectors(path: impl AsRef<Path>) -> Result<SemanticVectors> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<(usize, Vec<f64>)> = Vec::new();
    for (ln, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = ln + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id: usize = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|e| parse_err(path, format!("line {lineno}"), format!("class id: {e}")))?;
        let mut values = Vec::new();
        for (fi, field) in fields.enumerate() {
            let v: f64 = field.parse().map_err(|e| {
                parse_err(
                    path,
                    format!("line {lineno} field {}", fi + 2),
                    format!("float: {e}"),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_err(
                    path,
                    format!("line {lineno} field {}", fi + 2),
                    "non-finite component",
                ));
            }
            values.push(v);
        }
        if values.is_empty() {
            return Err(parse_err(
                path,
                format!("line {lineno}"),
                "row has an id but no components",
            ));
        }
        if rows.iter().any(|(k, _)| *k == id) {
            return Err(parse_err(
                path,
                format!("line {lineno}"),
                format!("duplicate class id {id}"),
            ));
        }
        rows.push((id, values));
    }
    if rows.is_empty() {
        return Err(parse_err(path, "end of file", "no vector rows"));
    }
    let num_classes = rows.iter().map(|(k, _)| *k).max().unwrap() + 1;
    let mut vectors: Vec<Option<Vec<f64>>> = vec![None; num_classes];
    for (k, v) in rows {
        vectors[k] = Some(v);
    }
    for (k, slot) in vectors.iter().enumerate() {
        if slot.is_none() {
            return Err(Error::MissingClass {
                class: k,
                detail: format!("no semantic vector in {}", path.display()),
            });
        }
    }
    SemanticVectors::new(vectors.into_iter().map(Option::unwrap).collect())
}
