//! Density and mask ingestion, run outputs and the raw tensor format.
//!
//! Images map pixel `(row r, column c)` to grid sample `(x = c, y = r)`. A
//! 1-D density is a single image row or a single CSV row.
//!
//! Raw tensor layout: `OTDT`, then little-endian `u32` version (1), `d`, one
//! size per axis (`x`, `y` in 2-D, then `t`), the component count, and the
//! components as little-endian `f64` in row-major order, density first.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::grid::{CenteredField, GridDims, SpatialGrid};
use crate::solvers::SolveOutput;

const RAW_MAGIC: &[u8; 4] = b"OTDT";
const RAW_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityFormat {
    Pgm,
    Csv,
    Raw,
}

impl DensityFormat {
    /// Guesses the format from the file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "pgm" => Ok(DensityFormat::Pgm),
            "csv" | "txt" => Ok(DensityFormat::Csv),
            "raw" | "otdt" | "bin" => Ok(DensityFormat::Raw),
            _ => Err(Error::Validation(format!(
                "{}: cannot infer format from extension (expected .pgm, .csv or .raw)",
                path.display()
            ))),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Loads a density; PGM samples are scaled to `[0, 1]` by the maxval.
pub fn load_density(path: &Path, format: DensityFormat) -> Result<SpatialGrid> {
    let bytes = read(path)?;
    match format {
        DensityFormat::Pgm => parse_pgm(&bytes),
        DensityFormat::Csv => parse_csv(&bytes),
        DensityFormat::Raw => {
            let t = parse_raw(&bytes)?;
            if t.shape.2 != 1 || t.components.len() != 1 {
                return Err(Error::parse(
                    0,
                    format!(
                        "expected a single static density, found {} components over {} time samples",
                        t.components.len(),
                        t.shape.2
                    ),
                ));
            }
            Ok(t.components[0].index_axis(Axis(2), 0).to_owned())
        }
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<(usize, &str)> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() && self.bytes[self.pos] != b'#' {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::parse(start, format!("expected {what}, found end of input")));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(start, format!("expected {what}, found non-text bytes")))?;
        Ok((start, s))
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        let (at, tok) = self.token(what)?;
        tok.parse()
            .map_err(|_| Error::parse(at, format!("expected {what}, found {tok:?}")))
    }
}

/// Parses a P2 or P5 graymap into a `(width, height)` grid scaled to `[0, 1]`.
pub fn parse_pgm(bytes: &[u8]) -> Result<SpatialGrid> {
    let mut c = Cursor { bytes, pos: 0 };
    let (at, magic) = c.token("PGM magic")?;
    let binary = match magic {
        "P2" => false,
        "P5" => true,
        other => return Err(Error::parse(at, format!("unsupported magic {other:?}, expected P2 or P5"))),
    };
    let width = c.number("width")?;
    let height = c.number("height")?;
    let maxval_at = c.pos;
    let maxval = c.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::parse(maxval_at, format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::parse(maxval_at, format!("maxval {maxval} outside 1..=65535")));
    }
    let count = width * height;
    let mut values = Vec::with_capacity(count);
    if binary {
        // exactly one whitespace byte separates the header from the samples
        let start = c.pos + 1;
        let per = if maxval > 255 { 2 } else { 1 };
        let need = count * per;
        let have = bytes.len().saturating_sub(start);
        if have < need {
            return Err(Error::parse(
                bytes.len(),
                format!("truncated P5 payload: expected {need} bytes, found {have}, missing {}", need - have),
            ));
        }
        for k in 0..count {
            let v = if per == 1 {
                bytes[start + k] as usize
            } else {
                u16::from_be_bytes([bytes[start + 2 * k], bytes[start + 2 * k + 1]]) as usize
            };
            if v > maxval {
                return Err(Error::parse(start + per * k, format!("sample {v} exceeds maxval {maxval}")));
            }
            values.push(v);
        }
    } else {
        for _ in 0..count {
            let at = {
                c.skip_space_and_comments();
                c.pos
            };
            let v = c.number("pixel value")?;
            if v > maxval {
                return Err(Error::parse(at, format!("sample {v} exceeds maxval {maxval}")));
            }
            values.push(v);
        }
        c.skip_space_and_comments();
        if c.pos < bytes.len() {
            return Err(Error::parse(c.pos, format!("more than {count} samples in P2 image")));
        }
    }
    let scale = maxval as f64;
    Ok(Array2::from_shape_fn((width, height), |(x, y)| values[y * width + x] as f64 / scale))
}

/// Parses comma- or whitespace-separated numbers. One row gives a 1-D
/// density; several rows give a 2-D grid with rows along `y`.
pub fn parse_csv(bytes: &[u8]) -> Result<SpatialGrid> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(e.valid_up_to(), "CSV is not UTF-8"))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let line_start = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim().is_empty() || content.trim_start().starts_with('#') {
            continue;
        }
        let mut row = Vec::new();
        let mut pos = 0;
        for field in content.split(|c: char| c == ',' || c.is_whitespace()) {
            let at = line_start + pos;
            pos += field.len() + 1;
            if field.is_empty() {
                continue;
            }
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(at, format!("non-numeric value {field:?}")))?;
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    line_start,
                    format!("row has {} values, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::parse(0, "no data rows"));
    }
    let (nx, ny) = (rows[0].len(), rows.len());
    Ok(Array2::from_shape_fn((nx, ny), |(x, y)| rows[y][x]))
}

/// Fields in the raw tensor format.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    /// Spatial dimension, 1 or 2.
    pub d: usize,
    /// `(x, y, t)` sizes; `y = 1` in 1-D.
    pub shape: (usize, usize, usize),
    pub components: Vec<Array3<f64>>,
}

impl RawTensor {
    /// Density first, then the momentum components.
    pub fn from_centered(v: &CenteredField) -> Self {
        let dims = v.dims();
        let mut components = vec![v.f().to_owned()];
        components.extend((0..dims.dim()).map(|a| v.m(a).to_owned()));
        RawTensor {
            d: dims.dim(),
            shape: dims.centered_shape(),
            components,
        }
    }

    pub fn to_centered(&self, dims: GridDims) -> Result<CenteredField> {
        if self.components.len() != dims.dim() + 1 {
            return Err(Error::Dimension(format!(
                "tensor has {} components, a centered field needs {}",
                self.components.len(),
                dims.dim() + 1
            )));
        }
        let f = self.components[0].clone();
        CenteredField::from_parts(dims, self.components[1..].to_vec(), f)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(RAW_MAGIC);
        let u = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        u(&mut out, RAW_VERSION as usize);
        u(&mut out, self.d);
        u(&mut out, self.shape.0);
        if self.d == 2 {
            u(&mut out, self.shape.1);
        }
        u(&mut out, self.shape.2);
        u(&mut out, self.components.len());
        for c in &self.components {
            for v in c.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}

struct RawReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> RawReader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(Error::parse(
                self.bytes.len(),
                format!(
                    "truncated raw tensor: {what} needs {} more bytes",
                    self.pos + n - self.bytes.len()
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn word(&mut self, what: &str) -> Result<(usize, usize)> {
        let at = self.pos;
        let b = self.take(4, what)?;
        Ok((at, u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize))
    }
}

pub fn parse_raw(bytes: &[u8]) -> Result<RawTensor> {
    let mut r = RawReader { bytes, pos: 0 };
    if r.take(4, "magic")? != RAW_MAGIC {
        return Err(Error::parse(0, "missing OTDT magic"));
    }
    let (at, version) = r.word("version")?;
    if version != RAW_VERSION as usize {
        return Err(Error::parse(at, format!("unsupported raw tensor version {version}")));
    }
    let (at, d) = r.word("dimension")?;
    if d != 1 && d != 2 {
        return Err(Error::parse(at, format!("spatial dimension {d} not supported")));
    }
    let nx = r.word("x size")?.1;
    let ny = if d == 2 { r.word("y size")?.1 } else { 1 };
    let nt = r.word("t size")?.1;
    let (at, count) = r.word("component count")?;
    if count == 0 {
        return Err(Error::parse(at, "tensor has no components"));
    }
    let len = nx * ny * nt;
    let mut components = Vec::with_capacity(count);
    for k in 0..count {
        let block = r.take(8 * len, &format!("component {k}"))?;
        let data: Vec<f64> = block
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        components.push(Array3::from_shape_vec((nx, ny, nt), data).expect("length checked"));
    }
    if r.pos != bytes.len() {
        return Err(Error::parse(r.pos, format!("{} trailing bytes after tensor", bytes.len() - r.pos)));
    }
    Ok(RawTensor {
        d,
        shape: (nx, ny, nt),
        components,
    })
}

pub fn write_raw(path: &Path, tensor: &RawTensor) -> Result<()> {
    fs::write(path, tensor.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_raw(path: &Path) -> Result<RawTensor> {
    parse_raw(&read(path)?)
}

/// Loads an obstacle mask (`value > 0.5` marks an obstacle) over the
/// centered grid. Static masks are repeated over time; a raw tensor may carry
/// one slice per time sample.
pub fn load_mask(path: &Path, format: DensityFormat, dims: GridDims) -> Result<Array3<bool>> {
    let shape = dims.centered_shape();
    let values: Array3<f64> = match format {
        DensityFormat::Raw => {
            let t = read_raw(path)?;
            if t.components.len() != 1 {
                return Err(Error::Validation(format!(
                    "{}: mask tensor must have one component",
                    path.display()
                )));
            }
            let c = &t.components[0];
            if (t.shape.0, t.shape.1) != (shape.0, shape.1) || (t.shape.2 != 1 && t.shape.2 != shape.2) {
                return Err(Error::Dimension(format!(
                    "{}: mask has shape {:?}, expected {:?} or a single time sample",
                    path.display(),
                    t.shape,
                    shape
                )));
            }
            if t.shape.2 == 1 {
                c.broadcast(shape).expect("singleton time axis").to_owned()
            } else {
                c.clone()
            }
        }
        _ => {
            let g = load_density(path, format)?;
            if g.dim() != (shape.0, shape.1) {
                return Err(Error::Dimension(format!(
                    "{}: mask has shape {:?}, expected ({}, {})",
                    path.display(),
                    g.shape(),
                    shape.0,
                    shape.1
                )));
            }
            let g3 = g.insert_axis(Axis(2));
            g3.broadcast(shape).expect("singleton time axis").to_owned()
        }
    };
    Ok(values.mapv(|v| v > 0.5))
}

/// Binary 8-bit graymap of `grid`, samples mapped linearly from `[0, max]` to
/// `0..=255` with negatives clamped to black.
pub fn encode_pgm(grid: ArrayView2<'_, f64>, max: f64) -> Vec<u8> {
    let (width, height) = grid.dim();
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    for y in 0..height {
        for x in 0..width {
            let v = if max > 0.0 { grid[(x, y)] / max } else { 0.0 };
            out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

pub fn write_pgm(path: &Path, grid: ArrayView2<'_, f64>, max: f64) -> Result<()> {
    fs::write(path, encode_pgm(grid, max)).map_err(|e| Error::io(path, e))
}

/// Flat `key=value` description of a run, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunManifest {
    entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new() -> Self {
        RunManifest::default()
    }

    /// Sets `key`, replacing an earlier value.
    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = RunManifest::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let at = offset;
            offset += line.len();
            let line = line.trim_end_matches(['\n', '\r']);
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(at, format!("expected key=value, found {line:?}")))?;
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::parse(at, format!("invalid key {k:?}")));
            }
            m.set(k, v);
        }
        Ok(m)
    }
}

/// Output file names inside a run directory.
pub const TENSOR_FILE: &str = "solution.raw";
pub const CONVERGENCE_FILE: &str = "convergence.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub fn frame_name(j: usize) -> String {
    format!("frame_{j:03}.pgm")
}

/// Writes frames (one per time sample of the centered density), the raw
/// tensor of the centered solution, the convergence log and the manifest.
/// Returns the written paths.
pub fn save_run(out_dir: &Path, output: &SolveOutput, manifest: &RunManifest) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let f = output.centered.f();
    let max = f.iter().copied().fold(0.0f64, f64::max);
    for (j, slab) in f.axis_iter(Axis(2)).enumerate() {
        let path = out_dir.join(frame_name(j));
        write_pgm(&path, slab, max)?;
        written.push(path);
    }
    let tensor = out_dir.join(TENSOR_FILE);
    write_raw(&tensor, &RawTensor::from_centered(&output.centered))?;
    written.push(tensor);
    let log = out_dir.join(CONVERGENCE_FILE);
    fs::write(&log, output.record.to_csv()).map_err(|e| Error::io(&log, e))?;
    written.push(log);
    let man = out_dir.join(MANIFEST_FILE);
    fs::write(&man, manifest.to_text()).map_err(|e| Error::io(&man, e))?;
    written.push(man);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_pgm_scales_linearly() {
        let g = parse_pgm(b"P2\n2 2\n255\n0 0\n0 255\n").unwrap();
        assert_eq!(g.dim(), (2, 2));
        assert_eq!(g[(0, 0)], 0.0);
        assert_eq!(g[(1, 0)], 0.0);
        assert_eq!(g[(0, 1)], 0.0);
        assert_eq!(g[(1, 1)], 1.0);
    }

    #[test]
    fn comments_are_skipped() {
        let g = parse_pgm(b"P2 # c\n# more\n3 1 # w h\n4\n0 2 4\n").unwrap();
        assert_eq!(g.column(0).to_vec(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn binary_16_bit() {
        let mut b = b"P5\n2 1\n65535\n".to_vec();
        b.extend_from_slice(&[0xff, 0xff, 0x80, 0x00]);
        let g = parse_pgm(&b).unwrap();
        assert_eq!(g[(0, 0)], 1.0);
        assert!((g[(1, 0)] - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn truncated_payload_names_missing_bytes() {
        let mut b = b"P5\n4 4\n255\n".to_vec();
        b.extend_from_slice(&[0; 10]);
        match parse_pgm(&b) {
            Err(Error::Parse { message, offset }) => {
                assert!(message.contains("missing 6"), "{message}");
                assert_eq!(offset, b.len());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_tokens_report_offsets() {
        match parse_pgm(b"P2\n2 x\n255\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 5),
            other => panic!("{other:?}"),
        }
        assert!(parse_pgm(b"P3\n1 1\n1\n0\n").is_err());
        assert!(parse_pgm(b"P2\n1 1\n9\n10\n").is_err());
    }

    #[test]
    fn csv_shapes() {
        let one = parse_csv(b"1, 2, 3\n").unwrap();
        assert_eq!(one.dim(), (3, 1));
        let two = parse_csv(b"1,2\n3,4\n5,6\n").unwrap();
        assert_eq!(two.dim(), (2, 3));
        assert_eq!(two[(1, 2)], 6.0);
        match parse_csv(b"1,2\n3,x\n") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("{other:?}"),
        }
        assert!(parse_csv(b"1,2\n3\n").is_err());
    }

    #[test]
    fn raw_round_trip_is_bitwise() {
        let dims = GridDims::new_2d(3, 2, 4).unwrap();
        let mut v = CenteredField::zeros(dims);
        let mut k = 0.1f64;
        v.f_mut().mapv_inplace(|_| {
            k = (k * 7.3).fract() - 0.2;
            k
        });
        v.m_mut(1).fill(std::f64::consts::PI);
        let t = RawTensor::from_centered(&v);
        let back = parse_raw(&t.to_bytes()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_centered(dims).unwrap(), v);
        let bytes = t.to_bytes();
        assert!(parse_raw(&bytes[..bytes.len() - 3]).is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest::new();
        m.set("solver", "pd");
        m.set("gamma", 0.5);
        m.set("solver", "a-dr");
        let text = m.to_text();
        assert_eq!(text, "solver=a-dr\ngamma=0.5\n");
        assert_eq!(RunManifest::parse(&text).unwrap(), m);
        assert!(RunManifest::parse("novalue\n").is_err());
    }

    #[test]
    fn frame_encoding_clamps_negatives() {
        let g = Array2::from_shape_vec((3, 1), vec![-1.0, 0.5, 1.0]).unwrap();
        let bytes = encode_pgm(g.view(), 1.0);
        assert!(bytes.ends_with(&[0, 128, 255]));
        let back = parse_pgm(&bytes).unwrap();
        assert_eq!(back[(2, 0)], 1.0);
    }
}
