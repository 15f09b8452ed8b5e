//! Feature maps, binary masks and prototype libraries, plus their on-disk
//! formats.
//!
//! All binary formats are little-endian with fixed field widths so files are
//! byte-identical across platforms:
//!
//! * `.fmap`: `"FMAP"`, `u32` version (1), `u32` h, w, d, orig_h, orig_w,
//!   `u32` id length, id bytes (UTF-8), then `h*w*d` `f32` values ordered by
//!   row, column, channel.
//! * `.plib`: `"PLIB"`, `u32` version (1), `u8` category (0 = foreground,
//!   1 = background), `u32` n, `u32` d, `n*d` `f32` values, then `n`
//!   length-prefixed (`u32`) UTF-8 source ids.
//! * masks: binary PGM (`P5`), foreground written as 255 and background as 0.
//!   On read any byte >= 128 is foreground.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

const FMAP_MAGIC: &[u8; 4] = b"FMAP";
const PLIB_MAGIC: &[u8; 4] = b"PLIB";
const FORMAT_VERSION: u32 = 1;

/// An `h x w` grid of `d`-dimensional patch features for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    image_id: String,
    h: usize,
    w: usize,
    d: usize,
    orig_h: usize,
    orig_w: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(
        image_id: impl Into<String>,
        h: usize,
        w: usize,
        d: usize,
        orig_h: usize,
        orig_w: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        let image_id = image_id.into();
        if h == 0 || w == 0 || d == 0 {
            return Err(Error::Value(format!(
                "feature map {image_id}: dimensions must be positive, got {h}x{w}x{d}"
            )));
        }
        if orig_h == 0 || orig_w == 0 {
            return Err(Error::Value(format!(
                "feature map {image_id}: original resolution must be positive, got {orig_h}x{orig_w}"
            )));
        }
        let expected = h
            .checked_mul(w)
            .and_then(|n| n.checked_mul(d))
            .ok_or_else(|| Error::Length(format!("feature map {image_id}: size overflows")))?;
        if data.len() != expected {
            return Err(Error::Length(format!(
                "feature map {image_id}: expected {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Value(format!(
                "feature map {image_id}: non-finite value at offset {pos}"
            )));
        }
        Ok(Self {
            image_id,
            h,
            w,
            d,
            orig_h,
            orig_w,
            data,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn orig_h(&self) -> usize {
        self.orig_h
    }

    pub fn orig_w(&self) -> usize {
        self.orig_w
    }

    pub fn num_cells(&self) -> usize {
        self.h * self.w
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Feature vector at row `i`, column `j`.
    pub fn feature(&self, i: usize, j: usize) -> &[f32] {
        let start = (i * self.w + j) * self.d;
        &self.data[start..start + self.d]
    }

    /// Feature vectors in row-major cell order.
    pub fn features(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.d)
    }
}

/// Row-major grid of foreground (1) / background (0) labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    rows: usize,
    cols: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(rows: usize, cols: usize, bits: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Value(format!(
                "mask dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if bits.len() != rows * cols {
            return Err(Error::Length(format!(
                "mask {rows}x{cols} needs {} cells, got {}",
                rows * cols,
                bits.len()
            )));
        }
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Value(format!(
                "mask cell {pos} has value {}, expected 0 or 1",
                bits[pos]
            )));
        }
        Ok(Self { rows, cols, bits })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "mask dimensions must be positive");
        Self {
            rows,
            cols,
            bits: vec![0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                mask.bits[i * cols + j] = u8::from(f(i, j));
            }
        }
        mask
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.cols + j] == 1
    }

    pub fn set(&mut self, i: usize, j: usize, fg: bool) {
        self.bits[i * self.cols + j] = u8::from(fg);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.count_ones() as f64 / self.bits.len() as f64
    }

    pub fn complement(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            bits: self.bits.iter().map(|b| 1 - b).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Foreground,
    Background,
}

impl Category {
    fn to_byte(self) -> u8 {
        match self {
            Category::Foreground => 0,
            Category::Background => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Category::Foreground),
            1 => Ok(Category::Background),
            other => Err(Error::Format(format!("unknown category byte {other}"))),
        }
    }
}

/// Ordered prototypes of a single category, each tagged with its source image.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeLibrary {
    category: Category,
    d: usize,
    prototypes: Vec<f32>,
    source_ids: Vec<String>,
}

impl PrototypeLibrary {
    pub fn empty(category: Category, d: usize) -> Self {
        assert!(d > 0, "prototype dimension must be positive");
        Self {
            category,
            d,
            prototypes: Vec::new(),
            source_ids: Vec::new(),
        }
    }

    pub fn new(
        category: Category,
        d: usize,
        prototypes: Vec<f32>,
        source_ids: Vec<String>,
    ) -> Result<Self> {
        if d == 0 {
            return Err(Error::Value("prototype dimension must be positive".into()));
        }
        if prototypes.len() != source_ids.len() * d {
            return Err(Error::Length(format!(
                "{} source ids need {} values, got {}",
                source_ids.len(),
                source_ids.len() * d,
                prototypes.len()
            )));
        }
        let mut lib = Self::empty(category, d);
        for (proto, id) in prototypes.chunks_exact(d).zip(source_ids) {
            lib.push(proto.to_vec(), id)?;
        }
        Ok(lib)
    }

    pub fn push(&mut self, prototype: Vec<f32>, source_id: impl Into<String>) -> Result<()> {
        if prototype.len() != self.d {
            return Err(Error::Shape(format!(
                "prototype has dimension {}, library expects {}",
                prototype.len(),
                self.d
            )));
        }
        if prototype.iter().any(|v| !v.is_finite()) {
            return Err(Error::Value("prototype contains a non-finite value".into()));
        }
        if prototype.iter().all(|&v| v == 0.0) {
            return Err(Error::DegenerateVector(format!(
                "prototype {} has zero norm",
                self.len()
            )));
        }
        self.prototypes.extend_from_slice(&prototype);
        self.source_ids.push(source_id.into());
        Ok(())
    }

    pub fn category(&self) -> Category {
        self.category
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.source_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_ids.is_empty()
    }

    pub fn prototype(&self, idx: usize) -> &[f32] {
        &self.prototypes[idx * self.d..(idx + 1) * self.d]
    }

    pub fn prototypes(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.prototypes.chunks_exact(self.d)
    }

    pub fn source_ids(&self) -> &[String] {
        &self.source_ids
    }
}

fn u32_field(value: usize, what: &str) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::Value(format!("{what} {value} does not fit in u32")))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    out.write_all(bytes).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let remaining = self.buf.len() - self.pos;
        if n > remaining {
            return Err(Error::Length(format!(
                "{what}: need {n} bytes at offset {}, only {remaining} remain",
                self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self, len: usize, what: &str) -> Result<String> {
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|_| Error::Format(format!("{what} is not valid UTF-8")))
    }

    fn f32s(&mut self, count: usize, what: &str) -> Result<Vec<f32>> {
        let nbytes = count
            .checked_mul(4)
            .ok_or_else(|| Error::Length(format!("{what}: declared size overflows")))?;
        let bytes = self.take(nbytes, what)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect())
    }

    fn expect_end(&self, what: &str) -> Result<()> {
        let trailing = self.buf.len() - self.pos;
        if trailing != 0 {
            return Err(Error::Length(format!("{what}: {trailing} trailing bytes")));
        }
        Ok(())
    }
}

fn check_header(r: &mut ByteReader<'_>, magic: &[u8; 4], path: &Path) -> Result<()> {
    let found = r.take(4, "magic")?;
    if found != magic {
        return Err(Error::Format(format!(
            "{}: bad magic {:?}, expected {:?}",
            path.display(),
            String::from_utf8_lossy(found),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION as usize {
        return Err(Error::Format(format!(
            "{}: unsupported version {version}",
            path.display()
        )));
    }
    Ok(())
}

pub fn encode_fmap(fm: &FeatureMap) -> Result<Vec<u8>> {
    let id = fm.image_id.as_bytes();
    let mut out = Vec::with_capacity(32 + id.len() + fm.data.len() * 4);
    out.extend_from_slice(FMAP_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for (value, what) in [
        (fm.h, "h"),
        (fm.w, "w"),
        (fm.d, "d"),
        (fm.orig_h, "orig_h"),
        (fm.orig_w, "orig_w"),
        (id.len(), "id length"),
    ] {
        out.extend_from_slice(&u32_field(value, what)?.to_le_bytes());
    }
    out.extend_from_slice(id);
    for v in &fm.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_fmap(bytes: &[u8], path: &Path) -> Result<FeatureMap> {
    let mut r = ByteReader::new(bytes);
    check_header(&mut r, FMAP_MAGIC, path)?;
    let h = r.u32("h")?;
    let w = r.u32("w")?;
    let d = r.u32("d")?;
    let orig_h = r.u32("orig_h")?;
    let orig_w = r.u32("orig_w")?;
    let id_len = r.u32("id length")?;
    let image_id = r.string(id_len, "image id")?;
    let count = h
        .checked_mul(w)
        .and_then(|n| n.checked_mul(d))
        .ok_or_else(|| Error::Length(format!("{}: declared size overflows", path.display())))?;
    let data = r.f32s(count, "feature payload")?;
    r.expect_end("feature payload")?;
    FeatureMap::new(image_id, h, w, d, orig_h, orig_w, data)
}

pub fn write_fmap(path: impl AsRef<Path>, fm: &FeatureMap) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &encode_fmap(fm)?)
}

pub fn read_fmap(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    decode_fmap(&read_file(path)?, path)
}

pub fn encode_mask(m: &BinaryMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.cols, m.rows).into_bytes();
    out.extend(m.bits.iter().map(|&b| if b == 1 { 255u8 } else { 0 }));
    out
}

pub fn decode_mask(bytes: &[u8], path: &Path) -> Result<BinaryMask> {
    let bad = |msg: &str| Error::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("not a binary PGM (missing P5 header)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comment lines may precede each header field
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("malformed PGM header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("PGM header field out of range"))?;
    }
    let [cols, rows, maxval] = fields;
    if maxval != 255 {
        return Err(bad(&format!("unsupported PGM maxval {maxval}")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing whitespace after PGM header"));
    }
    pos += 1;
    let payload = &bytes[pos..];
    let cells = rows
        .checked_mul(cols)
        .ok_or_else(|| bad("PGM dimensions overflow"))?;
    if payload.len() != cells {
        return Err(Error::Length(format!(
            "{}: PGM payload has {} bytes, expected {cells}",
            path.display(),
            payload.len()
        )));
    }
    BinaryMask::new(
        rows,
        cols,
        payload.iter().map(|&b| u8::from(b >= 128)).collect(),
    )
}

pub fn write_mask(path: impl AsRef<Path>, m: &BinaryMask) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &encode_mask(m))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    decode_mask(&read_file(path)?, path)
}

pub fn encode_plib(lib: &PrototypeLibrary) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(17 + lib.prototypes.len() * 4);
    out.extend_from_slice(PLIB_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(lib.category.to_byte());
    out.extend_from_slice(&u32_field(lib.len(), "prototype count")?.to_le_bytes());
    out.extend_from_slice(&u32_field(lib.d, "d")?.to_le_bytes());
    for v in &lib.prototypes {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for id in &lib.source_ids {
        out.extend_from_slice(&u32_field(id.len(), "source id length")?.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
    }
    Ok(out)
}

pub fn decode_plib(bytes: &[u8], path: &Path) -> Result<PrototypeLibrary> {
    let mut r = ByteReader::new(bytes);
    check_header(&mut r, PLIB_MAGIC, path)?;
    let category = Category::from_byte(r.u8("category")?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let n = r.u32("prototype count")?;
    let d = r.u32("d")?;
    let count = n
        .checked_mul(d)
        .ok_or_else(|| Error::Length(format!("{}: declared size overflows", path.display())))?;
    let prototypes = r.f32s(count, "prototype payload")?;
    let mut source_ids = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let len = r.u32("source id length")?;
        source_ids.push(r.string(len, "source id")?);
    }
    r.expect_end("prototype library")?;
    PrototypeLibrary::new(category, d, prototypes, source_ids)
}

pub fn write_plib(path: impl AsRef<Path>, lib: &PrototypeLibrary) -> Result<()> {
    let path = path.as_ref();
    write_file(path, &encode_plib(lib)?)
}

pub fn read_plib(path: impl AsRef<Path>) -> Result<PrototypeLibrary> {
    let path = path.as_ref();
    decode_plib(&read_file(path)?, path)
}
