//! Binary model, basis and feature files, WAV audio and CSV logs.
//!
//! Every binary file is `magic (5 ASCII bytes) | version u32 | body | crc u32`,
//! little-endian throughout, with the CRC-32 (IEEE) taken over every byte
//! between the magic and the checksum. Loaders report problems in a fixed
//! order: magic, version, truncation, length, checksum.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::complex::{CMat, CVec, RMat, C64};
use crate::cpca::{u_column_major, u_from_column_major, CpcaBasis};
use crate::crbm::{CrbmParams, EpochLog};
use crate::error::{Error, Result};
use crate::gbrbm::GbRbmParams;
use crate::signal::{Metrics, Waveform, PSNR_CAP_DB};

pub const CRBM_MAGIC: &[u8; 5] = b"CRBM1";
pub const GBRBM_MAGIC: &[u8; 5] = b"GBRB1";
pub const BASIS_MAGIC: &[u8; 5] = b"CPCA1";
pub const FEATURE_MAGIC: &[u8; 5] = b"CFEA1";
pub const FORMAT_VERSION: u32 = 1;

const MAGIC_LEN: usize = 5;
const CRC_LEN: usize = 4;

/// Layout tag stored in feature files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureLayout {
    /// One complex static vector per frame.
    Static,
    /// Per frame `[z_t ; dz_t]`, static half first.
    StaticDelta,
    /// Real frames: hidden expectations or magnitude PCA features.
    Real,
}

impl FeatureLayout {
    pub fn tag(self) -> u8 {
        match self {
            FeatureLayout::Static => 0,
            FeatureLayout::StaticDelta => 1,
            FeatureLayout::Real => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureLayout::Static => "static",
            FeatureLayout::StaticDelta => "static+delta",
            FeatureLayout::Real => "real",
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(FeatureLayout::Static),
            1 => Ok(FeatureLayout::StaticDelta),
            2 => Ok(FeatureLayout::Real),
            other => Err(Error::InvalidConfig(format!("unknown feature layout tag {other}"))),
        }
    }
}

/// Complex feature frames with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub layout: FeatureLayout,
    pub frames: Vec<CVec>,
}

impl FeatureFile {
    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.len())
    }

    /// Errors with `LayoutMismatch` unless the layout is `expected`.
    pub fn expect_layout(&self, expected: FeatureLayout) -> Result<()> {
        if self.layout == expected {
            Ok(())
        } else {
            Err(Error::LayoutMismatch {
                expected: expected.name(),
                found: self.layout.name(),
            })
        }
    }
}

struct Encoder {
    bytes: Vec<u8>,
}

impl Encoder {
    fn new(magic: &[u8; 5]) -> Self {
        let mut bytes = magic.to_vec();
        bytes.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        Self { bytes }
    }

    fn u8(&mut self, x: u8) {
        self.bytes.push(x);
    }

    fn dim(&mut self, x: usize) -> Result<()> {
        let x = u32::try_from(x).map_err(|_| Error::InvalidConfig(format!("dimension {x} exceeds u32")))?;
        self.bytes.extend_from_slice(&x.to_le_bytes());
        Ok(())
    }

    fn reals(&mut self, xs: &[f64]) {
        for x in xs {
            self.bytes.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn complexes(&mut self, xs: &[C64]) {
        for x in xs {
            self.bytes.extend_from_slice(&x.re.to_le_bytes());
            self.bytes.extend_from_slice(&x.im.to_le_bytes());
        }
    }

    fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.bytes[MAGIC_LEN..]);
        self.bytes.extend_from_slice(&crc.to_le_bytes());
        self.bytes
    }
}

struct Decoder<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    /// Checks magic, version and that the fixed header of `header_len` bytes
    /// (after magic and version) plus the checksum is present.
    fn open(bytes: &'a [u8], magic: &[u8; 5], header_len: usize) -> Result<Self> {
        let prefix = &bytes[..bytes.len().min(MAGIC_LEN)];
        if prefix != &magic[..prefix.len()] {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(prefix).into_owned(),
            });
        }
        let min = MAGIC_LEN + 4 + header_len + CRC_LEN;
        if bytes.len() < MAGIC_LEN + 4 {
            return Err(Error::Truncated {
                expected: min,
                found: bytes.len(),
            });
        }
        let version = u32::from_le_bytes(bytes[MAGIC_LEN..MAGIC_LEN + 4].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        if bytes.len() < min {
            return Err(Error::Truncated {
                expected: min,
                found: bytes.len(),
            });
        }
        Ok(Self {
            bytes,
            pos: MAGIC_LEN + 4,
        })
    }

    fn u8(&mut self) -> u8 {
        let x = self.bytes[self.pos];
        self.pos += 1;
        x
    }

    fn u32(&mut self) -> u32 {
        let x = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        x
    }

    fn dim(&mut self, name: &str) -> Result<usize> {
        match self.u32() {
            0 => Err(Error::InvalidConfig(format!("stored dimension {name} is zero"))),
            x => Ok(x as usize),
        }
    }

    /// Checks the total length against `payload_len` bytes after the
    /// current position, then the checksum.
    fn body(&mut self, payload_len: usize) -> Result<()> {
        let expected = self.pos + payload_len + CRC_LEN;
        let found = self.bytes.len();
        if found < expected {
            return Err(Error::Truncated { expected, found });
        }
        if found > expected {
            return Err(Error::LengthMismatch { expected, found });
        }
        let stored = u32::from_le_bytes(self.bytes[found - CRC_LEN..].try_into().unwrap());
        let computed = crc32fast::hash(&self.bytes[MAGIC_LEN..found - CRC_LEN]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        Ok(())
    }

    fn real(&mut self) -> f64 {
        let x = f64::from_le_bytes(self.bytes[self.pos..self.pos + 8].try_into().unwrap());
        self.pos += 8;
        x
    }

    fn reals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.real()).collect()
    }

    fn complexes(&mut self, n: usize) -> CVec {
        (0..n)
            .map(|_| {
                let re = self.real();
                C64::new(re, self.real())
            })
            .collect()
    }
}

fn payload_size(checked: &[(usize, usize)]) -> Result<usize> {
    checked
        .iter()
        .try_fold(0usize, |acc, &(count, width)| {
            count.checked_mul(width).and_then(|b| acc.checked_add(b))
        })
        .ok_or_else(|| Error::InvalidConfig("stored dimensions overflow".into()))
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = temp_sibling(path);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.tmp{}", std::process::id()))
}

pub fn encode_crbm(params: &CrbmParams) -> Result<Vec<u8>> {
    params.validate()?;
    let mut e = Encoder::new(CRBM_MAGIC);
    e.dim(params.visible_dim())?;
    e.dim(params.hidden_dim())?;
    e.complexes(&params.b);
    e.reals(&params.c);
    e.complexes(params.w.as_slice());
    e.reals(&params.r);
    e.complexes(&params.s);
    Ok(e.finish())
}

pub fn decode_crbm(bytes: &[u8]) -> Result<CrbmParams> {
    let mut d = Decoder::open(bytes, CRBM_MAGIC, 8)?;
    let i = d.dim("I")?;
    let j = d.dim("J")?;
    d.body(payload_size(&[(i, 16), (j, 8), (i * j, 16), (i, 8), (i, 16)])?)?;
    let b = d.complexes(i);
    let c = d.reals(j);
    let w = CMat::from_row_major(i, j, d.complexes(i * j))?;
    let r = d.reals(i);
    let s = d.complexes(i);
    let params = CrbmParams { b, c, w, r, s };
    params.validate()?;
    Ok(params)
}

pub fn encode_gbrbm(params: &GbRbmParams) -> Result<Vec<u8>> {
    params.validate()?;
    let mut e = Encoder::new(GBRBM_MAGIC);
    e.dim(params.b.len())?;
    e.dim(params.c.len())?;
    e.reals(&params.b);
    e.reals(&params.c);
    e.reals(params.w.as_slice());
    e.reals(&params.log_sigma);
    Ok(e.finish())
}

pub fn decode_gbrbm(bytes: &[u8]) -> Result<GbRbmParams> {
    let mut d = Decoder::open(bytes, GBRBM_MAGIC, 8)?;
    let n = d.dim("I")?;
    let j = d.dim("J")?;
    d.body(payload_size(&[(n, 8), (j, 8), (n * j, 8), (n, 8)])?)?;
    let b = d.reals(n);
    let c = d.reals(j);
    let w = RMat::from_row_major(n, j, d.reals(n * j))?;
    let log_sigma = d.reals(n);
    let params = GbRbmParams { b, c, w, log_sigma };
    params.validate()?;
    Ok(params)
}

pub fn encode_basis(basis: &CpcaBasis) -> Result<Vec<u8>> {
    basis.validate()?;
    let mut e = Encoder::new(BASIS_MAGIC);
    e.dim(basis.input_dim())?;
    e.dim(basis.components())?;
    e.complexes(&basis.mean);
    e.complexes(&u_column_major(basis));
    e.reals(&basis.lambda);
    e.u8(u8::from(basis.centered));
    Ok(e.finish())
}

pub fn decode_basis(bytes: &[u8]) -> Result<CpcaBasis> {
    let mut d = Decoder::open(bytes, BASIS_MAGIC, 8)?;
    let f = d.dim("F")?;
    let p = d.dim("P")?;
    d.body(payload_size(&[(f, 16), (f * p, 16), (p, 8), (1, 1)])?)?;
    let mean = d.complexes(f);
    let u = u_from_column_major(f, p, &d.complexes(f * p))?;
    let lambda = d.reals(p);
    let centered = match d.u8() {
        0 => false,
        1 => true,
        other => {
            return Err(Error::InvalidConfig(format!(
                "centering flag must be 0 or 1, got {other}"
            )))
        }
    };
    let basis = CpcaBasis {
        mean,
        u,
        lambda,
        centered,
    };
    basis.validate()?;
    Ok(basis)
}

fn check_rows<T>(rows: &[Vec<T>]) -> Result<usize> {
    let p = rows.first().map(|r| r.len()).ok_or(Error::EmptyBatch)?;
    for r in rows {
        crate::error::check_len("feature frame", p, r.len())?;
    }
    if p == 0 {
        return Err(Error::InvalidConfig("feature frames must be non-empty".into()));
    }
    Ok(p)
}

pub fn encode_features(file: &FeatureFile) -> Result<Vec<u8>> {
    if file.layout == FeatureLayout::Real {
        return Err(Error::LayoutMismatch {
            expected: "static or static+delta",
            found: "real",
        });
    }
    let p = check_rows(&file.frames)?;
    if file.layout == FeatureLayout::StaticDelta && p % 2 != 0 {
        return Err(Error::InvalidConfig("static+delta frames need an even width".into()));
    }
    let mut e = Encoder::new(FEATURE_MAGIC);
    e.dim(file.frames.len())?;
    e.dim(p)?;
    e.u8(file.layout.tag());
    for f in &file.frames {
        e.complexes(f);
    }
    Ok(e.finish())
}

/// Real frames under the real layout tag, stored as f64.
pub fn encode_real(rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    let p = check_rows(rows)?;
    let mut e = Encoder::new(FEATURE_MAGIC);
    e.dim(rows.len())?;
    e.dim(p)?;
    e.u8(FeatureLayout::Real.tag());
    for r in rows {
        e.reals(r);
    }
    Ok(e.finish())
}

/// Contents of a feature file of any layout.
#[derive(Debug, Clone, PartialEq)]
pub enum FeaturePayload {
    Complex(FeatureFile),
    Real(Vec<Vec<f64>>),
}

pub fn decode_any_features(bytes: &[u8]) -> Result<FeaturePayload> {
    let mut d = Decoder::open(bytes, FEATURE_MAGIC, 9)?;
    let t = d.dim("T")?;
    let p = d.dim("P")?;
    let layout = FeatureLayout::from_tag(d.u8())?;
    let width = if layout == FeatureLayout::Real { 8 } else { 16 };
    d.body(payload_size(&[(t * p, width)])?)?;
    Ok(match layout {
        FeatureLayout::Real => FeaturePayload::Real((0..t).map(|_| d.reals(p)).collect()),
        _ => FeaturePayload::Complex(FeatureFile {
            layout,
            frames: (0..t).map(|_| d.complexes(p)).collect(),
        }),
    })
}

pub fn decode_features(bytes: &[u8]) -> Result<FeatureFile> {
    match decode_any_features(bytes)? {
        FeaturePayload::Complex(f) => Ok(f),
        FeaturePayload::Real(_) => Err(Error::LayoutMismatch {
            expected: "static or static+delta",
            found: "real",
        }),
    }
}

pub fn decode_real(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    match decode_any_features(bytes)? {
        FeaturePayload::Real(rows) => Ok(rows),
        FeaturePayload::Complex(f) => Err(Error::LayoutMismatch {
            expected: "real",
            found: f.layout.name(),
        }),
    }
}

pub fn save_crbm(path: &Path, params: &CrbmParams) -> Result<()> {
    write_atomic(path, &encode_crbm(params)?)
}

pub fn load_crbm(path: &Path) -> Result<CrbmParams> {
    decode_crbm(&fs::read(path)?)
}

pub fn save_gbrbm(path: &Path, params: &GbRbmParams) -> Result<()> {
    write_atomic(path, &encode_gbrbm(params)?)
}

pub fn load_gbrbm(path: &Path) -> Result<GbRbmParams> {
    decode_gbrbm(&fs::read(path)?)
}

pub fn save_basis(path: &Path, basis: &CpcaBasis) -> Result<()> {
    write_atomic(path, &encode_basis(basis)?)
}

pub fn load_basis(path: &Path) -> Result<CpcaBasis> {
    decode_basis(&fs::read(path)?)
}

pub fn save_features(path: &Path, file: &FeatureFile) -> Result<()> {
    write_atomic(path, &encode_features(file)?)
}

pub fn load_features(path: &Path) -> Result<FeatureFile> {
    decode_features(&fs::read(path)?)
}

pub fn load_any_features(path: &Path) -> Result<FeaturePayload> {
    decode_any_features(&fs::read(path)?)
}

pub fn save_real(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    write_atomic(path, &encode_real(rows)?)
}

pub fn load_real(path: &Path) -> Result<Vec<Vec<f64>>> {
    decode_real(&fs::read(path)?)
}

/// Either model family, told apart by magic.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyModel {
    Crbm(CrbmParams),
    GbRbm(GbRbmParams),
}

pub fn load_any_model(path: &Path) -> Result<AnyModel> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(GBRBM_MAGIC) {
        decode_gbrbm(&bytes).map(AnyModel::GbRbm)
    } else {
        decode_crbm(&bytes).map(AnyModel::Crbm)
    }
}

/// 16-bit PCM mono only; samples are `value / 32768`.
pub fn read_wav(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedWav(format!(
            "{} channels (mono required)",
            spec.channels
        )));
    }
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::UnsupportedWav(
            "floating-point samples (16-bit PCM required)".into(),
        ));
    }
    if spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedWav(format!(
            "{}-bit samples (16-bit PCM required)",
            spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

/// `round(x * 32768)` clamped to the i16 range.
pub fn quantize(x: f64) -> (i16, bool) {
    let v = (x * 32768.0).round();
    if v > f64::from(i16::MAX) {
        (i16::MAX, true)
    } else if v < f64::from(i16::MIN) {
        (i16::MIN, true)
    } else {
        (v as i16, false)
    }
}

/// Returns the number of clamped samples.
pub fn write_wav(path: &Path, w: &Waveform) -> Result<usize> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = std::io::Cursor::new(Vec::new());
    let mut clamped = 0;
    {
        let mut writer = hound::WavWriter::new(&mut cursor, spec)?;
        for &x in &w.samples {
            let (v, hit) = quantize(x);
            clamped += usize::from(hit);
            writer.write_sample(v)?;
        }
        writer.finalize()?;
    }
    if clamped > 0 {
        log::warn!("{}: clamped {clamped} out-of-range samples", path.display());
    }
    write_atomic(path, &cursor.into_inner())?;
    Ok(clamped)
}

pub const METRICS_HEADER: &str = "epoch,mse,wall_seconds,optimizer";

/// Reals are written with 17 significant digits, so parsing back is exact.
pub fn format_metrics(log: &[EpochLog]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for e in log {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{}\n",
            e.epoch, e.mse, e.wall_seconds, e.optimizer
        ));
    }
    out
}

pub fn parse_metrics(text: &str) -> Result<Vec<EpochLog>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        _ => {
            return Err(Error::MalformedMetrics {
                line: 1,
                reason: format!("header must be `{METRICS_HEADER}`"),
            })
        }
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let bad = |reason: &str| Error::MalformedMetrics {
                line: k + 2,
                reason: reason.into(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(bad("expected 4 fields"));
            }
            Ok(EpochLog {
                epoch: fields[0].parse().map_err(|_| bad("bad epoch"))?,
                mse: fields[1].parse().map_err(|_| bad("bad mse"))?,
                wall_seconds: fields[2].parse().map_err(|_| bad("bad wall_seconds"))?,
                optimizer: fields[3].to_string(),
            })
        })
        .collect()
}

pub fn export_metrics(log: &[EpochLog], path: &Path) -> Result<()> {
    write_atomic(path, format_metrics(log).as_bytes())
}

pub fn import_metrics(path: &Path) -> Result<Vec<EpochLog>> {
    parse_metrics(&fs::read_to_string(path)?)
}

pub const EVAL_HEADER: &str = "file,mse,psnr_ms,psnr_pd,lsd";

fn capped(x: f64) -> f64 {
    if x.is_infinite() && x > 0.0 {
        PSNR_CAP_DB
    } else {
        x
    }
}

/// One row per named record; infinite PSNR is written as the cap.
pub fn format_eval(rows: &[(String, Metrics)]) -> String {
    let mut out = String::from(EVAL_HEADER);
    out.push('\n');
    for (name, m) in rows {
        out.push_str(&format!(
            "{name},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            m.mse,
            capped(m.psnr_ms),
            capped(m.psnr_pd),
            m.lsd
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::SeededRng;

    fn random_crbm(seed: u64) -> CrbmParams {
        let mut rng = SeededRng::new(seed, 0);
        let mut p = CrbmParams::zeros(3, 2);
        for x in p.b.iter_mut().chain(p.w.as_mut_slice()).chain(p.s.iter_mut()) {
            *x = C64::new(rng.normal(), rng.normal());
        }
        for x in p.c.iter_mut().chain(p.r.iter_mut()) {
            *x = rng.normal();
        }
        for s in p.s.iter_mut() {
            s.re = -2.0 + 0.1 * s.re;
        }
        p
    }

    fn bits(p: &CrbmParams) -> Vec<u64> {
        let c = |x: &C64| [x.re.to_bits(), x.im.to_bits()];
        p.b.iter()
            .flat_map(c)
            .chain(p.c.iter().map(|x| x.to_bits()))
            .chain(p.w.as_slice().iter().flat_map(c))
            .chain(p.r.iter().map(|x| x.to_bits()))
            .chain(p.s.iter().flat_map(c))
            .collect()
    }

    #[test]
    fn crbm_roundtrip_is_bit_exact() {
        let p = random_crbm(1);
        let bytes = encode_crbm(&p).unwrap();
        assert_eq!(bytes.len(), 5 + 4 + 8 + 3 * 16 + 2 * 8 + 6 * 16 + 3 * 8 + 3 * 16 + 4);
        let back = decode_crbm(&bytes).unwrap();
        assert_eq!(bits(&p), bits(&back));
        assert_eq!(encode_crbm(&back).unwrap(), bytes);
    }

    #[test]
    fn corruption_is_detected_in_order() {
        let bytes = encode_crbm(&random_crbm(2)).unwrap();
        let mut flipped = bytes.clone();
        flipped[30] ^= 0x10;
        assert!(matches!(decode_crbm(&flipped), Err(Error::Checksum { .. })));
        assert!(matches!(
            decode_crbm(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated { .. })
        ));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(decode_crbm(&longer), Err(Error::LengthMismatch { .. })));
        let mut versioned = bytes.clone();
        versioned[5] = 9;
        assert!(matches!(decode_crbm(&versioned), Err(Error::UnsupportedVersion(9))));
        assert!(matches!(decode_crbm(b"CRB"), Err(Error::Truncated { .. })));
        assert!(matches!(decode_crbm(b""), Err(Error::Truncated { .. })));
    }

    #[test]
    fn wrong_family_is_a_magic_error() {
        let mut rng = SeededRng::new(3, 0);
        let data: Vec<Vec<f64>> = (0..10).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        let g = GbRbmParams::init(&data, 2, &Default::default(), &mut rng).unwrap();
        let bytes = encode_gbrbm(&g).unwrap();
        assert!(matches!(decode_crbm(&bytes), Err(Error::BadMagic { .. })));
        assert_eq!(decode_gbrbm(&bytes).unwrap(), g);
    }

    #[test]
    fn feature_layouts() {
        let frames = vec![vec![C64::new(1.0, -2.0), C64::new(0.5, 0.25)]; 3];
        let f = FeatureFile {
            layout: FeatureLayout::StaticDelta,
            frames,
        };
        let bytes = encode_features(&f).unwrap();
        let back = decode_features(&bytes).unwrap();
        assert_eq!(back, f);
        assert!(back.expect_layout(FeatureLayout::Static).is_err());
        assert!(matches!(decode_real(&bytes), Err(Error::LayoutMismatch { .. })));
        let real = vec![vec![0.25, 0.75, 1.0]; 2];
        let bytes = encode_real(&real).unwrap();
        assert_eq!(decode_real(&bytes).unwrap(), real);
        assert!(matches!(decode_features(&bytes), Err(Error::LayoutMismatch { .. })));
    }

    #[test]
    fn quantization_rule() {
        assert_eq!(quantize(1.0), (32767, true));
        assert_eq!(quantize(-1.0), (-32768, false));
        assert_eq!(quantize(0.5), (16384, false));
        assert_eq!(quantize(-1.5), (-32768, true));
    }

    #[test]
    fn metrics_text_roundtrip() {
        let log: Vec<EpochLog> = (1..=3)
            .map(|e| EpochLog {
                epoch: e,
                mse: 1.0 / (e as f64 * 3.0),
                wall_seconds: 0.1 * e as f64,
                optimizer: "csa".into(),
            })
            .collect();
        let text = format_metrics(&log);
        assert_eq!(text.lines().count(), 4);
        assert_eq!(parse_metrics(&text).unwrap(), log);
        assert!(parse_metrics("epoch,mse\n").is_err());
        assert!(parse_metrics(&format!("{METRICS_HEADER}\n1,x,0,csa\n")).is_err());
    }
}
