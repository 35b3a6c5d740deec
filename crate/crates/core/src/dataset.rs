//! Echo/image training pairs: generation, normalization, splitting, and the
//! SARP on-disk format.
//!
//! # SARP layout (all integers and floats little-endian)
//!
//! ```text
//! header:  b"SARP" | u32 version | u32 H_e | u32 W_e | u32 H_i | u32 W_i
//!          | u64 count | [u8; 32] radar digest | [u8; 32] rda digest
//!          | u32 crc32(header bytes so far)
//! record:  u8 label (0 none, 1 ridge, 2 river) | u8 flags (bit 0 echo
//!          normalized, bit 1 image scaled) | u16 zero
//!          | f64 x H_e*W_e*2 echo (row-major, channel 0 real, channel 1 imag)
//!          | f64 x H_i*W_i image (row-major)
//!          | u32 crc32(record bytes so far)
//! ```
//!
//! The manifest sidecar (`manifest.json`) carries the split, the
//! normalization statistics, the config digests, and every record offset.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::numerics::{kaiser, sinc, Complex64, ComplexMatrix, Prng, RealMatrix};
use crate::par;
use crate::rda::{form_image, RdaConfig, RdaError};
use crate::sim::{random_scene, synthesize_echo, RadarConfig, RawEcho, SceneClass, SimError};

pub const SARP_MAGIC: &[u8; 4] = b"SARP";
pub const SARP_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 16 + 8 + 64 + 4;
const SPLIT_STREAM: u64 = 0x5350_4c49_5400_0000;

const FLAG_ECHO_NORMALIZED: u8 = 1;
const FLAG_IMAGE_SCALED: u8 = 2;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("format: {0}")]
    Format(String),
    #[error("checksum mismatch in record {record}")]
    Checksum { record: usize },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("resample factor {factor} does not divide {rows}x{cols}")]
    FactorMismatch {
        factor: usize,
        rows: usize,
        cols: usize,
    },
    #[error("cannot hold out {n_val} of {total} pairs")]
    BadSplit { n_val: usize, total: usize },
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Rda(#[from] RdaError),
}

/// Two-channel echo, `H x W x 2`, channel 0 real and channel 1 imaginary.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoTensor {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl EchoTensor {
    pub fn from_complex(m: &ComplexMatrix) -> Self {
        let data = m.data().iter().flat_map(|z| [z.re, z.im]).collect();
        Self {
            height: m.rows(),
            width: m.cols(),
            data,
        }
    }

    pub fn to_complex(&self) -> ComplexMatrix {
        let data = self
            .data
            .chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        ComplexMatrix::from_vec(self.height, self.width, data).expect("consistent echo tensor")
    }

    /// Largest `sqrt(re^2 + im^2)` over all pixels.
    pub fn max_magnitude(&self) -> f64 {
        self.data
            .chunks_exact(2)
            .map(|c| c[0].hypot(c[1]))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EchoImagePair {
    pub echo: EchoTensor,
    pub image: RealMatrix,
    pub class_label: Option<SceneClass>,
    pub echo_normalized: bool,
    pub image_scaled: bool,
}

/// Knobs for [`generate_pairs_with`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenOptions {
    /// Per-component complex Gaussian noise added to each simulated echo.
    pub noise_std: f64,
    /// Decimation applied to the simulated echo before focusing; the RDA
    /// radar configuration must describe the decimated sampling.
    pub resample_factor: usize,
}

impl Default for GenOptions {
    fn default() -> Self {
        Self {
            noise_std: 0.05,
            resample_factor: 1,
        }
    }
}

/// `n` deterministic pairs with default [`GenOptions`].
pub fn generate_pairs(
    n: usize,
    radar: &RadarConfig,
    rda_cfg: &RdaConfig,
    seed: u64,
) -> Result<Vec<EchoImagePair>, DatasetError> {
    generate_pairs_with(n, radar, rda_cfg, seed, &GenOptions::default())
}

/// Pair `i` comes from scene stream `i` of `seed`; even indices are ridge
/// scenes, odd indices river scenes.
pub fn generate_pairs_with(
    n: usize,
    radar: &RadarConfig,
    rda_cfg: &RdaConfig,
    seed: u64,
    opts: &GenOptions,
) -> Result<Vec<EchoImagePair>, DatasetError> {
    if n == 0 {
        return Err(DatasetError::DegenerateData("need at least one pair".into()));
    }
    let factor = opts.resample_factor.max(1);
    if factor > 1 && rda_cfg.radar != radar.decimated(factor) {
        return Err(DatasetError::Format(
            "RDA radar configuration does not describe the decimated echo".into(),
        ));
    }
    par::try_map_range(0..n, |i| {
        let mut p = Prng::with_stream(seed, i as u64);
        let class = if i % 2 == 0 {
            SceneClass::Ridge
        } else {
            SceneClass::River
        };
        let scene = random_scene(radar, class, &mut p);
        let raw = synthesize_echo(radar, &scene, &mut p, opts.noise_std)?;
        let echo = if factor > 1 {
            RawEcho {
                samples: resample_echo(&raw.samples, factor)?,
                config: rda_cfg.radar.clone(),
            }
        } else {
            raw
        };
        let image = form_image(&echo, rda_cfg)?;
        Ok(EchoImagePair {
            echo: EchoTensor::from_complex(&echo.samples),
            image: image.pixels,
            class_label: Some(class),
            echo_normalized: false,
            image_scaled: false,
        })
    })
}

/// Low-pass taps for decimation by `factor`: Kaiser-windowed sinc with cutoff
/// pi/factor, unit DC gain, `16 * factor + 1` taps.
fn decimation_filter(factor: usize) -> Vec<f64> {
    let half = 8 * factor as isize;
    let taps: Vec<f64> = (-half..=half)
        .map(|k| {
            let t = k as f64;
            sinc(t / factor as f64) * kaiser(t / (half as f64 + 1.0), 8.0)
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

fn filter_decimate(input: &[Complex64], taps: &[f64], factor: usize) -> Vec<Complex64> {
    let half = (taps.len() / 2) as isize;
    let n = input.len() as isize;
    (0..input.len() / factor)
        .map(|o| {
            let center = (o * factor) as isize;
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &h) in taps.iter().enumerate() {
                let idx = center + half - k as isize;
                if (0..n).contains(&idx) {
                    acc += input[idx as usize] * h;
                }
            }
            acc
        })
        .collect()
}

/// Anti-aliased decimation by `factor` along both axes.
pub fn resample_echo(e: &ComplexMatrix, factor: usize) -> Result<ComplexMatrix, DatasetError> {
    let (rows, cols) = e.dims();
    if factor == 0 || rows % factor != 0 || cols % factor != 0 {
        return Err(DatasetError::FactorMismatch { factor, rows, cols });
    }
    if factor == 1 {
        return Ok(e.clone());
    }
    let taps = decimation_filter(factor);
    let (out_rows, out_cols) = (rows / factor, cols / factor);
    let mut along_rows = ComplexMatrix::zeros(rows, out_cols);
    par::for_each_chunk_mut(along_rows.data_mut(), out_cols, |i, out| {
        out.copy_from_slice(&filter_decimate(e.row(i), &taps, factor));
    });
    let t = along_rows.transpose();
    let mut both = ComplexMatrix::zeros(out_cols, out_rows);
    par::for_each_chunk_mut(both.data_mut(), out_rows, |j, out| {
        out.copy_from_slice(&filter_decimate(t.row(j), &taps, factor));
    });
    Ok(both.transpose())
}

/// Training-split statistics reused for every split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub max_complex_magnitude: f64,
    pub echo_height: usize,
    pub echo_width: usize,
    /// Mean of the magnitude-scaled echoes, `H_e * W_e * 2`, channel-last.
    pub per_pixel_mean: Vec<f64>,
    pub image_scale_min: f64,
    pub image_scale_max: f64,
}

impl NormStats {
    /// Fits on raw (not yet normalized or scaled) pairs.
    pub fn fit(pairs: &[&EchoImagePair]) -> Result<Self, DatasetError> {
        let first = pairs
            .first()
            .ok_or_else(|| DatasetError::DegenerateData("empty pair list".into()))?;
        if pairs.iter().any(|p| p.echo_normalized || p.image_scaled) {
            return Err(DatasetError::DegenerateData(
                "statistics must be fitted on raw pairs".into(),
            ));
        }
        let (h, w) = (first.echo.height, first.echo.width);
        if pairs
            .iter()
            .any(|p| (p.echo.height, p.echo.width) != (h, w) || p.image.dims() != first.image.dims())
        {
            return Err(DatasetError::Format("pairs have inconsistent dimensions".into()));
        }
        let mut max = pairs.iter().map(|p| p.echo.max_magnitude()).fold(0.0, f64::max);
        if !(max > 0.0 && max.is_finite()) {
            return Err(DatasetError::DegenerateData(
                "maximum complex magnitude is zero".into(),
            ));
        }
        // hypot(re/m, im/m) can land one ulp off 1 for m = hypot(re, im);
        // fold the residual back into m until the scaled maximum is exactly 1.
        for _ in 0..8 {
            let scaled = pairs
                .iter()
                .flat_map(|p| p.echo.data.chunks_exact(2))
                .map(|c| (c[0] / max).hypot(c[1] / max))
                .fold(0.0, f64::max);
            if scaled == 1.0 {
                break;
            }
            max *= scaled;
        }
        let mut mean = vec![0.0; h * w * 2];
        for p in pairs {
            for (m, &v) in mean.iter_mut().zip(&p.echo.data) {
                *m += v / max;
            }
        }
        let n = pairs.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let image_scale_min = pairs.iter().map(|p| p.image.min()).fold(f64::INFINITY, f64::min);
        let image_scale_max = pairs
            .iter()
            .map(|p| p.image.max())
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            max_complex_magnitude: max,
            echo_height: h,
            echo_width: w,
            per_pixel_mean: mean,
            image_scale_min,
            image_scale_max,
        })
    }

    /// Divides by the dataset maximum magnitude, then subtracts the per-pixel mean.
    pub fn normalize_echo(&self, echo: &EchoTensor) -> Result<EchoTensor, DatasetError> {
        if (echo.height, echo.width) != (self.echo_height, self.echo_width) {
            return Err(DatasetError::Format(format!(
                "echo is {}x{}, statistics expect {}x{}",
                echo.height, echo.width, self.echo_height, self.echo_width
            )));
        }
        let m = self.max_complex_magnitude;
        let data = echo
            .data
            .iter()
            .zip(&self.per_pixel_mean)
            .map(|(&v, &mu)| v / m - mu)
            .collect();
        Ok(EchoTensor {
            height: echo.height,
            width: echo.width,
            data,
        })
    }

    /// Affine map of the training image range onto [0, 1], clamped.
    pub fn scale_image(&self, img: &RealMatrix) -> RealMatrix {
        let (lo, hi) = (self.image_scale_min, self.image_scale_max);
        img.map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
    }
}

/// Normalizes every raw echo. With `stats` given (validation path) they are
/// reused, otherwise they are fitted on `pairs`. Already-normalized echoes are
/// left alone.
pub fn normalize_echoes(
    pairs: Vec<EchoImagePair>,
    stats: Option<&NormStats>,
) -> Result<(Vec<EchoImagePair>, NormStats), DatasetError> {
    if pairs.is_empty() {
        return Err(DatasetError::DegenerateData("empty pair list".into()));
    }
    let stats = match stats {
        Some(s) => s.clone(),
        None => NormStats::fit(&pairs.iter().collect::<Vec<_>>())?,
    };
    let out = pairs
        .into_iter()
        .map(|mut p| {
            if !p.echo_normalized {
                p.echo = stats.normalize_echo(&p.echo)?;
                p.echo_normalized = true;
            }
            Ok(p)
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Ok((out, stats))
}

/// Maps image pixels onto [0, 1] with the statistics' global min/max.
pub fn scale_images(
    pairs: Vec<EchoImagePair>,
    stats: &NormStats,
) -> Result<Vec<EchoImagePair>, DatasetError> {
    if pairs.is_empty() {
        return Err(DatasetError::DegenerateData("empty pair list".into()));
    }
    if !(stats.image_scale_max > stats.image_scale_min) {
        return Err(DatasetError::DegenerateData(format!(
            "image range [{}, {}] is empty",
            stats.image_scale_min, stats.image_scale_max
        )));
    }
    Ok(pairs
        .into_iter()
        .map(|mut p| {
            if !p.image_scaled {
                p.image = stats.scale_image(&p.image);
                p.image_scaled = true;
            }
            p
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// Seeded shuffle of `0..total`; the first `n_val` go to validation. Both
/// index lists are returned sorted.
pub fn split(total: usize, n_val: usize, seed: u64) -> Result<Split, DatasetError> {
    if n_val == 0 || n_val >= total {
        return Err(DatasetError::BadSplit { n_val, total });
    }
    let mut idx: Vec<usize> = (0..total).collect();
    Prng::with_stream(seed, SPLIT_STREAM).shuffle(&mut idx);
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok(Split { train, val })
}

/// SHA-256 of the canonical JSON encoding.
pub fn config_digest<T: Serialize>(cfg: &T) -> [u8; 32] {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    Sha256::digest(&json).into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub radar_digest: String,
    pub rda_digest: String,
    pub pair_count: usize,
    pub echo_dims: (usize, usize),
    pub image_dims: (usize, usize),
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub norm_stats: Option<NormStats>,
    pub record_offsets: Vec<u64>,
}

impl DatasetManifest {
    pub fn new(
        radar: &RadarConfig,
        rda: &RdaConfig,
        pairs: &[EchoImagePair],
        split: Split,
    ) -> Result<Self, DatasetError> {
        let first = pairs
            .first()
            .ok_or_else(|| DatasetError::DegenerateData("empty pair list".into()))?;
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
        all.sort_unstable();
        if all != (0..pairs.len()).collect::<Vec<_>>() {
            return Err(DatasetError::BadSplit {
                n_val: split.val.len(),
                total: pairs.len(),
            });
        }
        Ok(Self {
            version: MANIFEST_VERSION,
            radar_digest: hex::encode(config_digest(radar)),
            rda_digest: hex::encode(config_digest(rda)),
            pair_count: pairs.len(),
            echo_dims: (first.echo.height, first.echo.width),
            image_dims: first.image.dims(),
            train: split.train,
            val: split.val,
            norm_stats: None,
            record_offsets: Vec::new(),
        })
    }

    /// Fails unless the digests match the given configurations.
    pub fn check_configs(&self, radar: &RadarConfig, rda: &RdaConfig) -> Result<(), DatasetError> {
        if self.radar_digest != hex::encode(config_digest(radar)) {
            return Err(DatasetError::Format("radar configuration digest mismatch".into()));
        }
        if self.rda_digest != hex::encode(config_digest(rda)) {
            return Err(DatasetError::Format("RDA configuration digest mismatch".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let m: Self = serde_json::from_slice(&fs::read(path)?)?;
        if m.version != MANIFEST_VERSION {
            return Err(DatasetError::Format(format!("unsupported manifest version {}", m.version)));
        }
        Ok(m)
    }

    fn record_len(&self) -> usize {
        4 + 8 * (self.echo_dims.0 * self.echo_dims.1 * 2 + self.image_dims.0 * self.image_dims.1) + 4
    }
}

fn digest_bytes(hex_digest: &str) -> Result<[u8; 32], DatasetError> {
    let bytes = hex::decode(hex_digest)
        .map_err(|e| DatasetError::Format(format!("bad digest in manifest: {e}")))?;
    bytes
        .try_into()
        .map_err(|_| DatasetError::Format("digest must be 32 bytes".into()))
}

fn label_byte(l: Option<SceneClass>) -> u8 {
    match l {
        None => 0,
        Some(SceneClass::Ridge) => 1,
        Some(SceneClass::River) => 2,
    }
}

/// Writes all pairs and records the byte offset of each into `manifest`.
pub fn write_pairs(
    path: &Path,
    pairs: &[EchoImagePair],
    manifest: &mut DatasetManifest,
) -> Result<(), DatasetError> {
    if pairs.len() != manifest.pair_count {
        return Err(DatasetError::Format(format!(
            "manifest lists {} pairs, got {}",
            manifest.pair_count,
            pairs.len()
        )));
    }
    let (he, we) = manifest.echo_dims;
    let (hi, wi) = manifest.image_dims;
    let mut header = Vec::with_capacity(HEADER_LEN);
    header.extend_from_slice(SARP_MAGIC);
    header.extend_from_slice(&SARP_VERSION.to_le_bytes());
    for d in [he, we, hi, wi] {
        header.extend_from_slice(&(d as u32).to_le_bytes());
    }
    header.extend_from_slice(&(pairs.len() as u64).to_le_bytes());
    header.extend_from_slice(&digest_bytes(&manifest.radar_digest)?);
    header.extend_from_slice(&digest_bytes(&manifest.rda_digest)?);
    let crc = crc32fast::hash(&header);
    header.extend_from_slice(&crc.to_le_bytes());

    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(&header)?;
    let mut offsets = Vec::with_capacity(pairs.len());
    let mut offset = HEADER_LEN as u64;
    let mut rec = Vec::with_capacity(manifest.record_len());
    for p in pairs {
        if (p.echo.height, p.echo.width) != (he, we) || p.image.dims() != (hi, wi) {
            return Err(DatasetError::Format("pair dimensions differ from manifest".into()));
        }
        rec.clear();
        let flags = (if p.echo_normalized { FLAG_ECHO_NORMALIZED } else { 0 })
            | (if p.image_scaled { FLAG_IMAGE_SCALED } else { 0 });
        rec.extend_from_slice(&[label_byte(p.class_label), flags, 0, 0]);
        for v in p.echo.data.iter().chain(p.image.data()) {
            rec.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&rec);
        rec.extend_from_slice(&crc.to_le_bytes());
        out.write_all(&rec)?;
        offsets.push(offset);
        offset += rec.len() as u64;
    }
    out.flush()?;
    manifest.record_offsets = offsets;
    Ok(())
}

fn take<'a>(bytes: &'a [u8], at: &mut usize, n: usize) -> Result<&'a [u8], DatasetError> {
    let end = at
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| DatasetError::Format(format!("file truncated at byte {}", bytes.len())))?;
    let s = &bytes[*at..end];
    *at = end;
    Ok(s)
}

fn u32_at(bytes: &[u8], at: &mut usize) -> Result<u32, DatasetError> {
    Ok(u32::from_le_bytes(take(bytes, at, 4)?.try_into().unwrap()))
}

/// Reads and validates a SARP file against its manifest.
pub fn read_pairs(path: &Path, manifest: &DatasetManifest) -> Result<Vec<EchoImagePair>, DatasetError> {
    let bytes = fs::read(path)?;
    let mut at = 0;
    if take(&bytes, &mut at, 4)? != SARP_MAGIC {
        return Err(DatasetError::Format("not a SARP file".into()));
    }
    let version = u32_at(&bytes, &mut at)?;
    if version != SARP_VERSION {
        return Err(DatasetError::Format(format!("unsupported SARP version {version}")));
    }
    let dims: Vec<usize> = (0..4)
        .map(|_| u32_at(&bytes, &mut at).map(|d| d as usize))
        .collect::<Result<_, _>>()?;
    let count = u64::from_le_bytes(take(&bytes, &mut at, 8)?.try_into().unwrap()) as usize;
    let radar_digest = take(&bytes, &mut at, 32)?.to_vec();
    let rda_digest = take(&bytes, &mut at, 32)?.to_vec();
    let crc_expected = crc32fast::hash(&bytes[..at]);
    if u32_at(&bytes, &mut at)? != crc_expected {
        return Err(DatasetError::Format("header checksum mismatch".into()));
    }
    if (dims[0], dims[1]) != manifest.echo_dims || (dims[2], dims[3]) != manifest.image_dims {
        return Err(DatasetError::Format("dimensions differ from manifest".into()));
    }
    if count != manifest.pair_count {
        return Err(DatasetError::Format(format!(
            "file holds {count} pairs, manifest lists {}",
            manifest.pair_count
        )));
    }
    if radar_digest != digest_bytes(&manifest.radar_digest)? {
        return Err(DatasetError::Format("radar configuration digest mismatch".into()));
    }
    if rda_digest != digest_bytes(&manifest.rda_digest)? {
        return Err(DatasetError::Format("RDA configuration digest mismatch".into()));
    }
    let n_echo = dims[0] * dims[1] * 2;
    let n_img = dims[2] * dims[3];
    let mut pairs = Vec::with_capacity(count);
    for record in 0..count {
        if manifest.record_offsets.get(record) != Some(&(at as u64)) {
            return Err(DatasetError::Format(format!("record {record} offset mismatch")));
        }
        let start = at;
        let head = take(&bytes, &mut at, 4)?;
        let (label, flags) = (head[0], head[1]);
        let payload = take(&bytes, &mut at, 8 * (n_echo + n_img))?;
        let crc_expected = crc32fast::hash(&bytes[start..at]);
        if u32_at(&bytes, &mut at)? != crc_expected {
            return Err(DatasetError::Checksum { record });
        }
        let class_label = match label {
            0 => None,
            1 => Some(SceneClass::Ridge),
            2 => Some(SceneClass::River),
            other => return Err(DatasetError::Format(format!("bad label byte {other}"))),
        };
        let floats: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (echo, image) = floats.split_at(n_echo);
        pairs.push(EchoImagePair {
            echo: EchoTensor {
                height: dims[0],
                width: dims[1],
                data: echo.to_vec(),
            },
            image: RealMatrix::from_vec(dims[2], dims[3], image.to_vec())
                .expect("sized from header"),
            class_label,
            echo_normalized: flags & FLAG_ECHO_NORMALIZED != 0,
            image_scaled: flags & FLAG_IMAGE_SCALED != 0,
        });
    }
    if at != bytes.len() {
        return Err(DatasetError::Format("trailing bytes after last record".into()));
    }
    Ok(pairs)
}

/// Dataset build parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub pairs: usize,
    pub val_pairs: usize,
    #[serde(flatten)]
    pub gen: GenOptions,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            pairs: 512,
            val_pairs: 64,
            gen: GenOptions::default(),
        }
    }
}

/// A normalized dataset with its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub pairs: Vec<EchoImagePair>,
}

pub const PAIRS_FILE: &str = "pairs.sarp";
pub const MANIFEST_FILE: &str = "manifest.json";

impl Dataset {
    /// Generate, split, fit statistics on the training split, then normalize
    /// echoes and scale images of every pair with those statistics.
    pub fn build(
        cfg: &DatasetConfig,
        radar: &RadarConfig,
        rda: &RdaConfig,
        seed: u64,
    ) -> Result<Self, DatasetError> {
        let raw = generate_pairs_with(cfg.pairs, radar, rda, seed, &cfg.gen)?;
        let s = split(raw.len(), cfg.val_pairs, seed)?;
        let stats = NormStats::fit(&s.train.iter().map(|&i| &raw[i]).collect::<Vec<_>>())?;
        let mut manifest = DatasetManifest::new(radar, rda, &raw, s)?;
        let (pairs, _) = normalize_echoes(raw, Some(&stats))?;
        let pairs = scale_images(pairs, &stats)?;
        manifest.norm_stats = Some(stats);
        Ok(Self { manifest, pairs })
    }

    pub fn train(&self) -> Vec<&EchoImagePair> {
        self.manifest.train.iter().map(|&i| &self.pairs[i]).collect()
    }

    pub fn val(&self) -> Vec<&EchoImagePair> {
        self.manifest.val.iter().map(|&i| &self.pairs[i]).collect()
    }

    pub fn norm_stats(&self) -> Result<&NormStats, DatasetError> {
        self.manifest
            .norm_stats
            .as_ref()
            .ok_or_else(|| DatasetError::Format("manifest carries no normalization statistics".into()))
    }

    /// Writes `pairs.sarp` and `manifest.json` into `dir`.
    pub fn save(&mut self, dir: &Path) -> Result<(), DatasetError> {
        fs::create_dir_all(dir)?;
        write_pairs(&dir.join(PAIRS_FILE), &self.pairs, &mut self.manifest)?;
        self.manifest.save(&dir.join(MANIFEST_FILE))
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let manifest = DatasetManifest::load(&dir.join(MANIFEST_FILE))?;
        let pairs = read_pairs(&dir.join(PAIRS_FILE), &manifest)?;
        Ok(Self { manifest, pairs })
    }
}

/// An image with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: RealMatrix,
    pub label: SceneClass,
}

pub fn flip_horizontal(m: &RealMatrix) -> RealMatrix {
    let c = m.cols();
    RealMatrix::from_fn(m.rows(), c, |i, j| m.get(i, c - 1 - j))
}

pub fn flip_vertical(m: &RealMatrix) -> RealMatrix {
    let r = m.rows();
    RealMatrix::from_fn(r, m.cols(), |i, j| m.get(r - 1 - i, j))
}

/// Each image followed by its horizontal, vertical, and double flip.
pub fn augment_flips(images: &[LabeledImage]) -> Vec<LabeledImage> {
    images
        .iter()
        .flat_map(|li| {
            let h = flip_horizontal(&li.image);
            let v = flip_vertical(&li.image);
            let hv = flip_vertical(&h);
            [li.image.clone(), h, v, hv].into_iter().map(|image| LabeledImage {
                image,
                label: li.label,
            })
        })
        .collect()
}
