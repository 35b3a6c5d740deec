//! Range Doppler image formation.
//!
//! Order of operations: range matched filter per row, azimuth FFT per column,
//! RCMC interpolation along each range-Doppler row, azimuth matched filter per
//! column, inverse azimuth FFT, magnitude, multilook, Gaussian smoothing, crop.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{
    dft_axis, kaiser, magnitude, next_pow2, sinc, Axis, Complex64, ComplexMatrix, Dft, RealMatrix,
};
use crate::par;
use crate::sim::{lfm_chirp, RadarConfig, RawEcho, SimError, SPEED_OF_LIGHT};

/// Kaiser shape parameter of the RCMC interpolation kernel.
const RCMC_KAISER_BETA: f64 = 6.0;

#[derive(Debug, Error)]
pub enum RdaError {
    #[error("invalid RDA configuration: {0}")]
    InvalidConfig(String),
    #[error("{looks} looks do not divide {rows} azimuth rows")]
    LooksMismatch { looks: usize, rows: usize },
    #[error("crop {crop:?} exceeds {rows}x{cols} image")]
    CropOutOfBounds {
        crop: Crop,
        rows: usize,
        cols: usize,
    },
    #[error("echo is {got:?} but the radar configuration expects {want:?}")]
    EchoShape {
        got: (usize, usize),
        want: (usize, usize),
    },
    #[error(transparent)]
    Radar(#[from] SimError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crop {
    pub row0: usize,
    pub col0: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RdaConfig {
    pub radar: RadarConfig,
    pub rcmc_kernel_taps: usize,
    pub multilook_looks: usize,
    pub smoothing_sigma: f64,
    /// Applied after multilooking, in output pixel coordinates.
    pub crop: Option<Crop>,
}

impl Default for RdaConfig {
    fn default() -> Self {
        Self {
            radar: RadarConfig::default(),
            rcmc_kernel_taps: 8,
            multilook_looks: 1,
            smoothing_sigma: 0.75,
            crop: None,
        }
    }
}

impl RdaConfig {
    /// Desk-scale training oracle: 4 azimuth looks and the central quarter of
    /// the range swath, giving `n_azimuth/4` x `n_range/4` images.
    pub fn desk(radar: RadarConfig) -> Self {
        let looks = 4;
        let crop = Crop {
            row0: 0,
            col0: 3 * radar.n_range / 8,
            height: radar.n_azimuth / looks,
            width: radar.n_range / 4,
        };
        Self {
            radar,
            multilook_looks: looks,
            crop: Some(crop),
            ..Self::default()
        }
    }

    /// Plain single-look, unsmoothed, uncropped focusing.
    pub fn single_look(radar: RadarConfig) -> Self {
        Self {
            radar,
            smoothing_sigma: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), RdaError> {
        self.radar.validate()?;
        if self.rcmc_kernel_taps < 4 || self.rcmc_kernel_taps % 2 != 0 {
            return Err(RdaError::InvalidConfig(format!(
                "rcmc_kernel_taps must be even and >= 4, got {}",
                self.rcmc_kernel_taps
            )));
        }
        if self.multilook_looks == 0 {
            return Err(RdaError::InvalidConfig("multilook_looks must be >= 1".into()));
        }
        if !(self.smoothing_sigma.is_finite() && self.smoothing_sigma >= 0.0) {
            return Err(RdaError::InvalidConfig(format!(
                "smoothing_sigma must be >= 0, got {}",
                self.smoothing_sigma
            )));
        }
        Ok(())
    }

    /// Output image dimensions (rows, cols) after multilook and crop.
    pub fn output_dims(&self) -> (usize, usize) {
        match self.crop {
            Some(c) => (c.height, c.width),
            None => (
                self.radar.n_azimuth / self.multilook_looks.max(1),
                self.radar.n_range,
            ),
        }
    }

    /// Where a target at (`r`, `x`) lands in the output image, fractional (row, col).
    pub fn predicted_pixel(&self, r: f64, x: f64) -> (f64, f64) {
        let row = self.radar.row_of_azimuth(x) / self.multilook_looks as f64;
        let col = self.radar.col_of_range(r);
        match self.crop {
            Some(c) => (row - c.row0 as f64, col - c.col0 as f64),
            None => (row, col),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PixelScale {
    RawMagnitude,
    UnitScaled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocusedImage {
    pub pixels: RealMatrix,
    pub scale: PixelScale,
}

impl FocusedImage {
    /// Divides by the image maximum; an all-zero image stays zero.
    pub fn to_unit_scaled(&self) -> FocusedImage {
        let max = self.pixels.max();
        let pixels = if max > 0.0 {
            self.pixels.map(|v| (v / max).clamp(0.0, 1.0))
        } else {
            self.pixels.map(|_| 0.0)
        };
        FocusedImage {
            pixels,
            scale: PixelScale::UnitScaled,
        }
    }
}

/// Doppler frequency of DFT bin `k` out of `n` at sampling rate `prf`.
pub fn doppler_frequency(k: usize, n: usize, prf: f64) -> f64 {
    let k = if k < n.div_ceil(2) {
        k as f64
    } else {
        k as f64 - n as f64
    };
    k * prf / n as f64
}

fn check_echo(e: &RawEcho) -> Result<(), RdaError> {
    let want = (e.config.n_azimuth, e.config.n_range);
    if e.samples.dims() != want {
        return Err(RdaError::EchoShape {
            got: e.samples.dims(),
            want,
        });
    }
    Ok(())
}

/// Correlates every row with the transmitted chirp by frequency-domain
/// multiplication with the conjugate chirp spectrum. A target whose echo
/// starts at fractional delay `d - N/2` compresses to column `d`.
pub fn range_compress(e: &RawEcho) -> Result<ComplexMatrix, RdaError> {
    check_echo(e)?;
    let cfg = &e.config;
    let chirp = lfm_chirp(cfg);
    let half = chirp.len() / 2;
    let cols = cfg.n_range;
    let nfft = next_pow2(cols + chirp.len());
    let plan = Dft::new(nfft);

    // Reference placed circularly so its zero-delay sample sits at index 0.
    let mut reference = vec![Complex64::new(0.0, 0.0); nfft];
    for (k, &s) in chirp.iter().enumerate() {
        let idx = (k as isize - half as isize).rem_euclid(nfft as isize) as usize;
        reference[idx] = s;
    }
    plan.forward(&mut reference);
    let filter: Vec<Complex64> = reference.iter().map(|z| z.conj()).collect();

    let mut out = e.samples.clone();
    par::for_each_chunk_mut(out.data_mut(), cols, |_, row| {
        let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
        buf[..cols].copy_from_slice(row);
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.scratch_len()];
        plan.forward_with_scratch(&mut buf, &mut scratch);
        for (b, h) in buf.iter_mut().zip(&filter) {
            *b *= h;
        }
        plan.inverse_with_scratch(&mut buf, &mut scratch);
        row.copy_from_slice(&buf[..cols]);
    });
    Ok(out)
}

/// Forward DFT of every column, into the range-Doppler domain.
pub fn azimuth_transform(m: &ComplexMatrix) -> ComplexMatrix {
    dft_axis(m, Axis::Cols, false)
}

/// Range migration at Doppler `f` for reference range `r_ref`, in range samples.
pub fn migration_samples(radar: &RadarConfig, r_ref: f64, f: f64) -> f64 {
    let v = radar.platform_velocity;
    let delta_r = radar.wavelength.powi(2) * r_ref * f * f / (8.0 * v * v);
    delta_r * 2.0 * radar.range_sample_rate / SPEED_OF_LIGHT
}

/// Reads `row` at fractional position `pos` with a `taps`-point
/// Kaiser-windowed sinc normalized to unit DC gain. Samples outside the row
/// are zero. Integer positions return the sample itself.
pub fn sinc_interpolate(row: &[Complex64], pos: f64, taps: usize) -> Complex64 {
    let base = pos.floor();
    let frac = pos - base;
    let base = base as isize;
    let zero = Complex64::new(0.0, 0.0);
    if frac == 0.0 {
        return usize::try_from(base)
            .ok()
            .and_then(|b| row.get(b).copied())
            .unwrap_or(zero);
    }
    let half = (taps / 2) as isize;
    let mut acc = zero;
    let mut wsum = 0.0;
    for k in (1 - half)..=half {
        let d = frac - k as f64;
        let w = sinc(d) * kaiser(d / half as f64, RCMC_KAISER_BETA);
        wsum += w;
        let idx = base + k;
        if idx >= 0 && (idx as usize) < row.len() {
            acc += row[idx as usize] * w;
        }
    }
    acc / wsum
}

/// Straightens range trajectories: each range-Doppler row is resampled at
/// `j + delta(f)` where `delta` is the migration at the swath-center range.
pub fn rcmc(m: &ComplexMatrix, cfg: &RdaConfig) -> ComplexMatrix {
    let radar = &cfg.radar;
    let (rows, cols) = m.dims();
    let r_ref = radar.center_range();
    let taps = cfg.rcmc_kernel_taps;
    let mut out = m.clone();
    par::for_each_chunk_mut(out.data_mut(), cols, |k, row| {
        let f = doppler_frequency(k, rows, radar.prf);
        let shift = migration_samples(radar, r_ref, f);
        if shift == 0.0 {
            return;
        }
        let src = m.row(k);
        for (j, o) in row.iter_mut().enumerate() {
            *o = sinc_interpolate(src, j as f64 + shift, taps);
        }
    });
    out
}

/// Applies `exp(-j pi f^2 / Ka)` with `Ka = 2 v^2 / (lambda R0)` per column
/// (`R0` being that column's own range), then inverse-transforms the columns.
pub fn azimuth_compress(m: &ComplexMatrix, cfg: &RdaConfig) -> ComplexMatrix {
    let radar = &cfg.radar;
    let (rows, cols) = m.dims();
    let mut filtered = m.clone();
    let inv_ka: Vec<f64> = (0..cols)
        .map(|j| 1.0 / radar.doppler_rate(radar.range_of_col(j as f64)))
        .collect();
    par::for_each_chunk_mut(filtered.data_mut(), cols, |k, row| {
        let f = doppler_frequency(k, rows, radar.prf);
        for (z, ik) in row.iter_mut().zip(&inv_ka) {
            *z *= Complex64::from_polar(1.0, -PI * f * f * ik);
        }
    });
    dft_axis(&filtered, Axis::Cols, true)
}

/// Non-overlapping azimuth averaging of power: `sqrt(mean(|x|^2))` over each
/// group of `looks` consecutive rows.
pub fn multilook(img: &RealMatrix, looks: usize) -> Result<RealMatrix, RdaError> {
    let (rows, cols) = img.dims();
    if looks == 0 || rows % looks != 0 {
        return Err(RdaError::LooksMismatch { looks, rows });
    }
    if looks == 1 {
        return Ok(img.clone());
    }
    Ok(RealMatrix::from_fn(rows / looks, cols, |i, j| {
        let p: f64 = (0..looks).map(|l| img.get(i * looks + l, j).powi(2)).sum();
        (p / looks as f64).sqrt()
    }))
}

/// Normalized 1-D Gaussian taps of radius `ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Half-sample symmetric reflection of `i` into `0..n` (`d c b a | a b c d`).
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Separable Gaussian blur with reflected edges.
pub fn gaussian_smooth(img: &RealMatrix, sigma: f64) -> RealMatrix {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (rows, cols) = img.dims();
    let along_rows = RealMatrix::from_fn(rows, cols, |i, j| {
        k.iter()
            .enumerate()
            .map(|(t, w)| w * img.get(i, reflect(j as isize + t as isize - r, cols)))
            .sum()
    });
    RealMatrix::from_fn(rows, cols, |i, j| {
        k.iter()
            .enumerate()
            .map(|(t, w)| w * along_rows.get(reflect(i as isize + t as isize - r, rows), j))
            .sum()
    })
}

/// Single-look complex image: every step up to and including the inverse
/// azimuth FFT.
pub fn focus_slc(e: &RawEcho, cfg: &RdaConfig) -> Result<ComplexMatrix, RdaError> {
    cfg.validate()?;
    let rc = range_compress(e)?;
    let rd = azimuth_transform(&rc);
    let corrected = rcmc(&rd, cfg);
    Ok(azimuth_compress(&corrected, cfg))
}

/// Magnitude, multilook, smoothing, and crop applied to a focused SLC.
pub fn detect(slc: &ComplexMatrix, cfg: &RdaConfig) -> Result<FocusedImage, RdaError> {
    let looked = multilook(&magnitude(slc), cfg.multilook_looks)?;
    let smooth = gaussian_smooth(&looked, cfg.smoothing_sigma);
    let pixels = match cfg.crop {
        Some(c) => {
            if c.row0 + c.height > smooth.rows() || c.col0 + c.width > smooth.cols() {
                return Err(RdaError::CropOutOfBounds {
                    crop: c,
                    rows: smooth.rows(),
                    cols: smooth.cols(),
                });
            }
            smooth.window(c.row0, c.col0, c.height, c.width)
        }
        None => smooth,
    };
    Ok(FocusedImage {
        pixels,
        scale: PixelScale::RawMagnitude,
    })
}

/// Full pipeline from raw echo to a raw-magnitude focused image.
pub fn form_image(e: &RawEcho, cfg: &RdaConfig) -> Result<FocusedImage, RdaError> {
    let slc = focus_slc(e, cfg)?;
    detect(&slc, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{dft_direct, Prng};
    use crate::sim::{synthesize_echo, Scene};

    fn point_echo(cfg: &RadarConfig, r: f64, x: f64) -> RawEcho {
        synthesize_echo(cfg, &Scene::single(r, x, 1.0), &mut Prng::new(0), 0.0).unwrap()
    }

    #[test]
    fn zero_echo_stays_zero() {
        let cfg = RdaConfig::default();
        let e = RawEcho {
            samples: ComplexMatrix::zeros(128, 128),
            config: cfg.radar.clone(),
        };
        let img = form_image(&e, &cfg).unwrap();
        assert!(img.pixels.data().iter().all(|&v| v == 0.0));
        let az = azimuth_compress(&ComplexMatrix::zeros(16, 8), &cfg);
        assert!(az.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn range_compression_concentrates_energy() {
        let radar = RadarConfig::default();
        let r = radar.center_range();
        let e = point_echo(&radar, r, 0.0);
        let rc = range_compress(&e).unwrap();
        let row = radar.n_azimuth / 2;
        let ratio = |v: &[Complex64]| {
            let total: f64 = v.iter().map(|z| z.norm_sqr()).sum();
            let peak = v.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
            peak / total
        };
        let before = ratio(e.samples.row(row));
        let after = ratio(rc.row(row));
        assert!(after >= 50.0 * before, "{after} vs {before}");
        let peak = rc
            .row(row)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert_eq!(peak, radar.n_range / 2);
    }

    #[test]
    fn two_targets_three_resolution_cells_apart_resolve() {
        let radar = RadarConfig::default();
        let res = SPEED_OF_LIGHT / (2.0 * radar.bandwidth());
        let r0 = radar.center_range() - 1.5 * res;
        let scene = Scene {
            targets: vec![
                crate::sim::Target { r: r0, x: 0.0, sigma: 1.0 },
                crate::sim::Target { r: r0 + 3.0 * res, x: 0.0, sigma: 1.0 },
            ],
            class_label: None,
        };
        let e = synthesize_echo(&radar, &scene, &mut Prng::new(0), 0.0).unwrap();
        let rc = range_compress(&e).unwrap();
        let prof: Vec<f64> = rc.row(radar.n_azimuth / 2).iter().map(|z| z.norm()).collect();
        let c1 = radar.col_of_range(r0).round() as usize;
        let c2 = radar.col_of_range(r0 + 3.0 * res).round() as usize;
        let p1 = prof[c1 - 1..=c1 + 1].iter().copied().fold(0.0, f64::max);
        let p2 = prof[c2 - 1..=c2 + 1].iter().copied().fold(0.0, f64::max);
        let valley = prof[c1 + 1..c2].iter().copied().fold(f64::INFINITY, f64::min);
        let db = |a: f64, b: f64| 20.0 * (a / b).log10();
        assert!(db(p1, valley) >= 3.0 && db(p2, valley) >= 3.0);
    }

    #[test]
    fn azimuth_transform_matches_direct_dft() {
        let mut p = Prng::new(4);
        let m = ComplexMatrix::from_fn(16, 16, |_, _| Complex64::new(p.normal(), p.normal()));
        let f = azimuth_transform(&m);
        for j in 0..16 {
            let oracle = dft_direct(&m.column(j), false);
            for i in 0..16 {
                assert!((f.get(i, j) - oracle[i]).norm() < 1e-9);
            }
        }
        let back = dft_axis(&f, Axis::Cols, true);
        for (a, b) in back.data().iter().zip(m.data()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn rcmc_leaves_zero_doppler_row() {
        let cfg = RdaConfig::default();
        let mut p = Prng::new(8);
        let m = ComplexMatrix::from_fn(8, 32, |_, _| Complex64::new(p.normal(), p.normal()));
        let out = rcmc(&m, &cfg);
        for (a, b) in out.row(0).iter().zip(m.row(0)) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn half_sample_shift_of_sinusoid() {
        let n = 64;
        let omega = 2.0 * PI * 0.08;
        let row: Vec<Complex64> = (0..n)
            .map(|j| Complex64::from_polar(1.0, omega * j as f64))
            .collect();
        for j in 8..n - 8 {
            let got = sinc_interpolate(&row, j as f64 + 0.5, 8);
            let want = Complex64::from_polar(1.0, omega * (j as f64 + 0.5));
            assert!((got - want).norm() < 0.01, "j={j}: {}", (got - want).norm());
        }
    }

    #[test]
    fn azimuth_filter_preserves_column_energy() {
        let cfg = RdaConfig::default();
        let mut p = Prng::new(12);
        let m = ComplexMatrix::from_fn(32, 8, |_, _| Complex64::new(p.normal(), p.normal()));
        // Undo the inverse transform to look at the filtered spectrum alone.
        let filtered = dft_axis(&azimuth_compress(&m, &cfg), Axis::Cols, false);
        for j in 0..8 {
            let a: f64 = m.column(j).iter().map(|z| z.norm_sqr()).sum();
            let b: f64 = filtered.column(j).iter().map(|z| z.norm_sqr()).sum();
            assert!((a - b).abs() / a < 1e-9);
        }
    }

    #[test]
    fn multilook_contracts() {
        let mut p = Prng::new(2);
        let img = RealMatrix::from_fn(64, 64, |_, _| p.normal());
        assert_eq!(multilook(&img, 1).unwrap(), img);
        let c = RealMatrix::filled(8, 4, 3.0);
        let out = multilook(&c, 4).unwrap();
        assert_eq!(out.dims(), (2, 4));
        assert!(out.data().iter().all(|&v| (v - 3.0).abs() < 1e-15));
        assert!(matches!(
            multilook(&c, 3),
            Err(RdaError::LooksMismatch { looks: 3, rows: 8 })
        ));
    }

    #[test]
    fn multilook_reduces_power_variance() {
        // Averaging 4 independent exponential power samples quarters their variance.
        let mut p = Prng::new(21);
        let img = RealMatrix::from_fn(4096, 16, |_, _| p.normal().hypot(p.normal()));
        let power = |m: &RealMatrix| m.map(|v| v * v);
        let var = |m: &RealMatrix| {
            let mu = m.mean();
            m.data().iter().map(|v| (v - mu).powi(2)).sum::<f64>() / m.data().len() as f64
        };
        let v_in = var(&power(&img));
        let v_out = var(&power(&multilook(&img, 4).unwrap()));
        let ratio = v_out / (v_in / 4.0);
        assert!((0.8..=1.2).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn gaussian_smoothing_contracts() {
        let mut p = Prng::new(3);
        let img = RealMatrix::from_fn(9, 9, |_, _| p.uniform());
        assert_eq!(gaussian_smooth(&img, 0.0), img);
        let c = RealMatrix::filled(7, 5, 0.25);
        assert!(gaussian_smooth(&c, 0.75)
            .data()
            .iter()
            .all(|&v| (v - 0.25).abs() < 1e-15));
        let mut imp = RealMatrix::zeros(11, 11);
        imp.set(5, 5, 1.0);
        let out = gaussian_smooth(&imp, 0.75);
        let sigma: f64 = 0.75;
        let norm1: f64 = (-3..=3).map(|k: i32| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp()).sum();
        assert!((out.get(5, 5) - 1.0 / (norm1 * norm1)).abs() < 1e-12);
        assert!((out.data().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect(-1, 4), 0);
        assert_eq!(reflect(-2, 4), 1);
        assert_eq!(reflect(4, 4), 3);
        assert_eq!(reflect(5, 4), 2);
        assert_eq!(reflect(9, 2), 1);
    }

    #[test]
    fn single_target_focuses_to_one_peak() {
        let cfg = RdaConfig::desk(RadarConfig::default());
        let r = cfg.radar.center_range() + 10.0 * cfg.radar.range_spacing();
        let x = 6.0 * cfg.radar.azimuth_spacing();
        let img = form_image(&point_echo(&cfg.radar, r, x), &cfg).unwrap();
        let (pr, pc) = img.pixels.argmax();
        let (er, ec) = cfg.predicted_pixel(r, x);
        assert!(
            (pr as f64 - er).abs() <= 1.0 && (pc as f64 - ec).abs() <= 1.0,
            "peak ({pr},{pc}), predicted ({er},{ec})"
        );
        let peak = img.pixels.max();
        let (rows, cols) = img.pixels.dims();
        let mut maxima = 0;
        for i in 0..rows {
            for j in 0..cols {
                let v = img.pixels.get(i, j);
                if v <= 0.5 * peak {
                    continue;
                }
                let is_max = (-1..=1).all(|di: isize| {
                    (-1..=1).all(|dj: isize| {
                        let (a, b) = (i as isize + di, j as isize + dj);
                        if (di, dj) == (0, 0) || a < 0 || b < 0 || a >= rows as isize || b >= cols as isize {
                            return true;
                        }
                        img.pixels.get(a as usize, b as usize) <= v
                    })
                });
                if is_max {
                    maxima += 1;
                }
            }
        }
        assert_eq!(maxima, 1);
    }

    #[test]
    fn form_image_is_deterministic_and_crops() {
        let cfg = RdaConfig::desk(RadarConfig::default());
        let e = point_echo(&cfg.radar, cfg.radar.center_range(), 0.0);
        let a = form_image(&e, &cfg).unwrap();
        let b = form_image(&e, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.pixels.dims(), (32, 32));
        let bad = RdaConfig {
            crop: Some(Crop { row0: 0, col0: 120, height: 4, width: 16 }),
            ..RdaConfig::default()
        };
        assert!(matches!(form_image(&e, &bad), Err(RdaError::CropOutOfBounds { .. })));
    }

    #[test]
    fn config_validation() {
        for taps in [3, 5, 2] {
            let cfg = RdaConfig { rcmc_kernel_taps: taps, ..RdaConfig::default() };
            assert!(cfg.validate().is_err());
        }
        let cfg = RdaConfig { smoothing_sigma: -1.0, ..RdaConfig::default() };
        assert!(cfg.validate().is_err());
    }
}
