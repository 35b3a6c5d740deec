//! SSIM, classification accuracy, point-target impulse-response figures,
//! and inference throughput.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Mode, Network, NnError, Tensor4};
use crate::numerics::{magnitude, Complex64, ComplexMatrix, Dft, RealMatrix};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty input set")]
    EmptySet,
    #[error("no distinct peak: max {max} < 10x mean {mean}")]
    NoPeak { max: f64, mean: f64 },
    #[error("bad parameter: {0}")]
    Param(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    /// Separable window weights, normalized to sum to one.
    pub fn weights(&self) -> Vec<f64> {
        let c = (self.window as f64 - 1.0) / 2.0;
        let w: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = w.iter().sum();
        w.into_iter().map(|v| v / s).collect()
    }

    fn validate(&self) -> Result<(), MetricsError> {
        if self.window == 0 || self.sigma <= 0.0 || self.k1 <= 0.0 || self.k2 <= 0.0 || self.dynamic_range <= 0.0 {
            return Err(MetricsError::Param(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Gaussian-weighted sums over every fully contained window ("valid" filtering).
fn filter_valid(img: &[f64], rows: usize, cols: usize, w: &[f64]) -> Vec<f64> {
    let k = w.len();
    let (oh, ow) = (rows + 1 - k, cols + 1 - k);
    let mut horiz = vec![0.0; rows * ow];
    for i in 0..rows {
        for j in 0..ow {
            horiz[i * ow + j] = (0..k).map(|t| w[t] * img[i * cols + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..k).map(|t| w[t] * horiz[(i + t) * ow + j]).sum();
        }
    }
    out
}

/// Mean structural similarity over all window positions.
pub fn ssim(a: &RealMatrix, b: &RealMatrix, p: &SsimParams) -> Result<f64, MetricsError> {
    p.validate()?;
    if a.dims() != b.dims() {
        return Err(MetricsError::ShapeMismatch(format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    let (rows, cols) = a.dims();
    if rows < p.window || cols < p.window {
        return Err(MetricsError::ShapeMismatch(format!(
            "{rows}x{cols} image smaller than the {}-pixel window",
            p.window
        )));
    }
    let w = p.weights();
    let (x, y) = (a.data(), b.data());
    let prod = |f: &dyn Fn(f64, f64) -> f64| -> Vec<f64> { x.iter().zip(y).map(|(&u, &v)| f(u, v)).collect() };
    let mu_x = filter_valid(x, rows, cols, &w);
    let mu_y = filter_valid(y, rows, cols, &w);
    let xx = filter_valid(&prod(&|u, _| u * u), rows, cols, &w);
    let yy = filter_valid(&prod(&|_, v| v * v), rows, cols, &w);
    let xy = filter_valid(&prod(&|u, v| u * v), rows, cols, &w);
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let sx = xx[i] - mx * mx;
            let sy = yy[i] - my * my;
            let sxy = xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * sxy + c2)) / ((mx * mx + my * my + c1) * (sx + sy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

pub fn summarize(values: &[f64]) -> Result<SsimSummary, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(SsimSummary {
        mean,
        std: var.sqrt(),
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        count: values.len(),
    })
}

/// Per-pair SSIM and its summary over matched output/reference images.
pub fn mean_ssim(outputs: &[RealMatrix], references: &[RealMatrix], p: &SsimParams) -> Result<(Vec<f64>, SsimSummary), MetricsError> {
    if outputs.len() != references.len() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} outputs for {} references",
            outputs.len(),
            references.len()
        )));
    }
    let each = outputs
        .iter()
        .zip(references)
        .map(|(a, b)| ssim(a, b, p))
        .collect::<Result<Vec<_>, _>>()?;
    let s = summarize(&each)?;
    Ok((each, s))
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy<S: AsRef<[f64]>>(scores: &[S], labels: &[usize]) -> Result<f64, MetricsError> {
    if scores.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    if scores.len() != labels.len() {
        return Err(MetricsError::ShapeMismatch(format!(
            "{} predictions for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(s, &l)| argmax(s.as_ref()) == l)
        .count();
    Ok(hits as f64 / scores.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointTargetReport {
    pub peak_row: usize,
    pub peak_col: usize,
    /// Peak minus expected position, (rows, cols).
    pub peak_offset: (f64, f64),
    /// Range (column) 3 dB width in input samples.
    pub range_3db_width: f64,
    /// Azimuth (row) 3 dB width in input rows.
    pub azimuth_3db_width: f64,
    /// Highest first sidelobe along range, relative to the peak, in dB.
    pub pslr_db: f64,
}

fn find_peak(mag: &RealMatrix) -> Result<(usize, usize), MetricsError> {
    let (max, mean) = (mag.max(), mag.mean());
    if !(max >= 10.0 * mean) || max <= 0.0 {
        return Err(MetricsError::NoPeak { max, mean });
    }
    Ok(mag.argmax())
}

/// Half-power width around `peak` by linear interpolation of the magnitude
/// profile, in profile samples.
pub fn width_3db(profile: &[f64], peak: usize) -> f64 {
    let level = profile[peak] / std::f64::consts::SQRT_2;
    let crossing = |step: isize| -> f64 {
        let mut i = peak as isize;
        loop {
            let next = i + step;
            if next < 0 || next as usize >= profile.len() {
                return (i - peak as isize).abs() as f64;
            }
            let (a, b) = (profile[i as usize], profile[next as usize]);
            if b < level {
                let frac = (a - level) / (a - b);
                return (i - peak as isize).abs() as f64 + frac;
            }
            i = next;
        }
    };
    crossing(-1) + crossing(1)
}

/// First-sidelobe level relative to the peak in dB: walk down the main lobe
/// to the first null on each side, then up to the next local maximum.
pub fn pslr_db(profile: &[f64], peak: usize) -> f64 {
    let side = |step: isize| -> Option<f64> {
        let at = |i: isize| -> Option<f64> { (i >= 0 && (i as usize) < profile.len()).then(|| profile[i as usize]) };
        let mut i = peak as isize;
        while at(i + step)? <= at(i)? {
            i += step;
        }
        while at(i + step)? >= at(i)? {
            i += step;
        }
        at(i)
    };
    let lobe = [side(-1), side(1)].into_iter().flatten().fold(0.0, f64::max);
    20.0 * (lobe / profile[peak]).log10()
}

/// Band-limited interpolation by zero-padding the spectrum, scaled to keep sample amplitudes.
pub fn fft_upsample(x: &[Complex64], factor: usize) -> Vec<Complex64> {
    let n = x.len();
    let m = n * factor;
    let mut spec = x.to_vec();
    Dft::new(n).forward(&mut spec);
    let mut padded = vec![Complex64::new(0.0, 0.0); m];
    let half = n / 2;
    for k in 0..n {
        let v = spec[k];
        if n % 2 == 0 && k == half {
            // Split the Nyquist bin evenly between both ends.
            padded[half] += v * 0.5;
            padded[m - half] += v * 0.5;
        } else if k < half.max(1) || (n % 2 == 1 && k == half) {
            padded[k] = v;
        } else {
            padded[m - (n - k)] = v;
        }
    }
    Dft::new(m).inverse(&mut padded);
    padded.iter().map(|z| z * factor as f64).collect()
}

/// Impulse-response figures from a single-look complex image. The range row
/// and azimuth column through the peak are upsampled by `upsample` before
/// measuring, so widths below one sample are resolved.
pub fn point_target_analysis(slc: &ComplexMatrix, expected: (f64, f64), upsample: usize) -> Result<PointTargetReport, MetricsError> {
    if upsample == 0 {
        return Err(MetricsError::Param("upsample factor must be >= 1".into()));
    }
    let (pr, pc) = find_peak(&magnitude(slc))?;
    let measure = |line: Vec<Complex64>, centre: usize| -> (Vec<f64>, usize) {
        let fine: Vec<f64> = fft_upsample(&line, upsample).iter().map(|z| z.norm()).collect();
        let lo = (centre * upsample).saturating_sub(upsample);
        let hi = ((centre + 1) * upsample + 1).min(fine.len());
        let peak = (lo..hi).fold(lo, |b, i| if fine[i] > fine[b] { i } else { b });
        (fine, peak)
    };
    let (range, rp) = measure(slc.row(pr).to_vec(), pc);
    let (azimuth, ap) = measure(slc.column(pc), pr);
    let u = upsample as f64;
    Ok(PointTargetReport {
        peak_row: pr,
        peak_col: pc,
        peak_offset: (pr as f64 - expected.0, pc as f64 - expected.1),
        range_3db_width: width_3db(&range, rp) / u,
        azimuth_3db_width: width_3db(&azimuth, ap) / u,
        pslr_db: pslr_db(&range, rp),
    })
}

/// The same figures read directly off a detected image, without interpolation.
pub fn point_target_analysis_detected(img: &RealMatrix, expected: (f64, f64)) -> Result<PointTargetReport, MetricsError> {
    let (pr, pc) = find_peak(img)?;
    let range = img.row(pr).to_vec();
    let azimuth: Vec<f64> = (0..img.rows()).map(|i| img.get(i, pc)).collect();
    Ok(PointTargetReport {
        peak_row: pr,
        peak_col: pc,
        peak_offset: (pr as f64 - expected.0, pc as f64 - expected.1),
        range_3db_width: width_3db(&range, pc),
        azimuth_3db_width: width_3db(&azimuth, pr),
        pslr_db: pslr_db(&range, pc),
    })
}

/// One named network in a chained inference pipeline.
#[derive(Debug)]
pub struct Stage<'a> {
    pub name: &'a str,
    pub net: &'a mut Network,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub name: String,
    /// Median seconds per batch.
    pub median_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub frames_per_second: f64,
    pub median_batch_seconds: f64,
    pub stages: Vec<StageLatency>,
    pub batch_size: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub threads: usize,
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times inference-mode forward passes of `input` through the chained stages.
/// `warmup` untimed passes precede `reps` timed ones.
pub fn throughput_bench(stages: &mut [Stage<'_>], input: &Tensor4, reps: usize, warmup: usize) -> Result<BenchReport, MetricsError> {
    if reps < 3 {
        return Err(MetricsError::Param(format!("{reps} repetitions, need at least 3")));
    }
    if stages.is_empty() || input.n() == 0 {
        return Err(MetricsError::EmptySet);
    }
    for s in stages.iter_mut() {
        s.net.set_mode(Mode::Infer);
    }
    let mut per_stage = vec![Vec::with_capacity(reps); stages.len()];
    let mut totals = Vec::with_capacity(reps);
    for rep in 0..warmup + reps {
        let mut x = input.clone();
        let mut total = 0.0;
        for (k, s) in stages.iter_mut().enumerate() {
            let t = Instant::now();
            x = s.net.forward(&x)?;
            let dt = t.elapsed().as_secs_f64();
            total += dt;
            if rep >= warmup {
                per_stage[k].push(dt);
            }
        }
        std::hint::black_box(&x);
        if rep >= warmup {
            totals.push(total);
        }
    }
    let med = median(&mut totals);
    Ok(BenchReport {
        frames_per_second: input.n() as f64 / med,
        median_batch_seconds: med,
        stages: stages
            .iter()
            .zip(per_stage.iter_mut())
            .map(|(s, v)| StageLatency {
                name: s.name.to_string(),
                median_seconds: median(v),
            })
            .collect(),
        batch_size: input.n(),
        repetitions: reps,
        warmup,
        threads: crate::par::current_threads(),
    })
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "batch {} | reps {} | threads {} | {:.2} fps | {:.3} ms/batch\n",
            self.batch_size,
            self.repetitions,
            self.threads,
            self.frames_per_second,
            self.median_batch_seconds * 1e3
        );
        for st in &self.stages {
            let share = 100.0 * st.median_seconds / self.median_batch_seconds.max(f64::MIN_POSITIVE);
            s += &format!("  {:<12} {:>10.3} ms  {:>5.1}%\n", st.name, st.median_seconds * 1e3, share);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LayerSpec, Shape};
    use crate::numerics::{sinc, Prng};

    fn random_image(rows: usize, cols: usize, seed: u64) -> RealMatrix {
        let mut p = Prng::new(seed);
        RealMatrix::from_fn(rows, cols, |_, _| p.uniform())
    }

    #[test]
    fn window_sums_to_one() {
        let w = SsimParams::default().weights();
        assert_eq!(w.len(), 11);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((w[0] - w[10]).abs() < 1e-18);
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let p = SsimParams::default();
        let a = random_image(20, 24, 1);
        let b = random_image(20, 24, 2);
        assert!((ssim(&a, &a, &p).unwrap() - 1.0).abs() < 1e-12);
        assert!((ssim(&a, &b, &p).unwrap() - ssim(&b, &a, &p).unwrap()).abs() < 1e-12);
        assert!(ssim(&a, &b, &p).unwrap() < 0.5);
    }

    #[test]
    fn ssim_offset_constants_match_closed_form() {
        // Zero variance leaves only the luminance term.
        let p = SsimParams::default();
        let c1 = (p.k1 * p.dynamic_range).powi(2);
        for c in [0.0, 0.1, 0.25, 0.4, 0.5] {
            let a = RealMatrix::filled(16, 16, c);
            let b = RealMatrix::filled(16, 16, c + 0.5);
            let want = (2.0 * c * (c + 0.5) + c1) / (c * c + (c + 0.5) * (c + 0.5) + c1);
            assert!((ssim(&a, &b, &p).unwrap() - want).abs() < 1e-12, "c={c}");
        }
        let a = RealMatrix::filled(16, 16, 0.0);
        let b = RealMatrix::filled(16, 16, 0.5);
        assert!(ssim(&a, &b, &p).unwrap() < 0.5);
    }

    #[test]
    fn ssim_brute_force_window() {
        // Single window position: a plain weighted-statistics computation.
        let p = SsimParams::default();
        let a = random_image(11, 11, 3);
        let b = random_image(11, 11, 4);
        let w = p.weights();
        let wt = |i: usize, j: usize| w[i] * w[j];
        let e = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
            let mut s = 0.0;
            for i in 0..11 {
                for j in 0..11 {
                    s += wt(i, j) * f(i, j);
                }
            }
            s
        };
        let mx = e(&|i, j| a.get(i, j));
        let my = e(&|i, j| b.get(i, j));
        let vx = e(&|i, j| (a.get(i, j) - mx).powi(2));
        let vy = e(&|i, j| (b.get(i, j) - my).powi(2));
        let cxy = e(&|i, j| (a.get(i, j) - mx) * (b.get(i, j) - my));
        let (c1, c2) = (1e-4, 9e-4);
        let want = (2.0 * mx * my + c1) * (2.0 * cxy + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        assert!((ssim(&a, &b, &p).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn ssim_errors() {
        let p = SsimParams::default();
        let a = random_image(12, 12, 0);
        assert!(matches!(ssim(&a, &random_image(12, 13, 0), &p), Err(MetricsError::ShapeMismatch(_))));
        assert!(ssim(&random_image(8, 8, 0), &random_image(8, 8, 1), &p).is_err());
        assert!(matches!(mean_ssim(&[], &[], &p), Err(MetricsError::EmptySet)));
    }

    #[test]
    fn mean_ssim_identical_sets() {
        let p = SsimParams::default();
        let set: Vec<RealMatrix> = (0..4).map(|s| random_image(12, 12, s)).collect();
        let (each, s) = mean_ssim(&set, &set, &p).unwrap();
        assert_eq!(each.len(), 4);
        assert!((s.mean - 1.0).abs() < 1e-12 && s.std < 1e-12);
    }

    #[test]
    fn accuracy_cases() {
        let scores = vec![vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.4]];
        assert_eq!(accuracy(&scores, &[0, 1, 0]).unwrap(), 1.0);
        assert!((accuracy(&scores, &[0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(accuracy::<Vec<f64>>(&[], &[]), Err(MetricsError::EmptySet)));
        assert!(accuracy(&scores, &[0]).is_err());
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn random_guessing_is_half() {
        let mut p = Prng::new(21);
        let n = 10_000;
        let scores: Vec<Vec<f64>> = (0..n).map(|_| vec![p.uniform(), p.uniform()]).collect();
        let labels: Vec<usize> = (0..n).map(|_| p.below(2)).collect();
        let acc = accuracy(&scores, &labels).unwrap();
        assert!((acc - 0.5).abs() < 0.02, "{acc}");
    }

    fn sinc_profile(n: usize, centre: f64, width: f64) -> Vec<Complex64> {
        (0..n)
            .map(|i| Complex64::new(sinc((i as f64 - centre) / width), 0.0))
            .collect()
    }

    #[test]
    fn fft_upsample_keeps_samples() {
        let mut p = Prng::new(5);
        for n in [16usize, 17] {
            let x: Vec<Complex64> = (0..n).map(|_| Complex64::new(p.normal(), p.normal())).collect();
            let up = fft_upsample(&x, 4);
            for (i, v) in x.iter().enumerate() {
                assert!((up[4 * i] - v).norm() < 1e-10, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn sinc_response_figures() {
        // Unweighted sinc: 3 dB width 0.886 of the null spacing, first sidelobe -13.26 dB.
        let n = 64;
        let slc = ComplexMatrix::from_fn(n, n, |i, j| {
            let r = sinc_profile(n, 30.3, 2.0)[j];
            let a = sinc_profile(n, 31.0, 3.0)[i];
            r * a
        });
        let rep = point_target_analysis(&slc, (31.0, 30.0), 16).unwrap();
        assert_eq!((rep.peak_row, rep.peak_col), (31, 30));
        assert!((rep.range_3db_width - 0.886 * 2.0).abs() < 0.01, "{}", rep.range_3db_width);
        assert!((rep.azimuth_3db_width - 0.886 * 3.0).abs() < 0.01, "{}", rep.azimuth_3db_width);
        assert!((rep.pslr_db + 13.26).abs() < 0.1, "{}", rep.pslr_db);
    }

    #[test]
    fn no_peak_in_flat_image() {
        let slc = ComplexMatrix::from_fn(16, 16, |_, _| Complex64::new(1.0, 0.0));
        assert!(matches!(point_target_analysis(&slc, (0.0, 0.0), 4), Err(MetricsError::NoPeak { .. })));
        let flat = RealMatrix::filled(8, 8, 2.0);
        assert!(point_target_analysis_detected(&flat, (0.0, 0.0)).is_err());
    }

    #[test]
    fn detected_width_on_triangle() {
        let img = RealMatrix::from_fn(33, 33, |i, j| {
            let t = |k: usize| (1.0 - (k as f64 - 16.0).abs() / 4.0).max(0.0);
            t(i) * t(j) * 100.0
        });
        let rep = point_target_analysis_detected(&img, (16.0, 16.0)).unwrap();
        // Triangle of half-base 4 drops to 1/sqrt(2) at 4 * (1 - 1/sqrt(2)) on each side.
        let want = 8.0 * (1.0 - std::f64::consts::FRAC_1_SQRT_2);
        assert!((rep.range_3db_width - want).abs() < 1e-12);
        assert_eq!(rep.peak_offset, (0.0, 0.0));
    }

    #[test]
    fn bench_reports_stages() {
        let mut a = Network::new(Shape::flat(8), vec![LayerSpec::Dense { units: 8 }], 0).unwrap();
        let mut b = Network::new(Shape::flat(8), vec![LayerSpec::Dense { units: 2 }], 1).unwrap();
        let x = Tensor4::zeros(4, Shape::flat(8));
        let mut stages = [Stage { name: "a", net: &mut a }, Stage { name: "b", net: &mut b }];
        let r = throughput_bench(&mut stages, &x, 3, 1).unwrap();
        assert!(r.frames_per_second > 0.0 && r.frames_per_second.is_finite());
        assert_eq!(r.stages.len(), 2);
        assert!(r.to_table().contains("fps"));
        assert!(throughput_bench(&mut stages, &x, 2, 0).is_err());
    }
}
