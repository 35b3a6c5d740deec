//! Point-target raw echo simulation.
//!
//! Geometry: broadside stripmap, straight flight path along x at constant
//! velocity. Row `i` of an echo is slow time `(i - n_azimuth/2) / prf`, so the
//! scene azimuth origin sits on the middle row. Column `j` is fast time
//! `2 * near_range / c + j / fs`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Complex64, ComplexMatrix, Prng};
use crate::par;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid radar configuration: {0}")]
    InvalidConfig(String),
    #[error("target {index} at range {range:.1} m lies outside the swath [{near:.1}, {far:.1})")]
    TargetOutOfSwath {
        index: usize,
        range: f64,
        near: f64,
        far: f64,
    },
    #[error("invalid target {index}: {reason}")]
    InvalidTarget { index: usize, reason: String },
    #[error("scene file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene file: {0}")]
    Json(#[from] serde_json::Error),
}

/// Imaging geometry and waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarConfig {
    /// Carrier wavelength, m.
    pub wavelength: f64,
    /// LFM chirp rate, Hz/s.
    pub chirp_rate: f64,
    /// Pulse length, s.
    pub pulse_duration: f64,
    /// Complex range sampling rate, Hz.
    pub range_sample_rate: f64,
    pub prf: f64,
    /// m/s
    pub platform_velocity: f64,
    /// Slant range of column 0, m.
    pub near_range: f64,
    /// Along-track antenna length, m.
    pub antenna_length: f64,
    pub n_range: usize,
    pub n_azimuth: usize,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            wavelength: 0.0566,
            chirp_rate: 30e6 / 2e-6,
            pulse_duration: 2e-6,
            range_sample_rate: 36e6,
            prf: 400.0,
            platform_velocity: 150.0,
            near_range: 9_500.0,
            antenna_length: 2.0,
            n_range: 128,
            n_azimuth: 128,
        }
    }
}

impl RadarConfig {
    /// |K| * Tp.
    pub fn bandwidth(&self) -> f64 {
        self.chirp_rate.abs() * self.pulse_duration
    }

    /// Number of samples in the transmitted pulse, round(Tp * fs).
    pub fn chirp_len(&self) -> usize {
        (self.pulse_duration * self.range_sample_rate).round() as usize
    }

    /// Slant-range distance between adjacent columns.
    pub fn range_spacing(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.range_sample_rate)
    }

    /// Along-track distance between adjacent rows.
    pub fn azimuth_spacing(&self) -> f64 {
        self.platform_velocity / self.prf
    }

    pub fn far_range(&self) -> f64 {
        self.near_range + self.n_range as f64 * self.range_spacing()
    }

    /// Slant range of the swath center column.
    pub fn center_range(&self) -> f64 {
        self.range_of_col(self.n_range as f64 / 2.0)
    }

    pub fn range_of_col(&self, col: f64) -> f64 {
        self.near_range + col * self.range_spacing()
    }

    /// Fractional column where a target at slant range `r` compresses.
    pub fn col_of_range(&self, r: f64) -> f64 {
        (r - self.near_range) / self.range_spacing()
    }

    pub fn slow_time(&self, row: usize) -> f64 {
        (row as f64 - (self.n_azimuth / 2) as f64) / self.prf
    }

    /// Fractional row where a target at azimuth `x` compresses.
    pub fn row_of_azimuth(&self, x: f64) -> f64 {
        (self.n_azimuth / 2) as f64 + x / self.azimuth_spacing()
    }

    pub fn azimuth_of_row(&self, row: f64) -> f64 {
        (row - (self.n_azimuth / 2) as f64) * self.azimuth_spacing()
    }

    /// Azimuth FM rate 2 v^2 / (lambda R0).
    pub fn doppler_rate(&self, r0: f64) -> f64 {
        2.0 * self.platform_velocity.powi(2) / (self.wavelength * r0)
    }

    /// Along-track footprint of the 3 dB beam at range `r0`.
    pub fn aperture_length(&self, r0: f64) -> f64 {
        self.wavelength * r0 / self.antenna_length
    }

    /// Doppler bandwidth of the 3 dB beam, 2v/La.
    pub fn beam_doppler_bandwidth(&self) -> f64 {
        2.0 * self.platform_velocity / self.antenna_length
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("wavelength", self.wavelength),
            ("pulse_duration", self.pulse_duration),
            ("range_sample_rate", self.range_sample_rate),
            ("prf", self.prf),
            ("platform_velocity", self.platform_velocity),
            ("near_range", self.near_range),
            ("antenna_length", self.antenna_length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.chirp_rate.is_finite() && self.chirp_rate != 0.0) {
            return Err(SimError::InvalidConfig("chirp_rate must be nonzero".into()));
        }
        if self.n_range == 0 || self.n_azimuth == 0 {
            return Err(SimError::InvalidConfig("sample counts must be positive".into()));
        }
        if self.chirp_len() == 0 {
            return Err(SimError::InvalidConfig("pulse shorter than one sample".into()));
        }
        if self.range_sample_rate < 1.1 * self.bandwidth() {
            return Err(SimError::InvalidConfig(format!(
                "range sampling {:.3e} Hz below 1.1 x bandwidth {:.3e} Hz",
                self.range_sample_rate,
                self.bandwidth()
            )));
        }
        if self.prf < 1.1 * self.beam_doppler_bandwidth() {
            return Err(SimError::InvalidConfig(format!(
                "prf {:.1} Hz below 1.1 x beam Doppler bandwidth {:.1} Hz",
                self.prf,
                self.beam_doppler_bandwidth()
            )));
        }
        Ok(())
    }

    /// Configuration describing the same scene sampled `factor` times more coarsely.
    pub fn decimated(&self, factor: usize) -> Self {
        let f = factor.max(1) as f64;
        Self {
            range_sample_rate: self.range_sample_rate / f,
            prf: self.prf / f,
            n_range: self.n_range / factor.max(1),
            n_azimuth: self.n_azimuth / factor.max(1),
            ..self.clone()
        }
    }
}

/// Transmitted LFM pulse, `s[n] = exp(j pi K tau_n^2)` with
/// `tau_n = (n - N/2) / fs`, so sample `N/2` sits at zero delay.
pub fn lfm_chirp(cfg: &RadarConfig) -> Vec<Complex64> {
    let n = cfg.chirp_len();
    let half = (n / 2) as f64;
    (0..n)
        .map(|k| {
            let tau = (k as f64 - half) / cfg.range_sample_rate;
            Complex64::from_polar(1.0, PI * cfg.chirp_rate * tau * tau)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneClass {
    Ridge,
    River,
}

impl SceneClass {
    pub fn index(self) -> usize {
        match self {
            SceneClass::Ridge => 0,
            SceneClass::River => 1,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(SceneClass::Ridge),
            1 => Some(SceneClass::River),
            _ => None,
        }
    }
}

impl std::str::FromStr for SceneClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ridge" => Ok(SceneClass::Ridge),
            "river" => Ok(SceneClass::River),
            other => Err(format!("unknown scene class '{other}' (expected ridge or river)")),
        }
    }
}

/// A point scatterer: slant range of closest approach `r`, azimuth `x`, and
/// amplitude reflectivity `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Target {
    pub r: f64,
    pub x: f64,
    pub sigma: f64,
}

/// Scene file layout:
///
/// ```json
/// { "targets": [ { "r": 9766.0, "x": 0.0, "sigma": 1.0 } ], "class": "ridge" }
/// ```
///
/// `class` is `"ridge"`, `"river"`, or `null`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub targets: Vec<Target>,
    #[serde(rename = "class", default)]
    pub class_label: Option<SceneClass>,
}

impl Scene {
    pub fn single(r: f64, x: f64, sigma: f64) -> Self {
        Self {
            targets: vec![Target { r, x, sigma }],
            class_label: None,
        }
    }

    pub fn validate(&self, cfg: &RadarConfig) -> Result<(), SimError> {
        let (near, far) = (cfg.near_range, cfg.far_range());
        for (index, t) in self.targets.iter().enumerate() {
            if !(t.r.is_finite() && t.x.is_finite() && t.sigma.is_finite()) {
                return Err(SimError::InvalidTarget {
                    index,
                    reason: "non-finite field".into(),
                });
            }
            if t.sigma < 0.0 {
                return Err(SimError::InvalidTarget {
                    index,
                    reason: format!("negative reflectivity {}", t.sigma),
                });
            }
            if !(near..far).contains(&t.r) {
                return Err(SimError::TargetOutOfSwath {
                    index,
                    range: t.r,
                    near,
                    far,
                });
            }
        }
        Ok(())
    }

    pub fn union(&self, other: &Scene) -> Scene {
        Scene {
            targets: self.targets.iter().chain(&other.targets).copied().collect(),
            class_label: self.class_label.or(other.class_label),
        }
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Raw echo: `n_azimuth` rows by `n_range` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEcho {
    pub samples: ComplexMatrix,
    pub config: RadarConfig,
}

/// Noiseless point-target echo plus optional circular complex Gaussian noise
/// with `noise_std` per component.
///
/// Each target contributes `sigma * w_az * chirp(tau - 2R/c) * exp(-j 4 pi R / lambda)`
/// with `R(eta) = sqrt(R0^2 + (v eta - x0)^2)` and a rectangular beam of
/// along-track width `lambda R0 / La`.
pub fn synthesize_echo(
    cfg: &RadarConfig,
    scene: &Scene,
    p: &mut Prng,
    noise_std: f64,
) -> Result<RawEcho, SimError> {
    cfg.validate()?;
    scene.validate(cfg)?;
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(SimError::InvalidConfig(format!("noise_std must be >= 0, got {noise_std}")));
    }
    let (rows, cols) = (cfg.n_azimuth, cfg.n_range);
    let mut samples = ComplexMatrix::zeros(rows, cols);
    let n_chirp = cfg.chirp_len() as f64;
    let half = (cfg.chirp_len() / 2) as f64;
    let fs = cfg.range_sample_rate;
    let samples_per_meter = 2.0 * fs / SPEED_OF_LIGHT;
    let phase_per_meter = 4.0 * PI / cfg.wavelength;
    // Range phase is referenced to the near range so large absolute ranges
    // do not eat into the phase precision.
    par::for_each_chunk_mut(samples.data_mut(), cols, |i, row| {
        let along = cfg.platform_velocity * cfg.slow_time(i);
        for t in &scene.targets {
            if t.sigma == 0.0 {
                continue;
            }
            let dx = along - t.x;
            if dx.abs() > 0.5 * cfg.aperture_length(t.r) {
                continue;
            }
            let range = t.r.hypot(dx);
            let delay = (range - cfg.near_range) * samples_per_meter;
            let lo = (delay - half).ceil().max(0.0);
            let hi = (delay - half + n_chirp).ceil().min(cols as f64);
            if lo >= hi {
                continue;
            }
            let carrier = -phase_per_meter * (range - cfg.near_range);
            for j in lo as usize..hi as usize {
                let tau = (j as f64 - delay) / fs;
                let phase = PI * cfg.chirp_rate * tau * tau + carrier;
                row[j] += Complex64::from_polar(t.sigma, phase);
            }
        }
    });
    if noise_std > 0.0 {
        for z in samples.data_mut() {
            *z += Complex64::new(noise_std * p.normal(), noise_std * p.normal());
        }
    }
    Ok(RawEcho {
        samples,
        config: cfg.clone(),
    })
}

/// Region of the scene plane that random scenes populate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneWindow {
    pub r_min: f64,
    pub r_max: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl SceneWindow {
    /// Rows `[n_az/8, 7 n_az/8)` and the central quarter of the columns,
    /// `[3 n_r/8, 5 n_r/8)`. Keeps targets clear of the azimuth wrap and well
    /// inside the fully range-compressed region.
    pub fn default_for(cfg: &RadarConfig) -> Self {
        Self::from_cells(
            cfg,
            cfg.n_azimuth / 8,
            3 * cfg.n_range / 8,
            3 * cfg.n_azimuth / 4,
            cfg.n_range / 4,
        )
    }

    /// Window covering image rows `row0..row0+h` and columns `col0..col0+w`.
    pub fn from_cells(cfg: &RadarConfig, row0: usize, col0: usize, h: usize, w: usize) -> Self {
        Self {
            r_min: cfg.range_of_col(col0 as f64),
            r_max: cfg.range_of_col((col0 + w) as f64 - 1.0),
            x_min: cfg.azimuth_of_row(row0 as f64),
            x_max: cfg.azimuth_of_row((row0 + h) as f64 - 1.0),
        }
    }

    pub fn contains(&self, r: f64, x: f64) -> bool {
        (self.r_min..=self.r_max).contains(&r) && (self.x_min..=self.x_max).contains(&x)
    }
}

/// A bright chain running along range: `x(r) = x0 + slope (r - r_mid)`,
/// half-width `half_width` in azimuth, spanning `[r_start, r_end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgeBand {
    pub x0: f64,
    pub slope: f64,
    pub r_mid: f64,
    pub half_width: f64,
    pub r_start: f64,
    pub r_end: f64,
}

impl RidgeBand {
    pub fn center_x(&self, r: f64) -> f64 {
        self.x0 + self.slope * (r - self.r_mid)
    }

    pub fn contains(&self, r: f64, x: f64) -> bool {
        (self.r_start..=self.r_end).contains(&r) && (x - self.center_x(r)).abs() <= self.half_width
    }
}

/// A dark meandering channel running along azimuth:
/// `r(x) = r_mid + amplitude sin(2 pi x / wavelength + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiverChannel {
    pub r_mid: f64,
    pub amplitude: f64,
    pub wavelength: f64,
    pub phase: f64,
    pub half_width: f64,
}

impl RiverChannel {
    pub fn center_r(&self, x: f64) -> f64 {
        self.r_mid + self.amplitude * (2.0 * PI * x / self.wavelength + self.phase).sin()
    }

    pub fn contains(&self, r: f64, x: f64) -> bool {
        (r - self.center_r(x)).abs() <= self.half_width
    }
}

/// Geometry that a random scene was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub enum SceneLayout {
    Ridge { bands: Vec<RidgeBand> },
    River { channel: RiverChannel },
}

impl SceneLayout {
    /// Inside a ridge band, or inside the river channel.
    pub fn in_feature(&self, r: f64, x: f64) -> bool {
        match self {
            SceneLayout::Ridge { bands } => bands.iter().any(|b| b.contains(r, x)),
            SceneLayout::River { channel } => channel.contains(r, x),
        }
    }
}

/// Random scene of the given class inside [`SceneWindow::default_for`].
pub fn random_scene(cfg: &RadarConfig, class: SceneClass, p: &mut Prng) -> Scene {
    random_scene_in(cfg, &SceneWindow::default_for(cfg), class, p).0
}

/// Random scene inside `window`, returned with the layout it was drawn from.
///
/// Ridge scenes are one or two chains of bright scatterers running along
/// range over a faint sparse background. River scenes are a dense diffuse
/// field crossed along azimuth by a meandering low-reflectivity channel.
pub fn random_scene_in(
    cfg: &RadarConfig,
    window: &SceneWindow,
    class: SceneClass,
    p: &mut Prng,
) -> (Scene, SceneLayout) {
    let dr = cfg.range_spacing();
    let dx = cfg.azimuth_spacing();
    let (w_r, w_x) = (window.r_max - window.r_min, window.x_max - window.x_min);
    let mut targets = Vec::new();
    let layout = match class {
        SceneClass::Ridge => {
            let count = 1 + p.below(2);
            let mut bands = Vec::with_capacity(count);
            for k in 0..count {
                // Keep two ridges in separate azimuth halves.
                let (lo, hi) = if count == 1 {
                    (0.2, 0.8)
                } else if k == 0 {
                    (0.15, 0.4)
                } else {
                    (0.6, 0.85)
                };
                let span = p.uniform_range(0.6, 1.0) * w_r;
                let r_start = window.r_min + p.uniform() * (w_r - span);
                let band = RidgeBand {
                    x0: window.x_min + p.uniform_range(lo, hi) * w_x,
                    slope: p.uniform_range(-0.15, 0.15) * w_x / w_r,
                    r_mid: r_start + span / 2.0,
                    half_width: 1.5 * dx,
                    r_start,
                    r_end: r_start + span,
                };
                let cells = (span / dr).floor() as usize + 1;
                for c in 0..cells {
                    for _ in 0..2 {
                        let r = (r_start + (c as f64 + p.uniform()) * dr).min(band.r_end);
                        let x = band.center_x(r) + p.uniform_range(-1.0, 1.0) * band.half_width;
                        targets.push(Target {
                            r,
                            x,
                            sigma: p.uniform_range(0.6, 1.0),
                        });
                    }
                }
                bands.push(band);
            }
            for _ in 0..40 {
                targets.push(Target {
                    r: window.r_min + p.uniform() * w_r,
                    x: window.x_min + p.uniform() * w_x,
                    sigma: p.uniform_range(0.0, 0.08),
                });
            }
            SceneLayout::Ridge { bands }
        }
        SceneClass::River => {
            let channel = RiverChannel {
                r_mid: window.r_min + p.uniform_range(0.35, 0.65) * w_r,
                amplitude: p.uniform_range(0.05, 0.15) * w_r,
                wavelength: p.uniform_range(0.8, 1.6) * w_x,
                phase: p.uniform_range(0.0, 2.0 * PI),
                half_width: p.uniform_range(1.5, 2.5) * dr,
            };
            let n_r = (w_r / dr).floor() as usize + 1;
            let n_x = (w_x / (6.0 * dx)).floor() as usize + 1;
            for a in 0..n_x {
                for c in 0..n_r {
                    let r = (window.r_min + (c as f64 + p.uniform()) * dr).min(window.r_max);
                    let x = (window.x_min + (a as f64 + p.uniform()) * 6.0 * dx).min(window.x_max);
                    let sigma = if channel.contains(r, x) {
                        p.uniform_range(0.0, 0.05)
                    } else {
                        p.uniform_range(0.3, 1.0)
                    };
                    targets.push(Target { r, x, sigma });
                }
            }
            SceneLayout::River { channel }
        }
    };
    (
        Scene {
            targets,
            class_label: Some(class),
        },
        layout,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        let cfg = RadarConfig::default();
        cfg.validate().unwrap();
        assert!((cfg.bandwidth() - 30e6).abs() < 1e-3);
        assert_eq!(cfg.chirp_len(), 72);
    }

    #[test]
    fn undersampled_config_rejected() {
        let cfg = RadarConfig {
            range_sample_rate: 31e6,
            ..RadarConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(SimError::InvalidConfig(_))));
        let cfg = RadarConfig {
            prf: 100.0,
            ..RadarConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(SimError::InvalidConfig(_))));
    }

    #[test]
    fn chirp_center_and_modulus() {
        let cfg = RadarConfig::default();
        let s = lfm_chirp(&cfg);
        let c = s[s.len() / 2];
        assert_eq!(c, Complex64::new(1.0, 0.0));
        assert!(s.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn chirp_edge_frequencies() {
        // Second-order one-sided differences of the unwrapped phase are exact
        // for a quadratic phase, so these recover K * tau at the edge samples.
        let cfg = RadarConfig::default();
        let s = lfm_chirp(&cfg);
        let mut phase = vec![s[0].arg()];
        for w in s.windows(2) {
            let d = (w[1] * w[0].conj()).arg();
            phase.push(phase.last().unwrap() + d);
        }
        let fs = cfg.range_sample_rate;
        let n = phase.len();
        let f_first =
            (-3.0 * phase[0] + 4.0 * phase[1] - phase[2]) * fs / (2.0 * 2.0 * PI);
        let f_last =
            (3.0 * phase[n - 1] - 4.0 * phase[n - 2] + phase[n - 3]) * fs / (2.0 * 2.0 * PI);
        let b = cfg.bandwidth();
        assert!((f_first + b / 2.0).abs() <= 0.02 * b, "{f_first}");
        assert!((f_last - b / 2.0).abs() <= 0.02 * b, "{f_last}");
    }

    #[test]
    fn empty_scene_is_silent() {
        let cfg = RadarConfig::default();
        let e = synthesize_echo(&cfg, &Scene::default(), &mut Prng::new(1), 0.0).unwrap();
        assert!(e.samples.data().iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn echo_is_linear_in_sigma() {
        let cfg = RadarConfig::default();
        let r = cfg.center_range();
        let a = synthesize_echo(&cfg, &Scene::single(r, 0.0, 1.0), &mut Prng::new(1), 0.0).unwrap();
        let b = synthesize_echo(&cfg, &Scene::single(r, 0.0, 2.0), &mut Prng::new(1), 0.0).unwrap();
        for (x, y) in a.samples.data().iter().zip(b.samples.data()) {
            assert_eq!(*x * 2.0, *y);
        }
    }

    #[test]
    fn out_of_swath_rejected() {
        let cfg = RadarConfig::default();
        let far = Scene::single(cfg.far_range(), 0.0, 1.0);
        let err = synthesize_echo(&cfg, &far, &mut Prng::new(1), 0.0).unwrap_err();
        assert!(matches!(err, SimError::TargetOutOfSwath { index: 0, .. }));
        let neg = Scene::single(cfg.center_range(), 0.0, -1.0);
        assert!(synthesize_echo(&cfg, &neg, &mut Prng::new(1), 0.0).is_err());
    }

    #[test]
    fn noise_has_requested_std() {
        let cfg = RadarConfig::default();
        let e = synthesize_echo(&cfg, &Scene::default(), &mut Prng::new(5), 0.5).unwrap();
        let n = e.samples.data().len() as f64;
        let var_re = e.samples.data().iter().map(|z| z.re * z.re).sum::<f64>() / n;
        assert!((var_re.sqrt() - 0.5).abs() < 0.02);
    }

    #[test]
    fn random_scenes_are_deterministic_and_inside_window() {
        let cfg = RadarConfig::default();
        let window = SceneWindow::default_for(&cfg);
        for class in [SceneClass::Ridge, SceneClass::River] {
            let a = random_scene(&cfg, class, &mut Prng::new(11));
            let b = random_scene(&cfg, class, &mut Prng::new(11));
            assert_eq!(a, b);
            assert_eq!(a.class_label, Some(class));
            a.validate(&cfg).unwrap();
            assert!(a.targets.iter().all(|t| window.contains(t.r, t.x)));
        }
    }

    #[test]
    fn ridge_mass_concentrates_in_band() {
        let cfg = RadarConfig::default();
        let window = SceneWindow::default_for(&cfg);
        for seed in 0..20 {
            let (scene, layout) =
                random_scene_in(&cfg, &window, SceneClass::Ridge, &mut Prng::new(seed));
            let total: f64 = scene.targets.iter().map(|t| t.sigma).sum();
            let inside: f64 = scene
                .targets
                .iter()
                .filter(|t| layout.in_feature(t.r, t.x))
                .map(|t| t.sigma)
                .sum();
            assert!(inside >= 0.8 * total, "seed {seed}: {inside} of {total}");
        }
    }

    #[test]
    fn river_channel_is_dark() {
        let cfg = RadarConfig::default();
        let window = SceneWindow::default_for(&cfg);
        for seed in 0..20 {
            let (scene, layout) =
                random_scene_in(&cfg, &window, SceneClass::River, &mut Prng::new(seed));
            let (mut si, mut ni, mut so, mut no) = (0.0, 0, 0.0, 0);
            for t in &scene.targets {
                if layout.in_feature(t.r, t.x) {
                    si += t.sigma;
                    ni += 1;
                } else {
                    so += t.sigma;
                    no += 1;
                }
            }
            assert!(ni > 0 && no > 0);
            assert!(si / (ni as f64) < 0.1 * so / (no as f64), "seed {seed}");
        }
    }

    #[test]
    fn scene_json_round_trip() {
        let cfg = RadarConfig::default();
        let scene = random_scene(&cfg, SceneClass::River, &mut Prng::new(2));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        scene.save(&path).unwrap();
        assert_eq!(Scene::load(&path).unwrap(), scene);
        let raw = r#"{"targets":[{"r":9700.0,"x":1.5,"sigma":0.5}],"class":null}"#;
        let s: Scene = serde_json::from_str(raw).unwrap();
        assert_eq!(s.targets[0].x, 1.5);
        assert_eq!(s.class_label, None);
    }
}
