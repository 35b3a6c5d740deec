use std::path::Path;

use serde::{Deserialize, Serialize};

use sarforge::dataset::DatasetConfig;
use sarforge::models::{ArchConfig, TrainConfig};
use sarforge::rda::{Crop, RdaConfig};
use sarforge::sim::RadarConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CropName {
    /// Central quarter of the swath, every multilooked row.
    Auto,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CropSetting {
    Named(CropName),
    Window(Crop),
}

/// Focusing settings; the radar comes from the `[radar]` table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RdaSection {
    pub rcmc_kernel_taps: usize,
    pub multilook_looks: usize,
    pub smoothing_sigma: f64,
    pub crop: CropSetting,
}

impl Default for RdaSection {
    fn default() -> Self {
        let desk = RdaConfig::desk(RadarConfig::default());
        Self {
            rcmc_kernel_taps: desk.rcmc_kernel_taps,
            multilook_looks: desk.multilook_looks,
            smoothing_sigma: desk.smoothing_sigma,
            crop: CropSetting::Named(CropName::Auto),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub reps: usize,
    pub warmup: usize,
    pub batch: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            reps: 10,
            warmup: 2,
            batch: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub radar: RadarConfig,
    pub rda: RdaSection,
    pub dataset: DatasetConfig,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub classifier: TrainConfig,
    pub bench: BenchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            radar: RadarConfig::default(),
            rda: RdaSection::default(),
            dataset: DatasetConfig::default(),
            arch: ArchConfig::desk(),
            train: TrainConfig::default(),
            classifier: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
            bench: BenchSection::default(),
        }
    }
}

/// Command-line values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, o: &Overrides) -> Result<Self, CliError> {
        let mut cfg: RunConfig = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = o.seed {
            cfg.seed = s;
        }
        for t in [&mut cfg.train, &mut cfg.classifier] {
            t.seed = cfg.seed;
            if let Some(e) = o.epochs {
                t.epochs = e;
            }
            if let Some(b) = o.batch {
                t.minibatch = b;
            }
            if let Some(lr) = o.lr {
                t.lr = lr;
            }
        }
        if let Some(b) = o.batch {
            cfg.bench.batch = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rda_config(&self) -> RdaConfig {
        self.rda_config_for(&self.radar)
    }

    /// Focusing settings applied to another radar geometry.
    pub fn rda_config_for(&self, radar: &RadarConfig) -> RdaConfig {
        let crop = match self.rda.crop {
            CropSetting::Named(CropName::Auto) => RdaConfig::desk(radar.clone()).crop,
            CropSetting::Named(CropName::None) => None,
            CropSetting::Window(c) => Some(c),
        };
        RdaConfig {
            radar: radar.clone(),
            rcmc_kernel_taps: self.rda.rcmc_kernel_taps,
            multilook_looks: self.rda.multilook_looks,
            smoothing_sigma: self.rda.smoothing_sigma,
            crop,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let usage = |e: String| CliError::Usage(e);
        self.rda_config().validate().map_err(|e| usage(e.to_string()))?;
        self.arch.validate().map_err(|e| usage(e.to_string()))?;
        self.train.validate().map_err(|e| usage(e.to_string()))?;
        self.classifier.validate().map_err(|e| usage(e.to_string()))?;
        let f = self.dataset.gen.resample_factor.max(1);
        let echo = (self.radar.n_azimuth / f, self.radar.n_range / f);
        if echo != self.arch.echo_dims {
            return Err(usage(format!(
                "arch.echo_dims {:?} but the radar produces {echo:?} echoes",
                self.arch.echo_dims
            )));
        }
        let image = self.rda_config().output_dims();
        if image != self.arch.image_dims {
            return Err(usage(format!(
                "arch.image_dims {:?} but focusing produces {image:?} images",
                self.arch.image_dims
            )));
        }
        if self.bench.reps < 3 || self.bench.batch == 0 {
            return Err(usage("bench needs reps >= 3 and batch >= 1".into()));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.rda_config(), RdaConfig::desk(RadarConfig::default()));
    }

    #[test]
    fn overrides_apply() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 4\n[train]\nepochs = 3\n[rda]\ncrop = \"none\"\nmultilook_looks = 1\n[arch]\nimage_dims = [128, 128]\nfc_units = 4096\n").unwrap();
        let o = Overrides {
            seed: Some(9),
            lr: Some(1e-3),
            ..Overrides::default()
        };
        let cfg = RunConfig::load(Some(&p), &o).unwrap();
        assert_eq!((cfg.seed, cfg.train.seed, cfg.train.epochs), (9, 9, 3));
        assert_eq!(cfg.classifier.lr, 1e-3);
        assert_eq!(cfg.rda_config().crop, None);
    }

    #[test]
    fn rejects_unknown_keys_and_mismatched_dims() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "sede = 4\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&p), &Overrides::default()), Err(CliError::Usage(_))));
        std::fs::write(&p, "[radar]\nn_range = 256\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&p), &Overrides::default()), Err(CliError::Usage(_))));
    }
}
