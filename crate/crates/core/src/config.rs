//! Run configuration: a sectioned `key = value` text format plus the resolved
//! defaults for desk-scale experiments. Every run re-emits its fully resolved
//! config next to its outputs so results are reproducible from the artifacts.

use crate::error::{Error, Result};
use crate::irdata::SceneConfig;
use crate::lfp::{LfpSettings, TauMode};
use crate::model::{FpnMode, NsFpnConfig, NUM_SFS_EDGES};
use crate::sfs::SpiralConfig;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub mode: FpnMode,
    pub threshold: f64,
    pub match_radius: f64,
    pub train_count: usize,
    pub test_count: usize,
    pub scene: SceneConfig,
    pub channels: usize,
    pub tau_quantile: f64,
    pub kernel_size: usize,
    pub heads: usize,
    pub points: usize,
    pub l0: f64,
    pub dl: f64,
    pub grid_stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let spiral = SpiralConfig::default();
        RunConfig {
            seed: 0,
            epochs: 10,
            batch_size: 8,
            lr: 0.05,
            mode: FpnMode::Ns,
            threshold: 0.5,
            match_radius: crate::irdata::DEFAULT_MATCH_RADIUS,
            train_count: 200,
            test_count: 50,
            scene: SceneConfig::default(),
            channels: 64,
            tau_quantile: 0.5,
            kernel_size: 3,
            heads: spiral.heads,
            points: spiral.points,
            l0: spiral.l0,
            dl: spiral.dl,
            grid_stride: spiral.grid_stride,
        }
    }
}

impl RunConfig {
    pub fn model_config(&self) -> NsFpnConfig {
        NsFpnConfig {
            channels: self.channels,
            mode: self.mode,
            lfp: LfpSettings {
                tau: TauMode::Quantile(self.tau_quantile),
                kernel_size: self.kernel_size,
            },
            spiral: [SpiralConfig {
                heads: self.heads,
                points: self.points,
                l0: self.l0,
                dl: self.dl,
                grid_stride: self.grid_stride,
            }; NUM_SFS_EDGES],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold must lie in [0,1]".into()));
        }
        self.scene.validate()?;
        self.model_config().validate()
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split(['#', ';']).next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            cfg.apply(&section, key, value).map_err(|e| {
                Error::Config(format!("line {}: {e}", lineno + 1))
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn apply(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        match (section, key) {
            ("run", "seed") => self.seed = num(key, value)?,
            ("run", "epochs") => self.epochs = num(key, value)?,
            ("run", "batch_size") => self.batch_size = num(key, value)?,
            ("run", "lr") => self.lr = num(key, value)?,
            ("run", "fpn_mode") => {
                self.mode = match value {
                    "plain" => FpnMode::Plain,
                    "ns" => FpnMode::Ns,
                    _ => {
                        return Err(Error::Config(format!(
                            "fpn_mode must be `plain` or `ns`, got {value:?}"
                        )))
                    }
                }
            }
            ("run", "threshold") => self.threshold = num(key, value)?,
            ("run", "match_radius") => self.match_radius = num(key, value)?,
            ("data", "train_count") => self.train_count = num(key, value)?,
            ("data", "test_count") => self.test_count = num(key, value)?,
            ("data", "height") => self.scene.height = num(key, value)?,
            ("data", "width") => self.scene.width = num(key, value)?,
            ("data", "targets_min") => self.scene.targets_min = num(key, value)?,
            ("data", "targets_max") => self.scene.targets_max = num(key, value)?,
            ("data", "amp_min") => self.scene.amp_min = num(key, value)?,
            ("data", "amp_max") => self.scene.amp_max = num(key, value)?,
            ("data", "sigma_min") => self.scene.sigma_min = num(key, value)?,
            ("data", "sigma_max") => self.scene.sigma_max = num(key, value)?,
            ("data", "clutter_amp") => self.scene.clutter_amp = num(key, value)?,
            ("data", "clutter_waves") => self.scene.clutter_waves = num(key, value)?,
            ("data", "noise_std") => self.scene.noise_std = num(key, value)?,
            ("data", "distractors") => self.scene.distractors = num(key, value)?,
            ("model", "channels") => self.channels = num(key, value)?,
            ("model", "tau_quantile") => self.tau_quantile = num(key, value)?,
            ("model", "kernel_size") => self.kernel_size = num(key, value)?,
            ("model", "heads") => self.heads = num(key, value)?,
            ("model", "points") => self.points = num(key, value)?,
            ("model", "l0") => self.l0 = num(key, value)?,
            ("model", "dl") => self.dl = num(key, value)?,
            ("model", "grid_stride") => self.grid_stride = num(key, value)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown key {key:?} in section [{section}]"
                )))
            }
        }
        Ok(())
    }

    /// The fully-resolved config, re-parseable by [`RunConfig::parse`].
    pub fn render(&self) -> String {
        let mut sections: Vec<(&str, BTreeMap<&str, String>)> = Vec::new();
        let mode = match self.mode {
            FpnMode::Plain => "plain",
            FpnMode::Ns => "ns",
        };
        sections.push((
            "run",
            [
                ("seed", self.seed.to_string()),
                ("epochs", self.epochs.to_string()),
                ("batch_size", self.batch_size.to_string()),
                ("lr", self.lr.to_string()),
                ("fpn_mode", mode.to_string()),
                ("threshold", self.threshold.to_string()),
                ("match_radius", self.match_radius.to_string()),
            ]
            .into_iter()
            .collect(),
        ));
        let s = &self.scene;
        sections.push((
            "data",
            [
                ("train_count", self.train_count.to_string()),
                ("test_count", self.test_count.to_string()),
                ("height", s.height.to_string()),
                ("width", s.width.to_string()),
                ("targets_min", s.targets_min.to_string()),
                ("targets_max", s.targets_max.to_string()),
                ("amp_min", s.amp_min.to_string()),
                ("amp_max", s.amp_max.to_string()),
                ("sigma_min", s.sigma_min.to_string()),
                ("sigma_max", s.sigma_max.to_string()),
                ("clutter_amp", s.clutter_amp.to_string()),
                ("clutter_waves", s.clutter_waves.to_string()),
                ("noise_std", s.noise_std.to_string()),
                ("distractors", s.distractors.to_string()),
            ]
            .into_iter()
            .collect(),
        ));
        sections.push((
            "model",
            [
                ("channels", self.channels.to_string()),
                ("tau_quantile", self.tau_quantile.to_string()),
                ("kernel_size", self.kernel_size.to_string()),
                ("heads", self.heads.to_string()),
                ("points", self.points.to_string()),
                ("l0", self.l0.to_string()),
                ("dl", self.dl.to_string()),
                ("grid_stride", self.grid_stride.to_string()),
            ]
            .into_iter()
            .collect(),
        ));
        let mut out = String::new();
        for (name, entries) in sections {
            writeln!(out, "[{name}]").unwrap();
            for (k, v) in entries {
                writeln!(out, "{k} = {v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrip() {
        let cfg = RunConfig {
            seed: 9,
            epochs: 3,
            mode: FpnMode::Plain,
            grid_stride: 4,
            ..RunConfig::default()
        };
        let text = cfg.render();
        let back = RunConfig::parse(&text).unwrap();
        assert_eq!(back.seed, 9);
        assert_eq!(back.epochs, 3);
        assert_eq!(back.mode, FpnMode::Plain);
        assert_eq!(back.grid_stride, 4);
        assert_eq!(back.render(), text);
    }

    #[test]
    fn comments_and_overrides() {
        let cfg = RunConfig::parse(
            "# experiment\n[run]\nseed = 5 ; inline comment\n\n[model]\nheads = 2\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.heads, 2);
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        assert!(RunConfig::parse("[run]\nbogus = 1\n").is_err());
        assert!(RunConfig::parse("[run]\nno_equals_sign\n").is_err());
        assert!(RunConfig::parse("[run]\nfpn_mode = magic\n").is_err());
        // channels not divisible by heads
        assert!(RunConfig::parse("[model]\nchannels = 30\n").is_err());
    }
}
