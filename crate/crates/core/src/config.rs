//! Experiment configuration: UTF-8 key=value files, one pair per line, `#`
//! comments. Keys are grouped by prefix (geometry., model., train., fim.,
//! eval.); every key has a documented default and unknown keys are errors.

use crate::error::{Error, Result};
use crate::fno::FnoConfig;
use crate::oracles::HoloGeometry;
use crate::trainer::TrainConfig;
use std::collections::BTreeMap;
use std::path::Path;

pub struct KeyDoc {
    pub key: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

/// Every recognized key with its default and one-line description.
pub const KEY_DOCS: &[KeyDoc] = &[
    KeyDoc { key: "geometry.wavelength", default: "1", doc: "wavelength in meters" },
    KeyDoc { key: "geometry.aperture_wl", default: "4", doc: "transmit aperture side, wavelengths" },
    KeyDoc { key: "geometry.receive_wl", default: "8", doc: "receive window side, wavelengths (centered over the aperture)" },
    KeyDoc { key: "geometry.z0_wl", default: "4", doc: "receive plane offset, wavelengths" },
    KeyDoc { key: "geometry.grid", default: "32", doc: "grid size per axis (power of two)" },
    KeyDoc { key: "geometry.cutoff", default: "8", doc: "current band limit, cycles per aperture" },
    KeyDoc { key: "geometry.n_train", default: "1000", doc: "holographic training samples" },
    KeyDoc { key: "geometry.n_test", default: "200", doc: "holographic held-out samples" },
    KeyDoc { key: "model.width", default: "32", doc: "hidden channel width d_v" },
    KeyDoc { key: "model.layers", default: "4", doc: "number of Fourier layers" },
    KeyDoc { key: "model.modes1", default: "12", doc: "retained modes, first axis (clamped to grid/2 - 1; 0 = local-only)" },
    KeyDoc { key: "model.modes2", default: "12", doc: "retained modes, second axis" },
    KeyDoc { key: "model.append_coords", default: "true", doc: "append normalized coordinate channels" },
    KeyDoc { key: "train.epochs", default: "200", doc: "training epochs" },
    KeyDoc { key: "train.batch_size", default: "16", doc: "minibatch size" },
    KeyDoc { key: "train.lr", default: "0.001", doc: "Adam learning rate" },
    KeyDoc { key: "train.lr_decay_factor", default: "0.5", doc: "stepped LR decay factor" },
    KeyDoc { key: "train.lr_decay_every", default: "50", doc: "epochs between LR decays (0 = none)" },
    KeyDoc { key: "train.beta1", default: "0.9", doc: "Adam beta1" },
    KeyDoc { key: "train.beta2", default: "0.999", doc: "Adam beta2" },
    KeyDoc { key: "train.epsilon", default: "0.00000001", doc: "Adam epsilon" },
    KeyDoc { key: "train.grad_clip_norm", default: "1", doc: "global gradient-norm clip (0 = off)" },
    KeyDoc { key: "train.seed", default: "0", doc: "training seed (shuffling + init)" },
    KeyDoc { key: "fim.pilots", default: "8", doc: "pilot shapes M" },
    KeyDoc { key: "fim.paths", default: "4", doc: "propagation paths L_p" },
    KeyDoc { key: "fim.n_train", default: "3000", doc: "FIM training scenarios" },
    KeyDoc { key: "fim.n_test", default: "500", doc: "FIM held-out scenarios" },
    KeyDoc { key: "fim.snr_db", default: "0:20", doc: "measurement SNR: value, lo:hi range, or inf" },
    KeyDoc { key: "fim.pilot_seed", default: "7", doc: "seed of the pre-defined pilot library" },
    KeyDoc { key: "eval.resolution", default: "0", doc: "evaluation grid override (0 = native)" },
    KeyDoc { key: "eval.svg", default: "true", doc: "write SVG panels during eval" },
];

/// A parsed configuration: defaults overlaid with file and flag overrides.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            values: KEY_DOCS
                .iter()
                .map(|d| (d.key.to_string(), d.default.to_string()))
                .collect(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got '{raw}'", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::parse(&text)
    }

    /// Set one key, rejecting anything not in the registry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEY_DOCS.iter().any(|d| d.key == key) {
            return Err(Error::Config(format!("unknown config key '{key}'")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(|s| s.as_str())
            .unwrap_or_else(|| panic!("unregistered config key '{key}'"))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)
            .parse()
            .map_err(|_| Error::Config(format!("bad value '{}' for key '{key}'", self.get(key))))
    }

    pub fn parse_bool(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            other => Err(Error::Config(format!(
                "bad boolean '{other}' for key '{key}'"
            ))),
        }
    }

    /// Canonical rendering; parse(render(c)) == c.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn geometry(&self) -> Result<HoloGeometry> {
        let geom = HoloGeometry {
            wavelength: self.parse_value("geometry.wavelength")?,
            aperture_wl: self.parse_value("geometry.aperture_wl")?,
            receive_wl: self.parse_value("geometry.receive_wl")?,
            z0_wl: self.parse_value("geometry.z0_wl")?,
            grid: self.parse_value("geometry.grid")?,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Model configuration for the given channel counts and training grid;
    /// modes clamp to the grid's Nyquist - 1.
    pub fn model(&self, in_channels: usize, out_channels: usize, grid: usize) -> Result<FnoConfig> {
        let clamp = |m: usize| -> usize {
            if m == 0 {
                0
            } else {
                m.min(grid / 2 - 1)
            }
        };
        let cfg = FnoConfig {
            in_channels,
            out_channels,
            width: self.parse_value("model.width")?,
            layers: self.parse_value("model.layers")?,
            modes1: clamp(self.parse_value("model.modes1")?),
            modes2: clamp(self.parse_value("model.modes2")?),
            append_coords: self.parse_bool("model.append_coords")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.parse_value("train.epochs")?,
            batch_size: self.parse_value("train.batch_size")?,
            lr: self.parse_value("train.lr")?,
            lr_decay_factor: self.parse_value("train.lr_decay_factor")?,
            lr_decay_every: self.parse_value("train.lr_decay_every")?,
            beta1: self.parse_value("train.beta1")?,
            beta2: self.parse_value("train.beta2")?,
            epsilon: self.parse_value("train.epsilon")?,
            grad_clip_norm: self.parse_value("train.grad_clip_norm")?,
            seed: self.parse_value("train.seed")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One line per key for `--help` output.
pub fn help_text() -> String {
    let mut out = String::from("Config keys (key=value files or --set overrides):\n");
    for d in KEY_DOCS {
        out.push_str(&format!("  {:<24} default {:<10} {}\n", d.key, d.default, d.doc));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_every_key() {
        let cfg = ExperimentConfig::default();
        for d in KEY_DOCS {
            assert_eq!(cfg.get(d.key), d.default);
        }
    }

    #[test]
    fn parse_render_parse_is_idempotent() {
        let text = "geometry.grid = 16  # small run\n\n# comment line\ntrain.epochs=5\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.get("geometry.grid"), "16");
        assert_eq!(cfg.get("train.epochs"), "5");
        let rendered = cfg.render();
        let reparsed = ExperimentConfig::parse(&rendered).unwrap();
        assert_eq!(rendered, reparsed.render());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse("geometry.gird=16\n").unwrap_err();
        assert!(err.to_string().contains("geometry.gird"), "{err}");
        let err = ExperimentConfig::parse("bogus\n").unwrap_err();
        assert!(err.to_string().contains("key=value"), "{err}");
    }

    #[test]
    fn model_modes_clamp_to_nyquist() {
        let cfg = ExperimentConfig::default();
        let m = cfg.model(2, 2, 16).unwrap();
        assert_eq!(m.modes1, 7);
        let m = cfg.model(2, 2, 32).unwrap();
        assert_eq!(m.modes1, 12);
    }

    #[test]
    fn help_lists_all_keys_and_defaults() {
        let help = help_text();
        for d in KEY_DOCS {
            assert!(help.contains(d.key), "missing {}", d.key);
            assert!(help.contains(d.default), "missing default of {}", d.key);
        }
    }
}
