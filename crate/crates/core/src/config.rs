//! Pipeline configuration: a flat `key = value` text format with one
//! `[section]` per module, a canonical snapshot rendering, and the
//! desk-scale preset used for fast end-to-end runs.
//!
//! Schema (all keys optional; defaults shown by `RunConfig::default`):
//!
//! ```text
//! [model]
//! volume_shape = 32,32,32        # input volume D,H,W
//! conv_channels = 8,8,16,16,32,32
//! dense_widths = 512,256,128
//! volume_latent = 100
//! fnc_nodes = 53
//! fnc_hidden = 16,32
//! fnc_latent = 100
//! sc_nodes = 84
//! sc_hidden = 16,32
//! sc_latent = 100
//! cheb_k = 3
//! classifier_hidden = 128,32
//! lambda_max = fixed:2           # or `exact`
//!
//! [train]
//! folds = 5
//! batch_size = 16
//! lr = 0.00001
//! weight_decay = 0.0001
//! epochs = 200
//! seed = 0
//! precision = f32                # or f64
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 0.00000001
//!
//! [cohort]
//! seed = 20260815
//! n_neg = 185
//! n_pos = 133
//! volume_shape = 32,32,32
//! n_rois = 56
//! fnc_nodes = 53
//! sc_nodes = 84
//! abeta_cutoff = 980
//! effect_gm_rois = 3,9,14,21,27,35,42,50   # 1-based ROI labels
//! effect_gm_delta = 1.5                    # Cohen's d
//! effect_fnc_nodes = 4,11,19,30,44         # 0-based node indices
//! effect_fnc_delta = 1.5
//! effect_sc_nodes = 7,20,33,52,70
//! effect_sc_delta = 1.5
//!
//! [explain]
//! k = 10
//!
//! [stats]
//! alpha = 0.05
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::cohort::CohortSpec;
use crate::error::{Error, Result};
use crate::gnn::LambdaMax;
use crate::manifest::sha256_hex;
use crate::model::ModelConfig;
use crate::train::{Precision, TrainConfig};

/// Full resolved configuration for one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub cohort: CohortSpec,
    /// Top-k cut for attribution region rankings.
    pub explain_k: usize,
    /// Significance level on FDR-adjusted p values.
    pub alpha: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            cohort: CohortSpec::default(),
            explain_k: 10,
            alpha: 0.05,
        }
    }
}

fn join<T: ToString>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Parsed `[section] key = value` file; every pair must be consumed.
struct Sections {
    origin: String,
    pairs: Vec<(String, String)>,
    used: Vec<bool>,
}

impl Sections {
    fn parse(origin: &str, text: &str) -> Result<Self> {
        let mut section = String::new();
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let Some(name) = name.strip_suffix(']') else {
                    return Err(Error::Config(format!(
                        "{origin} line {}: malformed section header {line:?}",
                        ln + 1
                    )));
                };
                section = name.trim().to_string();
                if section.is_empty() {
                    return Err(Error::Config(format!(
                        "{origin} line {}: empty section name",
                        ln + 1
                    )));
                }
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{origin} line {}: expected `key = value`, got {line:?}",
                    ln + 1
                )));
            };
            if section.is_empty() {
                return Err(Error::Config(format!(
                    "{origin} line {}: key before any [section]",
                    ln + 1
                )));
            }
            let key = format!("{section}.{}", k.trim());
            if pairs.iter().any(|(p, _)| *p == key) {
                return Err(Error::Config(format!(
                    "{origin} line {}: duplicate key {key}",
                    ln + 1
                )));
            }
            pairs.push((key, v.trim().to_string()));
        }
        let used = vec![false; pairs.len()];
        Ok(Sections {
            origin: origin.to_string(),
            pairs,
            used,
        })
    }

    fn take(&mut self, key: &str) -> Option<&str> {
        let i = self.pairs.iter().position(|(k, _)| k == key)?;
        self.used[i] = true;
        Some(&self.pairs[i].1)
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()> {
        let origin = self.origin.clone();
        if let Some(v) = self.take(key) {
            *slot = v
                .parse()
                .map_err(|_| Error::Config(format!("{origin}: bad value {v:?} for {key}")))?;
        }
        Ok(())
    }

    fn set_list<T: FromStr + Copy, const N: usize>(
        &mut self,
        key: &str,
        slot: &mut [T; N],
    ) -> Result<()> {
        if let Some(v) = self.take(key).map(str::to_string) {
            let items = self.list::<T>(key, &v)?;
            if items.len() != N {
                return Err(Error::Config(format!(
                    "{}: {key} needs {N} comma-separated values, got {}",
                    self.origin,
                    items.len()
                )));
            }
            slot.copy_from_slice(&items);
        }
        Ok(())
    }

    fn set_vec<T: FromStr>(&mut self, key: &str, slot: &mut Vec<T>) -> Result<()> {
        if let Some(v) = self.take(key).map(str::to_string) {
            *slot = self.list::<T>(key, &v)?;
        }
        Ok(())
    }

    fn list<T: FromStr>(&self, key: &str, v: &str) -> Result<Vec<T>> {
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|item| {
                item.trim().parse().map_err(|_| {
                    Error::Config(format!(
                        "{}: bad list item {item:?} for {key}",
                        self.origin
                    ))
                })
            })
            .collect()
    }

    fn finish(self) -> Result<()> {
        for ((k, _), used) in self.pairs.iter().zip(&self.used) {
            if !used {
                let (section, key) = k.split_once('.').unwrap_or(("", k));
                return Err(Error::Config(format!(
                    "{}: unknown config key {key:?} in section [{section}]",
                    self.origin
                )));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    /// Parses config text over the defaults; unknown keys are rejected.
    pub fn from_text(origin: &str, text: &str) -> Result<Self> {
        let mut s = Sections::parse(origin, text)?;
        let mut c = RunConfig::default();

        if let Some(v) = s.take("model.volume_shape").map(str::to_string) {
            let mut dims = [0usize; 3];
            let items = s.list::<usize>("model.volume_shape", &v)?;
            if items.len() != 3 {
                return Err(Error::Config(format!(
                    "{origin}: model.volume_shape needs 3 values"
                )));
            }
            dims.copy_from_slice(&items);
            c.model.volume.input_shape = (dims[0], dims[1], dims[2]);
        }
        s.set_list("model.conv_channels", &mut c.model.volume.conv_channels)?;
        s.set_list("model.dense_widths", &mut c.model.volume.dense_widths)?;
        s.set("model.volume_latent", &mut c.model.volume.latent_dim)?;
        s.set("model.fnc_nodes", &mut c.model.fnc.n_nodes)?;
        s.set_list("model.fnc_hidden", &mut c.model.fnc.hidden)?;
        s.set("model.fnc_latent", &mut c.model.fnc.latent_dim)?;
        s.set("model.sc_nodes", &mut c.model.sc.n_nodes)?;
        s.set_list("model.sc_hidden", &mut c.model.sc.hidden)?;
        s.set("model.sc_latent", &mut c.model.sc.latent_dim)?;
        s.set("model.cheb_k", &mut c.model.sc.cheb_k)?;
        s.set_list("model.classifier_hidden", &mut c.model.classifier_hidden)?;
        if let Some(v) = s.take("model.lambda_max") {
            c.model.lambda_max = LambdaMax::parse(v).ok_or_else(|| {
                Error::Config(format!("{origin}: bad model.lambda_max {v:?}"))
            })?;
        }

        s.set("train.folds", &mut c.train.folds)?;
        s.set("train.batch_size", &mut c.train.batch_size)?;
        s.set("train.lr", &mut c.train.lr)?;
        s.set("train.weight_decay", &mut c.train.weight_decay)?;
        s.set("train.epochs", &mut c.train.epochs)?;
        s.set("train.seed", &mut c.train.seed)?;
        if let Some(v) = s.take("train.precision") {
            c.train.precision = Precision::parse(v)?;
        }
        s.set("train.beta1", &mut c.train.beta1)?;
        s.set("train.beta2", &mut c.train.beta2)?;
        s.set("train.eps", &mut c.train.eps)?;

        s.set("cohort.seed", &mut c.cohort.seed)?;
        s.set("cohort.n_neg", &mut c.cohort.n_neg)?;
        s.set("cohort.n_pos", &mut c.cohort.n_pos)?;
        s.set_list("cohort.volume_shape", &mut c.cohort.volume_shape)?;
        s.set("cohort.n_rois", &mut c.cohort.n_rois)?;
        s.set("cohort.fnc_nodes", &mut c.cohort.fnc_nodes)?;
        s.set("cohort.sc_nodes", &mut c.cohort.sc_nodes)?;
        s.set("cohort.abeta_cutoff", &mut c.cohort.abeta_cutoff)?;
        s.set_vec("cohort.effect_gm_rois", &mut c.cohort.effect.gm_rois)?;
        s.set("cohort.effect_gm_delta", &mut c.cohort.effect.gm_delta)?;
        s.set_vec("cohort.effect_fnc_nodes", &mut c.cohort.effect.fnc_nodes)?;
        s.set("cohort.effect_fnc_delta", &mut c.cohort.effect.fnc_delta)?;
        s.set_vec("cohort.effect_sc_nodes", &mut c.cohort.effect.sc_nodes)?;
        s.set("cohort.effect_sc_delta", &mut c.cohort.effect.sc_delta)?;

        s.set("explain.k", &mut c.explain_k)?;
        s.set("stats.alpha", &mut c.alpha)?;

        s.finish()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&path.display().to_string(), &text)
    }

    /// Canonical text rendering of every key. `from_text(snapshot())`
    /// round-trips, and equal configs produce identical bytes.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        let (d, h, w) = self.model.volume.input_shape;
        writeln!(s, "[model]").unwrap();
        writeln!(s, "volume_shape = {d},{h},{w}").unwrap();
        writeln!(s, "conv_channels = {}", join(&self.model.volume.conv_channels)).unwrap();
        writeln!(s, "dense_widths = {}", join(&self.model.volume.dense_widths)).unwrap();
        writeln!(s, "volume_latent = {}", self.model.volume.latent_dim).unwrap();
        writeln!(s, "fnc_nodes = {}", self.model.fnc.n_nodes).unwrap();
        writeln!(s, "fnc_hidden = {}", join(&self.model.fnc.hidden)).unwrap();
        writeln!(s, "fnc_latent = {}", self.model.fnc.latent_dim).unwrap();
        writeln!(s, "sc_nodes = {}", self.model.sc.n_nodes).unwrap();
        writeln!(s, "sc_hidden = {}", join(&self.model.sc.hidden)).unwrap();
        writeln!(s, "sc_latent = {}", self.model.sc.latent_dim).unwrap();
        writeln!(s, "cheb_k = {}", self.model.sc.cheb_k).unwrap();
        writeln!(s, "classifier_hidden = {}", join(&self.model.classifier_hidden)).unwrap();
        writeln!(s, "lambda_max = {}", self.model.lambda_max.render()).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[train]").unwrap();
        writeln!(s, "folds = {}", self.train.folds).unwrap();
        writeln!(s, "batch_size = {}", self.train.batch_size).unwrap();
        writeln!(s, "lr = {}", self.train.lr).unwrap();
        writeln!(s, "weight_decay = {}", self.train.weight_decay).unwrap();
        writeln!(s, "epochs = {}", self.train.epochs).unwrap();
        writeln!(s, "seed = {}", self.train.seed).unwrap();
        writeln!(s, "precision = {}", self.train.precision.name()).unwrap();
        writeln!(s, "beta1 = {}", self.train.beta1).unwrap();
        writeln!(s, "beta2 = {}", self.train.beta2).unwrap();
        writeln!(s, "eps = {}", self.train.eps).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[cohort]").unwrap();
        writeln!(s, "seed = {}", self.cohort.seed).unwrap();
        writeln!(s, "n_neg = {}", self.cohort.n_neg).unwrap();
        writeln!(s, "n_pos = {}", self.cohort.n_pos).unwrap();
        writeln!(s, "volume_shape = {}", join(&self.cohort.volume_shape)).unwrap();
        writeln!(s, "n_rois = {}", self.cohort.n_rois).unwrap();
        writeln!(s, "fnc_nodes = {}", self.cohort.fnc_nodes).unwrap();
        writeln!(s, "sc_nodes = {}", self.cohort.sc_nodes).unwrap();
        writeln!(s, "abeta_cutoff = {}", self.cohort.abeta_cutoff).unwrap();
        writeln!(s, "effect_gm_rois = {}", join(&self.cohort.effect.gm_rois)).unwrap();
        writeln!(s, "effect_gm_delta = {}", self.cohort.effect.gm_delta).unwrap();
        writeln!(s, "effect_fnc_nodes = {}", join(&self.cohort.effect.fnc_nodes)).unwrap();
        writeln!(s, "effect_fnc_delta = {}", self.cohort.effect.fnc_delta).unwrap();
        writeln!(s, "effect_sc_nodes = {}", join(&self.cohort.effect.sc_nodes)).unwrap();
        writeln!(s, "effect_sc_delta = {}", self.cohort.effect.sc_delta).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[explain]").unwrap();
        writeln!(s, "k = {}", self.explain_k).unwrap();
        writeln!(s).unwrap();
        writeln!(s, "[stats]").unwrap();
        writeln!(s, "alpha = {}", self.alpha).unwrap();
        s
    }

    /// SHA-256 of the canonical snapshot bytes.
    pub fn digest(&self) -> String {
        sha256_hex(self.snapshot().as_bytes())
    }

    /// Fast profile for end-to-end runs on a laptop: narrower volume branch,
    /// few epochs, higher learning rate. Cohort and graph branches are
    /// untouched.
    pub fn apply_desk_scale(&mut self) {
        self.model.volume.conv_channels = [4, 4, 8, 8, 16, 16];
        self.model.volume.dense_widths = [256, 128, 64];
        self.train.epochs = 8;
        self.train.lr = 1e-3;
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.cohort.validate()?;
        if self.explain_k == 0 {
            return Err(Error::Config("explain.k must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "stats.alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_snapshot() {
        let c = RunConfig::default();
        let text = c.snapshot();
        let back = RunConfig::from_text("test", &text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.snapshot(), text);
    }

    #[test]
    fn desk_scale_round_trips_and_changes_digest() {
        let base = RunConfig::default();
        let mut desk = RunConfig::default();
        desk.apply_desk_scale();
        assert_ne!(base.digest(), desk.digest());
        let back = RunConfig::from_text("test", &desk.snapshot()).unwrap();
        assert_eq!(back, desk);
        desk.validate().unwrap();
    }

    #[test]
    fn overrides_apply_over_defaults() {
        let text = "\
[train]
epochs = 12
lr = 0.5

[model]
cheb_k = 4
lambda_max = exact

[cohort]
effect_gm_rois = 1,2
effect_gm_delta = 0
";
        let c = RunConfig::from_text("test", text).unwrap();
        assert_eq!(c.train.epochs, 12);
        assert_eq!(c.train.lr, 0.5);
        assert_eq!(c.model.sc.cheb_k, 4);
        assert_eq!(c.model.lambda_max, LambdaMax::Exact);
        assert_eq!(c.cohort.effect.gm_rois, vec![1, 2]);
        assert_eq!(c.cohort.effect.gm_delta, 0.0);
        // untouched keys keep defaults
        assert_eq!(c.train.batch_size, 16);
        assert_eq!(c.explain_k, 10);
    }

    #[test]
    fn empty_list_value_parses_and_round_trips() {
        let text = "[cohort]\neffect_sc_nodes =\n";
        let c = RunConfig::from_text("test", text).unwrap();
        assert!(c.cohort.effect.sc_nodes.is_empty());
        let back = RunConfig::from_text("t2", &c.snapshot()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn rejects_unknown_keys_sections_and_syntax() {
        let err = RunConfig::from_text("t", "[train]\nepochz = 3\n").unwrap_err();
        assert!(err.to_string().contains("epochz"), "{err}");

        let err = RunConfig::from_text("t", "[nonsense]\nx = 1\n").unwrap_err();
        assert!(err.to_string().contains("nonsense"), "{err}");

        let err = RunConfig::from_text("t", "orphan = 1\n").unwrap_err();
        assert!(err.to_string().contains("section"), "{err}");

        let err = RunConfig::from_text("t", "[train]\nno equals sign\n").unwrap_err();
        assert!(err.to_string().contains("key = value"), "{err}");

        let err = RunConfig::from_text("t", "[train]\nepochs = 1\nepochs = 2\n").unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");

        let err = RunConfig::from_text("t", "[train]\nepochs = soon\n").unwrap_err();
        assert!(err.to_string().contains("bad value"), "{err}");

        let err = RunConfig::from_text("t", "[model]\nvolume_shape = 8,8\n").unwrap_err();
        assert!(err.to_string().contains("3 values"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let text = "# leading comment\n\n[stats]\nalpha = 0.01  # inline\n";
        let c = RunConfig::from_text("t", text).unwrap();
        assert_eq!(c.alpha, 0.01);
    }

    #[test]
    fn digest_is_stable_and_value_sensitive() {
        let a = RunConfig::default();
        let b = RunConfig::default();
        assert_eq!(a.digest(), b.digest());
        let mut c = RunConfig::default();
        c.train.seed = 1;
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn validate_rejects_bad_alpha_and_k() {
        let mut c = RunConfig::default();
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.explain_k = 0;
        assert!(c.validate().is_err());
    }
}
