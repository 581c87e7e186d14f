use std::fs;
use std::path::{Path, PathBuf};

use ringfl::data::{Heterogeneity, MultiAttributeSpec, SyntheticSpec};
use ringfl::global::FitConfig;
use ringfl::nn::ModelSpec;
use ringfl::protocol::Schedule;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

/// Environment variable that, when set, is the root for relative output
/// directories (instead of the working directory).
pub const OUTPUT_ROOT_ENV: &str = "RINGFL_OUTPUT_ROOT";

/// One experiment, as read from JSON.
///
/// Defaults: schedule as [`Schedule::default`] (30 rounds, 2/2/2 epochs,
/// batch 10, head lr 1e-4, backbone lr 4e-4, baseline lr 5e-4, all halved
/// every 10 rounds, AdamW with weight decay 0.1), `test_fraction` 0.25,
/// `seed` 0, no fault script, no global models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Required for class-labelled data; must be absent for attribute data,
    /// where every node sees the same samples and learns its own attribute.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<Heterogeneity>,
    pub clients: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub model: ModelConfig,
    #[serde(default)]
    pub schedule: Schedule,
    pub strategy: Strategy,
    /// Resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_script: Option<PathBuf>,
    #[serde(default)]
    pub global: GlobalFlags,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Fill the `wall_ms` metrics column; off by default so outputs are
    /// byte-reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn default_test_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Blobs {
        classes: usize,
        dims: usize,
        samples_per_class: usize,
        cluster_spread: f64,
        inter_cluster_scale: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        informative_dims: Option<usize>,
    },
    MultiAttribute {
        tasks: usize,
        dims: usize,
        samples: usize,
        #[serde(default = "default_rank")]
        latent_rank: usize,
        #[serde(default)]
        label_noise: f64,
    },
    /// Paths are resolved against the config file's directory.
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limit: Option<usize>,
    },
}

fn default_rank() -> usize {
    4
}

impl DatasetSource {
    pub fn is_attribute(&self) -> bool {
        matches!(self, DatasetSource::MultiAttribute { .. })
    }

    pub fn blobs_spec(&self, seed: u64) -> Option<SyntheticSpec> {
        match *self {
            DatasetSource::Blobs { classes, dims, samples_per_class, cluster_spread, inter_cluster_scale, informative_dims } => {
                Some(SyntheticSpec {
                    num_classes: classes,
                    dims,
                    samples_per_class,
                    cluster_spread,
                    inter_cluster_scale,
                    informative_dims,
                    seed,
                })
            }
            _ => None,
        }
    }

    pub fn attribute_spec(&self, seed: u64) -> Option<MultiAttributeSpec> {
        match *self {
            DatasetSource::MultiAttribute { tasks, dims, samples, latent_rank, label_noise } => {
                Some(MultiAttributeSpec { tasks, dims, samples, latent_rank, label_noise, seed })
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Layer widths from input to output.
    pub widths: Vec<usize>,
    /// First head layer; defaults to the last layer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_index: Option<usize>,
}

impl ModelConfig {
    pub fn spec(&self) -> Result<ModelSpec, HarnessError> {
        let split = self.split_index.unwrap_or(self.widths.len().saturating_sub(2));
        ModelSpec::mlp(&self.widths, split).map_err(|e| HarnessError::Config(format!("model: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Li,
    /// Ring training with the joint phase disabled.
    LiNoOptional,
    Fedavg,
    Isolated,
    PerBatchRing,
    /// Ring training over attribute tasks, one binary head per node.
    MtlLi,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Li => "li",
            Strategy::LiNoOptional => "li_no_optional",
            Strategy::Fedavg => "fedavg",
            Strategy::Isolated => "isolated",
            Strategy::PerBatchRing => "per_batch_ring",
            Strategy::MtlLi => "mtl_li",
        }
    }

    pub fn is_ring(self) -> bool {
        matches!(self, Strategy::Li | Strategy::LiNoOptional | Strategy::MtlLi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobalFlags {
    #[serde(default)]
    pub probe: bool,
    #[serde(default)]
    pub stacked: bool,
    #[serde(default)]
    pub moe: bool,
    #[serde(default)]
    pub fit: FitConfig,
}

impl Default for GlobalFlags {
    fn default() -> Self {
        Self { probe: false, stacked: false, moe: false, fit: FitConfig::default() }
    }
}

impl GlobalFlags {
    pub fn any(&self) -> bool {
        self.probe || self.stacked || self.moe
    }
}

/// Strict parse; the error names the offending field path.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        HarnessError::Schema { path, message: e.into_inner().to_string() }
    })
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Read { path: path.to_path_buf(), source })?;
    parse_config_str(&text)
}

impl ExperimentConfig {
    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.clients == 0 {
            return bad("clients must be at least 1".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} must lie strictly between 0 and 1", self.test_fraction));
        }
        let spec = self.model.spec()?;
        self.schedule.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        if self.strategy.is_ring() && self.schedule.backbone_epochs == 0 {
            return bad("ring strategies need backbone_epochs ≥ 1".into());
        }
        match &self.dataset {
            DatasetSource::Blobs { classes, dims, .. } => {
                if let Err(e) = self.dataset.blobs_spec(0).unwrap().validate() {
                    return bad(format!("dataset: {e}"));
                }
                if spec.input_width() != *dims || spec.output_width() != *classes {
                    return bad(format!(
                        "model maps {} → {} but the data has {dims} features and {classes} classes",
                        spec.input_width(),
                        spec.output_width()
                    ));
                }
            }
            DatasetSource::MultiAttribute { tasks, dims, .. } => {
                if let Err(e) = self.dataset.attribute_spec(0).unwrap().validate() {
                    return bad(format!("dataset: {e}"));
                }
                if spec.input_width() != *dims || spec.output_width() != 1 {
                    return bad("attribute data needs a model with the data's input width and one output".into());
                }
                if self.clients != *tasks {
                    return bad(format!("attribute data has {tasks} tasks but {} clients were configured", self.clients));
                }
            }
            DatasetSource::Idx { limit: Some(0), .. } => return bad("idx limit must be positive".into()),
            DatasetSource::Idx { .. } => {}
        }
        match (self.dataset.is_attribute(), &self.heterogeneity) {
            (true, Some(_)) => return bad("attribute data is not partitioned; remove heterogeneity".into()),
            (false, None) => return bad("class-labelled data needs a heterogeneity scheme".into()),
            _ => {}
        }
        match (self.strategy, self.dataset.is_attribute()) {
            (Strategy::MtlLi, false) => return bad("mtl_li needs a multi_attribute dataset".into()),
            (Strategy::Li | Strategy::LiNoOptional | Strategy::Fedavg | Strategy::PerBatchRing, true) => {
                return bad(format!("strategy {} needs class-labelled data", self.strategy.as_str()))
            }
            _ => {}
        }
        if let Some(Heterogeneity::Dirichlet { beta, .. }) = self.heterogeneity {
            if !(beta > 0.0 && beta.is_finite()) {
                return bad(format!("dirichlet beta {beta} must be positive"));
            }
        }
        if self.fault_script.is_some() && !self.strategy.is_ring() {
            return bad("fault scripts apply only to ring strategies".into());
        }
        if self.global.any() {
            if !matches!(self.strategy, Strategy::Li | Strategy::LiNoOptional) {
                return bad("global models need strategy li or li_no_optional".into());
            }
            self.global.fit.validate().map_err(|e| HarnessError::Config(format!("global.fit: {e}")))?;
        }
        if self.output_dir.as_os_str().is_empty() {
            return bad("output_dir is empty".into());
        }
        Ok(())
    }

    /// Output directory: absolute paths as given, relative ones under
    /// `$RINGFL_OUTPUT_ROOT` when set and under `base_dir` otherwise.
    pub fn resolved_output_dir(&self, base_dir: &Path) -> PathBuf {
        if self.output_dir.is_absolute() {
            return self.output_dir.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) => PathBuf::from(root).join(&self.output_dir),
            None => base_dir.join(&self.output_dir),
        }
    }

    /// The schedule actually run: `li_no_optional` forces `full_epochs` to 0.
    pub fn effective_schedule(&self) -> Schedule {
        let mut s = self.schedule.clone();
        if self.strategy == Strategy::LiNoOptional {
            s.full_epochs = 0;
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "dataset": {"kind": "blobs", "classes": 3, "dims": 4, "samples_per_class": 20,
                    "cluster_spread": 1.0, "inter_cluster_scale": 2.0},
        "heterogeneity": {"scheme": "iid"},
        "clients": 2,
        "model": {"widths": [4, 8, 3]},
        "strategy": "li",
        "output_dir": "out"
    }"#;

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        c.validate().unwrap();
        assert_eq!(c.schedule, Schedule::default());
        assert_eq!(c.schedule.head_lr.base_lr, 1e-4);
        assert_eq!(c.schedule.backbone_lr.base_lr, 4e-4);
        assert_eq!((c.schedule.head_epochs, c.schedule.backbone_epochs, c.schedule.full_epochs), (2, 2, 2));
        assert_eq!(c.test_fraction, 0.25);
        assert_eq!(c.seed, 0);
        assert!(!c.global.any() && !c.record_wall_time && c.fault_script.is_none());
        assert_eq!(c.model.spec().unwrap().split_index(), 1);
    }

    #[test]
    fn unknown_keys_are_named() {
        let text = MINIMAL.replace("\"clients\": 2,", "\"clients\": 2, \"foo\": 1,");
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("foo"), "{err}");
        let nested = MINIMAL.replace("\"strategy\": \"li\"", "\"strategy\": \"li\", \"schedule\": {\"rounds\": 3, \"bogus\": 1}");
        let err = parse_config_str(&nested).unwrap_err().to_string();
        assert!(err.contains("schedule") && err.contains("bogus"), "{err}");
    }

    #[test]
    fn type_errors_carry_the_field_path() {
        let text = MINIMAL.replace("\"widths\": [4, 8, 3]", "\"widths\": [4, \"x\", 3]");
        let err = parse_config_str(&text).unwrap_err().to_string();
        assert!(err.contains("model.widths"), "{err}");
    }

    #[test]
    fn emitted_config_parses_back_equal() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(parse_config_str(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn inconsistent_configs_rejected() {
        let cases = [
            MINIMAL.replace("\"widths\": [4, 8, 3]", "\"widths\": [5, 8, 3]"),
            MINIMAL.replace("\"heterogeneity\": {\"scheme\": \"iid\"},", ""),
            MINIMAL.replace("\"strategy\": \"li\"", "\"strategy\": \"mtl_li\""),
            MINIMAL.replace("\"strategy\": \"li\"", "\"strategy\": \"fedavg\", \"global\": {\"probe\": true}"),
            MINIMAL.replace("\"strategy\": \"li\"", "\"strategy\": \"isolated\", \"fault_script\": \"f.txt\""),
            MINIMAL.replace("\"clients\": 2", "\"clients\": 0"),
        ];
        for text in cases {
            let c = parse_config_str(&text).unwrap();
            assert!(c.validate().is_err(), "{text}");
        }
    }
}
