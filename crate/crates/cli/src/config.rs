//! Experiment configuration: JSON in, validated grid out.
//!
//! A config names its datasets either as local ARFF/CSV paths or as OpenML
//! descriptors (fetched through the cache, so a pre-seeded cache runs
//! air-gapped). Validation happens in two stages: everything knowable from
//! the document alone is checked here; per-dataset checks that need the
//! parsed data (class-count bounds for the flip rate) run when the runner
//! loads them.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use noisytree_core::correction::CorrectionKind;
use noisytree_core::criteria::Criterion;
use noisytree_core::evaluation::ModelSpec;
use noisytree_core::noise::ETA_GRID_MAX;
use noisytree_openml::DatasetDescriptor;

/// A dataset reference: `"path/to/file.arff"` or a full descriptor object.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum DatasetSource {
    Local(PathBuf),
    Remote(DatasetDescriptor),
}

impl DatasetSource {
    /// Name used in result records; local files go by their stem.
    pub fn name(&self) -> String {
        match self {
            DatasetSource::Local(path) => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            DatasetSource::Remote(d) => d.name.clone(),
        }
    }
}

fn default_n_trees() -> usize {
    100
}

fn default_cache_dir() -> PathBuf {
    PathBuf::from("openml-cache")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetSource>,
    pub models: Vec<String>,
    pub corrections: Vec<String>,
    pub criterion: String,
    pub etas: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub output_path: PathBuf,
    #[serde(default = "default_n_trees")]
    pub n_trees: usize,
    #[serde(default)]
    pub noise_on_test: bool,
    #[serde(default = "default_cache_dir")]
    pub cache_dir: PathBuf,
}

const MODEL_VOCAB: [&str; 3] = ["decision_tree", "random_forest", "extra_trees"];
const CORRECTION_VOCAB: [&str; 3] = ["none", "forward", "backward"];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let config: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| format!("config parse: {e}"))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads the file and rebases relative dataset/cache/output paths onto
    /// its directory, so a config works from any working directory.
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        let mut config = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            config.rebase(dir);
        }
        Ok(config)
    }

    fn rebase(&mut self, dir: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        for source in &mut self.datasets {
            if let DatasetSource::Local(path) = source {
                rebase(path);
            }
        }
        rebase(&mut self.cache_dir);
        rebase(&mut self.output_path);
    }

    fn validate(&self) -> Result<(), String> {
        fn vocab_list(what: &str, given: &[String], vocab: &[&str]) -> Result<(), String> {
            if given.is_empty() {
                return Err(format!("{what} list is empty"));
            }
            for (i, item) in given.iter().enumerate() {
                if !vocab.contains(&item.as_str()) {
                    return Err(format!(
                        "unknown {what} {item:?}; expected one of {vocab:?}"
                    ));
                }
                if given[..i].contains(item) {
                    return Err(format!("{what} {item:?} listed twice"));
                }
            }
            Ok(())
        }

        if self.datasets.is_empty() {
            return Err("dataset list is empty".into());
        }
        vocab_list("model", &self.models, &MODEL_VOCAB)?;
        vocab_list("correction", &self.corrections, &CORRECTION_VOCAB)?;
        if !["gini_mse", "entropy_ce"].contains(&self.criterion.as_str()) {
            return Err(format!(
                "unknown criterion {:?}; expected gini_mse or entropy_ce",
                self.criterion
            ));
        }
        if self.criterion == "entropy_ce" && self.corrections.iter().any(|c| c == "backward") {
            return Err(
                "backward correction requires gini_mse: entropy_ce cannot fit the transformed \
                 soft labels"
                    .into(),
            );
        }
        if self.etas.is_empty() {
            return Err("eta list is empty".into());
        }
        for &eta in &self.etas {
            if !eta.is_finite() || !(0.0..=ETA_GRID_MAX).contains(&eta) {
                return Err(format!(
                    "flip rate {eta} outside the supported grid [0, {ETA_GRID_MAX}]; rates at or \
                     above (c-1)/c would also make the noise matrix singular"
                ));
            }
        }
        for source in &self.datasets {
            if let DatasetSource::Remote(d) = source {
                let bound = (d.expected_c as f64 - 1.0) / d.expected_c as f64;
                for &eta in &self.etas {
                    if eta >= bound {
                        return Err(format!(
                            "flip rate {eta} is not below ({}-1)/{} for dataset {}",
                            d.expected_c, d.expected_c, d.name
                        ));
                    }
                }
            }
        }
        if self.folds < 2 {
            return Err(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.n_trees == 0 {
            return Err("n_trees must be positive".into());
        }
        let mut names = Vec::new();
        for source in &self.datasets {
            let name = source.name();
            if name.is_empty() {
                return Err("a dataset has an empty name".into());
            }
            if name.contains(',') || name.contains('\n') || name.contains('\r') {
                return Err(format!(
                    "dataset name {name:?} contains a comma or newline; it could not be written \
                     to the results CSV"
                ));
            }
            if names.contains(&name) {
                return Err(format!("dataset name {name:?} appears twice"));
            }
            names.push(name);
        }
        Ok(())
    }

    pub fn parsed_criterion(&self) -> Criterion {
        match self.criterion.as_str() {
            "gini_mse" => Criterion::GiniMse,
            "entropy_ce" => Criterion::EntropyCe,
            other => unreachable!("validation admitted criterion {other:?}"),
        }
    }

    pub fn parsed_models(&self) -> Vec<ModelSpec> {
        self.models
            .iter()
            .map(|m| match m.as_str() {
                "decision_tree" => ModelSpec::DecisionTree,
                "random_forest" => ModelSpec::RandomForest {
                    n_trees: self.n_trees,
                },
                "extra_trees" => ModelSpec::ExtraTrees {
                    n_trees: self.n_trees,
                },
                other => unreachable!("validation admitted model {other:?}"),
            })
            .collect()
    }

    pub fn parsed_corrections(&self) -> Vec<CorrectionKind> {
        self.corrections
            .iter()
            .map(|c| match c.as_str() {
                "none" => CorrectionKind::None,
                "forward" => CorrectionKind::Forward,
                "backward" => CorrectionKind::Backward,
                other => unreachable!("validation admitted correction {other:?}"),
            })
            .collect()
    }
}
