//! Line-oriented `key = value` configuration with `[section]` headers.
//!
//! ```text
//! # comment
//! seeds = 0, 1, 2
//! [train]
//! algo = mrt
//! k = 10
//! ```
//!
//! Keys before the first header belong to the unnamed section `""`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::diffcore::OptimConfig;
use crate::error::{Error, Result};
use crate::robusttrain::{Algorithm, AscentStep, Granularity, MdaReduction, TrainConfig};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        sections.insert(current.clone(), BTreeMap::new());
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config(format!("line {}: unterminated section header", n + 1)))?
                    .trim();
                if name.is_empty() {
                    return Err(Error::config(format!("line {}: empty section name", n + 1)));
                }
                current = name.to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(Error::config(format!("line {}: empty key", n + 1)));
            }
            let section = sections.get_mut(&current).expect("section exists");
            if section.insert(k.to_string(), v.trim().to_string()).is_some() {
                let at = if current.is_empty() { String::new() } else { format!(" in [{current}]") };
                return Err(Error::config(format!("line {}: duplicate key `{k}`{at}", n + 1)));
            }
        }
        Ok(ConfigFile { sections })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.keys().map(String::as_str)
    }

    pub fn keys(&self, section: &str) -> Vec<&str> {
        self.sections
            .get(section)
            .map(|s| s.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// Typed lookup; a present but unparsable value is a config error.
    pub fn parse_value<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Error::config(format!("[{section}] {key}: cannot parse `{v}`"))
            }),
        }
    }

    /// Comma-separated list.
    pub fn parse_list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|_| Error::config(format!("[{section}] {key}: cannot parse `{s}`"))))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    /// Rejects keys of `section` outside `allowed`.
    pub fn check_keys(&self, section: &str, allowed: &[&str]) -> Result<()> {
        for k in self.keys(section) {
            if !allowed.contains(&k) {
                return Err(Error::config(format!("unknown key `{k}` in [{section}]")));
            }
        }
        Ok(())
    }
}

/// What an experiment run does.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    Train,
    Eval,
    AblateK,
    ModelQuality,
    Curate,
    LearnModel,
    Compose,
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "train" => ExperimentKind::Train,
            "eval" => ExperimentKind::Eval,
            "ablate-k" => ExperimentKind::AblateK,
            "model-quality" => ExperimentKind::ModelQuality,
            "curate" => ExperimentKind::Curate,
            "learn-model" => ExperimentKind::LearnModel,
            "compose" => ExperimentKind::Compose,
            _ => return Err(Error::config(format!("unknown experiment kind `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Named dataset manifests (`train`, `test`, ...).
    pub datasets: BTreeMap<String, PathBuf>,
    /// Variation model descriptor files.
    pub models: Vec<PathBuf>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

const TRAIN_KEYS: &[&str] = &[
    "algo", "k", "lambda", "epochs", "batch", "lr", "optimizer", "weight_decay", "mat_alpha", "mat_step",
    "granularity", "mda_reduction", "pgd_epsilon", "pgd_alpha", "pgd_steps", "widths", "classes", "arch", "monitor",
];

/// Applies the `[train]` section on top of `base`.
pub fn train_config_from(file: &ConfigFile, base: TrainConfig) -> Result<TrainConfig> {
    let s = "train";
    file.check_keys(s, TRAIN_KEYS)?;
    let mut c = base;
    if let Some(a) = file.parse_value::<Algorithm>(s, "algo")? {
        c.algorithm = a;
        c.k = a.default_k();
    }
    if let Some(v) = file.parse_value(s, "k")? {
        c.k = v;
    }
    if let Some(v) = file.parse_value(s, "lambda")? {
        c.lambda = v;
    }
    if let Some(v) = file.parse_value(s, "epochs")? {
        c.epochs = v;
    }
    if let Some(v) = file.parse_value(s, "batch")? {
        c.batch_size = v;
    }
    let lr: Option<f64> = file.parse_value(s, "lr")?;
    match file.get(s, "optimizer") {
        None | Some("adadelta") => {
            if file.get(s, "optimizer").is_some() || lr.is_some() {
                c.optim = OptimConfig::adadelta();
            }
            if let Some(lr) = lr {
                c.optim.lr = lr;
            }
        }
        Some("sgd") => c.optim = OptimConfig::sgd(lr.unwrap_or(0.01)),
        Some("adam") => c.optim = OptimConfig::adam(lr.unwrap_or(1e-3)),
        Some(o) => return Err(Error::config(format!("unknown optimizer `{o}` (adadelta|sgd|adam)"))),
    }
    if let Some(v) = file.parse_value(s, "weight_decay")? {
        c.optim.weight_decay = v;
    }
    if let Some(v) = file.parse_value(s, "mat_alpha")? {
        c.mat_alpha = Some(v);
    }
    if let Some(v) = file.get(s, "mat_step") {
        c.mat_step = match v {
            "raw" => AscentStep::Raw,
            "sign" => AscentStep::Sign,
            _ => return Err(Error::config(format!("mat_step must be raw|sign, got `{v}`"))),
        };
    }
    if let Some(v) = file.get(s, "granularity") {
        c.granularity = match v {
            "batch" => Granularity::Batch,
            "per-example" => Granularity::PerExample,
            _ => return Err(Error::config(format!("granularity must be batch|per-example, got `{v}`"))),
        };
    }
    if let Some(v) = file.get(s, "mda_reduction") {
        c.mda_reduction = match v {
            "sum" => MdaReduction::Sum,
            "mean" => MdaReduction::Mean,
            _ => return Err(Error::config(format!("mda_reduction must be sum|mean, got `{v}`"))),
        };
    }
    if let Some(v) = file.parse_value(s, "pgd_epsilon")? {
        c.pgd.epsilon = v;
    }
    if let Some(v) = file.parse_value(s, "pgd_alpha")? {
        c.pgd.alpha = v;
    }
    if let Some(v) = file.parse_value(s, "pgd_steps")? {
        c.pgd.steps = v;
    }
    if let Some(w) = file.parse_list::<usize>(s, "widths")? {
        c.widths = w
            .try_into()
            .map_err(|_| Error::config("widths needs exactly four entries"))?;
    }
    if let Some(v) = file.parse_value(s, "classes")? {
        c.classes = v;
    }
    if let Some(a) = file.get(s, "arch") {
        c.arch = Some(a.parse()?);
    }
    if let Some(v) = file.parse_value(s, "monitor")? {
        c.monitor = v;
    }
    c.validate()?;
    Ok(c)
}

impl ExperimentConfig {
    /// Reads `kind`, `seeds`, `out`, `models` from the top section,
    /// `[datasets]` as name = manifest path, and `[train]`. Relative paths
    /// resolve against `base_dir`.
    pub fn from_file(file: &ConfigFile, base_dir: &Path) -> Result<Self> {
        file.check_keys("", &["kind", "seeds", "out", "models"])?;
        for s in file.section_names() {
            if !["", "datasets", "train"].contains(&s) {
                return Err(Error::config(format!("unknown section [{s}]")));
            }
        }
        let kind = file
            .parse_value::<ExperimentKind>("", "kind")?
            .ok_or_else(|| Error::config("missing `kind`"))?;
        let seeds = file.parse_list::<u64>("", "seeds")?.unwrap_or_else(|| vec![0, 1, 2]);
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };
        let out = resolve(file.get("", "out").unwrap_or("out"));
        let models = file
            .parse_list::<String>("", "models")?
            .unwrap_or_default()
            .iter()
            .map(|m| resolve(m))
            .collect();
        let datasets = file
            .keys("datasets")
            .into_iter()
            .map(|k| (k.to_string(), resolve(file.get("datasets", k).unwrap())))
            .collect();
        let cfg = ExperimentConfig {
            kind,
            datasets,
            models,
            train: train_config_from(file, TrainConfig::new(Algorithm::Erm))?,
            seeds,
            out,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::config("seed list is empty"));
        }
        for p in self.datasets.values().chain(&self.models) {
            if !p.exists() {
                return Err(Error::config(format!("{} does not exist", p.display())));
            }
        }
        self.train.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_lists() {
        let f = ConfigFile::parse("# top\nseeds = 1, 2,3\n\n[train]\nalgo = mda\n k= 5 \n[empty]\n").unwrap();
        assert_eq!(f.parse_list::<u64>("", "seeds").unwrap(), Some(vec![1, 2, 3]));
        assert_eq!(f.get("train", "k"), Some("5"));
        assert!(f.has_section("empty"));
        let t = train_config_from(&f, TrainConfig::new(Algorithm::Erm)).unwrap();
        assert_eq!((t.algorithm, t.k), (Algorithm::Mda, 5));
    }

    #[test]
    fn malformed_lines_are_config_errors() {
        for bad in ["[train\nk=1", "just words", "[a]\nk=1\nk=2", "=3"] {
            assert!(matches!(ConfigFile::parse(bad), Err(Error::Config(_))), "{bad}");
        }
        let f = ConfigFile::parse("[train]\nk = many\n").unwrap();
        assert!(matches!(train_config_from(&f, TrainConfig::new(Algorithm::Mrt)), Err(Error::Config(_))));
        let f = ConfigFile::parse("[train]\nbogus = 1\n").unwrap();
        assert!(train_config_from(&f, TrainConfig::new(Algorithm::Mrt)).is_err());
        let f = ConfigFile::parse("[train]\nlambda = -1\n").unwrap();
        assert!(train_config_from(&f, TrainConfig::new(Algorithm::Mrt)).is_err());
    }

    #[test]
    fn experiment_requires_existing_paths_and_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let f = ConfigFile::parse("kind = train\nseeds = 4\n[datasets]\ntrain = missing.manifest\n").unwrap();
        assert!(matches!(ExperimentConfig::from_file(&f, dir.path()), Err(Error::Config(_))));
        let f = ConfigFile::parse("kind = eval\nseeds = \n").unwrap();
        assert!(ExperimentConfig::from_file(&f, dir.path()).is_err());
        let f = ConfigFile::parse("kind = ablate-k\n").unwrap();
        let c = ExperimentConfig::from_file(&f, dir.path()).unwrap();
        assert_eq!(c.seeds, vec![0, 1, 2]);
        assert_eq!(c.kind, ExperimentKind::AblateK);
    }
}
