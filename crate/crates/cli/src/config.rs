use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gcl_core::data::FeatureFormat;
use gcl_core::{GclConfig, SynthConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Everything a run needs besides the model configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub features: Option<PathBuf>,
    /// Defaults to `manifest.json` next to the features.
    pub manifest: Option<PathBuf>,
    pub test_features: Option<PathBuf>,
    pub test_manifest: Option<PathBuf>,
    pub format: String,
    pub out: PathBuf,
    /// Defaults to `<out>/checkpoint.gclc`.
    pub checkpoint: Option<PathBuf>,
    pub feature_scale: f64,
    pub pooling: String,
    pub verbosity: u8,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            features: None,
            manifest: None,
            test_features: None,
            test_manifest: None,
            format: "gclf".into(),
            out: PathBuf::from("gcl-out"),
            checkpoint: None,
            feature_scale: 1.0,
            pooling: "pooled".into(),
            verbosity: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub run: RunSettings,
    pub gcl: GclConfig,
}

/// A dataset location: features plus the manifest describing them.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub features: PathBuf,
    pub manifest: PathBuf,
}

impl DataPaths {
    fn new(features: &Path, manifest: Option<&Path>, format: FeatureFormat) -> Self {
        let manifest = manifest.map(Path::to_path_buf).unwrap_or_else(|| match format {
            FeatureFormat::Gclf => features.join("manifest.json"),
            FeatureFormat::Csv => features.with_file_name("manifest.json"),
        });
        Self {
            features: features.to_path_buf(),
            manifest,
        }
    }
}

fn keys_of<T: Serialize>(value: &T) -> BTreeSet<String> {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::Object(map)) => map.keys().cloned().collect(),
        _ => BTreeSet::new(),
    }
}

/// Reads a TOML table from `path`, or an empty table.
pub fn read_table(path: Option<&Path>) -> Result<Table> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse::<Table>()
        .map_err(|e| anyhow!("{}: {}", path.display(), e.message()))
}

/// Splits `table` into the keys accepted by `a` and `b`, reporting every
/// key accepted by neither.
fn split_table(table: Table, a: &BTreeSet<String>, b: &BTreeSet<String>) -> Result<(Table, Table)> {
    let (mut ta, mut tb, mut unknown) = (Table::new(), Table::new(), Vec::new());
    for (k, v) in table {
        if a.contains(&k) {
            ta.insert(k, v);
        } else if b.contains(&k) {
            tb.insert(k, v);
        } else {
            unknown.push(k);
        }
    }
    if !unknown.is_empty() {
        bail!("unknown config keys: {}", unknown.join(", "));
    }
    Ok((ta, tb))
}

fn deserialize<T: for<'de> Deserialize<'de>>(table: Table) -> Result<T> {
    T::deserialize(Value::Table(table)).map_err(|e| anyhow!("{}", e.message()))
}

/// Merges `overrides` over the contents of the config file and deserializes
/// the result. Defaults fill whatever neither sets.
pub fn resolve_run(file: Option<&Path>, overrides: Table) -> Result<RunConfig> {
    let mut table = read_table(file)?;
    table.extend(overrides);
    let run_keys = keys_of(&RunSettings::default());
    let gcl_keys = keys_of(&GclConfig::default());
    let (run, gcl) = split_table(table, &run_keys, &gcl_keys)?;
    Ok(RunConfig {
        run: deserialize(run)?,
        gcl: deserialize(gcl)?,
    })
}

/// Synthetic-data settings plus where and how to write them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthRun {
    pub out: PathBuf,
    pub format: String,
    /// Videos in a held-out split written to `<out>/test`; the training split
    /// then goes to `<out>/train`.
    pub test_videos: usize,
}

impl Default for SynthRun {
    fn default() -> Self {
        Self {
            out: PathBuf::from("synth"),
            format: "gclf".into(),
            test_videos: 0,
        }
    }
}

pub fn resolve_synth(file: Option<&Path>, overrides: Table) -> Result<(SynthRun, SynthConfig)> {
    let mut table = read_table(file)?;
    table.extend(overrides);
    let (run, synth) = split_table(table, &keys_of(&SynthRun::default()), &keys_of(&SynthConfig::default()))?;
    Ok((deserialize(run)?, deserialize(synth)?))
}

impl RunConfig {
    pub fn format(&self) -> Result<FeatureFormat> {
        Ok(self.run.format.parse()?)
    }

    pub fn train_data(&self) -> Result<DataPaths> {
        let features = self
            .run
            .features
            .as_deref()
            .ok_or_else(|| anyhow!("no features given (set `features` or pass --features)"))?;
        Ok(DataPaths::new(features, self.run.manifest.as_deref(), self.path_format()))
    }

    /// The held-out split when configured, otherwise the training data.
    pub fn test_data(&self) -> Result<DataPaths> {
        match &self.run.test_features {
            Some(f) => Ok(DataPaths::new(f, self.run.test_manifest.as_deref(), self.path_format())),
            None => self.train_data(),
        }
    }

    /// The format used to derive default manifest paths; an invalid format
    /// is reported by [`RunConfig::run_violations`].
    fn path_format(&self) -> FeatureFormat {
        self.format().unwrap_or_default()
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.run
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.run.out.join("checkpoint.gclc"))
    }

    /// Problems with the settings that do not depend on the data.
    pub fn run_violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if let Err(e) = self.run.format.parse::<FeatureFormat>() {
            v.push(e.to_string());
        }
        if !(self.run.feature_scale.is_finite() && self.run.feature_scale > 0.0) {
            v.push(format!("feature_scale must be positive, got {}", self.run.feature_scale));
        }
        if let Err(e) = self.pooling() {
            v.push(e.to_string());
        }
        v
    }

    pub fn pooling(&self) -> Result<gcl_core::eval::AucPooling> {
        match self.run.pooling.as_str() {
            "pooled" => Ok(gcl_core::eval::AucPooling::Pooled),
            "per_video_mean" => Ok(gcl_core::eval::AucPooling::PerVideoMean),
            other => bail!("unknown pooling {other:?} (expected pooled or per_video_mean)"),
        }
    }

    /// Flat TOML holding every resolved key, readable by `--config`.
    pub fn to_toml(&self) -> Result<String> {
        let mut table = Table::try_from(&self.run)?;
        table.extend(Table::try_from(&self.gcl)?);
        Ok(toml::to_string(&table)?)
    }
}
