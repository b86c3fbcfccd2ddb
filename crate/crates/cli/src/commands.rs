use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gcl_core::data::{
    load_dataset, scale_features, temporal_difference_indices, write_features_csv, CleanerConfig, FeatureFormat,
};
use gcl_core::eval::{attach_labels, evaluate, export_scores, AucPooling};
use gcl_core::gcl::{check_mode_requirements, load_checkpoint, save_checkpoint, score_segments, supervision_mask};
use gcl_core::{DatasetManifest, FeatureRecord, GclModel, SynthConfig, SyntheticDataset, VideoLabel};
use toml::Table;

use crate::config::{resolve_run, resolve_synth, DataPaths, RunConfig};

/// An error with a machine-readable kind, printed as `error[kind]: message`.
#[derive(Debug)]
pub struct Failure {
    pub kind: &'static str,
    pub message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn fail(kind: &'static str, message: impl Into<String>) -> anyhow::Error {
    Failure {
        kind,
        message: message.into(),
    }
    .into()
}

fn validation(problems: Vec<String>) -> Result<()> {
    match problems.len() {
        0 => Ok(()),
        1 => Err(fail("config", problems[0].clone())),
        n => Err(fail("config", format!("{n} problems: {}", problems.join("; ")))),
    }
}

pub fn resolve(file: Option<&Path>, overrides: Table) -> Result<RunConfig> {
    resolve_run(file, overrides).map_err(|e| fail("config", format!("{e:#}")))
}

fn load_manifest(paths: &DataPaths) -> Result<DatasetManifest> {
    Ok(DatasetManifest::load(&paths.manifest)?)
}

fn load_records(cfg: &RunConfig, paths: &DataPaths, manifest: &DatasetManifest) -> Result<Vec<FeatureRecord>> {
    let mut records = load_dataset(&paths.features, manifest, cfg.format()?)?;
    if cfg.run.feature_scale != 1.0 {
        scale_features(&mut records, cfg.run.feature_scale);
    }
    Ok(records)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// A labeled set scored after every epoch.
struct Monitor {
    records: Vec<FeatureRecord>,
    manifest: DatasetManifest,
    pooling: AucPooling,
}

impl Monitor {
    fn auc(&self, model: &GclModel) -> Result<f64> {
        let mut series = score_segments(&model.disc, &self.records, &self.manifest)?;
        attach_labels(&mut series, &self.manifest)?;
        Ok(evaluate(&series, self.pooling)?.auc)
    }
}

const LOG_HEADER: &str =
    "epoch\tbatches\trecon_loss\tdisc_loss\tgen_loss\tgen_label_rate\tdisc_label_rate\tskipped_gen_steps\tauc";

pub fn train(cfg: &RunConfig) -> Result<()> {
    let mut problems = cfg.run_violations();
    let data = cfg.train_data().map_err(|e| fail("config", e.to_string()))?;
    let manifest = load_manifest(&data)?;
    problems.extend(cfg.gcl.violations(manifest.d));
    if let Err(e) = check_mode_requirements(&cfg.gcl, &manifest) {
        problems.push(e.to_string());
    }
    let monitor_paths = if cfg.run.test_features.is_some() {
        Some(cfg.test_data()?)
    } else {
        manifest.has_ground_truth().then(|| data.clone())
    };
    let monitor_manifest = match &monitor_paths {
        Some(p) if *p != data => {
            let m = load_manifest(p)?;
            if m.d != manifest.d {
                problems.push(format!("test features have d = {}, training features d = {}", m.d, manifest.d));
            }
            if !m.has_ground_truth() {
                problems.push(format!("{} has no ground truth for every video", p.manifest.display()));
            }
            Some(m)
        }
        Some(_) => Some(manifest.clone()),
        None => None,
    };
    validation(problems)?;

    let records = load_records(cfg, &data, &manifest)?;
    let monitor = match (monitor_paths, monitor_manifest) {
        (Some(p), Some(m)) => Some(Monitor {
            records: if p == data { records.clone() } else { load_records(cfg, &p, &m)? },
            manifest: m,
            pooling: cfg.pooling()?,
        }),
        _ => None,
    };

    let out = &cfg.run.out;
    let ckpt_dir = out.join("checkpoints");
    create_dir(&ckpt_dir)?;
    let config_path = out.join("config.toml");
    fs::write(&config_path, cfg.to_toml()?).with_context(|| format!("writing {}", config_path.display()))?;

    let verbose = cfg.run.verbosity >= 1;
    let mut model = GclModel::new(cfg.gcl.clone(), manifest.d)?;
    let pre = model.pretrain(&records, &manifest)?;
    if verbose {
        eprintln!(
            "pretrain\trecords={}\tgen_loss={:.6}\tdisc_loss={:.6}",
            pre.gen_records, pre.gen_loss, pre.disc_loss
        );
    }
    save_checkpoint(&model, &ckpt_dir.join("epoch-000.gclc"))?;

    let log_path = out.join("train.log");
    let mut log = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    writeln!(log, "{LOG_HEADER}")?;
    if verbose {
        eprintln!("{LOG_HEADER}");
    }
    let forced = supervision_mask(&records, &manifest, &model.cfg)?;
    while model.epoch < model.cfg.epochs {
        let m = model.cooperative_epoch(&records, &forced)?;
        let auc = match &monitor {
            Some(mon) => format!("{:.6}", mon.auc(&model)?),
            None => "NA".into(),
        };
        let line = format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{auc}",
            m.epoch, m.batches, m.recon_loss, m.disc_loss, m.gen_loss, m.gen_label_rate, m.disc_label_rate,
            m.skipped_gen_steps
        );
        writeln!(log, "{line}").with_context(|| format!("writing {}", log_path.display()))?;
        if verbose {
            eprintln!("{line}");
        }
        save_checkpoint(&model, &ckpt_dir.join(format!("epoch-{:03}.gclc", m.epoch)))?;
    }
    let final_path = cfg.checkpoint_path();
    if let Some(parent) = final_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    save_checkpoint(&model, &final_path)?;
    println!("checkpoint\t{}", final_path.display());
    println!("log\t{}", log_path.display());
    Ok(())
}

/// Loads the checkpoint and the set to score, checking they agree on `d`.
fn scoring_inputs(cfg: &RunConfig, need_truth: bool) -> Result<(GclModel, Vec<FeatureRecord>, DatasetManifest)> {
    let mut problems = cfg.run_violations();
    let data = cfg.test_data().map_err(|e| fail("config", e.to_string()))?;
    let manifest = load_manifest(&data)?;
    let model = load_checkpoint(&cfg.checkpoint_path())?;
    if model.d() != manifest.d {
        problems.push(format!("checkpoint expects d = {}, features have d = {}", model.d(), manifest.d));
    }
    validation(problems)?;
    if need_truth {
        if let Some(v) = manifest.videos.iter().find(|v| v.gt_ranges.is_none()) {
            return Err(fail(
                "ground_truth",
                format!("{}: video {} has no gt_ranges", data.manifest.display(), v.id),
            ));
        }
    }
    let records = load_records(cfg, &data, &manifest)?;
    Ok((model, records, manifest))
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let (model, records, manifest) = scoring_inputs(cfg, true)?;
    let mut series = score_segments(&model.disc, &records, &manifest)?;
    attach_labels(&mut series, &manifest)?;
    let report = evaluate(&series, cfg.pooling()?)?;
    create_dir(&cfg.run.out)?;
    export_scores(&series, &cfg.run.out.join("scores.csv"))?;
    report.save(&cfg.run.out.join("auc.json"))?;
    println!(
        "auc\t{:.6}\tpositives\t{}\tnegatives\t{}",
        report.auc, report.positives, report.negatives
    );
    Ok(())
}

pub fn score(cfg: &RunConfig) -> Result<()> {
    let (model, records, manifest) = scoring_inputs(cfg, false)?;
    let mut series = score_segments(&model.disc, &records, &manifest)?;
    if manifest.has_ground_truth() {
        attach_labels(&mut series, &manifest)?;
    }
    create_dir(&cfg.run.out)?;
    let path = cfg.run.out.join("scores.csv");
    export_scores(&series, &path)?;
    println!("scores\t{}", path.display());
    Ok(())
}

fn write_dataset(ds: &SyntheticDataset, dir: &Path, format: FeatureFormat) -> Result<()> {
    create_dir(dir)?;
    match format {
        FeatureFormat::Gclf => ds.write(dir)?,
        FeatureFormat::Csv => {
            let mut manifest = ds.manifest.clone();
            for v in &mut manifest.videos {
                v.file = "features.csv".into();
            }
            write_features_csv(&dir.join("features.csv"), &ds.records)?;
            manifest.save(&dir.join("manifest.json"))?;
        }
    }
    println!(
        "{}\tvideos={}\tsegments={}\tanomalous_segments={:.4}",
        dir.display(),
        ds.manifest.videos.len(),
        ds.records.len(),
        ds.anomaly_rate()
    );
    Ok(())
}

pub fn synth(file: Option<&Path>, overrides: Table) -> Result<()> {
    let (run, cfg): (_, SynthConfig) = resolve_synth(file, overrides).map_err(|e| fail("config", format!("{e:#}")))?;
    let mut problems = Vec::new();
    if let Err(e) = cfg.validate() {
        problems.push(e.to_string());
    }
    let format = run.format.parse::<FeatureFormat>();
    if let Err(e) = &format {
        problems.push(e.to_string());
    }
    validation(problems)?;
    let format = format?;
    if run.test_videos == 0 {
        write_dataset(&gcl_core::data::generate_synthetic(&cfg)?, &run.out, format)
    } else {
        let (train, test) = gcl_core::data::generate_synthetic_split(&cfg, run.test_videos)?;
        write_dataset(&train, &run.out.join("train"), format)?;
        write_dataset(&test, &run.out.join("test"), format)
    }
}

pub fn inspect(
    features: Option<&Path>,
    manifest: Option<&Path>,
    format: &str,
    d_th: f64,
    feature_scale: f64,
) -> Result<()> {
    let format: FeatureFormat = format.parse().map_err(|e: gcl_core::GclError| fail("config", e.to_string()))?;
    let manifest_path: PathBuf = match (manifest, features) {
        (Some(m), _) => m.to_path_buf(),
        (None, Some(f)) if format == FeatureFormat::Gclf => f.join("manifest.json"),
        (None, Some(f)) => f.with_file_name("manifest.json"),
        (None, None) => return Err(fail("usage", "pass --manifest or --features")),
    };
    let m = DatasetManifest::load(&manifest_path)?;
    let count = |label| m.videos.iter().filter(|v| v.label == Some(label)).count();
    let with_gt: Vec<_> = m.videos.iter().filter(|v| v.gt_ranges.is_some()).collect();
    let frames: usize = with_gt.iter().map(|v| m.frame_count(v)).sum();
    let anomalous_frames: usize = with_gt
        .iter()
        .map(|v| {
            let n = m.frame_count(v);
            let mut covered = vec![false; n];
            for &[s, e] in v.gt_ranges.iter().flatten() {
                covered[s.min(n)..e.min(n)].fill(true);
            }
            covered.iter().filter(|&&c| c).count()
        })
        .sum();
    println!("manifest\t{}", manifest_path.display());
    println!("d\t{}", m.d);
    println!("p\t{}", m.p);
    println!("videos\t{}", m.videos.len());
    println!("segments\t{}", m.total_segments());
    println!(
        "video_labels\tnormal={}\tanomalous={}\tunlabeled={}",
        count(VideoLabel::Normal),
        count(VideoLabel::Anomalous),
        m.videos.iter().filter(|v| v.label.is_none()).count()
    );
    println!(
        "ground_truth\tvideos={}\tframes={}\tanomalous_frames={}",
        with_gt.len(),
        frames,
        anomalous_frames
    );
    if let Some(f) = features {
        let mut records = load_dataset(f, &m, format)?;
        scale_features(&mut records, feature_scale);
        let n = records.len().max(1) as f64;
        let norms: Vec<f64> = records
            .iter()
            .map(|r| r.vector.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt())
            .collect();
        let mean_norm = norms.iter().sum::<f64>() / n;
        let kept = temporal_difference_indices(&records, CleanerConfig { d_th }).len();
        println!("mean_norm\t{mean_norm:.6}");
        println!("td_retained\t{kept}/{}\t{:.4}\td_th={d_th}", records.len(), kept as f64 / n);
    }
    Ok(())
}
