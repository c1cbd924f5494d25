//! Batch commands tying the stages together through files.
//!
//! All state lives under `paths.output_dir`, indexed by a
//! [`DatasetManifest`] (by default `{output_dir}/manifest.json`):
//!
//! | command | reads | writes |
//! |---|---|---|
//! | fragment | Y4M files or PNG frame directories | `{id}/metadata.json`, `{id}/plan.json`, `{id}/prompts.json`, `{id}/fragments/` |
//! | fuse | embedding files listed in the manifest | `{id}/{id}.fused.cvqf` |
//! | train | fused features and scores | `params.cvqp`, `train_log.csv`, `train_report.json` |
//! | predict | fused features and `params.cvqp` | `scores.csv` |
//! | eval | fused features and scores | `report.json`, `report.csv` |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{read_json, write_json, Error, Result};
use crate::eval::{per_dimension_eval, write_reports_csv, Dataset, EvalConfig, EvalReport};
use crate::fdf::{dump_fragments, fragment_video, FdfConfig};
use crate::features::{
    read_cvqf, write_cvqf, CaptionRecord, DatasetManifest, EmbeddingRecord, Modality,
};
use crate::fusion::{
    default_stride, fuse_video, plan_segments, SegmentPlan, VideoEmbeddings, DEFAULT_SEGMENT_LENGTH,
};
use crate::media::{load_frame_dir, load_y4m, VideoClip};
use crate::prompt::{
    build_prompts, classify_metadata, mos_to_level, HintThresholds, PromptMode, PromptTemplates,
};
use crate::regressor::{fit, RegressorParams, TrainConfig};

/// Name of the JSON file describing a PNG frame directory.
pub const FRAME_MANIFEST: &str = "frames.json";
/// Score dimension backed by [`crate::features::ManifestEntry::mos`].
pub const OVERALL: &str = "overall";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    /// Frames between segment starts; `None` uses the rounded frame rate.
    pub stride: Option<usize>,
    pub length: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            stride: None,
            length: DEFAULT_SEGMENT_LENGTH,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptKind {
    /// Embed the quantized score of each video.
    Train,
    #[default]
    Predict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    pub mode: PromptKind,
    /// Score scale used to quantize scores into levels.
    pub mos_range: [f64; 2],
}

impl Default for PromptConfig {
    fn default() -> Self {
        Self {
            mode: PromptKind::Predict,
            mos_range: [1.0, 5.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Base for relative video arguments.
    pub dataset_root: Option<PathBuf>,
    /// Fallback location of `{id}.{modality}.cvqf` files.
    pub feature_dir: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub manifest: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset_root: None,
            feature_dir: None,
            output_dir: PathBuf::from("campvqa-out"),
            manifest: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub fdf: FdfConfig,
    pub segment: SegmentConfig,
    /// Hint thresholds JSON; the built-in table when unset.
    pub thresholds: Option<PathBuf>,
    /// Directory of prompt templates; the built-in set when unset.
    pub templates: Option<PathBuf>,
    pub prompts: PromptConfig,
    /// Regressor settings; chosen from the dataset size when unset.
    pub train: Option<TrainConfig>,
    pub eval: EvalConfig,
    /// Score dimensions to evaluate; empty means [`OVERALL`] only.
    pub dimensions: Vec<String>,
    pub seed: Option<u64>,
    pub paths: Paths,
}

fn parse_env<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}={value:?} is not a valid value")))
}

impl PipelineConfig {
    /// Reads `path` (relative paths inside resolve against its directory),
    /// applies `CAMPVQA_*` environment overrides and validates.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let mut c: PipelineConfig =
                    read_json(p).map_err(|e| Error::Config(format!("config file: {e}")))?;
                c.resolve_relative_to(p.parent().unwrap_or(Path::new("")));
                c
            }
            None => Self::default(),
        };
        cfg.apply_env(std::env::vars())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            self.thresholds.as_mut(),
            self.templates.as_mut(),
            self.paths.dataset_root.as_mut(),
            self.paths.feature_dir.as_mut(),
            self.paths.manifest.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.paths.output_dir);
    }

    /// Applies `CAMPVQA_OUTPUT_DIR`, `CAMPVQA_FEATURE_DIR`,
    /// `CAMPVQA_DATASET_ROOT`, `CAMPVQA_MANIFEST`, `CAMPVQA_THRESHOLDS`,
    /// `CAMPVQA_TEMPLATES`, `CAMPVQA_SEED`, `CAMPVQA_EPOCHS` and
    /// `CAMPVQA_REPEATS`; other `CAMPVQA_*` keys are rejected.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix("CAMPVQA_") else {
                continue;
            };
            match name {
                "OUTPUT_DIR" => self.paths.output_dir = value.into(),
                "FEATURE_DIR" => self.paths.feature_dir = Some(value.into()),
                "DATASET_ROOT" => self.paths.dataset_root = Some(value.into()),
                "MANIFEST" => self.paths.manifest = Some(value.into()),
                "THRESHOLDS" => self.thresholds = Some(value.into()),
                "TEMPLATES" => self.templates = Some(value.into()),
                "SEED" => self.seed = Some(parse_env(&key, &value)?),
                "EPOCHS" => {
                    let epochs = parse_env(&key, &value)?;
                    self.train.get_or_insert_with(TrainConfig::default).epochs = epochs;
                }
                "REPEATS" => self.eval.repeats = parse_env(&key, &value)?,
                _ => return Err(Error::Config(format!("unknown environment override {key}"))),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        for (what, p) in [
            ("thresholds", &self.thresholds),
            ("templates", &self.templates),
            ("dataset_root", &self.paths.dataset_root),
            ("feature_dir", &self.paths.feature_dir),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "{what} path {} does not exist",
                        p.display()
                    )));
                }
            }
        }
        if self.segment.length == 0 || self.segment.stride == Some(0) {
            return Err(Error::Config(
                "segment stride and length must be positive".into(),
            ));
        }
        if let Some(t) = &self.train {
            t.validate()?;
        }
        self.eval.validate()?;
        self.thresholds()?;
        self.templates()?;
        Ok(())
    }

    pub fn thresholds(&self) -> Result<HintThresholds> {
        match &self.thresholds {
            Some(p) => HintThresholds::load(p),
            None => Ok(HintThresholds::default()),
        }
    }

    pub fn templates(&self) -> Result<PromptTemplates> {
        match &self.templates {
            Some(p) => PromptTemplates::load_dir(p),
            None => Ok(PromptTemplates::default()),
        }
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.paths
            .manifest
            .clone()
            .unwrap_or_else(|| self.paths.output_dir.join("manifest.json"))
    }

    /// Regressor settings for a dataset of `n` videos, with the seed
    /// override applied.
    pub fn train_config(&self, n: usize) -> TrainConfig {
        let mut t = self
            .train
            .clone()
            .unwrap_or_else(|| TrainConfig::for_dataset_size(n));
        if let Some(s) = self.seed {
            t.seed = s;
        }
        t
    }

    pub fn params_path(&self) -> PathBuf {
        self.paths.output_dir.join("params.cvqp")
    }
}

/// A per-video failure that did not stop the rest of the batch.
#[derive(Debug)]
pub struct Failure {
    pub video_id: String,
    pub error: Error,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub done: Vec<String>,
    pub failures: Vec<Failure>,
}

fn load_video(path: &Path) -> Result<VideoClip> {
    if path.is_dir() {
        load_frame_dir(path, &path.join(FRAME_MANIFEST))
    } else {
        load_y4m(path)
    }
}

fn video_label(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

struct Fragmented {
    video_id: String,
    source: PathBuf,
    dir: PathBuf,
}

fn fragment_one(
    cfg: &PipelineConfig,
    manifest: &DatasetManifest,
    thresholds: &HintThresholds,
    templates: &PromptTemplates,
    source: &Path,
) -> Result<Fragmented> {
    let clip = load_video(source)?;
    let meta = clip.metadata();
    let video_id = meta.source_id.clone();
    let dir = cfg.paths.output_dir.join(&video_id);

    let mode = match cfg.prompts.mode {
        PromptKind::Predict => PromptMode::Predict,
        PromptKind::Train => {
            let mos = manifest.get(&video_id).and_then(|e| e.mos).ok_or_else(|| {
                Error::InvalidData(format!(
                    "{video_id}: train prompts need a score in the manifest"
                ))
            })?;
            let [lo, hi] = cfg.prompts.mos_range;
            let level = mos_to_level(mos, (lo, hi), thresholds.level_count())?;
            PromptMode::Train(thresholds.level_labels[level].clone())
        }
    };
    let prompts = build_prompts(&classify_metadata(meta, thresholds), &mode, templates)?;
    let stride = cfg
        .segment
        .stride
        .unwrap_or_else(|| default_stride(meta.framerate));
    let plan = plan_segments(meta.frame_count, stride, cfg.segment.length)?;
    let pairs = fragment_video(&clip, &cfg.fdf)?;

    let frag_dir = dir.join("fragments");
    if frag_dir.exists() {
        std::fs::remove_dir_all(&frag_dir).map_err(|e| Error::io(&frag_dir, e))?;
    }
    std::fs::create_dir_all(&frag_dir).map_err(|e| Error::io(&frag_dir, e))?;
    dump_fragments(&frag_dir, &video_id, &pairs)?;
    write_json(&dir.join("metadata.json"), meta)?;
    write_json(&dir.join("plan.json"), &plan)?;
    write_json(&dir.join("prompts.json"), &prompts)?;
    Ok(Fragmented {
        video_id,
        source: source.to_path_buf(),
        dir,
    })
}

/// Fragments each video, writes its prompts and segment plan, and records
/// the outputs in the manifest.
pub fn cmd_fragment(cfg: &PipelineConfig, videos: &[PathBuf]) -> Result<Outcome> {
    if videos.is_empty() {
        return Err(Error::Config("no videos given".into()));
    }
    let thresholds = cfg.thresholds()?;
    let templates = cfg.templates()?;
    let manifest_path = cfg.manifest_path();
    let mut manifest = DatasetManifest::load_or_new(&manifest_path)?;
    let sources: Vec<PathBuf> = videos
        .iter()
        .map(|v| match &cfg.paths.dataset_root {
            Some(root) if v.is_relative() => root.join(v),
            _ => v.clone(),
        })
        .collect();

    let results: Vec<Result<Fragmented>> = sources
        .par_iter()
        .map(|s| fragment_one(cfg, &manifest, &thresholds, &templates, s))
        .collect();

    let mut outcome = Outcome::default();
    for (src, r) in sources.iter().zip(results) {
        match r {
            Ok(f) => {
                let rel = |p: PathBuf| manifest.relativize(&p);
                let (source, metadata, prompts, plan, fragments) = (
                    rel(f.source.clone()),
                    rel(f.dir.join("metadata.json")),
                    rel(f.dir.join("prompts.json")),
                    rel(f.dir.join("plan.json")),
                    rel(f.dir.join("fragments")),
                );
                let e = manifest.entry_mut(&f.video_id);
                e.source = Some(source);
                e.metadata = Some(metadata);
                e.prompts = Some(prompts);
                e.plan = Some(plan);
                e.fragments = Some(fragments);
                outcome.done.push(f.video_id);
            }
            Err(error) => outcome.failures.push(Failure {
                video_id: video_label(src),
                error,
            }),
        }
    }
    manifest.save(&manifest_path)?;
    Ok(outcome)
}

const FUSED_INPUTS: [Modality; 5] = [
    Modality::Img,
    Modality::Qlt,
    Modality::Art,
    Modality::Slowfast,
    Modality::Swint,
];

fn feature_path(
    cfg: &PipelineConfig,
    manifest: &DatasetManifest,
    video_id: &str,
    m: Modality,
) -> Option<PathBuf> {
    let entry = manifest.get(video_id)?;
    if let Some(p) = entry.features.get(&m) {
        return Some(manifest.resolve(p));
    }
    let dir = cfg.paths.feature_dir.as_ref()?;
    let p = dir.join(crate::features::cvqf_file_name(video_id, m));
    p.exists().then_some(p)
}

fn load_record(path: &Path, video_id: &str, m: Modality) -> Result<EmbeddingRecord> {
    let r = read_cvqf(path)?;
    if r.modality != m {
        return Err(Error::Format(format!(
            "{}: holds {} vectors, expected {m}",
            path.display(),
            r.modality
        )));
    }
    Ok(EmbeddingRecord {
        video_id: video_id.to_string(),
        ..r
    })
}

/// Per-video fusion result with its component widths.
struct Fused {
    path: PathBuf,
    dims: (usize, usize, usize),
}

fn fuse_one(cfg: &PipelineConfig, manifest: &DatasetManifest, video_id: &str) -> Result<Fused> {
    let entry = manifest.get(video_id).expect("listed video");
    let plan: SegmentPlan = match &entry.plan {
        Some(p) => read_json(&manifest.resolve(p))?,
        None => return Err(Error::InvalidData(format!("{video_id}: no segment plan"))),
    };
    let mut records = BTreeMap::new();
    for m in FUSED_INPUTS {
        let path = feature_path(cfg, manifest, video_id, m)
            .ok_or_else(|| Error::InvalidData(format!("{video_id}: missing {m} features")))?;
        records.insert(m, load_record(&path, video_id, m)?);
    }
    if let Some(c) = &entry.captions {
        let captions = CaptionRecord::load(&manifest.resolve(c))?;
        let ts: Vec<usize> = captions.entries.iter().map(|e| e.t).collect();
        if ts != plan.all_sampled_frames() {
            return Err(Error::InvalidData(format!(
                "{video_id}: captions do not cover exactly the sampled frames"
            )));
        }
    }
    let mut take = |m| records.remove(&m).expect("loaded");
    let emb = VideoEmbeddings {
        img: take(Modality::Img),
        qlt: take(Modality::Qlt),
        art: take(Modality::Art),
        slowfast: take(Modality::Slowfast),
        swint: take(Modality::Swint),
        temporal_split: entry.temporal_split,
    };
    let fused = fuse_video(&emb, &plan)?;
    let path = cfg
        .paths
        .output_dir
        .join(video_id)
        .join(crate::features::cvqf_file_name(video_id, Modality::Fused));
    write_cvqf(&fused.to_record(video_id)?, &path)?;
    Ok(Fused {
        path,
        dims: fused.dims(),
    })
}

#[derive(Debug, Default)]
pub struct FuseOutcome {
    pub outcome: Outcome,
    /// Widths of the semantic, temporal and spatial parts.
    pub dims: Option<(usize, usize, usize)>,
}

/// Fuses the embeddings of every manifest entry into one vector per video.
pub fn cmd_fuse(cfg: &PipelineConfig) -> Result<FuseOutcome> {
    let manifest_path = cfg.manifest_path();
    let mut manifest = DatasetManifest::load(&manifest_path)?;
    if manifest.videos.is_empty() {
        return Err(Error::Config(format!(
            "{} lists no videos",
            manifest_path.display()
        )));
    }
    let ids: Vec<String> = manifest.videos.iter().map(|v| v.video_id.clone()).collect();
    let results: Vec<Result<Fused>> = ids
        .par_iter()
        .map(|id| fuse_one(cfg, &manifest, id))
        .collect();

    let mut out = FuseOutcome::default();
    for (id, r) in ids.iter().zip(results) {
        let r = r.and_then(|f| match out.dims {
            Some(d) if d != f.dims => Err(Error::Dim(format!(
                "{id}: fused widths {:?} differ from {d:?}",
                f.dims
            ))),
            _ => Ok(f),
        });
        match r {
            Ok(f) => {
                out.dims = Some(f.dims);
                let rel = manifest.relativize(&f.path);
                manifest.entry_mut(id).fused = Some(rel);
                out.outcome.done.push(id.clone());
            }
            Err(error) => out.outcome.failures.push(Failure {
                video_id: id.clone(),
                error,
            }),
        }
    }
    manifest.save(&manifest_path)?;
    Ok(out)
}

fn read_fused(manifest: &DatasetManifest, id: &str, p: &Path) -> Result<Vec<f64>> {
    let r = read_cvqf(&manifest.resolve(p))?;
    if r.modality != Modality::Fused || r.count() != 1 {
        return Err(Error::Format(format!("{id}: not a single fused vector")));
    }
    Ok(r.vectors[0].iter().map(|&v| v as f64).collect())
}

/// Fused features of every scored video, with one score column per
/// requested dimension.
pub fn load_scored(
    manifest: &DatasetManifest,
    dimensions: &[String],
) -> Result<(Vec<String>, Vec<Vec<f64>>, BTreeMap<String, Vec<f64>>)> {
    let (mut ids, mut rows) = (Vec::new(), Vec::new());
    let mut scores: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for e in &manifest.videos {
        let mut row_scores = Vec::with_capacity(dimensions.len());
        for d in dimensions {
            let s = e
                .mos_dims
                .get(d)
                .copied()
                .or(if d == OVERALL { e.mos } else { None });
            row_scores.push(s);
        }
        if row_scores.iter().all(Option::is_none) {
            continue;
        }
        if let Some(i) = row_scores.iter().position(Option::is_none) {
            return Err(Error::Config(format!(
                "{}: no score for dimension {:?}",
                e.video_id, dimensions[i]
            )));
        }
        let fused = e.fused.as_ref().ok_or_else(|| {
            Error::InvalidData(format!("{}: no fused features; run fuse first", e.video_id))
        })?;
        rows.push(read_fused(manifest, &e.video_id, fused)?);
        ids.push(e.video_id.clone());
        for (d, s) in dimensions.iter().zip(row_scores) {
            scores
                .entry(d.clone())
                .or_default()
                .push(s.expect("checked"));
        }
    }
    if ids.is_empty() {
        return Err(Error::Config("the manifest has no scored videos".into()));
    }
    Ok((ids, rows, scores))
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub videos: usize,
    pub d_in: usize,
    pub epochs_run: usize,
    pub selection: String,
    pub val_rmse: f64,
    pub swa_val_rmse: Option<f64>,
    pub config_hash: String,
}

/// Trains a regressor on all scored videos and saves it.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    let manifest = DatasetManifest::load(&cfg.manifest_path())?;
    let (ids, rows, mut scores) = load_scored(&manifest, &[OVERALL.to_string()])?;
    let ds = Dataset::new(ids, rows, scores.remove(OVERALL).expect("requested"))?;
    let tcfg = cfg.train_config(ds.len());
    let all: Vec<usize> = (0..ds.len()).collect();
    let report = fit(ds.view(), &ds.mos, &all, &tcfg)?;
    let out = &cfg.paths.output_dir;
    report.params.save(&cfg.params_path())?;
    report.write_log_csv(&out.join("train_log.csv"))?;
    let summary = TrainSummary {
        videos: ds.len(),
        d_in: report.params.d_in(),
        epochs_run: report.log.len(),
        selection: match report.selection {
            crate::regressor::Selection::Epoch(e) => format!("epoch {e}"),
            crate::regressor::Selection::Swa => "swa".into(),
        },
        val_rmse: report.val_rmse,
        swa_val_rmse: report.swa_val_rmse,
        config_hash: report.params.config_hash.clone(),
    };
    write_json(&out.join("train_report.json"), &summary)?;
    Ok(summary)
}

/// Scores every fused video in the manifest and writes `scores.csv`.
pub fn cmd_predict(cfg: &PipelineConfig, params: Option<&Path>) -> Result<Vec<(String, f64)>> {
    let manifest = DatasetManifest::load(&cfg.manifest_path())?;
    let params = RegressorParams::load(params.unwrap_or(&cfg.params_path()))?;
    let mut scored = Vec::new();
    for e in &manifest.videos {
        let Some(p) = &e.fused else { continue };
        let x = read_fused(&manifest, &e.video_id, p)?;
        let s = params
            .predict(&x)
            .map_err(|err| Error::Dim(format!("{}: {err}", e.video_id)))?;
        scored.push((e.video_id.clone(), s));
    }
    if scored.is_empty() {
        return Err(Error::Config(
            "no fused videos to score; run fuse first".into(),
        ));
    }
    let path = cfg.paths.output_dir.join("scores.csv");
    std::fs::create_dir_all(&cfg.paths.output_dir)
        .map_err(|e| Error::io(&cfg.paths.output_dir, e))?;
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["video_id", "score"])?;
    for (id, s) in &scored {
        w.write_record([id.as_str(), &s.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(scored)
}

/// Runs the repeated-split protocol for each configured dimension and
/// writes `report.json` and `report.csv`.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<Vec<EvalReport>> {
    let manifest = DatasetManifest::load(&cfg.manifest_path())?;
    let dims = if cfg.dimensions.is_empty() {
        vec![OVERALL.to_string()]
    } else {
        cfg.dimensions.clone()
    };
    let (ids, rows, scores) = load_scored(&manifest, &dims)?;
    let first = scores.values().next().expect("at least one dimension");
    let ds = Dataset::new(ids, rows, first.clone())?;
    let tcfg = cfg.train_config(ds.len());
    let reports = per_dimension_eval(&ds.ids, ds.view(), &scores, &dims, &tcfg, &cfg.eval)?;
    let out = &cfg.paths.output_dir;
    write_json(&out.join("report.json"), &reports)?;
    write_reports_csv(&reports, &out.join("report.csv"))?;
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn env_overrides() {
        let mut cfg = PipelineConfig::default();
        let vars = [
            ("CAMPVQA_OUTPUT_DIR", "/tmp/x"),
            ("CAMPVQA_SEED", "7"),
            ("CAMPVQA_EPOCHS", "3"),
            ("CAMPVQA_REPEATS", "2"),
            ("HOME", "/root"),
        ]
        .map(|(k, v)| (k.to_string(), v.to_string()));
        cfg.apply_env(vars).unwrap();
        assert_eq!(cfg.paths.output_dir, PathBuf::from("/tmp/x"));
        assert_eq!(cfg.train_config(10).seed, 7);
        assert_eq!(cfg.train_config(10).epochs, 3);
        assert_eq!(cfg.eval.repeats, 2);

        let bad = [("CAMPVQA_SEED".to_string(), "x".to_string())];
        assert!(matches!(cfg.apply_env(bad), Err(Error::Config(_))));
        let unknown = [("CAMPVQA_NOPE".to_string(), "1".to_string())];
        assert!(matches!(cfg.apply_env(unknown), Err(Error::Config(_))));
    }

    #[test]
    fn config_file_paths_resolve_and_validate() {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("cfg.json");
        std::fs::write(
            &p,
            r#"{"paths": {"output_dir": "out"}, "segment": {"length": 16}}"#,
        )
        .unwrap();
        let cfg = PipelineConfig::load(Some(&p)).unwrap();
        assert_eq!(cfg.paths.output_dir, tmp.path().join("out"));
        assert_eq!(cfg.manifest_path(), tmp.path().join("out/manifest.json"));
        assert_eq!(cfg.segment.length, 16);

        std::fs::write(&p, r#"{"thresholds": "missing.json"}"#).unwrap();
        assert!(matches!(
            PipelineConfig::load(Some(&p)),
            Err(Error::Config(_))
        ));
        std::fs::write(&p, r#"{"unknown": 1}"#).unwrap();
        assert!(PipelineConfig::load(Some(&p)).is_err());
        std::fs::write(&p, r#"{"fdf": {"patch_size": 16, "target_size": 100}}"#).unwrap();
        assert!(PipelineConfig::load(Some(&p)).is_err());
    }

    #[test]
    fn regime_follows_dataset_size() {
        let cfg = PipelineConfig::default();
        assert_eq!(cfg.train_config(100).epochs, 200);
        assert_eq!(cfg.train_config(6000).epochs, 50);
    }
}
