use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use super::config::PipelineConfig;
use super::eval::{eval_counts, EvalResult};
use crate::cluster::{count_instances, dbscan, CountResult, Template, DEFAULT_TEMPLATE_POINTS};
use crate::error::{Error, Result};
use crate::pointcloud::{clean_outliers, estimate_normals, sample_points, PointCloud};
use crate::raster::render_rgb;
use crate::scene::{
    generate_orchard, load_scene_ply, save_scene_ply, Camera, GroundTruth, LabelCodes, Scene, SceneLabel,
};
use crate::semantics::{
    filter_gaussians, load_vocabulary, optimize_gaussian_features, prepare_views, render_target, score_prompts,
    train_autoencoder, Autoencoder, EmbeddingVocabulary, FilterResult, PromptQuery,
};

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub name: &'static str,
    /// Wall time; omitted in deterministic mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub stages: Vec<StageReport>,
    pub gaussians: usize,
    pub kept_gaussians: usize,
    pub points: usize,
    pub total: usize,
    pub eval: Option<EvalResult>,
    pub artifacts: Vec<PathBuf>,
    pub config: PipelineConfig,
}

/// Collects stage timings and tags errors with the failing stage.
struct Stages {
    deterministic: bool,
    done: Vec<StageReport>,
}

impl Stages {
    fn run<R>(&mut self, name: &'static str, f: impl FnOnce() -> Result<R>) -> Result<R> {
        info!("stage {name}");
        let start = Instant::now();
        let out = f().map_err(|e| Error::Stage { stage: name, source: Box::new(e) })?;
        let seconds = (!self.deterministic).then(|| start.elapsed().as_secs_f64());
        self.done.push(StageReport { name, seconds });
        Ok(out)
    }
}

/// A prompt is a vocabulary label, a mock-embedded label, or a JSON file
/// holding one vector.
pub fn resolve_prompt(text: &str, vocabulary: &EmbeddingVocabulary<f64>) -> Result<Vec<f64>> {
    let path = Path::new(text);
    if path.is_file() {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Vec<f64> = serde_json::from_str(&raw)?;
        if v.len() != vocabulary.dim {
            return Err(Error::Dimension(format!("prompt file {text} has {} values, expected {}", v.len(), vocabulary.dim)));
        }
        return Ok(v);
    }
    vocabulary
        .get(text)
        .map(<[f64]>::to_vec)
        .ok_or_else(|| Error::invalid(format!("prompt `{text}` is neither a file nor a vocabulary label")))
}

/// Vocabulary from file, or mock embeddings for `labels` when none is given.
pub fn build_vocabulary(config: &PipelineConfig, labels: &[&str]) -> Result<EmbeddingVocabulary<f64>> {
    match &config.paths.vocabulary {
        Some(p) => load_vocabulary(p),
        None => {
            let mut all: Vec<&str> = labels.to_vec();
            all.extend(config.filter.positives.iter().chain(&config.filter.negatives).map(String::as_str));
            all.retain(|l| !Path::new(l).is_file());
            EmbeddingVocabulary::mock(all, config.embedding_dim)
        }
    }
}

/// Cameras on a circle around the scene's bounding box, looking at its center.
pub fn preview_cameras(scene: &Scene<f64>, n: usize, width: usize, height: usize) -> Result<Vec<Camera<f64>>> {
    let Some(first) = scene.gaussians.first() else {
        return Err(Error::Empty("scene has no Gaussians".into()));
    };
    let (lo, hi) = scene.gaussians.iter().fold((first.center, first.center), |(l, h), g| (l.inf(&g.center), h.sup(&g.center)));
    let center = (lo + hi) * 0.5;
    let diag = (hi - lo).norm().max(1e-3);
    Camera::orbit(center, 1.1 * diag, 0.25 * diag, n, 50.0, width, height)
}

pub struct PreparedScene {
    pub scene: Scene<f64>,
    pub autoencoder: Autoencoder<f64>,
    pub vocabulary: EmbeddingVocabulary<f64>,
    pub truth: Option<GroundTruth>,
    /// Generator classes, for generated scenes only.
    pub labels: Option<Vec<SceneLabel>>,
    pub label_codes: Option<LabelCodes<f64>>,
    pub template_radius: Option<f64>,
}

/// Latents of the fruit, foliage and branch label embeddings, in that order.
pub fn label_codes(vectors: &[Vec<f64>], autoencoder: &Autoencoder<f64>) -> Result<LabelCodes<f64>> {
    let [fruit, foliage, branch] = vectors else {
        return Err(Error::invalid("expected three label embeddings"));
    };
    Ok(LabelCodes {
        fruit: autoencoder.encode(fruit)?,
        foliage: autoencoder.encode(foliage)?,
        branch: autoencoder.encode(branch)?,
    })
}

/// Embeddings of the generator's class labels.
pub fn label_vectors(config: &PipelineConfig, vocabulary: &EmbeddingVocabulary<f64>) -> Result<Vec<Vec<f64>>> {
    config
        .scene
        .labels()
        .iter()
        .map(|l| vocabulary.get(l).map(<[f64]>::to_vec).ok_or_else(|| Error::invalid(format!("label `{l}` missing from vocabulary"))))
        .collect()
}

/// Trains the autoencoder on the scene labels and generates the orchard
/// with their latents as codes.
pub fn generate_scene(config: &PipelineConfig) -> Result<PreparedScene> {
    let spec = &config.scene;
    let labels = spec.labels();
    let vocabulary = build_vocabulary(config, &labels)?;
    let vectors = label_vectors(config, &vocabulary)?;
    let autoencoder = match &config.paths.autoencoder {
        Some(p) => Autoencoder::load(p)?,
        None => {
            let (ae, report) = train_autoencoder(&vectors, &config.autoencoder)?;
            info!("autoencoder trained, final loss {:.3e}", report.final_loss);
            ae
        }
    };
    let codes = label_codes(&vectors, &autoencoder)?;
    let orchard = generate_orchard(spec, &codes)?;
    Ok(PreparedScene {
        scene: orchard.scene,
        autoencoder,
        vocabulary,
        truth: Some(orchard.truth),
        labels: Some(orchard.labels),
        label_codes: Some(codes),
        template_radius: Some(spec.template_radius()),
    })
}

fn load_prepared(config: &PipelineConfig, scene_path: &Path) -> Result<PreparedScene> {
    let loaded = load_scene_ply::<f64>(scene_path, config.paths.convention)?;
    for w in &loaded.warnings {
        warn!("{w}");
    }
    let ae_path = config.paths.autoencoder.as_ref().ok_or_else(|| Error::Config("paths.autoencoder is required".into()))?;
    let truth = config.paths.ground_truth.as_deref().map(GroundTruth::load).transpose()?;
    Ok(PreparedScene {
        scene: loaded.scene,
        autoencoder: Autoencoder::load(ae_path)?,
        vocabulary: build_vocabulary(config, &[])?,
        truth,
        labels: None,
        label_codes: None,
        template_radius: None,
    })
}

/// Fits the codes of `level` to renders of the clean class latents.
pub fn fit_features(prepared: &mut PreparedScene, config: &PipelineConfig) -> Result<crate::semantics::FeatureTrainReport> {
    let (Some(labels), Some(codes)) = (&prepared.labels, &prepared.label_codes) else {
        return Err(Error::Config("feature fitting needs a generated scene with known classes".into()));
    };
    let stage = &config.features;
    let mut reference = prepared.scene.clone();
    for (g, l) in reference.gaussians.iter_mut().zip(labels) {
        *g.code_mut(stage.level) = *codes.get(*l);
    }
    let cameras = preview_cameras(&prepared.scene, stage.views, stage.width, stage.height)?;
    let targets = cameras
        .iter()
        .map(|c| render_target(&reference, c, stage.level, &config.render))
        .collect::<Result<Vec<_>>>()?;
    let views = prepare_views(&prepared.scene, &cameras, targets, &config.render)?;
    optimize_gaussian_features(&mut prepared.scene, &views, stage.level, &stage.optimizer)
}

pub fn run_query(prepared: &PreparedScene, config: &PipelineConfig) -> Result<FilterResult> {
    let f = &config.filter;
    let resolve = |list: &[String]| list.iter().map(|t| resolve_prompt(t, &prepared.vocabulary)).collect::<Result<Vec<_>>>();
    let mut query = PromptQuery::new(resolve(&f.positives)?, resolve(&f.negatives)?);
    query.tau_pos = f.tau_pos;
    query.tau_neg = f.tau_neg;
    query.level = f.level;
    query.space = f.compare_space;
    let scores = score_prompts(&prepared.scene, &prepared.autoencoder, &query)?;
    let mut result = filter_gaussians(&scores, &query);
    result.positive_prompts = f.positives.clone();
    result.negative_prompts = f.negatives.clone();
    Ok(result)
}

pub fn run_sample(scene: &Scene<f64>, kept: &[usize], config: &PipelineConfig) -> Result<PointCloud<f64>> {
    let s = &config.sample;
    let mut cloud = sample_points(scene, kept, s, config.seed)?;
    if s.cleaning.enabled {
        let (cleaned, report) = clean_outliers(&cloud, s.cleaning.neighbors, s.cleaning.stddev_ratio);
        info!("cleaning removed {} of {} points", report.removed, cloud.len());
        cloud = cleaned;
    }
    if s.normals.enabled && cloud.len() > s.normals.neighbors {
        let normals = estimate_normals(&cloud, s.normals.neighbors)?;
        if !normals.invalid.is_empty() {
            warn!("{} points have degenerate neighborhoods", normals.invalid.len());
        }
        cloud.normals = Some(normals.normals);
    }
    Ok(cloud)
}

pub fn resolve_template(config: &PipelineConfig, fallback_radius: Option<f64>) -> Result<Template<f64>> {
    match (&config.paths.template, fallback_radius) {
        (Some(spec), _) => Template::parse(spec),
        (None, Some(r)) => Template::sphere(r, DEFAULT_TEMPLATE_POINTS),
        (None, None) => Err(Error::Config("no template given".into())),
    }
}

pub fn run_count(cloud: &PointCloud<f64>, template: &Template<f64>, config: &PipelineConfig) -> Result<CountResult> {
    let params = config.cluster.dbscan(template.radius);
    let clustering = dbscan(&cloud.positions, &params)?;
    info!("dbscan: {} clusters, {} noise points", clustering.clusters.len(), clustering.noise.len());
    let mut result = count_instances(&cloud.positions, &clustering.clusters, template, &params, &config.cluster.split, config.seed)?;
    result.params.config = Some(serde_json::to_value(config)?);
    Ok(result)
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).map_err(|e| Error::io(path, e))
}

/// Runs every stage, writing artifacts into `paths.output` as it goes so a
/// failure leaves the earlier outputs in place.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunReport> {
    config.validate()?;
    let out = &config.paths.output;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut stages = Stages { deterministic: config.output.deterministic, done: vec![] };
    let mut artifacts = Vec::new();

    let mut prepared = stages.run("scene", || {
        let prepared = match &config.paths.scene {
            Some(p) => load_prepared(config, p)?,
            None => {
                let prepared = generate_scene(config)?;
                save_scene_ply(&prepared.scene, &out.join("scene.ply"))?;
                if let Some(t) = &prepared.truth {
                    t.save(&out.join("gt.json"))?;
                }
                prepared.autoencoder.save(&out.join("autoencoder.bin"))?;
                prepared.vocabulary.save(&out.join("vocabulary.json"))?;
                artifacts.extend(["scene.ply", "gt.json", "autoencoder.bin", "vocabulary.json"].map(|n| out.join(n)));
                prepared
            }
        };
        Ok(prepared)
    })?;

    if config.features.enabled {
        let report = stages.run("features", || fit_features(&mut prepared, config))?;
        write_json(&out.join("features.json"), &report)?;
        artifacts.push(out.join("features.json"));
    }

    let kept = stages.run("query", || {
        let mut result = if config.filter.enabled {
            run_query(&prepared, config)?
        } else {
            FilterResult {
                kept: (0..prepared.scene.len()).collect(),
                scores: vec![],
                tau_pos: config.filter.tau_pos,
                tau_neg: config.filter.tau_neg,
                level: config.filter.level,
                compare_space: config.filter.compare_space,
                positive_prompts: vec![],
                negative_prompts: vec![],
                degenerate: vec![],
                config: None,
            }
        };
        result.config = Some(serde_json::to_value(config)?);
        result.save(&out.join("filter.json"))?;
        Ok(result.kept)
    })?;
    artifacts.push(out.join("filter.json"));
    info!("kept {} of {} Gaussians", kept.len(), prepared.scene.len());

    let cloud = stages.run("sample", || {
        let cloud = run_sample(&prepared.scene, &kept, config)?;
        cloud.save_ply(&out.join("cloud.ply"))?;
        Ok(cloud)
    })?;
    artifacts.push(out.join("cloud.ply"));

    let count = stages.run("count", || {
        let template = resolve_template(config, prepared.template_radius)?;
        let count = run_count(&cloud, &template, config)?;
        count.save(&out.join("count.json"))?;
        Ok(count)
    })?;
    artifacts.push(out.join("count.json"));

    let eval = match &prepared.truth {
        Some(t) => Some(stages.run("eval", || {
            let e = eval_counts(count.total, t.fruit_count)?;
            write_json(&out.join("eval.json"), &e)?;
            Ok(e)
        })?),
        None => None,
    };
    if eval.is_some() {
        artifacts.push(out.join("eval.json"));
    }

    if config.output.render {
        stages.run("render", || {
            let cam = preview_cameras(&prepared.scene, 1, config.output.render_width, config.output.render_height)?;
            render_rgb(&prepared.scene, &cam[0], &config.render)?.to_image().save_png(&out.join("render.png"))
        })?;
        artifacts.push(out.join("render.png"));
    }

    let report = RunReport {
        stages: stages.done,
        gaussians: prepared.scene.len(),
        kept_gaussians: kept.len(),
        points: cloud.len(),
        total: count.total,
        eval,
        artifacts,
        config: config.clone(),
    };
    write_json(&out.join("run.json"), &report)?;
    Ok(report)
}
