use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use splatcount::cluster::CountResult;
use splatcount::pipeline::{
    build_vocabulary, eval_counts, fit_features, label_codes, label_vectors, preview_cameras, resolve_template,
    run_count, run_pipeline, run_query, run_sample, PipelineConfig, PreparedScene,
};
use splatcount::pointcloud::PointCloud;
use splatcount::raster::render_rgb;
use splatcount::scene::{load_scene_ply, save_scene_ply, CameraFile, GroundTruth, SceneLabel};
use splatcount::semantics::{Autoencoder, FilterResult};
use splatcount::Error;

#[derive(Parser)]
#[command(name = "splatcount", version, about = "Prompt-filtered fruit counting on Gaussian splat scenes")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML config file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted config override, e.g. `--set filter.tau_pos=0.3`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Leave wall-clock timings out of reports.
    #[arg(long, global = true)]
    deterministic: bool,
    /// PLY convention for scene input: `linear` or `3dgs`.
    #[arg(long, global = true)]
    convention: Option<String>,
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic orchard scene with ground truth.
    Generate {
        #[arg(long)]
        fruits: Option<usize>,
        #[arg(long, default_value = "scene.ply")]
        out: PathBuf,
    },
    /// Render an RGB image of a scene.
    Render {
        #[arg(long)]
        scene: PathBuf,
        /// Camera JSON; an orbit view of the scene is used when absent.
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        width: usize,
        #[arg(long, default_value_t = 512)]
        height: usize,
        #[arg(long, default_value = "render.png")]
        out: PathBuf,
        /// Also write the float image as a raw dump.
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Fit per-Gaussian semantic codes to renders of the class latents.
    TrainFeatures {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        semantics: SemanticInputs,
        /// Per-splat class list written by `generate`.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        views: Option<usize>,
        #[arg(long, default_value = "scene.trained.ply")]
        out: PathBuf,
    },
    /// Score Gaussians against prompts and write the kept set.
    Query {
        #[arg(long)]
        scene: PathBuf,
        #[command(flatten)]
        semantics: SemanticInputs,
        /// Positive prompt: a label or a JSON file holding one vector.
        #[arg(long = "pos")]
        positives: Vec<String>,
        #[arg(long = "neg")]
        negatives: Vec<String>,
        #[arg(long)]
        tau_pos: Option<f64>,
        #[arg(long)]
        tau_neg: Option<f64>,
        /// `s`, `p` or `w`.
        #[arg(long)]
        level: Option<String>,
        /// `decoded` or `latent`.
        #[arg(long)]
        compare_space: Option<String>,
        #[arg(long, default_value = "filter.json")]
        out: PathBuf,
    },
    /// Sample a point cloud from the kept Gaussians.
    Sample {
        #[arg(long = "in")]
        scene: PathBuf,
        /// Filter JSON from `query`; all Gaussians are used when absent.
        #[arg(long)]
        filter: Option<PathBuf>,
        #[arg(long)]
        points: Option<usize>,
        #[arg(long, default_value = "cloud.ply")]
        out: PathBuf,
    },
    /// Cluster a point cloud and count fruit instances.
    Count {
        #[arg(long)]
        cloud: PathBuf,
        /// `sphere:<radius>` or a template point-cloud PLY.
        #[arg(long)]
        template: Option<String>,
        #[arg(long)]
        eps_factor: Option<f64>,
        #[arg(long)]
        min_samples: Option<usize>,
        #[arg(long, default_value = "count.json")]
        out: PathBuf,
    },
    /// Compare a count against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage end to end.
    Pipeline {
        #[arg(long)]
        fruits: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct SemanticInputs {
    /// Autoencoder weights; defaults to `autoencoder.bin` beside the scene.
    #[arg(long)]
    autoencoder: Option<PathBuf>,
    /// Vocabulary JSON; defaults to `vocabulary.json` beside the scene, else
    /// mock embeddings.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Config file, then `--set`, then subcommand flags.
struct Context {
    config: PipelineConfig,
    seed_given: bool,
}

impl Context {
    fn new(g: &Global) -> CliResult<Self> {
        let mut seed_given = false;
        let mut config = match &g.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                seed_given = text.parse::<toml::Table>().map(|t| t.contains_key("seed")).unwrap_or(false);
                PipelineConfig::from_toml(&text)?
            }
            None => PipelineConfig::default(),
        };
        for item in &g.overrides {
            let (k, v) = item.split_once('=').ok_or_else(|| usage(format!("--set expects KEY=VALUE, got `{item}`")))?;
            config.set(k.trim(), v.trim())?;
            seed_given |= k.trim() == "seed";
        }
        if let Some(seed) = g.seed {
            config.seed = seed;
            config.scene.rng_seed = seed;
            config.autoencoder.seed = seed;
            seed_given = true;
        }
        if let Some(c) = &g.convention {
            config.set("paths.convention", c)?;
        }
        if g.deterministic {
            config.output.deterministic = true;
        }
        Ok(Self { config, seed_given })
    }

    fn set(&mut self, key: &str, value: impl ToString) -> CliResult<()> {
        Ok(self.config.set(key, &value.to_string())?)
    }

    fn require_seed(&self, command: &str) -> CliResult<()> {
        if self.seed_given {
            Ok(())
        } else {
            Err(usage(format!("`{command}` is stochastic; pass --seed or set `seed` in the config")))
        }
    }
}

fn sibling(path: &Path, name: &str) -> PathBuf {
    path.parent().unwrap_or(Path::new(".")).join(name)
}

fn write_json<S: serde::Serialize>(path: &Path, value: &S) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(path, text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn read_json<S: serde::de::DeserializeOwned>(path: &Path) -> CliResult<S> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Core(Error::Config(format!("{} does not exist", path.display()))))
    }
}

/// Loads a scene with its autoencoder and vocabulary, defaulting both to the
/// files `generate` writes beside the scene.
fn prepare_loaded(ctx: &mut Context, scene: &Path, inputs: &SemanticInputs) -> CliResult<PreparedScene> {
    require_file(scene)?;
    let ae = inputs.autoencoder.clone().unwrap_or_else(|| sibling(scene, "autoencoder.bin"));
    require_file(&ae)?;
    let vocab = inputs.vocab.clone().or_else(|| Some(sibling(scene, "vocabulary.json")).filter(|p| p.is_file()));
    ctx.config.paths.vocabulary = vocab;
    let loaded = load_scene_ply::<f64>(scene, ctx.config.paths.convention)?;
    for w in &loaded.warnings {
        log::warn!("{w}");
    }
    Ok(PreparedScene {
        scene: loaded.scene,
        autoencoder: Autoencoder::load(&ae)?,
        vocabulary: build_vocabulary(&ctx.config, &ctx.config.scene.labels())?,
        truth: None,
        labels: None,
        label_codes: None,
        template_radius: None,
    })
}

fn run(cli: Cli) -> CliResult<()> {
    let mut ctx = Context::new(&cli.global)?;
    match cli.command {
        Command::Generate { fruits, out } => {
            if let Some(n) = fruits {
                ctx.set("scene.fruit_count", n)?;
            }
            ctx.require_seed("generate")?;
            ctx.config.validate()?;
            let prepared = splatcount::pipeline::generate_scene(&ctx.config)?;
            save_scene_ply(&prepared.scene, &out)?;
            if let Some(t) = &prepared.truth {
                t.save(&sibling(&out, "gt.json"))?;
            }
            prepared.autoencoder.save(&sibling(&out, "autoencoder.bin"))?;
            prepared.vocabulary.save(&sibling(&out, "vocabulary.json"))?;
            write_json(&sibling(&out, "labels.json"), &prepared.labels)?;
            println!("wrote {} ({} Gaussians, {} fruits)", out.display(), prepared.scene.len(), ctx.config.scene.fruit_count);
        }
        Command::Render { scene, camera, width, height, out, raw } => {
            require_file(&scene)?;
            ctx.config.validate()?;
            let loaded = load_scene_ply::<f64>(&scene, ctx.config.paths.convention)?;
            let cam = match camera {
                Some(p) => read_json::<CameraFile>(&p)?.to_camera()?,
                None => preview_cameras(&loaded.scene, 1, width, height)?.remove(0),
            };
            let frame = render_rgb(&loaded.scene, &cam, &ctx.config.render)?;
            let image = frame.to_image();
            image.save_png(&out)?;
            if let Some(r) = raw {
                image.save_raw(&r)?;
            }
            println!("wrote {} ({}x{})", out.display(), cam.width, cam.height);
        }
        Command::TrainFeatures { scene, semantics, labels, iterations, views, out } => {
            if let Some(n) = iterations {
                ctx.set("features.optimizer.iterations", n)?;
            }
            if let Some(n) = views {
                ctx.set("features.views", n)?;
            }
            ctx.config.features.enabled = true;
            ctx.config.validate()?;
            let labels_path = labels.unwrap_or_else(|| sibling(&scene, "labels.json"));
            require_file(&labels_path)?;
            let mut prepared = prepare_loaded(&mut ctx, &scene, &semantics)?;
            let classes: Vec<SceneLabel> = read_json(&labels_path)?;
            if classes.len() != prepared.scene.len() {
                return Err(CliError::Core(Error::Dimension(format!(
                    "{} labels for {} Gaussians",
                    classes.len(),
                    prepared.scene.len()
                ))));
            }
            let vectors = label_vectors(&ctx.config, &prepared.vocabulary)?;
            prepared.label_codes = Some(label_codes(&vectors, &prepared.autoencoder)?);
            prepared.labels = Some(classes);
            let report = fit_features(&mut prepared, &ctx.config)?;
            save_scene_ply(&prepared.scene, &out)?;
            write_json(&out.with_extension("json"), &report)?;
            let last = report.loss_trace.last().copied().unwrap_or(f64::NAN);
            println!("wrote {} after {} iterations, loss {last:.6e}", out.display(), report.iterations);
        }
        Command::Query { scene, semantics, positives, negatives, tau_pos, tau_neg, level, compare_space, out } => {
            if !positives.is_empty() {
                ctx.config.filter.positives = positives;
            }
            if !negatives.is_empty() {
                ctx.config.filter.negatives = negatives;
            }
            for (key, value) in [("filter.tau_pos", tau_pos.map(|v| v.to_string())), ("filter.tau_neg", tau_neg.map(|v| v.to_string()))] {
                if let Some(v) = value {
                    ctx.set(key, v)?;
                }
            }
            if let Some(l) = level {
                ctx.config.filter.level = l.parse().map_err(|e: Error| usage(e.to_string()))?;
            }
            if let Some(s) = compare_space {
                ctx.config.filter.compare_space = s.parse().map_err(|e: Error| usage(e.to_string()))?;
            }
            ctx.config.filter.enabled = true;
            ctx.config.validate()?;
            let prepared = prepare_loaded(&mut ctx, &scene, &semantics)?;
            let mut result = run_query(&prepared, &ctx.config)?;
            result.config = Some(serde_json::to_value(&ctx.config).map_err(Error::from)?);
            result.save(&out)?;
            println!(
                "kept {} of {} Gaussians (tau_pos {}, tau_neg {})",
                result.kept.len(),
                prepared.scene.len(),
                result.tau_pos,
                result.tau_neg
            );
        }
        Command::Sample { scene, filter, points, out } => {
            if let Some(n) = points {
                ctx.set("sample.target_points", n)?;
            }
            ctx.require_seed("sample")?;
            ctx.config.validate()?;
            require_file(&scene)?;
            let loaded = load_scene_ply::<f64>(&scene, ctx.config.paths.convention)?;
            let kept = match filter {
                Some(p) => {
                    require_file(&p)?;
                    FilterResult::load(&p)?.kept
                }
                None => (0..loaded.scene.len()).collect(),
            };
            let cloud = run_sample(&loaded.scene, &kept, &ctx.config)?;
            cloud.save_ply(&out)?;
            println!("wrote {} ({} points from {} Gaussians)", out.display(), cloud.len(), kept.len());
        }
        Command::Count { cloud, template, eps_factor, min_samples, out } => {
            if let Some(t) = template {
                ctx.config.paths.template = Some(t);
            }
            if let Some(e) = eps_factor {
                ctx.set("cluster.eps_factor", e)?;
            }
            if let Some(m) = min_samples {
                ctx.set("cluster.min_samples", m)?;
            }
            ctx.require_seed("count")?;
            if ctx.config.paths.template.is_none() {
                return Err(usage("count needs --template (sphere:<radius> or a PLY path)"));
            }
            ctx.config.validate()?;
            require_file(&cloud)?;
            let pc = PointCloud::<f64>::load_ply(&cloud)?;
            let template = resolve_template(&ctx.config, None)?;
            let result = run_count(&pc, &template, &ctx.config)?;
            result.save(&out)?;
            println!("counted {} fruits in {} clusters", result.total, result.clusters.len());
        }
        Command::Eval { pred, gt, out } => {
            require_file(&pred)?;
            require_file(&gt)?;
            let count = CountResult::load(&pred)?;
            let truth = GroundTruth::load(&gt)?;
            let result = eval_counts(count.total, truth.fruit_count)?;
            if let Some(o) = out {
                write_json(&o, &result)?;
            }
            println!("{}", result.line());
        }
        Command::Pipeline { fruits, out } => {
            if let Some(n) = fruits {
                ctx.set("scene.fruit_count", n)?;
            }
            if let Some(o) = out {
                ctx.config.paths.output = o;
            }
            ctx.require_seed("pipeline")?;
            ctx.config.validate()?;
            let report = run_pipeline(&ctx.config)?;
            info!("artifacts in {}", ctx.config.paths.output.display());
            match &report.eval {
                Some(e) => println!("{}", e.line()),
                None => println!("counted {} fruits", report.total),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 3 } else { 4 })
        }
    }
}
