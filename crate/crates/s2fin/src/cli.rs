//! Command-line interface. Every subcommand is a plain function so it can be
//! driven in-process as well as from `main`.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2fin_core::data::{extract_patch, extract_patches, split_samples, Normalization, PatchTriple, Scene};
use s2fin_core::gradcheck::{grad_check, GradCheckConfig};
use s2fin_core::train::{evaluate_pixels, train, History, TrainConfig};
use s2fin_core::{Module, ModuleSet, S2Fin, Tensor};

use crate::analysis::{analyze_spatial_frequency, analyze_spectrum};
use crate::container::{read_scene, write_scene};
use crate::error::{Error, Result};
use crate::paramfile::{self, TrainingSpec};
use crate::pnm::{write_class_ppm, write_pgm16};
use crate::report::Report;
use crate::synth::{synth_scene, SyntheticSceneSpec};

pub const PARAMS_FILE: &str = "params.s2fp";
pub const METRICS_FILE: &str = "metrics.txt";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug, Parser)]
#[command(name = "s2fin", version, about = "Spatial-spectral-frequency fusion classifier for multimodal rasters")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled scene container.
    Synth(SynthArgs),
    /// Low/high-frequency split of class-mean spectra, as CSV.
    AnalyzeSpectrum(SpectrumArgs),
    /// Class-average magnitude spectra of PCA component patches, as PGM.
    AnalyzeSpatial(SpatialArgs),
    /// Train on a few labeled pixels per class and evaluate on the rest.
    Train(TrainArgs),
    /// Evaluate stored parameters on the held-out pixels of a scene.
    Eval(EvalArgs),
    /// Train the full model and single-module ablations.
    Ablate(AblateArgs),
    /// Classify every pixel and write a paletted PPM.
    PredictMap(PredictArgs),
    /// Compare analytic gradients with central finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 8)]
    pub bands: usize,
    #[arg(long, default_value_t = 2)]
    pub active: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 3)]
    pub regions_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub cutoff_bin: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SpatialArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 11, value_parser = parse_window)]
    pub window: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_window(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(w @ (7 | 9 | 11 | 13)) => Ok(w),
        _ => Err(format!("`{s}` is not one of 7, 9, 11, 13")),
    }
}

fn parse_samples(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n @ (5 | 10 | 15)) => Ok(n),
        _ => Err(format!("`{s}` is not one of 5, 10, 15")),
    }
}

fn parse_module(s: &str) -> std::result::Result<Module, String> {
    Module::parse(s).ok_or_else(|| format!("`{s}` is not one of afcm, hfrm, hfset, ssaf"))
}

/// Options shared by `train` and `ablate`.
#[derive(Debug, Clone, Args)]
pub struct TrainOptions {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 11, value_parser = parse_window)]
    pub window: usize,
    #[arg(long, default_value_t = 10, value_parser = parse_samples)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 320)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 5e-4)]
    pub learning_rate: f64,
}

impl TrainOptions {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            embed_dim: self.embed_dim,
            alpha: self.alpha,
            window: self.window,
            samples_per_class: self.samples_per_class,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub options: TrainOptions,
    /// Replace a module by identity pass-through; repeatable.
    #[arg(long, value_parser = parse_module)]
    pub disable: Vec<Module>,
    /// Output directory for parameters, metrics and history.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    /// Metrics report path; stdout if omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub options: TrainOptions,
    /// Modules to ablate one at a time; all four if omitted.
    #[arg(long, value_parser = parse_module)]
    pub disable: Vec<Module>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub params: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Paint unlabeled pixels black instead of classifying them.
    #[arg(long)]
    pub mask_unlabeled: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GradCheckArgs {
    /// Take the patch from this scene; a random 8-band, 2-channel patch otherwise.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, default_value_t = 7, value_parser = parse_window)]
    pub window: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 5)]
    pub samples_per_leaf: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::AnalyzeSpectrum(a) => spectrum(&a),
        Command::AnalyzeSpatial(a) => spatial(&a),
        Command::Train(a) => train_cmd(&a),
        Command::Eval(a) => eval(&a),
        Command::Ablate(a) => ablate(&a),
        Command::PredictMap(a) => predict_map(&a),
        Command::GradCheck(a) => grad_check_cmd(&a),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        log::warn!("{w}");
    }
}

pub fn synth(a: &SynthArgs) -> Result<String> {
    let mut spec = SyntheticSceneSpec::with_random_prototypes(a.height, a.width, a.bands, a.active, a.classes, a.noise, a.seed);
    spec.regions_per_class = a.regions_per_class;
    let container = synth_scene(&spec, a.seed)?;
    write_scene(&container, &a.out)?;
    Ok(format!("wrote {}x{} scene with {} classes to {}", a.height, a.width, a.classes, a.out.display()))
}

pub fn spectrum(a: &SpectrumArgs) -> Result<String> {
    let scene = read_scene(&a.scene)?.scene;
    let analysis = analyze_spectrum(&scene, a.cutoff_bin)?;
    warn_all(&analysis.warnings);
    let mut csv = Vec::new();
    analysis.write_csv(&mut csv).map_err(|e| Error::io(&a.out, e))?;
    write_file(&a.out, &csv)?;
    Ok(format!("wrote {} class curves to {}", analysis.classes.len(), a.out.display()))
}

pub fn spatial(a: &SpatialArgs) -> Result<String> {
    let scene = read_scene(&a.scene)?.scene;
    let analysis = analyze_spatial_frequency(&scene, a.samples_per_class, a.window, a.seed)?;
    warn_all(&analysis.warnings);
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    let mut written = 0;
    for c in &analysis.classes {
        for (i, image) in c.images.iter().enumerate() {
            let path = a.out.join(format!("class{}_pc{}.pgm", c.class, i + 1));
            let mut bytes = Vec::new();
            write_pgm16(&mut bytes, a.window, a.window, image).map_err(|e| Error::io(&path, e))?;
            write_file(&path, &bytes)?;
            written += 1;
        }
    }
    Ok(format!("wrote {written} magnitude images to {}", a.out.display()))
}

fn history_csv(history: &History) -> String {
    let mut s = String::from("epoch,loss,train_accuracy,learning_rate\n");
    for r in &history.epochs {
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.loss, r.train_accuracy, r.learning_rate));
    }
    s
}

fn warn_absent(m: &s2fin_core::metrics::Metrics) {
    for k in &m.absent_classes {
        log::warn!("class {} has no evaluation pixels and is excluded from AA", k + 1);
    }
}

pub fn train_cmd(a: &TrainArgs) -> Result<String> {
    let opts = &a.options;
    let config = opts.config();
    let scene = read_scene(&opts.scene)?.scene;
    let normalization = Normalization::fit(&scene);
    let normalized = normalization.apply(&scene)?;
    let split = split_samples(&normalized, config.samples_per_class, config.seed)?;
    let train_set = extract_patches(&normalized, &split.train, config.window)?;
    let mut model_config = config.model_config(&normalized);
    model_config.disabled = a.disable.iter().copied().collect();
    let outcome = train(&train_set, model_config, &config)?;
    let training = TrainingSpec {
        seed: config.seed,
        samples_per_class: config.samples_per_class,
        epochs: config.epochs,
    };
    // Evaluate what is stored, i.e. after rounding to f32.
    let bytes = paramfile::encode(&outcome.model, &outcome.params, &normalization, &training)?;
    let stored = paramfile::decode(&bytes)?;
    let evaluation = evaluate_pixels(&stored.model, &stored.params, &normalized, &split.eval)?;
    warn_absent(&evaluation.metrics);

    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_file(&a.out.join(PARAMS_FILE), &bytes)?;
    let mut report = Report::new();
    report.metrics("", &evaluation.metrics);
    report
        .push("parameter_count", outcome.params.trainable_count())
        .push("train_pixels", split.train.len())
        .push("eval_pixels", split.eval.len())
        .push("final_loss", outcome.history.epochs.last().map_or(f64::NAN, |r| r.loss));
    write_file(&a.out.join(METRICS_FILE), report.render().as_bytes())?;
    write_file(&a.out.join(HISTORY_FILE), history_csv(&outcome.history).as_bytes())?;
    Ok(report.render())
}

fn check_scene(stored: &paramfile::StoredModel, scene: &Scene) -> Result<()> {
    let c = &stored.model.config;
    if (c.spectral_bands, c.active_channels, c.classes) != (scene.spectral_bands, scene.active_channels, scene.class_count) {
        return Err(Error::Dimension(format!(
            "model expects {} bands, {} active channels, {} classes; scene has {}, {}, {}",
            c.spectral_bands, c.active_channels, c.classes, scene.spectral_bands, scene.active_channels, scene.class_count
        )));
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<String> {
    let scene = read_scene(&a.scene)?.scene;
    let stored = paramfile::load(&a.params)?;
    check_scene(&stored, &scene)?;
    let normalized = stored.normalization.apply(&scene)?;
    let split = split_samples(&normalized, stored.training.samples_per_class, stored.training.seed)?;
    let evaluation = evaluate_pixels(&stored.model, &stored.params, &normalized, &split.eval)?;
    warn_absent(&evaluation.metrics);
    let mut report = Report::new();
    report.metrics("", &evaluation.metrics);
    report.push("eval_pixels", split.eval.len());
    let text = report.render();
    if let Some(out) = &a.out {
        write_file(out, text.as_bytes())?;
    }
    Ok(text)
}

pub fn ablate(a: &AblateArgs) -> Result<String> {
    let config = a.options.config();
    let scene = read_scene(&a.options.scene)?.scene;
    let split = split_samples(&scene, config.samples_per_class, config.seed)?;
    let modules: Vec<Module> = if a.disable.is_empty() { Module::ALL.to_vec() } else { a.disable.clone() };
    let mut variants = vec![("full".to_string(), ModuleSet::empty())];
    variants.extend(modules.iter().map(|&m| (format!("no_{}", m.name()), ModuleSet::empty().with(m))));
    let mut report = Report::new();
    for (name, disabled) in variants {
        let r = s2fin_core::train::ablation_run(&scene, &split, &config, disabled)?;
        report
            .push(format!("{name}.oa"), r.evaluation.metrics.oa)
            .push(format!("{name}.aa"), r.evaluation.metrics.aa)
            .push(format!("{name}.kappa"), r.evaluation.metrics.kappa)
            .push(format!("{name}.parameter_count"), r.parameter_count);
    }
    let text = report.render();
    if let Some(out) = &a.out {
        write_file(out, text.as_bytes())?;
    }
    Ok(text)
}

/// Predicted one-based class of every pixel, row-major.
pub fn predict_all(stored: &paramfile::StoredModel, scene: &Scene, mask_unlabeled: bool) -> Result<Vec<u16>> {
    let normalized = stored.normalization.apply(scene)?;
    let mut out = Vec::with_capacity(scene.height * scene.width);
    for row in 0..scene.height {
        for col in 0..scene.width {
            if mask_unlabeled && scene.label_at(row, col) == 0 {
                out.push(0);
                continue;
            }
            let patch = extract_patch(&normalized, row, col, stored.model.config.window)?;
            out.push((stored.model.predict(&stored.params, &patch)? + 1) as u16);
        }
    }
    Ok(out)
}

pub fn predict_map(a: &PredictArgs) -> Result<String> {
    let scene = read_scene(&a.scene)?.scene;
    let stored = paramfile::load(&a.params)?;
    check_scene(&stored, &scene)?;
    let classes = predict_all(&stored, &scene, a.mask_unlabeled)?;
    let mut bytes = Vec::new();
    write_class_ppm(BufWriter::new(&mut bytes), scene.width, scene.height, &classes).map_err(|e| Error::io(&a.out, e))?;
    write_file(&a.out, &bytes)?;
    Ok(format!("wrote {}x{} class map to {}", scene.width, scene.height, a.out.display()))
}

fn random_patch(bands: usize, active: usize, window: usize, label: usize, rng: &mut ChaCha8Rng) -> PatchTriple {
    use rand::Rng;
    let mut t = |c: usize| {
        let data = (0..c * window * window).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::from_vec(&[c, window, window], data).expect("patch shape")
    };
    let x_spec = t(bands);
    PatchTriple {
        x_spat: x_spec.clone(),
        x_spec,
        x_active: t(active),
        label: Some(label),
    }
}

pub fn grad_check_cmd(a: &GradCheckArgs) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let (patch, classes) = match &a.scene {
        Some(path) => {
            let scene = read_scene(path)?.scene;
            let scene = Normalization::fit(&scene).apply(&scene)?;
            let labeled: Vec<_> = scene.pixels_by_class().into_iter().flatten().collect();
            let px = labeled
                .choose(&mut rng)
                .ok_or_else(|| Error::Usage("grad-check: scene has no labeled pixels".into()))?;
            (extract_patch(&scene, px.row, px.col, a.window)?, scene.class_count)
        }
        None => (random_patch(8, 2, a.window, 1 % a.classes, &mut rng), a.classes),
    };
    let mut config = s2fin_core::ModelConfig::new(patch.x_spec.shape()[0], patch.x_active.shape()[0], classes, a.window);
    config.embed_dim = a.embed_dim;
    let (model, mut params) = S2Fin::new(config, a.seed)?;
    let gc = GradCheckConfig {
        tolerance: a.tolerance,
        samples_per_leaf: a.samples_per_leaf,
        seed: a.seed,
        ..GradCheckConfig::default()
    };
    let report = grad_check(&model, &mut params, &patch, &gc)?;
    let mut out = Report::new();
    for leaf in &report.leaves {
        out.push(format!("{}.max_rel_error", leaf.path), leaf.max_rel_error);
    }
    out.push("max_rel_error", report.max_rel_error())
        .push("tolerance", report.tolerance)
        .push("passed", report.passed());
    let text = out.render();
    if let Some(path) = &a.out {
        write_file(path, text.as_bytes())?;
    }
    if !report.passed() {
        let failing: Vec<&str> = report.failing().map(|l| l.path.as_str()).collect();
        return Err(Error::GradCheck(failing.join(",")));
    }
    Ok(text)
}
