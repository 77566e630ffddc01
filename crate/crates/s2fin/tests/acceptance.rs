//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2fin::analysis::{analyze_spectrum, split_spectrum, Pca};
use s2fin::cli::{self, PredictArgs, TrainArgs, TrainOptions};
use s2fin::container::{read_scene, write_scene, SceneContainer};
use s2fin::pnm::parse_pnm;
use s2fin::synth::{synth_scene, SyntheticSceneSpec};
use s2fin_core::autodiff::Tape;
use s2fin_core::data::{extract_patches, split_samples, Normalization, PatchTriple, Scene};
use s2fin_core::fusion::{phase_resonance_amplitude, Afcm, AfcmConfig, HfrmConfig};
use s2fin_core::gradcheck::{grad_check, GradCheckConfig};
use s2fin_core::hfset::{Hfset, HfsetConfig};
use s2fin_core::metrics::ConfusionMatrix;
use s2fin_core::params::ParamBuilder;
use s2fin_core::sparse::sparsemax_threshold;
use s2fin_core::ssaf::{CrossFeatureGate, Ssaf};
use s2fin_core::train::{ablation_run, evaluate_pixels, train, TrainConfig};
use s2fin_core::transforms::{dct2_2d, dct_basis, dft_1d, dft_2d, idct2_2d, idft_1d, idft_2d};
use s2fin_core::{ModelConfig, ModelParams, Module, ModuleSet, S2Fin, Tensor};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.1?}, limit {limit:?}"))
    }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, random_vec(rng, n, -1.0, 1.0)).unwrap()
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn energy(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(|x| x * x).sum()
}

fn transforms() -> Outcome {
    let start = Instant::now();
    let sizes = [4, 8, 11, 13, 16];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut round_trip, mut parseval) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        for &n in &sizes {
            let x = random_vec(&mut rng, n, -5.0, 5.0);
            let spec = dft_1d(&x).map_err(|e| e.to_string())?;
            let back: Vec<f64> = idft_1d(&spec).unwrap().iter().map(|z| z.re).collect();
            round_trip = round_trip.max(max_abs(&back, &x));
            let e = energy(x.iter().copied());
            parseval = parseval.max((energy(spec.amplitude()) / n as f64 - e).abs() / e);
            for &m in &sizes {
                let x = random_vec(&mut rng, n * m, -5.0, 5.0);
                let spec = dft_2d(&x, n, m).unwrap();
                round_trip = round_trip.max(max_abs(&idft_2d(&spec).unwrap(), &x));
                let e = energy(x.iter().copied());
                parseval = parseval.max((energy(spec.amplitude()) / (n * m) as f64 - e).abs() / e);
                let c = dct2_2d(&x, n, m).unwrap();
                round_trip = round_trip.max(max_abs(&idct2_2d(&c, n, m).unwrap(), &x));
                parseval = parseval.max((energy(c.iter().copied()) - e).abs() / e);
            }
        }
    }
    let mut ortho = 0.0f64;
    for n in 1..=8 {
        let m = dct_basis(n);
        for i in 0..n {
            for j in 0..n {
                let dot: f64 = (0..n).map(|k| m[k * n + i] * m[k * n + j]).sum();
                ortho = ortho.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    check(
        round_trip <= 1e-9 && ortho <= 1e-9 && parseval <= 1e-9,
        format!("round-trip {round_trip:.1e}, MᵀM−I {ortho:.1e}, energy {parseval:.1e} (limit 1e-9)"),
    )
}

/// Closest point of the probability simplex, by trying every support set.
fn simplex_projection(z: &[f64]) -> Vec<f64> {
    let m = z.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let size = mask.count_ones() as f64;
        let sum: f64 = (0..m).filter(|i| mask >> i & 1 == 1).map(|i| z[i]).sum();
        let tau = (sum - 1.0) / size;
        let w: Vec<f64> = (0..m).map(|i| if mask >> i & 1 == 1 { z[i] - tau } else { 0.0 }).collect();
        if w.iter().any(|&v| v < -1e-15) {
            continue;
        }
        let dist: f64 = w.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().map_or(true, |(d, _)| dist < *d) {
            best = Some((dist, w));
        }
    }
    best.expect("a singleton support is always feasible").1
}

fn sparsemax() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut dev, mut sum_err) = (0.0f64, 0.0f64);
    let vectors = 1000;
    for i in 0..vectors {
        let m = 1 + i % 12;
        let scale = rng.gen_range(0.1..5.0);
        let z = random_vec(&mut rng, m, -scale, scale);
        let w = sparsemax_threshold(&z).map_err(|e| e.to_string())?.w;
        dev = dev.max(max_abs(&w, &simplex_projection(&z)));
        sum_err = sum_err.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    check(
        dev <= 1e-9 && sum_err <= 1e-12,
        format!("{vectors} vectors, M ≤ 12: max deviation {dev:.1e}, |Σw−1| ≤ {sum_err:.1e}"),
    )
}

fn random_patch(rng: &mut ChaCha8Rng, bands: usize, active: usize, s: usize, label: usize) -> PatchTriple {
    let x_spec = random_tensor(rng, &[bands, s, s]);
    PatchTriple {
        x_spat: x_spec.clone(),
        x_spec,
        x_active: random_tensor(rng, &[active, s, s]),
        label: Some(label),
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let patch = random_patch(&mut rng, 8, 2, 7, 1);
    let (model, mut params) = S2Fin::new(ModelConfig::new(8, 2, 4, 7), 3).map_err(|e| e.to_string())?;
    let config = GradCheckConfig::default();
    let report = grad_check(&model, &mut params, &patch, &config).map_err(|e| e.to_string())?;
    within(start.elapsed(), Duration::from_secs(300))?;
    let gate_leaves = ["hfset.hf.f_cutoff", "hfset.hf.g_amp"]
        .iter()
        .all(|p| report.leaves.iter().any(|l| l.path == *p && l.passed));
    let failing: Vec<&str> = report.failing().map(|l| l.path.as_str()).collect();
    check(
        report.passed() && gate_leaves && report.leaves.len() == params.len(),
        format!(
            "{} leaves, h = {:e}, max rel error {:.2e} (limit {:e}){}",
            report.leaves.len(),
            config.step,
            report.max_rel_error(),
            config.tolerance,
            if failing.is_empty() { String::new() } else { format!(", failing {failing:?}") }
        ),
    )
}

fn build<T>(f: impl FnOnce(&mut ParamBuilder<'_>) -> s2fin_core::Result<T>) -> (T, ModelParams) {
    let mut params = ModelParams::new();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let module = {
        let mut b = ParamBuilder::new(&mut params, &mut rng);
        f(&mut b).unwrap()
    };
    (module, params)
}

fn trivial_cases() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut notes = Vec::new();

    let (hfset, mut params) = build(|b| Hfset::new(&mut b.scope("hfset"), HfsetConfig::new(6)));
    params.fill("hfset.fc.weight", 0.0).unwrap();
    params.fill("hfset.fc.bias", 0.0).unwrap();
    let x = random_tensor(&mut rng, &[6, 7, 7]);
    let tape = Tape::new();
    let p = params.bind(&tape);
    let y = tape.value(hfset.forward(&tape, &p, tape.constant(x.clone())).unwrap().output);
    let hfset_ok = y == x;
    notes.push(format!("hfset residual {}", if hfset_ok { "exact" } else { "differs" }));

    let cfg = AfcmConfig { channels: 4, height: 7, width: 7, cut_index: 4 };
    let (afcm, mut params) = build(|b| Afcm::new(&mut b.scope("afcm"), &cfg));
    for leaf in params.leaves_mut() {
        leaf.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let (xp, xa) = (random_tensor(&mut rng, &[4, 7, 7]), random_tensor(&mut rng, &[4, 7, 7]));
    let tape = Tape::new();
    let p = params.bind(&tape);
    let tr = afcm.forward(&tape, &p, tape.constant(xp.clone()), tape.constant(xa.clone())).unwrap();
    let doubled = |v, x: &Tensor| tape.value(v).data().iter().zip(x.data()).all(|(y, x)| *y == 2.0 * x);
    let afcm_ok = doubled(tr.x_p, &xp) && doubled(tr.x_a, &xa);
    notes.push(format!("afcm ×2 {}", if afcm_ok { "exact" } else { "differs" }));

    let shape = [4, 5, 5];
    let pi = std::f64::consts::PI;
    let amp = |rng: &mut ChaCha8Rng| Tensor::from_vec(&shape, random_vec(rng, 100, 0.0, 3.0)).unwrap();
    let phase = |rng: &mut ChaCha8Rng| Tensor::from_vec(&shape, random_vec(rng, 100, -pi, pi)).unwrap();
    let (ap, pp, aa, pa) = (amp(&mut rng), phase(&mut rng), amp(&mut rng), phase(&mut rng));
    let mut hcfg = HfrmConfig::new(4, 5, 5);
    hcfg.alpha = 0.0;
    let fused = phase_resonance_amplitude(&ap, &pp, &aa, &pa, &hcfg).unwrap();
    let mean: Vec<f64> = ap.data().iter().zip(aa.data()).map(|(a, b)| (a + b) / 2.0).collect();
    let hfrm_err = max_abs(fused.data(), &mean);
    notes.push(format!("hfrm α=0 {hfrm_err:.1e}"));

    let (ssaf, params) = build(|b| Ssaf::new(&mut b.scope("ssaf"), 4));
    let mut ssaf_err = 0.0f64;
    for _ in 0..10 {
        let x = Tensor::from_vec(&[4, 7, 7], random_vec(&mut rng, 196, -2.0, 2.0)).unwrap();
        let tape = Tape::new();
        let p = params.bind(&tape);
        let xv = tape.constant(x.clone());
        let mixed = tape.value(ssaf.forward(&tape, &p, xv, xv).unwrap().mixed);
        let triple: Vec<f64> = x.data().iter().map(|v| 3.0 * v).collect();
        ssaf_err = ssaf_err.max(max_abs(mixed.data(), &triple));
    }
    notes.push(format!("ssaf identical-input {ssaf_err:.1e}"));

    let (gate, mut params) = build(|b| CrossFeatureGate::new(&mut b.scope("gate"), 49));
    params.fill("gate.fc.weight", 0.0).unwrap();
    params.fill("gate.fc.bias", 0.0).unwrap();
    let (a, b) = (random_tensor(&mut rng, &[4, 7, 7]), random_tensor(&mut rng, &[4, 7, 7]));
    let tape = Tape::new();
    let p = params.bind(&tape);
    let tr = gate.forward(&tape, &p, tape.constant(a.clone()), tape.constant(b.clone())).unwrap();
    let halved = |v, x: &Tensor| tape.value(v).data().iter().zip(x.data()).all(|(y, x)| *y == 0.5 * x);
    let gate_ok = halved(tr.f_s, &a) && halved(tr.f_fus, &b);
    notes.push(format!("gate ½ {}", if gate_ok { "exact" } else { "differs" }));

    check(
        hfset_ok && afcm_ok && hfrm_err <= 1e-9 && ssaf_err <= 1e-10 && gate_ok,
        notes.join(", "),
    )
}

fn desk_scene(seed: u64) -> Scene {
    let spec = SyntheticSceneSpec::with_random_prototypes(64, 64, 8, 2, 4, 0.1, seed);
    synth_scene(&spec, seed).unwrap().scene
}

/// Training setup shared by the learning and ablation criteria.
fn desk_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: DESK_EPOCHS,
        batch_size: 8,
        window: 7,
        samples_per_class: 10,
        seed,
        ..TrainConfig::default()
    }
}

const DESK_EPOCHS: usize = 60;

fn learning() -> Outcome {
    let start = Instant::now();
    let scene = desk_scene(0);
    let config = desk_config(0);
    let normalized = Normalization::fit(&scene).apply(&scene).map_err(|e| e.to_string())?;
    let split = split_samples(&normalized, config.samples_per_class, config.seed).map_err(|e| e.to_string())?;
    let train_set = extract_patches(&normalized, &split.train, config.window).map_err(|e| e.to_string())?;
    let outcome = train(&train_set, config.model_config(&normalized), &config).map_err(|e| e.to_string())?;
    let eval = evaluate_pixels(&outcome.model, &outcome.params, &normalized, &split.eval).map_err(|e| e.to_string())?;
    within(start.elapsed(), Duration::from_secs(300))?;
    let m = &eval.metrics;
    check(
        m.oa >= 0.95 && m.kappa >= 0.9,
        format!(
            "{} epochs, {} held-out pixels: OA {:.4}, Kappa {:.4} in {:.1?}",
            config.epochs,
            split.eval.len(),
            m.oa,
            m.kappa,
            start.elapsed()
        ),
    )
}

fn ablation() -> Outcome {
    let seeds = 0..5u64;
    let mut wins = [0usize; 4];
    let mut lines = Vec::new();
    for seed in seeds.clone() {
        let scene = desk_scene(seed);
        let config = TrainConfig { embed_dim: ABLATION_EMBED, ..desk_config(seed) };
        let split = split_samples(&scene, config.samples_per_class, seed).map_err(|e| e.to_string())?;
        let full = ablation_run(&scene, &split, &config, ModuleSet::empty()).map_err(|e| e.to_string())?;
        let full_oa = full.evaluation.metrics.oa;
        let mut row = format!("seed {seed}: full {full_oa:.4}");
        for (i, m) in Module::ALL.into_iter().enumerate() {
            let r = ablation_run(&scene, &split, &config, ModuleSet::empty().with(m)).map_err(|e| e.to_string())?;
            let oa = r.evaluation.metrics.oa;
            if !oa.is_finite() {
                return Err(format!("seed {seed}: no_{} produced OA {oa}", m.name()));
            }
            if full_oa >= oa {
                wins[i] += 1;
            }
            row.push_str(&format!(" no_{} {oa:.4}", m.name()));
        }
        lines.push(row);
    }
    let per_module: Vec<String> = Module::ALL
        .iter()
        .zip(&wins)
        .map(|(m, w)| format!("{}:{w}/5", m.name()))
        .collect();
    check(
        wins.iter().all(|&w| w >= 3),
        format!("full ≥ ablation on [{}]; {}", per_module.join(" "), lines.join("; ")),
    )
}

const ABLATION_EMBED: usize = 16;

fn parameter_budget() -> Outcome {
    let cases = [(8, 2, 4, 7), (144, 1, 15, 11), (63, 1, 6, 11), (64, 2, 11, 11), (180, 4, 7, 13)];
    let mut counts = Vec::new();
    for (bands, active, classes, window) in cases {
        let (_, params) = S2Fin::new(ModelConfig::new(bands, active, classes, window), 0).map_err(|e| e.to_string())?;
        counts.push(params.trainable_count());
    }
    check(
        counts.iter().all(|n| (300_000..=1_100_000).contains(n)),
        format!("trainable parameters {counts:?} within [300000, 1100000]"),
    )
}

fn metrics() -> Outcome {
    let examples: [(usize, Vec<u64>, [f64; 3]); 3] = [
        (3, vec![5, 0, 0, 0, 9, 0, 0, 0, 2], [1.0, 1.0, 1.0]),
        (2, vec![25, 25, 25, 25], [0.5, 0.5, 0.0]),
        (2, vec![8, 2, 1, 9], [0.85, 0.85, 0.7]),
    ];
    let mut err = 0.0f64;
    for (k, counts, [oa, aa, kappa]) in examples {
        let m = ConfusionMatrix::from_counts(k, counts).unwrap().metrics();
        err = err.max((m.oa - oa).abs()).max((m.aa - aa).abs()).max((m.kappa - kappa).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut perm_err = 0.0f64;
    for _ in 0..100 {
        let k = rng.gen_range(2..=15);
        let counts: Vec<u64> = (0..k * k).map(|_| rng.gen_range(0..50)).collect();
        let m = ConfusionMatrix::from_counts(k, counts.clone()).unwrap();
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        let mut permuted = vec![0; k * k];
        for r in 0..k {
            for c in 0..k {
                permuted[perm[r] * k + perm[c]] = counts[r * k + c];
            }
        }
        let p = ConfusionMatrix::from_counts(k, permuted).unwrap();
        perm_err = perm_err.max((m.kappa() - p.kappa()).abs());
    }
    check(
        err <= 1e-12 && perm_err <= 1e-12,
        format!("worked examples {err:.1e}, kappa under 100 permutations {perm_err:.1e} (limit 1e-12)"),
    )
}

fn small_train_args(scene: &Path, out: &Path) -> TrainArgs {
    TrainArgs {
        options: TrainOptions {
            scene: scene.to_path_buf(),
            window: 7,
            samples_per_class: 5,
            alpha: 0.2,
            epochs: 3,
            seed: 7,
            embed_dim: 16,
            batch_size: 8,
            learning_rate: 5e-4,
        },
        disable: Vec::new(),
        out: out.to_path_buf(),
    }
}

fn determinism_and_io() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SyntheticSceneSpec::with_random_prototypes(20, 24, 6, 2, 3, 0.1, 9);
    let container = synth_scene(&spec, 9).map_err(|e| e.to_string())?;
    let scene_dir = dir.path().join("scene");
    write_scene(&container, &scene_dir).map_err(|e| e.to_string())?;
    let back = read_scene(&scene_dir).map_err(|e| e.to_string())?;
    let bits = |c: &SceneContainer| {
        (
            c.scene.spectral.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            c.scene.active.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            c.scene.labels.clone(),
        )
    };
    let round_trip = bits(&back) == bits(&container) && back == container;

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    cli::train_cmd(&small_train_args(&scene_dir, &a)).map_err(|e| e.to_string())?;
    cli::train_cmd(&small_train_args(&scene_dir, &b)).map_err(|e| e.to_string())?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
    let same_metrics = read(&a.join(cli::METRICS_FILE))? == read(&b.join(cli::METRICS_FILE))?;
    let same_params = read(&a.join(cli::PARAMS_FILE))? == read(&b.join(cli::PARAMS_FILE))?;

    let map = dir.path().join("map.ppm");
    cli::predict_map(&PredictArgs {
        scene: scene_dir.clone(),
        params: a.join(cli::PARAMS_FILE),
        out: map.clone(),
        mask_unlabeled: false,
    })
    .map_err(|e| e.to_string())?;
    let img = parse_pnm(&read(&map)?).map_err(|e| e.to_string())?;
    let ppm_ok = img.magic == "P6" && (img.width, img.height) == (24, 20) && img.maxval == 255;

    check(
        round_trip && same_metrics && same_params && ppm_ok,
        format!(
            "container round-trip {}, metrics {}, parameters {}, map {}x{} {}",
            if round_trip { "bit-exact" } else { "differs" },
            if same_metrics { "identical" } else { "differ" },
            if same_params { "identical" } else { "differ" },
            img.width,
            img.height,
            img.magic
        ),
    )
}

fn analysis() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut recon = 0.0f64;
    for _ in 0..200 {
        let n = rng.gen_range(2..64);
        let x = random_vec(&mut rng, n, -3.0, 3.0);
        let (low, high) = split_spectrum(&x, rng.gen_range(0..n)).map_err(|e| e.to_string())?;
        let sum: Vec<f64> = low.iter().zip(&high).map(|(l, h)| l + h).collect();
        recon = recon.max(max_abs(&sum, &x));
    }
    let scene = desk_scene(3);
    for c in analyze_spectrum(&scene, 2).map_err(|e| e.to_string())?.classes {
        let sum: Vec<f64> = c.low.iter().zip(&c.high).map(|(l, h)| l + h).collect();
        recon = recon.max(max_abs(&sum, &c.mean));
    }

    let dims = 8;
    let mut dir = random_vec(&mut rng, dims, -1.0, 1.0);
    let norm = energy(dir.iter().copied()).sqrt();
    dir.iter_mut().for_each(|d| *d /= norm);
    let offset = random_vec(&mut rng, dims, -2.0, 2.0);
    let n = 400;
    let mut data = Vec::with_capacity(n * dims);
    for _ in 0..n {
        let t: f64 = rng.gen_range(-3.0..3.0);
        data.extend(offset.iter().zip(&dir).map(|(o, d)| o + t * d));
    }
    let pca = Pca::fit(&data, n, dims, 3).map_err(|e| e.to_string())?;
    let cosine: f64 = pca.components[0].iter().zip(&dir).map(|(a, b)| a * b).sum::<f64>().abs();

    let noisy: Vec<f64> = (0..n * dims).map(|i| rng.gen_range(-1.0..1.0) * (1 + i % dims) as f64).collect();
    let mut ortho = 0.0f64;
    for p in [&pca, &Pca::fit(&noisy, n, dims, 3).map_err(|e| e.to_string())?] {
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = p.components[i].iter().zip(&p.components[j]).map(|(a, b)| a * b).sum();
                ortho = ortho.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    check(
        recon <= 1e-9 && ortho <= 1e-9 && cosine >= 0.999,
        format!("low+high {recon:.1e}, PCA orthonormality {ortho:.1e}, dominant |cos| {cosine:.6}"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("transform correctness", transforms),
        ("sparsemax oracle equivalence", sparsemax),
        ("gradient fidelity", gradients),
        ("trivial-case equalities", trivial_cases),
        ("desk-scale learning", learning),
        ("ablation harness", ablation),
        ("parameter budget", parameter_budget),
        ("metrics exactness", metrics),
        ("determinism and i/o", determinism_and_io),
        ("analysis commands", analysis),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        let n = i + 1;
        if only.is_some_and(|o| o != n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        println!("{tag} criterion {n:>2} {name}: {detail} [{:.1?}]", start.elapsed());
        if outcome.is_err() {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
