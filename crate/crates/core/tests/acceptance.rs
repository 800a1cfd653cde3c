//! Acceptance suite. Each test prints one PASS line (visible with
//! `--nocapture`); a failed assertion marks the criterion failed. The
//! heavier criteria assert their own wall-clock budgets, so the tests
//! serialize on a mutex to keep timings honest on a single core.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use beamsight::config::ExperimentConfig;
use beamsight::data::{self, Dataset};
use beamsight::eval::{self, top_k_accuracy};
use beamsight::models::{
    self, BeamPredictor, ModelConfig, Prediction,
};
use beamsight::nn::{self, softmax, Init, Mlp, Mode, TrainConfig};
use beamsight::phy::{self, argmax, ArrayGeometry, Channel};
use beamsight::scene::{self, PhyConfig, SceneConfig};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

// Criterion 1: analytic gradients match central finite differences on
// random small networks.

// Exact cross-entropy, no epsilon: `backward` differentiates the exact
// loss, and the library's 1e-12 guard would skew the finite differences
// when the softmax saturates.
fn loss_at(mlp: &Mlp<f64>, input: &[f64], label: usize) -> f64 {
    let logits = mlp.forward_eval(input).unwrap();
    -softmax(&logits)[label].ln()
}

#[test]
fn criterion_1_gradient_check() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let h = 1e-5;
    let mut max_rel = 0.0f64;
    let mut nets = 0;
    while nets < 20 {
        let input_dim = rng.gen_range(2..=8);
        let output_dim = rng.gen_range(2..=8);
        let mut dims = vec![input_dim];
        for _ in 0..rng.gen_range(1..=2usize) {
            dims.push(rng.gen_range(2..=16));
        }
        dims.push(output_dim);
        let init = if nets % 2 == 0 { Init::HeNormal } else { Init::UnitNormal };
        let mut mlp = Mlp::<f64>::new(&dims, 0.0, init, &mut rng).unwrap();
        // random biases keep pre-activations off the ReLU kink, where
        // central differences are undefined
        for layer in mlp.layers.iter_mut() {
            for b in layer.biases.iter_mut() {
                *b = rng.gen_range(-0.5..0.5);
            }
        }
        let input: Vec<f64> = (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let label = rng.gen_range(0..output_dim);

        let cache = mlp.forward(&input, Mode::Eval, &mut rng).unwrap();
        let analytic = nn::backward(&mlp, &cache, label).unwrap();

        for l in 0..mlp.layers.len() {
            let n_params = mlp.layers[l].weights.len() + mlp.layers[l].biases.len();
            for p in 0..n_params {
                let read = |m: &Mlp<f64>, p: usize| {
                    let w = m.layers[l].weights.len();
                    if p < w { m.layers[l].weights[p] } else { m.layers[l].biases[p - w] }
                };
                let write = |m: &mut Mlp<f64>, p: usize, v: f64| {
                    let w = m.layers[l].weights.len();
                    if p < w { m.layers[l].weights[p] = v } else { m.layers[l].biases[p - w] = v }
                };
                let v0 = read(&mlp, p);
                let mut plus = mlp.clone();
                write(&mut plus, p, v0 + h);
                let mut minus = mlp.clone();
                write(&mut minus, p, v0 - h);
                let numeric =
                    (loss_at(&plus, &input, label) - loss_at(&minus, &input, label)) / (2.0 * h);
                let analytic_v = {
                    let w = mlp.layers[l].weights.len();
                    if p < w { analytic[l].d_weights[p] } else { analytic[l].d_biases[p - w] }
                };
                // the 1e-4 floor keeps finite-difference roundoff on
                // near-zero gradients from dominating the relative error
                let denom = analytic_v.abs().max(numeric.abs()).max(1e-4);
                max_rel = max_rel.max((analytic_v - numeric).abs() / denom);
            }
        }
        nets += 1;
    }
    assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    println!("PASS criterion 1: gradient check on {nets} nets, max rel err {max_rel:.2e}, {elapsed:.2?}");
}

// Criterion 2: codebook scan equals the nearest-sine beam for pure
// steering channels, and the argmax is invariant under positive scaling.

#[test]
fn criterion_2_physics_oracle() {
    let _g = serial();
    let start = Instant::now();
    let geometry = ArrayGeometry::<f64>::new(16, 0.5, 0.0).unwrap();
    let codebook = phy::dft_codebook(&geometry, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for _ in 0..1000 {
        let az = rng.gen_range(-1.57..1.57);
        let channel = Channel {
            coefficients: phy::steering_vector(az, &geometry),
            path_gain: 1.0,
            aoa_azimuth: az,
        };
        let (best, powers) = phy::optimal_beam(&channel, &codebook).unwrap();
        let sine = az.sin();
        let nearest = codebook
            .steering_sines
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - sine).abs().partial_cmp(&(b.1 - sine).abs()).unwrap()
            })
            .unwrap()
            .0;
        assert_eq!(best, nearest, "azimuth {az}");

        // positive scaling of the channel must not move the argmax
        let c = rng.gen_range(1e-3..1e3);
        let scaled = Channel {
            coefficients: channel.coefficients.iter().map(|z| z * c).collect(),
            path_gain: 1.0,
            aoa_azimuth: az,
        };
        let (best_scaled, _) = phy::optimal_beam(&scaled, &codebook).unwrap();
        assert_eq!(best, best_scaled);
        assert_eq!(best, argmax(&powers));
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("PASS criterion 2: 1000 azimuths match the nearest-sine beam, scaling invariant, {elapsed:.2?}");
}

// Criterion 3: downsample/relabel equals an independent re-scan oracle;
// the 70/30 split of a 3462-sample file yields 2423/1039.

fn sample_with_power(power: Vec<f64>) -> beamsight::data::Sample<f64> {
    beamsight::data::Sample {
        features: vec![0.5; 5],
        position: beamsight::scene::Position { latitude: 33.42, longitude: -111.93 },
        label: argmax(&power),
        power,
        true_xy: [0.0, 0.0],
    }
}

fn relabel_oracle(power64: &[f64]) -> (usize, Vec<f64>) {
    // independent linear re-scan over the even-indexed beams
    let down: Vec<f64> = (0..32).map(|m| power64[2 * m]).collect();
    let mut best = 0;
    for i in 1..32 {
        if down[i] > down[best] {
            best = i;
        }
    }
    (best, down)
}

#[test]
fn criterion_3_pipeline_exactness() {
    let _g = serial();
    let start = Instant::now();
    let mut powers: Vec<Vec<f64>> = Vec::new();
    for i in 0..64 {
        let mut p = vec![0.0; 64];
        p[i] = 1.0;
        powers.push(p);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    for _ in 0..10_000 {
        powers.push((0..64).map(|_| rng.gen_range(0.0..1.0)).collect());
    }
    let dataset = Dataset {
        samples: powers.iter().cloned().map(sample_with_power).collect(),
        normalization: None,
        codebook_size: 64,
    };
    let relabeled = data::relabel(dataset).unwrap();
    assert_eq!(relabeled.codebook_size, 32);
    for (s, p64) in relabeled.samples.iter().zip(&powers) {
        let (label, down) = relabel_oracle(p64);
        assert_eq!(s.label, label);
        assert_eq!(s.power, down);
    }

    let big = Dataset {
        samples: (0..3462)
            .map(|i| {
                let mut p = vec![0.0; 64];
                p[i % 64] = 1.0;
                sample_with_power(p)
            })
            .collect(),
        normalization: None,
        codebook_size: 64,
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.jsonl");
    data::save_jsonl(&big, &path).unwrap();
    let loaded = data::load_jsonl::<f64>(&path).unwrap();
    let (train, val) = data::split(&loaded, 0.7, 0).unwrap();
    assert_eq!(train.samples.len(), 2423);
    assert_eq!(val.samples.len(), 1039);

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("PASS criterion 3: relabel matches the re-scan oracle, 3462 -> 2423/1039, {elapsed:.2?}");
}

// Criterion 4: top-k accuracy is monotone in k, reaches 1.0 at k = M, and
// matches a full-sort oracle.

#[test]
fn criterion_4_metric_properties() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let m = 32;
    let n = 10_000;
    let preds: Vec<Prediction<f64>> = (0..n)
        .map(|_| {
            let logits: Vec<f64> = (0..m).map(|_| rng.gen_range(-4.0..4.0)).collect();
            Prediction::from_logits(&logits)
        })
        .collect();
    let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();

    let mut last = 0.0;
    for k in 1..=m {
        let acc: f64 = top_k_accuracy(&preds, &labels, k).unwrap();
        assert!(acc >= last, "top-{k} {acc} < top-{} {last}", k - 1);
        // full-sort oracle
        let hits = preds
            .iter()
            .zip(&labels)
            .filter(|(p, &l)| {
                let mut idx: Vec<usize> = (0..m).collect();
                idx.sort_by(|&a, &b| {
                    p.probabilities[b].partial_cmp(&p.probabilities[a]).unwrap()
                });
                idx[..k].contains(&l)
            })
            .count();
        let oracle = hits as f64 / n as f64;
        assert_eq!(acc, oracle, "top-{k} disagrees with the sort oracle");
        last = acc;
    }
    assert_eq!(last, 1.0, "top-M must be exactly 1.0");

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    println!("PASS criterion 4: top-k monotone, top-M = 1.0, sort oracle agrees, {elapsed:.2?}");
}

// Shared setup for the synthetic-scenario criteria (5-7).

fn accept_model_cfg() -> ModelConfig {
    ModelConfig {
        feature_dim: 32,
        vision_hidden: 128,
        classifier_hidden: 64,
    }
}

fn accept_train_cfg(seed: u64) -> TrainConfig<f64> {
    TrainConfig {
        total_epochs: 50,
        decay_epochs: vec![20, 40],
        dropout_rate: 0.2,
        rng_seed: seed,
        ..TrainConfig::default()
    }
}

/// Generates, relabels, splits, and normalizes the default scenario.
fn prepare(seed: u64, gps_noise_std: f64) -> (Dataset<f64>, Dataset<f64>) {
    let mut scene_cfg = SceneConfig::<f64>::default();
    scene_cfg.rng_seed = seed;
    scene_cfg.gps_noise_std = gps_noise_std;
    let raw = scene::generate_dataset(&scene_cfg, &PhyConfig::default(), 3000).unwrap();
    let processed = data::relabel(raw).unwrap();
    let (train, val) = data::split(&processed, 0.7, seed).unwrap();
    let stats = data::fit_normalization(&train).unwrap();
    (train.with_stats(stats.clone()), val.with_stats(stats))
}

fn accuracies(model: &dyn BeamPredictor<f64>, val: &Dataset<f64>) -> [f64; 3] {
    let preds: Vec<Prediction<f64>> =
        val.samples.iter().map(|s| model.predict(s).unwrap()).collect();
    let labels: Vec<usize> = val.samples.iter().map(|s| s.label).collect();
    [1, 2, 3].map(|k| top_k_accuracy(&preds, &labels, k).unwrap())
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[test]
fn criterion_5_fusion_dominates_and_vision_beats_noisy_gps() {
    let _g = serial();
    let start = Instant::now();
    let mc = accept_model_cfg();
    let seeds = [0u64, 1, 2, 3, 4];

    let (mut v1, mut p1, mut f1) = (Vec::new(), Vec::new(), Vec::new());
    for &seed in &seeds {
        let (train, val) = prepare(seed, 2.0);
        let cfg = accept_train_cfg(seed);
        let (vision, _) = models::train_vision(&train, &val, &cfg, &mc).unwrap();
        let (position, _) = models::train_position(&train, &val, &cfg, &mc).unwrap();
        let (fusion, _) = models::train_fusion(&train, &val, &vision, &cfg, &mc).unwrap();
        v1.push(accuracies(&vision, &val)[0]);
        p1.push(accuracies(&position, &val)[0]);
        f1.push(accuracies(&fusion, &val)[0]);
    }
    let (mv, mp, mf) = (mean(&v1), mean(&p1), mean(&f1));
    assert!(
        mf >= mv.max(mp) - 0.02,
        "fused top-1 {mf:.4} below max(vision {mv:.4}, position {mp:.4}) - 0.02"
    );

    // with 6 m GPS noise the position modality degrades below vision
    let (mut v6, mut p6) = (Vec::new(), Vec::new());
    for &seed in &seeds {
        let (train, val) = prepare(seed, 6.0);
        let cfg = accept_train_cfg(seed);
        let (vision, _) = models::train_vision(&train, &val, &cfg, &mc).unwrap();
        let (position, _) = models::train_position(&train, &val, &cfg, &mc).unwrap();
        v6.push(accuracies(&vision, &val)[0]);
        p6.push(accuracies(&position, &val)[0]);
    }
    assert!(
        mean(&v6) > mean(&p6),
        "vision top-1 {:.4} not above position top-1 {:.4} at 6 m",
        mean(&v6),
        mean(&p6)
    );

    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    println!(
        "PASS criterion 5: fused {mf:.4} >= max(vision {mv:.4}, position {mp:.4}) - 0.02; \
         at 6 m vision {:.4} > position {:.4}; {elapsed:.2?}",
        mean(&v6),
        mean(&p6)
    );
}

#[test]
fn criterion_6_top3_near_saturation() {
    let _g = serial();
    let start = Instant::now();
    let mc = accept_model_cfg();
    let mut top3 = Vec::new();
    let mut err_total = 0usize;
    let mut err_adjacent = 0usize;
    for seed in 0u64..5 {
        let (train, val) = prepare(seed, 2.0);
        let cfg = accept_train_cfg(seed);
        let (vision, _) = models::train_vision(&train, &val, &cfg, &mc).unwrap();
        let (fusion, _) = models::train_fusion(&train, &val, &vision, &cfg, &mc).unwrap();
        top3.push(accuracies(&fusion, &val)[2]);
        for s in &val.samples {
            let pred = fusion.predict(s).unwrap().predicted_index();
            if pred != s.label {
                err_total += 1;
                if pred.abs_diff(s.label) == 1 {
                    err_adjacent += 1;
                }
            }
        }
    }
    let m3 = mean(&top3);
    assert!(m3 >= 0.97, "fused top-3 mean {m3:.4} < 0.97");
    let adj = err_adjacent as f64 / err_total as f64;
    assert!(
        adj >= 0.90,
        "only {adj:.3} of top-1 errors land on an adjacent beam"
    );
    let elapsed = start.elapsed();
    println!(
        "PASS criterion 6: fused top-3 mean {m3:.4} >= 0.97, {adj:.3} of errors adjacent, {elapsed:.2?}"
    );
}

#[test]
fn criterion_7_fraction_sweep_saturates() {
    let _g = serial();
    let start = Instant::now();
    let (train, val) = prepare(0, 2.0);
    let cfg = TrainConfig {
        total_epochs: 80,
        decay_epochs: vec![50, 70],
        ..accept_train_cfg(0)
    };
    let sweep = eval::fraction_sweep(
        &train,
        &val,
        &[0.4, 1.0],
        &[0, 1, 2, 3, 4],
        &cfg,
        &accept_model_cfg(),
    )
    .unwrap();
    let at = |f: f64| sweep.stats.iter().find(|s| s.fraction == f).unwrap();
    let (s04, s10) = (at(0.4), at(1.0));
    let gap1 = (s10.mean_top1 - s04.mean_top1).abs();
    let gap3 = (s10.mean_top3 - s04.mean_top3).abs();
    assert!(gap1 <= 0.05, "top-1 gap {gap1:.4} exceeds 0.05");
    assert!(gap3 <= 0.03, "top-3 gap {gap3:.4} exceeds 0.03");
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:?}");
    println!(
        "PASS criterion 7: top-1 {:.4} @0.4 vs {:.4} @1.0 (gap {gap1:.4}), \
         top-3 gap {gap3:.4}, {elapsed:.2?}",
        s04.mean_top1, s10.mean_top1
    );
}

// Criterion 8: the whole generate -> train -> eval pipeline is
// byte-for-byte reproducible.

#[test]
fn criterion_8_determinism() {
    let _g = serial();
    let start = Instant::now();
    let run = |dir: &std::path::Path| {
        let mut cfg = ExperimentConfig::default();
        cfg.output_dir = dir.to_path_buf();
        cfg.pipeline.num_samples = 300;
        cfg.model = ModelConfig {
            feature_dim: 8,
            vision_hidden: 16,
            classifier_hidden: 16,
        };
        for t in [
            &mut cfg.training.vision,
            &mut cfg.training.position,
            &mut cfg.training.fusion,
        ] {
            t.total_epochs = 3;
            t.decay_epochs = vec![2];
        }
        beamsight::cli::cmd_generate(&cfg).unwrap();
        for kind in [
            models::ModelKind::Vision,
            models::ModelKind::Position,
            models::ModelKind::Fusion,
        ] {
            beamsight::cli::cmd_train(&cfg, kind).unwrap();
        }
        beamsight::cli::cmd_eval(&cfg).unwrap();
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(a.path());
    run(b.path());

    let names = |d: &std::path::Path| {
        let mut v: Vec<String> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        v.sort();
        v
    };
    let (na, nb) = (names(a.path()), names(b.path()));
    assert_eq!(na, nb);
    assert!(na.len() >= 10, "expected the full artifact set, got {na:?}");
    for name in &na {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert_eq!(x, y, "{name} differs between identical runs");
    }
    let elapsed = start.elapsed();
    println!(
        "PASS criterion 8: {} artifacts byte-identical across runs, {elapsed:.2?}",
        na.len()
    );
}
