//! Experiment orchestration behind the CLI subcommands: generate the
//! dataset, run the pipeline, train the three models, evaluate, and sweep.
//! Every command is a pure function of its config and seeds, so reruns
//! produce byte-identical outputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::data::{self, Dataset, NormStats};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, FractionSweep};
use crate::models::{
    self, Checkpoint, FusionModel, ModelKind, PositionModel, VisionModel,
};
use crate::nn::EpochStats;
use crate::phy;
use crate::scene;

pub const RAW_DATASET: &str = "raw.jsonl";
pub const RAW_CSV: &str = "raw.csv";
pub const CODEBOOK_FILE: &str = "codebook.json";
pub const TRAIN_DATASET: &str = "train.jsonl";
pub const VAL_DATASET: &str = "val.jsonl";
pub const TRAIN_NORMALIZED: &str = "train_normalized.jsonl";
pub const VAL_NORMALIZED: &str = "val_normalized.jsonl";
pub const NORM_STATS: &str = "norm_stats.json";

fn out_path(cfg: &ExperimentConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn checkpoint_path(cfg: &ExperimentConfig, kind: ModelKind) -> PathBuf {
    out_path(cfg, &format!("{kind}.ckpt.json"))
}

fn load_norm_stats(cfg: &ExperimentConfig) -> Result<NormStats<f64>> {
    let path = out_path(cfg, NORM_STATS);
    if !path.exists() {
        return Err(Error::MissingPrerequisite(format!(
            "{} not found; run `generate` first",
            path.display()
        )));
    }
    let input = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(input)?)
}

fn load_split(cfg: &ExperimentConfig) -> Result<(Dataset<f64>, Dataset<f64>)> {
    let train_path = out_path(cfg, TRAIN_DATASET);
    let val_path = out_path(cfg, VAL_DATASET);
    if !train_path.exists() || !val_path.exists() {
        return Err(Error::MissingPrerequisite(format!(
            "processed datasets not found in {}; run `generate` first",
            cfg.output_dir.display()
        )));
    }
    let stats = load_norm_stats(cfg)?;
    let train = data::load_jsonl::<f64>(&train_path)?.with_stats(stats.clone());
    let val = data::load_jsonl::<f64>(&val_path)?.with_stats(stats);
    Ok((train, val))
}

/// Generates the raw 64-beam dataset and the processed split, writes all
/// artifacts to the output directory, and prints the label histogram.
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    let phy_cfg = cfg.codebook.phy_config();
    let raw = scene::generate_dataset(&cfg.scene, &phy_cfg, cfg.pipeline.num_samples)?;
    data::save_jsonl(&raw, &out_path(cfg, RAW_DATASET))?;
    data::save_csv(&raw, &out_path(cfg, RAW_CSV))?;

    let geometry = phy_cfg.geometry(cfg.scene.bs_boresight_azimuth)?;
    let codebook = phy::dft_codebook(&geometry, phy_cfg.num_beams);
    codebook.save_json(&out_path(cfg, CODEBOOK_FILE))?;

    let processed = if cfg.codebook.downsample {
        data::relabel(raw)?
    } else {
        raw
    };
    let (train, val) = data::split(&processed, cfg.pipeline.train_fraction, cfg.pipeline.seed)?;
    let stats = data::fit_normalization(&train)?;
    data::save_jsonl(&train, &out_path(cfg, TRAIN_DATASET))?;
    data::save_jsonl(&val, &out_path(cfg, VAL_DATASET))?;
    let train_n = data::apply_normalization(train.clone(), &stats)?;
    let val_n = data::apply_normalization(val.clone(), &stats)?;
    data::save_jsonl(&train_n, &out_path(cfg, TRAIN_NORMALIZED))?;
    data::save_jsonl(&val_n, &out_path(cfg, VAL_NORMALIZED))?;
    let out = BufWriter::new(File::create(out_path(cfg, NORM_STATS))?);
    serde_json::to_writer(out, &stats)?;

    let mut hist = vec![0usize; processed.codebook_size];
    for s in train.samples.iter().chain(&val.samples) {
        hist[s.label] += 1;
    }
    println!(
        "generated {} samples ({} train / {} val), {} beams",
        processed.samples.len(),
        train.samples.len(),
        val.samples.len(),
        processed.codebook_size
    );
    println!("label histogram:");
    for (label, count) in hist.iter().enumerate() {
        if *count > 0 {
            println!("  beam {label:>3}: {count}");
        }
    }
    Ok(())
}

fn write_history(path: &Path, history: &[EpochStats<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "learning_rate", "train_loss", "val_top1"])?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            h.learning_rate.to_string(),
            h.train_loss.to_string(),
            h.val_top1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Trains one model kind and writes its checkpoint and per-epoch history.
/// Fusion requires an existing vision checkpoint.
pub fn cmd_train(cfg: &ExperimentConfig, kind: ModelKind) -> Result<()> {
    cfg.validate()?;
    let (train, val) = load_split(cfg)?;
    let (checkpoint, history) = match kind {
        ModelKind::Vision => {
            let (model, history) =
                models::train_vision(&train, &val, &cfg.training.vision, &cfg.model)?;
            (model.to_checkpoint(), history)
        }
        ModelKind::Position => {
            let (model, history) =
                models::train_position(&train, &val, &cfg.training.position, &cfg.model)?;
            (model.to_checkpoint(), history)
        }
        ModelKind::Fusion => {
            let vision_path = checkpoint_path(cfg, ModelKind::Vision);
            if !vision_path.exists() {
                return Err(Error::MissingPrerequisite(format!(
                    "fusion training needs a vision checkpoint at {}; run `train --model vision` first",
                    vision_path.display()
                )));
            }
            let vision = VisionModel::from_checkpoint(Checkpoint::load_json(&vision_path)?)?;
            let (model, history) =
                models::train_fusion(&train, &val, &vision, &cfg.training.fusion, &cfg.model)?;
            (model.to_checkpoint(), history)
        }
    };
    checkpoint.save_json(&checkpoint_path(cfg, kind))?;
    write_history(&out_path(cfg, &format!("{kind}_history.csv")), &history)?;
    let last = history.last().map(|h| h.val_top1).unwrap_or(0.0);
    println!("trained {kind} model: final val top-1 = {last:.4}");
    Ok(())
}

fn load_all_models(
    cfg: &ExperimentConfig,
) -> Result<(VisionModel<f64>, PositionModel<f64>, FusionModel<f64>)> {
    let load = |kind: ModelKind| -> Result<Checkpoint<f64>> {
        let path = checkpoint_path(cfg, kind);
        if !path.exists() {
            return Err(Error::MissingPrerequisite(format!(
                "checkpoint {} not found; run `train --model {kind}` first",
                path.display()
            )));
        }
        Checkpoint::load_json(&path)
    };
    Ok((
        VisionModel::from_checkpoint(load(ModelKind::Vision)?)?,
        PositionModel::from_checkpoint(load(ModelKind::Position)?)?,
        FusionModel::from_checkpoint(load(ModelKind::Fusion)?)?,
    ))
}

fn write_report_csv(path: &Path, report: &EvalReport<f64>, seed: u64) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "scenario", "k", "accuracy", "n", "seed", "fraction"])?;
    for row in &report.rows {
        for (k, acc) in [(1, row.top1), (2, row.top2), (3, row.top3)] {
            w.write_record([
                row.model.clone(),
                report.scenario.clone(),
                k.to_string(),
                acc.to_string(),
                report.sample_count.to_string(),
                seed.to_string(),
                "1".to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Evaluates the three trained models on the validation split and writes
/// the accuracy table as JSON, CSV, and plain text.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let (_, val) = load_split(cfg)?;
    let (vision, position, fusion) = load_all_models(cfg)?;
    let report = eval::evaluate_models(&vision, &position, &fusion, &val, &cfg.scenario)?;
    let out = BufWriter::new(File::create(out_path(cfg, "report.json"))?);
    serde_json::to_writer(out, &report)?;
    write_report_csv(&out_path(cfg, "report.csv"), &report, cfg.pipeline.seed)?;
    let text = report.render_text();
    let mut f = File::create(out_path(cfg, "report.txt"))?;
    f.write_all(text.as_bytes())?;
    print!("{text}");
    Ok(())
}

fn write_sweep_csv(path: &Path, sweep: &FractionSweep<f64>, scenario: &str, n: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "scenario", "k", "accuracy", "n", "seed", "fraction"])?;
    for cell in &sweep.cells {
        for (k, acc) in [(1, cell.top1), (2, cell.top2), (3, cell.top3)] {
            w.write_record([
                "vision-position".to_string(),
                scenario.to_string(),
                k.to_string(),
                acc.to_string(),
                n.to_string(),
                cell.seed.to_string(),
                cell.fraction.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Runs the training-fraction sweep for the fused model and writes the
/// results as JSON and CSV.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let (train, val) = load_split(cfg)?;
    let sweep = eval::fraction_sweep(
        &train,
        &val,
        &cfg.eval.fractions,
        &cfg.eval.seeds,
        &cfg.training.fusion,
        &cfg.model,
    )?;
    let out = BufWriter::new(File::create(out_path(cfg, "sweep.json"))?);
    serde_json::to_writer(out, &sweep)?;
    write_sweep_csv(
        &out_path(cfg, "sweep.csv"),
        &sweep,
        &cfg.scenario,
        val.samples.len(),
    )?;
    println!("fraction sweep over {} cells:", sweep.cells.len());
    for s in &sweep.stats {
        println!(
            "  fraction {:.2}: top-1 {:.4} ± {:.4}, top-3 {:.4} ± {:.4}",
            s.fraction, s.mean_top1, s.std_top1, s.mean_top3, s.std_top3
        );
    }
    Ok(())
}
