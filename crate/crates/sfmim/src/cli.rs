//! Subcommand implementations behind the `sfmim` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sfmim_core::field::normalize;
use sfmim_core::gradcheck::{run_gradcheck, Component};
use sfmim_core::masking::{apply_spatial_mean_mask, dual_mask, frequency_mask_image, sample_spatial_mask};
use sfmim_core::metrics::{
    classification_metrics, lncc, nmi, ssim, ClassificationMetrics, ConfusionMatrix, LNCC_WINDOW, NMI_BINS,
};
use sfmim_core::model::{forward_mim, init_model, ModelState};
use sfmim_core::rng::{derive_seed, stream_rng};
use sfmim_core::sampling::{augment, AugmentConfig, DatasetManifest, ImageEntry, Organ};
use sfmim_core::spectral::{amplitude, center_shift, dft2, sample_freq_mask, FreqMask};
use sfmim_core::trainer::{
    finetune, mean_predictor_score, pretrain, reconstruction_set, evaluate_reconstruction, Mode,
};
use sfmim_core::FloatField;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::image_io::{load_field, save_field};
use crate::manifest::load_manifest;
use crate::runlog::{create_run_dir, RunLog};
use crate::source::FsSource;
use crate::stats::sampler_stats;
use crate::synth_io::write_corpus;
use crate::{Error, Result};

const INIT_STREAM: u64 = 0x1417;
const PREVIEW_STREAM: u64 = 0x9e7;
const RECON_STREAM: u64 = 0x7ec0;

#[derive(Debug, Parser)]
#[command(name = "sfmim", version, about = "Spatial-frequency dual masked image modeling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parent directory of the per-run output directory.
    #[arg(long, default_value = "runs")]
    pub out: PathBuf,
    /// Configuration override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Masked image modeling pre-training.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Manifest file or corpus directory.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Classification fine-tuning (set `train.mode`).
    Finetune {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Pre-trained checkpoint; random initialization when absent.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Writes the masking stages of one image as PNGs.
    MaskPreview {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Adds the model reconstruction and its spectrum.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Mean SSIM, LNCC, NMI and L1 of reconstructions of a directory of images.
    ReconEval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Test hook: score the clean images against themselves.
        #[arg(long)]
        identity: bool,
    },
    /// Expected versus empirical organ frequencies of the balanced sampler.
    SamplerStats {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Finite-difference checks of the loss and model gradients.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Test hook: corrupt one component's analytic gradient.
        #[arg(long)]
        corrupt: Option<String>,
    },
    /// Compares two PNGs or two label files.
    Metrics {
        #[command(flatten)]
        common: Common,
        first: PathBuf,
        second: PathBuf,
    },
    /// Writes the synthetic corpus into `--out`.
    Synth {
        #[command(flatten)]
        common: Common,
    },
}

/// Whether every internal threshold passed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    ThresholdFailed,
}

fn resolve(common: &Common, extra: &[(&str, Option<&Path>)]) -> Result<RunConfig> {
    let mut overrides = common.set.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    for (key, value) in extra {
        if let Some(v) = value {
            overrides.push(format!("{key}={}", v.display()));
        }
    }
    let cfg = RunConfig::resolve(common.config.as_deref(), &overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn open_data(cfg: &RunConfig) -> Result<(DatasetManifest, FsSource)> {
    let path = cfg
        .manifest
        .as_deref()
        .ok_or_else(|| Error::Config("no manifest: pass --manifest or set data.manifest".into()))?;
    let manifest = load_manifest(path)?;
    let root = match &cfg.image_root {
        Some(r) => r.clone(),
        None if path.is_dir() => path.to_path_buf(),
        None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    Ok((manifest, FsSource::new(root)))
}

fn initial_state(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(ModelState, usize)> {
    match checkpoint {
        Some(p) => {
            let c = load_checkpoint(p)?;
            Ok((c.state, c.step))
        }
        None => {
            let mut model = cfg.model.clone();
            model.num_classes = 0;
            let state = init_model(&model, &mut stream_rng(derive_seed(cfg.seed, INIT_STREAM), 0))?;
            Ok((state, 0))
        }
    }
}

fn metrics_table(rows: &[(&str, &ClassificationMetrics)]) -> String {
    let mut s = String::from("split\taccuracy\trecall\tprecision\tf1\tmcc\n");
    for (name, m) in rows {
        s.push_str(&format!(
            "{name}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\n",
            m.accuracy, m.recall, m.precision, m.f1, m.mcc
        ));
    }
    s
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Outcome> {
    match cli.command {
        Command::Pretrain {
            common,
            manifest,
            checkpoint,
        } => cmd_pretrain(&common, manifest.as_deref(), checkpoint.as_deref(), out),
        Command::Finetune {
            common,
            manifest,
            checkpoint,
        } => cmd_finetune(&common, manifest.as_deref(), checkpoint.as_deref(), out),
        Command::MaskPreview {
            common,
            input,
            checkpoint,
        } => cmd_mask_preview(&common, &input, checkpoint.as_deref(), out),
        Command::ReconEval {
            common,
            input,
            checkpoint,
            identity,
        } => cmd_recon_eval(&common, &input, checkpoint.as_deref(), identity, out),
        Command::SamplerStats { common, manifest } => cmd_sampler_stats(&common, manifest.as_deref(), out),
        Command::Gradcheck { common, corrupt } => cmd_gradcheck(&common, corrupt.as_deref(), out),
        Command::Metrics { common, first, second } => cmd_metrics(&common, &first, &second, out),
        Command::Synth { common } => cmd_synth(&common, out),
    }
}

fn cmd_pretrain(common: &Common, manifest: Option<&Path>, checkpoint: Option<&Path>, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = resolve(common, &[("data.manifest", manifest), ("init.checkpoint", checkpoint)])?;
    if cfg.train.mode != Mode::Pretrain {
        return Err(Error::Config("pretrain needs train.mode = pretrain".into()));
    }
    let (manifest, mut source) = open_data(&cfg)?;
    let (state, start) = initial_state(&cfg, cfg.init.as_deref())?;
    let dir = create_run_dir(&common.out, &cfg)?;
    let mut log = RunLog::create(&dir)?;
    let clock = Instant::now();
    let (state, report) = pretrain(&cfg.train, state, start, &manifest, &mut source, &mut log)?;
    log.flush()?;
    let seconds = clock.elapsed().as_secs_f64();
    let final_path = dir.join("final.ckpt");
    save_checkpoint(&final_path, &state, cfg.train.steps.max(start))?;

    let eval_seed = derive_seed(cfg.seed, RECON_STREAM);
    let samples = reconstruction_set(&cfg.train, state.config.patch_size, &manifest, &mut source, cfg.recon_images, eval_seed)?;
    let model = evaluate_reconstruction(&state, &samples, &cfg.train.loss())?;
    let baseline = mean_predictor_score(&samples, &cfg.train.loss())?;
    let eval = format!(
        "predictor\tloss\tl1\tmasked_l1\nmodel\t{}\t{}\t{}\nmean\t{}\t{}\t{}\n",
        model.loss.total, model.l1, model.masked_l1, baseline.loss.total, baseline.l1, baseline.masked_l1
    );
    write_file(&dir.join("eval.tsv"), &eval)?;

    let losses = report.loss_series();
    let first = losses.first().map_or(f64::NAN, |l| l.total);
    let last = losses.last().map_or(f64::NAN, |l| l.total);
    writeln!(out, "run_dir\t{}", dir.display()).map_err(io_err)?;
    writeln!(out, "checkpoint\t{}", final_path.display()).map_err(io_err)?;
    writeln!(out, "steps\t{}\t{}", start, cfg.train.steps).map_err(io_err)?;
    writeln!(out, "loss\tfirst\t{first}\tlast\t{last}").map_err(io_err)?;
    write!(out, "{eval}").map_err(io_err)?;
    writeln!(out, "wall_seconds\t{seconds:.3}").map_err(io_err)?;
    Ok(Outcome::Pass)
}

fn cmd_finetune(common: &Common, manifest: Option<&Path>, checkpoint: Option<&Path>, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = resolve(common, &[("data.manifest", manifest), ("init.checkpoint", checkpoint)])?;
    if cfg.train.mode == Mode::Pretrain {
        return Err(Error::Config("finetune needs train.mode = finetune-full or finetune-frozen".into()));
    }
    let (manifest, mut source) = open_data(&cfg)?;
    let (state, _) = initial_state(&cfg, cfg.init.as_deref())?;
    let dir = create_run_dir(&common.out, &cfg)?;
    let mut log = RunLog::create(&dir)?;
    let clock = Instant::now();
    let (best, report) = finetune(&cfg.train, state, &manifest, &mut source, &mut log)?;
    log.flush()?;
    let best_path = dir.join("best.ckpt");
    save_checkpoint(&best_path, &best, report.best_step.unwrap_or(0))?;
    let train = report.train_metrics.as_ref().expect("finetune reports metrics");
    let val = report.val_metrics.as_ref().expect("finetune reports metrics");
    let table = metrics_table(&[("train", train), ("val", val)]);
    write_file(&dir.join("classification.tsv"), &table)?;
    writeln!(out, "run_dir\t{}", dir.display()).map_err(io_err)?;
    writeln!(out, "checkpoint\t{}", best_path.display()).map_err(io_err)?;
    writeln!(out, "best_step\t{}", report.best_step.unwrap_or(0)).map_err(io_err)?;
    write!(out, "{table}").map_err(io_err)?;
    writeln!(out, "wall_seconds\t{:.3}", clock.elapsed().as_secs_f64()).map_err(io_err)?;
    Ok(Outcome::Pass)
}

/// Brings an image to the model resolution with the evaluation pipeline.
fn to_model_size(field: &FloatField, size: usize) -> Result<FloatField> {
    if field.shape() == (size, size) {
        return Ok(field.clone());
    }
    Ok(augment(field, &mut stream_rng(0, 0), &AugmentConfig::eval(size))?)
}

/// Shifted `ln(1 + |F|)` scaled to `[0, 1]`.
fn log_spectrum(field: &FloatField) -> Result<FloatField> {
    let amp = amplitude(&center_shift(&dft2(field))?);
    let logs: Vec<f64> = amp.data().iter().map(|a| a.ln_1p()).collect();
    let max = logs.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    Ok(FloatField::new(amp.height(), amp.width(), logs.iter().map(|v| v * scale).collect())?)
}

fn cmd_mask_preview(common: &Common, input: &Path, checkpoint: Option<&Path>, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = resolve(common, &[("init.checkpoint", checkpoint)])?;
    let state = match cfg.init.as_deref() {
        Some(p) => Some(load_checkpoint(p)?.state),
        None => None,
    };
    let model_cfg = state.as_ref().map_or(&cfg.model, |s| &s.config);
    let size = model_cfg.image_size;
    let patch = model_cfg.patch_size;
    let image = to_model_size(&load_field(input)?, size)?;

    let mut rng = stream_rng(derive_seed(cfg.seed, PREVIEW_STREAM), 0);
    let smask = sample_spatial_mask(&mut rng, size / patch, size / patch, patch, cfg.train.mask_ratio)?;
    let fmask = if cfg.train.freq_masking {
        sample_freq_mask(&mut rng, &cfg.train.freq, size, size)?
    } else {
        FreqMask::all_keep(size, size)?
    };
    let spatial = apply_spatial_mean_mask(&image, &smask)?;
    let (freq_recon, _) = frequency_mask_image(&image, &fmask)?;
    let (dual, _) = dual_mask(&image, &smask, &fmask)?;

    let dir = create_run_dir(&common.out, &cfg)?;
    let mut outputs = vec![
        ("original.png", image.clone()),
        ("spatial_masked.png", spatial),
        ("freq_mask.png", fmask.to_field()),
        ("freq_recon.png", freq_recon.clamp_unit()),
        ("dual_masked.png", dual.clone().clamp_unit()),
    ];
    if let Some(state) = &state {
        let (recs, _) = forward_mim(state, std::slice::from_ref(&dual))?;
        let rec = recs.into_iter().next().expect("one input");
        outputs.push(("recon_spectrum.png", log_spectrum(&rec)?));
        outputs.push(("reconstruction.png", rec.clamp_unit()));
    }
    writeln!(out, "run_dir\t{}", dir.display()).map_err(io_err)?;
    writeln!(out, "bands_stopped\t{:?}", fmask.bands_stopped()).map_err(io_err)?;
    writeln!(out, "masked_patches\t{}", smask.masked_count()).map_err(io_err)?;
    for (name, field) in outputs {
        save_field(&dir.join(name), &field)?;
        writeln!(out, "wrote\t{name}").map_err(io_err)?;
    }
    Ok(Outcome::Pass)
}

/// PNGs directly inside `dir` as a one-organ manifest, or the organ layout.
fn image_set(dir: &Path) -> Result<DatasetManifest> {
    let mut files: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file() && p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .filter_map(|p| p.file_name().and_then(|n| n.to_str()).map(String::from))
        .collect();
    if files.is_empty() {
        return load_manifest(dir);
    }
    files.sort();
    let images = files.into_iter().map(|path| ImageEntry { path, label: None }).collect();
    Ok(DatasetManifest::new(vec![Organ {
        name: "images".into(),
        images,
    }])?)
}

fn cmd_recon_eval(common: &Common, input: &Path, checkpoint: Option<&Path>, identity: bool, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = resolve(common, &[("init.checkpoint", checkpoint)])?;
    let state = match (cfg.init.as_deref(), identity) {
        (Some(p), _) => Some(load_checkpoint(p)?.state),
        (None, true) => None,
        (None, false) => return Err(Error::Config("recon-eval needs --checkpoint or --identity".into())),
    };
    let manifest = image_set(input)?;
    let mut source = FsSource::new(input);
    let mut train = cfg.train.clone();
    let patch = match &state {
        Some(s) => {
            train.augment.out_size = s.config.image_size;
            s.config.patch_size
        }
        None => cfg.model.patch_size,
    };
    let n = manifest.total_images();
    let samples = reconstruction_set(&train, patch, &manifest, &mut source, n, derive_seed(cfg.seed, RECON_STREAM))?;
    let recs: Vec<FloatField> = match &state {
        Some(s) => {
            let mut recs = Vec::with_capacity(n);
            for chunk in samples.chunks(16) {
                let inputs: Vec<FloatField> = chunk.iter().map(|s| s.input.clone()).collect();
                recs.extend(forward_mim(s, &inputs)?.0);
            }
            recs
        }
        None => samples.iter().map(|s| s.target.clone()).collect(),
    };
    let mut table = String::from("image\tssim\tlncc\tnmi\tl1\n");
    let mut sums = [0.0; 4];
    for ((rec, s), (_, entry)) in recs.iter().zip(&samples).zip(manifest.iter()) {
        let rec = rec.clone().clamp_unit();
        let l1 = rec.data().iter().zip(s.target.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / rec.len() as f64;
        let row = [
            ssim(&rec, &s.target)?,
            lncc(&rec, &s.target, LNCC_WINDOW)?,
            nmi(&rec, &s.target, NMI_BINS)?,
            l1,
        ];
        sums.iter_mut().zip(&row).for_each(|(a, b)| *a += b);
        table.push_str(&format!("{}\t{}\t{}\t{}\t{}\n", entry.path, row[0], row[1], row[2], row[3]));
    }
    let dir = create_run_dir(&common.out, &cfg)?;
    write_file(&dir.join("recon.tsv"), &table)?;
    let m = sums.map(|s| s / n as f64);
    writeln!(out, "run_dir\t{}", dir.display()).map_err(io_err)?;
    writeln!(out, "images\t{n}").map_err(io_err)?;
    writeln!(out, "metric\tmean").map_err(io_err)?;
    for (name, v) in ["ssim", "lncc", "nmi", "l1"].iter().zip(m) {
        writeln!(out, "{name}\t{v:.6}").map_err(io_err)?;
    }
    Ok(Outcome::Pass)
}

fn cmd_sampler_stats(common: &Common, manifest: Option<&Path>, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = resolve(common, &[("data.manifest", manifest)])?;
    let (manifest, _) = open_data(&cfg)?;
    let stats = sampler_stats(&manifest, cfg.sampler_draws, cfg.seed)?;
    let mut table = String::from("organ\tcount\texpected\tempirical\tdraws\n");
    for o in 0..stats.organs.len() {
        table.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{}\n",
            stats.organs[o],
            stats.counts[o],
            stats.expected[o],
            stats.empirical(o),
            stats.observed[o]
        ));
    }
    table.push_str(&format!(
        "chi_square\t{:.6}\ndf\t{}\np_value\t{:.6}\n",
        stats.chi_square, stats.df, stats.p_value
    ));
    let dir = create_run_dir(&common.out, &cfg)?;
    write_file(&dir.join("sampler.tsv"), &table)?;
    writeln!(out, "run_dir\t{}", dir.display()).map_err(io_err)?;
    write!(out, "{table}").map_err(io_err)?;
    Ok(Outcome::Pass)
}

fn cmd_gradcheck(common: &Common, corrupt: Option<&str>, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = resolve(common, &[])?;
    let mut gc = cfg.gradcheck.clone();
    gc.corrupt = corrupt
        .map(|c| {
            Component::parse(c).ok_or_else(|| {
                let names: Vec<&str> = Component::ALL.iter().map(|c| c.name()).collect();
                Error::Config(format!("unknown component `{c}`; expected one of {}", names.join(", ")))
            })
        })
        .transpose()?;
    let report = run_gradcheck(&gc)?;
    let mut table = String::from("component\tchecked\tworst_rel_err\tthreshold\tstatus\tworst_at\n");
    for r in &report.components {
        let status = match (r.skipped, r.passed()) {
            (Some(why), _) => format!("SKIP ({why})"),
            (None, true) => "PASS".into(),
            (None, false) => "FAIL".into(),
        };
        table.push_str(&format!(
            "{}\t{}\t{:.3e}\t{:.0e}\t{status}\t{}\n",
            r.component.name(),
            r.checked,
            r.worst,
            r.threshold,
            r.worst_at
        ));
    }
    let dir = create_run_dir(&common.out, &cfg)?;
    write_file(&dir.join("gradcheck.tsv"), &table)?;
    writeln!(out, "run_dir\t{}", dir.display()).map_err(io_err)?;
    write!(out, "{table}").map_err(io_err)?;
    let failed: Vec<&str> = report
        .components
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.component.name())
        .collect();
    if failed.is_empty() {
        writeln!(out, "gradcheck\tPASS").map_err(io_err)?;
        Ok(Outcome::Pass)
    } else {
        writeln!(out, "gradcheck\tFAIL\t{}", failed.join(",")).map_err(io_err)?;
        Ok(Outcome::ThresholdFailed)
    }
}

fn is_png(p: &Path) -> bool {
    p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// One label per line; on tab-separated lines the last column is the label.
fn read_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.rsplit('\t').next().unwrap_or(l).trim().to_string())
        .collect())
}

/// Tab-separated comparison of two images or two label lists.
pub fn compare(first: &Path, second: &Path) -> Result<String> {
    if is_png(first) && is_png(second) {
        let a = normalize(&crate::image_io::load_png(first)?);
        let b = normalize(&crate::image_io::load_png(second)?);
        let l1 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
        if a.shape() != b.shape() {
            return Err(sfmim_core::Error::ShapeMismatch {
                expected_h: a.height(),
                expected_w: a.width(),
                got_h: b.height(),
                got_w: b.width(),
            }
            .into());
        }
        return Ok(format!(
            "metric\tvalue\nssim\t{:.6}\nlncc\t{:.6}\nnmi\t{:.6}\nl1\t{:.6}\n",
            ssim(&a, &b)?,
            lncc(&a, &b, LNCC_WINDOW)?,
            nmi(&a, &b, NMI_BINS)?,
            l1
        ));
    }
    if is_png(first) || is_png(second) {
        return Err(Error::Config("metrics compares two PNGs or two label files".into()));
    }
    let truth = read_labels(first)?;
    let pred = read_labels(second)?;
    if truth.len() != pred.len() {
        return Err(sfmim_core::Error::LabelMismatch(format!("{} versus {} labels", truth.len(), pred.len())).into());
    }
    let mut classes: Vec<&String> = truth.iter().chain(&pred).collect();
    classes.sort();
    classes.dedup();
    let index = |l: &String| classes.binary_search(&l).expect("collected above");
    let t: Vec<usize> = truth.iter().map(index).collect();
    let p: Vec<usize> = pred.iter().map(index).collect();
    let cm = ConfusionMatrix::from_labels(&t, &p, classes.len())?;
    let m = classification_metrics(&cm)?;
    Ok(format!(
        "metric\tvalue\naccuracy\t{:.6}\nrecall\t{:.6}\nprecision\t{:.6}\nf1\t{:.6}\nmcc\t{:.6}\n",
        m.accuracy, m.recall, m.precision, m.f1, m.mcc
    ))
}

fn cmd_metrics(common: &Common, first: &Path, second: &Path, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = resolve(common, &[])?;
    let table = compare(first, second)?;
    let dir = create_run_dir(&common.out, &cfg)?;
    write_file(&dir.join("comparison.tsv"), &table)?;
    writeln!(out, "run_dir\t{}", dir.display()).map_err(io_err)?;
    write!(out, "{table}").map_err(io_err)?;
    Ok(Outcome::Pass)
}

fn cmd_synth(common: &Common, out: &mut dyn Write) -> Result<Outcome> {
    let cfg = resolve(common, &[])?;
    let spec = cfg.synth_spec()?;
    let manifest = write_corpus(&spec, &common.out)?;
    write_file(&common.out.join("synth.cfg"), &cfg.snapshot())?;
    writeln!(out, "corpus\t{}", common.out.display()).map_err(io_err)?;
    for (o, n) in manifest.organs().iter().zip(manifest.counts()) {
        writeln!(out, "{}\t{n}", o.name).map_err(io_err)?;
    }
    Ok(Outcome::Pass)
}
