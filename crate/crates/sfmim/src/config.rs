//! Flat `key = value` run configuration with dotted namespaces.
//!
//! Files hold one assignment per line; `#` starts a comment. Overrides are
//! applied after the file and win. Unknown keys are errors. The resolved
//! snapshot lists every key in sorted order and parses back to the same
//! configuration.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sfmim_core::gradcheck::GradcheckConfig;
use sfmim_core::model::ModelConfig;
use sfmim_core::probe::ProbeConfig;
use sfmim_core::sampling::Bridge;
use sfmim_core::synth::SynthSpec;
use sfmim_core::trainer::{Mode, TrainConfig};

use crate::{Error, Result};

trait Value: Sized {
    fn parse(s: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($t:ty),*) => {$(
        impl Value for $t {
            fn parse(s: &str) -> std::result::Result<Self, String> {
                s.parse().map_err(|e| format!("{e}"))
            }
            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(usize, u64, f64, bool);

impl Value for (f64, f64) {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or("expected `lo,hi`")?;
        Ok((f64::parse(a.trim())?, f64::parse(b.trim())?))
    }
    fn render(&self) -> String {
        format!("{},{}", self.0, self.1)
    }
}

impl Value for Vec<usize> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        s.split(',').map(|p| usize::parse(p.trim())).collect()
    }
    fn render(&self) -> String {
        self.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
    }
}

impl Value for Option<PathBuf> {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        Ok((!s.is_empty()).then(|| PathBuf::from(s)))
    }
    fn render(&self) -> String {
        self.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
    }
}

impl Value for Mode {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "pretrain" => Ok(Mode::Pretrain),
            "finetune-full" => Ok(Mode::FinetuneFull),
            "finetune-frozen" => Ok(Mode::FinetuneFrozen),
            _ => Err("expected pretrain, finetune-full or finetune-frozen".into()),
        }
    }
    fn render(&self) -> String {
        match self {
            Mode::Pretrain => "pretrain",
            Mode::FinetuneFull => "finetune-full",
            Mode::FinetuneFrozen => "finetune-frozen",
        }
        .into()
    }
}

impl Value for Bridge {
    fn parse(s: &str) -> std::result::Result<Self, String> {
        match s {
            "crop" => Ok(Bridge::Crop),
            "resize" => Ok(Bridge::Resize),
            _ => Err("expected crop or resize".into()),
        }
    }
    fn render(&self) -> String {
        match self {
            Bridge::Crop => "crop",
            Bridge::Resize => "resize",
        }
        .into()
    }
}

/// Synthetic corpus settings layered over [`SynthSpec::default`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSettings {
    pub image_size: usize,
    pub counts: Vec<usize>,
    pub speckle: f64,
    pub texture_amplitude: f64,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let spec = SynthSpec::default();
        Self {
            image_size: spec.image_size,
            counts: spec.organs.iter().map(|o| o.count).collect(),
            speckle: spec.organs[0].speckle,
            texture_amplitude: spec.organs[0].texture_amplitude,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    /// Manifest file or corpus directory.
    pub manifest: Option<PathBuf>,
    /// Directory that manifest paths are relative to; defaults to the
    /// manifest's own directory.
    pub image_root: Option<PathBuf>,
    /// Checkpoint to start from.
    pub init: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub probe: ProbeConfig,
    pub gradcheck: GradcheckConfig,
    pub sampler_draws: usize,
    pub recon_images: usize,
    pub synth: SynthSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            manifest: None,
            image_root: None,
            init: None,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            gradcheck: GradcheckConfig::default(),
            sampler_draws: 30_000,
            recon_images: 16,
            synth: SynthSettings::default(),
        }
    }
}

macro_rules! keys {
    ($($key:literal => $($field:ident).+),* $(,)?) => {
        /// Every recognised key, sorted.
        pub const KEYS: &[&str] = &[$($key),*];

        impl RunConfig {
            fn assign(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$($field).+ = Value::parse(value)
                            .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))?;
                    })*
                    _ => return Err(Error::Config(format!("unknown key `{key}`"))),
                }
                Ok(())
            }

            /// `(key, value)` for every key in sorted order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$($field).+.render())),*]
            }
        }
    };
}

keys! {
    "augment.blur_sigma" => train.augment.blur_sigma,
    "augment.bridge" => train.augment.bridge,
    "augment.brightness" => train.augment.brightness,
    "augment.contrast" => train.augment.contrast,
    "augment.crop_fraction" => train.augment.crop_fraction,
    "augment.p_blur" => train.augment.p_blur,
    "augment.p_brightness" => train.augment.p_brightness,
    "augment.p_contrast" => train.augment.p_contrast,
    "augment.p_crop" => train.augment.p_crop,
    "augment.p_rotate" => train.augment.p_rotate,
    "augment.p_scale" => train.augment.p_scale,
    "augment.rotation_deg" => train.augment.rotation_deg,
    "augment.scale" => train.augment.scale,
    "data.image_root" => image_root,
    "data.manifest" => manifest,
    "data.recon_images" => recon_images,
    "gradcheck.alpha" => gradcheck.alpha,
    "gradcheck.batch" => gradcheck.batch,
    "gradcheck.floor" => gradcheck.floor,
    "gradcheck.lambda" => gradcheck.lambda,
    "gradcheck.loss_threshold" => gradcheck.loss_threshold,
    "gradcheck.model_threshold" => gradcheck.model_threshold,
    "gradcheck.step" => gradcheck.step,
    "init.checkpoint" => init,
    "mask.n_bands" => train.freq.n_bands,
    "mask.n_select" => train.freq.n_select,
    "mask.preserve" => train.freq.preserve,
    "mask.ratio" => train.mask_ratio,
    "model.decoder_depth" => model.decoder_depth,
    "model.depth" => model.depth,
    "model.embed_dim" => model.embed_dim,
    "model.heads" => model.heads,
    "model.image_size" => model.image_size,
    "model.layer_norm" => model.layer_norm,
    "model.mlp_ratio" => model.mlp_ratio,
    "model.patch_size" => model.patch_size,
    "optim.beta1" => train.adam.beta1,
    "optim.beta2" => train.adam.beta2,
    "optim.eps" => train.adam.eps,
    "probe.iterations" => probe.iterations,
    "probe.lr" => probe.lr,
    "sampler.draws" => sampler_draws,
    "seed" => seed,
    "synth.counts" => synth.counts,
    "synth.image_size" => synth.image_size,
    "synth.speckle" => synth.speckle,
    "synth.texture_amplitude" => synth.texture_amplitude,
    "train.alpha" => train.alpha,
    "train.base_lr" => train.base_lr,
    "train.batch_size" => train.batch_size,
    "train.checkpoint_every" => train.checkpoint_every,
    "train.eval_every" => train.eval_every,
    "train.freq_masking" => train.freq_masking,
    "train.l1_masked_only" => train.l1_masked_only,
    "train.label_fraction" => train.label_fraction,
    "train.lambda" => train.lambda,
    "train.layer_decay" => train.layer_decay,
    "train.mode" => train.mode,
    "train.steps" => train.steps,
    "train.val_fraction" => train.val_fraction,
    "train.warmup_steps" => train.warmup_steps,
}

fn parse_assignment(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    Some((k.trim(), v.trim()))
}

impl RunConfig {
    /// Applies `key = value` text. A key may appear once per text.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = parse_assignment(line)
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            if seen.contains(&k) {
                return Err(Error::Config(format!("line {}: `{k}` assigned twice", n + 1)));
            }
            seen.push(k);
            self.assign(k, v)?;
        }
        self.sync();
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = parse_assignment(assignment)
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not `key=value`")))?;
        self.assign(k, v)?;
        self.sync();
        Ok(())
    }

    /// Defaults, then the optional file, then the overrides in order.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            cfg.apply_text(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
                other => other,
            })?;
        }
        for o in overrides {
            cfg.apply_override(o)?;
        }
        Ok(cfg)
    }

    fn sync(&mut self) {
        self.train.seed = self.seed;
        self.train.augment.out_size = self.model.image_size;
        self.gradcheck.seed = self.seed;
    }

    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.sampler_draws == 0 || self.recon_images == 0 || self.probe.iterations == 0 {
            return Err(Error::Config("sampler.draws, data.recon_images and probe.iterations must be positive".into()));
        }
        self.synth_spec()?.validate()?;
        Ok(())
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let mut spec = SynthSpec::default();
        if self.synth.counts.len() != spec.organs.len() {
            return Err(Error::Config(format!(
                "synth.counts needs {} entries, got {}",
                spec.organs.len(),
                self.synth.counts.len()
            )));
        }
        spec.image_size = self.synth.image_size;
        spec.seed = self.seed;
        for (o, &n) in spec.organs.iter_mut().zip(&self.synth.counts) {
            o.count = n;
            o.speckle = self.synth.speckle;
            o.texture_amplitude = self.synth.texture_amplitude;
        }
        Ok(spec)
    }
}
