#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

/// A configuration small enough for sub-second CLI runs.
pub const TINY: &[&str] = &[
    "synth.counts=8,4,2",
    "synth.image_size=64",
    "model.image_size=16",
    "model.patch_size=4",
    "model.embed_dim=16",
    "model.depth=1",
    "model.decoder_depth=1",
    "model.heads=2",
    "mask.n_bands=3",
    "mask.n_select=1",
    "mask.preserve=4",
    "train.steps=6",
    "train.batch_size=2",
    "train.checkpoint_every=3",
    "train.warmup_steps=1",
];

pub fn sfmim(args: &[&str], settings: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sfmim"));
    cmd.args(args);
    for s in settings {
        cmd.arg("--set").arg(s);
    }
    cmd.output().expect("binary runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// The value of the first `key\tvalue` line of a command's stdout.
pub fn field(o: &Output, key: &str) -> String {
    stdout(o)
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}\t")).map(str::to_string))
        .unwrap_or_else(|| panic!("no {key} line in:\n{}", stdout(o)))
}

pub fn run_dir(o: &Output) -> PathBuf {
    PathBuf::from(field(o, "run_dir"))
}

pub fn synth(out: &Path, settings: &[&str]) {
    let o = sfmim(&["synth", "--out", out.to_str().unwrap()], settings);
    assert!(o.status.success(), "{}", stderr(&o));
}

pub fn pretrain(out: &Path, data: &Path, extra: &[&str], settings: &[&str]) -> Output {
    let mut args = vec!["pretrain", "--out", out.to_str().unwrap(), "--manifest", data.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = sfmim(&args, settings);
    assert!(o.status.success(), "{}", stderr(&o));
    o
}
