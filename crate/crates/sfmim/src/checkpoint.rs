//! Checkpoint container.
//!
//! A UTF-8 header of `key = value` and `param` lines, terminated by `end`,
//! followed by little-endian `f64` payloads: for each parameter in header
//! order its values, then its Adam first moments, then its second moments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sfmim_core::model::{ModelConfig, ModelState, OptimizerState, Param};

use crate::{Error, Result};

pub const MAGIC: &str = "sfmim-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

/// A model state plus the number of completed training steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    pub step: usize,
}

pub fn encode(state: &ModelState, step: usize) -> Vec<u8> {
    let c = &state.config;
    let mut h = String::new();
    let _ = writeln!(h, "{MAGIC}");
    let _ = writeln!(h, "format-version = {FORMAT_VERSION}");
    let _ = writeln!(h, "step = {step}");
    let _ = writeln!(h, "adam-step = {}", state.optimizer.step);
    let _ = writeln!(h, "model.image_size = {}", c.image_size);
    let _ = writeln!(h, "model.patch_size = {}", c.patch_size);
    let _ = writeln!(h, "model.embed_dim = {}", c.embed_dim);
    let _ = writeln!(h, "model.depth = {}", c.depth);
    let _ = writeln!(h, "model.decoder_depth = {}", c.decoder_depth);
    let _ = writeln!(h, "model.heads = {}", c.heads);
    let _ = writeln!(h, "model.mlp_ratio = {}", c.mlp_ratio);
    let _ = writeln!(h, "model.num_classes = {}", c.num_classes);
    let _ = writeln!(h, "model.layer_norm = {}", c.layer_norm);
    for p in &state.params {
        let shape: Vec<String> = p.shape.iter().map(ToString::to_string).collect();
        let _ = writeln!(h, "param {} {} {} {}", p.name, p.layer, u8::from(p.frozen), shape.join("x"));
    }
    h.push_str("end\n");
    let mut out = h.into_bytes();
    for (i, p) in state.params.iter().enumerate() {
        for block in [&p.data, &state.optimizer.m[i], &state.optimizer.v[i]] {
            for v in block.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Header {
    step: usize,
    adam_step: u64,
    config: ModelConfig,
    params: Vec<(String, usize, bool, Vec<usize>)>,
}

fn parse_header(text: &str) -> std::result::Result<Header, String> {
    let mut lines = text.lines();
    if lines.next() != Some(MAGIC) {
        return Err("missing magic line".into());
    }
    let mut kv = std::collections::BTreeMap::new();
    let mut params = Vec::new();
    for line in lines {
        if let Some(rest) = line.strip_prefix("param ") {
            let parts: Vec<&str> = rest.split(' ').collect();
            let [name, layer, frozen, shape] = parts[..] else {
                return Err(format!("bad param line `{line}`"));
            };
            let shape = shape
                .split('x')
                .map(|d| d.parse::<usize>().map_err(|e| format!("param {name}: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let layer = layer.parse().map_err(|e| format!("param {name}: {e}"))?;
            params.push((name.to_string(), layer, frozen == "1", shape));
        } else if let Some((k, v)) = line.split_once(" = ") {
            kv.insert(k.to_string(), v.to_string());
        } else {
            return Err(format!("bad header line `{line}`"));
        }
    }
    fn get<T: std::str::FromStr>(kv: &std::collections::BTreeMap<String, String>, k: &str) -> std::result::Result<T, String>
    where
        T::Err: std::fmt::Display,
    {
        kv.get(k)
            .ok_or_else(|| format!("missing `{k}`"))?
            .parse()
            .map_err(|e| format!("`{k}`: {e}"))
    }
    let version: u32 = get(&kv, "format-version")?;
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    Ok(Header {
        step: get(&kv, "step")?,
        adam_step: get(&kv, "adam-step")?,
        config: ModelConfig {
            image_size: get(&kv, "model.image_size")?,
            patch_size: get(&kv, "model.patch_size")?,
            embed_dim: get(&kv, "model.embed_dim")?,
            depth: get(&kv, "model.depth")?,
            decoder_depth: get(&kv, "model.decoder_depth")?,
            heads: get(&kv, "model.heads")?,
            mlp_ratio: get(&kv, "model.mlp_ratio")?,
            num_classes: get(&kv, "model.num_classes")?,
            layer_norm: get(&kv, "model.layer_norm")?,
        },
        params,
    })
}

pub fn decode(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    const END: &[u8] = b"\nend\n";
    let split = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or("header terminator not found")?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| "header is not UTF-8")?;
    let h = parse_header(header)?;
    let mut payload = bytes[split + END.len()..].chunks_exact(8);
    let total: usize = h.params.iter().map(|(_, _, _, s)| s.iter().product::<usize>()).sum();
    if payload.len() != 3 * total || !payload.remainder().is_empty() {
        return Err(format!(
            "payload holds {} bytes, header describes {}",
            bytes.len() - split - END.len(),
            24 * total
        ));
    }
    let mut take = |n: usize| -> Vec<f64> {
        (0..n)
            .map(|_| f64::from_le_bytes(payload.next().expect("length checked").try_into().expect("8 bytes")))
            .collect()
    };
    let (mut params, mut m, mut v) = (Vec::new(), Vec::new(), Vec::new());
    for (name, layer, frozen, shape) in h.params {
        let n = shape.iter().product();
        params.push(Param {
            name,
            shape,
            layer,
            frozen,
            data: take(n),
        });
        m.push(take(n));
        v.push(take(n));
    }
    let mut state = ModelState::from_params(h.config, params);
    state.optimizer = OptimizerState {
        m,
        v,
        step: h.adam_step,
    };
    state.validate().map_err(|e| e.to_string())?;
    Ok(Checkpoint { state, step: h.step })
}

pub fn save_checkpoint(path: &Path, state: &ModelState, step: usize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode(state, step)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|reason| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    })
}
