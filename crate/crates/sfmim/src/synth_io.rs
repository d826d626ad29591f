//! Writes the synthetic corpus in the manifest directory layout.

use std::fs;
use std::path::Path;

use sfmim_core::sampling::DatasetManifest;
use sfmim_core::synth::{render, SynthSpec};

use crate::image_io::save_field;
use crate::manifest::{write_manifest, LABELS_FILE};
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.tsv";

/// Renders every image to `out/<organ>/<organ>_NNNN.png`, writes a
/// `labels.tsv` per organ (label = organ name) and `out/manifest.tsv`.
pub fn write_corpus(spec: &SynthSpec, out: &Path) -> Result<DatasetManifest> {
    let manifest = spec.manifest()?;
    for (oi, organ) in spec.organs.iter().enumerate() {
        let dir = out.join(&organ.name);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut labels = String::new();
        for i in 0..organ.count {
            let rel = spec.image_path(oi, i);
            save_field(&out.join(&rel), &render(spec, oi, i)?)?;
            let file = rel.rsplit('/').next().unwrap_or(&rel);
            labels.push_str(&format!("{file}\t{}\n", organ.name));
        }
        let lp = dir.join(LABELS_FILE);
        fs::write(&lp, labels).map_err(|e| Error::io(&lp, e))?;
    }
    write_manifest(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
