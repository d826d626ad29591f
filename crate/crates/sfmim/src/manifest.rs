//! Manifests on disk: directory scanning and the tab-separated file format.

use std::fs;
use std::path::{Path, PathBuf};

use sfmim_core::sampling::{DatasetManifest, ImageEntry, Organ};

use crate::{Error, Result};

/// Optional per-organ label file: `<file name><TAB><label>` per line.
pub const LABELS_FILE: &str = "labels.tsv";

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    out.sort();
    Ok(out)
}

fn read_labels(organ_dir: &Path) -> Result<Vec<(String, String)>> {
    let path = organ_dir.join(LABELS_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split_once('\t')
                .map(|(f, l)| (f.to_string(), l.to_string()))
                .ok_or_else(|| Error::Manifest {
                    path: path.clone(),
                    reason: format!("line {} lacks a tab", i + 1),
                })
        })
        .collect()
}

/// Scans `root/<organ>/*.png` in lexicographic order. Paths are relative to
/// `root` with `/` separators.
pub fn build_manifest(root: &Path) -> Result<DatasetManifest> {
    let mut organs = Vec::new();
    for dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let name = dir
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| Error::Manifest {
                path: dir.clone(),
                reason: "organ directory name is not UTF-8".into(),
            })?
            .to_string();
        let labels = read_labels(&dir)?;
        let mut images = Vec::new();
        for file in sorted_entries(&dir)? {
            let is_png = file.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if !is_png || !file.is_file() {
                continue;
            }
            let fname = file.file_name().and_then(|n| n.to_str()).ok_or_else(|| Error::Manifest {
                path: file.clone(),
                reason: "file name is not UTF-8".into(),
            })?;
            let label = labels.iter().find(|(f, _)| f == fname).map(|(_, l)| l.clone());
            images.push(ImageEntry {
                path: format!("{name}/{fname}"),
                label,
            });
        }
        organs.push(Organ { name, images });
    }
    DatasetManifest::new(organs).map_err(|e| Error::Manifest {
        path: root.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_text(&text).map_err(|e| Error::Manifest {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    fs::write(path, manifest.to_text()).map_err(|e| Error::io(path, e))
}

/// Loads a manifest file, or scans a directory.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    if path.is_dir() {
        build_manifest(path)
    } else {
        read_manifest(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image_io::save_png;
    use sfmim_core::GrayImage;

    fn touch_png(path: &Path) {
        save_png(path, &GrayImage::filled(2, 2, 9).unwrap()).unwrap();
    }

    #[test]
    fn scans_sorted_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        for p in ["b/2.png", "b/1.png", "a/x.png", "a/y.png", "a/z.png"] {
            touch_png(&root.join(p));
        }
        fs::write(root.join("a/notes.txt"), "ignored").unwrap();
        fs::write(root.join("a").join(LABELS_FILE), "y.png\tcyst\n").unwrap();
        let m = build_manifest(root).unwrap();
        assert_eq!(m.counts(), vec![3, 2]);
        assert_eq!(m.organs()[0].name, "a");
        assert_eq!(m.entry(1, 0).path, "b/1.png");
        assert_eq!(m.entry(0, 1).label.as_deref(), Some("cyst"));
        assert_eq!(build_manifest(root).unwrap(), m);
    }

    #[test]
    fn empty_inputs_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert!(build_manifest(dir.path()).is_err());
        fs::create_dir(dir.path().join("empty")).unwrap();
        assert!(build_manifest(dir.path()).is_err());
        assert!(matches!(build_manifest(&dir.path().join("missing")), Err(Error::NotFound { .. })));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        touch_png(&dir.path().join("o/1.png"));
        let m = build_manifest(dir.path()).unwrap();
        let f = dir.path().join("manifest.tsv");
        write_manifest(&f, &m).unwrap();
        assert_eq!(read_manifest(&f).unwrap(), m);
        assert_eq!(load_manifest(&f).unwrap(), m);
    }
}
