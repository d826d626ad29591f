//! Filesystem image source with an in-memory cache.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sfmim_core::trainer::ImageSource;
use sfmim_core::FloatField;

use crate::image_io::load_field;

/// Loads manifest paths relative to `root`, decoding each file once.
#[derive(Debug)]
pub struct FsSource {
    root: PathBuf,
    cache: BTreeMap<String, FloatField>,
}

impl FsSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            cache: BTreeMap::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn resolve(&self, path: &str) -> PathBuf {
        self.root.join(path)
    }
}

impl ImageSource for FsSource {
    fn load(&mut self, path: &str) -> sfmim_core::Result<FloatField> {
        if let Some(f) = self.cache.get(path) {
            return Ok(f.clone());
        }
        let field = load_field(&self.resolve(path)).map_err(|e| sfmim_core::Error::Source(e.to_string()))?;
        self.cache.insert(path.to_string(), field.clone());
        Ok(field)
    }
}
