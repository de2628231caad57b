use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::{HarnessError, Result};
use crate::corpus::{load_image, DatasetManifest, ManifestEntry};
use crate::features::{
    cache_path, extract_dense_sift, read_descriptor_cache, write_descriptor_cache, DescriptorSet,
    GridParams,
};

/// Dense SIFT for manifest entries, memoized in memory and optionally
/// persisted to a descriptor cache directory.
#[derive(Debug)]
pub struct DescriptorStore {
    grid: GridParams,
    cache_dir: Option<PathBuf>,
    memo: Mutex<HashMap<PathBuf, Arc<DescriptorSet>>>,
}

impl DescriptorStore {
    pub fn new(grid: GridParams) -> Self {
        DescriptorStore {
            grid,
            cache_dir: None,
            memo: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }

    pub fn grid(&self) -> &GridParams {
        &self.grid
    }

    fn compute(&self, path: &std::path::Path, source: &str) -> Result<DescriptorSet> {
        let cached = self
            .cache_dir
            .as_ref()
            .map(|dir| cache_path(dir, path, &self.grid));
        if let Some(cp) = &cached {
            if let Ok(f) = fs::File::open(cp) {
                return read_descriptor_cache(&mut BufReader::new(f), &self.grid, source)
                    .map_err(|e| HarnessError::io(cp, e));
            }
        }
        let image = load_image(path)?;
        let mut set = extract_dense_sift(&image, &self.grid)?;
        set.source = source.to_owned();
        if let Some(cp) = &cached {
            // write then rename so concurrent readers never see a partial file
            let tmp = cp.with_extension(format!("tmp{}", std::process::id()));
            let write = || -> std::io::Result<()> {
                let mut w = BufWriter::new(fs::File::create(&tmp)?);
                write_descriptor_cache(&mut w, &set, &self.grid)?;
                w.flush()?;
                drop(w);
                fs::rename(&tmp, cp)
            };
            write().map_err(|e| HarnessError::io(cp, e))?;
        }
        Ok(set)
    }

    pub fn load(
        &self,
        manifest: &DatasetManifest,
        entry: &ManifestEntry,
    ) -> Result<Arc<DescriptorSet>> {
        let path = manifest.resolve(entry);
        if let Some(hit) = self.memo.lock().unwrap().get(&path) {
            return Ok(Arc::clone(hit));
        }
        let set = Arc::new(self.compute(&path, &entry.path)?);
        self.memo
            .lock()
            .unwrap()
            .entry(path)
            .or_insert_with(|| Arc::clone(&set));
        Ok(set)
    }

    /// Descriptor sets for every entry, in manifest order.
    pub fn load_all(&self, manifest: &DatasetManifest) -> Result<Vec<Arc<DescriptorSet>>> {
        manifest
            .entries
            .par_iter()
            .map(|e| self.load(manifest, e))
            .collect()
    }

    /// Total descriptors held in memory.
    pub fn memo_descriptors(&self) -> usize {
        self.memo.lock().unwrap().values().map(|s| s.len()).sum()
    }
}
