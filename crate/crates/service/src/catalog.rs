use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use relicdig_core::catalog::{builtin_relics, load_spec, CatalogError};
use relicdig_core::ArtifactSpec;
use thiserror::Error;

/// Environment variable naming an extra directory of relic packages.
pub const CATALOG_DIR_ENV: &str = "DIG_CATALOG_DIR";

#[derive(Debug, Error)]
pub enum CatalogDirError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Package { path: PathBuf, source: CatalogError },
}

/// Relics available to new sessions, by name.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    relics: BTreeMap<String, Arc<ArtifactSpec>>,
}

impl Catalog {
    pub fn builtin() -> Self {
        let mut catalog = Catalog::default();
        for spec in builtin_relics() {
            catalog.insert(spec);
        }
        catalog
    }

    pub fn insert(&mut self, spec: ArtifactSpec) {
        self.relics.insert(spec.name.clone(), Arc::new(spec));
    }

    /// Adds every `*.json` package in `dir`, replacing relics with the same name.
    pub fn load_dir(&mut self, dir: &Path) -> Result<usize, CatalogDirError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| CatalogDirError::Io { path, source }
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .map(|entry| entry.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io_err(dir))?;
        paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
        paths.sort();
        for path in &paths {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let spec = load_spec(&text).map_err(|source| CatalogDirError::Package {
                path: path.clone(),
                source,
            })?;
            self.insert(spec);
        }
        Ok(paths.len())
    }

    pub fn get(&self, name: &str) -> Option<Arc<ArtifactSpec>> {
        self.relics.get(name).cloned()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.relics.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.relics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.relics.is_empty()
    }
}
