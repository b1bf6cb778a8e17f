//! On-disk kappa tables, guarded by an exclusive lock held for the whole run.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use wolffkit::embedding::{kappa_table, KappaTable};
use wolffkit::geometry::Point;
use wolffkit::measure::Measure;
use wolffkit::params::Params;

pub struct Cache {
    dir: PathBuf,
    // released on drop
    _lock: File,
}

impl Cache {
    pub fn open(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating cache {}", dir.display()))?;
        let lock = File::create(dir.join(".lock")).context("creating cache lock")?;
        lock.lock().context("locking cache")?;
        Ok(Cache { dir: dir.to_path_buf(), _lock: lock })
    }
}

/// Table from the cache when present, computed and stored otherwise.
pub fn table(cache: Option<&Cache>, params: &Params, measure: &Measure, center: &Point, radii: &[f64]) -> wolffkit::error::Result<Arc<KappaTable>> {
    if let Some(c) = cache {
        if let Some(t) = KappaTable::load(&c.dir, params, measure, center, radii) {
            return Ok(Arc::new(t));
        }
    }
    let t = kappa_table(params, measure, center, radii)?;
    if let Some(c) = cache {
        t.save(&c.dir)?;
    }
    Ok(t)
}
