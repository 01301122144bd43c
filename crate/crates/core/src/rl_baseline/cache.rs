use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::grid::{GridGoal, SemanticGrid};
use super::value::{RewardConfig, ValueFunction};
use super::RlError;
use crate::map::MapDocument;

pub const CACHE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"PPVF";

/// Hex digest identifying one solved configuration.
pub fn cache_key(doc: &MapDocument, cell_size: f64, rewards: &RewardConfig, tol: f64) -> String {
    let mut h = Sha256::new();
    h.update(doc.to_json_pretty().as_bytes());
    for x in [
        cell_size,
        rewards.road,
        rewards.sidewalk,
        rewards.crosswalk,
        rewards.goal,
        rewards.gamma,
        tol,
    ] {
        h.update(x.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Directory of solved value functions, one file per (key, goal).
#[derive(Debug, Clone)]
pub struct ValueCache {
    dir: PathBuf,
}

impl ValueCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &str, goal: u32) -> PathBuf {
        self.dir.join(format!("{key}-goal{goal}.ppvf"))
    }

    pub fn store(&self, key: &str, grid: &SemanticGrid, vf: &ValueFunction) -> Result<(), RlError> {
        let path = self.path(key, vf.goal.id);
        let io_err = |source| RlError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(&self.dir).map_err(io_err)?;
        let mut buf = Vec::with_capacity(48 + vf.values.len() * 9);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&CACHE_FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(grid.width as u64).to_le_bytes());
        buf.extend_from_slice(&(grid.height as u64).to_le_bytes());
        buf.extend_from_slice(&vf.goal.id.to_le_bytes());
        buf.extend_from_slice(&(vf.goal.cell as u64).to_le_bytes());
        buf.extend_from_slice(&(vf.iterations as u64).to_le_bytes());
        buf.extend_from_slice(&vf.residual.to_le_bytes());
        buf.extend(vf.reachable.iter().map(|&r| r as u8));
        for v in &vf.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        // Write then rename so a concurrent reader never sees a partial file.
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let mut f = fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(&buf).map_err(io_err)?;
        drop(f);
        fs::rename(&tmp, &path).map_err(io_err)
    }

    /// Cached value function for `goal`, `None` when absent.
    pub fn load(
        &self,
        key: &str,
        grid: &SemanticGrid,
        goal: GridGoal,
    ) -> Result<Option<ValueFunction>, RlError> {
        let path = self.path(key, goal.id);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(RlError::Io { path, source }),
        };
        let bad = |message: &str| RlError::CacheFormat {
            path: path.clone(),
            message: message.to_string(),
        };
        let mut r = Reader { bytes: &bytes, at: 0 };
        if r.take(4) != Some(MAGIC.as_slice()) {
            return Err(bad("missing magic"));
        }
        if r.u32() != Some(CACHE_FORMAT_VERSION) {
            return Err(bad("unsupported version"));
        }
        let header = (r.u64(), r.u64(), r.u32(), r.u64());
        if header != (Some(grid.width as u64), Some(grid.height as u64), Some(goal.id), Some(goal.cell as u64)) {
            return Err(bad("grid or goal mismatch"));
        }
        let iterations = r.u64().ok_or_else(|| bad("truncated"))? as usize;
        let residual = r.f64().ok_or_else(|| bad("truncated"))?;
        let reachable: Vec<bool> = r
            .take(grid.len())
            .ok_or_else(|| bad("truncated"))?
            .iter()
            .map(|&b| b != 0)
            .collect();
        let values = (0..grid.len())
            .map(|_| r.f64())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("truncated"))?;
        if r.at != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Some(ValueFunction {
            goal,
            values,
            reachable,
            iterations,
            residual,
        }))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.at..self.at.checked_add(n)?)?;
        self.at += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }

    fn f64(&mut self) -> Option<f64> {
        Some(f64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

#[cfg(test)]
mod tests {
    use super::super::value::value_iteration;
    use super::super::grid::rasterize;
    use super::*;
    use crate::scenario::straight_corridor;

    #[test]
    fn round_trip_and_key_sensitivity() {
        let doc = straight_corridor(4.0, 1.0);
        let grid = rasterize(&doc, 0.2).unwrap();
        let rewards = RewardConfig::default();
        let vf = value_iteration(&grid, &rewards, grid.goals[0], 1e-8, 10_000).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cache = ValueCache::new(dir.path());
        let key = cache_key(&doc, 0.2, &rewards, 1e-8);
        assert_eq!(key.len(), 64);
        assert!(cache.load(&key, &grid, grid.goals[0]).unwrap().is_none());
        cache.store(&key, &grid, &vf).unwrap();
        assert_eq!(cache.load(&key, &grid, grid.goals[0]).unwrap().unwrap(), vf);

        let other = RewardConfig { gamma: 0.95, ..rewards };
        assert_ne!(cache_key(&doc, 0.2, &other, 1e-8), key);
        assert_ne!(cache_key(&doc, 0.25, &rewards, 1e-8), key);
    }

    #[test]
    fn corrupt_file_is_reported() {
        let doc = straight_corridor(4.0, 1.0);
        let grid = rasterize(&doc, 0.2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cache = ValueCache::new(dir.path());
        fs::write(dir.path().join("k-goal0.ppvf"), b"PPVF\x01").unwrap();
        assert!(matches!(
            cache.load("k", &grid, grid.goals[0]),
            Err(RlError::CacheFormat { .. })
        ));
    }
}
