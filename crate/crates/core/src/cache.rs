//! On-disk cache for cost matrices.
//!
//! Each matrix is stored as `<key>.bin` (row-major little-endian `f64`) with a
//! `<key>.json` sidecar header. Both files are written to a temporary file in
//! the cache directory and renamed into place, sidecar last, so a reader that
//! finds the sidecar always finds a complete matrix.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::action::{cost_matrix, ActionOptions};
use crate::dynamics::LagrangianSpec;
use crate::error::{Error, Result};
use crate::manifold::TorusPoint;

const FORMAT: &str = "f64-le-row-major";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub format: String,
    pub spec_hash: String,
    pub rows: usize,
    pub cols: usize,
    pub s: f64,
    pub t: f64,
    pub knots_per_unit: usize,
    pub grad_tol: f64,
    pub winding_range: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    /// Entries served from disk.
    pub hits: usize,
    /// Entries computed.
    pub misses: usize,
}

impl std::ops::AddAssign for CacheStats {
    fn add_assign(&mut self, rhs: Self) {
        self.hits += rhs.hits;
        self.misses += rhs.misses;
    }
}

#[derive(Clone, Debug)]
pub struct CostCache {
    dir: PathBuf,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn spec_hash(spec: &LagrangianSpec) -> String {
    let json = serde_json::to_vec(spec.config()).expect("spec config serializes");
    hex(&Sha256::digest(&json))
}

impl CostCache {
    pub fn new(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        Ok(CostCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Cache key for `c_s^t` between two point lists. For autonomous
    /// Lagrangians only the duration `t - s` enters the key.
    pub fn key(
        spec: &LagrangianSpec,
        sources: &[TorusPoint],
        targets: &[TorusPoint],
        s: f64,
        t: f64,
        opts: &ActionOptions,
    ) -> String {
        let (s, t) = if spec.is_autonomous() { (0.0, t - s) } else { (s, t) };
        let mut h = Sha256::new();
        h.update(spec_hash(spec).as_bytes());
        h.update(serde_json::to_vec(opts).expect("options serialize"));
        h.update(s.to_bits().to_le_bytes());
        h.update(t.to_bits().to_le_bytes());
        for pts in [sources, targets] {
            h.update((pts.len() as u64).to_le_bytes());
            for p in pts {
                for c in p.coords() {
                    h.update(c.to_bits().to_le_bytes());
                }
            }
        }
        hex(&h.finalize())
    }

    fn paths(&self, key: &str) -> (PathBuf, PathBuf) {
        (
            self.dir.join(format!("{key}.bin")),
            self.dir.join(format!("{key}.json")),
        )
    }

    pub fn load(&self, key: &str) -> Result<Option<(CacheHeader, Array2<f64>)>> {
        let (bin, json) = self.paths(key);
        if !json.exists() {
            return Ok(None);
        }
        let header: CacheHeader = serde_json::from_slice(&fs::read(&json)?)?;
        if header.format != FORMAT {
            return Err(Error::Cache(format!("unknown format {}", header.format)));
        }
        let bytes = fs::read(&bin)?;
        if bytes.len() != header.rows * header.cols * 8 {
            return Err(Error::Cache(format!("truncated matrix file {}", bin.display())));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let m = Array2::from_shape_vec((header.rows, header.cols), data)
            .map_err(|e| Error::Cache(e.to_string()))?;
        Ok(Some((header, m)))
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(bytes)?;
        tmp.flush()?;
        tmp.persist(path).map_err(|e| Error::Io(e.error))?;
        Ok(())
    }

    pub fn store(&self, key: &str, header: &CacheHeader, m: &Array2<f64>) -> Result<()> {
        let (bin, json) = self.paths(key);
        let bytes: Vec<u8> = m.iter().flat_map(|v| v.to_le_bytes()).collect();
        self.write_atomic(&bin, &bytes)?;
        self.write_atomic(&json, &serde_json::to_vec_pretty(header)?)?;
        Ok(())
    }

    /// [`cost_matrix`] backed by this cache.
    pub fn cost_matrix(
        &self,
        spec: &LagrangianSpec,
        sources: &[TorusPoint],
        targets: &[TorusPoint],
        s: f64,
        t: f64,
        opts: &ActionOptions,
    ) -> Result<(Array2<f64>, CacheStats)> {
        let key = Self::key(spec, sources, targets, s, t, opts);
        if let Some((_, m)) = self.load(&key)? {
            if m.dim() == (sources.len(), targets.len()) {
                return Ok((
                    m,
                    CacheStats {
                        hits: sources.len() * targets.len(),
                        misses: 0,
                    },
                ));
            }
        }
        let m = cost_matrix(spec, sources, targets, s, t, opts)?;
        let header = CacheHeader {
            format: FORMAT.into(),
            spec_hash: spec_hash(spec),
            rows: sources.len(),
            cols: targets.len(),
            s,
            t,
            knots_per_unit: opts.knots_per_unit,
            grad_tol: opts.grad_tol,
            winding_range: opts.winding_range,
        };
        self.store(&key, &header, &m)?;
        Ok((
            m,
            CacheStats {
                hits: 0,
                misses: sources.len() * targets.len(),
            },
        ))
    }
}

/// Optional cache: computes directly when `cache` is `None`.
pub fn cached_cost_matrix(
    cache: Option<&CostCache>,
    spec: &LagrangianSpec,
    sources: &[TorusPoint],
    targets: &[TorusPoint],
    s: f64,
    t: f64,
    opts: &ActionOptions,
) -> Result<(Array2<f64>, CacheStats)> {
    match cache {
        Some(c) => c.cost_matrix(spec, sources, targets, s, t, opts),
        None => {
            let m = cost_matrix(spec, sources, targets, s, t, opts)?;
            let misses = m.len();
            Ok((m, CacheStats { hits: 0, misses }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Potential;

    #[test]
    fn round_trips_and_counts_hits() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CostCache::new(dir.path()).unwrap();
        let spec = LagrangianSpec::circle(Potential::pendulum()).unwrap();
        let pts: Vec<TorusPoint> = (0..4).map(|i| TorusPoint::on_circle(i as f64 / 4.0).unwrap()).collect();
        let opts = ActionOptions::default();
        let (a, s1) = cache.cost_matrix(&spec, &pts, &pts, 0.0, 1.0, &opts).unwrap();
        assert_eq!(s1, CacheStats { hits: 0, misses: 16 });
        let (b, s2) = cache.cost_matrix(&spec, &pts, &pts, 0.0, 1.0, &opts).unwrap();
        assert_eq!(s2, CacheStats { hits: 16, misses: 0 });
        assert_eq!(a, b);
        // autonomous: shifted interval reuses the entry
        let (_, s3) = cache.cost_matrix(&spec, &pts, &pts, 0.5, 1.5, &opts).unwrap();
        assert_eq!(s3.hits, 16);
    }

    #[test]
    fn keys_separate_time_dependent_intervals() {
        let spec = LagrangianSpec::circle(Potential::Traveling {
            amplitude: 0.2,
            wavevector: vec![1],
            speed: 1.0,
        })
        .unwrap();
        let pts = vec![TorusPoint::on_circle(0.1).unwrap()];
        let opts = ActionOptions::default();
        assert_ne!(
            CostCache::key(&spec, &pts, &pts, 0.0, 0.5, &opts),
            CostCache::key(&spec, &pts, &pts, 0.25, 0.75, &opts)
        );
    }
}
