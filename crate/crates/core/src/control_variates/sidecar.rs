//! Binary cache of a clustering and its centroid statistics.
//!
//! Little-endian layout: magic `SMCLUST1`, 32-byte dataset hash, ε (f64),
//! point count, dimension, cluster count (u64 each), standardizer means and
//! sds, the assignments, then per cluster: seed, category, count, the
//! standardized centroid, the raw centroid, `s_j` and `B^j` (column-major).

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use super::cluster::{ClusterSet, Standardizer};
use super::taylor::CentroidSummary;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SMCLUST1";

#[derive(Debug, Clone, PartialEq)]
pub struct SidecarKey {
    pub dataset_hash: [u8; 32],
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCache {
    pub standardizer: Standardizer,
    pub clusters: ClusterSet,
    pub summaries: Vec<CentroidSummary>,
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_vec<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    (0..len).map(|_| get_f64(r)).collect()
}

pub fn write_sidecar<W: Write>(mut w: W, key: &SidecarKey, cache: &ClusterCache) -> Result<()> {
    let dim = cache.standardizer.mean.len();
    w.write_all(MAGIC)?;
    w.write_all(&key.dataset_hash)?;
    put_f64(&mut w, key.epsilon)?;
    put_u64(&mut w, cache.clusters.assignments.len() as u64)?;
    put_u64(&mut w, dim as u64)?;
    put_u64(&mut w, cache.clusters.len() as u64)?;
    for &v in cache.standardizer.mean.iter().chain(&cache.standardizer.sd) {
        put_f64(&mut w, v)?;
    }
    for &a in &cache.clusters.assignments {
        put_u64(&mut w, a as u64)?;
    }
    for (j, s) in cache.summaries.iter().enumerate() {
        put_u64(&mut w, cache.clusters.seeds[j] as u64)?;
        put_u64(&mut w, cache.clusters.categories[j] as u64)?;
        put_u64(&mut w, s.count as u64)?;
        for &v in cache.clusters.centroids[j]
            .iter()
            .chain(&s.centroid)
            .chain(s.deviation_sum.iter())
            .chain(s.deviation_outer_sum.iter())
        {
            put_f64(&mut w, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Returns `None` when the file was written for a different dataset or ε.
pub fn read_sidecar<R: Read>(mut r: R, key: &SidecarKey) -> Result<Option<ClusterCache>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Io("not a cluster sidecar file".into()));
    }
    let mut hash = [0u8; 32];
    r.read_exact(&mut hash)?;
    let epsilon = get_f64(&mut r)?;
    if hash != key.dataset_hash || epsilon.to_bits() != key.epsilon.to_bits() {
        return Ok(None);
    }
    let n = get_u64(&mut r)? as usize;
    let dim = get_u64(&mut r)? as usize;
    let nc = get_u64(&mut r)? as usize;
    let mean = get_vec(&mut r, dim)?;
    let sd = get_vec(&mut r, dim)?;
    let assignments = (0..n)
        .map(|_| get_u64(&mut r).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let mut clusters = ClusterSet {
        centroids: Vec::with_capacity(nc),
        assignments,
        counts: Vec::with_capacity(nc),
        seeds: Vec::with_capacity(nc),
        categories: Vec::with_capacity(nc),
    };
    let mut summaries = Vec::with_capacity(nc);
    for _ in 0..nc {
        let seed = get_u64(&mut r)? as usize;
        let category = get_u64(&mut r)? as usize;
        let count = get_u64(&mut r)? as usize;
        clusters.centroids.push(get_vec(&mut r, dim)?);
        let centroid = get_vec(&mut r, dim)?;
        let s = DVector::from_vec(get_vec(&mut r, dim)?);
        let b = DMatrix::from_vec(dim, dim, get_vec(&mut r, dim * dim)?);
        clusters.seeds.push(seed);
        clusters.categories.push(category);
        clusters.counts.push(count);
        summaries.push(CentroidSummary {
            category,
            centroid,
            count,
            deviation_sum: s,
            deviation_outer_sum: b,
        });
    }
    if clusters.assignments.iter().any(|&a| a >= nc) {
        return Err(Error::Io("corrupt cluster sidecar: assignment out of range".into()));
    }
    Ok(Some(ClusterCache {
        standardizer: Standardizer { mean, sd },
        clusters,
        summaries,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control_variates::TaylorVariates;
    use crate::models::{Ar1Model, Ar1Parameterization, Population};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_exact_and_keyed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = Ar1Model::generate(&[0.3, 0.6], Ar1Parameterization::M1, 5.0, 400, &mut rng).unwrap();
        let pop = Population::of(&model);
        let cv = TaylorVariates::build(&model, &pop, 0.3).unwrap();
        let cache = ClusterCache {
            standardizer: cv.standardizer().clone(),
            clusters: cv.clusters().clone(),
            summaries: cv.summaries().to_vec(),
        };
        let key = SidecarKey {
            dataset_hash: [7; 32],
            epsilon: 0.3,
        };
        let mut buf = Vec::new();
        write_sidecar(&mut buf, &key, &cache).unwrap();
        assert_eq!(read_sidecar(buf.as_slice(), &key).unwrap(), Some(cache));
        let other = SidecarKey { epsilon: 0.31, ..key };
        assert_eq!(read_sidecar(buf.as_slice(), &other).unwrap(), None);
    }
}
