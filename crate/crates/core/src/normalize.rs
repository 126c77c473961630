//! Running observation normalisation with a frozen evaluation mode.
//!
//! Stats file layout (little-endian):
//!
//! ```text
//! magic   b"LOBNORM\0"   8 bytes
//! version u32            currently 1
//! dim     u32
//! count   u64            observations folded in
//! clip    f64
//! mean    dim x f64
//! var     dim x f64      population variance
//! ```

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::env::{Observation, OBS_LEN};
use crate::error::{Error, Result};

pub const STATS_MAGIC: &[u8; 8] = b"LOBNORM\0";
pub const STATS_VERSION: u32 = 1;
pub const DEFAULT_CLIP: f64 = 10.0;
const VAR_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizerMode {
    Fitting,
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalizerStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: u64,
    pub clip: f64,
    pub mode: NormalizerMode,
}

impl NormalizerStats {
    /// Empty stats in fitting mode for `dim` entries.
    pub fn new(dim: usize, clip: f64) -> Self {
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 0,
            clip,
            mode: NormalizerMode::Fitting,
        }
    }

    pub fn for_observations() -> Self {
        Self::new(OBS_LEN, DEFAULT_CLIP)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn freeze(&mut self) {
        self.mode = NormalizerMode::Frozen;
    }

    /// Folds one sample into the running mean / population variance.
    pub fn update(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.dim(), "sample width mismatch");
        self.count += 1;
        let n = self.count as f64;
        for ((m, v), &xi) in self.mean.iter_mut().zip(self.var.iter_mut()).zip(x) {
            if self.count == 1 {
                *m = xi;
                *v = 0.0;
                continue;
            }
            let delta = xi - *m;
            *m += delta / n;
            *v += (delta * (xi - *m) - *v) / n;
        }
    }

    /// Read-only transform `(x - mean) / sqrt(var + 1e-8)`, clipped.
    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.var))
            .map(|(&xi, (&m, &v))| ((xi - m) / (v + VAR_EPS).sqrt()).clamp(-self.clip, self.clip))
            .collect()
    }

    pub fn transform_observation(&self, obs: &Observation) -> Observation {
        let mut out = [0.0; OBS_LEN];
        out.copy_from_slice(&self.transform(obs.as_slice()));
        Observation(out)
    }

    /// Updates first when fitting, then transforms.
    pub fn normalize(&mut self, obs: &Observation) -> Observation {
        if self.mode == NormalizerMode::Fitting {
            self.update(obs.as_slice());
        }
        self.transform_observation(obs)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 16 * self.dim());
        out.extend_from_slice(STATS_MAGIC);
        out.extend_from_slice(&STATS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.count.to_le_bytes());
        out.extend_from_slice(&self.clip.to_le_bytes());
        for v in self.mean.iter().chain(&self.var) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses a stats file; the result is frozen.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |why: &str| Error::Data(format!("normalizer stats: {why}"));
        let body = bytes
            .strip_prefix(STATS_MAGIC.as_slice())
            .ok_or_else(|| corrupt("bad magic"))?;
        if body.len() < 24 {
            return Err(corrupt("truncated header"));
        }
        let version = u32::from_le_bytes(body[0..4].try_into().unwrap());
        if version != STATS_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let dim = u32::from_le_bytes(body[4..8].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(body[8..16].try_into().unwrap());
        let clip = f64::from_le_bytes(body[16..24].try_into().unwrap());
        let arrays = &body[24..];
        if arrays.len() != 16 * dim {
            return Err(corrupt("array length does not match dim"));
        }
        let values: Vec<f64> = arrays
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (mean, var) = values.split_at(dim);
        if !(clip.is_finite() && clip > 0.0) || values.iter().any(|v| !v.is_finite()) || var.iter().any(|&v| v < 0.0) {
            return Err(corrupt("non-finite or negative entries"));
        }
        Ok(Self {
            mean: mean.to_vec(),
            var: var.to_vec(),
            count,
            clip,
            mode: NormalizerMode::Frozen,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the serialised stats, hex encoded.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn frozen_unit_stats_are_identity_up_to_clip() {
        let mut s = NormalizerStats::new(3, 10.0);
        s.var = vec![1.0 - 1e-8; 3];
        s.freeze();
        let y = s.transform(&[0.5, -3.0, 50.0]);
        assert!((y[0] - 0.5).abs() < 1e-15);
        assert!((y[1] + 3.0).abs() < 1e-15);
        assert_eq!(y[2], 10.0);
    }

    #[test]
    fn constant_feature_normalises_to_zero() {
        let mut s = NormalizerStats::new(1, 10.0);
        let obs = [4.2];
        s.update(&obs);
        assert_eq!(s.transform(&obs), vec![0.0]);
        s.update(&obs);
        assert_eq!(s.transform(&obs), vec![0.0]);
    }

    #[test]
    fn streaming_matches_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.random_range(-5.0..20.0)).collect();
        let mut s = NormalizerStats::new(1, 10.0);
        for &x in &xs {
            s.update(&[x]);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        assert!((s.mean[0] - mean).abs() < 1e-9);
        assert!((s.var[0] - var).abs() < 1e-9);
    }

    #[test]
    fn round_trip_is_bit_exact_and_frozen() {
        let mut s = NormalizerStats::new(5, 7.5);
        for i in 0..17 {
            s.update(&[i as f64, 0.1 * i as f64, -1.0, 3.3, (i * i) as f64]);
        }
        let bytes = s.to_bytes();
        let loaded = NormalizerStats::from_bytes(&bytes).unwrap();
        assert_eq!(loaded.mode, NormalizerMode::Frozen);
        assert_eq!(loaded.to_bytes(), bytes);
        assert_eq!(loaded.mean, s.mean);
    }

    #[test]
    fn corrupt_files_rejected() {
        let s = NormalizerStats::new(2, 10.0);
        let mut bytes = s.to_bytes();
        assert!(NormalizerStats::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(NormalizerStats::from_bytes(&bytes).is_err());
    }

    #[test]
    fn frozen_normalize_does_not_update() {
        let mut s = NormalizerStats::for_observations();
        s.freeze();
        let before = s.to_bytes();
        let obs = Observation([3.0; OBS_LEN]);
        s.normalize(&obs);
        assert_eq!(s.to_bytes(), before);
    }
}
