//! Toy-scale forward implementations of the architectural mechanisms the
//! ensemble's branch models rely on: multi-axis self-attention (window +
//! grid decomposition of dense attention) and SE/MBConv/Fused-MBConv
//! blocks, with structural invariants (decomposition equivalence, op-count
//! scaling, residual identities) checked instead of learned accuracy.
//!
//! Forward-only, f64 throughout, no normalization layers, no biases.
//! Gates use the logistic function, everything else the rectifier.
//! Weights are either drawn uniformly from [-0.5, 0.5) out of a ChaCha8
//! stream keyed by a 64-bit seed, or loaded from a flat binary file of
//! little-endian f64 values in declaration order.

mod attention;
mod conv;
pub mod selfcheck;

pub use attention::{
    attention_op_count, block_attention, dense_attention, dense_attention_with_probs,
    grid_attention, max_sa, AttentionVariant,
};
pub use conv::{fused_mbconv, mbconv, se_block, ConvBlockParams};

use std::path::Path;

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// H x W x C token grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Array3<f64>,
}

impl FeatureMap {
    pub fn new(data: Array3<f64>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param(
                "feature map contains non-finite values".into(),
            ));
        }
        if data.shape().contains(&0) {
            return Err(Error::Param("feature map dimensions must be >= 1".into()));
        }
        Ok(Self { data })
    }

    pub fn from_vec(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let data = Array3::from_shape_vec((height, width, channels), values)
            .map_err(|e| Error::Param(e.to_string()))?;
        Self::new(data)
    }

    /// Seeded random map, uniform in [-0.5, 0.5), row-major draw order.
    pub fn seeded(height: usize, width: usize, channels: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_vec(
            height,
            width,
            channels,
            uniform_weights(height * width * channels, &mut rng),
        )
    }

    pub fn height(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[[i, j, c]]
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &FeatureMap) -> f64 {
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn uniform_weights(count: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..count).map(|_| rng.gen::<f64>() - 0.5).collect()
}

/// Reads a flat little-endian f64 weight file.
pub fn read_weight_file(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Param(format!(
            "{}: length {} is not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_weight_file(path: impl AsRef<Path>, values: &[f64]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Projection weights and partition sizes for the attention operations.
///
/// Declaration order of the weight matrices (for seeding and file layout):
/// query, key, value, output, each `channels x channels` row-major.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    channels: usize,
    heads: usize,
    window: usize,
    grid: usize,
    pub(crate) wq: Array2<f64>,
    pub(crate) wk: Array2<f64>,
    pub(crate) wv: Array2<f64>,
    pub(crate) wo: Array2<f64>,
}

impl AttentionParams {
    pub fn from_weights(
        channels: usize,
        heads: usize,
        window: usize,
        grid: usize,
        flat: Vec<f64>,
    ) -> Result<Self> {
        if channels == 0 || heads == 0 || !channels.is_multiple_of(heads) {
            return Err(Error::Param(format!(
                "heads {heads} must divide channels {channels}"
            )));
        }
        if window == 0 || grid == 0 {
            return Err(Error::Param("window and grid sizes must be >= 1".into()));
        }
        let c2 = channels * channels;
        if flat.len() != 4 * c2 {
            return Err(Error::Param(format!(
                "expected {} weights (4 x {channels}^2), found {}",
                4 * c2,
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("weights contain non-finite values".into()));
        }
        let take = |i: usize| {
            Array2::from_shape_vec((channels, channels), flat[i * c2..(i + 1) * c2].to_vec())
                .unwrap()
        };
        Ok(Self {
            channels,
            heads,
            window,
            grid,
            wq: take(0),
            wk: take(1),
            wv: take(2),
            wo: take(3),
        })
    }

    pub fn seeded(
        channels: usize,
        heads: usize,
        window: usize,
        grid: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat = uniform_weights(4 * channels * channels, &mut rng);
        Self::from_weights(channels, heads, window, grid, flat)
    }

    pub fn from_file(
        channels: usize,
        heads: usize,
        window: usize,
        grid: usize,
        path: impl AsRef<Path>,
    ) -> Result<Self> {
        Self::from_weights(channels, heads, window, grid, read_weight_file(path)?)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    /// Same weights, different partition sizes.
    pub fn with_partition(&self, window: usize, grid: usize) -> Result<Self> {
        if window == 0 || grid == 0 {
            return Err(Error::Param("window and grid sizes must be >= 1".into()));
        }
        let mut out = self.clone();
        out.window = window;
        out.grid = grid;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_maps_are_reproducible_and_bounded() {
        let a = FeatureMap::seeded(4, 4, 8, 7).unwrap();
        let b = FeatureMap::seeded(4, 4, 8, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (-0.5..0.5).contains(v)));
        assert_ne!(a, FeatureMap::seeded(4, 4, 8, 8).unwrap());
    }

    #[test]
    fn params_validate_head_divisibility() {
        assert!(AttentionParams::seeded(16, 3, 2, 2, 0).is_err());
        assert!(AttentionParams::seeded(16, 4, 2, 2, 0).is_ok());
    }

    #[test]
    fn weight_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let values = vec![0.0, -1.5, 3.25, f64::MIN_POSITIVE];
        write_weight_file(&path, &values).unwrap();
        assert_eq!(read_weight_file(&path).unwrap(), values);
    }

    #[test]
    fn attention_params_from_file_checks_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        write_weight_file(&path, &[0.1; 4 * 4]).unwrap();
        assert!(AttentionParams::from_file(2, 1, 1, 1, &path).is_ok());
        assert!(AttentionParams::from_file(4, 1, 1, 1, &path).is_err());
    }

    #[test]
    fn non_finite_maps_are_rejected() {
        assert!(FeatureMap::from_vec(1, 1, 2, vec![0.0, f64::NAN]).is_err());
    }
}
