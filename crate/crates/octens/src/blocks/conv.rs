//! Squeeze-excitation gating and the two inverted-residual block variants.
//!
//! Stride 1, zero-padded "same" 3x3 convolutions, no biases, no
//! normalization. The residual add requires matching channel counts, so
//! both blocks keep `channels` in == out.

// index-explicit loops keep the toy forward passes readable against their
// weight layout docs
#![allow(clippy::needless_range_loop)]

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{uniform_weights, FeatureMap};
use crate::error::{Error, Result};

/// Weights for [`se_block`], [`mbconv`], and [`fused_mbconv`].
///
/// Declaration order (for seeding and the flat little-endian f64 file):
/// - `expand`: `[C_exp][C]` 1x1 expansion (mbconv)
/// - `depthwise`: `[C_exp][3][3]` per-channel 3x3 (mbconv)
/// - `fused_conv`: `[C_exp][C][3][3]` full 3x3 expansion (fused)
/// - `se_reduce`: `[C_se][C_exp]` squeeze bottleneck
/// - `se_expand`: `[C_exp][C_se]` gate projection
/// - `project`: `[C][C_exp]` 1x1 projection (both variants)
///
/// with `C_exp = channels * expansion` and `C_se = C_exp / se_reduction`.
/// The standalone [`se_block`] operates on `C_exp` channels, so use
/// `expansion = 1` to gate an un-expanded map.
#[derive(Debug, Clone)]
pub struct ConvBlockParams {
    channels: usize,
    expansion: usize,
    se_reduction: usize,
    expand: Vec<f64>,
    depthwise: Vec<f64>,
    fused_conv: Vec<f64>,
    se_reduce: Vec<f64>,
    se_expand: Vec<f64>,
    project: Vec<f64>,
}

impl ConvBlockParams {
    fn weight_len(channels: usize, expansion: usize, se_reduction: usize) -> usize {
        let ce = channels * expansion;
        let cs = ce / se_reduction;
        ce * channels + ce * 9 + ce * channels * 9 + cs * ce + ce * cs + channels * ce
    }

    fn validate_shape(channels: usize, expansion: usize, se_reduction: usize) -> Result<()> {
        if channels == 0 {
            return Err(Error::Param("channels must be >= 1".into()));
        }
        if expansion == 0 {
            return Err(Error::Param("expansion ratio must be >= 1".into()));
        }
        if se_reduction == 0 || !(channels * expansion).is_multiple_of(se_reduction) {
            return Err(Error::Param(format!(
                "se_reduction {se_reduction} must divide expanded channels {}",
                channels * expansion
            )));
        }
        Ok(())
    }

    pub fn from_weights(
        channels: usize,
        expansion: usize,
        se_reduction: usize,
        flat: Vec<f64>,
    ) -> Result<Self> {
        Self::validate_shape(channels, expansion, se_reduction)?;
        let expected = Self::weight_len(channels, expansion, se_reduction);
        if flat.len() != expected {
            return Err(Error::Param(format!(
                "expected {expected} weights, found {}",
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("weights contain non-finite values".into()));
        }
        let ce = channels * expansion;
        let cs = ce / se_reduction;
        let mut rest = flat;
        let mut take = |n: usize| -> Vec<f64> {
            let tail = rest.split_off(n);
            std::mem::replace(&mut rest, tail)
        };
        Ok(Self {
            channels,
            expansion,
            se_reduction,
            expand: take(ce * channels),
            depthwise: take(ce * 9),
            fused_conv: take(ce * channels * 9),
            se_reduce: take(cs * ce),
            se_expand: take(ce * cs),
            project: take(channels * ce),
        })
    }

    pub fn seeded(
        channels: usize,
        expansion: usize,
        se_reduction: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::validate_shape(channels, expansion, se_reduction)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat = uniform_weights(
            Self::weight_len(channels, expansion, se_reduction),
            &mut rng,
        );
        Self::from_weights(channels, expansion, se_reduction, flat)
    }

    /// All-zero weights; useful for the pure-residual identity.
    pub fn zeroed(channels: usize, expansion: usize, se_reduction: usize) -> Result<Self> {
        Self::validate_shape(channels, expansion, se_reduction)?;
        let flat = vec![0.0; Self::weight_len(channels, expansion, se_reduction)];
        Self::from_weights(channels, expansion, se_reduction, flat)
    }

    pub fn from_file(
        channels: usize,
        expansion: usize,
        se_reduction: usize,
        path: impl AsRef<std::path::Path>,
    ) -> Result<Self> {
        Self::from_weights(
            channels,
            expansion,
            se_reduction,
            super::read_weight_file(path)?,
        )
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn expanded_channels(&self) -> usize {
        self.channels * self.expansion
    }

    pub fn se_channels(&self) -> usize {
        self.expanded_channels() / self.se_reduction
    }
}

#[inline]
fn relu(v: f64) -> f64 {
    v.max(0.0)
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Channel gate: global average pool, bottleneck projection with
/// rectifier, expansion back, logistic gate, channel-wise rescale.
/// The input must carry the params' expanded channel count.
pub fn se_block(x: &FeatureMap, p: &ConvBlockParams) -> Result<FeatureMap> {
    let ce = p.expanded_channels();
    if x.channels() != ce {
        return Err(Error::Mismatch(format!(
            "feature map has {} channels, SE weights expect {ce}",
            x.channels()
        )));
    }
    let cs = p.se_channels();
    let (h, w) = (x.height(), x.width());
    let area = (h * w) as f64;

    let mut pooled = vec![0.0; ce];
    for i in 0..h {
        for j in 0..w {
            for c in 0..ce {
                pooled[c] += x.get(i, j, c);
            }
        }
    }
    for v in &mut pooled {
        *v /= area;
    }

    let mut bottleneck = vec![0.0; cs];
    for u in 0..cs {
        let mut acc = 0.0;
        for c in 0..ce {
            acc += p.se_reduce[u * ce + c] * pooled[c];
        }
        bottleneck[u] = relu(acc);
    }

    let mut gate = vec![0.0; ce];
    for c in 0..ce {
        let mut acc = 0.0;
        for u in 0..cs {
            acc += p.se_expand[c * cs + u] * bottleneck[u];
        }
        gate[c] = sigmoid(acc);
    }

    let mut data = Array3::zeros((h, w, ce));
    for i in 0..h {
        for j in 0..w {
            for c in 0..ce {
                data[[i, j, c]] = x.get(i, j, c) * gate[c];
            }
        }
    }
    FeatureMap::new(data)
}

fn check_spatial(x: &FeatureMap) -> Result<()> {
    if x.height() < 3 || x.width() < 3 {
        return Err(Error::Param(format!(
            "spatial dims {}x{} smaller than the 3x3 kernel",
            x.height(),
            x.width()
        )));
    }
    Ok(())
}

fn check_channels(x: &FeatureMap, p: &ConvBlockParams) -> Result<()> {
    if x.channels() != p.channels {
        return Err(Error::Mismatch(format!(
            "feature map has {} channels, block expects {}",
            x.channels(),
            p.channels
        )));
    }
    Ok(())
}

// zero-padded 3x3 tap; (i, j) may be off the map
#[inline]
fn tap(x: &FeatureMap, i: isize, j: isize, c: usize) -> f64 {
    if i < 0 || j < 0 || i >= x.height() as isize || j >= x.width() as isize {
        0.0
    } else {
        x.get(i as usize, j as usize, c)
    }
}

/// 1x1 expand -> rectifier -> 3x3 depthwise -> rectifier -> SE gate ->
/// 1x1 project -> residual add.
pub fn mbconv(x: &FeatureMap, p: &ConvBlockParams) -> Result<FeatureMap> {
    check_channels(x, p)?;
    check_spatial(x)?;
    let c = p.channels;
    let ce = p.expanded_channels();
    let (h, w) = (x.height(), x.width());

    let mut expanded = Array3::zeros((h, w, ce));
    for i in 0..h {
        for j in 0..w {
            for o in 0..ce {
                let mut acc = 0.0;
                for ci in 0..c {
                    acc += p.expand[o * c + ci] * x.get(i, j, ci);
                }
                expanded[[i, j, o]] = relu(acc);
            }
        }
    }
    let expanded = FeatureMap::new(expanded)?;

    let mut depth = Array3::zeros((h, w, ce));
    for i in 0..h {
        for j in 0..w {
            for o in 0..ce {
                let mut acc = 0.0;
                for di in 0..3 {
                    for dj in 0..3 {
                        acc += p.depthwise[o * 9 + di * 3 + dj]
                            * tap(
                                &expanded,
                                i as isize + di as isize - 1,
                                j as isize + dj as isize - 1,
                                o,
                            );
                    }
                }
                depth[[i, j, o]] = relu(acc);
            }
        }
    }
    let gated = se_block(&FeatureMap::new(depth)?, p)?;

    project_and_add(x, &gated, p)
}

/// 3x3 full-convolution expand -> rectifier -> SE gate -> 1x1 project ->
/// residual add.
pub fn fused_mbconv(x: &FeatureMap, p: &ConvBlockParams) -> Result<FeatureMap> {
    check_channels(x, p)?;
    check_spatial(x)?;
    let c = p.channels;
    let ce = p.expanded_channels();
    let (h, w) = (x.height(), x.width());

    let mut expanded = Array3::zeros((h, w, ce));
    for i in 0..h {
        for j in 0..w {
            for o in 0..ce {
                let mut acc = 0.0;
                for ci in 0..c {
                    for di in 0..3 {
                        for dj in 0..3 {
                            acc += p.fused_conv[((o * c + ci) * 3 + di) * 3 + dj]
                                * tap(
                                    x,
                                    i as isize + di as isize - 1,
                                    j as isize + dj as isize - 1,
                                    ci,
                                );
                        }
                    }
                }
                expanded[[i, j, o]] = relu(acc);
            }
        }
    }
    let gated = se_block(&FeatureMap::new(expanded)?, p)?;

    project_and_add(x, &gated, p)
}

fn project_and_add(x: &FeatureMap, gated: &FeatureMap, p: &ConvBlockParams) -> Result<FeatureMap> {
    let c = p.channels;
    let ce = p.expanded_channels();
    let (h, w) = (x.height(), x.width());
    let mut out = Array3::zeros((h, w, c));
    for i in 0..h {
        for j in 0..w {
            for o in 0..c {
                let mut acc = 0.0;
                for e in 0..ce {
                    acc += p.project[o * ce + e] * gated.get(i, j, e);
                }
                out[[i, j, o]] = x.get(i, j, o) + acc;
            }
        }
    }
    FeatureMap::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gate_weights_halve_the_input() {
        let p = ConvBlockParams::zeroed(4, 1, 2).unwrap();
        let x = FeatureMap::seeded(3, 3, 4, 30).unwrap();
        let out = se_block(&x, &p).unwrap();
        for (a, b) in out.data().iter().zip(x.data().iter()) {
            assert_eq!(*a, 0.5 * b);
        }
    }

    #[test]
    fn gate_never_amplifies_a_channel() {
        let p = ConvBlockParams::seeded(4, 1, 2, 31).unwrap();
        let x = FeatureMap::seeded(5, 4, 4, 32).unwrap();
        let out = se_block(&x, &p).unwrap();
        for (a, b) in out.data().iter().zip(x.data().iter()) {
            assert!(a.abs() <= b.abs() + 1e-15);
        }
    }

    // hand-computed pool -> bottleneck -> gate chain on a 1x1x4 map
    #[test]
    fn se_single_pixel_matches_hand_chain() {
        let p = ConvBlockParams::seeded(4, 1, 2, 33).unwrap();
        let values = vec![0.4, -0.2, 0.1, 0.3];
        let x = FeatureMap::from_vec(1, 1, 4, values.clone()).unwrap();
        let out = se_block(&x, &p).unwrap();

        // pooled == the single pixel
        let mut bott = [0.0; 2];
        for u in 0..2 {
            let mut acc = 0.0;
            for c in 0..4 {
                acc += p.se_reduce[u * 4 + c] * values[c];
            }
            bott[u] = acc.max(0.0);
        }
        for c in 0..4 {
            let mut acc = 0.0;
            for u in 0..2 {
                acc += p.se_expand[c * 2 + u] * bott[u];
            }
            let gate = 1.0 / (1.0 + (-acc).exp());
            assert!((out.get(0, 0, c) - values[c] * gate).abs() < 1e-12);
        }
    }

    // permuting the input channels together with the matching rows/columns
    // of the SE projections permutes the gated output identically
    #[test]
    fn se_channel_permutation_consistency() {
        let p = ConvBlockParams::seeded(4, 1, 2, 45).unwrap();
        let x = FeatureMap::seeded(3, 3, 4, 46).unwrap();
        let perm = [3usize, 1, 0, 2];

        let mut q = p.clone();
        for u in 0..p.se_channels() {
            for (new, old) in perm.iter().enumerate() {
                q.se_reduce[u * 4 + new] = p.se_reduce[u * 4 + old];
            }
        }
        for (new, old) in perm.iter().enumerate() {
            for u in 0..p.se_channels() {
                q.se_expand[new * p.se_channels() + u] = p.se_expand[old * p.se_channels() + u];
            }
        }
        let permute_map = |m: &FeatureMap| {
            let mut data = m.data().clone();
            for i in 0..m.height() {
                for j in 0..m.width() {
                    for (new, old) in perm.iter().enumerate() {
                        data[[i, j, new]] = m.get(i, j, *old);
                    }
                }
            }
            FeatureMap::new(data).unwrap()
        };

        let direct = se_block(&permute_map(&x), &q).unwrap();
        let expected = permute_map(&se_block(&x, &p).unwrap());
        assert!(direct.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn se_rejects_channel_mismatch() {
        let p = ConvBlockParams::seeded(4, 2, 2, 34).unwrap(); // expects 8
        let x = FeatureMap::seeded(2, 2, 4, 35).unwrap();
        assert!(se_block(&x, &p).is_err());
    }

    #[test]
    fn zero_weights_leave_pure_residual() {
        let p = ConvBlockParams::zeroed(3, 2, 2).unwrap();
        let x = FeatureMap::seeded(4, 5, 3, 36).unwrap();
        let mb = mbconv(&x, &p).unwrap();
        let fused = fused_mbconv(&x, &p).unwrap();
        assert!(mb.max_abs_diff(&x) <= 1e-12);
        assert!(fused.max_abs_diff(&x) <= 1e-12);
    }

    #[test]
    fn blocks_preserve_shape() {
        let p = ConvBlockParams::seeded(2, 3, 2, 37).unwrap();
        let x = FeatureMap::seeded(4, 4, 2, 38).unwrap();
        for out in [mbconv(&x, &p).unwrap(), fused_mbconv(&x, &p).unwrap()] {
            assert_eq!(
                (out.height(), out.width(), out.channels()),
                (x.height(), x.width(), x.channels())
            );
        }
    }

    #[test]
    fn small_maps_are_rejected() {
        let p = ConvBlockParams::seeded(2, 1, 1, 39).unwrap();
        let x = FeatureMap::seeded(2, 2, 2, 40).unwrap();
        assert!(mbconv(&x, &p).is_err());
        assert!(fused_mbconv(&x, &p).is_err());
    }

    /// Independent oracle for the whole mbconv chain: flat vectors and
    /// fully explicit loops, including a separately written padded
    /// convolution.
    fn mbconv_oracle(x: &FeatureMap, p: &ConvBlockParams) -> Vec<f64> {
        let (h, w) = (x.height(), x.width());
        let c = p.channels();
        let ce = p.expanded_channels();
        let cs = p.se_channels();
        let pix = |i: isize, j: isize, ch: usize, buf: &[f64], chans: usize| -> f64 {
            if i < 0 || j < 0 || i as usize >= h || j as usize >= w {
                0.0
            } else {
                buf[(i as usize * w + j as usize) * chans + ch]
            }
        };

        // expand + relu
        let mut ex = vec![0.0; h * w * ce];
        for i in 0..h {
            for j in 0..w {
                for o in 0..ce {
                    let mut s = 0.0;
                    for ci in 0..c {
                        s += p.expand[o * c + ci] * x.get(i, j, ci);
                    }
                    ex[(i * w + j) * ce + o] = s.max(0.0);
                }
            }
        }
        // depthwise + relu
        let mut dw = vec![0.0; h * w * ce];
        for i in 0..h {
            for j in 0..w {
                for o in 0..ce {
                    let mut s = 0.0;
                    for di in -1..=1isize {
                        for dj in -1..=1isize {
                            s += p.depthwise[o * 9 + ((di + 1) * 3 + dj + 1) as usize]
                                * pix(i as isize + di, j as isize + dj, o, &ex, ce);
                        }
                    }
                    dw[(i * w + j) * ce + o] = s.max(0.0);
                }
            }
        }
        // SE
        let mut pooled = vec![0.0; ce];
        for idx in 0..h * w {
            for o in 0..ce {
                pooled[o] += dw[idx * ce + o];
            }
        }
        for v in &mut pooled {
            *v /= (h * w) as f64;
        }
        let mut bott = vec![0.0; cs];
        for u in 0..cs {
            let mut s = 0.0;
            for o in 0..ce {
                s += p.se_reduce[u * ce + o] * pooled[o];
            }
            bott[u] = s.max(0.0);
        }
        let mut gate = vec![0.0; ce];
        for o in 0..ce {
            let mut s = 0.0;
            for u in 0..cs {
                s += p.se_expand[o * cs + u] * bott[u];
            }
            gate[o] = 1.0 / (1.0 + (-s).exp());
        }
        // project + residual
        let mut out = vec![0.0; h * w * c];
        for i in 0..h {
            for j in 0..w {
                for o in 0..c {
                    let mut s = 0.0;
                    for e in 0..ce {
                        s += p.project[o * ce + e] * dw[(i * w + j) * ce + e] * gate[e];
                    }
                    out[(i * w + j) * c + o] = x.get(i, j, o) + s;
                }
            }
        }
        out
    }

    #[test]
    fn mbconv_matches_independent_oracle() {
        let p = ConvBlockParams::seeded(2, 2, 2, 41).unwrap();
        let x = FeatureMap::seeded(4, 4, 2, 42).unwrap();
        let got = mbconv(&x, &p).unwrap();
        let want = mbconv_oracle(&x, &p);
        for i in 0..4 {
            for j in 0..4 {
                for o in 0..2 {
                    let g = got.get(i, j, o);
                    let w_ = want[(i * 4 + j) * 2 + o];
                    assert!((g - w_).abs() < 1e-12, "({i},{j},{o}): {g} vs {w_}");
                }
            }
        }
    }

    /// Independent fused oracle: direct 3x3 full convolution with nested
    /// loops.
    fn fused_oracle(x: &FeatureMap, p: &ConvBlockParams) -> Vec<f64> {
        let (h, w) = (x.height(), x.width());
        let c = p.channels();
        let ce = p.expanded_channels();
        let cs = p.se_channels();

        let mut ex = vec![0.0; h * w * ce];
        for i in 0..h as isize {
            for j in 0..w as isize {
                for o in 0..ce {
                    let mut s = 0.0;
                    for ci in 0..c {
                        for di in -1..=1isize {
                            for dj in -1..=1isize {
                                let v = if i + di < 0
                                    || j + dj < 0
                                    || i + di >= h as isize
                                    || j + dj >= w as isize
                                {
                                    0.0
                                } else {
                                    x.get((i + di) as usize, (j + dj) as usize, ci)
                                };
                                s += p.fused_conv[((o * c + ci) * 3 + (di + 1) as usize) * 3
                                    + (dj + 1) as usize]
                                    * v;
                            }
                        }
                    }
                    ex[(i as usize * w + j as usize) * ce + o] = s.max(0.0);
                }
            }
        }
        let mut pooled = vec![0.0; ce];
        for idx in 0..h * w {
            for o in 0..ce {
                pooled[o] += ex[idx * ce + o];
            }
        }
        for v in &mut pooled {
            *v /= (h * w) as f64;
        }
        let mut bott = vec![0.0; cs];
        for u in 0..cs {
            let mut s = 0.0;
            for o in 0..ce {
                s += p.se_reduce[u * ce + o] * pooled[o];
            }
            bott[u] = s.max(0.0);
        }
        let mut gate = vec![0.0; ce];
        for o in 0..ce {
            let mut s = 0.0;
            for u in 0..cs {
                s += p.se_expand[o * cs + u] * bott[u];
            }
            gate[o] = 1.0 / (1.0 + (-s).exp());
        }
        let mut out = vec![0.0; h * w * c];
        for idx in 0..h * w {
            for o in 0..c {
                let mut s = 0.0;
                for e in 0..ce {
                    s += p.project[o * ce + e] * ex[idx * ce + e] * gate[e];
                }
                out[idx * c + o] = x.data().as_slice().unwrap()[idx * c + o] + s;
            }
        }
        out
    }

    #[test]
    fn fused_matches_independent_oracle() {
        let p = ConvBlockParams::seeded(2, 2, 2, 43).unwrap();
        let x = FeatureMap::seeded(4, 4, 2, 44).unwrap();
        let got = fused_mbconv(&x, &p).unwrap();
        let want = fused_oracle(&x, &p);
        for i in 0..4 {
            for j in 0..4 {
                for o in 0..2 {
                    let g = got.get(i, j, o);
                    let w_ = want[(i * 4 + j) * 2 + o];
                    assert!((g - w_).abs() < 1e-12, "({i},{j},{o}): {g} vs {w_}");
                }
            }
        }
    }
}
