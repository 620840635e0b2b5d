//! Dense, window (block), and grid self-attention plus the multiply
//! accumulate counter for the dense vs multi-axis cost comparison.
//!
//! All three variants share one token-list core: multi-head softmax
//! attention `softmax(Q K^T / sqrt(C/h)) V` followed by the output
//! projection. Block attention runs the core inside each non-overlapping
//! `P x P` window; grid attention runs it on each set of tokens sharing
//! residues modulo `(H/G, W/G)` — the strided, dilated global form.

use ndarray::{s, Array2, Array3};

use super::{AttentionParams, FeatureMap};
use crate::error::{Error, Result};

/// Token-list attention core. Returns the projected output and, for
/// invariant checks, the per-head attention matrices.
pub(crate) fn attend_with_probs(
    tokens: &Array2<f64>,
    p: &AttentionParams,
) -> (Array2<f64>, Vec<Array2<f64>>) {
    let n = tokens.nrows();
    let c = p.channels();
    let d = c / p.heads();
    let scale = 1.0 / (d as f64).sqrt();

    let q = tokens.dot(&p.wq);
    let k = tokens.dot(&p.wk);
    let v = tokens.dot(&p.wv);

    let mut concat = Array2::zeros((n, c));
    let mut probs = Vec::with_capacity(p.heads());
    for head in 0..p.heads() {
        let cols = s![.., head * d..(head + 1) * d];
        let qh = q.slice(cols);
        let kh = k.slice(cols);
        let vh = v.slice(cols);

        let mut scores = qh.dot(&kh.t());
        scores.mapv_inplace(|x| x * scale);
        for mut row in scores.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.mapv_inplace(|x| (x - max).exp());
            let sum = row.sum();
            row.mapv_inplace(|x| x / sum);
        }
        concat.slice_mut(cols).assign(&scores.dot(&vh));
        probs.push(scores);
    }
    (concat.dot(&p.wo), probs)
}

fn to_tokens(x: &FeatureMap) -> Array2<f64> {
    let (h, w, c) = (x.height(), x.width(), x.channels());
    x.data()
        .view()
        .into_shape_with_order((h * w, c))
        .expect("feature map is contiguous")
        .to_owned()
}

fn from_tokens(tokens: Array2<f64>, h: usize, w: usize, c: usize) -> FeatureMap {
    let data = tokens
        .into_shape_with_order((h, w, c))
        .expect("token count matches grid");
    FeatureMap { data }
}

fn check_channels(x: &FeatureMap, p: &AttentionParams) -> Result<()> {
    if x.channels() != p.channels() {
        return Err(Error::Mismatch(format!(
            "feature map has {} channels, params expect {}",
            x.channels(),
            p.channels()
        )));
    }
    Ok(())
}

/// Full multi-head self-attention over all `H*W` tokens.
pub fn dense_attention(x: &FeatureMap, p: &AttentionParams) -> Result<FeatureMap> {
    Ok(dense_attention_with_probs(x, p)?.0)
}

/// As [`dense_attention`], additionally returning the per-head attention
/// matrices (each row a softmax distribution over tokens) for invariant
/// checks.
pub fn dense_attention_with_probs(
    x: &FeatureMap,
    p: &AttentionParams,
) -> Result<(FeatureMap, Vec<Array2<f64>>)> {
    check_channels(x, p)?;
    let (out, probs) = attend_with_probs(&to_tokens(x), p);
    Ok((from_tokens(out, x.height(), x.width(), x.channels()), probs))
}

/// Attention restricted to non-overlapping `P x P` windows.
pub fn block_attention(x: &FeatureMap, p: &AttentionParams) -> Result<FeatureMap> {
    check_channels(x, p)?;
    let win = p.window();
    let (h, w, c) = (x.height(), x.width(), x.channels());
    if h % win != 0 || w % win != 0 {
        return Err(Error::Param(format!(
            "window {win} must divide height {h} and width {w}"
        )));
    }

    let mut data = Array3::zeros((h, w, c));
    for bi in 0..h / win {
        for bj in 0..w / win {
            let mut tokens = Array2::zeros((win * win, c));
            for i in 0..win {
                for j in 0..win {
                    for ch in 0..c {
                        tokens[[i * win + j, ch]] = x.get(bi * win + i, bj * win + j, ch);
                    }
                }
            }
            let (out, _) = attend_with_probs(&tokens, p);
            for i in 0..win {
                for j in 0..win {
                    for ch in 0..c {
                        data[[bi * win + i, bj * win + j, ch]] = out[[i * win + j, ch]];
                    }
                }
            }
        }
    }
    FeatureMap::new(data)
}

/// Attention among tokens sharing residue classes modulo `(H/G, W/G)`:
/// each of the `(H/G) * (W/G)` groups holds `G * G` tokens spread across
/// the whole map.
pub fn grid_attention(x: &FeatureMap, p: &AttentionParams) -> Result<FeatureMap> {
    check_channels(x, p)?;
    let g = p.grid();
    let (h, w, c) = (x.height(), x.width(), x.channels());
    if h % g != 0 || w % g != 0 {
        return Err(Error::Param(format!(
            "grid {g} must divide height {h} and width {w}"
        )));
    }
    let (sh, sw) = (h / g, w / g);

    let mut data = Array3::zeros((h, w, c));
    for i0 in 0..sh {
        for j0 in 0..sw {
            let mut tokens = Array2::zeros((g * g, c));
            for a in 0..g {
                for b in 0..g {
                    for ch in 0..c {
                        tokens[[a * g + b, ch]] = x.get(i0 + a * sh, j0 + b * sw, ch);
                    }
                }
            }
            let (out, _) = attend_with_probs(&tokens, p);
            for a in 0..g {
                for b in 0..g {
                    for ch in 0..c {
                        data[[i0 + a * sh, j0 + b * sw, ch]] = out[[a * g + b, ch]];
                    }
                }
            }
        }
    }
    FeatureMap::new(data)
}

/// Window attention followed by grid attention (local, then dilated
/// global), with shared projection weights.
pub fn max_sa(x: &FeatureMap, p: &AttentionParams) -> Result<FeatureMap> {
    grid_attention(&block_attention(x, p)?, p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionVariant {
    Dense,
    MaxSa,
}

/// Multiply-accumulates in the score/value stages (`Q K^T` and `A V`),
/// projections excluded: dense costs `2 (HW)^2 C`, the multi-axis pair
/// costs `2 HW P^2 C + 2 HW G^2 C` — linear in token count at fixed
/// partition sizes. The count is independent of the head split.
pub fn attention_op_count(
    height: usize,
    width: usize,
    channels: usize,
    _heads: usize,
    variant: AttentionVariant,
    window: usize,
    grid: usize,
) -> Result<u128> {
    let hw = (height * width) as u128;
    let c = channels as u128;
    match variant {
        AttentionVariant::Dense => Ok(2 * hw * hw * c),
        AttentionVariant::MaxSa => {
            if window == 0
                || grid == 0
                || !height.is_multiple_of(window)
                || !width.is_multiple_of(window)
                || !height.is_multiple_of(grid)
                || !width.is_multiple_of(grid)
            {
                return Err(Error::Param(format!(
                    "window {window} and grid {grid} must divide {height}x{width}"
                )));
            }
            let p2 = (window * window) as u128;
            let g2 = (grid * grid) as u128;
            Ok(2 * hw * p2 * c + 2 * hw * g2 * c)
        }
    }
}
