//! Perspective and affine warps with bilinear resampling and zero fill.
//!
//! Both warps build the inverse map (output pixel -> source location); the
//! random variants only draw their parameters and delegate to the
//! deterministic `warp_*` functions, which keeps hand-checked oracles and
//! seeded reproducibility separate concerns.

use rand::Rng;

use super::{quantize, AugmentRng, AugmentSpec, ImageGray};
use crate::error::{Error, Result};

// Samples slightly outside the source rectangle (border rounding residue
// from the homography solve) are clamped in rather than filled.
const EDGE_EPS: f64 = 1e-9;

fn bilinear(img: &ImageGray, u: f64, v: f64) -> f64 {
    let max_x = f64::from(img.width() - 1);
    let max_y = f64::from(img.height() - 1);
    if u < -EDGE_EPS || v < -EDGE_EPS || u > max_x + EDGE_EPS || v > max_y + EDGE_EPS {
        return 0.0;
    }
    let u = u.clamp(0.0, max_x);
    let v = v.clamp(0.0, max_y);
    let x0 = u.floor() as u32;
    let y0 = v.floor() as u32;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let fx = u - f64::from(x0);
    let fy = v - f64::from(y0);
    let p00 = f64::from(img.get(x0, y0));
    let p10 = f64::from(img.get(x1, y0));
    let p01 = f64::from(img.get(x0, y1));
    let p11 = f64::from(img.get(x1, y1));
    (1.0 - fy) * ((1.0 - fx) * p00 + fx * p10) + fy * ((1.0 - fx) * p01 + fx * p11)
}

/// Solves `A x = b` for an 8x8 system by Gaussian elimination with partial
/// pivoting. Returns `None` when the system is singular.
#[allow(clippy::needless_range_loop)]
fn solve8(mut a: [[f64; 8]; 8], mut b: [f64; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let pivot = (col..8).max_by(|i, j| a[*i][col].abs().total_cmp(&a[*j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..8 {
            let f = a[row][col] / a[col][col];
            for k in col..8 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 8];
    for col in (0..8).rev() {
        let mut acc = b[col];
        for k in col + 1..8 {
            acc -= a[col][k] * x[k];
        }
        x[col] = acc / a[col][col];
    }
    Some(x)
}

/// Homography coefficients mapping each `from[i]` onto `to[i]`:
/// `u = (h0 x + h1 y + h2) / (h6 x + h7 y + 1)`, `v` analogous.
fn homography(from: &[[f64; 2]; 4], to: &[[f64; 2]; 4]) -> Option<[f64; 8]> {
    let mut a = [[0.0; 8]; 8];
    let mut b = [0.0; 8];
    for i in 0..4 {
        let [x, y] = from[i];
        let [u, v] = to[i];
        a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y];
        b[2 * i] = u;
        a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y];
        b[2 * i + 1] = v;
    }
    solve8(a, b)
}

/// Warps so that the four output corners (top-left, top-right,
/// bottom-right, bottom-left) sample from `source_corners`. Output keeps
/// the input dimensions; out-of-source pixels become 0.
pub fn warp_perspective(img: &ImageGray, source_corners: &[[f64; 2]; 4]) -> Result<ImageGray> {
    let w = f64::from(img.width() - 1);
    let h = f64::from(img.height() - 1);
    let out_corners = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
    let hm = homography(&out_corners, source_corners)
        .ok_or_else(|| Error::Param("degenerate perspective corners".into()))?;

    let mut pixels = Vec::with_capacity(img.pixels().len());
    for y in 0..img.height() {
        for x in 0..img.width() {
            let (xf, yf) = (f64::from(x), f64::from(y));
            let denom = hm[6] * xf + hm[7] * yf + 1.0;
            let u = (hm[0] * xf + hm[1] * yf + hm[2]) / denom;
            let v = (hm[3] * xf + hm[4] * yf + hm[5]) / denom;
            pixels.push(quantize(bilinear(img, u, v)));
        }
    }
    ImageGray::new(img.width(), img.height(), pixels)
}

/// Rotation (degrees, counterclockwise about the image center), then
/// translation, with isotropic scaling. Inverse-mapped and bilinearly
/// resampled; out-of-source pixels become 0.
pub fn warp_affine(
    img: &ImageGray,
    rotation_deg: f64,
    translate: (f64, f64),
    scale: f64,
) -> Result<ImageGray> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::Param(format!("scale {scale} must be > 0")));
    }
    let theta = rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = f64::from(img.width() - 1) / 2.0;
    let cy = f64::from(img.height() - 1) / 2.0;

    let mut pixels = Vec::with_capacity(img.pixels().len());
    for y in 0..img.height() {
        for x in 0..img.width() {
            // invert out = R(theta) * s * (src - c) + c + t
            let dx = f64::from(x) - cx - translate.0;
            let dy = f64::from(y) - cy - translate.1;
            let u = cx + (cos * dx + sin * dy) / scale;
            let v = cy + (-sin * dx + cos * dy) / scale;
            pixels.push(quantize(bilinear(img, u, v)));
        }
    }
    ImageGray::new(img.width(), img.height(), pixels)
}

/// Displaces each corner independently by up to `distortion * width`
/// horizontally and `distortion * height` vertically (corner order
/// top-left, top-right, bottom-right, bottom-left; dx drawn before dy).
pub fn random_perspective(
    img: &ImageGray,
    distortion: f64,
    rng: &mut AugmentRng,
) -> Result<ImageGray> {
    if !(0.0..=0.5).contains(&distortion) {
        return Err(Error::Param(format!(
            "distortion {distortion} outside [0,0.5]"
        )));
    }
    let w = f64::from(img.width() - 1);
    let h = f64::from(img.height() - 1);
    let (mx, my) = (
        distortion * f64::from(img.width()),
        distortion * f64::from(img.height()),
    );
    let mut corners = [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]];
    for corner in &mut corners {
        corner[0] += rng.gen_range(-mx..=mx);
        corner[1] += rng.gen_range(-my..=my);
    }
    warp_perspective(img, &corners)
}

/// Draws rotation, x/y translation, and scale uniformly from the spec
/// ranges (in that order) and applies [`warp_affine`].
pub fn random_affine(
    img: &ImageGray,
    spec: &AugmentSpec,
    rng: &mut AugmentRng,
) -> Result<ImageGray> {
    spec.validate()?;
    let rot = rng.gen_range(-spec.affine_max_rotation..=spec.affine_max_rotation);
    let mt = spec.affine_max_translate_fraction;
    let tx = rng.gen_range(-mt * f64::from(img.width())..=mt * f64::from(img.width()));
    let ty = rng.gen_range(-mt * f64::from(img.height())..=mt * f64::from(img.height()));
    let scale = rng.gen_range(spec.affine_scale_range.0..=spec.affine_scale_range.1);
    warp_affine(img, rot, (tx, ty), scale)
}
