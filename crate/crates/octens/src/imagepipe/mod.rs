//! Grayscale OCT slice preprocessing and augmentation.
//!
//! The noise-reduction step is a plain linear transform on pixel values
//! (contrast gain, brightness offset). Augmentations: random crop,
//! horizontal flip, gaussian blur, random perspective/affine warps, and
//! background blackening via border-connected thresholding.
//!
//! Conventions used throughout: intensities quantize by rounding half away
//! from zero and clamp to `[0,255]`; warps resample bilinearly and fill
//! out-of-source pixels with 0; every randomized operation draws from an
//! explicit caller-owned generator, so results are pure functions of
//! (input, parameters, seed).

mod warp;

pub use warp::{random_affine, random_perspective, warp_affine, warp_perspective};

use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Generator type used by every randomized image operation. One 64-bit
/// seed per augmentation stream; never shared across concurrent calls.
pub type AugmentRng = ChaCha8Rng;

/// 2-D 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageGray {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl ImageGray {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Param("image dimensions must be >= 1".into()));
        }
        if pixels.len() != (width as usize) * (height as usize) {
            return Err(Error::Param(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Result<Self> {
        Self::new(
            width,
            height,
            vec![value; (width as usize) * (height as usize)],
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y as usize) * (self.width as usize) + x as usize]
    }

    #[inline]
    fn set(&mut self, x: u32, y: u32, v: u8) {
        self.pixels[(y as usize) * (self.width as usize) + x as usize] = v;
    }
}

/// Contrast gain (`alpha > 0`) and brightness offset for the
/// noise-reduction transform.
#[derive(Debug, Clone, Copy)]
pub struct LinearTransformParams {
    pub alpha: f64,
    pub beta: f64,
}

impl LinearTransformParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(Error::Param(format!("alpha {alpha} must be > 0")));
        }
        if !beta.is_finite() {
            return Err(Error::Param("beta must be finite".into()));
        }
        Ok(Self { alpha, beta })
    }
}

/// Intensity quantization used everywhere: round half away from zero,
/// clamp to the 8-bit range.
#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// `out = clamp(round(alpha * p + beta))` per pixel. Contrast is applied
/// before the brightness offset.
pub fn linear_transform(img: &ImageGray, params: &LinearTransformParams) -> Result<ImageGray> {
    LinearTransformParams::new(params.alpha, params.beta)?;
    let pixels = img
        .pixels
        .iter()
        .map(|p| quantize(params.alpha * f64::from(*p) + params.beta))
        .collect();
    ImageGray::new(img.width, img.height, pixels)
}

/// Zeroes the border-connected background: every pixel reachable from the
/// image border through 4-connected neighbors of intensity `>= threshold`
/// is set to 0. Bright regions not connected to the border are untouched.
pub fn blacken_background(img: &ImageGray, threshold: u8) -> ImageGray {
    let (w, h) = (img.width as usize, img.height as usize);
    let mut background = vec![false; w * h];
    let mut queue = VecDeque::new();

    let try_seed =
        |x: usize, y: usize, background: &mut Vec<bool>, queue: &mut VecDeque<(usize, usize)>| {
            let idx = y * w + x;
            if !background[idx] && img.pixels[idx] >= threshold {
                background[idx] = true;
                queue.push_back((x, y));
            }
        };
    for x in 0..w {
        try_seed(x, 0, &mut background, &mut queue);
        try_seed(x, h - 1, &mut background, &mut queue);
    }
    for y in 0..h {
        try_seed(0, y, &mut background, &mut queue);
        try_seed(w - 1, y, &mut background, &mut queue);
    }

    while let Some((x, y)) = queue.pop_front() {
        let neighbors = [
            (x.wrapping_sub(1), y),
            (x + 1, y),
            (x, y.wrapping_sub(1)),
            (x, y + 1),
        ];
        for (nx, ny) in neighbors {
            if nx < w && ny < h {
                let idx = ny * w + nx;
                if !background[idx] && img.pixels[idx] >= threshold {
                    background[idx] = true;
                    queue.push_back((nx, ny));
                }
            }
        }
    }

    let pixels = img
        .pixels
        .iter()
        .zip(&background)
        .map(|(p, bg)| if *bg { 0 } else { *p })
        .collect();
    ImageGray {
        width: img.width,
        height: img.height,
        pixels,
    }
}

fn round_dim(v: f64) -> u32 {
    (v.round() as u32).max(1)
}

/// Contiguous sub-rectangle of `round(fraction * dim)` per side, placed
/// uniformly among all valid offsets (x drawn before y).
pub fn random_crop(img: &ImageGray, crop_fraction: f64, rng: &mut AugmentRng) -> Result<ImageGray> {
    if !(crop_fraction > 0.0 && crop_fraction <= 1.0) {
        return Err(Error::Param(format!(
            "crop_fraction {crop_fraction} outside (0,1]"
        )));
    }
    let cw = round_dim(crop_fraction * f64::from(img.width)).min(img.width);
    let ch = round_dim(crop_fraction * f64::from(img.height)).min(img.height);
    let x0 = rng.gen_range(0..=(img.width - cw));
    let y0 = rng.gen_range(0..=(img.height - ch));

    let mut pixels = Vec::with_capacity((cw as usize) * (ch as usize));
    for y in y0..y0 + ch {
        let row = (y as usize) * (img.width as usize);
        pixels.extend_from_slice(&img.pixels[row + x0 as usize..row + (x0 + cw) as usize]);
    }
    ImageGray::new(cw, ch, pixels)
}

/// `out(x, y) = in(width - 1 - x, y)`.
pub fn horizontal_flip(img: &ImageGray) -> ImageGray {
    let mut out = img.clone();
    for y in 0..img.height {
        for x in 0..img.width {
            out.set(x, y, img.get(img.width - 1 - x, y));
        }
    }
    out
}

/// Reflects an out-of-range index back into `[0, n)` (symmetric padding,
/// edge pixel repeated: -1 -> 0, n -> n-1).
fn reflect_index(mut i: i64, n: i64) -> usize {
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Separable convolution with a normalized 1-D gaussian of radius
/// `ceil(3*sigma)` and reflected borders; both passes run in f64 and the
/// result is quantized once. `sigma == 0` returns the input unchanged.
pub fn gaussian_blur(img: &ImageGray, sigma: f64) -> Result<ImageGray> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::Param(format!("sigma {sigma} must be >= 0")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let radius = (kernel.len() / 2) as i64;
    let (w, h) = (img.width as i64, img.height as i64);

    let mut horizontal = vec![0.0f64; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, k) in kernel.iter().enumerate() {
                let sx = reflect_index(x + t as i64 - radius, w);
                acc += k * f64::from(img.pixels[(y * w) as usize + sx]);
            }
            horizontal[(y * w + x) as usize] = acc;
        }
    }

    let mut pixels = vec![0u8; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (t, k) in kernel.iter().enumerate() {
                let sy = reflect_index(y + t as i64 - radius, h);
                acc += k * horizontal[sy * w as usize + x as usize];
            }
            pixels[(y * w + x) as usize] = quantize(acc);
        }
    }
    ImageGray::new(img.width, img.height, pixels)
}

pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= sum;
    }
    kernel
}

// ---------------------------------------------------------------------------
// Augmentation spec
// ---------------------------------------------------------------------------

/// Knobs for the augmentation stack. Parsed from a flat `key = value`
/// config file whose keys match the field names; range fields take a
/// `low,high` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentSpec {
    pub crop_fraction: f64,
    pub hflip_probability: f64,
    pub blur_sigma_range: (f64, f64),
    pub perspective_distortion: f64,
    pub affine_max_rotation: f64,
    pub affine_max_translate_fraction: f64,
    pub affine_scale_range: (f64, f64),
    pub background_threshold: u8,
    pub seed: u64,
}

impl AugmentSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Param(msg.to_string()))
            }
        };
        check(
            self.crop_fraction > 0.0 && self.crop_fraction <= 1.0,
            "crop_fraction outside (0,1]",
        )?;
        check(
            (0.0..=1.0).contains(&self.hflip_probability),
            "hflip_probability outside [0,1]",
        )?;
        check(
            self.blur_sigma_range.0 >= 0.0 && self.blur_sigma_range.0 <= self.blur_sigma_range.1,
            "blur_sigma_range must satisfy 0 <= low <= high",
        )?;
        check(
            (0.0..=0.5).contains(&self.perspective_distortion),
            "perspective_distortion outside [0,0.5]",
        )?;
        check(
            (0.0..=45.0).contains(&self.affine_max_rotation),
            "affine_max_rotation outside [0,45]",
        )?;
        check(
            (0.0..=0.3).contains(&self.affine_max_translate_fraction),
            "affine_max_translate_fraction outside [0,0.3]",
        )?;
        check(
            self.affine_scale_range.0 > 0.0
                && self.affine_scale_range.0 <= self.affine_scale_range.1,
            "affine_scale_range must satisfy 0 < low <= high",
        )?;
        Ok(())
    }

    /// Parses the flat config format. Every field must appear exactly once;
    /// `#` starts a comment.
    pub fn parse(file: &str, text: &str) -> Result<Self> {
        let mut fields: std::collections::HashMap<&str, (usize, String)> = Default::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format(
                    file,
                    i + 1,
                    format!("expected `key = value`, found `{line}`"),
                )
            })?;
            let key = key.trim();
            let value = value.trim().to_string();
            if fields.insert(key, (i + 1, value)).is_some() {
                return Err(Error::format(file, i + 1, format!("duplicate key `{key}`")));
            }
        }

        const KEYS: [&str; 9] = [
            "crop_fraction",
            "hflip_probability",
            "blur_sigma_range",
            "perspective_distortion",
            "affine_max_rotation",
            "affine_max_translate_fraction",
            "affine_scale_range",
            "background_threshold",
            "seed",
        ];
        for key in KEYS {
            if !fields.contains_key(key) {
                return Err(Error::format(file, 1, format!("missing key `{key}`")));
            }
        }
        for key in fields.keys() {
            if !KEYS.contains(key) {
                let line = fields[key].0;
                return Err(Error::format(file, line, format!("unknown key `{key}`")));
            }
        }

        let scalar = |key: &str| -> Result<f64> {
            let (line, v) = &fields[key];
            v.parse()
                .map_err(|_| Error::format(file, *line, format!("{key}: `{v}` is not a number")))
        };
        let pair = |key: &str| -> Result<(f64, f64)> {
            let (line, v) = &fields[key];
            let bad = || {
                Error::format(
                    file,
                    *line,
                    format!("{key}: expected `low,high`, found `{v}`"),
                )
            };
            let (a, b) = v.split_once(',').ok_or_else(bad)?;
            Ok((
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            ))
        };

        let spec = AugmentSpec {
            crop_fraction: scalar("crop_fraction")?,
            hflip_probability: scalar("hflip_probability")?,
            blur_sigma_range: pair("blur_sigma_range")?,
            perspective_distortion: scalar("perspective_distortion")?,
            affine_max_rotation: scalar("affine_max_rotation")?,
            affine_max_translate_fraction: scalar("affine_max_translate_fraction")?,
            affine_scale_range: pair("affine_scale_range")?,
            background_threshold: {
                let (line, v) = &fields["background_threshold"];
                v.parse().map_err(|_| {
                    Error::format(
                        file,
                        *line,
                        format!("background_threshold: `{v}` is not an integer in [0,255]"),
                    )
                })?
            },
            seed: {
                let (line, v) = &fields["seed"];
                v.parse().map_err(|_| {
                    Error::format(file, *line, format!("seed: `{v}` is not a 64-bit integer"))
                })?
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "crop_fraction = {}\nhflip_probability = {}\nblur_sigma_range = {},{}\n\
             perspective_distortion = {}\naffine_max_rotation = {}\n\
             affine_max_translate_fraction = {}\naffine_scale_range = {},{}\n\
             background_threshold = {}\nseed = {}\n",
            self.crop_fraction,
            self.hflip_probability,
            self.blur_sigma_range.0,
            self.blur_sigma_range.1,
            self.perspective_distortion,
            self.affine_max_rotation,
            self.affine_max_translate_fraction,
            self.affine_scale_range.0,
            self.affine_scale_range.1,
            self.background_threshold,
            self.seed,
        )
    }
}

/// Applies the whole augmentation stack in a fixed order: crop, flip (with
/// the configured probability), blur (sigma drawn from its range),
/// perspective, affine, background blackening. Draw order matches the
/// application order.
pub fn augment_image(
    img: &ImageGray,
    spec: &AugmentSpec,
    rng: &mut AugmentRng,
) -> Result<ImageGray> {
    spec.validate()?;
    let mut out = random_crop(img, spec.crop_fraction, rng)?;
    if rng.gen::<f64>() < spec.hflip_probability {
        out = horizontal_flip(&out);
    }
    let sigma = rng.gen_range(spec.blur_sigma_range.0..=spec.blur_sigma_range.1);
    out = gaussian_blur(&out, sigma)?;
    out = random_perspective(&out, spec.perspective_distortion, rng)?;
    out = random_affine(&out, spec, rng)?;
    Ok(blacken_background(&out, spec.background_threshold))
}

// ---------------------------------------------------------------------------
// PNG I/O
// ---------------------------------------------------------------------------

/// Loads an 8-bit single-channel PNG (other layouts are converted to
/// 8-bit grayscale).
pub fn read_image_gray(path: impl AsRef<Path>) -> Result<ImageGray> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let gray = img.into_luma8();
    ImageGray::new(gray.width(), gray.height(), gray.into_raw())
}

pub fn write_image_gray(path: impl AsRef<Path>, img: &ImageGray) -> Result<()> {
    let path = path.as_ref();
    let buf = image::GrayImage::from_raw(img.width, img.height, img.pixels.clone())
        .expect("dimensions validated at construction");
    buf.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> AugmentRng {
        AugmentRng::seed_from_u64(seed)
    }

    fn random_image(r: &mut AugmentRng, w: u32, h: u32) -> ImageGray {
        let pixels = (0..(w as usize) * (h as usize)).map(|_| r.gen()).collect();
        ImageGray::new(w, h, pixels).unwrap()
    }

    #[test]
    fn linear_identity_and_shift() {
        let img = ImageGray::new(2, 1, vec![100, 200]).unwrap();
        let id = linear_transform(&img, &LinearTransformParams::new(1.0, 0.0).unwrap()).unwrap();
        assert_eq!(id, img);

        let out = linear_transform(&img, &LinearTransformParams::new(1.2, -10.0).unwrap()).unwrap();
        assert_eq!(out.pixels()[0], 110); // 1.2*100 - 10
    }

    #[test]
    fn linear_clamps_at_both_ends() {
        let img = ImageGray::new(2, 1, vec![250, 5]).unwrap();
        let out = linear_transform(&img, &LinearTransformParams::new(1.5, -20.0).unwrap()).unwrap();
        assert_eq!(out.pixels()[0], 255); // 1.5*250 - 20 = 355
        assert_eq!(out.pixels()[1], 0); // 1.5*5 - 20 = -12.5
    }

    #[test]
    fn linear_rejects_bad_alpha() {
        assert!(LinearTransformParams::new(0.0, 0.0).is_err());
        assert!(LinearTransformParams::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn linear_is_monotone_in_pixel_value() {
        let params = LinearTransformParams::new(1.7, -33.0).unwrap();
        let img = ImageGray::new(256, 1, (0..=255).collect()).unwrap();
        let out = linear_transform(&img, &params).unwrap();
        for w in out.pixels().windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn blacken_leaves_dark_images_alone() {
        let img = ImageGray::filled(8, 8, 0).unwrap();
        assert_eq!(blacken_background(&img, 240), img);
    }

    #[test]
    fn blacken_clears_all_white_image() {
        let img = ImageGray::filled(8, 8, 255).unwrap();
        let out = blacken_background(&img, 240);
        assert!(out.pixels().iter().all(|p| *p == 0));
    }

    #[test]
    fn blacken_keeps_isolated_bright_center() {
        #[rustfmt::skip]
        let pixels = vec![
            255, 255, 255, 255, 255,
            255,  10,  10,  10, 255,
            255,  10, 255,  10, 255,
            255,  10,  10,  10, 255,
            255, 255, 255, 255, 255,
        ];
        let img = ImageGray::new(5, 5, pixels).unwrap();
        let out = blacken_background(&img, 240);
        #[rustfmt::skip]
        let expected = vec![
            0,  0,   0,  0, 0,
            0, 10,  10, 10, 0,
            0, 10, 255, 10, 0,
            0, 10,  10, 10, 0,
            0,  0,   0,  0, 0,
        ];
        assert_eq!(out.pixels(), expected.as_slice());
    }

    /// Independent oracle: fixpoint label propagation instead of BFS.
    fn blacken_oracle(img: &ImageGray, threshold: u8) -> ImageGray {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let bright: Vec<bool> = img.pixels().iter().map(|p| *p >= threshold).collect();
        let mut bg = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                if (x == 0 || y == 0 || x == w - 1 || y == h - 1) && bright[y * w + x] {
                    bg[y * w + x] = true;
                }
            }
        }
        loop {
            let mut changed = false;
            for y in 0..h {
                for x in 0..w {
                    if bright[y * w + x] && !bg[y * w + x] {
                        let adj = (x > 0 && bg[y * w + x - 1])
                            || (x + 1 < w && bg[y * w + x + 1])
                            || (y > 0 && bg[(y - 1) * w + x])
                            || (y + 1 < h && bg[(y + 1) * w + x]);
                        if adj {
                            bg[y * w + x] = true;
                            changed = true;
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }
        let pixels = img
            .pixels()
            .iter()
            .zip(&bg)
            .map(|(p, b)| if *b { 0 } else { *p })
            .collect();
        ImageGray::new(img.width(), img.height(), pixels).unwrap()
    }

    #[test]
    fn blacken_matches_oracle_and_is_idempotent() {
        let mut r = rng(40);
        for _ in 0..60 {
            let w = r.gen_range(1..16);
            let h = r.gen_range(1..16);
            let img = random_image(&mut r, w, h);
            let threshold = r.gen();
            let once = blacken_background(&img, threshold);
            assert_eq!(once, blacken_oracle(&img, threshold));
            assert_eq!(blacken_background(&once, threshold), once);
            for (a, b) in img.pixels().iter().zip(once.pixels()) {
                assert!(b <= a);
            }
        }
    }

    #[test]
    fn crop_full_fraction_is_identity() {
        let mut r = rng(41);
        let img = random_image(&mut r, 9, 7);
        for seed in 0..5 {
            let out = random_crop(&img, 1.0, &mut rng(seed)).unwrap();
            assert_eq!(out, img);
        }
    }

    #[test]
    fn crop_half_matches_source_subrectangle() {
        // distinct pixel values let the test recover the offset
        let pixels: Vec<u8> = (0..100).collect();
        let img = ImageGray::new(10, 10, pixels).unwrap();
        let out = random_crop(&img, 0.5, &mut rng(7)).unwrap();
        assert_eq!((out.width(), out.height()), (5, 5));
        let first = out.get(0, 0);
        let (x0, y0) = (u32::from(first % 10), u32::from(first / 10));
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(out.get(x, y), img.get(x0 + x, y0 + y));
            }
        }
    }

    #[test]
    fn crop_is_deterministic_per_seed() {
        let mut r = rng(42);
        let img = random_image(&mut r, 20, 14);
        let a = random_crop(&img, 0.3, &mut rng(123)).unwrap();
        let b = random_crop(&img, 0.3, &mut rng(123)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crop_rejects_bad_fraction() {
        let img = ImageGray::filled(4, 4, 0).unwrap();
        assert!(random_crop(&img, 0.0, &mut rng(0)).is_err());
        assert!(random_crop(&img, 1.5, &mut rng(0)).is_err());
    }

    #[test]
    fn flip_is_involution_and_matches_definition() {
        let img = ImageGray::new(2, 1, vec![10, 20]).unwrap();
        assert_eq!(horizontal_flip(&img).pixels(), &[20, 10]);

        let mut r = rng(43);
        let img = random_image(&mut r, 11, 6);
        assert_eq!(horizontal_flip(&horizontal_flip(&img)), img);

        let symmetric = ImageGray::new(3, 2, vec![1, 2, 1, 7, 8, 7]).unwrap();
        assert_eq!(horizontal_flip(&symmetric), symmetric);
    }

    #[test]
    fn blur_zero_sigma_is_identity() {
        let mut r = rng(44);
        let img = random_image(&mut r, 6, 6);
        assert_eq!(gaussian_blur(&img, 0.0).unwrap(), img);
        assert!(gaussian_blur(&img, -1.0).is_err());
    }

    #[test]
    fn blur_preserves_constant_images() {
        let img = ImageGray::filled(9, 5, 137).unwrap();
        for sigma in [0.4, 1.0, 2.5] {
            assert_eq!(gaussian_blur(&img, sigma).unwrap(), img);
        }
    }

    #[test]
    fn blur_impulse_matches_direct_kernel_product() {
        let mut pixels = vec![0u8; 17 * 17];
        pixels[8 * 17 + 8] = 255;
        let img = ImageGray::new(17, 17, pixels).unwrap();
        let out = gaussian_blur(&img, 1.0).unwrap();

        let kernel = gaussian_kernel(1.0);
        let radius = (kernel.len() / 2) as i64;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                let expected =
                    255.0 * kernel[(dx + radius) as usize] * kernel[(dy + radius) as usize];
                let got = out.get((8 + dx) as u32, (8 + dy) as u32);
                assert!(
                    (f64::from(got) - expected).abs() <= 1.0,
                    "offset ({dx},{dy}): got {got}, expected {expected}"
                );
            }
        }
    }

    #[test]
    fn spec_parse_round_trip_and_errors() {
        let spec = AugmentSpec {
            crop_fraction: 0.9,
            hflip_probability: 0.5,
            blur_sigma_range: (0.0, 1.5),
            perspective_distortion: 0.2,
            affine_max_rotation: 10.0,
            affine_max_translate_fraction: 0.1,
            affine_scale_range: (0.9, 1.1),
            background_threshold: 240,
            seed: 42,
        };
        let text = spec.to_config_string();
        assert_eq!(AugmentSpec::parse("t", &text).unwrap(), spec);

        let missing = text.replace("seed = 42\n", "");
        assert!(AugmentSpec::parse("t", &missing).is_err());
        let unknown = format!("{text}extra = 1\n");
        assert!(AugmentSpec::parse("t", &unknown).is_err());
        let bad = text.replace("crop_fraction = 0.9", "crop_fraction = 0");
        assert!(AugmentSpec::parse("t", &bad).is_err());
    }

    #[test]
    fn augment_stack_is_deterministic() {
        let mut r = rng(45);
        let img = random_image(&mut r, 24, 18);
        let spec = AugmentSpec {
            crop_fraction: 0.8,
            hflip_probability: 0.5,
            blur_sigma_range: (0.2, 1.0),
            perspective_distortion: 0.1,
            affine_max_rotation: 15.0,
            affine_max_translate_fraction: 0.1,
            affine_scale_range: (0.9, 1.1),
            background_threshold: 250,
            seed: 0,
        };
        let a = augment_image(&img, &spec, &mut rng(9)).unwrap();
        let b = augment_image(&img, &spec, &mut rng(9)).unwrap();
        assert_eq!(a, b);
    }
}
