//! Level-parameterized geometric augmentation.
//!
//! Level `l` yields `l` augmented copies per original. Each copy rotates by up
//! to ±2l degrees, translates by up to ±5l % of each dimension, scales by up
//! to ±2l % and reflects along the x axis with probability ½, applied in
//! that order about the patch center.

use rand::Rng as _;

use crate::image::GrayImage;
use crate::rng::{self, tag};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AugmentationLevel(pub u32);

impl AugmentationLevel {
    pub const OFF: AugmentationLevel = AugmentationLevel(0);

    pub fn is_off(self) -> bool {
        self.0 == 0
    }

    pub fn max_angle_deg(self) -> f64 {
        2.0 * self.0 as f64
    }

    /// As a fraction of the image dimension.
    pub fn max_shift(self) -> f64 {
        0.05 * self.0 as f64
    }

    pub fn max_scale_delta(self) -> f64 {
        0.02 * self.0 as f64
    }
}

impl std::fmt::Display for AugmentationLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x", self.0)
    }
}

/// One draw of transform parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub angle_deg: f64,
    /// Fractions of width / height.
    pub shift_x: f64,
    pub shift_y: f64,
    pub scale: f64,
    pub flip: bool,
}

impl AugmentParams {
    pub const IDENTITY: AugmentParams = AugmentParams {
        angle_deg: 0.0,
        shift_x: 0.0,
        shift_y: 0.0,
        scale: 1.0,
        flip: false,
    };

    pub fn sample(level: AugmentationLevel, r: &mut rng::Rng) -> Self {
        let sym = |r: &mut rng::Rng, m: f64| if m > 0.0 { r.random_range(-m..=m) } else { 0.0 };
        let angle_deg = sym(r, level.max_angle_deg());
        let shift_x = sym(r, level.max_shift());
        let shift_y = sym(r, level.max_shift());
        let scale = 1.0 + sym(r, level.max_scale_delta());
        let flip = r.random_bool(0.5);
        Self {
            angle_deg,
            shift_x,
            shift_y,
            scale,
            flip,
        }
    }

    /// Warps `img` with bilinear interpolation and edge-replicated borders.
    pub fn apply(&self, img: &GrayImage) -> GrayImage {
        let (w, h) = (img.width(), img.height());
        let cx = (w as f64 - 1.0) / 2.0;
        let cy = (h as f64 - 1.0) / 2.0;
        let (sin, cos) = self.angle_deg.to_radians().sin_cos();
        let tx = self.shift_x * w as f64;
        let ty = self.shift_y * h as f64;
        GrayImage::from_fn(w, h, |x, y| {
            // invert flip, then scale, then translation, then rotation
            let u = x as f64 - cx;
            let mut v = y as f64 - cy;
            if self.flip {
                v = -v;
            }
            let (u, v) = (u / self.scale - tx, v / self.scale - ty);
            let su = cos * u + sin * v;
            let sv = -sin * u + cos * v;
            let val = img.sample_bilinear(su + cx, sv + cy);
            val.round().clamp(0.0, 255.0) as u8
        })
    }
}

/// `level.0` augmented copies of `img`; copy `k` draws from `(seed, k)`.
pub fn augment_one(img: &GrayImage, level: AugmentationLevel, seed: u64) -> Vec<GrayImage> {
    (0..level.0 as u64)
        .map(|k| {
            let mut r = rng::stream(seed, &[tag::AUGMENT, k]);
            AugmentParams::sample(level, &mut r).apply(img)
        })
        .collect()
}

/// Originals followed by all augmented copies; labels travel with their source.
pub fn augment_dataset<L: Clone>(
    patches: &[(GrayImage, L)],
    level: AugmentationLevel,
    seed: u64,
) -> Vec<(GrayImage, L)> {
    let mut out = Vec::with_capacity(patches.len() * (level.0 as usize + 1));
    out.extend(patches.iter().cloned());
    for (i, (img, label)) in patches.iter().enumerate() {
        let item_seed = rng::stream(seed, &[tag::AUGMENT, i as u64]).random::<u64>();
        out.extend(
            augment_one(img, level, item_seed)
                .into_iter()
                .map(|a| (a, label.clone())),
        );
    }
    out
}
