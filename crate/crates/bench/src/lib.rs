//! Shared inputs for the kernel benchmarks.

use shcnn::synthwafer::{generate_wafer, WaferLayout};
use shcnn::GrayImage;

/// A noise-free-layout wafer with default intensities.
pub fn wafer(chips: usize, pitch: usize) -> GrayImage {
    let layout = WaferLayout::centered(chips, chips, pitch, pitch / 5 & !1, pitch as f64 * chips as f64 * 0.45);
    generate_wafer(&layout, &[], 1).expect("valid layout").0
}

/// Deterministic pseudo-random image.
pub fn noise_image(width: usize, height: usize, seed: u32) -> GrayImage {
    let mut s = seed.wrapping_mul(2_654_435_761).max(1);
    GrayImage::from_fn(width, height, |_, _| {
        s ^= s << 13;
        s ^= s >> 17;
        s ^= s << 5;
        (s >> 24) as u8
    })
}
