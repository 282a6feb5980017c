//! Image augmentations: rotation positives, random coloring (OOD-color),
//! and random crop-resize (OOD-crop). Each has a deterministic core taking
//! explicit parameters and a seeded wrapper drawing them.

use rand::Rng;

use crate::data::Image;
use crate::error::{Error, Result};
use crate::seeding::rng_for;

/// Rotation positives draw angles from plus or minus this many degrees.
pub const DEFAULT_MAX_ROTATION_DEGREES: f64 = 30.0;

/// Crop side fractions are drawn uniformly from this range.
pub const CROP_FRACTION_RANGE: (f64, f64) = (0.25, 1.0);

fn require_square(img: &Image, what: &str) -> Result<()> {
    if img.height() != img.width() {
        return Err(Error::InvalidConfig(format!(
            "{what} expects a square image, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

/// Bilinear sample with zero fill outside the frame.
fn sample_zero_fill(img: &Image, y: f64, x: f64, c: usize) -> f64 {
    let h = img.height() as isize;
    let w = img.width() as isize;
    let y0 = y.floor();
    let x0 = x.floor();
    let fy = y - y0;
    let fx = x - x0;
    let (iy, ix) = (y0 as isize, x0 as isize);
    let mut acc = 0.0;
    for (dy, wy) in [(0isize, 1.0 - fy), (1isize, fy)] {
        if wy == 0.0 {
            continue;
        }
        for (dx, wx) in [(0isize, 1.0 - fx), (1isize, fx)] {
            if wx == 0.0 {
                continue;
            }
            let (sy, sx) = (iy + dy, ix + dx);
            if sy >= 0 && sy < h && sx >= 0 && sx < w {
                acc += wy * wx * img.get(sy as usize, sx as usize, c);
            }
        }
    }
    acc
}

/// Bilinear sample clamped to the window `[y_lo, y_hi] x [x_lo, x_hi]`
/// (edge-replicating resize semantics).
fn sample_clamped(img: &Image, y: f64, x: f64, c: usize, lo_y: usize, hi_y: usize, lo_x: usize, hi_x: usize) -> f64 {
    let yc = y.clamp(lo_y as f64, hi_y as f64);
    let xc = x.clamp(lo_x as f64, hi_x as f64);
    let y0 = yc.floor().min(hi_y as f64 - 1.0).max(lo_y as f64);
    let x0 = xc.floor().min(hi_x as f64 - 1.0).max(lo_x as f64);
    let fy = yc - y0;
    let fx = xc - x0;
    let (iy, ix) = (y0 as usize, x0 as usize);
    let iy1 = (iy + 1).min(hi_y);
    let ix1 = (ix + 1).min(hi_x);
    (1.0 - fy) * (1.0 - fx) * img.get(iy, ix, c)
        + (1.0 - fy) * fx * img.get(iy, ix1, c)
        + fy * (1.0 - fx) * img.get(iy1, ix, c)
        + fy * fx * img.get(iy1, ix1, c)
}

/// Rotates a square image by `degrees` about its center, bilinear, with
/// out-of-frame pixels black. A zero angle is the exact identity.
pub fn rotate(img: &Image, degrees: f64) -> Result<Image> {
    require_square(img, "rotate")?;
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let n = img.height();
    let center = (n as f64 - 1.0) / 2.0;
    let mut pixels = vec![0.0; img.pixels().len()];
    for y in 0..n {
        for x in 0..n {
            // Inverse rotation: where in the source does this output pixel
            // come from.
            let dy = y as f64 - center;
            let dx = x as f64 - center;
            let src_y = center + cos * dy - sin * dx;
            let src_x = center + sin * dy + cos * dx;
            for c in 0..img.channels() {
                pixels[(y * n + x) * img.channels() + c] =
                    sample_zero_fill(img, src_y, src_x, c);
            }
        }
    }
    Image::new(n, n, img.channels(), pixels)
}

/// Rotation by a seeded angle drawn from `[-max_degrees, max_degrees]`.
pub fn random_rotation_within(img: &Image, max_degrees: f64, seed: u64) -> Result<Image> {
    if !(0.0..=180.0).contains(&max_degrees) || max_degrees == 0.0 {
        return Err(Error::InvalidConfig(format!(
            "max rotation must be in (0, 180] degrees, got {max_degrees}"
        )));
    }
    let mut rng = rng_for(seed, "rotation-angle", 0);
    let angle = rng.random_range(-max_degrees..=max_degrees);
    rotate(img, angle)
}

/// Rotation by a seeded angle from the default plus or minus 30 degrees.
pub fn random_rotation(img: &Image, seed: u64) -> Result<Image> {
    random_rotation_within(img, DEFAULT_MAX_ROTATION_DEGREES, seed)
}

/// Multiplies the channels elementwise by `color`. Channel values must lie
/// in `[0, 1]`.
pub fn colorize(img: &Image, color: &[f64; 3]) -> Result<Image> {
    if img.channels() != 3 {
        return Err(Error::InvalidConfig(format!(
            "colorize expects 3 channels, got {}",
            img.channels()
        )));
    }
    if color.iter().any(|&c| !(0.0..=1.0).contains(&c)) {
        return Err(Error::InvalidConfig(format!(
            "color components must be in [0, 1], got {color:?}"
        )));
    }
    let pixels = img
        .pixels()
        .iter()
        .enumerate()
        .map(|(i, &p)| p * color[i % 3])
        .collect();
    Image::new(img.height(), img.width(), 3, pixels)
}

/// Random color with `max(c) = 1`: three uniform draws rescaled by their
/// maximum, so intensity is preserved in at least one channel and black
/// stays black.
pub fn random_color(seed: u64) -> [f64; 3] {
    let mut rng = rng_for(seed, "color", 0);
    let raw = [
        rng.random_range(0.0..=1.0f64),
        rng.random_range(0.0..=1.0f64),
        rng.random_range(0.0..=1.0f64),
    ];
    let max = raw[0].max(raw[1]).max(raw[2]);
    if max == 0.0 {
        return [1.0, 1.0, 1.0];
    }
    [raw[0] / max, raw[1] / max, raw[2] / max]
}

/// Colorizes with a seeded random color.
pub fn random_colorize(img: &Image, seed: u64) -> Result<Image> {
    colorize(img, &random_color(seed))
}

/// Crops a window whose side is `side_fraction` of the image side (clamped
/// to at least 2x2 pixels) at integer offset `(y0, x0)`, then resizes back to
/// the original resolution with bilinear interpolation. A fraction of 1.0 at
/// offset (0, 0) is the exact identity.
pub fn crop_resize(img: &Image, side_fraction: f64, y0: usize, x0: usize) -> Result<Image> {
    require_square(img, "crop_resize")?;
    if !side_fraction.is_finite() || side_fraction <= 0.0 || side_fraction > 1.0 {
        return Err(Error::InvalidConfig(format!(
            "crop side fraction must be in (0, 1], got {side_fraction}"
        )));
    }
    let n = img.height();
    let side = ((side_fraction * n as f64).round() as usize).clamp(2.min(n), n);
    if y0 + side > n || x0 + side > n {
        return Err(Error::InvalidConfig(format!(
            "crop window {side}x{side} at ({y0}, {x0}) exceeds the {n}x{n} frame"
        )));
    }
    let scale = side as f64 / n as f64;
    let mut pixels = vec![0.0; img.pixels().len()];
    for y in 0..n {
        for x in 0..n {
            // Align pixel centers: a scale of 1 samples exactly the source
            // grid.
            let src_y = y0 as f64 + (y as f64 + 0.5) * scale - 0.5;
            let src_x = x0 as f64 + (x as f64 + 0.5) * scale - 0.5;
            for c in 0..img.channels() {
                pixels[(y * n + x) * img.channels() + c] = sample_clamped(
                    img,
                    src_y,
                    src_x,
                    c,
                    y0,
                    y0 + side - 1,
                    x0,
                    x0 + side - 1,
                );
            }
        }
    }
    Image::new(n, n, img.channels(), pixels)
}

/// Seeded crop-resize: side fraction uniform in [`CROP_FRACTION_RANGE`],
/// window offset uniform over the valid integer positions.
pub fn random_crop_resize(img: &Image, seed: u64) -> Result<Image> {
    require_square(img, "crop_resize")?;
    let mut rng = rng_for(seed, "crop", 0);
    let fraction = rng.random_range(CROP_FRACTION_RANGE.0..=CROP_FRACTION_RANGE.1);
    let n = img.height();
    let side = ((fraction * n as f64).round() as usize).clamp(2.min(n), n);
    let y0 = rng.random_range(0..=n - side);
    let x0 = rng.random_range(0..=n - side);
    crop_resize(img, side as f64 / n as f64, y0, x0)
}
