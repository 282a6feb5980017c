//! Deterministic stand-in digit corpus.
//!
//! Real MNIST files are used when `ESE_MNIST_DIR` points at a directory with
//! the standard IDX files (optionally gzipped). Otherwise a seeded stroke
//! glyph generator produces a 28x28 ten-class corpus with the same on-disk
//! shape: each digit is a set of hand-authored polylines/arcs, jittered per
//! sample (rotation, scale, translation, wobble, stroke width, intensity)
//! and rasterized with a soft round brush. The classes are crude but well
//! separated, which is all the directional ensemble claims need.

use std::path::{Path, PathBuf};

use ese_core::data::idx::{write_idx_images, write_idx_labels};
use ese_core::data::Image;
use ese_core::error::{Error, Result};
use ese_core::seeding::rng_for;
use rand::Rng;

/// Environment variable pointing at a directory with real MNIST IDX files.
pub const MNIST_DIR_ENV: &str = "ESE_MNIST_DIR";

pub const SIDE: usize = 28;

#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
    /// False when the corpus came from `ESE_MNIST_DIR`.
    pub generated: bool,
}

/// Points are (x, y) in the unit box, y pointing down.
type Stroke = Vec<(f64, f64)>;

fn line(points: &[(f64, f64)]) -> Stroke {
    points.to_vec()
}

/// Arc around (cx, cy) with radii (rx, ry); angles in degrees, 90 = up.
fn arc(cx: f64, cy: f64, rx: f64, ry: f64, a0: f64, a1: f64) -> Stroke {
    let steps = ((a1 - a0).abs() / 12.0).ceil().max(4.0) as usize;
    (0..=steps)
        .map(|i| {
            let a = (a0 + (a1 - a0) * i as f64 / steps as f64).to_radians();
            (cx + rx * a.cos(), cy - ry * a.sin())
        })
        .collect()
}

fn glyph_strokes(class: u8) -> Vec<Stroke> {
    match class {
        0 => vec![arc(0.50, 0.50, 0.21, 0.31, 90.0, 450.0)],
        1 => vec![
            line(&[(0.36, 0.30), (0.52, 0.15), (0.52, 0.85)]),
            line(&[(0.36, 0.85), (0.68, 0.85)]),
        ],
        2 => vec![
            arc(0.50, 0.33, 0.21, 0.18, 160.0, -10.0),
            line(&[(0.69, 0.39), (0.30, 0.84)]),
            line(&[(0.30, 0.84), (0.74, 0.84)]),
        ],
        3 => vec![
            arc(0.46, 0.32, 0.21, 0.16, 150.0, -80.0),
            arc(0.46, 0.66, 0.23, 0.18, 80.0, -150.0),
        ],
        4 => vec![
            line(&[(0.58, 0.13), (0.24, 0.58), (0.78, 0.58)]),
            line(&[(0.62, 0.34), (0.62, 0.87)]),
        ],
        5 => vec![
            line(&[(0.70, 0.15), (0.33, 0.15), (0.31, 0.45)]),
            arc(0.47, 0.63, 0.23, 0.21, 115.0, -125.0),
        ],
        6 => vec![
            arc(0.58, 0.32, 0.24, 0.24, 55.0, 175.0),
            arc(0.48, 0.66, 0.18, 0.17, 90.0, 450.0),
        ],
        7 => vec![
            line(&[(0.26, 0.16), (0.74, 0.16), (0.42, 0.86)]),
            line(&[(0.38, 0.50), (0.62, 0.50)]),
        ],
        8 => vec![
            arc(0.50, 0.32, 0.17, 0.14, 90.0, 450.0),
            arc(0.50, 0.67, 0.20, 0.17, 90.0, 450.0),
        ],
        9 => vec![
            arc(0.48, 0.33, 0.18, 0.16, 90.0, 450.0),
            line(&[(0.66, 0.36), (0.62, 0.86)]),
        ],
        other => unreachable!("digit class {other} out of range"),
    }
}

/// One seeded 28x28 grayscale sample of `class` (0..=9).
pub fn glyph_image(class: u8, seed: u64) -> Image {
    assert!(class < 10, "digit class {class} out of range");
    let mut rng = rng_for(seed, "glyph", u64::from(class));
    let theta: f64 = rng.random_range(-28.0f64..28.0).to_radians();
    let scale: f64 = rng.random_range(0.62..1.26);
    let (dx, dy): (f64, f64) = (rng.random_range(-0.16..0.16), rng.random_range(-0.16..0.16));
    let sigma: f64 = rng.random_range(0.85..2.2); // brush radius in pixels
    let intensity: f64 = rng.random_range(0.50..1.0);
    let (sin, cos) = theta.sin_cos();
    let span = SIDE as f64 - 6.0; // keep jittered glyphs inside the frame

    let mut canvas = vec![0.0f64; SIDE * SIDE];
    for stroke in glyph_strokes(class) {
        let pts: Vec<(f64, f64)> = stroke
            .iter()
            .map(|&(x, y)| {
                let (x, y) = (
                    x - 0.5 + rng.random_range(-0.055..0.055),
                    y - 0.5 + rng.random_range(-0.055..0.055),
                );
                let (x, y) = (scale * (cos * x - sin * y), scale * (sin * x + cos * y));
                (
                    (x + dx + 0.5) * span + 3.0,
                    (y + dy + 0.5) * span + 3.0,
                )
            })
            .collect();
        for pair in pts.windows(2) {
            let (x0, y0) = pair[0];
            let (x1, y1) = pair[1];
            let len = ((x1 - x0).hypot(y1 - y0)).max(1e-9);
            let steps = (len / 0.3).ceil() as usize;
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let (px, py) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
                stamp(&mut canvas, px, py, sigma, intensity);
            }
        }
    }
    Image::new(SIDE, SIDE, 1, canvas).expect("canvas pixels stay in [0,1]")
}

/// Max-blend a round soft brush; max keeps stroke joins from blowing out.
fn stamp(canvas: &mut [f64], px: f64, py: f64, sigma: f64, intensity: f64) {
    let reach = (2.5 * sigma).ceil() as i64;
    let (cx, cy) = (px.round() as i64, py.round() as i64);
    for y in (cy - reach).max(0)..=(cy + reach).min(SIDE as i64 - 1) {
        for x in (cx - reach).max(0)..=(cx + reach).min(SIDE as i64 - 1) {
            let d2 = (x as f64 - px).powi(2) + (y as f64 - py).powi(2);
            let v = intensity * (1.6 * (-d2 / (2.0 * sigma * sigma)).exp()).min(1.0);
            let cell = &mut canvas[y as usize * SIDE + x as usize];
            if v > *cell {
                *cell = v;
            }
        }
    }
}

/// Balanced labeled sample set; label of item `i` is `i % 10`.
pub fn generate_split(count: usize, seed: u64, split_tag: &str) -> (Vec<Image>, Vec<u8>) {
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = (i % 10) as u8;
        let sample_seed = ese_core::seeding::derive_seed(seed, split_tag, i as u64);
        images.push(glyph_image(class, sample_seed));
        labels.push(class);
    }
    (images, labels)
}

fn find_mnist_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [dir.join(stem), dir.join(format!("{stem}.gz"))] {
        if candidate.exists() {
            return Ok(candidate);
        }
    }
    Err(Error::InvalidConfig(format!(
        "{MNIST_DIR_ENV} is set but {} (or .gz) is missing under {}",
        stem,
        dir.display()
    )))
}

/// Ensures a digit corpus exists under `dir` and returns its paths. With
/// `ESE_MNIST_DIR` set, the real MNIST files are used as-is (callers
/// subsample via `--limit`); otherwise the generator writes `train_n` /
/// `test_n` glyph samples as raw IDX files.
pub fn prepare_corpus(dir: &Path, train_n: usize, test_n: usize, seed: u64) -> Result<CorpusPaths> {
    if let Some(mnist) = std::env::var_os(MNIST_DIR_ENV) {
        let mnist = PathBuf::from(mnist);
        return Ok(CorpusPaths {
            train_images: find_mnist_file(&mnist, "train-images-idx3-ubyte")?,
            train_labels: find_mnist_file(&mnist, "train-labels-idx1-ubyte")?,
            test_images: find_mnist_file(&mnist, "t10k-images-idx3-ubyte")?,
            test_labels: find_mnist_file(&mnist, "t10k-labels-idx1-ubyte")?,
            generated: false,
        });
    }
    std::fs::create_dir_all(dir)?;
    let paths = CorpusPaths {
        train_images: dir.join("train-images.idx"),
        train_labels: dir.join("train-labels.idx"),
        test_images: dir.join("test-images.idx"),
        test_labels: dir.join("test-labels.idx"),
        generated: true,
    };
    let (train_imgs, train_lbls) = generate_split(train_n, seed, "digits-train");
    let (test_imgs, test_lbls) = generate_split(test_n, seed, "digits-test");
    std::fs::write(&paths.train_images, write_idx_images(&train_imgs)?)?;
    std::fs::write(&paths.train_labels, write_idx_labels(&train_lbls))?;
    std::fs::write(&paths.test_images, write_idx_images(&test_imgs)?)?;
    std::fs::write(&paths.test_labels, write_idx_labels(&test_lbls))?;
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ese_core::data::{LabeledDataset, SplitTag};

    #[test]
    fn glyphs_are_seeded_and_distinct_across_seeds() {
        let a = glyph_image(3, 7);
        let b = glyph_image(3, 7);
        assert_eq!(a.pixels(), b.pixels());
        let c = glyph_image(3, 8);
        assert_ne!(a.pixels(), c.pixels());
        assert!(a.pixels().iter().all(|&p| (0.0..=1.0).contains(&p)));
        // Strokes actually hit the canvas.
        assert!(a.pixels().iter().sum::<f64>() > 5.0);
    }

    #[test]
    fn nearest_neighbor_in_pixel_space_separates_the_classes() {
        let (train, train_labels) = generate_split(300, 11, "t");
        let (test, test_labels) = generate_split(100, 12, "u");
        let mut hits = 0;
        for (img, &label) in test.iter().zip(&test_labels) {
            let best = train
                .iter()
                .enumerate()
                .min_by(|(_, a), (_, b)| {
                    let da: f64 = a
                        .pixels()
                        .iter()
                        .zip(img.pixels())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    let db: f64 = b
                        .pixels()
                        .iter()
                        .zip(img.pixels())
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    da.partial_cmp(&db).unwrap()
                })
                .map(|(i, _)| train_labels[i])
                .unwrap();
            if best == label {
                hits += 1;
            }
        }
        let accuracy = f64::from(hits) / 100.0;
        println!("pixel-space 1-NN accuracy: {accuracy:.2}");
        assert!(accuracy > 0.4, "generator classes collapsed: {accuracy}");
    }

    #[test]
    fn corpus_files_roundtrip_through_the_idx_parser() {
        let dir = tempfile::tempdir().unwrap();
        let paths = prepare_corpus(dir.path(), 50, 20, 5).unwrap();
        assert!(paths.generated);
        let train =
            LabeledDataset::load_idx_pair(&paths.train_images, &paths.train_labels, SplitTag::Train)
                .unwrap();
        let test =
            LabeledDataset::load_idx_pair(&paths.test_images, &paths.test_labels, SplitTag::Test)
                .unwrap();
        assert_eq!(train.len(), 50);
        assert_eq!(test.len(), 20);
        // Balanced classes: each appears 5 times in 50.
        let mut counts = [0usize; 10];
        for &l in &train.labels {
            counts[l as usize] += 1;
        }
        assert_eq!(counts, [5; 10]);

        // Regeneration is byte-identical.
        let before = std::fs::read(&paths.train_images).unwrap();
        prepare_corpus(dir.path(), 50, 20, 5).unwrap();
        assert_eq!(std::fs::read(&paths.train_images).unwrap(), before);
    }
}
