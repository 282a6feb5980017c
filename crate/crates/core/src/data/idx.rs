//! IDX container format (the MNIST distribution format): big-endian magic,
//! big-endian dimension sizes, unsigned-byte payload. Supports raw and
//! gzip-compressed files.

use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::data::Image;
use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Parse {
            offset,
            message: format!(
                "need 4 bytes for a big-endian u32, only {} remain",
                bytes.len().saturating_sub(offset)
            ),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses an IDX image file (magic 0x00000803) into grayscale images with
/// pixels scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Image>> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad image magic 0x{magic:08x}, expected 0x{IMAGES_MAGIC:08x}"),
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Parse {
            offset: 8,
            message: format!("image dimensions {rows}x{cols} must be positive"),
        });
    }
    let per_image = rows.checked_mul(cols).ok_or(Error::Parse {
        offset: 8,
        message: format!("image dimensions {rows}x{cols} overflow"),
    })?;
    let expected = count.checked_mul(per_image).ok_or(Error::Parse {
        offset: 4,
        message: format!("payload size {count}x{rows}x{cols} overflows"),
    })?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(Error::Parse {
            offset: 16,
            message: format!(
                "expected {expected} payload bytes for {count} images of {rows}x{cols}, found {}",
                payload.len()
            ),
        });
    }
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let slice = &payload[i * per_image..(i + 1) * per_image];
        let pixels: Vec<f64> = slice.iter().map(|&b| f64::from(b) / 255.0).collect();
        images.push(Image::new(rows, cols, 1, pixels)?);
    }
    Ok(images)
}

/// Parses an IDX label file (magic 0x00000801).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad label magic 0x{magic:08x}, expected 0x{LABELS_MAGIC:08x}"),
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::Parse {
            offset: 8,
            message: format!("expected {count} label bytes, found {}", payload.len()),
        });
    }
    Ok(payload.to_vec())
}

/// Serializes grayscale images back to IDX bytes. Pixels are quantized to
/// `round(p * 255)`, the exact inverse of parsing for IDX-sourced values.
pub fn write_idx_images(images: &[Image]) -> Result<Vec<u8>> {
    let Some(first) = images.first() else {
        return Err(Error::EmptyInput { what: "idx images" });
    };
    if first.channels() != 1 {
        return Err(Error::InvalidConfig(
            "IDX images must be single-channel".into(),
        ));
    }
    let (rows, cols) = (first.height(), first.width());
    let mut bytes = Vec::with_capacity(16 + images.len() * rows * cols);
    bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for (i, img) in images.iter().enumerate() {
        if img.height() != rows || img.width() != cols || img.channels() != 1 {
            return Err(Error::InvalidConfig(format!(
                "image {i} does not match the leading image's shape"
            )));
        }
        bytes.extend(img.pixels().iter().map(|&p| (p * 255.0).round() as u8));
    }
    Ok(bytes)
}

/// Serializes labels to IDX bytes.
pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    bytes.extend_from_slice(labels);
    bytes
}

/// Reads a file, transparently decompressing when it carries the gzip magic.
pub fn read_idx_auto(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut decoder = GzDecoder::new(raw.as_slice());
        let mut out = Vec::new();
        decoder.read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    /// Hand-built blob: two 2x2 images with known bytes.
    fn sample_image_blob() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&[0x00, 0x00, 0x08, 0x03]);
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0x02]);
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0x02]);
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0x02]);
        b.extend_from_slice(&[0, 51, 102, 255, 255, 204, 153, 0]);
        b
    }

    #[test]
    fn hand_built_blob_parses_to_exact_pixels() {
        let images = parse_idx_images(&sample_image_blob()).unwrap();
        assert_eq!(images.len(), 2);
        assert_eq!(
            images[0].pixels(),
            &[0.0, 51.0 / 255.0, 102.0 / 255.0, 1.0]
        );
        assert_eq!(
            images[1].pixels(),
            &[1.0, 204.0 / 255.0, 153.0 / 255.0, 0.0]
        );
    }

    #[test]
    fn labels_parse_and_roundtrip() {
        let blob = write_idx_labels(&[3, 1, 4, 1]);
        let labels = parse_idx_labels(&blob).unwrap();
        assert_eq!(labels, vec![3, 1, 4, 1]);
    }

    #[test]
    fn bad_magic_is_reported_at_offset_zero() {
        let mut blob = sample_image_blob();
        blob[3] = 0x04;
        match parse_idx_images(&blob) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_names_expected_and_actual() {
        let mut blob = sample_image_blob();
        blob.truncate(blob.len() - 3);
        match parse_idx_images(&blob) {
            Err(Error::Parse { offset, message }) => {
                assert_eq!(offset, 16);
                assert!(message.contains("expected 8"), "{message}");
                assert!(message.contains("found 5"), "{message}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn dimension_overflow_is_rejected() {
        let mut b = Vec::new();
        b.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        b.extend_from_slice(&u32::MAX.to_be_bytes());
        b.extend_from_slice(&u32::MAX.to_be_bytes());
        b.extend_from_slice(&u32::MAX.to_be_bytes());
        assert!(matches!(
            parse_idx_images(&b),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn image_roundtrip_preserves_pixels_exactly() {
        let images = parse_idx_images(&sample_image_blob()).unwrap();
        let blob = write_idx_images(&images).unwrap();
        assert_eq!(blob, sample_image_blob());
        let reparsed = parse_idx_images(&blob).unwrap();
        assert_eq!(reparsed[0].pixels(), images[0].pixels());
        assert_eq!(reparsed[1].pixels(), images[1].pixels());
    }

    #[test]
    fn gzip_files_are_transparently_decompressed() {
        let dir = tempfile::tempdir().unwrap();
        let raw_path = dir.path().join("data.idx");
        let gz_path = dir.path().join("data.idx.gz");
        let blob = sample_image_blob();
        std::fs::write(&raw_path, &blob).unwrap();
        let mut encoder =
            flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        encoder.write_all(&blob).unwrap();
        std::fs::write(&gz_path, encoder.finish().unwrap()).unwrap();

        assert_eq!(read_idx_auto(&raw_path).unwrap(), blob);
        assert_eq!(read_idx_auto(&gz_path).unwrap(), blob);
    }
}
