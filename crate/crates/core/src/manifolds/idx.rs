//! Reader for the big-endian IDX files used by MNIST-style datasets.

use std::path::Path;

use super::PointCloud;
use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Truncated(format!("{what} header")))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::BadMagic { expected, found });
    }
    Ok(())
}

/// Decodes image and label buffers into one row per image.
pub fn parse_idx_images(images: &[u8], labels: &[u8], normalize: bool) -> Result<PointCloud> {
    check_magic(images, IDX_IMAGE_MAGIC, "image")?;
    check_magic(labels, IDX_LABEL_MAGIC, "label")?;
    let n = be_u32(images, 4, "image")? as usize;
    let rows = be_u32(images, 8, "image")? as usize;
    let cols = be_u32(images, 12, "image")? as usize;
    let n_labels = be_u32(labels, 4, "label")? as usize;
    if n != n_labels {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    let m = rows * cols;
    let pixels = images.get(16..16 + n * m).ok_or_else(|| {
        Error::Truncated(format!(
            "expected {} pixel bytes, found {}",
            n * m,
            images.len().saturating_sub(16)
        ))
    })?;
    let label_bytes = labels.get(8..8 + n).ok_or_else(|| {
        Error::Truncated(format!(
            "expected {n} label bytes, found {}",
            labels.len().saturating_sub(8)
        ))
    })?;
    let scale = if normalize { 1.0 / 255.0 } else { 1.0 };
    let points = pixels.iter().map(|&p| p as f64 * scale).collect();
    PointCloud::new(points, m)?.with_labels(label_bytes.iter().map(|&l| l as u32).collect())
}

pub fn load_idx_images(
    images_path: &Path,
    labels_path: &Path,
    normalize: bool,
) -> Result<PointCloud> {
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    parse_idx_images(&images, &labels, normalize)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGE_MAGIC, n, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    fn label_file(labels: &[u8]) -> Vec<u8> {
        let mut v = IDX_LABEL_MAGIC.to_be_bytes().to_vec();
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn zero_images_give_zero_rows() {
        let c = parse_idx_images(
            &image_file(2, 28, 28, &[0; 2 * 784]),
            &label_file(&[1, 2]),
            true,
        )
        .unwrap();
        assert_eq!((c.n(), c.m()), (2, 784));
        assert!(c.points().iter().all(|&x| x == 0.0));
        assert_eq!(c.labels().unwrap(), &[1, 2]);
    }

    #[test]
    fn full_intensity_normalizes_to_one() {
        let mut px = [0u8; 4];
        px[2] = 255;
        let c = parse_idx_images(&image_file(1, 2, 2, &px), &label_file(&[0]), true).unwrap();
        assert_eq!(c.row(0), &[0.0, 0.0, 1.0, 0.0]);
        let raw = parse_idx_images(&image_file(1, 2, 2, &px), &label_file(&[0]), false).unwrap();
        assert_eq!(raw.row(0)[2], 255.0);
    }

    #[test]
    fn distinct_errors() {
        let imgs = image_file(2, 2, 2, &[0; 8]);
        let mut bad = imgs.clone();
        bad[3] = 0x01;
        assert!(matches!(
            parse_idx_images(&bad, &label_file(&[0, 0]), true),
            Err(Error::BadMagic { found: 0x801, .. })
        ));
        assert!(matches!(
            parse_idx_images(&imgs[..15], &label_file(&[0, 0]), true),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(
            parse_idx_images(&imgs[..20], &label_file(&[0, 0]), true),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(
            parse_idx_images(&imgs, &label_file(&[0, 0, 0]), true),
            Err(Error::CountMismatch {
                images: 2,
                labels: 3
            })
        ));
    }
}
