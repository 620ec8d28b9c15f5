//! IDX (MNIST-family) and CIFAR-10 binary readers.

use std::path::Path;

use super::{DatasetHandle, Input, SourceKind};
use crate::error::{Error, Result};
use crate::layers::Geometry;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw image tensor from an IDX file.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn need(path: &Path, bytes: &[u8], needed: usize) -> Result<()> {
    if bytes.len() < needed {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            needed,
            found: bytes.len(),
        });
    }
    Ok(())
}

fn check_magic(path: &Path, bytes: &[u8], expected: u32) -> Result<()> {
    need(path, bytes, 4)?;
    let found = be_u32(bytes, 0);
    if found != expected {
        return Err(Error::IdxMagic {
            path: path.to_path_buf(),
            found,
            expected,
        });
    }
    Ok(())
}

/// Parses an IDX image file held in memory. `path` is used for error messages.
pub fn parse_idx_images(path: &Path, bytes: &[u8]) -> Result<IdxImages> {
    check_magic(path, bytes, IMAGES_MAGIC)?;
    need(path, bytes, 16)?;
    let count = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let needed = 16 + count * rows * cols;
    need(path, bytes, needed)?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: bytes[16..needed].to_vec(),
    })
}

/// Parses an IDX label file held in memory.
pub fn parse_idx_labels(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(path, bytes, LABELS_MAGIC)?;
    need(path, bytes, 8)?;
    let count = be_u32(bytes, 4) as usize;
    need(path, bytes, 8 + count)?;
    Ok(bytes[8..8 + count].to_vec())
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    parse_idx_images(path, &read(path)?)
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    parse_idx_labels(path, &read(path)?)
}

fn normalized(bytes: &[u8]) -> Vec<f64> {
    bytes.iter().map(|&b| f64::from(b) / 255.0).collect()
}

fn class_count(labels: &[usize]) -> usize {
    labels.iter().max().map_or(0, |m| m + 1)
}

/// Loads an IDX image/label pair with pixels scaled to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<DatasetHandle> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(Error::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    let size = images.rows * images.cols;
    let inputs = (0..images.count)
        .map(|i| Input::Static(normalized(&images.pixels[i * size..(i + 1) * size])))
        .collect();
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let n_classes = class_count(&labels).max(1);
    DatasetHandle::new(
        SourceKind::IdxImages,
        Geometry::new(1, images.rows, images.cols),
        n_classes,
        inputs,
        labels,
    )
}

const CIFAR_PIXELS: usize = 3 * 32 * 32;

/// Loads one CIFAR-10 binary batch: records of a label byte followed by
/// 3072 channel-major pixel bytes.
pub fn load_cifar_batch(path: impl AsRef<Path>) -> Result<DatasetHandle> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let record = CIFAR_PIXELS + 1;
    if bytes.len() % record != 0 {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            needed: bytes.len().div_ceil(record) * record,
            found: bytes.len(),
        });
    }
    let (inputs, labels) = bytes
        .chunks_exact(record)
        .map(|r| (Input::Static(normalized(&r[1..])), usize::from(r[0])))
        .unzip();
    DatasetHandle::new(SourceKind::CifarBinary, Geometry::new(3, 32, 32), 10, inputs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn image_file(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [IMAGES_MAGIC, count, rows, cols] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(pixels);
        out
    }

    fn label_file(labels: &[u8]) -> Vec<u8> {
        let mut out = LABELS_MAGIC.to_be_bytes().to_vec();
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }

    fn write(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p).unwrap().write_all(bytes).unwrap();
        p
    }

    #[test]
    fn loads_and_normalizes() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(&dir, "i", &image_file(2, 1, 2, &[0, 255, 51, 102]));
        let lab = write(&dir, "l", &label_file(&[3, 1]));
        let d = load_idx(&img, &lab).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.shape, Geometry::new(1, 1, 2));
        assert_eq!(d.labels(), &[3, 1]);
        assert_eq!(d.n_classes, 4);
        assert_eq!(d.input(0), &Input::Static(vec![0.0, 1.0]));
        assert_eq!(d.input(1), &Input::Static(vec![0.2, 0.4]));
        assert_eq!(d, load_idx(&img, &lab).unwrap());
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let good_img = image_file(2, 1, 2, &[0, 1, 2, 3]);
        let img = write(&dir, "i", &good_img);
        let short = write(&dir, "s", &good_img[..good_img.len() - 1]);
        let lab = write(&dir, "l", &label_file(&[0, 1]));
        let lab3 = write(&dir, "l3", &label_file(&[0, 1, 2]));
        assert!(matches!(
            load_idx(&short, &lab),
            Err(Error::Truncated {
                needed: 20,
                found: 19,
                ..
            })
        ));
        assert!(matches!(
            load_idx(&img, &lab3),
            Err(Error::CountMismatch { images: 2, labels: 3 })
        ));
        assert!(matches!(
            load_idx(&lab, &lab),
            Err(Error::IdxMagic {
                found: LABELS_MAGIC,
                expected: IMAGES_MAGIC,
                ..
            })
        ));
        assert!(matches!(load_idx(dir.path().join("none"), &lab), Err(Error::Io { .. })));
    }

    #[test]
    fn cifar_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = vec![7u8];
        bytes.extend(std::iter::repeat_n(255u8, CIFAR_PIXELS));
        let p = write(&dir, "c", &bytes);
        let d = load_cifar_batch(&p).unwrap();
        assert_eq!((d.len(), d.labels()[0], d.shape.size()), (1, 7, 3072));
        bytes.pop();
        let p = write(&dir, "c2", &bytes);
        assert!(matches!(load_cifar_batch(&p), Err(Error::Truncated { .. })));
    }
}
