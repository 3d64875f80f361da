//! IDX image/label files: big-endian headers, unsigned byte payloads.

use std::path::Path;

use super::ImageSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a str,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_string(),
            offset: self.offset as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(self.err(format!(
                "need {n} bytes, file has {} left",
                self.bytes.len() - self.offset
            )));
        }
        let s = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(s)
    }

    fn u32_be(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses an image file and a label file into one normalized set.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<ImageSet> {
    let image_bytes = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let label_bytes = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let images_name = images_path.display().to_string();
    let labels_name = labels_path.display().to_string();

    let mut r = Reader {
        bytes: &image_bytes,
        offset: 0,
        path: &images_name,
    };
    let magic = r.u32_be()?;
    if magic != IMAGES_MAGIC {
        r.offset = 0;
        return Err(r.err(format!(
            "bad magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = r.u32_be()? as usize;
    let rows = r.u32_be()? as usize;
    let cols = r.u32_be()? as usize;
    let pixels = r.take(count * rows * cols)?;
    if r.offset != image_bytes.len() {
        return Err(r.err("trailing bytes after pixel data"));
    }

    let mut l = Reader {
        bytes: &label_bytes,
        offset: 0,
        path: &labels_name,
    };
    let magic = l.u32_be()?;
    if magic != LABELS_MAGIC {
        l.offset = 0;
        return Err(l.err(format!(
            "bad magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let label_count = l.u32_be()? as usize;
    if label_count != count {
        l.offset = 4;
        return Err(l.err(format!("{label_count} labels for {count} images")));
    }
    let labels = l.take(count)?;
    if l.offset != label_bytes.len() {
        return Err(l.err("trailing bytes after label data"));
    }

    let data: Vec<f64> = pixels.iter().map(|&b| b as f64 / 255.0).collect();
    ImageSet::new(
        Tensor::new(vec![count, rows * cols], data)?,
        labels.iter().map(|&b| b as usize).collect(),
        cols,
        rows,
    )
}

/// Serializes images back to IDX bytes (the inverse of [`load_idx`] for
/// byte-exact round trips; pixel values are quantized with `round(v * 255)`).
pub fn encode_idx_images(set: &ImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.len() * set.width * set.height);
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(set.len() as u32).to_be_bytes());
    out.extend_from_slice(&(set.height as u32).to_be_bytes());
    out.extend_from_slice(&(set.width as u32).to_be_bytes());
    for v in set.images.data() {
        out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    out
}

pub fn encode_idx_labels(set: &ImageSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + set.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(set.len() as u32).to_be_bytes());
    out.extend(set.labels.iter().map(|&l| l as u8));
    out
}

/// Non-overlapping `k x k` mean pooling; `k` must divide both sides.
pub fn downsample(set: &ImageSet, k: usize) -> Result<ImageSet> {
    if k == 0 || !set.width.is_multiple_of(k) || !set.height.is_multiple_of(k) {
        return Err(Error::Contract {
            op: "downsample",
            msg: format!("k = {k} does not divide {}x{}", set.width, set.height),
        });
    }
    let (w, h) = (set.width / k, set.height / k);
    let mut data = Vec::with_capacity(set.len() * w * h);
    for i in 0..set.len() {
        let src = set.image(i);
        for r in 0..h {
            for c in 0..w {
                let mut sum = 0.0;
                for dr in 0..k {
                    for dc in 0..k {
                        sum += src[(r * k + dr) * set.width + (c * k + dc)];
                    }
                }
                data.push(sum / (k * k) as f64);
            }
        }
    }
    ImageSet::new(
        Tensor::new(vec![set.len(), w * h], data)?,
        set.labels.clone(),
        w,
        h,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_bytes() -> (Vec<u8>, Vec<u8>) {
        // Two 2x2 images with distinct pixel values, labels 1 and 0.
        let mut images = Vec::new();
        images.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&2u32.to_be_bytes());
        images.extend_from_slice(&[0, 51, 102, 255, 255, 204, 153, 0]);
        let mut labels = Vec::new();
        labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[1, 0]);
        (images, labels)
    }

    fn write_fixture(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let (images, labels) = fixture_bytes();
        let ip = dir.join("imgs.idx3-ubyte");
        let lp = dir.join("labels.idx1-ubyte");
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn parses_fixture_in_pixel_order() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_fixture(dir.path());
        let set = load_idx(&ip, &lp).unwrap();
        assert_eq!(set.images.shape(), &[2, 4]);
        assert_eq!(set.labels, vec![1, 0]);
        assert_eq!(set.image(0)[0], 0.0);
        assert_eq!(set.image(0)[3], 1.0);
        assert!((set.image(0)[1] - 51.0 / 255.0).abs() < 1e-15);
        assert_eq!(set.image(1)[0], 1.0);
    }

    #[test]
    fn wrong_magic_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_fixture(dir.path());
        let mut bad = std::fs::read(&ip).unwrap();
        bad[3] = 0x99;
        std::fs::write(&ip, bad).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 0, .. }), "{err}");
    }

    #[test]
    fn truncation_and_count_mismatch_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_fixture(dir.path());
        let full = std::fs::read(&ip).unwrap();
        std::fs::write(&ip, &full[..full.len() - 3]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Format { .. })));

        std::fs::write(&ip, full).unwrap();
        let mut labels = std::fs::read(&lp).unwrap();
        labels[7] = 3; // claim 3 labels for 2 images
        labels.push(2);
        std::fs::write(&lp, labels).unwrap();
        let err = load_idx(&ip, &lp).unwrap_err();
        assert!(matches!(err, Error::Format { offset: 4, .. }), "{err}");
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = write_fixture(dir.path());
        let set = load_idx(&ip, &lp).unwrap();
        assert_eq!(encode_idx_images(&set), std::fs::read(&ip).unwrap());
        assert_eq!(encode_idx_labels(&set), std::fs::read(&lp).unwrap());
    }

    #[test]
    fn downsample_examples() {
        let set = ImageSet::new(
            Tensor::new(vec![1, 4], vec![0.0, 0.0, 1.0, 1.0]).unwrap(),
            vec![0],
            2,
            2,
        )
        .unwrap();
        let pooled = downsample(&set, 2).unwrap();
        assert_eq!(pooled.images.data(), &[0.5]);
        assert_eq!((pooled.width, pooled.height), (1, 1));

        let same = downsample(&set, 1).unwrap();
        assert_eq!(same.images.data(), set.images.data());

        let constant = ImageSet::new(Tensor::full(vec![1, 16], 0.7), vec![0], 4, 4).unwrap();
        let pooled = downsample(&constant, 2).unwrap();
        assert!(pooled
            .images
            .data()
            .iter()
            .all(|&v| (v - 0.7).abs() < 1e-15));

        assert!(downsample(&set, 3).is_err());
    }
}
