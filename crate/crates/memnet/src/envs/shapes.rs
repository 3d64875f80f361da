//! Synthetic 16x16 shape images: square, circle outline, plus sign.
//!
//! Self-contained stand-in for a real image dataset, so every test runs
//! without downloads. Shapes get per-image center jitter in {-1, 0, 1} on
//! each axis and additive uniform noise in [0, 0.1).

use super::ImageSet;
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

pub const SIDE: usize = 16;
pub const PIXELS: usize = SIDE * SIDE;
pub const NUM_CLASSES: usize = 3;

pub const SQUARE: usize = 0;
pub const CIRCLE: usize = 1;
pub const PLUS: usize = 2;

/// Noise-free shape raster with the center moved by `(dr, dc)`.
/// Shape pixels are 1.0 on a 0.0 background.
pub fn shape_template(class: usize, dr: i64, dc: i64) -> Result<Tensor> {
    if class >= NUM_CLASSES {
        return Err(Error::IndexOutOfRange {
            what: "shape class",
            index: class,
            len: NUM_CLASSES,
        });
    }
    let (cr, cc) = (8 + dr, 8 + dc);
    let mut px = vec![0.0f64; PIXELS];
    for r in 0..SIDE as i64 {
        for c in 0..SIDE as i64 {
            let on = match class {
                SQUARE => r >= cr - 4 && r <= cr + 3 && c >= cc - 4 && c <= cc + 3,
                CIRCLE => {
                    let dist = (((r - cr) * (r - cr) + (c - cc) * (c - cc)) as f64).sqrt();
                    (dist - 5.0).abs() < 1.0
                }
                _ => {
                    let horizontal = r >= cr - 1 && r <= cr && c >= cc - 6 && c <= cc + 5;
                    let vertical = c >= cc - 1 && c <= cc && r >= cr - 6 && r <= cr + 5;
                    horizontal || vertical
                }
            };
            if on {
                px[(r * SIDE as i64 + c) as usize] = 1.0;
            }
        }
    }
    Tensor::new(vec![PIXELS], px)
}

/// One jittered, noisy shape image, flattened, values in [0, 1].
///
/// Draw order is fixed: row jitter, column jitter, then one noise uniform
/// per pixel in row-major order.
pub fn synth_shape(class: usize, rng: &mut Rng) -> Result<Tensor> {
    let dr = rng.below(3) as i64 - 1;
    let dc = rng.below(3) as i64 - 1;
    let mut t = shape_template(class, dr, dc)?;
    for v in t.data_mut() {
        *v = (*v + 0.1 * rng.uniform()).clamp(0.0, 1.0);
    }
    Ok(t)
}

/// `per_class` images of each class, class-major order.
pub fn synth_dataset(per_class: usize, rng: &mut Rng) -> Result<ImageSet> {
    let mut images = Vec::with_capacity(NUM_CLASSES * per_class);
    let mut labels = Vec::with_capacity(NUM_CLASSES * per_class);
    for class in 0..NUM_CLASSES {
        for _ in 0..per_class {
            images.push(synth_shape(class, rng)?);
            labels.push(class);
        }
    }
    ImageSet::new(Tensor::from_rows(&images)?, labels, SIDE, SIDE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_square_covers_rows_and_cols_4_to_11() {
        let t = shape_template(SQUARE, 0, 0).unwrap();
        let mut on = 0;
        for r in 0..SIDE {
            for c in 0..SIDE {
                let v = t.data()[r * SIDE + c];
                let inside = (4..=11).contains(&r) && (4..=11).contains(&c);
                assert_eq!(v == 1.0, inside, "pixel ({r},{c})");
                if v >= 0.9 {
                    on += 1;
                }
            }
        }
        assert_eq!(on, 64);
    }

    #[test]
    fn noisy_square_still_covers_its_64_pixels() {
        // With noise, shape pixels stay >= 0.9 and background stays below.
        let mut rng = Rng::new(1);
        loop {
            // Find a zero-jitter draw to pin the location.
            let state = rng.clone();
            let dr = rng.below(3) as i64 - 1;
            let dc = rng.below(3) as i64 - 1;
            if (dr, dc) != (0, 0) {
                continue;
            }
            let mut fixed = state;
            let img = synth_shape(SQUARE, &mut fixed).unwrap();
            let bright = img.data().iter().filter(|&&v| v >= 0.9).count();
            assert_eq!(bright, 64);
            break;
        }
    }

    #[test]
    fn templates_are_pairwise_distinct() {
        let square = shape_template(SQUARE, 0, 0).unwrap();
        let circle = shape_template(CIRCLE, 0, 0).unwrap();
        let plus = shape_template(PLUS, 0, 0).unwrap();
        assert!(square.l2_distance(&plus).unwrap() > 0.0);
        assert!(square.l2_distance(&circle).unwrap() > 0.0);
        assert!(circle.l2_distance(&plus).unwrap() > 0.0);
    }

    #[test]
    fn same_seed_same_image() {
        let a = synth_shape(CIRCLE, &mut Rng::new(55)).unwrap();
        let b = synth_shape(CIRCLE, &mut Rng::new(55)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn invalid_class_is_rejected() {
        assert!(matches!(
            synth_shape(3, &mut Rng::new(0)),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn dataset_is_class_major_and_in_range() {
        let set = synth_dataset(5, &mut Rng::new(3)).unwrap();
        assert_eq!(set.len(), 15);
        assert_eq!(set.labels[..5], [0; 5]);
        assert_eq!(set.labels[5..10], [1; 5]);
        assert!(set.images.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
