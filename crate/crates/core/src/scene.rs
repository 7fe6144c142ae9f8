//! Seeded synthetic pixel scenes: a labeled grid whose pixel features are
//! noisy copies of well-separated class prototypes.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{CovotError, Result};
use crate::features::{FeatureSet, Role};

/// Accepted prototypes must stay pairwise below this absolute cosine.
pub const PROTOTYPE_MAX_COS: f64 = 0.5;

/// Rejection-sampling budget for prototype placement.
pub const SEPARATION_ATTEMPTS: usize = 10_000;

/// A labeled H×W grid with one feature vector per pixel, row-major.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    height: usize,
    width: usize,
    labels: Array2<usize>,
    pixel_features: FeatureSet,
    prototypes: FeatureSet,
    class_count: usize,
    seed: u64,
}

impl SyntheticScene {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Number of pixels M = H·W.
    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn labels(&self) -> &Array2<usize> {
        &self.labels
    }

    /// Labels flattened row-major to match feature order.
    pub fn labels_flat(&self) -> Array1<usize> {
        self.labels.iter().copied().collect()
    }

    /// Unit feature vectors, one per pixel, row-major.
    pub fn pixel_features(&self) -> &FeatureSet {
        &self.pixel_features
    }

    /// The underlying class prototype vectors (unit norm).
    pub fn prototypes(&self) -> &FeatureSet {
        &self.prototypes
    }

    /// Assembles a scene from explicit parts. Shapes must line up, every
    /// class in 0..N must appear in the labels, and N is taken from the
    /// prototype count.
    pub fn from_parts(
        labels: Array2<usize>,
        pixel_features: FeatureSet,
        prototypes: FeatureSet,
        seed: u64,
    ) -> Result<Self> {
        let (height, width) = labels.dim();
        let n = prototypes.len();
        if height * width != pixel_features.len() {
            return Err(CovotError::LengthMismatch {
                expected: height * width,
                got: pixel_features.len(),
            });
        }
        if pixel_features.dim() != prototypes.dim() {
            return Err(CovotError::DimensionMismatch {
                left: pixel_features.dim(),
                right: prototypes.dim(),
            });
        }
        if n < 2 || height * width < n {
            return Err(CovotError::invalid(
                "class_count",
                format!("need H·W ≥ N ≥ 2, got H·W = {}, N = {n}", height * width),
            ));
        }
        let mut seen = vec![false; n];
        for &l in labels.iter() {
            if l >= n {
                return Err(CovotError::OutOfRange {
                    what: "label",
                    got: l,
                    bound: n,
                });
            }
            seen[l] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(CovotError::invalid(
                "labels",
                "every class must appear at least once",
            ));
        }
        Ok(Self {
            height,
            width,
            labels,
            pixel_features,
            prototypes,
            class_count: n,
            seed,
        })
    }
}

/// Generates a scene: N unit prototypes rejection-sampled to pairwise
/// |cos| ≤ 0.5, labels in N contiguous row-major blocks, and pixel
/// features normalize(prototype[label] + σ·gaussian). Deterministic per
/// seed. At σ = 0 features are bit-exact prototype copies.
pub fn generate_scene(
    height: usize,
    width: usize,
    class_count: usize,
    noise_sigma: f64,
    dim: usize,
    seed: u64,
) -> Result<SyntheticScene> {
    let m = height * width;
    if class_count < 2 || m < class_count {
        return Err(CovotError::invalid(
            "class_count",
            format!("need H·W ≥ N ≥ 2, got H·W = {m}, N = {class_count}"),
        ));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(CovotError::invalid(
            "noise_sigma",
            format!("must be finite and ≥ 0, got {noise_sigma}"),
        ));
    }
    if dim < 2 {
        return Err(CovotError::invalid(
            "dim",
            format!("must be ≥ 2, got {dim}"),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes = draw_prototypes(class_count, dim, &mut rng)?;

    // Contiguous label blocks: pixel p belongs to class p·N/M.
    let labels_flat: Vec<usize> = (0..m).map(|p| p * class_count / m).collect();
    debug_assert!((0..class_count).all(|c| labels_flat.contains(&c)));
    let labels = Array2::from_shape_vec((height, width), labels_flat.clone())
        .expect("row-major layout matches shape");

    let mut features = Array2::<f64>::zeros((m, dim));
    for (p, mut row) in features.rows_mut().into_iter().enumerate() {
        let proto = prototypes.row(labels_flat[p]);
        if noise_sigma == 0.0 {
            row.assign(&proto);
        } else {
            for (x, p0) in row.iter_mut().zip(proto.iter()) {
                let g: f64 = rng.sample(StandardNormal);
                *x = p0 + noise_sigma * g;
            }
        }
    }
    let pixel_features = if noise_sigma == 0.0 {
        FeatureSet::new(features, Role::Visual)?
    } else {
        FeatureSet::new(features, Role::Visual)?.normalize()?
    };

    Ok(SyntheticScene {
        height,
        width,
        labels,
        pixel_features,
        prototypes: FeatureSet::new(prototypes, Role::Textual)?,
        class_count,
        seed,
    })
}

fn draw_prototypes(n: usize, dim: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
    let mut accepted = Array2::<f64>::zeros((n, dim));
    let mut count = 0usize;
    let mut attempts = 0usize;
    while count < n {
        attempts += 1;
        if attempts > SEPARATION_ATTEMPTS {
            return Err(CovotError::SeparationFailure { attempts });
        }
        let cand: Array1<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = cand.dot(&cand).sqrt();
        if norm <= crate::features::ZERO_NORM_EPS {
            continue;
        }
        let cand = cand.mapv(|x| x / norm);
        let separated = (0..count).all(|i| accepted.row(i).dot(&cand).abs() <= PROTOTYPE_MAX_COS);
        if separated {
            accepted.row_mut(count).assign(&cand);
            count += 1;
        }
    }
    Ok(accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::build_cost_volume;

    #[test]
    fn rejects_grid_smaller_than_classes() {
        assert!(matches!(
            generate_scene(1, 1, 2, 0.1, 8, 0),
            Err(CovotError::InvalidParameter { .. })
        ));
    }

    #[test]
    fn zero_noise_copies_prototypes_exactly() {
        let s = generate_scene(4, 4, 3, 0.0, 8, 11).unwrap();
        for p in 0..s.pixels() {
            let label = s.labels_flat()[p];
            assert_eq!(
                s.pixel_features().vector(p).to_vec(),
                s.prototypes().vector(label).to_vec()
            );
        }
        // Cosine against the true class is exactly 1 on the diagonal.
        let cv = build_cost_volume(s.pixel_features(), s.prototypes()).unwrap();
        for p in 0..s.pixels() {
            assert_eq!(cv.sim()[[p, s.labels_flat()[p]]], 1.0);
        }
    }

    #[test]
    fn labels_form_contiguous_blocks_covering_all_classes() {
        let s = generate_scene(8, 8, 4, 0.3, 16, 7).unwrap();
        let flat = s.labels_flat();
        let mut seen = [0usize; 4];
        for w in flat.windows(2) {
            assert!(w[1] >= w[0], "labels are nondecreasing row-major");
        }
        for &l in flat.iter() {
            seen[l] += 1;
        }
        assert!(seen.iter().all(|&c| c > 0));
        assert_eq!(seen.iter().sum::<usize>(), 64);
    }

    #[test]
    fn deterministic_per_seed_and_distinct_across_seeds() {
        let a = generate_scene(6, 5, 3, 0.2, 12, 42).unwrap();
        let b = generate_scene(6, 5, 3, 0.2, 12, 42).unwrap();
        assert_eq!(a.pixel_features().vectors(), b.pixel_features().vectors());
        let c = generate_scene(6, 5, 3, 0.2, 12, 43).unwrap();
        assert_ne!(a.pixel_features().vectors(), c.pixel_features().vectors());
    }

    #[test]
    fn prototypes_are_separated_units() {
        let s = generate_scene(5, 5, 5, 0.1, 10, 3).unwrap();
        let pr = s.prototypes();
        for i in 0..5 {
            let n = pr.vector(i).dot(&pr.vector(i)).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
            for j in 0..i {
                assert!(pr.vector(i).dot(&pr.vector(j)).abs() <= PROTOTYPE_MAX_COS);
            }
        }
    }

    #[test]
    fn features_are_unit_norm_under_noise() {
        let s = generate_scene(4, 4, 2, 0.5, 8, 9).unwrap();
        for p in 0..s.pixels() {
            let v = s.pixel_features().vector(p);
            assert!((v.dot(&v).sqrt() - 1.0).abs() < 1e-9);
        }
    }
}
