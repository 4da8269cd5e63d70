//! Evaluation metrics over images, landmarks, poses and supplied embeddings.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{ImageBuffer, LandmarkSet, PoseAngles};

pub const FEC_DIM: usize = 16;

/// Eigenvalues below this are treated as a covariance that is not PSD.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Mean absolute difference over all samples.
pub fn l1_distance<T: Real>(a: &ImageBuffer<T>, b: &ImageBuffer<T>) -> Result<T> {
    if !a.same_extent(b) {
        return Err(Error::shape(format!("{:?}", a.extent()), format!("{:?}", b.extent())));
    }
    let sum: T = a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y).abs()).sum();
    Ok(sum / T::from_usize_lossy(a.data().len()))
}

/// Euclidean norm of the angle differences, in degrees.
pub fn euler_distance<T: Real>(a: &PoseAngles<T>, b: &PoseAngles<T>) -> T {
    let (dy, dp, dr) = (a.yaw - b.yaw, a.pitch - b.pitch, a.roll - b.roll);
    (dy * dy + dp * dp + dr * dr).sqrt()
}

/// Mean per-point Euclidean distance in pixels.
pub fn landmark_distance<T: Real>(a: &LandmarkSet<T>, b: &LandmarkSet<T>) -> T {
    let sum: T = a.points().iter().zip(b.points()).map(|(&p, &q)| p.dist(q)).sum();
    sum / T::from_usize_lossy(a.len())
}

/// Cosine similarity.
///
/// Computed as `⟨a, b⟩ / sqrt(‖a‖² ‖b‖²)`, which gives exactly 1 and -1 for
/// `b = a` and `b = -a` since `sqrt(x²)` rounds back to `x`.
pub fn identity_similarity<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::shape(a.len(), b.len()));
    }
    let aa: T = a.iter().map(|&v| v * v).sum();
    let bb: T = b.iter().map(|&v| v * v).sum();
    if aa == T::zero() || bb == T::zero() {
        return Err(Error::invalid("cosine similarity of a zero vector"));
    }
    let dot: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
    let denom = (aa * bb).sqrt();
    let cos = if denom.is_finite() && denom > T::zero() {
        dot / denom
    } else {
        let (na, nb) = (aa.sqrt(), bb.sqrt());
        a.iter().zip(b).map(|(&x, &y)| (x / na) * (y / nb)).sum()
    };
    Ok(cos.clamp_to(-T::one(), T::one()))
}

/// Euclidean distance between two 16-d expression embeddings.
pub fn fec_distance<T: Real>(a: &[T], b: &[T]) -> Result<T> {
    for v in [a, b] {
        if v.len() != FEC_DIM {
            return Err(Error::shape(FEC_DIM, v.len()));
        }
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt())
}

/// `n` vectors of dimension `d`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet<T: Real> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Real> EmbeddingSet<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("embedding set is empty"))?;
        if dim == 0 {
            return Err(Error::invalid("embeddings must have at least one dimension"));
        }
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::shape(dim, r.len()));
            }
            data.extend(r);
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding"));
        }
        Ok(EmbeddingSet { dim, data })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.dim)
    }

    fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(self.len(), self.dim, self.data.iter().map(|v| v.as_f64()))
    }
}

/// Mean and sample covariance (denominator `n − 1`).
fn gaussian_stats(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows() as f64;
    let mean = m.row_mean().transpose();
    let mut centered = m.clone();
    for mut row in centered.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centered.transpose() * &centered / (n - 1.0);
    (mean, cov)
}

fn checked_eigenvalues(m: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let sym = (&m + m.transpose()) * 0.5;
    let mut eig = SymmetricEigen::new(sym);
    for v in eig.eigenvalues.iter_mut() {
        if *v < -PSD_TOLERANCE {
            return Err(Error::NotPsd(*v));
        }
        *v = v.max(0.0);
    }
    Ok(eig)
}

/// Fréchet distance between Gaussians fitted to two embedding sets:
/// `‖μ_A − μ_B‖² + Tr(Σ_A + Σ_B − 2 (Σ_A Σ_B)^{1/2})`.
///
/// The trace of the matrix square root is the sum of square roots of the
/// eigenvalues of `Σ_A^{1/2} Σ_B Σ_A^{1/2}`, which is symmetric.
pub fn frechet_distance<T: Real>(a: &EmbeddingSet<T>, b: &EmbeddingSet<T>) -> Result<T> {
    if a.dim() != b.dim() {
        return Err(Error::shape(a.dim(), b.dim()));
    }
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::invalid("Fréchet distance needs at least two embeddings per set"));
    }
    let (mu_a, cov_a) = gaussian_stats(&a.to_matrix());
    let (mu_b, cov_b) = gaussian_stats(&b.to_matrix());

    let ea = checked_eigenvalues(cov_a.clone())?;
    let sqrt_a =
        &ea.eigenvectors * DMatrix::from_diagonal(&ea.eigenvalues.map(f64::sqrt)) * ea.eigenvectors.transpose();
    let inner = &sqrt_a * &cov_b * &sqrt_a;
    let tr_sqrt: f64 = checked_eigenvalues(inner)?.eigenvalues.iter().map(|v| v.sqrt()).sum();

    let d = (mu_a - mu_b).norm_squared() + cov_a.trace() + cov_b.trace() - 2.0 * tr_sqrt;
    Ok(T::lit(d.max(0.0)))
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Summary {
    pub fn of<T: Real>(values: &[T]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = values.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
        Some(Summary {
            mean,
            std: var.sqrt(),
            count: values.len(),
        })
    }
}

/// Per-frame measurements. Missing metrics are `None`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub l1: Option<f64>,
    pub landmarks: Option<f64>,
    pub euler: Option<f64>,
    pub id: Option<f64>,
    pub fec: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub version: u32,
    pub frames: Vec<FrameMetrics>,
    /// Mean ± std per metric over the frames that have it.
    pub summary: BTreeMap<String, Summary>,
    /// Computed once over all frames.
    pub fid: Option<f64>,
}

impl MetricReport {
    pub fn new(frames: Vec<FrameMetrics>, fid: Option<f64>) -> Self {
        let mut summary = BTreeMap::new();
        let columns: [(&str, fn(&FrameMetrics) -> Option<f64>); 5] = [
            ("l1", |f| f.l1),
            ("landmarks", |f| f.landmarks),
            ("euler", |f| f.euler),
            ("id", |f| f.id),
            ("fec", |f| f.fec),
        ];
        for (name, get) in columns {
            let vals: Vec<f64> = frames.iter().filter_map(get).collect();
            if let Some(s) = Summary::of(&vals) {
                summary.insert(name.to_string(), s);
            }
        }
        MetricReport {
            version: 1,
            frames,
            summary,
            fid,
        }
    }

    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("frame,l1,landmarks,euler,id,fec\n");
        for f in &self.frames {
            out += &format!(
                "{},{},{},{},{},{}\n",
                f.frame,
                cell(f.l1),
                cell(f.landmarks),
                cell(f.euler),
                cell(f.id),
                cell(f.fec)
            );
        }
        out
    }
}

/// Cosine similarity of `pairs` random (output, source) embedding pairs.
pub fn id_against_random_sources<T: Real>(
    outputs: &EmbeddingSet<T>,
    sources: &EmbeddingSet<T>,
    pairs: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if outputs.dim() != sources.dim() {
        return Err(Error::shape(outputs.dim(), sources.dim()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..pairs)
        .map(|_| {
            let i = rng.random_range(0..outputs.len());
            let j = rng.random_range(0..sources.len());
            identity_similarity(outputs.row(i), sources.row(j))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Point2;

    fn set(rows: &[&[f64]]) -> EmbeddingSet<f64> {
        EmbeddingSet::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn l1_examples() {
        let z = ImageBuffer::<f64>::zeros(4, 2, 3);
        let o = ImageBuffer::<f64>::filled(4, 2, 3, 1.0);
        let half = ImageBuffer::<f64>::from_fn(4, 2, 3, |x, _, _| if x < 2 { 1.0 } else { 0.0 });
        assert_eq!(l1_distance(&z, &z).unwrap(), 0.0);
        assert_eq!(l1_distance(&o, &z).unwrap(), 1.0);
        assert_eq!(l1_distance(&half, &z).unwrap(), 0.5);
        assert!(l1_distance(&z, &ImageBuffer::zeros(2, 2, 3)).is_err());
    }

    #[test]
    fn euler_examples() {
        let zero = PoseAngles::new(0.0, 0.0, 0.0);
        assert_eq!(euler_distance(&zero, &zero), 0.0);
        assert_eq!(euler_distance(&PoseAngles::new(30.0, 0.0, 0.0), &zero), 30.0);
        assert_eq!(euler_distance(&PoseAngles::new(3.0, 4.0, 0.0), &zero), 5.0);
    }

    #[test]
    fn landmark_examples() {
        let a = LandmarkSet::new((0..98).map(|i| Point2::new(i as f64, 2.0 * i as f64)).collect()).unwrap();
        assert_eq!(landmark_distance(&a, &a), 0.0);
        let shifted = a.map(|p| p + Point2::new(3.0, 4.0)).unwrap();
        assert!((landmark_distance(&a, &shifted) - 5.0).abs() < 1e-12);
        let one = a.with_points(7..8, |i| a.get(i) + Point2::new(9.8, 0.0)).unwrap();
        assert!((landmark_distance(&a, &one) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cosine_examples() {
        let a = [1.0, 2.0, -3.0];
        let neg = [-1.0, -2.0, 3.0];
        assert_eq!(identity_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(identity_similarity(&a, &neg).unwrap(), -1.0);
        assert_eq!(identity_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(identity_similarity(&a, &[0.0; 3]).is_err());
    }

    #[test]
    fn fec_examples() {
        let z = [0.0; 16];
        let mut e = [0.0; 16];
        e[3] = 1.0;
        let mut two = [0.0; 16];
        two[0] = 1.0;
        two[1] = 1.0;
        assert_eq!(fec_distance(&z, &z).unwrap(), 0.0);
        assert_eq!(fec_distance(&z, &e).unwrap(), 1.0);
        assert_eq!(fec_distance(&two, &z).unwrap(), 2f64.sqrt());
        assert!(fec_distance(&[0.0; 15], &[0.0; 15]).is_err());
    }

    #[test]
    fn frechet_univariate_example() {
        let a = set(&[&[0.0], &[0.2]]);
        let b = set(&[&[1.0], &[1.2]]);
        assert!((frechet_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frechet_self_and_symmetry() {
        let a = set(&[&[0.0, 1.0, 2.0], &[1.0, -1.0, 0.5], &[2.0, 0.0, 0.0], &[0.3, 0.3, 0.9]]);
        let b = set(&[&[1.0, 0.0, 0.0], &[0.0, 2.0, 1.0], &[0.5, 0.5, 0.5]]);
        assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-8);
        let ab = frechet_distance(&a, &b).unwrap();
        let ba = frechet_distance(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-10);
    }

    #[test]
    fn frechet_preconditions() {
        let one = set(&[&[0.0, 1.0]]);
        let two = set(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let other = set(&[&[0.0], &[1.0]]);
        assert!(frechet_distance(&one, &two).is_err());
        assert!(frechet_distance(&two, &other).is_err());
        assert!(EmbeddingSet::<f64>::new(vec![vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn summary_uses_population_std() {
        let s = Summary::of(&[0.0, 2.0]).unwrap();
        assert_eq!((s.mean, s.std), (1.0, 1.0));
        assert_eq!(Summary::of(&[4.0]).unwrap().std, 0.0);
        assert_eq!(Summary::of(&[3.0, 3.0]).unwrap().std, 0.0);
        assert!(Summary::of::<f64>(&[]).is_none());
    }

    #[test]
    fn random_id_pairs_are_seeded() {
        let a = set(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let x = id_against_random_sources(&a, &a, 20, 5).unwrap();
        assert_eq!(x, id_against_random_sources(&a, &a, 20, 5).unwrap());
        assert_eq!(x.len(), 20);
    }

    #[test]
    fn report_summaries_skip_missing_values() {
        let frames = vec![
            FrameMetrics {
                frame: 0,
                l1: Some(0.0),
                ..Default::default()
            },
            FrameMetrics {
                frame: 1,
                l1: Some(2.0),
                euler: Some(1.0),
                ..Default::default()
            },
        ];
        let r = MetricReport::new(frames, Some(0.5));
        assert_eq!(r.summary["l1"].mean, 1.0);
        assert_eq!(r.summary["euler"].count, 1);
        assert!(!r.summary.contains_key("id"));
        assert!(r.to_csv().starts_with("frame,l1,landmarks,euler,id,fec\n0,0,,,,\n"));
    }
}
