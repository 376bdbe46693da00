//! Eigenface recognition.
//!
//! Training centers the images, takes the leading principal directions of
//! their covariance through the small `M × M` Gram matrix (M images of n
//! pixels, `M ≪ n`), and stores one mean embedding per identity. Queries
//! are encoded as `z = Uᵀ(x − μ)` and matched by Mahalanobis distance under
//! the pooled within-class covariance of the training embeddings.
//!
//! ```
//! use nalgebra::DVector;
//! use quadsim::vision::train_pca_vectors;
//!
//! let xs = vec![
//!     DVector::from_vec(vec![0.0, 0.0]),
//!     DVector::from_vec(vec![0.1, 0.0]),
//!     DVector::from_vec(vec![1.0, 1.0]),
//!     DVector::from_vec(vec![1.1, 1.0]),
//! ];
//! let labels = ["a", "a", "b", "b"].map(String::from).to_vec();
//! let model = train_pca_vectors(&xs, &labels, 1).unwrap();
//! let hit = model.classify_vector(&DVector::from_vec(vec![1.05, 1.0])).unwrap();
//! assert_eq!(hit.label.as_deref(), Some("b"));
//! ```

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};

pub const IMAGE_SIDE: usize = 128;
pub const IMAGE_LEN: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const DEFAULT_COMPONENTS: usize = 20;
/// Rejection bound on the per-component RMS Mahalanobis distance.
pub const DEFAULT_REJECT_THRESHOLD: f64 = 3.0;
/// Regularization `λ = REG_FRACTION · trace(S_w) / k`.
pub const REG_FRACTION: f64 = 1e-3;
const MAGIC: &[u8; 8] = b"EIGFACE1";

/// Normalized 128 × 128 grayscale face crop, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceImage {
    pixels: DVector<f64>,
}

impl FaceImage {
    pub fn new(pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != IMAGE_LEN {
            return Err(Error::Dimension {
                expected: IMAGE_LEN,
                got: pixels.len(),
            });
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid("pixel values must lie in [0, 1]"));
        }
        Ok(Self {
            pixels: DVector::from_vec(pixels),
        })
    }

    pub fn pixels(&self) -> &DVector<f64> {
        &self.pixels
    }

    /// Reads an 8- or 16-bit PGM of exactly 128 × 128 pixels.
    pub fn load_pgm(path: &Path) -> Result<Self> {
        let img = image::ImageReader::open(path)?.with_guessed_format()?.decode()?;
        if (img.width() as usize, img.height() as usize) != (IMAGE_SIDE, IMAGE_SIDE) {
            return Err(Error::Format {
                path: path.to_owned(),
                message: format!("expected {IMAGE_SIDE}x{IMAGE_SIDE}, got {}x{}", img.width(), img.height()),
            });
        }
        let luma = img.to_luma32f();
        Self::new(luma.as_raw().iter().map(|&v| f64::from(v).clamp(0.0, 1.0)).collect())
    }

    /// Writes an 8-bit binary PGM.
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let bytes: Vec<u8> = self.pixels.iter().map(|p| (p * 255.0).round() as u8).collect();
        let img = image::GrayImage::from_raw(IMAGE_SIDE as u32, IMAGE_SIDE as u32, bytes)
            .expect("buffer matches image size");
        img.save_with_format(path, image::ImageFormat::Pnm)?;
        Ok(())
    }
}

/// Classification outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    /// `None` when the nearest identity is beyond the reject threshold.
    pub label: Option<String>,
    /// Index of the nearest identity regardless of rejection.
    pub nearest: usize,
    /// Mahalanobis distance to the nearest identity.
    pub distance: f64,
    /// Display score `100·exp(−d²/(2k))`.
    pub score_pct: f64,
}

/// Trained eigenface model.
#[derive(Debug, Clone)]
pub struct FaceModel {
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    labels: Vec<String>,
    embeddings: Vec<DVector<f64>>,
    metric: DMatrix<f64>,
    reject_threshold: f64,
    chol: Cholesky<f64, Dyn>,
}

impl PartialEq for FaceModel {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean
            && self.basis == other.basis
            && self.eigenvalues == other.eigenvalues
            && self.labels == other.labels
            && self.embeddings == other.embeddings
            && self.metric == other.metric
            && self.reject_threshold == other.reject_threshold
    }
}

impl FaceModel {
    fn assemble(
        mean: DVector<f64>,
        basis: DMatrix<f64>,
        eigenvalues: Vec<f64>,
        labels: Vec<String>,
        embeddings: Vec<DVector<f64>>,
        metric: DMatrix<f64>,
        reject_threshold: f64,
    ) -> Result<Self> {
        let chol = Cholesky::new(metric.clone()).ok_or_else(|| invalid("metric is not positive definite"))?;
        Ok(Self {
            mean,
            basis,
            eigenvalues,
            labels,
            embeddings,
            metric,
            reject_threshold,
            chol,
        })
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn components(&self) -> usize {
        self.basis.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Orthonormal principal directions as columns.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Variance along each basis column, non-increasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn embeddings(&self) -> &[DVector<f64>] {
        &self.embeddings
    }

    /// Regularized pooled within-class covariance.
    pub fn metric(&self) -> &DMatrix<f64> {
        &self.metric
    }

    pub fn reject_threshold(&self) -> f64 {
        self.reject_threshold
    }

    pub fn with_reject_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0) {
            return Err(invalid("reject threshold must be positive"));
        }
        self.reject_threshold = threshold;
        Ok(self)
    }

    pub fn encode_vector(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dimension() {
            return Err(Error::Dimension {
                expected: self.dimension(),
                got: x.len(),
            });
        }
        Ok(self.basis.tr_mul(&(x - &self.mean)))
    }

    pub fn encode(&self, image: &FaceImage) -> Result<DVector<f64>> {
        self.encode_vector(image.pixels())
    }

    /// Squared Mahalanobis distance from `z` to every identity.
    pub fn squared_distances(&self, z: &DVector<f64>) -> Result<Vec<f64>> {
        if z.len() != self.components() {
            return Err(Error::Dimension {
                expected: self.components(),
                got: z.len(),
            });
        }
        Ok(self
            .embeddings
            .iter()
            .map(|zi| {
                let w = self.chol.l().solve_lower_triangular(&(z - zi)).expect("L is invertible");
                w.norm_squared()
            })
            .collect())
    }

    pub fn classify_embedding(&self, z: &DVector<f64>) -> Result<Match> {
        let d2 = self.squared_distances(z)?;
        let (nearest, best) = argmin(&d2);
        let k = self.components() as f64;
        let distance = best.sqrt();
        let accepted = (best / k).sqrt() <= self.reject_threshold;
        Ok(Match {
            label: accepted.then(|| self.labels[nearest].clone()),
            nearest,
            distance,
            score_pct: 100.0 * (-best / (2.0 * k)).exp(),
        })
    }

    pub fn classify_vector(&self, x: &DVector<f64>) -> Result<Match> {
        self.classify_embedding(&self.encode_vector(x)?)
    }

    pub fn classify(&self, image: &FaceImage) -> Result<Match> {
        self.classify_vector(image.pixels())
    }

    /// Binary layout, little-endian: magic `EIGFACE1`; `u64` n, k, class
    /// count; `f64` mean (n), basis (n·k, column-major), embeddings (class
    /// count · k), metric (k·k, column-major), threshold; per label a `u64`
    /// byte length and UTF-8 bytes; eigenvalues (k).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [self.dimension(), self.components(), self.class_count()] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        let floats = self
            .mean
            .iter()
            .chain(self.basis.iter())
            .chain(self.embeddings.iter().flat_map(|e| e.iter()))
            .chain(self.metric.iter())
            .chain(std::iter::once(&self.reject_threshold));
        for f in floats {
            out.extend_from_slice(&f.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&(l.len() as u64).to_le_bytes());
            out.extend_from_slice(l.as_bytes());
        }
        for f in &self.eigenvalues {
            out.extend_from_slice(&f.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| invalid("model file truncated"))?;
        if &magic != MAGIC {
            return Err(invalid("not an eigenface model file"));
        }
        let u64_ = |r: &mut &[u8]| -> Result<usize> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(|_| invalid("model file truncated"))?;
            usize::try_from(u64::from_le_bytes(b)).map_err(|_| invalid("model size overflow"))
        };
        let n = u64_(&mut r)?;
        let k = u64_(&mut r)?;
        let c = u64_(&mut r)?;
        let floats_needed = n
            .checked_mul(k + 1)
            .and_then(|v| v.checked_add(c * k + k * k + 1))
            .ok_or_else(|| invalid("model size overflow"))?;
        if r.len() < floats_needed * 8 {
            return Err(invalid("model file truncated"));
        }
        let f64s = |r: &mut &[u8], count: usize| -> Result<Vec<f64>> {
            let mut v = Vec::with_capacity(count);
            for _ in 0..count {
                let mut b = [0u8; 8];
                r.read_exact(&mut b).map_err(|_| invalid("model file truncated"))?;
                v.push(f64::from_le_bytes(b));
            }
            Ok(v)
        };
        let mean = DVector::from_vec(f64s(&mut r, n)?);
        let basis = DMatrix::from_vec(n, k, f64s(&mut r, n * k)?);
        let flat = f64s(&mut r, c * k)?;
        let embeddings = flat.chunks(k.max(1)).take(c).map(|ch| DVector::from_row_slice(ch)).collect();
        let metric = DMatrix::from_vec(k, k, f64s(&mut r, k * k)?);
        let threshold = f64s(&mut r, 1)?[0];
        let mut labels = Vec::with_capacity(c);
        for _ in 0..c {
            let len = u64_(&mut r)?;
            if r.len() < len {
                return Err(invalid("model file truncated"));
            }
            let (s, rest) = r.split_at(len);
            labels.push(String::from_utf8(s.to_vec()).map_err(|_| invalid("label is not UTF-8"))?);
            r = rest;
        }
        let eigenvalues = f64s(&mut r, k)?;
        if !r.is_empty() {
            return Err(invalid("trailing bytes after model"));
        }
        Self::assemble(mean, basis, eigenvalues, labels, embeddings, metric, threshold)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?).map_err(|e| Error::Format {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }
}

fn argmin(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best })
}

/// Index and squared distance of the embedding nearest to `z` under the
/// metric `sigma`; ties go to the lowest index.
pub fn mahalanobis_argmin(z: &DVector<f64>, embeddings: &[DVector<f64>], sigma: &DMatrix<f64>) -> Result<(usize, f64)> {
    if embeddings.is_empty() {
        return Err(invalid("no embeddings to compare against"));
    }
    let chol = Cholesky::new(sigma.clone()).ok_or_else(|| invalid("metric is not positive definite"))?;
    let d2: Vec<f64> = embeddings
        .iter()
        .map(|zi| chol.l().solve_lower_triangular(&(z - zi)).expect("L is invertible").norm_squared())
        .collect();
    Ok(argmin(&d2))
}

/// Gram–Schmidt with one re-orthogonalization pass. Columns that collapse
/// are replaced by the first standard basis vector that survives.
fn orthonormalize(mut u: DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = u.shape();
    let mut next_unit = 0usize;
    for j in 0..k {
        let mut col = u.column(j).clone_owned();
        let start_norm = col.norm();
        for _ in 0..2 {
            for i in 0..j {
                let ui = u.column(i);
                col -= ui * ui.dot(&col);
            }
        }
        while !(col.norm() > 1e-8 * start_norm.max(1.0)) {
            col = DVector::zeros(n);
            col[next_unit % n] = 1.0;
            next_unit += 1;
            for _ in 0..2 {
                for i in 0..j {
                    let ui = u.column(i);
                    col -= ui * ui.dot(&col);
                }
            }
        }
        let norm = col.norm();
        u.set_column(j, &(col / norm));
    }
    u
}

/// Fits a model to arbitrary-length sample vectors.
pub fn train_pca_vectors(samples: &[DVector<f64>], labels: &[String], k: usize) -> Result<FaceModel> {
    let m = samples.len();
    if m < 2 {
        return Err(invalid("training needs at least two images"));
    }
    if labels.len() != m {
        return Err(Error::Dimension { expected: m, got: labels.len() });
    }
    let n = samples[0].len();
    if samples.iter().any(|s| s.len() != n) {
        return Err(invalid("training images differ in length"));
    }
    let mut classes: Vec<String> = Vec::new();
    for l in labels {
        if !classes.contains(l) {
            classes.push(l.clone());
        }
    }
    if classes.len() < 2 {
        return Err(invalid("training needs at least two distinct labels"));
    }
    if k == 0 || k > m - 1 || k > n {
        return Err(invalid(format!("k = {k} must lie in 1..={}", (m - 1).min(n))));
    }

    let mean = samples.iter().fold(DVector::zeros(n), |acc, s| acc + s) / m as f64;
    let mut x = DMatrix::zeros(n, m);
    for (j, s) in samples.iter().enumerate() {
        x.set_column(j, &(s - &mean));
    }
    let gram = x.tr_mul(&x);
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut basis = DMatrix::zeros(n, k);
    let mut eigenvalues = Vec::with_capacity(k);
    for (j, &i) in order.iter().take(k).enumerate() {
        let lambda = eig.eigenvalues[i].max(0.0);
        let u = &x * eig.eigenvectors.column(i);
        let norm = u.norm();
        if norm > 0.0 {
            basis.set_column(j, &(u / norm));
        }
        eigenvalues.push(lambda / (m - 1) as f64);
    }
    let basis = orthonormalize(basis);

    let encoded: Vec<DVector<f64>> = (0..m).map(|j| basis.tr_mul(&x.column(j))).collect();
    let mut embeddings = Vec::with_capacity(classes.len());
    let mut scatter = DMatrix::zeros(k, k);
    for c in &classes {
        let members: Vec<&DVector<f64>> = encoded.iter().zip(labels).filter(|(_, l)| *l == c).map(|(z, _)| z).collect();
        let centroid = members.iter().fold(DVector::zeros(k), |acc, z| acc + *z) / members.len() as f64;
        for z in members {
            let d = z - &centroid;
            scatter += &d * d.transpose();
        }
        embeddings.push(centroid);
    }
    let dof = m - classes.len();
    if dof > 0 {
        scatter /= dof as f64;
    }
    let trace = scatter.trace();
    let total: f64 = eigenvalues.iter().sum();
    let lambda = if trace > 0.0 {
        REG_FRACTION * trace / k as f64
    } else if total > 0.0 {
        REG_FRACTION * total / k as f64
    } else {
        REG_FRACTION
    };
    let metric = scatter + DMatrix::identity(k, k) * lambda;
    FaceModel::assemble(mean, basis, eigenvalues, classes, embeddings, metric, DEFAULT_REJECT_THRESHOLD)
}

pub fn train_pca(images: &[FaceImage], labels: &[String], k: usize) -> Result<FaceModel> {
    let samples: Vec<DVector<f64>> = images.iter().map(|i| i.pixels.clone()).collect();
    train_pca_vectors(&samples, labels, k)
}

/// Trains on `(label, image)` pairs.
pub fn train_classifier(dataset: &[(String, FaceImage)], k: usize) -> Result<FaceModel> {
    let samples: Vec<DVector<f64>> = dataset.iter().map(|(_, i)| i.pixels.clone()).collect();
    let labels: Vec<String> = dataset.iter().map(|(l, _)| l.clone()).collect();
    train_pca_vectors(&samples, &labels, k)
}

/// Reconstruction error `‖x − μ − UUᵀ(x − μ)‖` using the first `k` components.
pub fn reconstruction_error(model: &FaceModel, x: &DVector<f64>, k: usize) -> Result<f64> {
    if x.len() != model.dimension() {
        return Err(Error::Dimension {
            expected: model.dimension(),
            got: x.len(),
        });
    }
    let k = k.min(model.components());
    let centered = x - &model.mean;
    let u = model.basis.columns(0, k);
    Ok((&centered - &u * u.tr_mul(&centered)).norm())
}

/// Reads `dir/<label>/*.pgm`, labels and files in lexicographic order.
pub fn load_labelled_dir(dir: &Path) -> Result<Vec<(String, FaceImage)>> {
    let mut classes: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .collect();
    classes.sort_by_key(|e| e.file_name());
    let mut out = Vec::new();
    for class in classes {
        let label = class.file_name().to_string_lossy().into_owned();
        let mut files: Vec<_> = std::fs::read_dir(class.path())?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
            .collect();
        files.sort();
        for f in files {
            out.push((label.clone(), FaceImage::load_pgm(&f)?));
        }
    }
    if out.is_empty() {
        return Err(invalid(format!("no PGM images under {}", dir.display())));
    }
    Ok(out)
}

/// Parameters of the synthetic identity dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticFaces {
    pub classes: usize,
    pub per_class: usize,
    /// Per-pixel standard deviation of within-class noise.
    pub sigma: f64,
    /// Minimum distance between class centers, in units of `sigma`.
    pub separation_sigma: f64,
}

impl Default for SyntheticFaces {
    fn default() -> Self {
        Self {
            classes: 40,
            per_class: 25,
            sigma: 0.02,
            separation_sigma: 40.0,
        }
    }
}

/// Smooth random field: a handful of Gaussian blobs.
fn blob_field(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let blobs: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..IMAGE_SIDE as f64),
                rng.random_range(0.0..IMAGE_SIDE as f64),
                rng.random_range(6.0..20.0),
                if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            )
        })
        .collect();
    let mut field = vec![0.0; IMAGE_LEN];
    for (i, v) in field.iter_mut().enumerate() {
        let (x, y) = ((i % IMAGE_SIDE) as f64, (i / IMAGE_SIDE) as f64);
        *v = blobs
            .iter()
            .map(|&(cx, cy, r, s)| s * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * r * r)).exp())
            .sum();
    }
    field
}

/// Gaussian identity clusters around a shared face-like template.
///
/// Each class center is the template plus a smooth offset, rescaled so no
/// two centers are closer than `separation_sigma · sigma`. Returns
/// `(label, image)` pairs grouped by class.
pub fn synthetic_dataset(cfg: &SyntheticFaces, seed: u64) -> Result<Vec<(String, FaceImage)>> {
    if cfg.classes < 2 || cfg.per_class < 1 || !(cfg.sigma > 0.0) || !(cfg.separation_sigma > 0.0) {
        return Err(invalid("synthetic dataset parameters out of range"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template: Vec<f64> = (0..IMAGE_LEN)
        .map(|i| {
            let (x, y) = ((i % IMAGE_SIDE) as f64 / IMAGE_SIDE as f64 - 0.5, (i / IMAGE_SIDE) as f64 / IMAGE_SIDE as f64 - 0.5);
            0.5 + 0.15 * (-(x * x + y * y) / 0.08).exp()
        })
        .collect();
    let offsets: Vec<DVector<f64>> = (0..cfg.classes).map(|_| DVector::from_vec(blob_field(&mut rng))).collect();
    let mut min_pair = f64::INFINITY;
    for i in 0..cfg.classes {
        for j in i + 1..cfg.classes {
            min_pair = min_pair.min((&offsets[i] - &offsets[j]).norm());
        }
    }
    if !(min_pair > 0.0) {
        return Err(invalid("degenerate class centers"));
    }
    let scale = cfg.separation_sigma * cfg.sigma / min_pair;
    let mut out = Vec::with_capacity(cfg.classes * cfg.per_class);
    for (c, off) in offsets.iter().enumerate() {
        let label = format!("s{:02}", c + 1);
        for _ in 0..cfg.per_class {
            let px: Vec<f64> = (0..IMAGE_LEN)
                .map(|i| {
                    let noise: f64 = rng.sample(StandardNormal);
                    (template[i] + scale * off[i] + cfg.sigma * noise).clamp(0.0, 1.0)
                })
                .collect();
            out.push((label.clone(), FaceImage::new(px)?));
        }
    }
    Ok(out)
}

/// Splits each class: the first `train_fraction` of its images train, the rest test.
pub fn split_per_class(
    dataset: &[(String, FaceImage)],
    train_fraction: f64,
) -> (Vec<(String, FaceImage)>, Vec<(String, FaceImage)>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut i = 0;
    while i < dataset.len() {
        let label = &dataset[i].0;
        let end = dataset[i..].iter().position(|(l, _)| l != label).map_or(dataset.len(), |p| i + p);
        let cut = i + ((end - i) as f64 * train_fraction).round() as usize;
        train.extend_from_slice(&dataset[i..cut]);
        test.extend_from_slice(&dataset[cut..end]);
        i = end;
    }
    (train, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(xs)
    }

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn toy_2d_principal_axes() {
        // points spread along (1, 1)/√2 with small spread across it
        let pts: Vec<DVector<f64>> = [(-2.0, 0.1), (-1.0, -0.1), (1.0, 0.1), (2.0, -0.1), (0.0, 0.2), (0.0, -0.2)]
            .iter()
            .map(|&(a, b)| {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                v(&[s * (a - b), s * (a + b)])
            })
            .collect();
        let l = labels(&["a", "a", "a", "b", "b", "b"]);
        let model = train_pca_vectors(&pts, &l, 2).unwrap();
        // closed-form covariance eigen-decomposition
        let m = pts.len() as f64;
        let mu = pts.iter().fold(DVector::zeros(2), |a, p| a + p) / m;
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in &pts {
            let d = p - &mu;
            sxx += d[0] * d[0];
            sxy += d[0] * d[1];
            syy += d[1] * d[1];
        }
        let (sxx, sxy, syy) = (sxx / (m - 1.0), sxy / (m - 1.0), syy / (m - 1.0));
        let tr = sxx + syy;
        let det = sxx * syy - sxy * sxy;
        let l1 = tr / 2.0 + (tr * tr / 4.0 - det).sqrt();
        let l2 = tr / 2.0 - (tr * tr / 4.0 - det).sqrt();
        let axis = v(&[sxy, l1 - sxx]).normalize();
        assert_relative_eq!(model.eigenvalues()[0], l1, epsilon = 1e-10);
        assert_relative_eq!(model.eigenvalues()[1], l2, epsilon = 1e-10);
        let u0 = model.basis().column(0).clone_owned();
        let align = u0.dot(&axis).abs();
        assert_relative_eq!(align, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn duplicates_give_pure_regularizer() {
        let pts = vec![v(&[0.0, 0.0, 1.0]), v(&[0.0, 0.0, 1.0]), v(&[1.0, 2.0, 0.0]), v(&[1.0, 2.0, 0.0])];
        let model = train_pca_vectors(&pts, &labels(&["a", "a", "b", "b"]), 1).unwrap();
        let lambda = model.metric()[(0, 0)];
        assert!(lambda > 0.0);
        assert_eq!(model.metric(), &(DMatrix::identity(1, 1) * lambda));
    }

    #[test]
    fn rejects_bad_inputs() {
        let pts = vec![v(&[0.0, 1.0]), v(&[1.0, 0.0]), v(&[1.0, 1.0])];
        assert!(train_pca_vectors(&pts, &labels(&["a", "a", "a"]), 1).is_err());
        assert!(train_pca_vectors(&pts, &labels(&["a", "b", "a"]), 3).is_err());
        assert!(train_pca_vectors(&pts[..1], &labels(&["a"]), 1).is_err());
        assert!(FaceImage::new(vec![0.5; 10]).is_err());
        assert!(FaceImage::new(vec![1.5; IMAGE_LEN]).is_err());
    }

    #[test]
    fn encode_examples() {
        let pts = vec![v(&[0.0, 0.0, 0.0]), v(&[1.0, 0.0, 0.2]), v(&[0.0, 2.0, 0.0]), v(&[1.0, 2.0, 0.5])];
        let model = train_pca_vectors(&pts, &labels(&["a", "a", "b", "b"]), 2).unwrap();
        let z = model.encode_vector(model.mean()).unwrap();
        assert!(z.norm() < 1e-15);
        let x = model.mean() + model.basis().column(0);
        let z = model.encode_vector(&x).unwrap();
        assert_relative_eq!(z[0], 1.0, epsilon = 1e-12);
        assert!(z[1].abs() < 1e-12);
        assert!(model.encode_vector(&v(&[1.0])).is_err());
    }

    #[test]
    fn embedding_is_its_own_match() {
        let pts = vec![v(&[0.0, 0.0]), v(&[0.2, 0.1]), v(&[3.0, 3.0]), v(&[3.1, 2.9])];
        let model = train_pca_vectors(&pts, &labels(&["a", "a", "b", "b"]), 1).unwrap();
        for (i, z) in model.embeddings().iter().enumerate() {
            let m = model.classify_embedding(z).unwrap();
            assert_eq!(m.nearest, i);
            assert_eq!(m.distance, 0.0);
            assert_eq!(m.score_pct, 100.0);
            assert_eq!(m.label.as_deref(), Some(model.labels()[i].as_str()));
        }
        let far = model.classify_vector(&v(&[100.0, 100.0])).unwrap();
        assert!(far.label.is_none());
        assert!(far.distance > model.reject_threshold());
    }

    #[test]
    fn model_bytes_round_trip() {
        let pts = vec![v(&[0.0, 0.0, 1.0]), v(&[0.3, 0.1, 0.9]), v(&[1.0, 2.0, 0.0]), v(&[1.2, 2.1, 0.1])];
        let model = train_pca_vectors(&pts, &labels(&["ann", "ann", "bob", "bob"]), 2).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(&bytes[..8], b"EIGFACE1");
        assert_eq!(FaceModel::from_bytes(&bytes).unwrap(), model);
        assert!(FaceModel::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(FaceModel::from_bytes(&bad).is_err());
    }

    #[test]
    fn split_keeps_every_class() {
        let ds = synthetic_dataset(
            &SyntheticFaces {
                classes: 3,
                per_class: 5,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let (train, test) = split_per_class(&ds, 0.8);
        assert_eq!((train.len(), test.len()), (12, 3));
        for c in ["s01", "s02", "s03"] {
            assert_eq!(train.iter().filter(|(l, _)| l == c).count(), 4);
        }
    }
}
