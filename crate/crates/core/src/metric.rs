//! Pixel-space Fréchet distance between two image sets.
//!
//! Each set is summarized by its mean and covariance; the distance between
//! the two Gaussians is
//! `|μ₁ − μ₂|² + Tr Σ₁ + Tr Σ₂ − 2 Tr (Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2}`.
//! Both covariances get `1e-6` added to the diagonal so rank-deficient sets
//! (fewer images than pixels) stay well defined.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const COV_EPS: f64 = 1e-6;

/// Mean, regularized covariance and its square root for one image set.
#[derive(Debug, Clone)]
pub struct ReferenceStats {
    shape: Vec<usize>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    sqrt_cov: DMatrix<f64>,
}

impl ReferenceStats {
    pub fn new(images: &[Tensor]) -> Result<Self> {
        let (mean, cov) = moments(images)?;
        let sqrt_cov = psd_sqrt(&cov);
        Ok(Self {
            shape: images[0].shape().to_vec(),
            mean,
            cov,
            sqrt_cov,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Distance from `images` to this set.
    pub fn distance(&self, images: &[Tensor]) -> Result<f64> {
        if images.first().is_some_and(|t| t.shape() != self.shape.as_slice()) {
            return Err(Error::Shape(format!(
                "images {:?}, reference {:?}",
                images[0].shape(),
                self.shape
            )));
        }
        let (mean, cov) = moments(images)?;
        let diff = &self.mean - &mean;
        let m = &self.sqrt_cov * &cov * &self.sqrt_cov;
        let cross: f64 = SymmetricEigen::new(symmetrize(m))
            .eigenvalues
            .iter()
            .map(|&l| l.max(0.0).sqrt())
            .sum();
        let d = diff.norm_squared() + self.cov.trace() + cov.trace() - 2.0 * cross;
        Ok(d.max(0.0))
    }
}

/// Fréchet distance between `generated` and `reference`.
pub fn quality_metric(generated: &[Tensor], reference: &[Tensor]) -> Result<f64> {
    if generated.is_empty() || reference.is_empty() {
        return Err(Error::EmptySet);
    }
    ReferenceStats::new(reference)?.distance(generated)
}

fn moments(images: &[Tensor]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let first = images.first().ok_or(Error::EmptySet)?;
    let d = first.len();
    if let Some(bad) = images.iter().find(|t| t.shape() != first.shape()) {
        return Err(Error::Shape(format!(
            "mixed image shapes {:?} and {:?}",
            first.shape(),
            bad.shape()
        )));
    }
    let n = images.len();
    let x = DMatrix::from_fn(d, n, |i, j| images[j].data()[i]);
    let mean = x.column_mean();
    let mut centered = x;
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut cov = &centered * centered.transpose() / n as f64;
    for i in 0..d {
        cov[(i, i)] += COV_EPS;
    }
    Ok((mean, cov))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m.clone()));
    let s = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&s) * eig.eigenvectors.transpose()
}
