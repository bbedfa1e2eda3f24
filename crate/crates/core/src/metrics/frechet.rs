use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::types::Frame;

/// Eigenvalues above `-CLAMP_TOLERANCE · max(1, |λ|max)` are treated as zero.
pub const CLAMP_TOLERANCE: f64 = 1e-8;
/// Diagonal shrinkage applied when a set has fewer than `d + 1` samples.
pub const SHRINKAGE: f64 = 1e-6;

pub trait FeatureExtractorAdapter: Send + Sync {
    fn id(&self) -> &str;

    fn dim(&self) -> usize;

    fn extract(&self, frame: &Frame) -> Result<Vec<f64>>;
}

/// 8×8 box-downsampled BT.601 luma, `d = 64`.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubExtractor;

pub const STUB_SIDE: usize = 8;

impl FeatureExtractorAdapter for StubExtractor {
    fn id(&self) -> &str {
        "stub-grey8x8"
    }

    fn dim(&self) -> usize {
        STUB_SIDE * STUB_SIDE
    }

    fn extract(&self, frame: &Frame) -> Result<Vec<f64>> {
        let y = super::pixel::luma(frame);
        let (h, w) = frame.dims();
        let mut out = Vec::with_capacity(STUB_SIDE * STUB_SIDE);
        for i in 0..STUB_SIDE {
            let (r0, r1) = (i * h / STUB_SIDE, (i + 1) * h / STUB_SIDE);
            for j in 0..STUB_SIDE {
                let (c0, c1) = (j * w / STUB_SIDE, (j + 1) * w / STUB_SIDE);
                let block = y.slice(ndarray::s![r0..r1, c0..c1]);
                out.push(block.mean().unwrap_or(0.0));
            }
        }
        Ok(out)
    }
}

fn psd_eigen(m: DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let eig = SymmetricEigen::new(m);
    let scale = eig.eigenvalues.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    if let Some(v) = eig.eigenvalues.iter().find(|v| **v < -CLAMP_TOLERANCE * scale) {
        return Err(Error::Metric(format!("{what} is not positive semi-definite (eigenvalue {v:e})")));
    }
    Ok(eig)
}

fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(m.clone(), "covariance")?;
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// `‖μ1 − μ2‖² + Tr(Σ1 + Σ2 − 2 (Σ1 Σ2)^½)`, with the trace of the root
/// taken as the spectrum of `Σ1^½ Σ2 Σ1^½`.
pub fn frechet_distance(mu1: &DVector<f64>, s1: &DMatrix<f64>, mu2: &DVector<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    let d = mu1.len();
    if mu2.len() != d || s1.shape() != (d, d) || s2.shape() != (d, d) {
        return Err(Error::ShapeMismatch(format!(
            "moments of dimension {d}, {} with covariances {:?}, {:?}",
            mu2.len(),
            s1.shape(),
            s2.shape()
        )));
    }
    let sym = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
    let (s1, s2) = (sym(s1), sym(s2));
    let r1 = sym_sqrt(&s1)?;
    psd_eigen(s2.clone(), "covariance")?;
    let inner = psd_eigen(sym(&(&r1 * &s2 * &r1)), "covariance product")?;
    let tr_sqrt: f64 = inner.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).sum();
    let dist = (mu1 - mu2).norm_squared() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
    Ok(dist.max(0.0))
}

/// Sample mean and unbiased covariance of the rows of `features`.
pub fn gaussian_fit(features: &[Vec<f64>], dim: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Metric("cannot fit moments to an empty set".into()));
    }
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::ShapeMismatch(format!("feature of length {} for extractor of dimension {dim}", f.len())));
    }
    let x = DMatrix::from_fn(n, dim, |i, j| features[i][j]);
    let mu = DVector::from_fn(dim, |j, _| x.column(j).mean());
    let centred = DMatrix::from_fn(n, dim, |i, j| x[(i, j)] - mu[j]);
    let mut cov = if n > 1 {
        centred.transpose() * &centred / (n - 1) as f64
    } else {
        DMatrix::zeros(dim, dim)
    };
    if n < dim + 1 {
        for i in 0..dim {
            cov[(i, i)] += SHRINKAGE;
        }
    }
    Ok((mu, cov))
}

/// Fréchet distance between the extractor features of two frame sets.
pub fn fid(set_a: &[Frame], set_b: &[Frame], extractor: &dyn FeatureExtractorAdapter) -> Result<f64> {
    let fit = |set: &[Frame]| {
        let feats = set.iter().map(|f| extractor.extract(f)).collect::<Result<Vec<_>>>()?;
        gaussian_fit(&feats, extractor.dim())
    };
    let (m1, s1) = fit(set_a)?;
    let (m2, s2) = fit(set_b)?;
    frechet_distance(&m1, &s1, &m2, &s2)
}
