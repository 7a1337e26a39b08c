//! Principal component reduction of feature matrices.
//!
//! Eigenvalues are those of `A A^T` for the mean-centred feature matrix `A`
//! (no `1/n` normalisation), so that the discarded tail satisfies
//! `sum_{j>r} lambda_j = ||A||_F^2 - sum_{j<=r} lambda_j`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{invalid, Result, SegError};
use crate::features::FeatureMatrix;

/// Number of leading eigenvalues kept for tail monitoring.
pub const RETAINED_SPECTRUM: usize = 64;

/// Mean, leading eigenvectors and spectrum of a centred feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    basis: DMatrix<f64>,
    eigenvalues: Vec<f64>,
    frobenius_sq: f64,
}

/// Coefficients `alpha = U^T (A_raw - mean)`, one column per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    width: usize,
    height: usize,
    alpha: DMatrix<f64>,
}

impl CoefficientField {
    pub fn new(width: usize, height: usize, alpha: DMatrix<f64>) -> Result<Self> {
        if alpha.ncols() != width * height {
            return Err(SegError::DimensionMismatch(format!(
                "{} coefficient columns for a {width}x{height} grid",
                alpha.ncols()
            )));
        }
        if alpha.iter().any(|v| !v.is_finite()) {
            return Err(SegError::NonFinite("PCA coefficients".into()));
        }
        Ok(Self { width, height, alpha })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Coefficient dimension `r`.
    pub fn dim(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn len(&self) -> usize {
        self.alpha.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.alpha
    }

    pub fn column(&self, i: usize) -> &[f64] {
        let r = self.dim();
        &self.alpha.as_slice()[i * r..(i + 1) * r]
    }

    /// Leading `r` coefficient rows.
    pub fn truncated(&self, r: usize) -> Self {
        Self {
            width: self.width,
            height: self.height,
            alpha: self.alpha.rows(0, r.min(self.dim())).into_owned(),
        }
    }
}

impl PcaModel {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `m x r` orthonormal basis.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    /// Retained leading eigenvalues, nonincreasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.frobenius_sq
    }

    /// Discarded spectral mass `sum_{j>r} lambda_j`, via the Frobenius identity.
    pub fn tail(&self, r: usize) -> Result<f64> {
        if r > self.eigenvalues.len() {
            return Err(invalid(
                "r",
                format!("only {} eigenvalues retained, asked for {r}", self.eigenvalues.len()),
            ));
        }
        let head: f64 = self.eigenvalues[..r].iter().sum();
        Ok((self.frobenius_sq - head).max(0.0))
    }

    /// Model restricted to its leading `r` basis vectors.
    pub fn truncated(&self, r: usize) -> Result<Self> {
        if r == 0 || r > self.rank() {
            return Err(invalid("r", format!("cannot truncate rank {} to {r}", self.rank())));
        }
        Ok(Self {
            mean: self.mean.clone(),
            basis: self.basis.columns(0, r).into_owned(),
            eigenvalues: self.eigenvalues.clone(),
            frobenius_sq: self.frobenius_sq,
        })
    }

    /// Coefficients of arbitrary features in this basis.
    pub fn project(&self, features: &FeatureMatrix) -> Result<CoefficientField> {
        if features.dim() != self.mean.len() {
            return Err(SegError::DimensionMismatch(format!(
                "model dimension {} vs features {}",
                self.mean.len(),
                features.dim()
            )));
        }
        let centered = center(features.matrix(), &self.mean);
        CoefficientField::new(features.width(), features.height(), self.basis.tr_mul(&centered))
    }

    /// Feature-space vectors `U gamma + mean` for coefficient columns `gamma`.
    pub fn to_features(&self, gamma: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = &self.basis * gamma;
        for mut col in out.column_iter_mut() {
            col += &self.mean;
        }
        out
    }
}

fn center(data: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = data.clone();
    for mut col in c.column_iter_mut() {
        col -= mean;
    }
    c
}

/// Flips each column so its largest-magnitude entry (lowest index on ties)
/// is positive.
fn fix_signs(basis: &mut DMatrix<f64>) {
    for mut col in basis.column_iter_mut() {
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Extends `basis` (orthonormal columns, possibly fewer than wanted) with
/// canonical directions orthogonalised against it.
fn complete_basis(mut cols: Vec<DVector<f64>>, m: usize, wanted: usize) -> Vec<DVector<f64>> {
    let mut e = 0;
    while cols.len() < wanted && e < m {
        let mut v = DVector::zeros(m);
        v[e] = 1.0;
        for _ in 0..2 {
            for c in &cols {
                let d = c.dot(&v);
                v.axpy(-d, c, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            cols.push(v / norm);
        }
        e += 1;
    }
    cols
}

/// PCA of the mean-centred features keeping `r` basis vectors.
///
/// The symmetric eigenproblem is solved on `A A^T` when `m <= n` and on
/// `A^T A` otherwise, mapping eigenvectors back through `A`.
pub fn fit_pca(features: &FeatureMatrix, r: usize) -> Result<(PcaModel, CoefficientField)> {
    let (m, n) = (features.dim(), features.len());
    let full = m.min(n);
    if r == 0 || r > full {
        return Err(invalid("r", format!("target dimension {r} outside 1..={full}")));
    }
    let retained = full.min(r.max(RETAINED_SPECTRUM));
    let mean = features.matrix().column_mean();
    let centered = center(features.matrix(), &mean);
    let frobenius_sq = centered.norm_squared();

    let (eigenvalues, mut basis) = if m <= n {
        let gram = &centered * centered.transpose();
        let (vals, vecs) = sorted_eigen(gram);
        let basis = vecs.columns(0, r).into_owned();
        (vals, basis)
    } else {
        let gram = centered.tr_mul(&centered);
        let (vals, vecs) = sorted_eigen(gram);
        let tol = vals.first().copied().unwrap_or(0.0) * 1e-12;
        let mut cols = Vec::with_capacity(r);
        for j in 0..r {
            if vals[j] <= tol || vals[j] <= 0.0 {
                break;
            }
            let u = &centered * vecs.column(j) / vals[j].sqrt();
            cols.push(u);
        }
        let cols = complete_basis(cols, m, r);
        (vals, DMatrix::from_columns(&cols))
    };
    fix_signs(&mut basis);

    let model = PcaModel {
        mean,
        basis,
        eigenvalues: eigenvalues.into_iter().take(retained).collect(),
        frobenius_sq,
    };
    let alpha = CoefficientField::new(features.width(), features.height(), model.basis.tr_mul(&centered))?;
    Ok((model, alpha))
}

fn sorted_eigen(gram: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let vals = order.iter().map(|&j| eig.eigenvalues[j].max(0.0)).collect();
    let cols: Vec<_> = order.iter().map(|&j| eig.eigenvectors.column(j).into_owned()).collect();
    (vals, DMatrix::from_columns(&cols))
}

/// Worst-case change of any squared coefficient distance caused by keeping
/// only `r` components: `2 * sum_{j>r} lambda_j`.
pub fn fidelity_error_bound(model: &PcaModel, r: usize) -> Result<f64> {
    Ok(2.0 * model.tail(r)?)
}

/// Smallest `k >= 1` whose normalised eigenvalue tail `tail(k) / n` falls
/// below `omega`; the retained spectrum length if none does.
pub fn estimate_segment_count(model: &PcaModel, n: usize, omega: f64) -> Result<usize> {
    if !(omega > 0.0) {
        return Err(invalid("omega", "must be positive"));
    }
    if n == 0 {
        return Err(invalid("n", "pixel count must be positive"));
    }
    let retained = model.eigenvalues.len().max(1);
    for k in 1..=retained {
        if model.tail(k.min(model.eigenvalues.len()))? / (n as f64) < omega {
            return Ok(k);
        }
    }
    Ok(retained)
}
