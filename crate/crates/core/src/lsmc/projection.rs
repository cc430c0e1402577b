use alloc::format;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::HutBasis;
use crate::error::{invalid, Result};
use crate::fixedpoint::equidistant;
use crate::model::NoiseModel;

/// Sample `(e_k, g_k)` approximating (noise law) ⊗ (uniform on `[z_1, z_J]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSample {
    pub innovations: Vec<f64>,
    pub states: Vec<f64>,
    pub seed: u64,
}

impl ProjectionSample {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Equidistant states from the first to the last peak and `count` i.i.d.
/// innovations drawn with ChaCha8 seeded by `seed`.
pub fn build_sample(basis: &HutBasis, noise: &NoiseModel, count: usize, seed: u64) -> Result<ProjectionSample> {
    if count < basis.len() {
        return Err(invalid(format!(
            "sample size {count} is smaller than the basis size {}",
            basis.len()
        )));
    }
    noise.validate()?;
    let states = equidistant(basis.first_peak(), basis.last_peak(), count);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let innovations = (0..count).map(|_| noise.sample(&mut rng)).collect();
    Ok(ProjectionSample { innovations, states, seed })
}

/// Basis realisations `M[k][j] = ψ_j(g_k)` together with the pseudo-inverse
/// of the Gram matrix `MᵀM`.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    basis: HutBasis,
    m: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_pinv: DMatrix<f64>,
    rank_deficient: bool,
}

const RANK_EPS: f64 = 1e-12;

impl DesignMatrix {
    pub fn new(basis: &HutBasis, sample: &ProjectionSample) -> Result<Self> {
        let (k, j) = (sample.len(), basis.len());
        let mut m = DMatrix::zeros(k, j);
        for (row, &g) in sample.states.iter().enumerate() {
            for (col, v) in basis.support(g) {
                m[(row, col)] = v;
            }
        }
        let gram = m.transpose() * &m;
        let svd = gram.clone().svd(true, true);
        let largest = svd.singular_values.max();
        let cutoff = RANK_EPS * largest.max(f64::MIN_POSITIVE);
        let rank_deficient = svd.singular_values.iter().any(|&s| s <= cutoff);
        let gram_pinv = svd.pseudo_inverse(cutoff).map_err(|e| invalid(format!("pseudo-inverse failed: {e}")))?;
        Ok(DesignMatrix { basis: *basis, m, gram, gram_pinv, rank_deficient })
    }

    pub fn basis(&self) -> &HutBasis {
        &self.basis
    }

    pub fn rows(&self) -> usize {
        self.m.nrows()
    }

    pub fn entry(&self, k: usize, j: usize) -> f64 {
        self.m[(k, j)]
    }

    pub fn gram(&self, i: usize, j: usize) -> f64 {
        self.gram[(i, j)]
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// Fitted values `M q` at the sample states.
    pub fn fitted(&self, coefficients: &[f64]) -> Vec<f64> {
        let q = DVector::from_column_slice(coefficients);
        (&self.m * q).iter().copied().collect()
    }

    /// `Mᵀ r` for a vector over the sample.
    pub fn transpose_times(&self, r: &[f64]) -> Vec<f64> {
        let r = DVector::from_column_slice(r);
        (self.m.transpose() * r).iter().copied().collect()
    }

    /// Column sums of `M`: the sample mass carried by each hut.
    pub fn column_mass(&self) -> Vec<f64> {
        (0..self.m.ncols()).map(|j| self.m.column(j).sum()).collect()
    }

    /// `ψ(x)ᵀ (MᵀM)⁺ ψ(x)`, the variance factor of the fit at `x`.
    pub fn leverage(&self, x: f64) -> f64 {
        let mut total = 0.0;
        for (i, a) in self.basis.support(x) {
            for (j, b) in self.basis.support(x) {
                total += a * b * self.gram_pinv[(i, j)];
            }
        }
        total
    }

    fn solve(&self, targets: &[f64]) -> Vec<f64> {
        let rhs = self.m.transpose() * DVector::from_column_slice(targets);
        (&self.gram_pinv * rhs).iter().copied().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub coefficients: Vec<f64>,
    /// Residual variance `|φ − Mq|² / (K − J)`.
    pub residual_variance: f64,
    pub rank_deficient: bool,
}

impl Projection {
    /// Standard error of each coefficient under homoscedastic residuals.
    pub fn standard_errors(&self, matrix: &DesignMatrix) -> Vec<f64> {
        (0..self.coefficients.len())
            .map(|j| libm::sqrt(self.residual_variance * matrix.gram_pinv[(j, j)].max(0.0)))
            .collect()
    }

    pub fn standard_error_at(&self, matrix: &DesignMatrix, x: f64) -> f64 {
        libm::sqrt(self.residual_variance * matrix.leverage(x).max(0.0))
    }
}

/// Least-squares coefficients `q` with `MᵀM q = Mᵀ φ`; minimum-norm when the
/// Gram matrix is singular.
pub fn project(sample: &ProjectionSample, matrix: &DesignMatrix, targets: &[f64]) -> Result<Projection> {
    if targets.len() != sample.len() || matrix.rows() != sample.len() {
        return Err(invalid(format!(
            "projection needs {} targets, got {}",
            sample.len(),
            targets.len()
        )));
    }
    let coefficients = matrix.solve(targets);
    let fitted = matrix.fitted(&coefficients);
    let rss: f64 = targets.iter().zip(&fitted).map(|(y, f)| (y - f) * (y - f)).sum();
    let dof = sample.len().saturating_sub(coefficients.len()).max(1);
    Ok(Projection { coefficients, residual_variance: rss / dof as f64, rank_deficient: matrix.rank_deficient })
}
