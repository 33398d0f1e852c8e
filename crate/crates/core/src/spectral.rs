//! Viscous kernels and discrete Korn constants.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::operators::{BcForm, OperatorSet};

pub const DEFAULT_KERNEL_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("mass matrix is not positive definite")]
    MassNotPositive,
    #[error("excluded subspace does not cover the viscous kernel (quotient {0:e})")]
    ExclusionIncomplete(f64),
    #[error("excluded vectors are linearly dependent or of wrong length")]
    BadExclusion,
    #[error("nothing left after removing the excluded subspace")]
    EmptyComplement,
}

/// Which stiffness matrix defines the viscous operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stiffness {
    Strain,
    Gradient,
}

impl Stiffness {
    pub fn of(form: BcForm) -> Self {
        if form.uses_strain() {
            Stiffness::Strain
        } else {
            Stiffness::Gradient
        }
    }

    fn matrix<'a>(&self, ops: &'a OperatorSet) -> &'a DMatrix<f64> {
        match self {
            Stiffness::Strain => &ops.a_sym,
            Stiffness::Gradient => &ops.a_grad,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KernelReport {
    pub stiffness: Stiffness,
    pub kernel_dim: usize,
    /// M-orthonormal coefficient vectors spanning the kernel.
    pub kernel_fields: Vec<DVector<f64>>,
    /// Generalized eigenvalues of `A x = lambda M x`, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors matching `eigenvalues`, M-orthonormal.
    pub eigenvectors: Vec<DVector<f64>>,
}

#[derive(Clone, Debug)]
pub struct CoercivityResult {
    pub k_n: f64,
    pub excluded_dim: usize,
    pub degree: usize,
    /// Minimizer of the Rayleigh quotient, M-normalized.
    pub mode: DVector<f64>,
}

/// Ascending eigenpairs of the symmetric pencil `(a, m)`.
fn generalized_eigen(
    a: &DMatrix<f64>,
    m: &DMatrix<f64>,
) -> Result<(Vec<f64>, Vec<DVector<f64>>), SpectralError> {
    let n = a.nrows();
    let chol = m.clone().cholesky().ok_or(SpectralError::MassNotPositive)?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(SpectralError::MassNotPositive)?;
    let c = &l_inv * a * l_inv.transpose();
    let c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let lt_inv = l_inv.transpose();
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .map(|&i| &lt_inv * eig.eigenvectors.column(i))
        .collect();
    Ok((values, vectors))
}

/// Kernel of the stiffness selected by the operator set's boundary condition.
pub fn viscous_kernel(ops: &OperatorSet, tol_kernel: f64) -> Result<KernelReport, SpectralError> {
    viscous_kernel_for(ops, Stiffness::of(ops.bc.form), tol_kernel)
}

/// Eigenvalues below `tol_kernel * lambda_max` count as kernel.
pub fn viscous_kernel_for(
    ops: &OperatorSet,
    stiffness: Stiffness,
    tol_kernel: f64,
) -> Result<KernelReport, SpectralError> {
    let (eigenvalues, eigenvectors) = generalized_eigen(stiffness.matrix(ops), &ops.mass)?;
    let lmax = eigenvalues.last().copied().unwrap_or(0.0).abs();
    let cut = tol_kernel * lmax.max(f64::MIN_POSITIVE);
    let kernel_fields: Vec<DVector<f64>> = eigenvalues
        .iter()
        .zip(&eigenvectors)
        .filter(|(l, _)| l.abs() <= cut)
        .map(|(_, v)| v.clone())
        .collect();
    Ok(KernelReport {
        stiffness,
        kernel_dim: kernel_fields.len(),
        kernel_fields,
        eigenvalues,
        eigenvectors,
    })
}

/// `K_N = min x.A_sym.x / (2 x.M.x)` over the M-orthogonal complement of
/// `exclusion`.
pub fn coercivity_constant(
    ops: &OperatorSet,
    exclusion: &[DVector<f64>],
    degree: usize,
) -> Result<CoercivityResult, SpectralError> {
    let n = ops.dim;
    if exclusion.iter().any(|v| v.len() != n) {
        return Err(SpectralError::BadExclusion);
    }
    let chol = ops
        .mass
        .clone()
        .cholesky()
        .ok_or(SpectralError::MassNotPositive)?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or(SpectralError::MassNotPositive)?;

    // In y = L^T x coordinates the M-inner product is Euclidean.
    let k = exclusion.len();
    let q1 = if k > 0 {
        let y = DMatrix::from_columns(
            &exclusion
                .iter()
                .map(|v| l.transpose() * v)
                .collect::<Vec<_>>(),
        );
        let qr = y.clone().qr();
        let r = qr.r();
        let scale = y.amax().max(f64::MIN_POSITIVE);
        if (0..k).any(|i| r[(i, i)].abs() < 1e-10 * scale) {
            return Err(SpectralError::BadExclusion);
        }
        qr.q()
    } else {
        DMatrix::zeros(n, 0)
    };
    let projector = DMatrix::<f64>::identity(n, n) - &q1 * q1.transpose();
    let peig = projector.symmetric_eigen();
    let keep: Vec<DVector<f64>> = (0..n)
        .filter(|&i| peig.eigenvalues[i] > 0.5)
        .map(|i| peig.eigenvectors.column(i).into_owned())
        .collect();
    if keep.is_empty() {
        return Err(SpectralError::EmptyComplement);
    }
    let q2 = DMatrix::from_columns(&keep);

    let c = &l_inv * &ops.a_sym * l_inv.transpose();
    let c2 = q2.transpose() * c * &q2;
    let c2 = (&c2 + c2.transpose()) * 0.5;
    let eig = c2.symmetric_eigen();
    let (imin, lmin) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .expect("nonempty complement");
    let full_max = ops.a_sym.clone().symmetric_eigen().eigenvalues.amax();
    if lmin <= DEFAULT_KERNEL_TOL * full_max {
        return Err(SpectralError::ExclusionIncomplete(lmin / 2.0));
    }
    let mode = l_inv.transpose() * (&q2 * eig.eigenvectors.column(imin));
    Ok(CoercivityResult {
        k_n: lmin / 2.0,
        excluded_dim: k,
        degree,
        mode,
    })
}
