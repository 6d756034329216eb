use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct SpectralReport {
    pub spectral_radius: f64,
    /// Eigenvalues with `|μ − 1| < tolerance`.
    pub unit_count: usize,
    /// Largest modulus among the remaining eigenvalues (the convergence margin).
    pub largest_subunit_modulus: f64,
    /// `(re, im)`, sorted by decreasing modulus.
    pub eigenvalues: Vec<[f64; 2]>,
}

pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<[f64; 2]>> {
    if !m.is_square() {
        return Err(Error::Dimension("eigenvalues of a non-square matrix".into()));
    }
    let e = nalgebra_lapack::Eigen::new(m.clone(), false, false)
        .ok_or_else(|| Error::Eigen("eigenvalue iteration did not converge".into()))?;
    let mut out: Vec<[f64; 2]> = e
        .eigenvalues_re
        .iter()
        .zip(e.eigenvalues_im.iter())
        .map(|(&r, &i)| [r, i])
        .collect();
    out.sort_by(|a, b| modulus(b).total_cmp(&modulus(a)));
    Ok(out)
}

fn modulus(z: &[f64; 2]) -> f64 {
    z[0].hypot(z[1])
}

pub fn check_spectral_properties(m: &DMatrix<f64>, tolerance: f64) -> Result<SpectralReport> {
    let eig = eigenvalues(m)?;
    let is_unit = |z: &[f64; 2]| (z[0] - 1.0).hypot(z[1]) < tolerance;
    Ok(SpectralReport {
        spectral_radius: eig.first().map_or(0.0, modulus),
        unit_count: eig.iter().filter(|z| is_unit(z)).count(),
        largest_subunit_modulus: eig.iter().filter(|z| !is_unit(z)).map(modulus).fold(0.0, f64::max),
        eigenvalues: eig,
    })
}

/// `max_i ‖Σ_j M_ij − I‖_max` over a partition into `b×b` blocks; zero for a block
/// right-stochastic matrix.
pub fn block_row_sum_residual(m: &DMatrix<f64>, b: usize) -> Result<f64> {
    if b == 0 || !m.is_square() || m.nrows() % b != 0 {
        return Err(Error::Dimension(format!("{}×{} matrix with block size {b}", m.nrows(), m.ncols())));
    }
    let p = m.nrows() / b;
    let mut worst: f64 = 0.0;
    for i in 0..p {
        let mut s = -DMatrix::<f64>::identity(b, b);
        for j in 0..p {
            s += m.view((i * b, j * b), (b, b));
        }
        worst = worst.max(s.amax());
    }
    Ok(worst)
}
