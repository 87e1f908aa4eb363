use nalgebra::{DMatrix, SymmetricEigen};

use super::{Result, SpectralError, SymmetricSpectrum};

const SYMMETRY_TOLERANCE: f64 = 1e-10;

fn validate_symmetric(matrix: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if matrix.nrows() != matrix.ncols() {
        return Err(SpectralError::InvalidInput(format!(
            "matrix is {}x{}, expected square",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.nrows() == 0 {
        return Err(SpectralError::InvalidInput("empty matrix".into()));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(SpectralError::InvalidInput("matrix has non-finite entries".into()));
    }
    let scale = matrix.amax();
    let asym = super::operator::dense_asymmetry(matrix);
    let allowed = SYMMETRY_TOLERANCE * scale;
    if asym > allowed {
        return Err(SpectralError::SymmetryViolation { max_asymmetry: asym, allowed });
    }
    Ok((matrix + matrix.transpose()) * 0.5)
}

/// Full eigendecomposition of a small symmetric matrix.
pub fn dense_eigh(matrix: &DMatrix<f64>) -> Result<SymmetricSpectrum> {
    let sym = validate_symmetric(matrix)?;
    let k = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    SymmetricSpectrum::new(eig.eigenvalues.as_slice().to_vec(), Some(eig.eigenvectors), k)
}

/// Eigenvalues only; cheaper than [`dense_eigh`] when vectors are not needed.
pub fn dense_eigvalsh(matrix: &DMatrix<f64>) -> Result<SymmetricSpectrum> {
    let sym = validate_symmetric(matrix)?;
    let k = sym.nrows();
    let values = sym.symmetric_eigenvalues();
    SymmetricSpectrum::from_eigenvalues(values.as_slice().to_vec(), k)
}
