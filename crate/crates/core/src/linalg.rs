//! Tridiagonal linear algebra: LU factorization without pivoting (Thomas
//! scheme) with a reusable factorization for repeated solves against the
//! same matrix.

#[derive(Debug, Clone, PartialEq)]
pub enum LinalgError {
    /// Near-zero pivot; the matrix is singular to working precision.
    Singular { index: usize },
    BadShape(String),
}

impl std::fmt::Display for LinalgError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LinalgError::Singular { index } => {
                write!(f, "tridiagonal pivot vanished at row {index}")
            }
            LinalgError::BadShape(s) => write!(f, "bad tridiagonal shape: {s}"),
        }
    }
}

impl std::error::Error for LinalgError {}

/// Factored tridiagonal matrix. `sub` is below the diagonal (length n-1,
/// `sub[i]` couples row i+1 to column i), `sup` above (length n-1).
#[derive(Debug, Clone)]
pub struct TriFactor {
    n: usize,
    /// elimination multipliers sub[i] / pivot[i]
    mult: Vec<f64>,
    pivot: Vec<f64>,
    sup: Vec<f64>,
}

/// Factorizes the tridiagonal matrix with diagonals `(sub, diag, sup)`.
///
/// No pivoting: intended for the diagonally dominant matrices produced by
/// implicit time stepping and shifted second-difference operators. A pivot
/// smaller than `1e-13` times the matrix scale reports `Singular`.
pub fn tri_factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Result<TriFactor, LinalgError> {
    let n = diag.len();
    if n == 0 {
        return Err(LinalgError::BadShape("empty diagonal".into()));
    }
    if sub.len() != n - 1 || sup.len() != n - 1 {
        return Err(LinalgError::BadShape(format!(
            "diag has {n} entries, off-diagonals {} and {}",
            sub.len(),
            sup.len()
        )));
    }
    let scale = diag
        .iter()
        .chain(sub)
        .chain(sup)
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let floor = 1e-13 * scale;
    let mut pivot = vec![0.0; n];
    let mut mult = vec![0.0; n - 1];
    pivot[0] = diag[0];
    if pivot[0].abs() < floor {
        return Err(LinalgError::Singular { index: 0 });
    }
    for i in 1..n {
        mult[i - 1] = sub[i - 1] / pivot[i - 1];
        pivot[i] = diag[i] - mult[i - 1] * sup[i - 1];
        if pivot[i].abs() < floor {
            return Err(LinalgError::Singular { index: i });
        }
    }
    Ok(TriFactor { n, mult, pivot, sup: sup.to_vec() })
}

impl TriFactor {
    pub fn size(&self) -> usize {
        self.n
    }

    /// Solves `T x = rhs` using the stored factorization.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n, "rhs length mismatch");
        let mut x = rhs.to_vec();
        for i in 1..self.n {
            x[i] -= self.mult[i - 1] * x[i - 1];
        }
        x[self.n - 1] /= self.pivot[self.n - 1];
        for i in (0..self.n - 1).rev() {
            x[i] = (x[i] - self.sup[i] * x[i + 1]) / self.pivot[i];
        }
        x
    }
}

/// One-shot convenience wrapper.
pub fn tri_solve(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, LinalgError> {
    Ok(tri_factor(sub, diag, sup)?.solve(rhs))
}

/// Multiplies the tridiagonal matrix `(sub, diag, sup)` by `x`.
pub fn tri_mul(sub: &[f64], diag: &[f64], sup: &[f64], x: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = diag[i] * x[i];
        if i > 0 {
            acc += sub[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            acc += sup[i] * x[i + 1];
        }
        y[i] = acc;
    }
    y
}
