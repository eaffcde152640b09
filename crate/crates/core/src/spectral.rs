//! Ground states of the tilted linearization around extinction.
//!
//! In tilted variables the linearization about `u = 0` is the symmetric
//! Schroedinger-type operator `-D2 + V` with potential `V = -g(z)` built
//! from the zero-state growth rate `g` (so a growth patch is a potential
//! well). Its lowest Dirichlet eigenvalue `lambda0` decides linear
//! stability of extinction in the weighted spaces: the drift adds the
//! exact spectral shift `gamma(c, h)`, giving `lambda_c = lambda0 + gamma`,
//! and the marginal speed is `c = 2 sqrt(-lambda0)` when `lambda0 < 0`.
//!
//! Eigenvalues come from Sturm-sequence bisection (pivot sign counts of
//! `T - x I`), eigenvectors from shifted inverse iteration; an analytic
//! square-well bound-state equation serves as an independent oracle.

use crate::grid::{Field, Grid, GridError};
use crate::linalg::{tri_factor, tri_mul, LinalgError};
use crate::operator::{inside_weights, FittedOperator};
use crate::reaction::{PatchSlope, ReactionError, ReactionField};

#[derive(Debug, Clone, PartialEq)]
pub enum SpectralError {
    Grid(GridError),
    Reaction(ReactionError),
    Linear(LinalgError),
    IterationFailure(String),
}

impl std::fmt::Display for SpectralError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpectralError::Grid(e) => write!(f, "{e}"),
            SpectralError::Reaction(e) => write!(f, "{e}"),
            SpectralError::Linear(e) => write!(f, "{e}"),
            SpectralError::IterationFailure(s) => write!(f, "eigensolver failed: {s}"),
        }
    }
}

impl std::error::Error for SpectralError {}

impl From<GridError> for SpectralError {
    fn from(e: GridError) -> Self {
        SpectralError::Grid(e)
    }
}
impl From<ReactionError> for SpectralError {
    fn from(e: ReactionError) -> Self {
        SpectralError::Reaction(e)
    }
}
impl From<LinalgError> for SpectralError {
    fn from(e: LinalgError) -> Self {
        SpectralError::Linear(e)
    }
}

/// Lowest eigenpair of the tilted linearization.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda0: f64,
    /// Max-normalized, positive ground state on the full grid (zero ends).
    pub eigenfunction: Field,
    /// Max-norm residual of the eigen equation at the returned pair.
    pub residual: f64,
}

/// Number of eigenvalues of the symmetric tridiagonal matrix
/// (diag, constant off-diagonal `off`) strictly below `x`.
fn count_below(diag: &[f64], off: f64, x: f64) -> usize {
    let off2 = off * off;
    let pivmin = 1e-290;
    let mut count = 0;
    let mut q = 1.0; // previous pivot
    for (i, &d) in diag.iter().enumerate() {
        let mut p = d - x;
        if i > 0 {
            p -= off2 / q;
        }
        if p < 0.0 {
            count += 1;
        }
        q = if p.abs() < pivmin { -pivmin } else { p };
    }
    count
}

/// Ground state of `-D2 + V` with homogeneous Dirichlet ends, where `V` is
/// given on every grid node (boundary values unused).
pub fn ground_state_of_potential(grid: &Grid, v: &[f64]) -> Result<EigenResult, SpectralError> {
    if v.len() != grid.n {
        return Err(SpectralError::IterationFailure(format!(
            "potential has {} samples for {} nodes",
            v.len(),
            grid.n
        )));
    }
    let h = grid.h();
    let h2 = h * h;
    let m = grid.n - 2;
    let off = -1.0 / h2;
    let diag: Vec<f64> = (1..=m).map(|i| 2.0 / h2 + v[i]).collect();

    // Sturm bisection for the smallest eigenvalue.
    let dmin = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut lo = dmin - 2.0 * off.abs();
    let mut hi = dmax + 2.0 * off.abs();
    let scale = dmax.abs().max(dmin.abs()) + 2.0 * off.abs();
    for _ in 0..200 {
        if hi - lo <= 1e-12 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if count_below(&diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }

    // Shifted inverse iteration; the shift sits strictly below the target,
    // so the shifted matrix stays positive definite.
    let sigma = lo - 1e-9 * scale;
    let sub = vec![off; m - 1];
    let sup = vec![off; m - 1];
    let shifted: Vec<f64> = diag.iter().map(|d| d - sigma).collect();
    let fact = tri_factor(&sub, &shifted, &sup)?;
    // symmetric positive start concentrated where the potential is lowest
    let mut x: Vec<f64> = (1..=m)
        .map(|i| {
            let z = grid.node(i);
            (-(z / (0.25 * (grid.z_max - grid.z_min))).powi(2)).exp()
        })
        .collect();
    let mut rho = 0.0;
    let mut res = f64::INFINITY;
    let tol = 1e-10;
    let mut converged = false;
    for _ in 0..80 {
        let y = fact.solve(&x);
        let norm = y.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
        if !norm.is_finite() || norm == 0.0 {
            return Err(SpectralError::IterationFailure(
                "inverse iteration collapsed".into(),
            ));
        }
        x = y.iter().map(|v| v / norm).collect();
        let tx = tri_mul(&sub, &diag, &sup, &x);
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..m {
            num += x[i] * tx[i];
            den += x[i] * x[i];
        }
        rho = num / den;
        res = x
            .iter()
            .zip(&tx)
            .map(|(xi, txi)| (txi - rho * xi).abs())
            .fold(0.0, f64::max);
        if res <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SpectralError::IterationFailure(format!(
            "residual stalled at {res:.3e}"
        )));
    }
    // ground state has one sign; report it positive
    let flip = if x.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut full = vec![0.0; grid.n];
    for i in 0..m {
        full[i + 1] = flip * x[i];
    }
    Ok(EigenResult {
        lambda0: rho,
        eigenfunction: Field { grid: *grid, values: full },
        residual: res,
    })
}

/// Potential induced by a piecewise slope, smeared onto nodes with the same
/// patch-edge weights used by the quadrature and the reaction term.
fn potential_from_slope(grid: &Grid, rf: &ReactionField, slope: &PatchSlope) -> Vec<f64> {
    inside_weights(grid, rf)
        .iter()
        .map(|&w| -(w * slope.inside + (1.0 - w) * slope.outside))
        .collect()
}

/// Ground state of the linearization around extinction for `rf`.
pub fn ground_state(rf: &ReactionField, grid: &Grid) -> Result<EigenResult, SpectralError> {
    let lin = rf.linearization_at_zero();
    let v = potential_from_slope(grid, rf, &lin);
    ground_state_of_potential(grid, &v)
}

/// Decay rate of the zero state at speed `c` on spacing `h`:
/// `lambda0` plus the exact drift shift of the fitted operator.
pub fn lambda_c(lambda0: f64, c: f64, h: f64) -> f64 {
    lambda0 + FittedOperator::new(c, h).gamma()
}

/// Marginal speed `2 sqrt(-lambda0)`; `None` when the zero state is already
/// stable at speed zero.
pub fn c_lin(lambda0: f64) -> Option<f64> {
    if lambda0 < 0.0 {
        Some(2.0 * (-lambda0).sqrt())
    } else {
        None
    }
}

/// Upper speed bound from the optimal linear majorant: ground state of the
/// majorant potential, then `2 sqrt(-lambda0)`, clamped to 0 when the
/// majorant is already stable.
pub fn c_upper_kpp(rf: &ReactionField, grid: &Grid) -> Result<f64, SpectralError> {
    let slope = rf.kpp_majorant_slope()?;
    let v = potential_from_slope(grid, rf, &slope);
    let gs = ground_state_of_potential(grid, &v)?;
    Ok(c_lin(gs.lambda0).unwrap_or(0.0))
}

/// Bound-state energy `lambda` of the symmetric square well: depth `a` on a
/// patch of width `l`, barrier height `delta` outside, on the whole line.
///
/// Solves `sqrt(a + lambda) tan(sqrt(a + lambda) l / 2) = sqrt(delta - lambda)`
/// on the principal branch by bisection. Returns `None` for degenerate
/// parameters or when no sign change brackets a root.
pub fn square_well_oracle(a: f64, delta: f64, l: f64) -> Option<f64> {
    if !(a > 0.0) || !(delta > 0.0) || !(l > 0.0) {
        return None;
    }
    if !a.is_finite() || !delta.is_finite() || !l.is_finite() {
        return None;
    }
    let pole = (std::f64::consts::PI / l).powi(2) - a;
    let hi_cap = delta.min(pole);
    let span = hi_cap + a; // width of the admissible lambda interval
    if span <= 0.0 {
        return None;
    }
    let eps = 1e-13 * span.max(1.0);
    let g = |lam: f64| {
        let k = (a + lam).sqrt();
        k * (0.5 * k * l).tan() - (delta - lam).sqrt()
    };
    let lo = -a + eps;
    let hi = hi_cap - eps;
    if !(hi > lo) || g(lo) >= 0.0 || g(hi) <= 0.0 {
        return None;
    }
    crate::validate::bisect_root(&g, lo, hi, 1e-14)
}
