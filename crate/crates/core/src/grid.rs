//! Uniform 1D grids, sampled fields, and exponentially weighted norms.
//!
//! All state lives on a symmetric interval `[-L/2, L/2]` with uniform
//! spacing. Norms carry the drift weight `e^{c z}`; to keep amplitudes
//! representable every weighted quantity is computed through the tilted
//! variable `v = e^{c z / 2} u`, and a hard exponent guard rejects
//! combinations of speed and domain size that would overflow.

use std::io::{self, BufRead, Write};

/// Largest admissible value of `c * |z|_max / 2`; `exp(340)` is still finite.
pub const MAX_HALF_EXP: f64 = 340.0;

/// Errors from grid construction, weighting, and field I/O.
#[derive(Debug, Clone, PartialEq)]
pub enum GridError {
    BadGrid(String),
    Misaligned(String),
    Overflow { c: f64, z_abs_max: f64 },
    GridMismatch,
    Parse(String),
}

impl std::fmt::Display for GridError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GridError::BadGrid(s) => write!(f, "bad grid: {s}"),
            GridError::Misaligned(s) => write!(f, "grid misalignment: {s}"),
            GridError::Overflow { c, z_abs_max } => write!(
                f,
                "weight exponent overflow: c = {c}, |z| up to {z_abs_max} exceeds exp({MAX_HALF_EXP})"
            ),
            GridError::GridMismatch => write!(f, "fields live on different grids"),
            GridError::Parse(s) => write!(f, "field parse error: {s}"),
        }
    }
}

impl std::error::Error for GridError {}

/// Uniform grid on `[z_min, z_max]` with `n` nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub z_min: f64,
    pub z_max: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(z_min: f64, z_max: f64, n: usize) -> Result<Self, GridError> {
        if !(z_min.is_finite() && z_max.is_finite() && z_max > z_min) {
            return Err(GridError::BadGrid(format!(
                "need finite z_min < z_max, got [{z_min}, {z_max}]"
            )));
        }
        if n < 3 {
            return Err(GridError::BadGrid(format!("need at least 3 nodes, got {n}")));
        }
        Ok(Grid { z_min, z_max, n })
    }

    /// Symmetric domain `[-length/2, length/2]` with spacing `h`.
    /// `length` must be an integer multiple of `h`.
    pub fn symmetric(length: f64, h: f64) -> Result<Self, GridError> {
        if !(length > 0.0 && h > 0.0) || !length.is_finite() || !h.is_finite() {
            return Err(GridError::BadGrid(format!(
                "need positive length and spacing, got L={length}, h={h}"
            )));
        }
        let steps = length / h;
        let k = steps.round();
        if (steps - k).abs() > 1e-9 * steps.max(1.0) {
            return Err(GridError::BadGrid(format!(
                "domain length {length} is not a multiple of spacing {h}"
            )));
        }
        Grid::new(-0.5 * length, 0.5 * length, k as usize + 1)
    }

    #[inline]
    pub fn h(&self) -> f64 {
        (self.z_max - self.z_min) / (self.n - 1) as f64
    }

    #[inline]
    pub fn node(&self, i: usize) -> f64 {
        self.z_min + i as f64 * self.h()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.node(i))
    }

    /// Trapezoid weight of node `i`: `h` in the interior, `h/2` at the ends.
    #[inline]
    pub fn quad_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n - 1 {
            0.5 * self.h()
        } else {
            self.h()
        }
    }

    /// Index of the node nearest to `z`.
    pub fn nearest_node(&self, z: f64) -> usize {
        let i = ((z - self.z_min) / self.h()).round();
        (i.max(0.0) as usize).min(self.n - 1)
    }

    /// Checks that some node sits on `z` to within `1e-12`.
    pub fn check_node_at(&self, z: f64) -> Result<usize, GridError> {
        let i = self.nearest_node(z);
        if (self.node(i) - z).abs() > 1e-12 {
            return Err(GridError::Misaligned(format!(
                "no node within 1e-12 of z = {z} (nearest: {})",
                self.node(i)
            )));
        }
        Ok(i)
    }
}

/// Field sampled on a grid. Plain value type; cloning copies the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: Grid) -> Self {
        Field { grid, values: vec![0.0; grid.n] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().map(f).collect();
        Field { grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Pointwise difference; the fields must share a grid.
    pub fn sub(&self, other: &Field) -> Result<Field, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Field { grid: self.grid, values })
    }

    /// Unweighted trapezoid integral.
    pub fn trapezoid(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| self.grid.quad_weight(i) * v)
            .sum()
    }

    /// Trapezoid integral restricted to nodes with `z < z_cut`.
    pub fn trapezoid_left_of(&self, z_cut: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.node(*i) < z_cut)
            .map(|(i, v)| self.grid.quad_weight(i) * v)
            .sum()
    }

    /// Writes `z,u` rows with 17 significant digits (value-exact round trip).
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "z,u")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.node(i), v)?;
        }
        Ok(())
    }

    /// Reads a `z,u` table written by `write_csv`; the grid is rebuilt from
    /// the first and last abscissae.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Field, GridError> {
        let mut zs = Vec::new();
        let mut us = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line.map_err(|e| GridError::Parse(format!("read failed: {e}")))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if lineno == 0 && line.starts_with('z') {
                continue; // header
            }
            let mut parts = line.split(',');
            let z: f64 = parts
                .next()
                .and_then(|t| t.trim().parse().ok())
                .ok_or_else(|| GridError::Parse(format!("bad z on line {}", lineno + 1)))?;
            let u: f64 = parts
                .next()
                .and_then(|t| t.trim().parse().ok())
                .ok_or_else(|| GridError::Parse(format!("bad u on line {}", lineno + 1)))?;
            zs.push(z);
            us.push(u);
        }
        if zs.len() < 3 {
            return Err(GridError::Parse(format!("only {} rows", zs.len())));
        }
        let grid = Grid::new(zs[0], *zs.last().unwrap(), zs.len())?;
        Ok(Field { grid, values: us })
    }
}

/// Second-order first derivative: central differences in the interior,
/// one-sided three-point stencils at the ends. Exact on quadratics.
pub fn diff_central(u: &Field) -> Field {
    let n = u.grid.n;
    let h = u.grid.h();
    let v = &u.values;
    let mut d = vec![0.0; n];
    d[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    d[n - 1] = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    Field { grid: u.grid, values: d }
}

/// Norms and inner products weighted by `e^{c z}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNorms {
    pub c: f64,
}

impl WeightedNorms {
    /// Nonnegative finite speed.
    pub fn new(c: f64) -> Result<Self, GridError> {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(GridError::BadGrid(format!("speed must be >= 0, got {c}")));
        }
        Ok(WeightedNorms { c })
    }

    /// Rejects grids where `e^{c z / 2}` would overflow.
    pub fn guard(&self, grid: &Grid) -> Result<(), GridError> {
        let z_abs_max = grid.z_min.abs().max(grid.z_max.abs());
        if 0.5 * self.c * z_abs_max > MAX_HALF_EXP {
            return Err(GridError::Overflow { c: self.c, z_abs_max });
        }
        Ok(())
    }

    /// Tilted variable `v = e^{c z / 2} u`.
    pub fn to_v(&self, u: &Field) -> Result<Field, GridError> {
        self.guard(&u.grid)?;
        let values = u
            .values
            .iter()
            .enumerate()
            .map(|(i, x)| (0.5 * self.c * u.grid.node(i)).exp() * x)
            .collect();
        Ok(Field { grid: u.grid, values })
    }

    /// Inverse tilt `u = e^{-c z / 2} v`.
    pub fn from_v(&self, v: &Field) -> Result<Field, GridError> {
        self.guard(&v.grid)?;
        let values = v
            .values
            .iter()
            .enumerate()
            .map(|(i, x)| (-0.5 * self.c * v.grid.node(i)).exp() * x)
            .collect();
        Ok(Field { grid: v.grid, values })
    }

    /// Squared weighted norm: trapezoid sum of `e^{c z} u^2`.
    pub fn l2_sq(&self, u: &Field) -> Result<f64, GridError> {
        let v = self.to_v(u)?;
        Ok(Self::l2_sq_of_v(&v))
    }

    /// Same, starting from the tilted variable.
    pub fn l2_sq_of_v(v: &Field) -> f64 {
        v.values
            .iter()
            .enumerate()
            .map(|(i, x)| v.grid.quad_weight(i) * x * x)
            .sum()
    }

    /// Weighted inner product of two fields on the same grid.
    pub fn inner(&self, a: &Field, b: &Field) -> Result<f64, GridError> {
        if a.grid != b.grid {
            return Err(GridError::GridMismatch);
        }
        let va = self.to_v(a)?;
        let vb = self.to_v(b)?;
        Ok(va
            .values
            .iter()
            .zip(&vb.values)
            .enumerate()
            .map(|(i, (x, y))| va.grid.quad_weight(i) * x * y)
            .sum())
    }

    /// Squared weighted first-order norm. The derivative part is the
    /// trapezoid sum of `(v' - (c/2) v)^2`, which equals the weighted
    /// integral of `(u')^2` up to discretization.
    pub fn h1_sq(&self, u: &Field) -> Result<f64, GridError> {
        let v = self.to_v(u)?;
        let dv = diff_central(&v);
        let mut semi = 0.0;
        for i in 0..v.grid.n {
            let g = dv.values[i] - 0.5 * self.c * v.values[i];
            semi += v.grid.quad_weight(i) * g * g;
        }
        Ok(Self::l2_sq_of_v(&v) + semi)
    }

    /// Squared weighted distance between two fields.
    pub fn l2_dist_sq(&self, a: &Field, b: &Field) -> Result<f64, GridError> {
        self.l2_sq(&a.sub(b)?)
    }

    /// Squared weighted first-order distance.
    pub fn h1_dist_sq(&self, a: &Field, b: &Field) -> Result<f64, GridError> {
        self.h1_sq(&a.sub(b)?)
    }
}
