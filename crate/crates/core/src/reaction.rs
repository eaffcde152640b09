//! Reaction terms for a habitat patch moving at constant speed.
//!
//! In the frame of the patch the growth law is
//! `f(z, u) = f0(u)` strictly inside the patch interval and `-delta * u`
//! outside of it. The inside polynomial `f0` comes from a small catalog
//! (logistic, degenerate monostable, bistable, quintic) or from custom
//! coefficients.
//!
//! Convention for out-of-range states: inside the patch `f0` is extended by
//! zero for negative arguments, and outside the patch the pure-decay branch
//! `-delta * u` applies to all real `u`. With this choice clamping a state
//! into `[0, M]` can never increase the stored potential, which the energy
//! module relies on.

use std::fmt;

/// Which catalog entry a profile came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Kpp,
    Monostable,
    Bistable,
    Multistable,
    CustomPolynomial,
}

/// Errors from profile construction and reaction-level queries.
#[derive(Debug, Clone, PartialEq)]
pub enum ReactionError {
    UnknownProfile(String),
    BadPolynomial(String),
    BadParameter(String),
    MaximizationFailure(String),
}

impl fmt::Display for ReactionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReactionError::UnknownProfile(s) => write!(f, "unknown reaction profile: {s}"),
            ReactionError::BadPolynomial(s) => write!(f, "invalid reaction polynomial: {s}"),
            ReactionError::BadParameter(s) => write!(f, "invalid reaction parameter: {s}"),
            ReactionError::MaximizationFailure(s) => {
                write!(f, "slope maximization failed: {s}")
            }
        }
    }
}

impl std::error::Error for ReactionError {}

/// Polynomial growth law used inside the patch.
///
/// `coefficients[k]` multiplies `u^k`, lowest degree first; `coefficients[0]`
/// is always zero so the zero state is an equilibrium. `upper_cap` is a level
/// `M` with `f0 <= 0` on `[M, oo)`; states are clamped to `[0, M]` by the
/// variational routines.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionProfile {
    pub kind: ProfileKind,
    pub coefficients: Vec<f64>,
    pub theta: Option<f64>,
    pub upper_cap: f64,
}

/// Multiply two polynomials given lowest-degree-first.
fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn horner(coeffs: &[f64], u: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * u + c;
    }
    acc
}

impl ReactionProfile {
    /// Logistic growth `u (1 - u)`.
    pub fn kpp() -> Self {
        ReactionProfile {
            kind: ProfileKind::Kpp,
            coefficients: vec![0.0, 1.0, -1.0],
            theta: None,
            upper_cap: 1.0,
        }
    }

    /// Degenerate monostable growth `u^2 (1 - u)`.
    pub fn monostable() -> Self {
        ReactionProfile {
            kind: ProfileKind::Monostable,
            coefficients: vec![0.0, 0.0, 1.0, -1.0],
            theta: None,
            upper_cap: 1.0,
        }
    }

    /// Bistable growth `u (1 - u) (u - theta)` with threshold `theta in (0, 1)`.
    pub fn bistable(theta: f64) -> Result<Self, ReactionError> {
        if !(theta > 0.0 && theta < 1.0) || !theta.is_finite() {
            return Err(ReactionError::BadParameter(format!(
                "bistable threshold must lie in (0,1), got {theta}"
            )));
        }
        let p = ReactionProfile {
            kind: ProfileKind::Bistable,
            coefficients: vec![0.0, -theta, 1.0 + theta, -1.0],
            theta: Some(theta),
            upper_cap: 1.0,
        };
        p.check_shape()?;
        Ok(p)
    }

    /// Quintic with stable states at 0, 1 and 1.5:
    /// `u (1 - u) (u - 0.2) (1.1 - u) (1.5 - u)`.
    pub fn multistable5() -> Self {
        let factors: [&[f64]; 5] = [
            &[0.0, 1.0],
            &[1.0, -1.0],
            &[-0.2, 1.0],
            &[1.1, -1.0],
            &[1.5, -1.0],
        ];
        let mut coeffs: Vec<f64> = factors[0].to_vec();
        for f in &factors[1..] {
            coeffs = poly_mul(&coeffs, f);
        }
        ReactionProfile {
            kind: ProfileKind::Multistable,
            coefficients: coeffs,
            theta: None,
            upper_cap: 1.5,
        }
    }

    /// Custom polynomial from raw coefficients (lowest degree first).
    ///
    /// Requires `coefficients[0] == 0` and a strictly negative leading
    /// coefficient (so large states decay); the all-zero polynomial is also
    /// accepted. The cap `M` is inferred as the largest positive root, with
    /// fallback 1 when the polynomial is nonpositive on the positive axis.
    pub fn custom(coefficients: Vec<f64>) -> Result<Self, ReactionError> {
        if coefficients.is_empty() {
            return Err(ReactionError::BadPolynomial("empty coefficient list".into()));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(ReactionError::BadPolynomial("non-finite coefficient".into()));
        }
        if coefficients[0] != 0.0 {
            return Err(ReactionError::BadPolynomial(
                "constant term must be exactly zero".into(),
            ));
        }
        let trailing = coefficients.iter().rev().find(|c| **c != 0.0);
        let upper_cap = match trailing {
            None => 1.0, // identically zero growth
            Some(&lead) if lead < 0.0 => infer_cap(&coefficients),
            Some(_) => {
                return Err(ReactionError::BadPolynomial(
                    "leading coefficient must be negative".into(),
                ))
            }
        };
        let p = ReactionProfile {
            kind: ProfileKind::CustomPolynomial,
            coefficients,
            theta: None,
            upper_cap,
        };
        p.check_cap()?;
        Ok(p)
    }

    /// Parse a catalog name: `kpp`, `monostable`, `bistable:<theta>`,
    /// `multistable5`, or `poly:[c0,c1,...]`.
    pub fn parse(name: &str) -> Result<Self, ReactionError> {
        let name = name.trim();
        match name {
            "kpp" => return Ok(Self::kpp()),
            "monostable" => return Ok(Self::monostable()),
            "multistable5" => return Ok(Self::multistable5()),
            _ => {}
        }
        if let Some(rest) = name.strip_prefix("bistable:") {
            let theta: f64 = rest
                .trim()
                .parse()
                .map_err(|_| ReactionError::BadParameter(format!("bad threshold: {rest}")))?;
            return Self::bistable(theta);
        }
        if let Some(rest) = name.strip_prefix("poly:") {
            let rest = rest.trim();
            let inner = rest
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(|| {
                    ReactionError::BadPolynomial(format!("expected poly:[c0,c1,...], got {rest}"))
                })?;
            let coeffs: Result<Vec<f64>, _> =
                inner.split(',').map(|t| t.trim().parse::<f64>()).collect();
            let coeffs = coeffs
                .map_err(|_| ReactionError::BadPolynomial(format!("bad coefficient in {rest}")))?;
            return Self::custom(coeffs);
        }
        Err(ReactionError::UnknownProfile(name.to_string()))
    }

    /// Growth polynomial `f0(u)`, evaluated by Horner's rule.
    pub fn f0(&self, u: f64) -> f64 {
        horner(&self.coefficients, u)
    }

    /// Derivative `f0'(u)`.
    pub fn f0_prime(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coefficients.iter().enumerate().skip(1).rev() {
            acc = acc * u + k as f64 * c;
        }
        acc
    }

    /// Antiderivative `F0(u) = integral of f0 from 0 to u` (symbolic).
    pub fn f0_antiderivative(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (k, &c) in self.coefficients.iter().enumerate().rev() {
            acc = acc * u + c / (k + 1) as f64;
        }
        acc * u
    }

    /// Bistable shape: negative on (0, theta), positive on (theta, 1).
    fn check_shape(&self) -> Result<(), ReactionError> {
        let theta = self.theta.expect("shape check needs a threshold");
        for i in 1..400 {
            let s = theta * i as f64 / 400.0;
            if self.f0(s) > 1e-12 {
                return Err(ReactionError::BadPolynomial(format!(
                    "expected decay below threshold, f0({s}) > 0"
                )));
            }
            let t = theta + (1.0 - theta) * i as f64 / 400.0;
            if t < 1.0 - 1e-9 && self.f0(t) < -1e-12 {
                return Err(ReactionError::BadPolynomial(format!(
                    "expected growth above threshold, f0({t}) < 0"
                )));
            }
        }
        Ok(())
    }

    /// `f0 <= 0` past the cap, sampled on `[M, M + 10]`.
    fn check_cap(&self) -> Result<(), ReactionError> {
        for i in 0..=1000 {
            let s = self.upper_cap + 10.0 * i as f64 / 1000.0;
            if self.f0(s) > 1e-12 {
                return Err(ReactionError::BadPolynomial(format!(
                    "f0({s}) > 0 beyond the cap {}",
                    self.upper_cap
                )));
            }
        }
        Ok(())
    }
}

/// Cap inference for custom polynomials: largest positive root of `f0`.
///
/// Scans downward from a Cauchy-style root bound; if `f0` never becomes
/// positive the fallback cap is 1.
fn infer_cap(coeffs: &[f64]) -> f64 {
    let lead_idx = coeffs.iter().rposition(|c| *c != 0.0).expect("nonzero poly");
    let lead = coeffs[lead_idx].abs();
    let bound = 1.0 + coeffs[..lead_idx].iter().map(|c| c.abs()).fold(0.0, f64::max) / lead;
    let n = 8192;
    let mut hi = bound;
    for i in 1..=n {
        let s = bound * (n - i) as f64 / n as f64;
        if s <= 0.0 {
            break;
        }
        if horner(coeffs, s) > 0.0 {
            // root in (s, hi); f0(hi) <= 0 by the scan order
            let f = |x: f64| horner(coeffs, x);
            return crate::validate::bisect_root(&f, s, hi, 1e-12).unwrap_or(s);
        }
        hi = s;
    }
    1.0
}

/// A reaction profile anchored to a patch `(z_left, z_right)` with exterior
/// decay rate `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReactionField {
    pub profile: ReactionProfile,
    pub z_left: f64,
    pub z_right: f64,
    pub delta: f64,
}

impl ReactionField {
    /// `z_left <= z_right` (equal means an empty patch) and `delta > 0`.
    pub fn new(
        profile: ReactionProfile,
        z_left: f64,
        z_right: f64,
        delta: f64,
    ) -> Result<Self, ReactionError> {
        if !(z_left <= z_right) || !z_left.is_finite() || !z_right.is_finite() {
            return Err(ReactionError::BadParameter(format!(
                "patch edges must be finite with z_left <= z_right, got [{z_left}, {z_right}]"
            )));
        }
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(ReactionError::BadParameter(format!(
                "exterior decay rate must be positive, got {delta}"
            )));
        }
        Ok(ReactionField { profile, z_left, z_right, delta })
    }

    /// Centered patch of width `width`.
    pub fn centered(profile: ReactionProfile, width: f64, delta: f64) -> Result<Self, ReactionError> {
        Self::new(profile, -0.5 * width, 0.5 * width, delta)
    }

    /// Strict interior test; points exactly on an edge count as outside.
    #[inline]
    pub fn inside(&self, z: f64) -> bool {
        z > self.z_left && z < self.z_right
    }

    /// Reaction rate `f(z, u)`.
    #[inline]
    pub fn eval_f(&self, z: f64, u: f64) -> f64 {
        if self.inside(z) {
            if u > 0.0 {
                self.profile.f0(u)
            } else {
                0.0
            }
        } else {
            -self.delta * u
        }
    }

    /// Potential density `F(z, u) = integral of f(z, .) from 0 to u`.
    #[inline]
    pub fn eval_big_f(&self, z: f64, u: f64) -> f64 {
        if self.inside(z) {
            if u > 0.0 {
                self.profile.f0_antiderivative(u)
            } else {
                0.0
            }
        } else {
            -0.5 * self.delta * u * u
        }
    }

    /// State derivative `df/du`, right-continuous at `u = 0` inside the patch.
    #[inline]
    pub fn eval_df_du(&self, z: f64, u: f64) -> f64 {
        if self.inside(z) {
            if u >= 0.0 {
                self.profile.f0_prime(u)
            } else {
                0.0
            }
        } else {
            -self.delta
        }
    }

    /// Growth rate of the zero state as a function of position: `f0'(0)`
    /// inside the patch, `-delta` outside.
    pub fn linearization_at_zero(&self) -> PatchSlope {
        PatchSlope {
            inside: self.profile.f0_prime(0.0),
            outside: -self.delta,
            z_left: self.z_left,
            z_right: self.z_right,
        }
    }

    /// Optimal linear majorant slope: the smallest `r` with `f0(s) <= r s`
    /// for all `s > 0`, i.e. `sup f0(s)/s` over `(0, M]`, never below `f0'(0)`.
    /// Outside the patch the slope is `-delta` as usual.
    pub fn kpp_majorant_slope(&self) -> Result<PatchSlope, ReactionError> {
        let m = self.profile.upper_cap;
        if !(m > 0.0) || !m.is_finite() {
            return Err(ReactionError::MaximizationFailure(format!(
                "cannot maximize over a degenerate state range (0, {m}]"
            )));
        }
        if self.profile.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(ReactionError::MaximizationFailure(
                "non-finite coefficients".into(),
            ));
        }
        // f0(s)/s is itself a polynomial because f0(0) = 0.
        let ratio: Vec<f64> = self.profile.coefficients[1..].to_vec();
        let slope_limit = self.profile.f0_prime(0.0); // value of the ratio at s = 0
        let mut best = ratio.last().map_or(slope_limit, |_| horner(&ratio, m));
        // interior critical points of the ratio polynomial
        let deriv: Vec<f64> = ratio
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect();
        if !deriv.is_empty() {
            let n = 4096;
            let mut prev_s = 0.0;
            let mut prev_d = horner(&deriv, prev_s);
            for i in 1..=n {
                let s = m * i as f64 / n as f64;
                let d = horner(&deriv, s);
                if prev_d == 0.0 || (prev_d > 0.0) != (d > 0.0) {
                    let g = |x: f64| horner(&deriv, x);
                    if let Some(root) = crate::validate::bisect_root(&g, prev_s, s, 1e-14) {
                        best = best.max(horner(&ratio, root));
                    }
                }
                prev_s = s;
                prev_d = d;
            }
        }
        Ok(PatchSlope {
            inside: best.max(slope_limit),
            outside: -self.delta,
            z_left: self.z_left,
            z_right: self.z_right,
        })
    }
}

/// A piecewise-constant linear-in-`u` rate: one slope inside the patch,
/// another outside. Produced by linearization and by majorant fitting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSlope {
    pub inside: f64,
    pub outside: f64,
    pub z_left: f64,
    pub z_right: f64,
}

impl PatchSlope {
    #[inline]
    pub fn at(&self, z: f64) -> f64 {
        if z > self.z_left && z < self.z_right {
            self.inside
        } else {
            self.outside
        }
    }
}

/// Net growth over one unit of state: exact polynomial integral of `f0`
/// over `[0, 1]`.
pub fn positive_mass(profile: &ReactionProfile) -> f64 {
    profile
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, c)| c / (k + 1) as f64)
        .sum()
}
