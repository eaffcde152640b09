//! IMEX time stepping for the shifting-habitat flow, with dissipation
//! diagnostics and long-time classification.
//!
//! The transport-diffusion part is treated implicitly through the fitted
//! operator (one tridiagonal solve per step) and the reaction explicitly, so
//! every root of `Au + f(z, u) = 0` is a fixed point of both steppers up to
//! solver rounding. Energy decrease along trajectories is not enforced; it is
//! measured, and `dissipation_check` compares the drop in `E` against the
//! weighted norm of the time derivative.

use crate::energy::{energy, EnergyError};
use crate::grid::{Field, Grid, GridError, WeightedNorms};
use crate::linalg::{tri_factor, LinalgError, TriFactor};
use crate::operator::{inside_weights, reaction_term, FittedOperator};
use crate::reaction::ReactionField;
use crate::spectral::{ground_state, lambda_c, SpectralError};
use std::fmt;

#[derive(Debug)]
pub enum EvolutionError {
    Grid(GridError),
    Energy(EnergyError),
    Linear(LinalgError),
    Spectral(SpectralError),
    BadConfig(String),
    /// The comparison-principle witness could not be set up: either the
    /// linearization does not decay, or the profile never fits under the
    /// admissible envelope.
    PreconditionUnverifiable(String),
}

impl fmt::Display for EvolutionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvolutionError::Grid(e) => write!(f, "grid error: {e}"),
            EvolutionError::Energy(e) => write!(f, "energy error: {e}"),
            EvolutionError::Linear(e) => write!(f, "linear step solve failed: {e}"),
            EvolutionError::Spectral(e) => write!(f, "spectral error: {e}"),
            EvolutionError::BadConfig(msg) => write!(f, "bad scheme config: {msg}"),
            EvolutionError::PreconditionUnverifiable(msg) => {
                write!(f, "envelope precondition unverifiable: {msg}")
            }
        }
    }
}

impl std::error::Error for EvolutionError {}

impl From<GridError> for EvolutionError {
    fn from(e: GridError) -> Self {
        EvolutionError::Grid(e)
    }
}

impl From<EnergyError> for EvolutionError {
    fn from(e: EnergyError) -> Self {
        EvolutionError::Energy(e)
    }
}

impl From<LinalgError> for EvolutionError {
    fn from(e: LinalgError) -> Self {
        EvolutionError::Linear(e)
    }
}

impl From<SpectralError> for EvolutionError {
    fn from(e: SpectralError) -> Self {
        EvolutionError::Spectral(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// First order: backward Euler on the linear part, forward Euler reaction.
    BackwardEuler,
    /// Second order: trapezoidal linear part, Adams-Bashforth reaction.
    CrankNicolson,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeConfig {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    /// Diagnostics are recorded every this many steps (plus the final step).
    pub sample_every: usize,
    /// Clamp negative nodal values to zero after each step, counting them.
    pub clamp_negative: bool,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            dt: 0.1,
            t_final: 150.0,
            scheme: Scheme::BackwardEuler,
            sample_every: 1,
            clamp_negative: true,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(EvolutionError::BadConfig(format!(
                "dt must be finite and positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return Err(EvolutionError::BadConfig(format!(
                "final time must satisfy dt <= T, got dt = {}, T = {}",
                self.dt, self.t_final
            )));
        }
        if self.sample_every == 0 {
            return Err(EvolutionError::BadConfig(
                "sample_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// One diagnostics row: time, plain population integral, weighted energy,
/// finite-difference dissipation `|u_t|^2` in the weighted norm (0 on the
/// first row), and the sup-norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub population: f64,
    pub energy: f64,
    pub dissipation: f64,
    pub sup_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryDiagnostics {
    pub samples: Vec<Sample>,
    /// Fields captured at 0.7 T, 0.8 T, 0.9 T, and T, in that order.
    pub late_snapshots: Vec<Field>,
    pub clamp_count: usize,
    /// Most negative nodal value seen over the whole run (after clamping,
    /// so with the clamp disabled this is the raw scheme minimum).
    pub min_seen: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictKind {
    Extinct,
    Persist,
    Undecided,
}

impl fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerdictKind::Extinct => write!(f, "Extinct"),
            VerdictKind::Persist => write!(f, "Persist"),
            VerdictKind::Undecided => write!(f, "Undecided"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongtimeVerdict {
    pub kind: VerdictKind,
    pub final_population: f64,
    pub final_sup: f64,
    /// `|E(T) - E(start of trend window)|`.
    pub energy_drift: f64,
}

/// Thresholds behind the verdict; the defaults match how the trajectory
/// figures are usually read by eye.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyThresholds {
    /// Extinct needs the final sup-norm below this...
    pub sup_extinct: f64,
    /// ...and Persist needs it above this.
    pub sup_persist: f64,
    /// Persist additionally needs the energy drift over the trend window
    /// below this, relative to the energy scale: the weighted energy spans
    /// many decades across speeds, so an absolute cutoff would be
    /// unreachable roundoff at fast shifts and trivially loose at slow ones.
    pub energy_flat: f64,
    /// Fraction of the run (from the end) used as the trend window.
    pub trend_window: f64,
}

impl Default for ClassifyThresholds {
    fn default() -> Self {
        ClassifyThresholds {
            sup_extinct: 1e-3,
            sup_persist: 1e-2,
            energy_flat: 1e-4,
            trend_window: 0.1,
        }
    }
}

/// `u_i = amplitude * exp(-((z_i - center) / width)^2)`.
pub fn gaussian_ic(grid: &Grid, amplitude: f64, center: f64, width: f64) -> Field {
    assert!(width > 0.0, "gaussian width must be positive");
    Field::from_fn(*grid, |z| {
        let r = (z - center) / width;
        amplitude * (-r * r).exp()
    })
}

/// Shared stepping state: the implicit matrix is factored once per run.
struct ImexStepper<'a> {
    cfg: &'a SchemeConfig,
    rf: &'a ReactionField,
    op: FittedOperator,
    win: Vec<f64>,
    fac: TriFactor,
    prev_rate: Option<Vec<f64>>,
}

impl<'a> ImexStepper<'a> {
    fn new(
        grid: &Grid,
        c: f64,
        rf: &'a ReactionField,
        cfg: &'a SchemeConfig,
    ) -> Result<Self, EvolutionError> {
        cfg.validate()?;
        let op = FittedOperator::for_grid(c, grid);
        let scale = match cfg.scheme {
            Scheme::BackwardEuler => -cfg.dt,
            Scheme::CrankNicolson => -0.5 * cfg.dt,
        };
        let (sub, diag, sup) = op.interior_matrix(grid.n, 1.0, scale);
        let fac = tri_factor(&sub, &diag, &sup)?;
        Ok(ImexStepper {
            cfg,
            rf,
            op,
            win: inside_weights(grid, rf),
            fac,
            prev_rate: None,
        })
    }

    /// Advances `u` by one step in place; returns how many nodes were
    /// clamped to zero.
    fn step(&mut self, u: &mut Field) -> usize {
        let n = u.grid.n;
        let dt = self.cfg.dt;
        let rate = reaction_term(self.rf, &self.win, &u.values);
        let mut rhs = vec![0.0; n - 2];
        match self.cfg.scheme {
            Scheme::BackwardEuler => {
                for i in 1..n - 1 {
                    rhs[i - 1] = u.values[i] + dt * rate[i];
                }
            }
            Scheme::CrankNicolson => {
                let au = self.op.apply(u);
                if let Some(prev) = &self.prev_rate {
                    for i in 1..n - 1 {
                        rhs[i - 1] = u.values[i]
                            + 0.5 * dt * au.values[i]
                            + dt * (1.5 * rate[i] - 0.5 * prev[i]);
                    }
                } else {
                    // No history yet: forward Euler reaction keeps the
                    // scheme self-starting without hurting the global order.
                    for i in 1..n - 1 {
                        rhs[i - 1] = u.values[i] + 0.5 * dt * au.values[i] + dt * rate[i];
                    }
                }
            }
        }
        let x = self.fac.solve(&rhs);
        u.values[0] = 0.0;
        u.values[n - 1] = 0.0;
        let mut clamped = 0;
        for i in 1..n - 1 {
            let mut val = x[i - 1];
            if self.cfg.clamp_negative && val < 0.0 {
                val = 0.0;
                clamped += 1;
            }
            u.values[i] = val;
        }
        self.prev_rate = Some(rate);
        clamped
    }
}

/// One cold step from `u`; returns the new field and the clamp count.
pub fn imex_step(
    u: &Field,
    c: f64,
    rf: &ReactionField,
    cfg: &SchemeConfig,
) -> Result<(Field, usize), EvolutionError> {
    let mut stepper = ImexStepper::new(&u.grid, c, rf, cfg)?;
    let mut out = u.clone();
    let clamped = stepper.step(&mut out);
    Ok((out, clamped))
}

fn record_sample(
    diag: &mut TrajectoryDiagnostics,
    prev: &mut Option<(f64, Field)>,
    t: f64,
    u: &Field,
    c: f64,
    rf: &ReactionField,
    w: &WeightedNorms,
) -> Result<(), EvolutionError> {
    let e = energy(u, c, rf)?;
    let dissipation = match prev {
        Some((tp, up)) => {
            let d = t - *tp;
            w.l2_dist_sq(u, up)? / (d * d)
        }
        None => 0.0,
    };
    diag.samples.push(Sample {
        t,
        population: u.trapezoid(),
        energy: e.value,
        dissipation,
        sup_norm: u.sup_norm(),
    });
    *prev = Some((t, u.clone()));
    Ok(())
}

/// Runs the flow to `T` and returns the final field with sampled diagnostics.
pub fn evolve(
    u0: &Field,
    c: f64,
    rf: &ReactionField,
    cfg: &SchemeConfig,
) -> Result<(Field, TrajectoryDiagnostics), EvolutionError> {
    let grid = u0.grid;
    let w = WeightedNorms::new(c)?;
    let mut stepper = ImexStepper::new(&grid, c, rf, cfg)?;
    let n_steps = (cfg.t_final / cfg.dt).round().max(1.0) as usize;
    let snap_at: Vec<usize> = [0.7, 0.8, 0.9, 1.0]
        .iter()
        .map(|f| (f * n_steps as f64).round() as usize)
        .collect();

    let mut u = u0.clone();
    let mut diag = TrajectoryDiagnostics {
        samples: Vec::with_capacity(n_steps / cfg.sample_every + 2),
        late_snapshots: Vec::with_capacity(4),
        clamp_count: 0,
        min_seen: u.min_value(),
    };
    let mut prev = None;
    record_sample(&mut diag, &mut prev, 0.0, &u, c, rf, &w)?;
    for k in 1..=n_steps {
        diag.clamp_count += stepper.step(&mut u);
        diag.min_seen = diag.min_seen.min(u.min_value());
        if k % cfg.sample_every == 0 || k == n_steps {
            record_sample(&mut diag, &mut prev, k as f64 * cfg.dt, &u, c, rf, &w)?;
        }
        for (j, &s) in snap_at.iter().enumerate() {
            if k == s && diag.late_snapshots.len() == j {
                diag.late_snapshots.push(u.clone());
            }
        }
    }
    Ok((u, diag))
}

/// Reads the sampled trajectory against the thresholds.
pub fn classify(diag: &TrajectoryDiagnostics, th: &ClassifyThresholds) -> LongtimeVerdict {
    let samples = &diag.samples;
    assert!(!samples.is_empty(), "classify needs at least one sample");
    let last = samples[samples.len() - 1];
    let t_ref = last.t * (1.0 - th.trend_window);
    let tail_start = samples
        .iter()
        .position(|s| s.t >= t_ref - 1e-12)
        .unwrap_or(samples.len() - 1);
    let tail = &samples[tail_start..];
    let p_scale = samples.iter().fold(0.0f64, |m, s| m.max(s.population.abs()));
    let slack = 1e-9 * (1.0 + p_scale);
    let p_nonincreasing = tail
        .windows(2)
        .all(|w| w[1].population <= w[0].population + slack);
    let energy_drift = (last.energy - tail[0].energy).abs();
    let flat_allowance = th.energy_flat * (1.0 + last.energy.abs());
    let kind = if last.sup_norm < th.sup_extinct && p_nonincreasing {
        VerdictKind::Extinct
    } else if last.sup_norm > th.sup_persist && energy_drift < flat_allowance {
        VerdictKind::Persist
    } else {
        VerdictKind::Undecided
    };
    LongtimeVerdict {
        kind,
        final_population: last.population,
        final_sup: last.sup_norm,
        energy_drift,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationReport {
    /// Every sampled interval satisfies
    /// `|dE/dt + dissipation| <= 0.05 max(|..|) + 1e-6`.
    pub ok: bool,
    /// Largest `|lhs - rhs| / (max(|lhs|, |rhs|) + 1e-6)` over the window.
    pub worst_rel: f64,
    pub checked: usize,
}

/// Compares the finite-difference energy drop against the recorded
/// dissipation on every sampled interval.
pub fn dissipation_check(diag: &TrajectoryDiagnostics) -> DissipationReport {
    let s = &diag.samples;
    assert!(s.len() >= 3, "dissipation check needs at least three samples");
    let mut ok = true;
    let mut worst_rel = 0.0f64;
    let mut checked = 0;
    for w in s.windows(2) {
        let dt = w[1].t - w[0].t;
        let lhs = -(w[1].energy - w[0].energy) / dt;
        let rhs = w[1].dissipation;
        let err = (lhs - rhs).abs();
        let scale = lhs.abs().max(rhs.abs());
        if err > 0.05 * scale + 1e-6 {
            ok = false;
        }
        worst_rel = worst_rel.max(err / (scale + 1e-6));
        checked += 1;
    }
    DissipationReport { ok, worst_rel, checked }
}

/// Largest pairwise weighted-H1 distance between the snapshots; small values
/// certify Cauchy behavior of the late-time trajectory.
pub fn convergence_check(snapshots: &[Field], c: f64) -> Result<f64, EvolutionError> {
    assert!(snapshots.len() >= 2, "need at least two snapshots to compare");
    let w = WeightedNorms::new(c)?;
    let mut worst = 0.0f64;
    for i in 0..snapshots.len() {
        for j in i + 1..snapshots.len() {
            worst = worst.max(w.h1_dist_sq(&snapshots[i], &snapshots[j])?.sqrt());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeReport {
    pub lambda_c: f64,
    /// Largest admissible envelope amplitude: below it the reaction stays
    /// under its linearization plus half the decay rate.
    pub kappa_max: f64,
    /// Amplitude actually fitted at `t_start`.
    pub kappa: f64,
    /// First sampled time at which the profile fits under the envelope.
    pub t_start: f64,
    /// Largest `u_i - allowed_i` over all later checks; nonpositive iff the
    /// envelope held.
    pub worst_excess: f64,
    pub holds: bool,
}

fn sup_ratio(u: &Field, phi: &Field) -> f64 {
    let n = u.grid.n;
    let mut worst = 0.0f64;
    for i in 1..n - 1 {
        let ui = u.values[i].max(0.0);
        let pi = phi.values[i];
        let r = if pi > 0.0 {
            ui / pi
        } else if ui > 1e-12 {
            f64::INFINITY
        } else {
            0.0
        };
        if r > worst {
            worst = r;
        }
    }
    worst
}

/// Comparison-principle witness of extinction: once the profile fits under
/// `kappa * phi` with `kappa <= kappa_max`, it must stay below
/// `kappa phi e^{-(lambda_c / 2)(t - t_start)}` ever after.
///
/// `phi` is the tilted ground state `e^{-cz/2} psi`, max-normalized, which
/// matches the spatial decay of the flow itself; the Gaussian initial tails
/// are fatter than `phi`'s, so the fit is usually achieved only after the
/// exterior damping has trimmed them, hence the search over start times.
pub fn linear_stability_envelope(
    u0: &Field,
    rf: &ReactionField,
    c: f64,
    t_final: f64,
) -> Result<EnvelopeReport, EvolutionError> {
    let grid = u0.grid;
    let gs = ground_state(rf, &grid)?;
    let lc = lambda_c(gs.lambda0, c, grid.h());
    if lc <= 0.0 {
        return Err(EvolutionError::PreconditionUnverifiable(format!(
            "decay rate lambda_c = {lc:.6} is not positive"
        )));
    }
    let mut phi = gs.eigenfunction.clone();
    for i in 0..grid.n {
        phi.values[i] *= (-0.5 * c * grid.node(i)).exp();
    }
    let scale = phi.sup_norm();
    for v in &mut phi.values {
        *v /= scale;
    }

    // Largest amplitude on which f0(s) <= (f0'(0) + lambda_c / 2) s, found by
    // scan plus bisection; the half rate left over absorbs the nonlinearity.
    let slope = rf.profile.f0_prime(0.0) + 0.5 * lc;
    let cap = rf.profile.upper_cap;
    let excess = |s: f64| rf.profile.f0(s) - slope * s;
    let mut kappa_max = cap;
    let mut prev_s = 0.0;
    for k in 1..=2000 {
        let s = cap * k as f64 / 2000.0;
        if excess(s) > 0.0 {
            let (mut lo, mut hi) = (prev_s, s);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if excess(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            kappa_max = lo;
            break;
        }
        prev_s = s;
    }

    let cfg = SchemeConfig { t_final, ..SchemeConfig::default() };
    let mut stepper = ImexStepper::new(&grid, c, rf, &cfg)?;
    let n_steps = (cfg.t_final / cfg.dt).round().max(1.0) as usize;
    let check_every = 5usize;
    let rate = 0.5 * lc;

    let mut u = u0.clone();
    let mut armed = false;
    let mut kappa = f64::NAN;
    let mut t_start = f64::NAN;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut k_step = 0usize;
    loop {
        if k_step % check_every == 0 || k_step == n_steps {
            let t = k_step as f64 * cfg.dt;
            if !armed {
                let ratio = sup_ratio(&u, &phi);
                if ratio <= kappa_max {
                    armed = true;
                    kappa = ratio;
                    t_start = t;
                }
            } else {
                let decay = (-rate * (t - t_start)).exp();
                for i in 1..grid.n - 1 {
                    let allowed = kappa * phi.values[i] * decay * (1.0 + 1e-9) + 1e-12;
                    let excess = u.values[i] - allowed;
                    if excess > worst_excess {
                        worst_excess = excess;
                    }
                }
            }
        }
        if k_step == n_steps {
            break;
        }
        stepper.step(&mut u);
        k_step += 1;
    }
    if !armed {
        return Err(EvolutionError::PreconditionUnverifiable(format!(
            "profile never fits under kappa * phi with kappa <= {kappa_max:.6}"
        )));
    }
    Ok(EnvelopeReport {
        lambda_c: lc,
        kappa_max,
        kappa,
        t_start,
        worst_excess,
        holds: worst_excess <= 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reaction::ReactionProfile;
    use crate::stationary::{newton_solve, NewtonOpts};

    fn standard_grid() -> Grid {
        Grid::new(-150.0, 150.0, 3001).unwrap()
    }

    fn bistable_field() -> ReactionField {
        ReactionField::centered(ReactionProfile::bistable(0.2).unwrap(), 30.0, 1.0).unwrap()
    }

    fn kpp_field() -> ReactionField {
        ReactionField::centered(ReactionProfile::kpp(), 30.0, 1.0).unwrap()
    }

    fn cfg(scheme: Scheme, dt: f64, t_final: f64, sample_every: usize) -> SchemeConfig {
        SchemeConfig { dt, t_final, scheme, sample_every, clamp_negative: true }
    }

    #[test]
    fn zero_state_is_a_step_equilibrium() {
        let grid = standard_grid();
        let rf = bistable_field();
        let u = Field::zeros(grid);
        for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
            let (next, clamped) = imex_step(&u, 0.3, &rf, &cfg(scheme, 0.1, 1.0, 1)).unwrap();
            assert_eq!(next.values, u.values);
            assert_eq!(clamped, 0);
        }
    }

    #[test]
    fn stationary_wave_is_a_step_fixed_point() {
        let grid = standard_grid();
        let rf = bistable_field();
        let c = 0.2;
        let seed = crate::energy::plateau_seed(&grid, &rf);
        let opts = NewtonOpts { tol: 1e-12, ..NewtonOpts::default() };
        let wave = newton_solve(&seed, c, &rf, opts).unwrap();
        let w = WeightedNorms::new(c).unwrap();
        let dt = 0.1;
        for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
            let (next, _) = imex_step(&wave, c, &rf, &cfg(scheme, dt, 1.0, 1)).unwrap();
            let moved = w.l2_dist_sq(&next, &wave).unwrap().sqrt();
            assert!(
                moved <= 1e-6 * dt,
                "{scheme:?} moved a stationary wave by {moved:.3e}"
            );
        }
    }

    #[test]
    fn pure_decay_matches_the_linear_rate() {
        let grid = standard_grid();
        // Empty patch: the reaction is -delta u everywhere.
        let rf = ReactionField::new(ReactionProfile::kpp(), 0.0, 0.0, 1.0).unwrap();
        let cfg = cfg(Scheme::BackwardEuler, 0.1, 1.0, 1);
        let mut u = gaussian_ic(&grid, 1.0, 0.0, 30.0);
        for _ in 0..20 {
            let before = u.sup_norm();
            let (next, _) = imex_step(&u, 0.0, &rf, &cfg).unwrap();
            let factor = next.sup_norm() / before;
            // Forward Euler reaction gives 1 - delta dt = 0.9 per step, minus
            // a whisker of peak flattening; both sit below e^{-0.9 delta dt}.
            assert!(factor <= (-0.9f64 * 1.0 * 0.1).exp(), "factor {factor}");
            assert!(factor >= 0.899, "factor {factor}");
            u = next;
        }
    }

    #[test]
    fn zero_initial_data_stays_extinct() {
        let grid = standard_grid();
        let rf = bistable_field();
        let u0 = Field::zeros(grid);
        let (final_u, diag) = evolve(&u0, 0.2, &rf, &cfg(Scheme::BackwardEuler, 0.1, 5.0, 10)).unwrap();
        assert_eq!(final_u.sup_norm(), 0.0);
        for s in &diag.samples {
            assert_eq!(s.population, 0.0);
            assert_eq!(s.energy, 0.0);
            assert_eq!(s.sup_norm, 0.0);
        }
        let verdict = classify(&diag, &ClassifyThresholds::default());
        assert_eq!(verdict.kind, VerdictKind::Extinct);
    }

    #[test]
    fn sampled_energy_never_increases() {
        let grid = standard_grid();
        let rf = bistable_field();
        let u0 = gaussian_ic(&grid, 1.0, 0.0, 30.0);
        for scheme in [Scheme::BackwardEuler, Scheme::CrankNicolson] {
            let (_, diag) = evolve(&u0, 0.2, &rf, &cfg(scheme, 0.1, 30.0, 1)).unwrap();
            for w in diag.samples.windows(2) {
                assert!(
                    w[1].energy <= w[0].energy + 1e-6,
                    "{scheme:?} energy rose from {} to {} at t = {}",
                    w[0].energy,
                    w[1].energy,
                    w[1].t
                );
            }
        }
    }

    #[test]
    fn implicit_linear_step_preserves_positivity() {
        let grid = standard_grid();
        let rf = bistable_field();
        let u0 = gaussian_ic(&grid, 1.0, 0.0, 30.0);
        let mut unclamped = cfg(Scheme::BackwardEuler, 0.1, 30.0, 10);
        unclamped.clamp_negative = false;
        let (_, diag) = evolve(&u0, 0.2, &rf, &unclamped).unwrap();
        assert!(diag.min_seen >= -1e-8, "min {}", diag.min_seen);

        let (_, clamped) = evolve(&u0, 0.2, &rf, &cfg(Scheme::BackwardEuler, 0.1, 30.0, 10)).unwrap();
        assert_eq!(clamped.clamp_count, 0);
    }

    #[test]
    fn final_population_converges_at_the_scheme_order() {
        let grid = standard_grid();
        let rf = bistable_field();
        let u0 = gaussian_ic(&grid, 1.0, 0.0, 30.0);
        let final_p = |scheme: Scheme, dt: f64| {
            let mut config = cfg(scheme, dt, 10.0, 1_000_000);
            config.clamp_negative = false;
            let (u, _) = evolve(&u0, 0.2, &rf, &config).unwrap();
            u.trapezoid()
        };
        for (scheme, lo, hi) in [
            (Scheme::BackwardEuler, 1.5, 3.0),
            (Scheme::CrankNicolson, 3.0, 6.0),
        ] {
            let p1 = final_p(scheme, 0.2);
            let p2 = final_p(scheme, 0.1);
            let p3 = final_p(scheme, 0.05);
            let ratio = (p1 - p2) / (p2 - p3);
            assert!(
                ratio >= lo && ratio <= hi,
                "{scheme:?} refinement ratio {ratio}"
            );
        }
    }

    #[test]
    fn dissipation_identity_holds_and_sharpens() {
        let grid = standard_grid();
        let rf = bistable_field();
        let u0 = gaussian_ic(&grid, 1.0, 0.0, 30.0);
        let run = |dt: f64| {
            let (_, diag) = evolve(&u0, 0.2, &rf, &cfg(Scheme::BackwardEuler, dt, 20.0, 1)).unwrap();
            dissipation_check(&diag)
        };
        let coarse = run(0.1);
        assert!(coarse.ok, "worst rel {}", coarse.worst_rel);
        let fine = run(0.05);
        assert!(fine.ok);
        assert!(
            fine.worst_rel < 0.8 * coarse.worst_rel,
            "no first-order improvement: {} vs {}",
            fine.worst_rel,
            coarse.worst_rel
        );
    }

    #[test]
    #[should_panic(expected = "three samples")]
    fn dissipation_check_rejects_short_windows() {
        let diag = TrajectoryDiagnostics {
            samples: vec![
                Sample { t: 0.0, population: 0.0, energy: 0.0, dissipation: 0.0, sup_norm: 0.0 },
                Sample { t: 1.0, population: 0.0, energy: 0.0, dissipation: 0.0, sup_norm: 0.0 },
            ],
            late_snapshots: Vec::new(),
            clamp_count: 0,
            min_seen: 0.0,
        };
        dissipation_check(&diag);
    }

    #[test]
    fn late_snapshots_become_cauchy() {
        let grid = standard_grid();
        let defaults = SchemeConfig { sample_every: 100, ..SchemeConfig::default() };
        // Persisting bistable run and an extinct fast-shift run both settle.
        let bist = bistable_field();
        let u0 = gaussian_ic(&grid, 1.0, 0.0, 30.0);
        let (_, diag) = evolve(&u0, 0.2, &bist, &defaults).unwrap();
        assert_eq!(diag.late_snapshots.len(), 4);
        let spread = convergence_check(&diag.late_snapshots, 0.2).unwrap();
        assert!(spread <= 1e-3, "persisting spread {spread:.3e}");

        let kpp = kpp_field();
        let (_, diag) = evolve(&u0, 2.5, &kpp, &defaults).unwrap();
        let spread = convergence_check(&diag.late_snapshots, 2.5).unwrap();
        assert!(spread <= 1e-3, "extinct spread {spread:.3e}");
    }

    #[test]
    fn fast_shift_extinguishes_logistic_growth() {
        let grid = standard_grid();
        let rf = kpp_field();
        let u0 = gaussian_ic(&grid, 1.0, 0.0, 30.0);
        let config = SchemeConfig { sample_every: 10, ..SchemeConfig::default() };
        let (_, diag) = evolve(&u0, 2.5, &rf, &config).unwrap();
        let verdict = classify(&diag, &ClassifyThresholds::default());
        assert_eq!(verdict.kind, VerdictKind::Extinct, "{verdict:?}");
    }

    #[test]
    fn slow_shift_settles_on_the_stationary_wave() {
        let grid = standard_grid();
        let rf = kpp_field();
        let c = 1.0;
        let u0 = gaussian_ic(&grid, 1.0, 0.0, 30.0);
        let config = SchemeConfig { sample_every: 10, ..SchemeConfig::default() };
        let (final_u, diag) = evolve(&u0, c, &rf, &config).unwrap();
        let verdict = classify(&diag, &ClassifyThresholds::default());
        assert_eq!(verdict.kind, VerdictKind::Persist, "{verdict:?}");

        let polished = newton_solve(&final_u, c, &rf, NewtonOpts::default()).unwrap();
        let w = WeightedNorms::new(c).unwrap();
        let moved = w.l2_dist_sq(&polished, &final_u).unwrap().sqrt();
        assert!(moved <= 1e-4, "polish moved the field by {moved:.3e}");
    }

    #[test]
    fn envelope_certifies_subthreshold_extinction() {
        let grid = standard_grid();
        let rf = bistable_field();
        let c = 0.2;
        let u0 = gaussian_ic(&grid, 1e-3, 0.0, 30.0);
        let report = linear_stability_envelope(&u0, &rf, c, 150.0).unwrap();
        assert!(report.lambda_c > 0.0);
        assert!(report.holds, "excess {:.3e}", report.worst_excess);
        assert!(report.kappa <= report.kappa_max);
        assert!(report.t_start < 150.0);

        let config = SchemeConfig { sample_every: 10, ..SchemeConfig::default() };
        let (_, diag) = evolve(&u0, c, &rf, &config).unwrap();
        let verdict = classify(&diag, &ClassifyThresholds::default());
        assert_eq!(verdict.kind, VerdictKind::Extinct, "{verdict:?}");
    }

    #[test]
    fn envelope_rejects_large_amplitudes_that_persist() {
        let grid = standard_grid();
        let rf = bistable_field();
        let c = 0.2;
        let u0 = gaussian_ic(&grid, 1.5, 0.0, 30.0);
        match linear_stability_envelope(&u0, &rf, c, 150.0) {
            Err(EvolutionError::PreconditionUnverifiable(_)) => {}
            other => panic!("expected an unverifiable precondition, got {other:?}"),
        }
        let config = SchemeConfig { sample_every: 10, ..SchemeConfig::default() };
        let (_, diag) = evolve(&u0, c, &rf, &config).unwrap();
        let verdict = classify(&diag, &ClassifyThresholds::default());
        assert_eq!(verdict.kind, VerdictKind::Persist, "{verdict:?}");
    }

    #[test]
    fn envelope_accepts_zero_initial_data() {
        let grid = standard_grid();
        let rf = bistable_field();
        let report = linear_stability_envelope(&Field::zeros(grid), &rf, 0.2, 5.0).unwrap();
        assert_eq!(report.kappa, 0.0);
        assert_eq!(report.t_start, 0.0);
        assert!(report.holds);
    }

    #[test]
    fn conflicting_signals_stay_undecided() {
        let mk = |t: f64, population: f64, energy: f64, sup_norm: f64| Sample {
            t,
            population,
            energy,
            dissipation: 0.0,
            sup_norm,
        };
        // Sup-norm sits between the two thresholds: neither verdict fires.
        let diag = TrajectoryDiagnostics {
            samples: vec![mk(0.0, 1.0, -1.0, 5e-3), mk(1.0, 1.0, -1.0, 5e-3), mk(2.0, 1.0, -1.0, 5e-3)],
            late_snapshots: Vec::new(),
            clamp_count: 0,
            min_seen: 0.0,
        };
        let verdict = classify(&diag, &ClassifyThresholds::default());
        assert_eq!(verdict.kind, VerdictKind::Undecided);
    }

    #[test]
    fn config_validation_rejects_bad_shapes() {
        let bad_dt = SchemeConfig { dt: 0.0, ..SchemeConfig::default() };
        assert!(matches!(bad_dt.validate(), Err(EvolutionError::BadConfig(_))));
        let short = SchemeConfig { dt: 1.0, t_final: 0.5, ..SchemeConfig::default() };
        assert!(matches!(short.validate(), Err(EvolutionError::BadConfig(_))));
        let no_samples = SchemeConfig { sample_every: 0, ..SchemeConfig::default() };
        assert!(matches!(no_samples.validate(), Err(EvolutionError::BadConfig(_))));
    }
}
