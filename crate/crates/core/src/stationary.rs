//! Direct solution of the travelling-wave equation by damped Newton
//! iteration, continuation of the wave branch in the frame speed, and
//! verification of the exponential tail bounds.
//!
//! The wave equation in the moving frame is `u_zz + c u_z + f(z, u) = 0`
//! with zero conditions at infinity; discretely, `A u + f(z, u) = 0` with
//! the fitted operator and pinned boundary nodes. Newton iterates on that
//! residual; the energy minimizer is one natural initial guess, a plateau
//! another.

use crate::energy::{energy, Classification, EnergyError};
use crate::grid::{Field, GridError};
use crate::linalg::{tri_factor, LinalgError};
use crate::operator::{inside_weights, reaction_at, reaction_deriv_at, FittedOperator};
use crate::reaction::ReactionField;

#[derive(Debug)]
pub enum StationaryError {
    Grid(GridError),
    Linear(LinalgError),
    /// Damping could not restore residual decrease within the iteration cap.
    NewtonDiverged { iterations: usize, residual: f64 },
    /// Newton converged onto a root that dips below zero; such roots do not
    /// represent wave profiles.
    NegativeSolution { min_value: f64 },
}

impl std::fmt::Display for StationaryError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StationaryError::Grid(e) => write!(f, "{e}"),
            StationaryError::Linear(e) => write!(f, "{e}"),
            StationaryError::NewtonDiverged { iterations, residual } => write!(
                f,
                "Newton stalled after {iterations} iterations at residual {residual:.3e}"
            ),
            StationaryError::NegativeSolution { min_value } => {
                write!(f, "converged profile dips to {min_value:.3e} below zero")
            }
        }
    }
}

impl std::error::Error for StationaryError {}

impl From<GridError> for StationaryError {
    fn from(e: GridError) -> Self {
        StationaryError::Grid(e)
    }
}

impl From<LinalgError> for StationaryError {
    fn from(e: LinalgError) -> Self {
        StationaryError::Linear(e)
    }
}

impl From<EnergyError> for StationaryError {
    fn from(e: EnergyError) -> Self {
        match e {
            EnergyError::Grid(g) => StationaryError::Grid(g),
            // minimization errors cannot reach here; energy evaluation only
            other => StationaryError::Grid(GridError::BadGrid(other.to_string())),
        }
    }
}

/// Tail exponents of the linear far-field problem `u_zz + c u_z = delta u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRates {
    pub lambda_plus: f64,
    pub lambda_minus: f64,
}

/// Roots of `lambda^2 + c lambda = delta`: the admissible growth rate on the
/// left tail (`lambda_plus`) and decay rate on the right (`lambda_minus`).
pub fn decay_rates(c: f64, delta: f64) -> DecayRates {
    assert!(delta > 0.0, "decay requires delta > 0");
    assert!(c >= 0.0, "frame speed must be nonnegative");
    let disc = (c * c + 4.0 * delta).sqrt();
    DecayRates {
        // rationalized form; the direct one cancels for large c
        lambda_plus: 2.0 * delta / (c + disc),
        lambda_minus: -0.5 * (c + disc),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOpts {
    /// Max-norm residual target.
    pub tol: f64,
    pub max_iters: usize,
    /// Step halvings allowed per iteration before declaring divergence.
    pub max_halvings: usize,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts { tol: 1e-10, max_iters: 50, max_halvings: 30 }
    }
}

fn residual_vec(u: &Field, op: &FittedOperator, rf: &ReactionField, win: &[f64]) -> Vec<f64> {
    let au = op.apply(u);
    let n = u.grid.n;
    let mut r = vec![0.0; n];
    for i in 1..n - 1 {
        r[i] = au.values[i] + reaction_at(rf, win[i], u.values[i]);
    }
    r
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

fn newton_traced(
    u_init: &Field,
    c: f64,
    rf: &ReactionField,
    opts: NewtonOpts,
) -> Result<(Field, Vec<f64>), StationaryError> {
    let grid = u_init.grid;
    let n = grid.n;
    let op = FittedOperator::for_grid(c, &grid);
    let win = inside_weights(&grid, rf);

    let mut u = u_init.clone();
    u.values[0] = 0.0;
    u.values[n - 1] = 0.0;
    let mut r = residual_vec(&u, &op, rf, &win);
    let mut res = max_abs(&r);
    let mut history = vec![res];

    for iter in 0..opts.max_iters {
        if res <= opts.tol {
            let min_value = u.min_value();
            if min_value < -1e-8 {
                return Err(StationaryError::NegativeSolution { min_value });
            }
            return Ok((u, history));
        }

        // Jacobian A + diag(f_u) on interior nodes
        let (sub, mut diag, sup) = op.interior_matrix(n, 0.0, 1.0);
        for (j, d) in diag.iter_mut().enumerate() {
            *d += reaction_deriv_at(rf, win[j + 1], u.values[j + 1]);
        }
        let fac = tri_factor(&sub, &diag, &sup)?;
        let rhs: Vec<f64> = r[1..n - 1].iter().map(|&x| -x).collect();
        let step = fac.solve(&rhs);

        // damped update: insist the residual actually shrinks
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let mut trial = u.clone();
            for (j, s) in step.iter().enumerate() {
                trial.values[j + 1] += t * s;
            }
            let rt = residual_vec(&trial, &op, rf, &win);
            let res_t = max_abs(&rt);
            if res_t <= (1.0 - 0.25 * t) * res {
                u = trial;
                r = rt;
                res = res_t;
                history.push(res);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            return Err(StationaryError::NewtonDiverged { iterations: iter + 1, residual: res });
        }
    }

    if res <= opts.tol {
        let min_value = u.min_value();
        if min_value < -1e-8 {
            return Err(StationaryError::NegativeSolution { min_value });
        }
        return Ok((u, history));
    }
    Err(StationaryError::NewtonDiverged { iterations: opts.max_iters, residual: res })
}

/// Damped Newton for the stationary profile, from initial guess `u_init`.
///
/// The converged iterate satisfies `max |A u + f(z,u)| <= opts.tol` on
/// interior nodes and is nonnegative; a root dipping below `-1e-8` is
/// rejected as `NegativeSolution`.
pub fn newton_solve(
    u_init: &Field,
    c: f64,
    rf: &ReactionField,
    opts: NewtonOpts,
) -> Result<Field, StationaryError> {
    newton_traced(u_init, c, rf, opts).map(|(u, _)| u)
}

/// Sup-norm of the stationary residual `A u + f(z, u)` on interior nodes.
pub fn residual_norm(u: &Field, c: f64, rf: &ReactionField) -> f64 {
    let op = FittedOperator::for_grid(c, &u.grid);
    let win = inside_weights(&u.grid, rf);
    max_abs(&residual_vec(u, &op, rf, &win))
}

/// Tail-bound verification report.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub left_ok: bool,
    pub right_ok: bool,
    /// Largest ratio of profile value to its tail bound over both tails;
    /// at most 1 when the profile passes.
    pub worst_margin: f64,
    /// Node index and ratio of the worst violation, if any.
    pub violation: Option<(usize, f64)>,
}

/// Checks the converged profile against the geometric tail bounds of the
/// discrete far-field recurrence, anchored at the patch edges.
///
/// Outside the patch the discrete equation is linear with constant
/// coefficients; its decaying solutions are powers of the characteristic
/// roots, so each tail value must sit under the anchor value propagated at
/// that root, within a `1e-6` relative slack.
pub fn verify_decay(u: &Field, c: f64, rf: &ReactionField) -> DecayReport {
    let grid = u.grid;
    let op = FittedOperator::for_grid(c, &grid);
    let h = grid.h();

    // roots of alpha*mu^2 - (alpha + beta + delta h^2) mu + beta = 0,
    // conjugate-pair form so both are computed without cancellation
    let s = op.alpha + op.beta + rf.delta * h * h;
    let disc = (s * s - 4.0 * op.alpha * op.beta).sqrt();
    let mu_grow = (s + disc) / (2.0 * op.alpha);
    let mu_decay = 2.0 * op.beta / (s + disc);

    let i_left = grid.nearest_node(rf.z_left);
    let i_right = grid.nearest_node(rf.z_right);
    let slack = 1.0 + 1e-6;
    let floor = 1e-250;

    let mut worst = 0.0f64;
    let mut violation: Option<(usize, f64)> = None;
    let mut left_ok = true;
    let mut right_ok = true;

    let mut check = |i: usize, bound: f64, side_ok: &mut bool| {
        let ratio = u.values[i].max(0.0) / (bound + floor);
        if ratio > worst {
            worst = ratio;
            if ratio > 1.0 {
                violation = Some((i, ratio));
            }
        }
        if ratio > 1.0 {
            *side_ok = false;
        }
    };

    let anchor_l = u.values[i_left];
    let mut bound = anchor_l * slack;
    for i in (0..i_left).rev() {
        bound /= mu_grow;
        check(i, bound, &mut left_ok);
    }
    let anchor_r = u.values[i_right];
    bound = anchor_r * slack;
    for i in i_right + 1..grid.n {
        bound *= mu_decay;
        check(i, bound, &mut right_ok);
    }

    DecayReport { left_ok, right_ok, worst_margin: worst, violation }
}

/// One point on a continuation branch.
#[derive(Debug, Clone)]
pub struct BranchEntry {
    pub c: f64,
    pub profile: Field,
    pub residual: f64,
    pub energy: f64,
    pub decay_ok: bool,
}

/// Wave family continued in the frame speed.
#[derive(Debug, Clone)]
pub struct WaveBranch {
    /// Entries in increasing `c`.
    pub entries: Vec<BranchEntry>,
    /// Largest speed reached before continuation stalled; `None` when the
    /// branch extends to `c_max`.
    pub fold_estimate: Option<f64>,
}

fn branch_entry(
    u: &Field,
    c: f64,
    rf: &ReactionField,
    op_res: f64,
) -> Result<BranchEntry, StationaryError> {
    let rep = verify_decay(u, c, rf);
    let e = energy(u, c, rf)?;
    Ok(BranchEntry {
        c,
        profile: u.clone(),
        residual: op_res,
        energy: e.value,
        decay_ok: rep.left_ok && rep.right_ok,
    })
}

/// Marches the wave branch from `c_start` toward `c_max`, warm-starting each
/// solve from the previous profile.
///
/// A failed or trivial solve halves the speed step and retries from the last
/// good profile; once the step falls below `1e-4` the last good speed is the
/// fold estimate. A trivial solution at the very first speed yields an empty
/// branch; a hard failure there propagates.
pub fn continue_in_c(
    seed: &Field,
    c_start: f64,
    c_step: f64,
    c_max: f64,
    rf: &ReactionField,
) -> Result<WaveBranch, StationaryError> {
    assert!(c_step > 0.0 && c_start <= c_max, "need c_start <= c_max and a positive step");
    let opts = NewtonOpts::default();
    let first = newton_solve(seed, c_start, rf, opts)?;
    if first.sup_norm() <= 1e-6 {
        return Ok(WaveBranch { entries: vec![], fold_estimate: None });
    }
    let res0 = {
        let op = FittedOperator::for_grid(c_start, &first.grid);
        let win = inside_weights(&first.grid, rf);
        max_abs(&residual_vec(&first, &op, rf, &win))
    };
    let mut entries = vec![branch_entry(&first, c_start, rf, res0)?];
    let mut u = first;
    let mut c = c_start;
    let mut step = c_step;

    let fold_estimate = loop {
        if c >= c_max - 1e-12 {
            break None;
        }
        if step < 1e-4 {
            break Some(c);
        }
        let c_try = (c + step).min(c_max);
        match newton_traced(&u, c_try, rf, opts) {
            Ok((w, hist)) if w.sup_norm() > 1e-6 => {
                let res = *hist.last().unwrap_or(&0.0);
                entries.push(branch_entry(&w, c_try, rf, res)?);
                u = w;
                c = c_try;
            }
            _ => {
                step *= 0.5;
            }
        }
    };

    Ok(WaveBranch { entries, fold_estimate })
}

/// Classifies a stationary profile the same way descent endpoints are.
pub fn classify_profile(u: &Field) -> Classification {
    if u.sup_norm() > 1e-6 {
        Classification::Wave
    } else {
        Classification::Trivial
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{minimize, plateau_seed, MinimizeOpts};
    use crate::grid::Grid;
    use crate::reaction::ReactionProfile;
    use crate::spectral::{c_lin, ground_state};
    use crate::validate::bisect_root;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn work_grid() -> Grid {
        Grid::symmetric(300.0, 0.1).unwrap()
    }

    fn kpp_field() -> ReactionField {
        ReactionField::new(ReactionProfile::kpp(), -15.0, 15.0, 1.0).unwrap()
    }

    fn bistable_field() -> ReactionField {
        ReactionField::new(ReactionProfile::bistable(0.2).unwrap(), -15.0, 15.0, 1.0).unwrap()
    }

    #[test]
    fn decay_rates_closed_forms() {
        let r = decay_rates(0.0, 1.0);
        assert!((r.lambda_plus - 1.0).abs() < 1e-15);
        assert!((r.lambda_minus + 1.0).abs() < 1e-15);
        let r = decay_rates(3.0, 4.0);
        assert!((r.lambda_plus - 1.0).abs() < 1e-14);
        assert!((r.lambda_minus + 4.0).abs() < 1e-14);
    }

    #[test]
    fn decay_rates_match_root_polishing() {
        // independent root of the characteristic polynomial at c=0.4, delta=1
        let c = 0.4;
        let p = |l: f64| l * l + c * l - 1.0;
        let lp = bisect_root(&p, 0.0, 2.0, 1e-15).unwrap();
        let lm = bisect_root(&p, -2.0, 0.0, 1e-15).unwrap();
        let r = decay_rates(c, 1.0);
        assert!((r.lambda_plus - lp).abs() < 1e-12, "{} vs {lp}", r.lambda_plus);
        assert!((r.lambda_minus - lm).abs() < 1e-12);
        // frozen values
        assert!((r.lambda_plus - 0.8198039027185569).abs() < 1e-15);
        assert!((r.lambda_minus + 1.2198039027185569).abs() < 1e-15);
    }

    #[test]
    fn decay_rates_satisfy_characteristic_equation() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for _ in 0..200 {
            let c: f64 = rng.gen_range(0.0..5.0);
            let delta: f64 = rng.gen_range(1e-3..10.0);
            let r = decay_rates(c, delta);
            for l in [r.lambda_plus, r.lambda_minus] {
                assert!((l * l + c * l - delta).abs() < 1e-12 * (1.0 + delta));
            }
            assert!(r.lambda_minus < 0.0 && r.lambda_plus > 0.0);
        }
    }

    #[test]
    fn empty_patch_contracts_to_zero() {
        let g = work_grid();
        let rf = ReactionField::new(ReactionProfile::kpp(), 0.0, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let mut u0 = Field::zeros(g);
        for v in u0.values.iter_mut().skip(1).take(g.n - 2) {
            *v = rng.gen_range(0.0..0.05);
        }
        let u = newton_solve(&u0, 0.3, &rf, NewtonOpts::default()).unwrap();
        assert!(u.sup_norm() <= 1e-10, "sup {}", u.sup_norm());
    }

    #[test]
    fn bistable_standing_wave_is_an_energy_critical_point() {
        let g = work_grid();
        let rf = bistable_field();
        let seed = plateau_seed(&g, &rf);
        let u = newton_solve(&seed, 0.0, &rf, NewtonOpts::default()).unwrap();
        assert!(u.sup_norm() > 0.5);
        let e = energy(&u, 0.0, &rf).unwrap();
        assert!(e.gradient_l2c_norm <= 1e-8, "gradient norm {}", e.gradient_l2c_norm);
    }

    #[test]
    fn newton_polishes_descent_output_quadratically() {
        let g = work_grid();
        let rf = bistable_field();
        let seed = plateau_seed(&g, &rf);
        let m = minimize(&seed, 0.2, &rf, MinimizeOpts::default()).unwrap();
        let opts = NewtonOpts { tol: 1e-12, ..NewtonOpts::default() };
        let (u, hist) = newton_traced(&m.minimizer, 0.2, &rf, opts).unwrap();
        assert!(hist.len() - 1 <= 5, "polish took {} steps", hist.len() - 1);
        assert!(*hist.last().unwrap() <= 1e-12);
        assert!(u.min_value() >= -1e-12);
        // the last full step contracts far beyond a linear rate
        let k = hist.len() - 1;
        if hist[k - 1] > 1e-15 {
            assert!(hist[k] <= 1e-2 * hist[k - 1], "tail ratio {:?}", &hist[k - 1..]);
        }
    }

    #[test]
    fn newton_converges_quadratically_from_plateau() {
        let g = work_grid();
        let rf = bistable_field();
        let seed = plateau_seed(&g, &rf);
        let (_, hist) = newton_traced(&seed, 0.1, &rf, NewtonOpts::default()).unwrap();
        // once inside the basin, each step roughly squares the residual
        let small: Vec<f64> = hist.iter().copied().filter(|&r| r < 1e-2).collect();
        assert!(small.len() >= 2, "history {hist:?}");
        // the additive term is the residual's own rounding floor
        for w in small.windows(2) {
            assert!(w[1] <= 20.0 * w[0] * w[0] + 1e-13, "not quadratic: {w:?}");
        }
    }

    #[test]
    fn tail_bounds_hold_for_computed_waves() {
        let g = work_grid();
        let rf = bistable_field();
        let seed = plateau_seed(&g, &rf);
        let u = newton_solve(&seed, 0.2, &rf, NewtonOpts::default()).unwrap();
        let rep = verify_decay(&u, 0.2, &rf);
        assert!(rep.left_ok && rep.right_ok, "{rep:?}");
        assert!(rep.worst_margin <= 1.0);
        assert!(rep.violation.is_none());
    }

    #[test]
    fn tail_bounds_reject_padded_tails() {
        let g = work_grid();
        let rf = bistable_field();
        let seed = plateau_seed(&g, &rf);
        let mut u = newton_solve(&seed, 0.2, &rf, NewtonOpts::default()).unwrap();
        for i in 0..g.n {
            if g.node(i) > 40.0 {
                u.values[i] = 0.05;
            }
        }
        let rep = verify_decay(&u, 0.2, &rf);
        assert!(rep.left_ok);
        assert!(!rep.right_ok);
        let (i, ratio) = rep.violation.unwrap();
        assert!(g.node(i) > 40.0);
        assert!(ratio > 1.0);
    }

    #[test]
    fn zero_profile_passes_vacuously() {
        let rep = verify_decay(&Field::zeros(work_grid()), 0.3, &bistable_field());
        assert!(rep.left_ok && rep.right_ok);
        assert_eq!(rep.violation, None);
    }

    #[test]
    fn logistic_branch_reaches_the_linear_speed() {
        let g = work_grid();
        let rf = kpp_field();
        let seed = plateau_seed(&g, &rf);
        let branch = continue_in_c(&seed, 0.1, 0.1, 2.5, &rf).unwrap();
        let fold = branch.fold_estimate.expect("branch should fold below 2.5");
        let gs = ground_state(&rf, &g).unwrap();
        let want = c_lin(gs.lambda0).unwrap();
        assert!((fold - want).abs() <= 0.05, "fold {fold} vs linear speed {want}");
        assert!(branch.entries.len() >= 19);
        for w in branch.entries.windows(2) {
            assert!(w[0].c < w[1].c);
        }
        for e in &branch.entries {
            assert!(e.residual <= 1e-10, "residual {} at c={}", e.residual, e.c);
            assert!(e.decay_ok, "tail bound failed at c={}", e.c);
            assert!(e.profile.min_value() >= -1e-8);
        }
    }

    #[test]
    fn bistable_branch_covers_positive_eigenvalue_speeds() {
        let g = work_grid();
        let rf = bistable_field();
        let seed = plateau_seed(&g, &rf);
        let branch = continue_in_c(&seed, 0.0, 0.05, 0.4, &rf).unwrap();
        assert_eq!(branch.fold_estimate, None, "branch should reach 0.4");
        let last = branch.entries.last().unwrap();
        assert!((last.c - 0.4).abs() < 1e-12);
        for e in &branch.entries {
            assert!(e.energy < 0.0, "wave energy should be negative at c={}", e.c);
        }
    }

    #[test]
    fn branch_energies_tighten_as_the_step_shrinks() {
        let g = work_grid();
        let rf = bistable_field();
        let seed = plateau_seed(&g, &rf);
        let gap = |step: f64| -> f64 {
            let b = continue_in_c(&seed, 0.0, step, 0.3, &rf).unwrap();
            b.entries
                .windows(2)
                .map(|w| (w[1].energy - w[0].energy).abs())
                .fold(0.0f64, f64::max)
        };
        let coarse = gap(0.1);
        let fine = gap(0.05);
        assert!(fine <= 0.75 * coarse, "coarse {coarse} fine {fine}");
    }

    #[test]
    fn beyond_the_upper_speed_only_extinction_remains() {
        let g = work_grid();
        let rf = kpp_field();
        let seed = plateau_seed(&g, &rf);
        match continue_in_c(&seed, 2.2, 0.1, 2.5, &rf) {
            Ok(branch) => assert!(
                branch.entries.is_empty(),
                "no wave should exist at c=2.2, found {} entries",
                branch.entries.len()
            ),
            Err(StationaryError::NewtonDiverged { .. }) => {}
            Err(other) => panic!("unexpected error: {other}"),
        }
    }
}
