//! Experiment drivers: critical-speed sweeps, front-shape studies, the
//! two-front demonstration, and the threshold cross-comparison, together
//! with the flat-config parser and the CSV/manifest writers they share.
//!
//! Runs inside a driver are independent and execute on a rayon pool; rows
//! are ordered by the sweep variable before output and floats are written
//! with the default shortest-roundtrip formatting, so identical configs
//! produce bit-identical CSVs.

use crate::energy::{energy, min_energy_sign_bisect, minimize, EnergyError, MinimizeOpts};
use crate::evolution::{
    classify, evolve, gaussian_ic, ClassifyThresholds, EvolutionError, Scheme, SchemeConfig,
    TrajectoryDiagnostics, VerdictKind,
};
use crate::grid::{diff_central, Field, Grid, GridError};
use crate::reaction::{ProfileKind, ReactionError, ReactionField, ReactionProfile};
use crate::spectral::{c_upper_kpp, SpectralError};
use crate::stationary::{continue_in_c, StationaryError};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use std::fmt;
use std::fs;
use std::path::Path;
use std::time::Instant;

#[derive(Debug)]
pub enum LabError {
    Config(String),
    Reaction(ReactionError),
    Grid(GridError),
    Energy(EnergyError),
    Stationary(StationaryError),
    Evolution(EvolutionError),
    Spectral(SpectralError),
    Io(std::io::Error),
    /// A demonstration assertion failed; the clause says which one.
    DemoFailed { clause: String },
    /// The proven ordering (energy threshold below the linearized upper
    /// bound) failed, which indicates a solver bug rather than mathematics.
    OrderingViolated { delta: f64, c_energy: f64, c_upper: f64 },
}

impl fmt::Display for LabError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabError::Config(msg) => write!(f, "config error: {msg}"),
            LabError::Reaction(e) => write!(f, "config error: {e}"),
            LabError::Grid(e) => write!(f, "grid error: {e}"),
            LabError::Energy(e) => write!(f, "energy error: {e}"),
            LabError::Stationary(e) => write!(f, "stationary solve error: {e}"),
            LabError::Evolution(e) => write!(f, "evolution error: {e}"),
            LabError::Spectral(e) => write!(f, "spectral error: {e}"),
            LabError::Io(e) => write!(f, "io error: {e}"),
            LabError::DemoFailed { clause } => write!(f, "demo assertion failed: {clause}"),
            LabError::OrderingViolated { delta, c_energy, c_upper } => write!(
                f,
                "threshold ordering violated at delta = {delta}: \
                 energy threshold {c_energy} exceeds upper bound {c_upper} + 0.05"
            ),
        }
    }
}

impl std::error::Error for LabError {}

impl From<ReactionError> for LabError {
    fn from(e: ReactionError) -> Self {
        LabError::Reaction(e)
    }
}

impl From<GridError> for LabError {
    fn from(e: GridError) -> Self {
        LabError::Grid(e)
    }
}

impl From<EnergyError> for LabError {
    fn from(e: EnergyError) -> Self {
        LabError::Energy(e)
    }
}

impl From<StationaryError> for LabError {
    fn from(e: StationaryError) -> Self {
        LabError::Stationary(e)
    }
}

impl From<EvolutionError> for LabError {
    fn from(e: EvolutionError) -> Self {
        LabError::Evolution(e)
    }
}

impl From<SpectralError> for LabError {
    fn from(e: SpectralError) -> Self {
        LabError::Spectral(e)
    }
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e)
    }
}

/// Which driver a config is being parsed for; defaults differ per driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabOp {
    Simulate,
    Minimize,
    Wave,
    Eigen,
    Sweep,
    Shapes,
    Bistability,
    Thresholds,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub profile: ReactionProfile,
    pub delta: f64,
    pub domain_length: f64,
    pub patch_width: f64,
    pub t_final: f64,
    pub dt: f64,
    pub h: f64,
    pub c_list: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub scheme: Scheme,
    pub sample_every: usize,
}

impl ExperimentConfig {
    pub fn defaults_for(op: LabOp) -> Self {
        let mut cfg = ExperimentConfig {
            profile: ReactionProfile::kpp(),
            delta: 1.0,
            domain_length: 300.0,
            patch_width: 30.0,
            t_final: 150.0,
            dt: 0.1,
            h: 0.1,
            c_list: vec![1.0],
            amplitudes: vec![1.0],
            scheme: Scheme::BackwardEuler,
            sample_every: 10,
        };
        match op {
            LabOp::Simulate | LabOp::Minimize => {}
            LabOp::Wave => cfg.c_list = vec![0.4],
            LabOp::Eigen => cfg.c_list = (0..7).map(|k| 0.5 * k as f64).collect(),
            LabOp::Sweep => cfg.c_list = (1..=15).map(|k| 0.2 * k as f64).collect(),
            LabOp::Shapes => {
                cfg.profile = ReactionProfile::bistable(0.2).expect("catalog threshold");
                cfg.c_list = vec![0.0, 0.4, 0.8];
            }
            LabOp::Bistability => {
                cfg.profile = ReactionProfile::multistable5();
                cfg.c_list = vec![0.0, 0.2];
                cfg.amplitudes = vec![1.0, 1.5];
                // The two competing fronts need longer to flatten out.
                cfg.t_final = 300.0;
                // The taller front wins on energy only when its bulk
                // advantage (patch width times the extra well depth,
                // 0.0048 per unit length) outweighs its pricier interfaces
                // (about 0.145 at delta = 1). Width 30 sits just under the
                // crossover; 60 clears it at both speeds.
                cfg.patch_width = 60.0;
            }
            LabOp::Thresholds => cfg.c_list = Vec::new(),
        }
        cfg
    }

    pub fn grid(&self) -> Result<Grid, LabError> {
        let n = (self.domain_length / self.h).round() as usize + 1;
        Ok(Grid::new(-0.5 * self.domain_length, 0.5 * self.domain_length, n)?)
    }

    pub fn reaction_field(&self) -> Result<ReactionField, LabError> {
        Ok(ReactionField::centered(self.profile.clone(), self.patch_width, self.delta)?)
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            dt: self.dt,
            t_final: self.t_final,
            scheme: self.scheme,
            sample_every: self.sample_every,
            clamp_negative: true,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, LabError> {
    value
        .parse::<f64>()
        .map_err(|_| LabError::Config(format!("key {key:?}: expected a number, got {value:?}")))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, LabError> {
    value
        .split(',')
        .map(|t| parse_f64(key, t.trim()))
        .collect()
}

/// Parses the flat `key = value` format (one pair per line, `#` comments).
///
/// Recognized keys: `profile`, `theta`, `delta`, `domain_length`,
/// `patch_width`, `t_final`, `dt`, `h`, `scheme` (`be` | `cn`),
/// `sample_every`, `c_list` (comma separated), `c_min`/`c_max`/`c_count`
/// (an evenly spaced ladder; exclusive with `c_list`), `amplitude`
/// (comma separated). Anything else is rejected.
pub fn parse_config(text: &str, op: LabOp) -> Result<ExperimentConfig, LabError> {
    let mut cfg = ExperimentConfig::defaults_for(op);
    let mut profile_name: Option<String> = None;
    let mut theta: Option<f64> = None;
    let mut c_list_set = false;
    let (mut c_min, mut c_max, mut c_count) = (None, None, None);
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            LabError::Config(format!("line {}: expected key = value, got {line:?}", idx + 1))
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "profile" => profile_name = Some(value.to_string()),
            "theta" => theta = Some(parse_f64(key, value)?),
            "delta" => cfg.delta = parse_f64(key, value)?,
            "domain_length" => cfg.domain_length = parse_f64(key, value)?,
            "patch_width" => cfg.patch_width = parse_f64(key, value)?,
            "t_final" => cfg.t_final = parse_f64(key, value)?,
            "dt" => cfg.dt = parse_f64(key, value)?,
            "h" => cfg.h = parse_f64(key, value)?,
            "scheme" => {
                cfg.scheme = match value {
                    "be" | "backward_euler" => Scheme::BackwardEuler,
                    "cn" | "crank_nicolson" => Scheme::CrankNicolson,
                    other => {
                        return Err(LabError::Config(format!(
                            "scheme must be 'be' or 'cn', got {other:?}"
                        )))
                    }
                }
            }
            "sample_every" => {
                cfg.sample_every = value.parse::<usize>().map_err(|_| {
                    LabError::Config(format!("sample_every must be a positive count, got {value:?}"))
                })?;
            }
            "c_list" => {
                cfg.c_list = parse_list(key, value)?;
                c_list_set = true;
            }
            "c_min" => c_min = Some(parse_f64(key, value)?),
            "c_max" => c_max = Some(parse_f64(key, value)?),
            "c_count" => {
                c_count = Some(value.parse::<usize>().map_err(|_| {
                    LabError::Config(format!("c_count must be a count, got {value:?}"))
                })?);
            }
            "amplitude" => cfg.amplitudes = parse_list(key, value)?,
            other => return Err(LabError::Config(format!("unknown key {other:?}"))),
        }
    }

    if let Some(name) = profile_name {
        let full = if name == "bistable" {
            format!("bistable:{}", theta.unwrap_or(0.2))
        } else {
            name
        };
        cfg.profile = ReactionProfile::parse(&full)?;
    } else if let Some(th) = theta {
        if cfg.profile.kind == ProfileKind::Bistable {
            cfg.profile = ReactionProfile::bistable(th)?;
        } else {
            return Err(LabError::Config(
                "theta is only meaningful with profile = bistable".into(),
            ));
        }
    }

    match (c_min, c_max) {
        (None, None) => {
            if c_count.is_some() {
                return Err(LabError::Config("c_count needs c_min and c_max".into()));
            }
        }
        (Some(lo), Some(hi)) => {
            if c_list_set {
                return Err(LabError::Config(
                    "give either c_list or the c_min/c_max ladder, not both".into(),
                ));
            }
            let m = c_count.unwrap_or(15);
            if !(hi > lo) || m < 2 {
                return Err(LabError::Config(format!(
                    "speed ladder needs c_min < c_max and c_count >= 2, \
                     got [{lo}, {hi}] with {m} points"
                )));
            }
            cfg.c_list = (0..m)
                .map(|k| lo + (hi - lo) * k as f64 / (m - 1) as f64)
                .collect();
        }
        _ => return Err(LabError::Config("c_min and c_max must be given together".into())),
    }

    for (name, value) in [
        ("delta", cfg.delta),
        ("domain_length", cfg.domain_length),
        ("patch_width", cfg.patch_width),
        ("t_final", cfg.t_final),
        ("dt", cfg.dt),
        ("h", cfg.h),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(LabError::Config(format!(
                "{name} must be finite and positive, got {value}"
            )));
        }
    }
    if cfg.patch_width > cfg.domain_length {
        return Err(LabError::Config(
            "the patch cannot be wider than the domain".into(),
        ));
    }
    if cfg.amplitudes.is_empty() {
        return Err(LabError::Config("amplitude list cannot be empty".into()));
    }
    for &c in &cfg.c_list {
        if !(c >= 0.0) || !c.is_finite() {
            return Err(LabError::Config(format!(
                "speeds must be finite and nonnegative, got {c}"
            )));
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub c: f64,
    /// `None` when the run failed; the error column carries the message.
    pub verdict: Option<VerdictKind>,
    pub final_population: f64,
    pub final_energy: f64,
    pub runtime_secs: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// One row per requested speed, ordered by `c`.
    pub rows: Vec<SweepRow>,
    /// Persist/non-Persist boundary after bisection to width 0.02.
    pub critical_bracket: Option<(f64, f64)>,
    pub critical_estimate: Option<f64>,
    /// Monotonicity breaks (Persist after Extinct and the like); never hidden.
    pub violations: Vec<String>,
}

fn sweep_one(
    c: f64,
    grid: &Grid,
    rf: &ReactionField,
    scheme_cfg: &SchemeConfig,
    amplitude: f64,
) -> SweepRow {
    let started = Instant::now();
    let u0 = gaussian_ic(grid, amplitude, 0.0, 30.0);
    match evolve(&u0, c, rf, scheme_cfg) {
        Ok((_, diag)) => {
            let verdict = classify(&diag, &ClassifyThresholds::default());
            SweepRow {
                c,
                verdict: Some(verdict.kind),
                final_population: verdict.final_population,
                final_energy: diag.samples.last().map(|s| s.energy).unwrap_or(f64::NAN),
                runtime_secs: started.elapsed().as_secs_f64(),
                error: None,
            }
        }
        Err(e) => SweepRow {
            c,
            verdict: None,
            final_population: f64::NAN,
            final_energy: f64::NAN,
            runtime_secs: started.elapsed().as_secs_f64(),
            error: Some(e.to_string()),
        },
    }
}

/// Evolves the Gaussian datum at every requested speed, classifies each run,
/// checks verdict monotonicity, and bisects the persistence boundary.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepResult, LabError> {
    if cfg.c_list.is_empty() {
        return Err(LabError::Config("sweep needs a nonempty speed list".into()));
    }
    let grid = cfg.grid()?;
    let rf = cfg.reaction_field()?;
    let scheme_cfg = cfg.scheme_config();
    let amplitude = cfg.amplitudes[0];
    let mut speeds = cfg.c_list.clone();
    speeds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    speeds.dedup();

    let rows: Vec<SweepRow> = speeds
        .par_iter()
        .map(|&c| sweep_one(c, &grid, &rf, &scheme_cfg, amplitude))
        .collect();

    // Persist rows must come before Undecided rows before Extinct rows.
    let rank = |k: VerdictKind| match k {
        VerdictKind::Persist => 0,
        VerdictKind::Undecided => 1,
        VerdictKind::Extinct => 2,
    };
    let mut violations = Vec::new();
    let mut prev: Option<(f64, VerdictKind)> = None;
    for row in rows.iter() {
        if let Some(kind) = row.verdict {
            if let Some((pc, pk)) = prev {
                if rank(kind) < rank(pk) {
                    violations.push(format!(
                        "verdict order breaks between c = {pc} ({pk}) and c = {} ({kind})",
                        row.c
                    ));
                }
            }
            prev = Some((row.c, kind));
        }
    }

    let mut lo = None;
    let mut hi = None;
    for row in rows.iter() {
        match row.verdict {
            Some(VerdictKind::Persist) => lo = Some(row.c),
            Some(VerdictKind::Extinct) if hi.is_none() && lo.is_some() => hi = Some(row.c),
            _ => {}
        }
    }
    // Near the threshold the settling time diverges (the spectral gap
    // closes), so refinement runs get a longer horizon than survey runs;
    // otherwise the bisection locks onto the edge of the Undecided band
    // instead of the actual boundary.
    let refine_cfg = SchemeConfig { t_final: 4.0 * scheme_cfg.t_final, ..scheme_cfg };
    let (critical_bracket, critical_estimate) = match (lo, hi) {
        (Some(mut lo), Some(mut hi)) if lo < hi => {
            while hi - lo > 0.02 {
                let mid = 0.5 * (lo + hi);
                let row = sweep_one(mid, &grid, &rf, &refine_cfg, amplitude);
                match row.verdict {
                    Some(VerdictKind::Persist) => lo = mid,
                    Some(_) => hi = mid,
                    None => {
                        violations.push(format!(
                            "bisection run failed at c = {mid}: {}",
                            row.error.unwrap_or_default()
                        ));
                        break;
                    }
                }
            }
            (Some((lo, hi)), Some(0.5 * (lo + hi)))
        }
        _ => (None, None),
    };

    Ok(SweepResult { rows, critical_bracket, critical_estimate, violations })
}

#[derive(Debug, Clone)]
pub struct ShapeRow {
    pub delta: f64,
    pub c: f64,
    pub verdict: VerdictKind,
    /// Integral of the final profile left of the patch.
    pub back_tail_mass: f64,
    pub total_mass: f64,
    /// Largest central-difference slope magnitude of the final profile.
    pub edge_steepness: f64,
    pub profile: Field,
}

#[derive(Debug, Clone)]
pub struct ShapeStudy {
    /// Rows ordered by (delta, c).
    pub rows: Vec<ShapeRow>,
}

/// Front-shape study for the bistable profile: final profiles and shape
/// descriptors across exterior decay rates {0.001, 1, 10} and the speeds in
/// the config.
pub fn run_shape_study(cfg: &ExperimentConfig) -> Result<ShapeStudy, LabError> {
    if cfg.profile.kind != ProfileKind::Bistable {
        return Err(LabError::Config(
            "the shape study is defined for the bistable profile".into(),
        ));
    }
    if cfg.c_list.is_empty() {
        return Err(LabError::Config("shape study needs a nonempty speed list".into()));
    }
    let grid = cfg.grid()?;
    let scheme_cfg = cfg.scheme_config();
    let amplitude = cfg.amplitudes[0];
    let deltas = [0.001, 1.0, 10.0];
    let mut cases = Vec::new();
    for &delta in &deltas {
        for &c in &cfg.c_list {
            cases.push((delta, c));
        }
    }
    let rows: Result<Vec<ShapeRow>, LabError> = cases
        .par_iter()
        .map(|&(delta, c)| {
            let rf = ReactionField::centered(cfg.profile.clone(), cfg.patch_width, delta)?;
            let u0 = gaussian_ic(&grid, amplitude, 0.0, 30.0);
            let (final_u, diag) = evolve(&u0, c, &rf, &scheme_cfg)?;
            let verdict = classify(&diag, &ClassifyThresholds::default());
            Ok(ShapeRow {
                delta,
                c,
                verdict: verdict.kind,
                back_tail_mass: final_u.trapezoid_left_of(-0.5 * cfg.patch_width),
                total_mass: final_u.trapezoid(),
                edge_steepness: diff_central(&final_u).sup_norm(),
                profile: final_u,
            })
        })
        .collect();
    Ok(ShapeStudy { rows: rows? })
}

#[derive(Debug, Clone)]
pub struct DemoRun {
    pub c: f64,
    pub amplitude: f64,
    pub verdict: VerdictKind,
    pub final_sup: f64,
    pub final_energy: f64,
    pub profile: Field,
}

/// Per-speed contrast between the two persisting limits.
#[derive(Debug, Clone, Copy)]
pub struct DemoContrast {
    pub c: f64,
    /// Sup-norm of the difference of the two limits.
    pub sup_gap: f64,
    pub energy_low_amp: f64,
    pub energy_high_amp: f64,
}

#[derive(Debug, Clone)]
pub struct BistabilityReport {
    pub runs: Vec<DemoRun>,
    pub contrasts: Vec<DemoContrast>,
}

/// Two initial amplitudes, two distinct persistent fronts, strictly ordered
/// negative energies, and extinction from a tiny datum: the demonstration
/// fails loudly (with the violated clause) if any part does not reproduce.
pub fn run_bistability_demo(cfg: &ExperimentConfig) -> Result<BistabilityReport, LabError> {
    if cfg.profile.kind != ProfileKind::Multistable {
        return Err(LabError::Config(
            "the two-front demonstration is defined for the multistable profile".into(),
        ));
    }
    if cfg.c_list.is_empty() {
        return Err(LabError::Config("demo needs a nonempty speed list".into()));
    }
    if cfg.amplitudes.len() < 2 {
        return Err(LabError::Config("demo needs two amplitudes".into()));
    }
    let amp_lo = cfg.amplitudes.iter().cloned().fold(f64::INFINITY, f64::min);
    let amp_hi = cfg.amplitudes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(amp_hi > amp_lo) {
        return Err(LabError::Config("demo amplitudes must be distinct".into()));
    }
    let grid = cfg.grid()?;
    let rf = cfg.reaction_field()?;
    let scheme_cfg = cfg.scheme_config();
    let thresholds = ClassifyThresholds::default();

    let run_amp = |c: f64, amplitude: f64| -> Result<DemoRun, LabError> {
        let u0 = gaussian_ic(&grid, amplitude, 0.0, 30.0);
        let (final_u, diag) = evolve(&u0, c, &rf, &scheme_cfg)?;
        let verdict = classify(&diag, &thresholds);
        let final_energy = energy(&final_u, c, &rf)?.value;
        Ok(DemoRun {
            c,
            amplitude,
            verdict: verdict.kind,
            final_sup: final_u.sup_norm(),
            final_energy,
            profile: final_u,
        })
    };

    let mut runs = Vec::new();
    let mut contrasts = Vec::new();
    for &c in &cfg.c_list {
        let low = run_amp(c, amp_lo)?;
        let high = run_amp(c, amp_hi)?;
        for r in [&low, &high] {
            if r.verdict != VerdictKind::Persist {
                return Err(LabError::DemoFailed {
                    clause: format!(
                        "amplitude {} at c = {c} should persist, got {}",
                        r.amplitude, r.verdict
                    ),
                });
            }
        }
        let mut sup_gap = 0.0f64;
        for (a, b) in low.profile.values.iter().zip(&high.profile.values) {
            sup_gap = sup_gap.max((a - b).abs());
        }
        if sup_gap <= 0.2 {
            return Err(LabError::DemoFailed {
                clause: format!(
                    "limits at c = {c} should differ by more than 0.2 in sup-norm, got {sup_gap}"
                ),
            });
        }
        if !(high.final_energy < low.final_energy && low.final_energy < 0.0) {
            return Err(LabError::DemoFailed {
                clause: format!(
                    "energies at c = {c} should satisfy E(high) < E(low) < 0, \
                     got E(high) = {}, E(low) = {}",
                    high.final_energy, low.final_energy
                ),
            });
        }
        // A tiny datum sits in the basin of extinction: zero is linearly
        // stable for this profile.
        let tiny = run_amp(c, 1e-3)?;
        if tiny.verdict != VerdictKind::Extinct {
            return Err(LabError::DemoFailed {
                clause: format!(
                    "tiny amplitude at c = {c} should go extinct, got {}",
                    tiny.verdict
                ),
            });
        }
        contrasts.push(DemoContrast {
            c,
            sup_gap,
            energy_low_amp: low.final_energy,
            energy_high_amp: high.final_energy,
        });
        runs.push(low);
        runs.push(high);
        runs.push(tiny);
    }
    Ok(BistabilityReport { runs, contrasts })
}

#[derive(Debug, Clone, Copy)]
pub struct ThresholdRow {
    pub delta: f64,
    /// Speed where the minimized energy changes sign (None when even c = 0
    /// has no negative-energy state).
    pub c_energy: Option<f64>,
    /// Where wave continuation stalls (None when the branch reaches the cap).
    pub fold: Option<f64>,
    /// Bisected dynamic persistence boundary (None without a full bracket).
    pub c_dynamic: Option<f64>,
    /// Linearized upper bound from the steepest sublinear majorant.
    pub c_upper: f64,
}

#[derive(Debug, Clone)]
pub struct ThresholdReport {
    /// One row per exterior decay rate in {0.1, 1, 10}.
    pub rows: Vec<ThresholdRow>,
}

/// Tabulates four independent estimates of the critical speed per exterior
/// decay rate and asserts only the proven ordering: the energy threshold
/// must not exceed the linearized upper bound (+0.05 slack). The gaps
/// between the rest are reported, not asserted.
pub fn run_threshold_comparison(cfg: &ExperimentConfig) -> Result<ThresholdReport, LabError> {
    let grid = cfg.grid()?;
    let mut rows = Vec::new();
    for &delta in &[0.1, 1.0, 10.0] {
        let rf = ReactionField::centered(cfg.profile.clone(), cfg.patch_width, delta)?;
        let c_upper = c_upper_kpp(&rf, &grid)?;
        let cap = c_upper + 0.1;

        let c_energy = match min_energy_sign_bisect(&rf, &grid, 0.0, cap, 0.02) {
            Ok(c) => Some(c),
            // No negative-energy state even at c = 0: thresholds are absent
            // and the ordering below is vacuous.
            Err(EnergyError::BracketInvalid { .. }) => None,
            Err(e) => return Err(e.into()),
        };

        // The fold comparison concerns the branch realizing the energy
        // minimum at its sign change, so descend just below that speed
        // before continuing; with several stable states a plateau at c = 0
        // can ride a higher local minimum whose branch folds early. A
        // stalled descent is still a usable continuation seed.
        let c_seed = c_energy.map(|ce| (ce - 0.02).max(0.0)).unwrap_or(0.0);
        let plateau = crate::energy::plateau_seed(&grid, &rf);
        let branch_seed = match minimize(&plateau, c_seed, &rf, MinimizeOpts::default()) {
            Ok(r) => r.minimizer,
            Err(EnergyError::NotConverged(r)) => r.minimizer,
            Err(e) => return Err(e.into()),
        };
        let fold = match continue_in_c(&branch_seed, c_seed, 0.05, cap, &rf) {
            Ok(branch) => branch.fold_estimate,
            Err(StationaryError::NewtonDiverged { .. }) => None,
            Err(e) => return Err(e.into()),
        };

        let mut sweep_cfg = cfg.clone();
        sweep_cfg.delta = delta;
        sweep_cfg.c_list = (0..8)
            .map(|k| 0.2 + (cap + 0.2) * k as f64 / 7.0)
            .collect();
        let sweep = run_sweep(&sweep_cfg)?;
        let c_dynamic = sweep.critical_estimate;

        if let Some(ce) = c_energy {
            if ce > c_upper + 0.05 {
                return Err(LabError::OrderingViolated { delta, c_energy: ce, c_upper });
            }
        }
        rows.push(ThresholdRow { delta, c_energy, fold, c_dynamic, c_upper });
    }
    Ok(ThresholdReport { rows })
}

/// Header comment documenting the verdict thresholds used by every driver.
fn verdict_header() -> String {
    let th = ClassifyThresholds::default();
    format!(
        "# verdicts: Extinct if sup < {} with nonincreasing population over \
         the last {:.0}% of samples; Persist if sup > {} and \
         |E(T) - E({:.2} T)| < {} (1 + |E(T)|)\n",
        th.sup_extinct,
        100.0 * th.trend_window,
        th.sup_persist,
        1.0 - th.trend_window,
        th.energy_flat
    )
}

fn opt_str<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// `c,verdict,P_final,E_final,error`; runtimes are deliberately omitted so
/// identical configs give bit-identical files.
pub fn write_sweep_csv(path: &Path, sweep: &SweepResult) -> Result<(), LabError> {
    let mut out = verdict_header();
    if let (Some((lo, hi)), Some(est)) = (sweep.critical_bracket, sweep.critical_estimate) {
        out.push_str(&format!(
            "# critical speed in [{lo}, {hi}], estimate {est} (bisected at 4x horizon)\n"
        ));
    }
    for v in &sweep.violations {
        out.push_str(&format!("# monotonicity: {v}\n"));
    }
    out.push_str("c,verdict,P_final,E_final,error\n");
    for r in &sweep.rows {
        let verdict = r
            .verdict
            .map(|k| k.to_string())
            .unwrap_or_else(|| "Error".into());
        let error = r.error.clone().unwrap_or_default().replace(',', ";");
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.c, verdict, r.final_population, r.final_energy, error
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `t,P,E,dissipation,sup_norm` as sampled along one run.
pub fn write_diagnostics_csv(path: &Path, diag: &TrajectoryDiagnostics) -> Result<(), LabError> {
    let mut out = verdict_header();
    out.push_str("t,P,E,dissipation,sup_norm\n");
    for s in &diag.samples {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.t, s.population, s.energy, s.dissipation, s.sup_norm
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `z,u` nodal values.
pub fn write_profile_csv(path: &Path, u: &Field) -> Result<(), LabError> {
    let mut out = String::from("z,u\n");
    for i in 0..u.grid.n {
        out.push_str(&format!("{},{}\n", u.grid.node(i), u.values[i]));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `delta,c,verdict,back_tail_mass,total_mass,edge_steepness`.
pub fn write_shape_csv(path: &Path, study: &ShapeStudy) -> Result<(), LabError> {
    let mut out = verdict_header();
    out.push_str("delta,c,verdict,back_tail_mass,total_mass,edge_steepness\n");
    for r in &study.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.delta, r.c, r.verdict, r.back_tail_mass, r.total_mass, r.edge_steepness
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `c,amplitude,verdict,final_sup,final_energy` plus per-speed contrasts.
pub fn write_bistability_csv(path: &Path, report: &BistabilityReport) -> Result<(), LabError> {
    let mut out = verdict_header();
    for ct in &report.contrasts {
        out.push_str(&format!(
            "# c = {}: sup gap {}, E(high amp) = {} < E(low amp) = {} < 0\n",
            ct.c, ct.sup_gap, ct.energy_high_amp, ct.energy_low_amp
        ));
    }
    out.push_str("c,amplitude,verdict,final_sup,final_energy\n");
    for r in &report.runs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.c, r.amplitude, r.verdict, r.final_sup, r.final_energy
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// `delta,c_energy,fold,c_dynamic,c_upper,gap_energy_vs_dynamic`.
pub fn write_thresholds_csv(path: &Path, report: &ThresholdReport) -> Result<(), LabError> {
    let mut out = String::from(
        "# only c_energy <= c_upper + 0.05 is asserted; other gaps are reported\n\
         delta,c_energy,fold,c_dynamic,c_upper,gap_energy_vs_dynamic\n",
    );
    for r in &report.rows {
        let gap = match (r.c_energy, r.c_dynamic) {
            (Some(a), Some(b)) => format!("{}", (a - b).abs()),
            _ => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.delta,
            opt_str(&r.c_energy),
            opt_str(&r.fold),
            opt_str(&r.c_dynamic),
            r.c_upper,
            gap
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Records the config hash, grid, scheme, and wall time of a driver run.
pub fn write_manifest(
    path: &Path,
    raw_config: &str,
    cfg: &ExperimentConfig,
    wall_seconds: f64,
) -> Result<(), LabError> {
    let digest = Sha256::digest(raw_config.as_bytes());
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    let grid = cfg.grid()?;
    let out = format!(
        "config_sha256 = {hex}\n\
         grid = [{}, {}], {} nodes, h = {}\n\
         scheme = {:?}, dt = {}, t_final = {}\n\
         wall_seconds = {:.3}\n",
        -0.5 * cfg.domain_length,
        0.5 * cfg.domain_length,
        grid.n,
        grid.h(),
        cfg.scheme,
        cfg.dt,
        cfg.t_final,
        wall_seconds
    );
    fs::write(path, out)?;
    Ok(())
}
