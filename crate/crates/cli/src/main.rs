//! Command line front end for the wavelab experiment drivers.
//!
//! Every subcommand reads the same flat `key = value` config format, runs
//! one driver, writes its CSVs plus a manifest into the output directory,
//! and prints a one line summary. Exit codes: 0 success, 2 config problem,
//! 3 numerical or io failure, 4 a demonstration assertion failed.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use wavelab_core::energy::{energy, minimize, plateau_seed, MinimizeOpts};
use wavelab_core::evolution::{classify, evolve, gaussian_ic, ClassifyThresholds};
use wavelab_core::lab::{
    parse_config, run_bistability_demo, run_shape_study, run_sweep, run_threshold_comparison,
    write_bistability_csv, write_diagnostics_csv, write_manifest, write_profile_csv,
    write_shape_csv, write_sweep_csv, write_thresholds_csv, ExperimentConfig, LabError, LabOp,
};
use wavelab_core::spectral::{c_lin, c_upper_kpp, ground_state, lambda_c};
use wavelab_core::stationary::{newton_solve, verify_decay, NewtonOpts};

#[derive(Parser)]
#[command(name = "wavelab", about = "Forced-speed reaction-diffusion laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Config file (`key = value` lines); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSVs and the manifest.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one initial datum and write trajectory diagnostics.
    Simulate(CommonArgs),
    /// Descend the energy from the plateau seed and write the minimizer.
    Minimize(CommonArgs),
    /// Newton wave ladder over the configured speeds, warm started.
    Wave(CommonArgs),
    /// Principal eigenvalue, linear speed, and the speed upper bound.
    Eigen(CommonArgs),
    /// Verdict sweep over speeds with threshold bisection.
    Sweep(CommonArgs),
    /// Front shape study across exterior decay rates.
    Shapes(CommonArgs),
    /// Two-front demonstration for the multistable profile.
    Bistability(CommonArgs),
    /// Compare the four critical speed estimates.
    Thresholds(CommonArgs),
}

fn exit_code_for(err: &LabError) -> u8 {
    match err {
        LabError::Config(_) | LabError::Reaction(_) => 2,
        LabError::DemoFailed { .. } => 4,
        _ => 3,
    }
}

fn load_config(args: &CommonArgs, op: LabOp) -> Result<(String, ExperimentConfig), LabError> {
    let raw = match &args.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| {
            LabError::Config(format!("cannot read config {}: {e}", path.display()))
        })?,
        None => String::new(),
    };
    let cfg = parse_config(&raw, op)?;
    std::fs::create_dir_all(&args.out)?;
    Ok((raw, cfg))
}

fn run(op: LabOp, args: &CommonArgs) -> Result<(), LabError> {
    let started = Instant::now();
    let (raw, cfg) = load_config(args, op)?;
    let out = args.out.as_path();
    match op {
        LabOp::Simulate => simulate(&cfg, out)?,
        LabOp::Minimize => minimize_cmd(&cfg, out)?,
        LabOp::Wave => wave_ladder(&cfg, out)?,
        LabOp::Eigen => eigen_table(&cfg, out)?,
        LabOp::Sweep => {
            let sweep = run_sweep(&cfg)?;
            write_sweep_csv(&out.join("sweep.csv"), &sweep)?;
            match sweep.critical_estimate {
                Some(est) => println!("critical speed estimate {est:.4}"),
                None => println!("no persist/extinct bracket in the requested speeds"),
            }
            for v in &sweep.violations {
                println!("warning: {v}");
            }
        }
        LabOp::Shapes => {
            let study = run_shape_study(&cfg)?;
            write_shape_csv(&out.join("shapes.csv"), &study)?;
            for row in &study.rows {
                let name = format!("shape_d{}_c{}.csv", row.delta, row.c);
                write_profile_csv(&out.join(name), &row.profile)?;
            }
            println!("{} shape rows written", study.rows.len());
        }
        LabOp::Bistability => {
            let report = run_bistability_demo(&cfg)?;
            write_bistability_csv(&out.join("bistability.csv"), &report)?;
            for r in &report.runs {
                let name = format!("front_c{}_a{}.csv", r.c, r.amplitude);
                write_profile_csv(&out.join(name), &r.profile)?;
            }
            for ct in &report.contrasts {
                println!(
                    "c = {}: two fronts, sup gap {:.3}, E = {:.6} < {:.6} < 0",
                    ct.c, ct.sup_gap, ct.energy_high_amp, ct.energy_low_amp
                );
            }
        }
        LabOp::Thresholds => {
            let report = run_threshold_comparison(&cfg)?;
            write_thresholds_csv(&out.join("thresholds.csv"), &report)?;
            for r in &report.rows {
                println!(
                    "delta = {}: energy {:?}, fold {:?}, dynamic {:?}, upper {:.4}",
                    r.delta, r.c_energy, r.fold, r.c_dynamic, r.c_upper
                );
            }
        }
    }
    write_manifest(&out.join("manifest.txt"), &raw, &cfg, started.elapsed().as_secs_f64())?;
    Ok(())
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> Result<(), LabError> {
    let grid = cfg.grid()?;
    let rf = cfg.reaction_field()?;
    let c = cfg.c_list.first().copied().unwrap_or(0.0);
    let u0 = gaussian_ic(&grid, cfg.amplitudes[0], 0.0, cfg.patch_width);
    let (final_u, diag) = evolve(&u0, c, &rf, &cfg.scheme_config())?;
    let verdict = classify(&diag, &ClassifyThresholds::default());
    write_diagnostics_csv(&out.join("diagnostics.csv"), &diag)?;
    write_profile_csv(&out.join("final_profile.csv"), &final_u)?;
    println!(
        "{} at c = {c}: final population {:.6}, sup {:.6}",
        verdict.kind, verdict.final_population, verdict.final_sup
    );
    Ok(())
}

fn minimize_cmd(cfg: &ExperimentConfig, out: &Path) -> Result<(), LabError> {
    let grid = cfg.grid()?;
    let rf = cfg.reaction_field()?;
    let c = cfg.c_list.first().copied().unwrap_or(0.0);
    let seed = plateau_seed(&grid, &rf);
    let r = minimize(&seed, c, &rf, MinimizeOpts::default())?;
    write_profile_csv(&out.join("minimizer.csv"), &r.minimizer)?;
    println!(
        "{:?} minimizer at c = {c}: E = {:.9}, {} iterations",
        r.classification, r.energy.value, r.iterations
    );
    Ok(())
}

fn wave_ladder(cfg: &ExperimentConfig, out: &Path) -> Result<(), LabError> {
    let grid = cfg.grid()?;
    let rf = cfg.reaction_field()?;
    let mut speeds = cfg.c_list.clone();
    speeds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    speeds.dedup();
    if speeds.is_empty() {
        return Err(LabError::Config("wave ladder needs at least one speed".into()));
    }
    let mut csv = String::from("c,energy,residual,sup_norm,decay_ok\n");
    let mut seed = plateau_seed(&grid, &rf);
    let mut solved = 0usize;
    for &c in &speeds {
        match newton_solve(&seed, c, &rf, NewtonOpts::default()) {
            Ok(wave) => {
                let report = verify_decay(&wave, c, &rf);
                let e = energy(&wave, c, &rf)?.value;
                let res = wavelab_core::stationary::residual_norm(&wave, c, &rf);
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    c,
                    e,
                    res,
                    wave.sup_norm(),
                    report.left_ok && report.right_ok
                ));
                write_profile_csv(&out.join(format!("wave_c{c}.csv")), &wave)?;
                seed = wave;
                solved += 1;
            }
            Err(err) => {
                csv.push_str(&format!("# ladder stopped at c = {c}: {err}\n"));
                break;
            }
        }
    }
    std::fs::write(out.join("wave_branch.csv"), csv)?;
    println!("{solved} of {} speeds solved", speeds.len());
    Ok(())
}

fn eigen_table(cfg: &ExperimentConfig, out: &Path) -> Result<(), LabError> {
    let grid = cfg.grid()?;
    let rf = cfg.reaction_field()?;
    let gs = ground_state(&rf, &grid)?;
    let upper = c_upper_kpp(&rf, &grid)?;
    let lin = c_lin(gs.lambda0);
    let mut csv = format!(
        "# lambda0 = {}, c_lin = {}, c_upper = {}\nc,lambda_c\n",
        gs.lambda0,
        lin.map(|v| v.to_string()).unwrap_or_default(),
        upper
    );
    for &c in &cfg.c_list {
        csv.push_str(&format!("{},{}\n", c, lambda_c(gs.lambda0, c, grid.h())));
    }
    std::fs::write(out.join("eigen.csv"), csv)?;
    match lin {
        Some(v) => println!("lambda0 = {:.6}, c_lin = {v:.4}, c_upper = {upper:.4}", gs.lambda0),
        None => println!("lambda0 = {:.6} (extinction at every speed), c_upper = {upper:.4}", gs.lambda0),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (op, args) = match &cli.command {
        Command::Simulate(a) => (LabOp::Simulate, a),
        Command::Minimize(a) => (LabOp::Minimize, a),
        Command::Wave(a) => (LabOp::Wave, a),
        Command::Eigen(a) => (LabOp::Eigen, a),
        Command::Sweep(a) => (LabOp::Sweep, a),
        Command::Shapes(a) => (LabOp::Shapes, a),
        Command::Bistability(a) => (LabOp::Bistability, a),
        Command::Thresholds(a) => (LabOp::Thresholds, a),
    };
    match run(op, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
