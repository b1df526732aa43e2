use std::path::PathBuf;

use clap::Subcommand;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use qgpe::bdg::{excitation_spectrum, prepare_bundle, sweep_k};
use qgpe::checkpoint::{read_checkpoint, write_checkpoint};
use qgpe::cmps::{left_canonicalize, unit_vector, BoundaryCondition, Cmps, FiniteCmps, UniformCmps};
use qgpe::oracle::bethe::bethe_ground_energy;
use qgpe::oracle::bogoliubov_dispersion;
use qgpe::tdvp::{
    calibrate_mu, finite_trajectory, ground_state_search, real_time_trajectory, relax_finite, FiniteRecord, GroundStateOptions,
    GroundStateRun, LiebLinigerParams, TimeMode,
};
use qgpe::transfer::{density_at, propagate_density};

use crate::config::{finite, positive, positive_count, BcKind, EvolveArgs, GroundArgs, Mode, RespondArgs, SpectrumArgs};
use crate::output::{json, Cell, Csv, OutDir};
use crate::CliError;

pub const CHECKPOINT: &str = "checkpoint.json";

pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
}

#[derive(Debug, Serialize)]
struct GroundReport {
    energy_density: f64,
    particle_density: f64,
    gamma: f64,
    grad_norm: f64,
    steps: usize,
    converged: bool,
    rejected_steps: usize,
    bond_dim: usize,
    g: f64,
    mu: f64,
    seed: u64,
    /// `(energy_density + mu rho) / rho^3`, comparable with `bethe_energy`.
    dimensionless_energy: f64,
    bethe_energy: Option<f64>,
}

fn search_trace(run: &GroundStateRun, with_gradient: bool) -> Csv {
    let mut header = vec!["step", "t", "energy_density", "particle_density", "canonical_residual"];
    if with_gradient {
        header.push("grad_norm");
    }
    let mut csv = Csv::new(&header);
    for (i, r) in run.records.iter().enumerate() {
        let mut row = vec![
            Cell::Int(i),
            Cell::Num(Some(r.t)),
            Cell::Num(Some(r.energy)),
            Cell::Num(Some(r.density)),
            Cell::Num(Some(r.canonical_residual)),
        ];
        if with_gradient {
            row.push(Cell::Num(Some(r.gradient_norm)));
        }
        csv.row(row);
    }
    csv
}

pub fn ground(ctx: &Context, a: &GroundArgs) -> Result<(), CliError> {
    let d = match a.bond_dim {
        Some(0) | None => return Err(CliError::config("bond_dim must be a positive integer")),
        Some(d) => d,
    };
    let model = a.model.model()?;
    let tol = positive("tol", a.tol.or(Some(1e-8)))?;
    let max_steps = positive_count("max_steps", a.max_steps, 100_000)?;
    let mut opts = GroundStateOptions::new(d, tol, max_steps, ctx.seed);
    opts.dt0 = positive("dt0", a.dt0.or(Some(opts.dt0)))?;
    let out = OutDir::create(&ctx.out_dir)?;

    let (mu, run) = match (a.calibrate.unwrap_or(false), a.model.gamma) {
        (true, Some(gamma)) => calibrate_mu(model.g, gamma, &opts, 1e-3, 8)?,
        (true, None) => return Err(CliError::config("calibrate needs a target gamma")),
        (false, _) => (model.mu, ground_state_search(&LiebLinigerParams::new(model.g, model.mu), &opts, None)?),
    };
    write_checkpoint(&out.path(CHECKPOINT), &Cmps::Uniform(run.state.clone()))?;
    out.write("energy_trace.csv", search_trace(&run, true).as_str())?;
    let rho = run.density;
    let gamma = model.g / rho;
    let report = GroundReport {
        energy_density: run.energy,
        particle_density: rho,
        gamma,
        grad_norm: run.gradient_norm,
        steps: run.steps,
        converged: run.converged,
        rejected_steps: run.rejected,
        bond_dim: d,
        g: model.g,
        mu,
        seed: ctx.seed,
        dimensionless_energy: (run.energy + mu * rho) / rho.powi(3),
        bethe_energy: bethe_ground_energy(gamma, 128).ok(),
    };
    out.write_json("ground.json", &report)?;
    print!("{}", json(&report)?);
    if !run.converged {
        return Err(CliError::not_converged(format!(
            "no convergence after {} steps (gradient norm {:e}); partial checkpoint written",
            run.steps, run.gradient_norm
        )));
    }
    Ok(())
}

fn amplitude(v: &Option<Vec<f64>>, name: &str) -> Result<Complex64, CliError> {
    match v.as_deref() {
        None => Ok(Complex64::new(0.0, 0.0)),
        Some([re, im]) => Ok(Complex64::new(finite(name, *re)?, finite(name, *im)?)),
        Some(_) => Err(CliError::config(format!("{name} takes two numbers re,im"))),
    }
}

/// Place a uniform state on a box when the config asks for one.
fn boxed(state: Cmps, a: &EvolveArgs) -> Result<Cmps, CliError> {
    let any = a.x1.is_some() || a.x2.is_some() || a.grid_points.is_some() || a.bc.is_some();
    if !any {
        return Ok(state);
    }
    let u = match state {
        Cmps::Uniform(u) => u,
        Cmps::Finite(_) => return Err(CliError::config("box options apply to uniform input states only")),
    };
    let (Some(x1), Some(x2), Some(n), Some(kind)) = (a.x1, a.x2, a.grid_points, a.bc) else {
        return Err(CliError::config("a box needs x1, x2, grid_points and bc"));
    };
    let bc = match kind {
        BcKind::Dirichlet => BoundaryCondition::Dirichlet { a: amplitude(&a.bc_a, "bc_a")?, b: amplitude(&a.bc_b, "bc_b")? },
        BcKind::Neumann => BoundaryCondition::Neumann,
    };
    let d = u.bond_dim();
    let mut f = FiniteCmps::from_uniform(&u, finite("x1", x1)?, finite("x2", x2)?, n, unit_vector(d, 0), unit_vector(d, 0), bc)?;
    f.apply_dirichlet();
    Ok(Cmps::Finite(f))
}

fn finite_table(records: &[FiniteRecord]) -> Csv {
    let mut csv = Csv::new(&["t", "energy", "particle_number", "norm_variation", "grad_norm"]);
    for r in records {
        csv.row(vec![
            Cell::Num(Some(r.t)),
            Cell::Num(Some(r.energy)),
            Cell::Num(Some(r.particle_number)),
            Cell::Num(Some(r.norm_variation)),
            Cell::Num(Some(r.gradient_norm)),
        ]);
    }
    csv
}

fn profile(state: &FiniteCmps) -> Result<Csv, CliError> {
    let dens = propagate_density(state)?;
    let mut csv = Csv::new(&["x", "density"]);
    for (i, x) in state.grid().into_iter().enumerate() {
        csv.row(vec![Cell::Num(Some(x)), Cell::Num(Some(density_at(&state.rs[i], &dens.rho_l[i], &dens.rho_r[i])))]);
    }
    Ok(csv)
}

pub fn evolve(ctx: &Context, a: &EvolveArgs) -> Result<(), CliError> {
    let model = a.model.model()?;
    let params = LiebLinigerParams::new(model.g, model.mu);
    let path = a.checkpoint.as_ref().ok_or_else(|| CliError::config("missing checkpoint"))?;
    let mode = a.mode.unwrap_or(Mode::Real);
    let t_end = a.t_end.unwrap_or(1.0);
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(CliError::config("t_end must be finite and non-negative"));
    }
    let dt = positive("dt", a.dt.or(Some(1e-3)))?;
    let tol = positive("tol", a.tol.or(Some(1e-8)))?;
    let max_steps = positive_count("max_steps", a.max_steps, 100_000)?;
    let state = boxed(read_checkpoint(path)?, a)?;
    let out = OutDir::create(&ctx.out_dir)?;

    match (state, mode) {
        (Cmps::Uniform(u), Mode::Real) => {
            let u = if u.is_left_canonical() { u } else { left_canonicalize(&u)?.0 };
            let run = real_time_trajectory(&u, &params, t_end, dt)?;
            let mut csv = Csv::new(&["t", "energy_density", "particle_density", "canonical_residual"]);
            for r in &run.records {
                csv.row(vec![
                    Cell::Num(Some(r.t)),
                    Cell::Num(Some(r.energy)),
                    Cell::Num(Some(r.density)),
                    Cell::Num(Some(r.canonical_residual)),
                ]);
            }
            out.write("trajectory.csv", csv.as_str())?;
            let last = run.records[run.records.len() - 1].state.clone();
            write_checkpoint(&out.path(CHECKPOINT), &Cmps::Uniform(last))?;
            match run.failure {
                Some(e) => Err(CliError::failure(format!("{e}; last good state written"))),
                None => Ok(()),
            }
        }
        (Cmps::Uniform(u), Mode::Imaginary) => {
            let mut opts = GroundStateOptions::new(u.bond_dim(), tol, max_steps, ctx.seed);
            opts.dt0 = dt;
            let run = ground_state_search(&params, &opts, Some(u))?;
            out.write("trajectory.csv", search_trace(&run, true).as_str())?;
            write_checkpoint(&out.path(CHECKPOINT), &Cmps::Uniform(run.state.clone()))?;
            if !run.converged {
                return Err(CliError::not_converged(format!(
                    "no convergence after {} steps (gradient norm {:e}); partial checkpoint written",
                    run.steps, run.gradient_norm
                )));
            }
            Ok(())
        }
        (Cmps::Finite(f), Mode::Real) => {
            let (last, run) = finite_trajectory(&f, &params, TimeMode::Real, t_end, dt, 0.0)?;
            out.write("trajectory.csv", finite_table(&run.records).as_str())?;
            out.write("profile.csv", profile(&last)?.as_str())?;
            write_checkpoint(&out.path(CHECKPOINT), &Cmps::Finite(last))?;
            match run.failure {
                Some(e) => Err(CliError::failure(format!("{e}; last good state written"))),
                None => Ok(()),
            }
        }
        (Cmps::Finite(f), Mode::Imaginary) => {
            let run = relax_finite(&f, &params, dt, max_steps, tol)?;
            out.write("trajectory.csv", finite_table(&run.records).as_str())?;
            out.write("profile.csv", profile(&run.state)?.as_str())?;
            write_checkpoint(&out.path(CHECKPOINT), &Cmps::Finite(run.state.clone()))?;
            if !run.converged {
                let last = &run.records[run.records.len() - 1];
                return Err(CliError::not_converged(format!(
                    "no convergence after {} steps (gradient norm {:e}); partial checkpoint written",
                    run.records.len() - 1,
                    last.gradient_norm
                )));
            }
            Ok(())
        }
    }
}

fn uniform_input(path: &Option<PathBuf>) -> Result<UniformCmps, CliError> {
    let path = path.as_ref().ok_or_else(|| CliError::config("missing checkpoint"))?;
    match read_checkpoint(path)? {
        Cmps::Uniform(u) => Ok(u),
        Cmps::Finite(_) => Err(CliError::config("this command needs a uniform state")),
    }
}

/// Exit status for a table with per-row failures.
fn tally(failed: usize, total: usize, what: &str) -> Result<(), CliError> {
    if failed * 10 > total {
        return Err(CliError::not_converged(format!("{failed} of {total} {what} failed")));
    }
    Ok(())
}

pub fn respond(ctx: &Context, a: &RespondArgs) -> Result<(), CliError> {
    let model = a.model.model()?;
    let omega = finite("omega", a.omega.unwrap_or(0.0))?;
    let grid = a.grid.points(0.1, 3.0, 30)?;
    let state = uniform_input(&a.checkpoint)?;
    let out = OutDir::create(&ctx.out_dir)?;
    let bundle = prepare_bundle(&state, &LiebLinigerParams::new(model.g, model.mu))?;
    let kf = bundle.k_fermi();
    let ks: Vec<f64> = grid.iter().map(|x| x * kf).collect();
    let entries = sweep_k(&bundle, &ks, omega);
    let mut csv = Csv::new(&["k_over_kf", "amplitude", "residual", "error"]);
    for (x, e) in grid.iter().zip(&entries) {
        csv.row(vec![Cell::Num(Some(*x)), Cell::Num(e.amplitude), Cell::Num(e.residual), Cell::Text(e.error.clone().unwrap_or_default())]);
    }
    out.write("response.csv", csv.as_str())?;
    tally(entries.iter().filter(|e| e.error.is_some()).count(), entries.len(), "response solves")
}

pub fn spectrum(ctx: &Context, a: &SpectrumArgs) -> Result<(), CliError> {
    let model = a.model.model()?;
    let n_modes = positive_count("n_modes", a.n_modes, 4)?;
    let ks = a.grid.points(0.1, 3.0, 30)?;
    let state = uniform_input(&a.checkpoint)?;
    let out = OutDir::create(&ctx.out_dir)?;
    let bundle = prepare_bundle(&state, &LiebLinigerParams::new(model.g, model.mu))?;
    let rows: Vec<_> = ks.par_iter().map(|&k| excitation_spectrum(&bundle, k, n_modes)).collect();
    let mut header = vec!["k".to_string()];
    header.extend((1..=n_modes).map(|i| format!("omega_{i}")));
    header.push("error".into());
    let mut csv = Csv::new(&header);
    for (k, row) in ks.iter().zip(&rows) {
        let mut cells = vec![Cell::Num(Some(*k))];
        match row {
            Ok(w) => {
                cells.extend((0..n_modes).map(|i| Cell::Num(w.get(i).copied())));
                cells.push(Cell::Text(String::new()));
            }
            Err(e) => {
                cells.extend((0..n_modes).map(|_| Cell::Num(None)));
                cells.push(Cell::Text(e.to_string()));
            }
        }
        csv.row(cells);
    }
    out.write("spectrum.csv", csv.as_str())?;
    tally(rows.iter().filter(|r| r.is_err()).count(), rows.len(), "spectrum points")
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Dimensionless ground-state energy e(gamma) of the Lieb-Liniger gas.
    Bethe {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        gamma: Vec<f64>,
        /// Quadrature nodes.
        #[arg(long, default_value_t = 128)]
        n_quad: usize,
    },
    /// Bogoliubov dispersion sqrt(k^4 + 4 g rho k^2).
    Bogoliubov {
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        k: Vec<f64>,
        #[arg(long)]
        g: f64,
        #[arg(long)]
        rho: f64,
    },
}

#[derive(Debug, Serialize)]
struct BetheValue {
    gamma: f64,
    energy: f64,
}

#[derive(Debug, Serialize)]
struct BetheTable {
    n_quad: usize,
    values: Vec<BetheValue>,
}

#[derive(Debug, Serialize)]
struct BogoliubovValue {
    k: f64,
    omega: f64,
}

#[derive(Debug, Serialize)]
struct BogoliubovTable {
    g: f64,
    rho: f64,
    values: Vec<BogoliubovValue>,
}

pub fn oracle(cmd: &OracleCommand) -> Result<(), CliError> {
    let text = match cmd {
        OracleCommand::Bethe { gamma, n_quad } => {
            if *n_quad < 2 {
                return Err(CliError::config("n_quad must be at least 2"));
            }
            let values = gamma
                .iter()
                .map(|&g| {
                    let g = positive("gamma", Some(g))?;
                    Ok(BetheValue { gamma: g, energy: bethe_ground_energy(g, *n_quad)? })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            json(&BetheTable { n_quad: *n_quad, values })?
        }
        OracleCommand::Bogoliubov { k, g, rho } => {
            if !(g.is_finite() && *g >= 0.0) {
                return Err(CliError::config("g must be finite and non-negative"));
            }
            let rho = positive("rho", Some(*rho))?;
            let values = k
                .iter()
                .map(|&k| Ok(BogoliubovValue { k: finite("k", k)?, omega: bogoliubov_dispersion(k, *g, rho) }))
                .collect::<Result<Vec<_>, CliError>>()?;
            json(&BogoliubovTable { g: *g, rho, values })?
        }
    };
    print!("{text}");
    Ok(())
}
