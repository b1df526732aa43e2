use serde::{Deserialize, Serialize};

use super::finite::qgpe_rhs_finite;
use super::uniform::{qgpe_rhs_uniform_from, rhs_uniform_retracted};
use super::{LiebLinigerParams, TimeMode};
use crate::cmps::{random_real_uniform_state, random_uniform_state, BoundaryCondition, FiniteCmps, UniformCmps};
use crate::error::{QgpeError, Result};
use crate::numerics::dense::{all_finite, trace_prod, CMat};
use crate::numerics::{ode_step_rk4, StateVector};
use crate::oracle::bethe::{bethe_ground_energy, bethe_energy_derivative};
use crate::transfer::{
    finite_energy, finite_particle_number, fixed_point_density, fixed_point_density_from, propagate_density, uniform_observables,
};

/// Settings of the uniform imaginary-time search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundStateOptions {
    pub bond_dim: usize,
    pub tol: f64,
    pub max_steps: usize,
    pub seed: u64,
    /// Initial imaginary-time step.
    pub dt0: f64,
    /// Start from a complex random state; a real start stays on real matrices.
    pub complex_init: bool,
    /// Grow the step from a Barzilai-Borwein estimate instead of a fixed factor.
    pub barzilai_borwein: bool,
}

impl GroundStateOptions {
    pub fn new(bond_dim: usize, tol: f64, max_steps: usize, seed: u64) -> Self {
        GroundStateOptions { bond_dim, tol, max_steps, seed, dt0: 0.05, complex_init: true, barzilai_borwein: true }
    }
}

/// State of the search after an accepted step; `t` is the accumulated imaginary time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchRecord {
    pub t: f64,
    pub energy: f64,
    pub density: f64,
    pub gradient_norm: f64,
    pub canonical_residual: f64,
}

impl SearchRecord {
    fn of(t: f64, p: &Point) -> Self {
        SearchRecord { t, energy: p.energy, density: p.density, gradient_norm: p.gradient_norm, canonical_residual: p.state.canonical_residual() }
    }
}

/// Outcome of an imaginary-time search, converged or not.
#[derive(Debug, Clone)]
pub struct GroundStateRun {
    pub state: UniformCmps,
    /// Energy density after every accepted step, starting with the initial state.
    pub energy_trace: Vec<f64>,
    /// One record per entry of `energy_trace`.
    pub records: Vec<SearchRecord>,
    pub gradient_norm: f64,
    pub steps: usize,
    pub rejected: usize,
    pub converged: bool,
    pub energy: f64,
    pub density: f64,
}

impl GroundStateRun {
    pub fn gamma(&self, g: f64) -> f64 {
        g / self.density
    }
}

fn initial_state(opts: &GroundStateOptions) -> Result<UniformCmps> {
    if opts.bond_dim == 0 {
        return Err(QgpeError::InvalidInput("bond dimension must be positive".into()));
    }
    if opts.complex_init {
        random_uniform_state(opts.bond_dim, opts.seed)
    } else {
        random_real_uniform_state(opts.bond_dim, opts.seed)
    }
}

struct Point {
    state: UniformCmps,
    energy: f64,
    density: f64,
    y: CMat,
    gradient_norm: f64,
    rho_r: CMat,
    f: CMat,
}

fn evaluate(state: UniformCmps, params: &LiebLinigerParams, near: Option<&Point>) -> Result<Point> {
    let dens = fixed_point_density_from(&state, near.map(|p| &p.rho_r))?;
    let obs = uniform_observables(&state, &dens, params.g, params.v0());
    let flow = qgpe_rhs_uniform_from(&state, &dens, params, TimeMode::Imaginary, near.map(|p| &p.f))?;
    if !obs.energy.is_finite() || !flow.gradient_norm.is_finite() {
        return Err(QgpeError::NonFiniteDerivative);
    }
    Ok(Point {
        state,
        energy: obs.energy,
        density: obs.density,
        y: flow.y,
        gradient_norm: flow.gradient_norm,
        rho_r: dens.rho_r[0].clone(),
        f: flow.f,
    })
}

/// Imaginary-time search that reports non-convergence in the returned run
/// instead of failing. `init` overrides the random initial state.
// Short BB step <s,y>/<y,y>, with s the move in R and y the change of the flow field.
fn barzilai_borwein_step(old: &Point, new: &Point, dt: f64) -> Option<f64> {
    let s = &new.state.r - &old.state.r;
    let y = &new.y - &old.y;
    let sy = s.iter().zip(y.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
    let yy = y.norm_squared();
    if !(sy > 0.0 && yy > 0.0) {
        return None;
    }
    Some((sy / yy).clamp(0.5 * dt, 10.0 * dt))
}

pub fn ground_state_search(
    params: &LiebLinigerParams,
    opts: &GroundStateOptions,
    init: Option<UniformCmps>,
) -> Result<GroundStateRun> {
    params.validate()?;
    if !(opts.tol > 0.0) {
        return Err(QgpeError::InvalidInput("tolerance must be positive".into()));
    }
    let mut start = match init {
        Some(s) => s,
        None => initial_state(opts)?,
    };
    if !start.is_left_canonical() {
        start = crate::cmps::left_canonicalize(&start)?.0;
    }
    let mut cur = evaluate(start, params, None)?;
    let mut trace = vec![cur.energy];
    let mut records = vec![SearchRecord::of(0.0, &cur)];
    let mut t = 0.0;
    let mut dt = opts.dt0;
    let mut steps = 0;
    let mut rejected = 0;
    let mut stalled = 0;
    while cur.gradient_norm >= opts.tol && steps < opts.max_steps {
        let r = &cur.state.r;
        let q = &cur.state.q + (r.adjoint() * &cur.y).scale(dt);
        let mut trial = UniformCmps { q, r: r - cur.y.scale(dt) };
        trial.restore_left_canonical();
        let accepted = match evaluate(trial, params, Some(&cur)) {
            Ok(p) if p.energy <= cur.energy - 0.25 * dt * cur.gradient_norm.powi(2) => Some(p),
            // below the resolution of the energy, fall back on the gradient
            Ok(p) if p.energy <= cur.energy + 1e-12 * cur.energy.abs() && p.gradient_norm < cur.gradient_norm => Some(p),
            _ => None,
        };
        match accepted {
            Some(p) => {
                trace.push(p.energy);
                t += dt;
                records.push(SearchRecord::of(t, &p));
                let grown = dt * 1.2;
                dt = if opts.barzilai_borwein { barzilai_borwein_step(&cur, &p, dt).unwrap_or(grown) } else { grown };
                cur = p;
                steps += 1;
                stalled = 0;
            }
            None => {
                rejected += 1;
                dt *= 0.5;
                stalled += 1;
                if stalled > 60 {
                    break;
                }
            }
        }
    }
    let converged = cur.gradient_norm < opts.tol;
    Ok(GroundStateRun {
        energy: cur.energy,
        density: cur.density,
        gradient_norm: cur.gradient_norm,
        state: cur.state,
        energy_trace: trace,
        records,
        steps,
        rejected,
        converged,
    })
}

/// Uniform ground state by imaginary-time flow from a seeded random state.
pub fn imaginary_time_ground_state(
    params: &LiebLinigerParams,
    bond_dim: usize,
    tol: f64,
    max_steps: usize,
    seed: u64,
) -> Result<(UniformCmps, Vec<f64>)> {
    if tol == f64::INFINITY {
        let s = initial_state(&GroundStateOptions::new(bond_dim, tol, max_steps, seed))?;
        let e = super::uniform::uniform_energy(&s, params)?;
        return Ok((s, vec![e]));
    }
    let run = ground_state_search(params, &GroundStateOptions::new(bond_dim, tol, max_steps, seed), None)?;
    if !run.converged {
        return Err(QgpeError::NoConvergence { steps: run.steps, residual: run.gradient_norm });
    }
    Ok((run.state, run.energy_trace))
}

/// Chemical potential at which the exact Lieb-Liniger gas with coupling `g`
/// has dimensionless coupling `gamma`: `mu = rho^2 (3 e - gamma e')`, `rho = g / gamma`.
pub fn mu_for_gamma(g: f64, gamma: f64) -> Result<f64> {
    if !(g > 0.0 && gamma > 0.0) {
        return Err(QgpeError::InvalidInput("g and gamma must be positive".into()));
    }
    let rho = g / gamma;
    let e = bethe_ground_energy(gamma, 128)?;
    let de = bethe_energy_derivative(gamma, 128)?;
    Ok(rho * rho * (3.0 * e - gamma * de))
}

/// Secant search on `mu` so that the converged variational state reaches the
/// target `gamma = g / rho`, starting from the exact-gas chemical potential.
/// Returns the chemical potential and the final run.
pub fn calibrate_mu(
    g: f64,
    gamma_target: f64,
    opts: &GroundStateOptions,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(f64, GroundStateRun)> {
    let mut mu = mu_for_gamma(g, gamma_target)?;
    let mut run = ground_state_search(&LiebLinigerParams::new(g, mu), opts, None)?;
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..max_iter {
        let gamma = run.gamma(g);
        let err = gamma - gamma_target;
        if (err / gamma_target).abs() < rel_tol {
            break;
        }
        let next = match prev {
            Some((mu0, err0)) if (err - err0).abs() > 0.0 => mu - err * (mu - mu0) / (err - err0),
            // larger mu means higher density and smaller gamma
            _ => mu * (1.0 + 0.5 * err / gamma_target),
        };
        prev = Some((mu, err));
        mu = next;
        run = ground_state_search(&LiebLinigerParams::new(g, mu), opts, Some(run.state.clone()))?;
    }
    Ok((mu, run))
}

/// One record of a uniform trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub energy: f64,
    pub density: f64,
    pub canonical_residual: f64,
    pub state: UniformCmps,
}

type Pair = (CMat, CMat);

fn record(t: f64, y: &Pair, params: &LiebLinigerParams) -> Result<TrajectoryRecord> {
    let raw = UniformCmps { q: y.0.clone(), r: y.1.clone() };
    let mut canon = raw.clone();
    canon.restore_left_canonical();
    let dens = fixed_point_density(&canon)?;
    let obs = uniform_observables(&canon, &dens, params.g, params.v0());
    Ok(TrajectoryRecord {
        t,
        energy: obs.energy,
        density: obs.density,
        canonical_residual: raw.canonical_residual(),
        state: raw,
    })
}

/// Records up to the first failing step, and that failure if any.
#[derive(Debug, Clone)]
pub struct Trajectory<R> {
    pub records: Vec<R>,
    pub failure: Option<QgpeError>,
}

impl<R> Trajectory<R> {
    pub fn into_result(self) -> Result<Vec<R>> {
        match self.failure {
            Some(e) => Err(e),
            None => Ok(self.records),
        }
    }
}

/// Real-time RK4 integration of a uniform state, one record per step
/// (including `t = 0`).
pub fn real_time_evolve(
    state: &UniformCmps,
    params: &LiebLinigerParams,
    t_end: f64,
    dt: f64,
) -> Result<Vec<TrajectoryRecord>> {
    real_time_trajectory(state, params, t_end, dt)?.into_result()
}

/// As [`real_time_evolve`], but a failing step ends the run and keeps the
/// records before it.
pub fn real_time_trajectory(
    state: &UniformCmps,
    params: &LiebLinigerParams,
    t_end: f64,
    dt: f64,
) -> Result<Trajectory<TrajectoryRecord>> {
    params.validate()?;
    if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(QgpeError::InvalidInput("need dt > 0 and finite t_end >= 0".into()));
    }
    if !state.is_left_canonical() {
        return Err(QgpeError::InvalidInput("real-time evolution starts from a left-canonical state".into()));
    }
    let steps = (t_end / dt).round() as usize;
    let f = |_t: f64, y: &Pair| -> Result<Pair> {
        let s = UniformCmps { q: y.0.clone(), r: y.1.clone() };
        let (flow, _, _) = rhs_uniform_retracted(&s, params, TimeMode::Real)?;
        Ok((flow.q_dot, flow.r_dot))
    };
    let mut y: Pair = (state.q.clone(), state.r.clone());
    let mut records = vec![record(0.0, &y, params)?];
    let step = |n: usize, y: &Pair, prev: f64| -> Result<(Pair, TrajectoryRecord)> {
        let t = n as f64 * dt;
        let next = ode_step_rk4(f, y, t, dt)?;
        let rec = record(t + dt, &next, params)?;
        let jump = (rec.energy - prev).abs() / (prev.abs() + 1e-12);
        if jump > 1e-3 {
            return Err(QgpeError::StepTooLarge { jump });
        }
        Ok((next, rec))
    };
    for n in 0..steps {
        let prev = records[records.len() - 1].energy;
        match step(n, &y, prev) {
            Ok((next, rec)) => {
                y = next;
                records.push(rec);
            }
            Err(e) => return Ok(Trajectory { records, failure: Some(e) }),
        }
    }
    Ok(Trajectory { records, failure: None })
}

impl StateVector for FiniteCmps {
    fn add_scaled(&self, alpha: f64, other: &Self) -> Self {
        FiniteCmps {
            x1: self.x1,
            x2: self.x2,
            qs: self.qs.add_scaled(alpha, &other.qs),
            rs: self.rs.add_scaled(alpha, &other.rs),
            v1: &self.v1 + other.v1.scale(alpha),
            v2: &self.v2 + other.v2.scale(alpha),
            bc: self.bc,
        }
    }
    fn is_finite(&self) -> bool {
        self.qs.iter().chain(&self.rs).all(all_finite)
            && self.v1.iter().chain(self.v2.iter()).all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Observables of a finite trajectory at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteRecord {
    pub t: f64,
    pub energy: f64,
    pub particle_number: f64,
    /// Largest relative variation of `tr(rho_L rho_R)` along the grid.
    pub norm_variation: f64,
    /// Metric norm of the generator (convergence measure in imaginary time).
    pub gradient_norm: f64,
}

fn finite_rhs(state: &FiniteCmps, params: &LiebLinigerParams, mode: TimeMode) -> Result<FiniteCmps> {
    let dens = propagate_density(state)?;
    let flow = qgpe_rhs_finite(state, &dens, params, mode)?;
    Ok(FiniteCmps {
        x1: state.x1,
        x2: state.x2,
        qs: flow.q_dot,
        rs: flow.r_dot,
        v1: flow.v1_dot,
        v2: flow.v2_dot,
        bc: state.bc,
    })
}

fn finite_record(t: f64, state: &FiniteCmps, params: &LiebLinigerParams) -> Result<FiniteRecord> {
    let dens = propagate_density(state)?;
    let v = params.v_profile(state.len())?;
    let flow = qgpe_rhs_finite(state, &dens, params, TimeMode::Imaginary)?;
    let dx = state.dx();
    let n = state.len();
    let frozen = |i: usize| matches!(state.bc, BoundaryCondition::Dirichlet { .. }) && (i == 0 || i == n - 1);
    let local: Vec<f64> = (0..n)
        .map(|i| match frozen(i) {
            true => 0.0,
            false => trace_prod(&(&dens.rho_l[i] * &flow.y[i] * &dens.rho_r[i]), &flow.y[i].adjoint()).re / dens.norm[i],
        })
        .collect();
    let grad = crate::transfer::trapezoid(&local, dx).max(0.0).sqrt();
    Ok(FiniteRecord {
        t,
        energy: finite_energy(state, &dens, params.g, &v),
        particle_number: finite_particle_number(state, &dens),
        norm_variation: dens.norm_variation(),
        gradient_norm: grad,
    })
}

/// Rescale the boundary vectors so that `tr(rho_L rho_R) = 1`.
fn normalize_boundaries(state: &mut FiniteCmps) -> Result<()> {
    let dens = propagate_density(state)?;
    let n = dens.norm.iter().sum::<f64>() / dens.len() as f64;
    if !(n > 0.0) || !n.is_finite() {
        return Err(QgpeError::NonFiniteDerivative);
    }
    let s = n.powf(-0.25);
    state.v1.scale_mut(s);
    state.v2.scale_mut(s);
    Ok(())
}

/// Fixed-step RK4 integration of a finite state. In imaginary time the
/// boundary vectors are renormalized after every step and the run stops early
/// once the generator norm drops below `tol`.
pub fn evolve_finite(
    state: &FiniteCmps,
    params: &LiebLinigerParams,
    mode: TimeMode,
    t_end: f64,
    dt: f64,
    tol: f64,
) -> Result<(FiniteCmps, Vec<FiniteRecord>)> {
    let (last, run) = finite_trajectory(state, params, mode, t_end, dt, tol)?;
    Ok((last, run.into_result()?))
}

/// As [`evolve_finite`], returning the last good state alongside the records
/// when a step fails.
pub fn finite_trajectory(
    state: &FiniteCmps,
    params: &LiebLinigerParams,
    mode: TimeMode,
    t_end: f64,
    dt: f64,
    tol: f64,
) -> Result<(FiniteCmps, Trajectory<FiniteRecord>)> {
    params.validate()?;
    if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(QgpeError::InvalidInput("need dt > 0 and finite t_end >= 0".into()));
    }
    let steps = (t_end / dt).round() as usize;
    let f = |_t: f64, y: &FiniteCmps| finite_rhs(y, params, mode);
    let step = |t: f64, y: &FiniteCmps, prev: f64| -> Result<(FiniteCmps, FiniteRecord)> {
        let mut next = ode_step_rk4(f, y, t - dt, dt)?;
        next.apply_dirichlet();
        if mode == TimeMode::Imaginary {
            normalize_boundaries(&mut next)?;
        }
        let rec = finite_record(t, &next, params)?;
        let jump = (rec.energy - prev).abs() / (prev.abs() + 1e-12);
        if mode == TimeMode::Real && jump > 1e-3 {
            return Err(QgpeError::StepTooLarge { jump });
        }
        Ok((next, rec))
    };
    let mut y = state.clone();
    let mut records = vec![finite_record(0.0, &y, params)?];
    for n in 0..steps {
        let prev = records[records.len() - 1].energy;
        match step((n + 1) as f64 * dt, &y, prev) {
            Ok((next, rec)) => {
                y = next;
                let done = mode == TimeMode::Imaginary && rec.gradient_norm < tol;
                records.push(rec);
                if done {
                    break;
                }
            }
            Err(e) => return Ok((y, Trajectory { records, failure: Some(e) })),
        }
    }
    Ok((y, Trajectory { records, failure: None }))
}

/// Imaginary-time relaxation of a finite state. A step is accepted when it
/// lowers the energy or the generator norm; otherwise it is retried with half
/// the step.
pub fn imaginary_time_finite(
    state: &FiniteCmps,
    params: &LiebLinigerParams,
    dt: f64,
    max_steps: usize,
    tol: f64,
) -> Result<(FiniteCmps, Vec<FiniteRecord>)> {
    let run = relax_finite(state, params, dt, max_steps, tol)?;
    if !run.converged {
        let last = run.records[run.records.len() - 1].gradient_norm;
        return Err(QgpeError::NoConvergence { steps: run.records.len() - 1, residual: last });
    }
    Ok((run.state, run.records))
}

/// Outcome of [`relax_finite`], converged or not.
#[derive(Debug, Clone)]
pub struct FiniteRelaxation {
    pub state: FiniteCmps,
    pub records: Vec<FiniteRecord>,
    pub converged: bool,
}

/// [`imaginary_time_finite`] without turning a stall into an error.
pub fn relax_finite(
    state: &FiniteCmps,
    params: &LiebLinigerParams,
    dt: f64,
    max_steps: usize,
    tol: f64,
) -> Result<FiniteRelaxation> {
    params.validate()?;
    if !(dt > 0.0) {
        return Err(QgpeError::InvalidInput("need dt > 0".into()));
    }
    let f = |_t: f64, y: &FiniteCmps| finite_rhs(y, params, TimeMode::Imaginary);
    let mut y = state.clone();
    y.apply_dirichlet();
    normalize_boundaries(&mut y)?;
    let mut cur = finite_record(0.0, &y, params)?;
    let mut out = vec![cur.clone()];
    let mut h = dt;
    let mut t = 0.0;
    let mut halvings = 0;
    let trial = |t: f64, h: f64, y: &FiniteCmps| -> Result<(FiniteCmps, FiniteRecord)> {
        let mut next = ode_step_rk4(f, y, t, h)?;
        next.apply_dirichlet();
        normalize_boundaries(&mut next)?;
        let rec = finite_record(t + h, &next, params)?;
        Ok((next, rec))
    };
    while out.len() <= max_steps && cur.gradient_norm >= tol {
        let accepted = match trial(t, h, &y) {
            Ok((next, rec)) => {
                let lower = rec.energy <= cur.energy + 1e-12 * cur.energy.abs();
                // the grid flow descends its own discretized energy only up to O(dx^2)
                (lower || rec.gradient_norm < cur.gradient_norm).then_some((next, rec))
            }
            Err(_) => None,
        };
        match accepted {
            Some((next, rec)) => {
                t += h;
                y = next;
                cur = rec.clone();
                out.push(rec);
                halvings = 0;
                h = (h * 1.2).min(dt);
            }
            None => {
                h *= 0.5;
                halvings += 1;
                if halvings > 40 {
                    break;
                }
            }
        }
    }
    let converged = cur.gradient_norm < tol;
    Ok(FiniteRelaxation { state: y, records: out, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::dense::c;

    #[test]
    fn mean_field_ground_state() {
        let p = LiebLinigerParams::new(1.0, 1.0);
        let (s, trace) = imaginary_time_ground_state(&p, 1, 1e-10, 10_000, 0).unwrap();
        let dens = fixed_point_density(&s).unwrap();
        let obs = uniform_observables(&s, &dens, p.g, p.v0());
        assert!((obs.density - 0.5).abs() < 1e-8);
        assert!((obs.energy + 0.25).abs() < 1e-8);
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    }

    #[test]
    fn infinite_tolerance_returns_initial_state() {
        let p = LiebLinigerParams::new(1.0, 1.0);
        let (s, trace) = imaginary_time_ground_state(&p, 3, f64::INFINITY, 10, 4).unwrap();
        assert_eq!(s, random_uniform_state(3, 4).unwrap());
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn scalar_phase_rotation() {
        let (g, mu, n): (f64, f64, f64) = (1.0, 0.7, 0.3);
        let phi = c(n.sqrt(), 0.0);
        let s = UniformCmps::new(CMat::from_element(1, 1, c(-n / 2.0, 0.0)), CMat::from_element(1, 1, phi)).unwrap();
        let p = LiebLinigerParams::new(g, mu);
        let traj = real_time_evolve(&s, &p, 1.0, 0.01).unwrap();
        let last = traj.last().unwrap();
        let want = phi * c(0.0, -(-mu + 2.0 * g * n)).exp();
        assert!((last.state.r[(0, 0)] - want).norm() < 1e-9);
        assert!(traj.iter().all(|r| (r.density - n).abs() < 1e-12));
    }
}
