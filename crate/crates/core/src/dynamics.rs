//! Semi-discrete right-hand side and explicit time integration.
//!
//! The evolved variables are density, momentum and concentration; velocity is
//! recovered as `m / max(ρ, rho_floor)`. The pressure force is assembled as
//! `ρ ∇ψ'(ρ)`, which equals `∇p(ρ)` for smooth densities and pairs exactly with
//! the convective mass flux in the discrete energy balance.

use crate::error::{Error, Result};
use crate::fields::{Grid, PhysParams, RunDiagnostics, ScalarField, State, Trajectory, VectorField};
use crate::operators::StencilOps;
use crate::thermo::PressureLaw;

pub type VectorSource = Box<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;
pub type ScalarSource = Box<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// Optional source terms evaluated at cell centres. The momentum source is
/// multiplied by the density.
#[derive(Default)]
pub struct Forcing {
    pub f_mom: Option<VectorSource>,
    pub g_mass: Option<ScalarSource>,
    pub h_chem: Option<ScalarSource>,
}

impl Forcing {
    pub fn none() -> Self {
        Forcing::default()
    }

    pub fn is_none(&self) -> bool {
        self.f_mom.is_none() && self.g_mass.is_none() && self.h_chem.is_none()
    }
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Forcing")
            .field("f_mom", &self.f_mom.is_some())
            .field("g_mass", &self.g_mass.is_some())
            .field("h_chem", &self.h_chem.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    /// Explicit trapezoidal (Heun) second-order Runge–Kutta.
    Heun2,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::Heun2 => "heun2",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeSettings {
    pub integrator: Integrator,
    pub cfl_adv: f64,
    pub cfl_diff: f64,
    /// Used only when recovering velocity from momentum.
    pub rho_floor: f64,
    pub t_end: f64,
    /// Keep every `snapshot_stride`-th step (ignored when `snapshot_interval` is set).
    pub snapshot_stride: usize,
    /// Keep states at multiples of this time; steps are shortened to land on them.
    pub snapshot_interval: Option<f64>,
    /// Include the convective fluxes. Switching them off leaves the
    /// diffusion–reaction subsystem.
    pub convection: bool,
    /// Seed recorded with the run; the integrator itself is deterministic.
    pub seed: u64,
}

impl Default for SchemeSettings {
    fn default() -> Self {
        SchemeSettings {
            integrator: Integrator::Heun2,
            cfl_adv: 0.4,
            cfl_diff: 0.5,
            rho_floor: 1e-10,
            t_end: 0.1,
            snapshot_stride: 10,
            snapshot_interval: None,
            convection: true,
            seed: 0,
        }
    }
}

impl SchemeSettings {
    pub fn validate(&self) -> Result<()> {
        match self.violation() {
            Some((_, msg)) => Err(Error::InvalidParameter(msg)),
            None => Ok(()),
        }
    }

    /// The first violated constraint and the setting it concerns.
    pub fn violation(&self) -> Option<(&'static str, String)> {
        if !(self.cfl_adv > 0.0 && self.cfl_adv < 1.0) {
            return Some(("cfl_adv", format!("cfl_adv must lie in (0,1), got {}", self.cfl_adv)));
        }
        if !(self.cfl_diff > 0.0 && self.cfl_diff < 1.0) {
            return Some(("cfl_diff", format!("cfl_diff must lie in (0,1), got {}", self.cfl_diff)));
        }
        if !(self.rho_floor > 0.0 && self.rho_floor.is_finite()) {
            return Some(("rho_floor", format!("rho_floor must be positive, got {}", self.rho_floor)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Some(("t_end", format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if self.snapshot_stride == 0 {
            return Some(("snapshot_stride", "snapshot_stride must be at least 1".into()));
        }
        if let Some(dt) = self.snapshot_interval {
            if !(dt > 0.0 && dt.is_finite()) {
                return Some(("snapshot_interval", format!("snapshot_interval must be positive, got {dt}")));
            }
        }
        None
    }
}

/// Time derivatives of density, momentum and concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub drho: ScalarField,
    pub dm: VectorField,
    pub dc: ScalarField,
}

fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, &xi) in out.iter_mut().zip(x) {
        *o += a * xi;
    }
}

/// Chemical potential `ψ'(ρ) + δβ/(β-1) ρ^(β-1)` evaluated at `max(ρ, 0)`.
pub(crate) fn pressure_potential(rho: f64, law: &PressureLaw, params: &PhysParams) -> f64 {
    let r = rho.max(0.0);
    let mut p = law.dpsi(r);
    if params.delta > 0.0 {
        p += params.delta * params.beta / (params.beta - 1.0) * r.powf(params.beta - 1.0);
    }
    p
}

/// Full right-hand side with convection.
pub fn rhs(state: &State, params: &PhysParams, forcing: &Forcing) -> Result<Rates> {
    rhs_with(state, params, forcing, true)
}

pub fn rhs_with(state: &State, params: &PhysParams, forcing: &Forcing, convection: bool) -> Result<Rates> {
    let g = *state.grid();
    let ops = StencilOps::new(g);
    let law = PressureLaw::new(params.gamma)?;
    let n = g.cells();
    let dim = g.dim();
    let rho = state.rho.values();
    let m = state.momentum();

    // Mass.
    let mut drho = if convection { ops.convect_scalar(&state.v, &state.rho)?.map(|x| -x).into_values() } else { vec![0.0; n] };
    if params.eps > 0.0 {
        axpy(&mut drho, params.eps, ops.laplacian(&state.rho)?.values());
    }
    if let Some(src) = &forcing.g_mass {
        for (o, x) in drho.iter_mut().zip(g.centers()) {
            *o += src(x, state.t);
        }
    }

    // Momentum.
    let mut dm = if convection {
        let mut c = ops.convect_momentum(&state.v, &m)?;
        c.data_mut().iter_mut().for_each(|x| *x = -*x);
        c
    } else {
        VectorField::zeros(g)
    };
    let potential = state.rho.map(|r| pressure_potential(r, &law, params));
    let grad_pot = ops.grad(&potential)?;
    let grad_c = ops.grad(&state.c)?;
    let visc = ops.vector_laplacian(&state.v)?;
    let bulk = ops.grad_div(&state.v)?;
    let eps_term = if params.eps > 0.0 { Some(ops.advective_derivative(&ops.grad(&state.rho)?, &state.v)?) } else { None };
    let f_mom: Option<Vec<[f64; 2]>> = forcing.f_mom.as_ref().map(|f| g.centers().map(|x| f(x, state.t)).collect());
    for a in 0..dim {
        let out = dm.comp_mut(a);
        let (gp, gc, va) = (grad_pot.comp(a), grad_c.comp(a), state.v.comp(a));
        for k in 0..n {
            out[k] += rho[k] * (gc[k] - gp[k]) - rho[k] * va[k] / params.zeta;
        }
        axpy(out, params.mu, visc.comp(a));
        axpy(out, params.lam + params.mu, bulk.comp(a));
        if let Some(e) = &eps_term {
            axpy(out, -params.eps, e.comp(a));
        }
        if let Some(f) = &f_mom {
            for k in 0..n {
                out[k] += rho[k] * f[k][a];
            }
        }
    }

    // Chemoattractant.
    let mut dc = ops.laplacian(&state.c)?.into_values();
    for ((o, &c), &r) in dc.iter_mut().zip(state.c.values()).zip(rho) {
        *o += r - c;
    }
    if let Some(src) = &forcing.h_chem {
        for (o, x) in dc.iter_mut().zip(g.centers()) {
            *o += src(x, state.t);
        }
    }

    let drho = ScalarField::new(g, drho)?;
    let dc = ScalarField::new(g, dc)?;
    if let Some(cell) = drho.first_non_finite() {
        return Err(Error::NonFinite { what: "drho", cell });
    }
    if let Some(cell) = dm.first_non_finite() {
        return Err(Error::NonFinite { what: "dm", cell });
    }
    if let Some(cell) = dc.first_non_finite() {
        return Err(Error::NonFinite { what: "dc", cell });
    }
    Ok(Rates { drho, dm, dc })
}

/// Largest admissible step under the advective and diffusive CFL limits.
pub fn stable_dt(state: &State, params: &PhysParams, settings: &SchemeSettings) -> Result<f64> {
    let g = state.grid();
    let h = g.h_min();
    let mut speed: f64 = 0.0;
    for k in 0..g.cells() {
        let r = state.rho.values()[k].max(0.0);
        let mut cs2 = params.gamma * r.powf(params.gamma - 1.0);
        if params.delta > 0.0 {
            cs2 += params.delta * params.beta * r.powf(params.beta - 1.0);
        }
        let v = state.v.at(k);
        speed = speed.max((v[0] * v[0] + v[1] * v[1]).sqrt() + cs2.sqrt());
    }
    let dt_adv = if speed > 0.0 { settings.cfl_adv * h / speed } else { f64::INFINITY };
    let dt_diff = settings.cfl_diff * h * h / (2.0 * g.dim() as f64 * params.nu_max());
    let dt = dt_adv.min(dt_diff);
    if !(dt >= 1e-12) {
        return Err(Error::DtUnderflow { dt });
    }
    Ok(dt)
}

fn recover(t: f64, grid: Grid, rho: Vec<f64>, m: Vec<f64>, c: Vec<f64>, floor: f64) -> Result<State> {
    let n = grid.cells();
    let v: Vec<f64> = m.iter().enumerate().map(|(k, &mk)| mk / rho[k % n].max(floor)).collect();
    State::assemble(t, ScalarField::new(grid, rho)?, VectorField::new(grid, v)?, ScalarField::new(grid, c)?)
}

/// Advances by exactly `dt` with the configured integrator.
pub fn step_dt(state: &State, params: &PhysParams, forcing: &Forcing, settings: &SchemeSettings, dt: f64) -> Result<State> {
    let Integrator::Heun2 = settings.integrator;
    let g = *state.grid();
    let m0 = state.momentum();
    let k1 = rhs_with(state, params, forcing, settings.convection)?;

    let euler = |base: &[f64], rate: &[f64]| -> Vec<f64> { base.iter().zip(rate).map(|(&b, &r)| b + dt * r).collect() };
    let stage = recover(
        state.t + dt,
        g,
        euler(state.rho.values(), k1.drho.values()),
        euler(m0.data(), k1.dm.data()),
        euler(state.c.values(), k1.dc.values()),
        settings.rho_floor,
    )?;
    let k2 = rhs_with(&stage, params, forcing, settings.convection)?;

    let heun = |base: &[f64], r1: &[f64], r2: &[f64]| -> Vec<f64> {
        base.iter().zip(r1).zip(r2).map(|((&b, &a), &c)| b + 0.5 * dt * (a + c)).collect()
    };
    recover(
        state.t + dt,
        g,
        heun(state.rho.values(), k1.drho.values(), k2.drho.values()),
        heun(m0.data(), k1.dm.data(), k2.dm.data()),
        heun(state.c.values(), k1.dc.values(), k2.dc.values()),
        settings.rho_floor,
    )
}

/// One CFL-limited step, shortened so as not to pass `settings.t_end`.
pub fn step(state: &State, params: &PhysParams, forcing: &Forcing, settings: &SchemeSettings) -> Result<State> {
    let dt = stable_dt(state, params, settings)?;
    let remaining = settings.t_end - state.t;
    if remaining <= 0.0 {
        return Ok(state.clone());
    }
    if dt >= remaining {
        let mut s = step_dt(state, params, forcing, settings, remaining)?;
        s.t = settings.t_end;
        return Ok(s);
    }
    step_dt(state, params, forcing, settings, dt)
}

/// A run that stopped early, with everything recorded up to the failure.
#[derive(Debug)]
pub struct RunFailure {
    pub partial: Box<Trajectory>,
    pub error: Error,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run failed at t = {}: {}", self.partial.last().t, self.error)
    }
}

impl std::error::Error for RunFailure {}

impl From<RunFailure> for Error {
    fn from(f: RunFailure) -> Error {
        f.error
    }
}

/// Integrates to `settings.t_end`, recording snapshots.
pub fn run(initial: &State, params: &PhysParams, forcing: &Forcing, settings: &SchemeSettings) -> Result<Trajectory, RunFailure> {
    run_with_observer(initial, params, forcing, settings, |_| Ok(()))
}

/// Like [`run`], calling `observer` on the initial state and after every step.
pub fn run_with_observer<F>(
    initial: &State,
    params: &PhysParams,
    forcing: &Forcing,
    settings: &SchemeSettings,
    mut observer: F,
) -> Result<Trajectory, RunFailure>
where
    F: FnMut(&State) -> Result<()>,
{
    let mut traj = Trajectory {
        grid: *initial.grid(),
        params: *params,
        settings: settings.clone(),
        snapshots: vec![initial.clone()],
        diagnostics: RunDiagnostics::default(),
    };
    let fail = |traj: Trajectory, error: Error| Err(RunFailure { partial: Box::new(traj), error });
    if let Err(e) = params.validate().and_then(|_| settings.validate()).and_then(|_| initial.check()) {
        return fail(traj, e);
    }
    traj.diagnostics.observe(initial);
    if let Err(e) = observer(initial) {
        return fail(traj, e);
    }

    let t_end = settings.t_end;
    let tol = 1e-12 * t_end.abs().max(1.0);
    let mut next_snap = settings.snapshot_interval.map(|dt| initial.t + dt);
    let mut current = initial.clone();
    let mut since_snap = 0usize;
    while current.t < t_end - tol {
        let dt_cfl = match stable_dt(&current, params, settings) {
            Ok(dt) => dt,
            Err(e) => return fail(traj, e),
        };
        let mut target = t_end;
        if let Some(ts) = next_snap {
            target = target.min(ts);
        }
        let (dt, land) = if current.t + dt_cfl >= target - tol { (target - current.t, true) } else { (dt_cfl, false) };
        let mut next = match step_dt(&current, params, forcing, settings, dt) {
            Ok(s) => s,
            Err(e) => return fail(traj, e),
        };
        if land {
            next.t = target;
        }
        traj.diagnostics.steps += 1;
        traj.diagnostics.dt_min = traj.diagnostics.dt_min.min(dt);
        traj.diagnostics.dt_max = traj.diagnostics.dt_max.max(dt);
        traj.diagnostics.observe(&next);
        if let Err(e) = observer(&next) {
            return fail(traj, e);
        }

        since_snap += 1;
        let at_end = next.t >= t_end - tol;
        let keep = match (settings.snapshot_interval, next_snap) {
            (Some(interval), Some(ts)) if land && next.t == ts => {
                next_snap = Some(ts + interval);
                true
            }
            (Some(_), _) => at_end,
            (None, _) => since_snap.is_multiple_of(settings.snapshot_stride) || at_end,
        };
        if keep {
            traj.snapshots.push(next.clone());
        }
        current = next;
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::BcKind;

    fn blob(g: Grid) -> State {
        let rho = ScalarField::from_fn(g, |p| {
            let r2 = (p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2);
            0.5 + (-r2 / 0.02).exp()
        });
        State::new(0.0, rho, VectorField::zeros(g), ScalarField::zeros(g)).unwrap()
    }

    #[test]
    fn constant_state_is_steady() {
        for bc in [BcKind::PeriodicAll, BcKind::NoSlip] {
            let g = Grid::new(2, 8, 8, 1.0, 1.0, bc).unwrap();
            let s = State::constant(g, 1.3);
            let r = rhs(&s, &PhysParams::default(), &Forcing::none()).unwrap();
            assert!(r.drho.values().iter().chain(r.dm.data()).chain(r.dc.values()).all(|x| x.abs() < 1e-12));

            let p = PhysParams { delta: 1e-3, eps: 1e-2, ..Default::default() };
            let s = State::constant(g, 1.0);
            let r = rhs(&s, &p, &Forcing::none()).unwrap();
            assert!(r.dm.data().iter().all(|x| x.abs() < 1e-12));
        }
    }

    #[test]
    fn hundred_steps_keep_constant_state() {
        let g = Grid::new(2, 8, 8, 1.0, 1.0, BcKind::NoSlip).unwrap();
        let settings = SchemeSettings { t_end: 1.0, ..Default::default() };
        let mut s = State::constant(g, 0.7);
        let s0 = s.clone();
        for _ in 0..100 {
            s = step(&s, &PhysParams::default(), &Forcing::none(), &settings).unwrap();
        }
        for (a, b) in s.rho.values().iter().zip(s0.rho.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(s.v.data().iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn mass_is_conserved() {
        for bc in [BcKind::PeriodicAll, BcKind::NoSlip] {
            let g = Grid::new(2, 16, 16, 1.0, 1.0, bc).unwrap();
            let s0 = blob(g);
            let params = PhysParams { eps: 1e-3, ..Default::default() };
            let settings = SchemeSettings { t_end: 1.0, ..Default::default() };
            let mut s = s0.clone();
            for _ in 0..1000 {
                s = step(&s, &params, &Forcing::none(), &settings).unwrap();
            }
            let rel = (s.mass() - s0.mass()).abs() / s0.mass();
            assert!(rel < 1e-12, "{bc:?}: {rel:e}");
        }
    }

    #[test]
    fn zero_end_time_keeps_only_initial_state() {
        let g = Grid::new(2, 8, 8, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let settings = SchemeSettings { t_end: 0.0, ..Default::default() };
        let traj = run(&blob(g), &PhysParams::default(), &Forcing::none(), &settings).unwrap();
        assert_eq!(traj.snapshots.len(), 1);
    }

    #[test]
    fn runs_are_bit_identical() {
        let g = Grid::new(2, 16, 16, 1.0, 1.0, BcKind::NoSlip).unwrap();
        let settings = SchemeSettings { t_end: 0.01, snapshot_stride: 7, ..Default::default() };
        let a = run(&blob(g), &PhysParams::default(), &Forcing::none(), &settings).unwrap();
        let b = run(&blob(g), &PhysParams::default(), &Forcing::none(), &settings).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert!(a.check().is_ok());
        assert_eq!(a.last().t, 0.01);
    }

    #[test]
    fn snapshot_interval_lands_on_grid_times() {
        let g = Grid::new(2, 16, 16, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let settings = SchemeSettings { t_end: 0.01, snapshot_interval: Some(0.0025), ..Default::default() };
        let traj = run(&blob(g), &PhysParams::default(), &Forcing::none(), &settings).unwrap();
        let times = traj.times();
        assert_eq!(times.len(), 5);
        for (k, t) in times.iter().enumerate() {
            assert!((t - 0.0025 * k as f64).abs() < 1e-15, "{times:?}");
        }
    }

    #[test]
    fn failed_run_returns_partial_trajectory() {
        let g = Grid::new(2, 8, 8, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let settings = SchemeSettings { t_end: 1.0, snapshot_stride: 1, ..Default::default() };
        let mut calls = 0;
        let err = run_with_observer(&blob(g), &PhysParams::default(), &Forcing::none(), &settings, |_| {
            calls += 1;
            if calls > 3 {
                Err(Error::Audit("stop".into()))
            } else {
                Ok(())
            }
        })
        .unwrap_err();
        assert_eq!(err.partial.snapshots.len(), 3);
        assert!(matches!(err.error, Error::Audit(_)));
    }

    #[test]
    fn nan_is_reported_with_cell() {
        let g = Grid::new(2, 8, 8, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let mut s = State::constant(g, 1.0);
        s.c.values_mut()[9] = f64::NAN;
        let err = rhs(&s, &PhysParams::default(), &Forcing::none()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn vacuum_blowup_is_an_error() {
        let g = Grid::new(2, 8, 8, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let mut s = State::constant(g, 1.0);
        s.v.data_mut()[0] = 1e14;
        assert!(matches!(stable_dt(&s, &PhysParams::default(), &SchemeSettings::default()), Err(Error::DtUnderflow { .. })));
    }

    #[test]
    fn chemo_decay_without_cells() {
        // ρ = 0, c uniform: c' = -c exactly, Heun error O(dt³) per step.
        let g = Grid::new(1, 8, 1, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let s = State::new(0.0, ScalarField::zeros(g), VectorField::zeros(g), ScalarField::constant(g, 2.0)).unwrap();
        let settings = SchemeSettings { t_end: 0.5, ..Default::default() };
        let out = step(&s, &PhysParams::default(), &Forcing::none(), &settings).unwrap();
        let dt = out.t;
        let exact = 2.0 * (-dt).exp();
        assert!((out.c.values()[0] - exact).abs() < dt.powi(3));
        assert!((out.c.values()[0] - 2.0 * (1.0 - dt + 0.5 * dt * dt)).abs() < 1e-14);
    }
}
