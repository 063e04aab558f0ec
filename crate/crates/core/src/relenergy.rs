//! Relative energy between a computed state and a reference triple
//! `(r, u, z)`, the residuals of the reference, and the remainder that
//! controls the growth of the relative energy.

use crate::dynamics::{run, Forcing, SchemeSettings};
use crate::energetics::{chem_rate, viscous_density};
use crate::error::{Error, Result};
use crate::fields::{integrate_raw, same_grid, Grid, PhysParams, ScalarField, State, Trajectory, VectorField};
use crate::operators::StencilOps;
use crate::thermo::PressureLaw;

/// Pointwise values and derivatives of a reference triple at one point.
/// Discrete residuals fill it from stencils, manufactured solutions from
/// closed forms; both then share [`Jet::residuals`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub r: f64,
    pub r_t: f64,
    /// `div(r u)`.
    pub div_ru: f64,
    pub u: [f64; 2],
    pub u_t: [f64; 2],
    /// `grad_u[b][a] = ∂_a u_b`.
    pub grad_u: [[f64; 2]; 2],
    pub lap_u: [f64; 2],
    pub grad_div_u: [f64; 2],
    /// `∇ψ'(r)`.
    pub grad_dpsi: [f64; 2],
    pub z: f64,
    pub z_t: f64,
    pub grad_z: [f64; 2],
    pub lap_z: f64,
}

impl Jet {
    /// Momentum, mass and chemoattractant residuals `(f, g, h)`.
    pub fn residuals(&self, params: &PhysParams, dim: usize) -> ([f64; 2], f64, f64) {
        let mut f = [0.0; 2];
        for (b, fb) in f.iter_mut().enumerate().take(dim) {
            let mut adv = 0.0;
            for a in 0..dim {
                adv += self.u[a] * self.grad_u[b][a];
            }
            let visc = params.mu * self.lap_u[b] + (params.lam + params.mu) * self.grad_div_u[b];
            *fb = self.u_t[b] + adv + self.grad_dpsi[b] - visc / self.r - self.grad_z[b] + self.u[b] / params.zeta;
        }
        let g = self.r_t + self.div_ru;
        let h = self.z_t - self.lap_z + self.z - self.r;
        (f, g, h)
    }
}

/// Reference fields with their time derivatives on the audit grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub state: State,
    pub dr: ScalarField,
    pub du: VectorField,
    pub dz: ScalarField,
}

impl Reference {
    pub fn new(state: State, dr: ScalarField, du: VectorField, dz: ScalarField) -> Result<Reference> {
        same_grid(state.grid(), dr.grid())?;
        same_grid(state.grid(), du.grid())?;
        same_grid(state.grid(), dz.grid())?;
        Ok(Reference { state, dr, du, dz })
    }

    /// A reference frozen in time.
    pub fn stationary(state: State) -> Reference {
        let g = *state.grid();
        Reference { state, dr: ScalarField::zeros(g), du: VectorField::zeros(g), dz: ScalarField::zeros(g) }
    }

    pub fn grid(&self) -> &Grid {
        self.state.grid()
    }

    fn check_positive(&self) -> Result<()> {
        let r = &self.state.rho;
        if let Some(cell) = r.values().iter().position(|&x| !(x > 0.0)) {
            return Err(Error::Domain(format!("reference density {} ≤ 0 at cell {cell}", r.values()[cell])));
        }
        Ok(())
    }

    /// Discrete jets at every cell.
    pub fn jets(&self, params: &PhysParams) -> Result<Vec<Jet>> {
        self.check_positive()?;
        let g = *self.grid();
        let ops = StencilOps::new(g);
        let law = PressureLaw::new(params.gamma)?;
        let s = &self.state;
        let gu = ops.velocity_gradient(&s.v)?;
        let lap_u = ops.vector_laplacian(&s.v)?;
        let gdu = ops.grad_div(&s.v)?;
        let gdpsi = ops.grad(&s.rho.map(|r| law.dpsi(r)))?;
        let gz = ops.grad(&s.c)?;
        let lap_z = ops.laplacian(&s.c)?;
        let div_ru = ops.div(&s.momentum())?;
        let dim = g.dim();
        Ok((0..g.cells())
            .map(|k| {
                let mut j = Jet {
                    r: s.rho.values()[k],
                    r_t: self.dr.values()[k],
                    div_ru: div_ru.values()[k],
                    z: s.c.values()[k],
                    z_t: self.dz.values()[k],
                    lap_z: lap_z.values()[k],
                    ..Jet::default()
                };
                for a in 0..dim {
                    j.u[a] = s.v.comp(a)[k];
                    j.u_t[a] = self.du.comp(a)[k];
                    j.lap_u[a] = lap_u.comp(a)[k];
                    j.grad_div_u[a] = gdu.comp(a)[k];
                    j.grad_dpsi[a] = gdpsi.comp(a)[k];
                    j.grad_z[a] = gz.comp(a)[k];
                    for (row, g) in j.grad_u.iter_mut().zip(&gu) {
                        row[a] = g.comp(a)[k];
                    }
                }
                j
            })
            .collect())
    }
}

/// `f = ∂t u + (u·∇)u + ∇ψ'(r) - (μΔu + (λ+μ)∇div u)/r - ∇z + u/ζ` on the grid.
pub fn residual_f(reference: &Reference, params: &PhysParams) -> Result<VectorField> {
    let g = *reference.grid();
    let jets = reference.jets(params)?;
    Ok(VectorField::from_components(g, (0..g.dim()).map(|a| jets.iter().map(|j| j.residuals(params, g.dim()).0[a]).collect()).collect())
        .expect("shape matches grid"))
}

/// `g = ∂t r + div(r u)`.
pub fn residual_g(reference: &Reference, params: &PhysParams) -> Result<ScalarField> {
    let g = *reference.grid();
    let jets = reference.jets(params)?;
    ScalarField::new(g, jets.iter().map(|j| j.residuals(params, g.dim()).1).collect())
}

/// `h = ∂t z - Δz + z - r`.
pub fn residual_h(reference: &Reference, params: &PhysParams) -> Result<ScalarField> {
    let g = *reference.grid();
    let jets = reference.jets(params)?;
    ScalarField::new(g, jets.iter().map(|j| j.residuals(params, g.dim()).2).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelEnergyLedger {
    pub t: f64,
    pub rel_e: f64,
    pub rel_h: f64,
    pub rel_diss_visc: f64,
    pub rel_diss_dtc: f64,
    pub remainder_r: f64,
    /// The eight integrals making up the remainder, in order.
    pub remainder_terms: [f64; 8],
    /// `L²` norms of `f`, `g`, `h`.
    pub residual_norms: [f64; 3],
    /// `∫(ρ-r)(c-z)`.
    pub coupling_rel: f64,
}

struct Differences {
    drho: Vec<f64>,
    dv: VectorField,
    dc: ScalarField,
}

fn differences(state: &State, reference: &State) -> Result<Differences> {
    same_grid(state.grid(), reference.grid())?;
    Ok(Differences {
        drho: state.rho.values().iter().zip(reference.rho.values()).map(|(a, b)| a - b).collect(),
        dv: state.v.zip_map(&reference.v, |a, b| a - b)?,
        dc: state.c.zip_map(&reference.c, |a, b| a - b)?,
    })
}

/// `(E(ρ,v,c | r,u,z), H(ρ,v,c | r,u,z), ∫(ρ-r)(c-z))`.
pub fn relative_energies(state: &State, reference: &State, params: &PhysParams) -> Result<(f64, f64, f64)> {
    let g = *state.grid();
    let law = PressureLaw::new(params.gamma)?;
    let ops = StencilOps::new(g);
    let d = differences(state, reference)?;
    let rho = state.rho.values();
    let r = reference.rho.values();
    let dv2 = d.dv.norm_sq();
    let gdc2 = ops.grad(&d.dc)?.norm_sq();
    let (mut bregman, mut kin, mut grad, mut sq, mut cross) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for k in 0..g.cells() {
        bregman += law.bregman(rho[k].max(0.0), r[k]);
        kin += rho[k] * dv2.values()[k];
        grad += gdc2.values()[k];
        sq += d.dc.values()[k] * d.dc.values()[k];
        cross += d.drho[k] * d.dc.values()[k];
    }
    let w = g.cell_measure();
    let (bregman, kin, grad, sq, cross) = (bregman * w, kin * w, grad * w, sq * w, cross * w);
    let rel_e = bregman + 0.5 * kin + 0.5 * (grad + sq) - cross;
    let rel_h = 0.5 * (bregman + kin + 0.5 * grad + sq);
    if !(rel_e.is_finite() && rel_h.is_finite()) {
        return Err(Error::NonFinite { what: "relative energy", cell: 0 });
    }
    Ok((rel_e, rel_h, cross))
}

pub fn relative_h(state: &State, reference: &State, params: &PhysParams) -> Result<f64> {
    Ok(relative_energies(state, reference, params)?.1)
}

/// Relative energy, relative dissipation and the remainder at one time.
/// `∂t c` of the computed state is the discrete `Δc - c + ρ`.
pub fn relative_ledger(state: &State, reference: &Reference, params: &PhysParams) -> Result<RelEnergyLedger> {
    remainder_ledger(state, reference, params, true)
}

fn remainder_ledger(state: &State, reference: &Reference, params: &PhysParams, with_residuals: bool) -> Result<RelEnergyLedger> {
    let g = *state.grid();
    same_grid(&g, reference.grid())?;
    let jets = reference.jets(params)?;
    let law = PressureLaw::new(params.gamma)?;
    let ops = StencilOps::new(g);
    let dim = g.dim();
    let (rel_e, rel_h, coupling_rel) = relative_energies(state, &reference.state, params)?;
    let d = differences(state, &reference.state)?;
    let rel_diss_visc = integrate_raw(&g, &viscous_density(&ops, &d.dv, params)?);
    let dtc = chem_rate(state)?;
    let dt_diff: Vec<f64> = dtc.values().iter().zip(reference.dz.values()).map(|(a, b)| a - b).collect();
    let rel_diss_dtc = integrate_raw(&g, &dt_diff.iter().map(|x| x * x).collect::<Vec<_>>());
    let grad_dc = ops.grad(&d.dc)?;
    let div_u = ops.div(&reference.state.v)?;

    let rho = state.rho.values();
    let mut terms = [0.0; 8];
    let mut norms = [0.0; 3];
    for (k, j) in jets.iter().enumerate() {
        let (f, gg, h) = j.residuals(params, dim);
        let (f, gg, h) = if with_residuals { (f, gg, h) } else { ([0.0; 2], 0.0, 0.0) };
        let dr = d.drho[k];
        let dc = d.dc.values()[k];
        let w = d.dv.at(k);
        terms[0] -= law.rel_p(rho[k].max(0.0), j.r) * div_u.values()[k];
        terms[1] -= law.d2psi(j.r) * dr * gg;
        terms[2] -= h * dt_diff[k];
        let mut t4 = 0.0;
        let mut t6 = 0.0;
        let mut t8 = 0.0;
        for a in 0..dim {
            t4 += grad_dc.comp(a)[k] * dr * j.u[a];
            for b in 0..dim {
                t6 += w[a] * w[b] * j.grad_u[b][a];
            }
            let visc = params.mu * j.lap_u[a] + (params.lam + params.mu) * j.grad_div_u[a];
            t8 += (dr / j.r * visc + rho[k] * f[a]) * w[a];
        }
        terms[3] -= t4;
        terms[4] += dc * gg;
        terms[5] -= rho[k] * t6;
        terms[6] -= rho[k] * (w[0] * w[0] + w[1] * w[1]) / params.zeta;
        terms[7] -= t8;
        norms[0] += f[0] * f[0] + f[1] * f[1];
        norms[1] += gg * gg;
        norms[2] += h * h;
    }
    let cm = g.cell_measure();
    terms.iter_mut().for_each(|t| *t *= cm);
    norms.iter_mut().for_each(|n| *n = (*n * cm).sqrt());
    let remainder_r = terms.iter().sum();
    if !f64::is_finite(remainder_r) {
        return Err(Error::NonFinite { what: "remainder", cell: 0 });
    }
    Ok(RelEnergyLedger {
        t: state.t,
        rel_e,
        rel_h,
        rel_diss_visc,
        rel_diss_dtc,
        remainder_r,
        remainder_terms: terms,
        residual_norms: norms,
        coupling_rel,
    })
}

/// Remainder with `f = g = h = 0`, the form used when the reference solves
/// the system exactly.
pub fn remainder_without_residuals(state: &State, reference: &Reference, params: &PhysParams) -> Result<f64> {
    Ok(remainder_ledger(state, reference, params, false)?.remainder_r)
}

/// The five remainder groups for an exact reference:
/// pressure, chemotactic transport, convection, drag and viscous coupling.
/// The drag group carries the computed density, matching the remainder.
pub fn j_term_breakdown(state: &State, reference: &Reference, params: &PhysParams) -> Result<[f64; 5]> {
    let g = *state.grid();
    same_grid(&g, reference.grid())?;
    reference.check_positive()?;
    let law = PressureLaw::new(params.gamma)?;
    let ops = StencilOps::new(g);
    let dim = g.dim();
    let rf = &reference.state;
    let div_u = ops.div(&rf.v)?;
    let grad_u = ops.velocity_gradient(&rf.v)?;
    let lap_u = ops.vector_laplacian(&rf.v)?;
    let gdu = ops.grad_div(&rf.v)?;
    let dc = state.c.zip_map(&rf.c, |a, b| a - b)?;
    let grad_dc = ops.grad(&dc)?;

    let mut j = [0.0; 5];
    for k in 0..g.cells() {
        let rho = state.rho.values()[k];
        let r = rf.rho.values()[k];
        let drho = rho - r;
        let u = rf.v.at(k);
        let v = state.v.at(k);
        let w = [v[0] - u[0], v[1] - u[1]];
        j[0] -= law.rel_p(rho.max(0.0), r) * div_u.values()[k];
        let mut conv = 0.0;
        for a in 0..dim {
            j[1] -= grad_dc.comp(a)[k] * drho * u[a];
            for (b, gb) in grad_u.iter().enumerate() {
                conv += w[a] * w[b] * gb.comp(a)[k];
            }
            let visc = params.mu * lap_u.comp(a)[k] + (params.lam + params.mu) * gdu.comp(a)[k];
            j[4] -= drho / r * visc * w[a];
        }
        j[2] -= rho * conv;
        j[3] -= rho * (w[0] * w[0] + w[1] * w[1]) / params.zeta;
    }
    let cm = g.cell_measure();
    j.iter_mut().for_each(|x| *x *= cm);
    Ok(j)
}

/// Weights `w` with `f'(at) ≈ Σ w_i f(t_i)` for three distinct nodes.
fn lagrange_derivative_weights(t: [f64; 3], at: f64) -> [f64; 3] {
    let mut w = [0.0; 3];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        w[i] = ((at - t[j]) + (at - t[k])) / ((t[i] - t[j]) * (t[i] - t[k]));
    }
    w
}

/// Restricts every snapshot of a fine trajectory by `factor` and attaches
/// time derivatives from three-point differences (one-sided at the ends).
pub fn reference_trajectory(strong: &Trajectory, factor: usize) -> Result<Vec<Reference>> {
    strong.check()?;
    let states: Vec<State> = strong.snapshots.iter().map(|s| s.restrict(factor)).collect::<Result<_>>()?;
    let n = states.len();
    let g = *states[0].grid();
    let combine = |idx: [usize; 3], w: [f64; 3], pick: &dyn Fn(&State) -> &[f64]| -> Vec<f64> {
        let (a, b, c) = (pick(&states[idx[0]]), pick(&states[idx[1]]), pick(&states[idx[2]]));
        (0..a.len()).map(|k| w[0] * a[k] + w[1] * b[k] + w[2] * c[k]).collect()
    };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let (dr, du, dz) = if n == 1 {
            (vec![0.0; g.cells()], vec![0.0; g.dim() * g.cells()], vec![0.0; g.cells()])
        } else if n == 2 {
            let dt = states[1].t - states[0].t;
            let diff = |pick: &dyn Fn(&State) -> &[f64]| -> Vec<f64> {
                pick(&states[1]).iter().zip(pick(&states[0])).map(|(a, b)| (a - b) / dt).collect()
            };
            (diff(&|s| s.rho.values()), diff(&|s| s.v.data()), diff(&|s| s.c.values()))
        } else {
            let lo = k.saturating_sub(1).min(n - 3);
            let idx = [lo, lo + 1, lo + 2];
            let w = lagrange_derivative_weights([states[idx[0]].t, states[idx[1]].t, states[idx[2]].t], states[k].t);
            (combine(idx, w, &|s| s.rho.values()), combine(idx, w, &|s| s.v.data()), combine(idx, w, &|s| s.c.values()))
        };
        out.push(Reference::new(states[k].clone(), ScalarField::new(g, dr)?, VectorField::new(g, du)?, ScalarField::new(g, dz)?)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quadrature {
    /// Rates evaluated at the start of each interval.
    LeftEndpoint,
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelAuditRow {
    pub t: f64,
    pub dt: f64,
    /// `rel_E(t+dt) - rel_E(t) + ∫(relative dissipation)`.
    pub lhs: f64,
    /// `∫ R`.
    pub rhs: f64,
    /// `lhs - rhs`; the inequality asks for a nonpositive value.
    pub defect: f64,
    /// Mean residual size `‖f‖ + ‖g‖ + ‖h‖` over the interval.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelAuditReport {
    pub ledgers: Vec<RelEnergyLedger>,
    pub rows: Vec<RelAuditRow>,
    pub max_defect: f64,
    pub rel_e_start: f64,
}

/// Interval defects of the relative energy inequality between a computed
/// trajectory and references on the same grid at the same times.
pub fn relenergy_audit_refs(weak: &Trajectory, refs: &[Reference], params: &PhysParams, quadrature: Quadrature) -> Result<RelAuditReport> {
    weak.check()?;
    if weak.snapshots.len() != refs.len() {
        return Err(Error::Audit(format!("{} weak snapshots but {} reference states", weak.snapshots.len(), refs.len())));
    }
    let mut ledgers = Vec::with_capacity(refs.len());
    for (s, r) in weak.snapshots.iter().zip(refs) {
        if (s.t - r.state.t).abs() > 1e-12 * s.t.abs().max(1.0) {
            return Err(Error::Audit(format!("snapshot times misaligned: {} vs {}", s.t, r.state.t)));
        }
        ledgers.push(relative_ledger(s, r, params)?);
    }
    let mut rows = Vec::new();
    for w in ledgers.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        let (diss, rem) = match quadrature {
            Quadrature::LeftEndpoint => (dt * (a.rel_diss_visc + a.rel_diss_dtc), dt * a.remainder_r),
            Quadrature::Trapezoid => (
                0.5 * dt * (a.rel_diss_visc + a.rel_diss_dtc + b.rel_diss_visc + b.rel_diss_dtc),
                0.5 * dt * (a.remainder_r + b.remainder_r),
            ),
        };
        let lhs = b.rel_e - a.rel_e + diss;
        let res = |l: &RelEnergyLedger| l.residual_norms.iter().sum::<f64>();
        rows.push(RelAuditRow { t: a.t, dt, lhs, rhs: rem, defect: lhs - rem, residual: 0.5 * (res(a) + res(b)) });
    }
    let max_defect = rows.iter().map(|r| r.defect).fold(f64::NEG_INFINITY, f64::max);
    Ok(RelAuditReport { rel_e_start: ledgers[0].rel_e, ledgers, rows, max_defect })
}

/// Audits a coarse run against a fine run restricted to the coarse grid.
pub fn relenergy_audit(weak: &Trajectory, strong: &Trajectory, params: &PhysParams, quadrature: Quadrature) -> Result<RelAuditReport> {
    let (wg, sg) = (weak.grid, strong.grid);
    if sg.nx() % wg.nx() != 0 {
        return Err(Error::Audit(format!("strong grid {}x{} does not refine weak grid {}x{}", sg.nx(), sg.ny(), wg.nx(), wg.ny())));
    }
    let factor = sg.nx() / wg.nx();
    if sg.coarsen(factor)? != wg {
        return Err(Error::Audit("strong and weak grids cover different domains".into()));
    }
    let refs = reference_trajectory(strong, factor)?;
    relenergy_audit_refs(weak, &refs, params, quadrature)
}

fn roundoff(r: &RelAuditRow) -> f64 {
    1e-12 * r.lhs.abs().max(r.rhs.abs())
}

/// Positive part of the defect beyond roundoff.
fn excess(r: &RelAuditRow) -> f64 {
    if r.defect > roundoff(r) {
        r.defect
    } else {
        0.0
    }
}

/// Tolerance model `C Δt² + C' η Δt` for interval defects, with `η` the
/// residual size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefectModel {
    pub c_dt: f64,
    pub c_res: f64,
}

impl DefectModel {
    pub fn tolerance(&self, row: &RelAuditRow) -> f64 {
        self.c_dt * row.dt * row.dt + self.c_res * row.residual * row.dt
    }

    /// Smallest constants covering every positive defect of `report`: the
    /// residual term is fitted first, the `Δt²` term takes what is left.
    /// Defects within roundoff of the two sides are treated as zero.
    pub fn fit(report: &RelAuditReport) -> DefectModel {
        let c_res = report.rows.iter().filter(|r| r.residual > 0.0).map(|r| excess(r) / (r.residual * r.dt)).fold(0.0, f64::max);
        DefectModel { c_dt: 0.0, c_res }.widen(report)
    }

    /// Raises `c_dt` until every row is covered.
    pub fn widen(self, report: &RelAuditReport) -> DefectModel {
        let c_dt =
            report.rows.iter().map(|r| (excess(r) - self.c_res * r.residual * r.dt).max(0.0) / (r.dt * r.dt)).fold(self.c_dt, f64::max);
        DefectModel { c_dt, ..self }
    }

    /// Rows whose defect exceeds the modelled tolerance.
    pub fn violations(&self, report: &RelAuditReport) -> Vec<usize> {
        report.rows.iter().enumerate().filter(|(_, r)| r.defect > self.tolerance(r) + roundoff(r)).map(|(k, _)| k).collect()
    }
}

/// The relative energy audit at two snapshot cadences, `Δt` and `Δt/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CadenceAudit {
    /// Every other snapshot (interval `Δt`).
    pub coarse: RelAuditReport,
    /// All snapshots (interval `Δt/2`).
    pub fine: RelAuditReport,
    pub model_coarse: DefectModel,
    pub model_fine: DefectModel,
    /// Largest relative difference of the two models' tolerances over all rows.
    pub spread: f64,
    /// Largest `defect / ((1 + tolerance) · tolerance of the other model)`.
    pub worst_ratio: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn every_other(t: &Trajectory) -> Trajectory {
    Trajectory { snapshots: t.snapshots.iter().step_by(2).cloned().collect(), ..t.clone() }
}

/// Audits `weak` against `strong` at the stored cadence and at half of it,
/// fits a [`DefectModel`] to each, and passes when the two models agree to
/// within `tolerance` and each, widened by `1 + tolerance`, covers the
/// defects of the other cadence.
pub fn relenergy_cadence_audit(
    weak: &Trajectory,
    strong: &Trajectory,
    params: &PhysParams,
    quadrature: Quadrature,
    tolerance: f64,
) -> Result<CadenceAudit> {
    let intervals = weak.snapshots.len().saturating_sub(1);
    if intervals < 2 || !intervals.is_multiple_of(2) {
        return Err(Error::Audit(format!("cadence audit needs an even number of intervals, got {intervals}")));
    }
    let fine = relenergy_audit(weak, strong, params, quadrature)?;
    let coarse = relenergy_audit(&every_other(weak), &every_other(strong), params, quadrature)?;
    let (mc, mf) = (DefectModel::fit(&coarse), DefectModel::fit(&fine));
    let rows = coarse.rows.iter().chain(&fine.rows);
    let mut spread: f64 = 0.0;
    for r in rows.clone() {
        let (a, b) = (mc.tolerance(r), mf.tolerance(r));
        if a.max(b) > 0.0 {
            spread = spread.max((a - b).abs() / a.max(b));
        }
    }
    let mut worst: f64 = 0.0;
    for (model, report) in [(&mc, &fine), (&mf, &coarse)] {
        for r in &report.rows {
            let allowed = (1.0 + tolerance) * model.tolerance(r) + roundoff(r);
            if excess(r) > 0.0 {
                worst = worst.max(if allowed > 0.0 { r.defect / allowed } else { f64::INFINITY });
            }
        }
    }
    let pass = spread < tolerance && worst <= 1.0;
    Ok(CadenceAudit { coarse, fine, model_coarse: mc, model_fine: mf, spread, worst_ratio: worst, tolerance, pass })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakStrongLevel {
    pub n: usize,
    pub times: Vec<f64>,
    pub rel_h: Vec<f64>,
    pub sup_rel_h: f64,
    /// Fit `rel_H(t) ≈ A e^{Bt}` over the positive samples.
    pub fit_a: f64,
    pub fit_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeakStrongReport {
    pub fine_n: usize,
    pub levels: Vec<WeakStrongLevel>,
    /// `sup rel_H(n) / sup rel_H(2n)` for consecutive coarse levels.
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
    pub pass: bool,
}

fn exp_fit(ts: &[f64], ys: &[f64]) -> (f64, f64) {
    let pts: Vec<(f64, f64)> = ts.iter().zip(ys).filter(|(_, &y)| y > 0.0).map(|(&t, &y)| (t, y.ln())).collect();
    match pts.len() {
        0 => (0.0, 0.0),
        1 => (pts[0].1.exp(), 0.0),
        n => {
            let n = n as f64;
            let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
            let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
            let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
            ((my - b * mt).exp(), b)
        }
    }
}

/// Compares coarse runs against a fine run from the same initial data.
///
/// `initial` lives on the fine grid; each coarse level starts from its cell
/// average, so the relative energy vanishes at `t = 0`. Passes when the
/// supremum over time of `rel_H(coarse | restricted fine)` shrinks by at
/// least `min_factor` between consecutive coarse levels.
pub fn weak_strong_diagnostic(
    initial: &State,
    params: &PhysParams,
    settings: &SchemeSettings,
    coarse: &[usize],
    min_factor: f64,
) -> Result<WeakStrongReport> {
    let fine_traj = run(initial, params, &Forcing::none(), settings)?;
    weak_strong_against(&fine_traj, params, settings, coarse, min_factor)
}

/// As [`weak_strong_diagnostic`] with the fine trajectory already computed.
pub fn weak_strong_against(
    fine_traj: &Trajectory,
    params: &PhysParams,
    settings: &SchemeSettings,
    coarse: &[usize],
    min_factor: f64,
) -> Result<WeakStrongReport> {
    let fine = fine_traj.grid;
    if settings.snapshot_interval.is_none() {
        return Err(Error::InvalidParameter("the weak-strong diagnostic needs a snapshot interval".into()));
    }
    let mut levels = Vec::new();
    for &n in coarse {
        if n == 0 || !fine.nx().is_multiple_of(n) {
            return Err(Error::InvalidParameter(format!("coarse resolution {n} does not divide {}", fine.nx())));
        }
        let factor = fine.nx() / n;
        let start = fine_traj.snapshots[0].restrict(factor)?;
        let traj = run(&start, params, &Forcing::none(), settings)?;
        if traj.snapshots.len() != fine_traj.snapshots.len() {
            return Err(Error::Audit(format!(
                "level {n}: {} snapshots vs {} on the fine grid",
                traj.snapshots.len(),
                fine_traj.snapshots.len()
            )));
        }
        let mut times = Vec::new();
        let mut rel = Vec::new();
        for (a, b) in traj.snapshots.iter().zip(&fine_traj.snapshots) {
            if (a.t - b.t).abs() > 1e-12 {
                return Err(Error::Audit(format!("snapshot times misaligned: {} vs {}", a.t, b.t)));
            }
            times.push(a.t);
            rel.push(relative_h(a, &b.restrict(factor)?, params)?);
        }
        let sup = rel.iter().copied().fold(0.0, f64::max);
        let (fit_a, fit_b) = exp_fit(&times, &rel);
        levels.push(WeakStrongLevel { n, times, rel_h: rel, sup_rel_h: sup, fit_a, fit_b });
    }
    let ratios: Vec<f64> =
        levels.windows(2).map(|w| if w[1].sup_rel_h > 0.0 { w[0].sup_rel_h / w[1].sup_rel_h } else { f64::INFINITY }).collect();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let pass = !ratios.is_empty() && min_ratio >= min_factor;
    Ok(WeakStrongReport { fine_n: fine.nx(), levels, ratios, min_ratio, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::BcKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(g: Grid, rng: &mut ChaCha8Rng, base: f64) -> State {
        let rho = ScalarField::new(g, (0..g.cells()).map(|_| base + rng.gen_range(0.0..0.5)).collect()).unwrap();
        let v = VectorField::new(g, (0..g.dim() * g.cells()).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
        let c = ScalarField::new(g, (0..g.cells()).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        State::new(0.0, rho, v, c).unwrap()
    }

    #[test]
    fn self_relative_quantities_vanish() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Grid::new(2, 8, 8, 1.0, 1.0, BcKind::NoSlip).unwrap();
        let s = random_state(g, &mut rng, 0.5);
        let l = relative_ledger(&s, &Reference::stationary(s.clone()), &PhysParams::default()).unwrap();
        assert_eq!(l.rel_e, 0.0);
        assert_eq!(l.rel_h, 0.0);
        assert_eq!(l.coupling_rel, 0.0);
        assert!(j_term_breakdown(&s, &Reference::stationary(s.clone()), &PhysParams::default()).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_reference_residuals_vanish() {
        let g = Grid::new(2, 8, 8, 1.0, 1.0, BcKind::NoSlip).unwrap();
        let r = Reference::stationary(State::constant(g, 1.7));
        let p = PhysParams::default();
        assert!(residual_f(&r, &p).unwrap().data().iter().all(|x| x.abs() < 1e-14));
        assert!(residual_g(&r, &p).unwrap().values().iter().all(|x| x.abs() < 1e-14));
        assert!(residual_h(&r, &p).unwrap().values().iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn quadratic_in_perturbation() {
        let g = Grid::new(2, 16, 16, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let p = PhysParams { gamma: 1.7, ..Default::default() };
        let base = State::constant(g, 1.0);
        let pert = |a: f64| {
            let rho = ScalarField::from_fn(g, |x| 1.0 + a * (2.0 * std::f64::consts::PI * x[0]).sin());
            let v = VectorField::from_fn(g, |x| [a * (2.0 * std::f64::consts::PI * x[1]).cos(), 0.0]);
            let c = ScalarField::from_fn(g, |x| 1.0 + a * (2.0 * std::f64::consts::PI * x[1]).sin());
            State::new(0.0, rho, v, c).unwrap()
        };
        let e1 = relative_energies(&pert(0.02), &base, &p).unwrap().0;
        let e2 = relative_energies(&pert(0.01), &base, &p).unwrap().0;
        assert!(e1 > 0.0 && e2 > 0.0);
        assert!(((e1 / e2) - 4.0).abs() < 0.05, "{}", e1 / e2);
    }

    #[test]
    fn first_remainder_term_for_quadratic_pressure() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Grid::new(2, 8, 8, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let (s, r) = (random_state(g, &mut rng, 0.2), random_state(g, &mut rng, 0.5));
        let l = relative_ledger(&s, &Reference::stationary(r.clone()), &PhysParams::default()).unwrap();
        let div_u = StencilOps::new(g).div(&r.v).unwrap();
        let direct: f64 =
            (0..g.cells()).map(|k| -(s.rho.values()[k] - r.rho.values()[k]).powi(2) * div_u.values()[k]).sum::<f64>() * g.cell_measure();
        assert!((l.remainder_terms[0] - direct).abs() < 1e-13);
    }

    #[test]
    fn j_terms_regroup_remainder() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = PhysParams { gamma: 1.8, lam: 0.05, zeta: 0.7, ..Default::default() };
        for bc in [BcKind::PeriodicAll, BcKind::NoSlip] {
            let g = Grid::new(2, 8, 8, 1.0, 1.0, bc).unwrap();
            for _ in 0..10 {
                let (s, r) = (random_state(g, &mut rng, 0.1), random_state(g, &mut rng, 0.5));
                let reference = Reference::stationary(r);
                let j = j_term_breakdown(&s, &reference, &p).unwrap();
                let rem = remainder_without_residuals(&s, &reference, &p).unwrap();
                assert!((j.iter().sum::<f64>() - rem).abs() < 1e-12 * (1.0 + rem.abs()));
                assert!(j[3] <= 0.0);
            }
        }
    }

    fn small_run(bc: BcKind) -> Trajectory {
        let g = Grid::new(2, 16, 16, 1.0, 1.0, bc).unwrap();
        let init = crate::io::random_smooth(g, 11, 2, 0.3).unwrap();
        let settings = SchemeSettings { t_end: 0.01, snapshot_interval: Some(0.0025), ..Default::default() };
        run(&init, &PhysParams::default(), &Forcing::none(), &settings).unwrap()
    }

    #[test]
    fn identical_trajectories_have_zero_defect() {
        let t = small_run(BcKind::NoSlip);
        let a = relenergy_cadence_audit(&t, &t, &PhysParams::default(), Quadrature::Trapezoid, 0.2).unwrap();
        // The reference ∂t z comes from snapshot differences and the weak ∂t c
        // from the instantaneous rate, so both sides carry the same nonzero
        // |∂t(c - z)|² term; it cancels in the defect up to roundoff.
        for r in a.fine.rows.iter().chain(&a.coarse.rows) {
            assert!(r.defect.abs() <= 1e-14 * r.lhs.abs(), "{r:?}");
        }
        assert!(a.pass);
    }

    #[test]
    fn constant_reference_reduces_to_energy_audit() {
        use crate::energetics::{energy_audit, AuditForm};
        let p = PhysParams::default();
        let g = Grid::new(2, 16, 16, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let init = crate::io::random_smooth(g, 4, 2, 0.3).unwrap();
        let settings = SchemeSettings { t_end: 0.002, snapshot_stride: 1, ..Default::default() };
        let weak = run(&init, &p, &Forcing::none(), &settings).unwrap();
        let refs: Vec<Reference> =
            weak.snapshots.iter().map(|s| Reference::stationary(State { t: s.t, ..State::constant(g, 1.3) })).collect();
        let rel = relenergy_audit_refs(&weak, &refs, &p, Quadrature::LeftEndpoint).unwrap();
        let plain = energy_audit(&weak, &p, AuditForm::Plain).unwrap();
        assert_eq!(rel.rows.len(), plain.rows.len());
        for (a, b) in rel.rows.iter().zip(&plain.rows) {
            assert!((a.defect - b.defect).abs() < 1e-10, "{} vs {}", a.defect, b.defect);
        }
    }

    #[test]
    fn lagrange_weights_differentiate_quadratics() {
        let t = [0.0, 0.3, 0.7];
        let f = |x: f64| 2.0 - x + 3.0 * x * x;
        for at in [0.0, 0.3, 0.7] {
            let w = lagrange_derivative_weights(t, at);
            let d: f64 = (0..3).map(|i| w[i] * f(t[i])).sum();
            assert!((d - (-1.0 + 6.0 * at)).abs() < 1e-12);
        }
    }

    #[test]
    fn reference_requires_positive_density() {
        let g = Grid::new(2, 8, 8, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let mut r = State::constant(g, 1.0);
        r.rho.values_mut()[3] = 0.0;
        assert!(matches!(residual_f(&Reference::stationary(r), &PhysParams::default()), Err(Error::Domain(_))));
    }
}
