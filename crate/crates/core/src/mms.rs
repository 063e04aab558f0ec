//! Manufactured solutions: analytic trigonometric fields, the source terms
//! that make them exact solutions, and the convergence harness.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use crate::dynamics::{run, Forcing, SchemeSettings};
use crate::error::{Error, Result};
use crate::fields::{BcKind, Grid, PhysParams, ScalarField, State, VectorField};
use crate::relenergy::Jet;
use crate::thermo::PressureLaw;

/// `amp * sin(2π(kx x/lx + ky y/ly) + ω t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub amp: f64,
    pub kx: f64,
    pub ky: f64,
    pub omega: f64,
    pub phase: f64,
}

impl Mode {
    pub fn sin(amp: f64, kx: f64, ky: f64) -> Mode {
        Mode { amp, kx, ky, omega: 0.0, phase: 0.0 }
    }

    pub fn cos(amp: f64, kx: f64, ky: f64) -> Mode {
        Mode { amp, kx, ky, omega: 0.0, phase: PI / 2.0 }
    }

    pub fn moving(self, omega: f64) -> Mode {
        Mode { omega, ..self }
    }
}

/// Boundary behaviour of a random field on the unit box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    Periodic,
    /// Zero normal derivative on the walls.
    Even,
    /// Zero on the walls.
    Odd,
}

impl Symmetry {
    /// Symmetry matching a scalar (`odd == false`) or a velocity under `bc`.
    pub fn for_bc(bc: BcKind, odd: bool) -> Symmetry {
        match (bc, odd) {
            (BcKind::PeriodicAll, _) => Symmetry::Periodic,
            (BcKind::NoSlip, false) => Symmetry::Even,
            (BcKind::NoSlip, true) => Symmetry::Odd,
        }
    }
}

/// A constant plus a sum of travelling sine modes on a box of size `lx × ly`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigField {
    pub base: f64,
    pub modes: Vec<Mode>,
    pub lx: f64,
    pub ly: f64,
}

impl TrigField {
    pub fn constant(base: f64) -> TrigField {
        TrigField { base, modes: Vec::new(), lx: 1.0, ly: 1.0 }
    }

    pub fn new(base: f64, modes: Vec<Mode>) -> TrigField {
        TrigField { base, modes, lx: 1.0, ly: 1.0 }
    }

    pub fn on_box(self, lx: f64, ly: f64) -> TrigField {
        TrigField { lx, ly, ..self }
    }

    /// Random field with wavenumbers up to `max_mode` per axis whose
    /// amplitudes sum to `amplitude`, so it stays within `base ± amplitude`.
    pub fn random<R: Rng>(rng: &mut R, dim: usize, max_mode: usize, base: f64, amplitude: f64, symmetry: Symmetry) -> TrigField {
        let ky_max = if dim == 1 { 0 } else { max_mode };
        let mut modes = Vec::new();
        for ky in 0..=ky_max {
            for kx in 0..=max_mode {
                if kx == 0 && ky == 0 {
                    continue;
                }
                let a: f64 = rng.gen_range(-1.0..1.0);
                let (kx, ky) = (kx as f64, ky as f64);
                match symmetry {
                    Symmetry::Periodic => modes.push(Mode { amp: a, kx, ky, omega: 0.0, phase: rng.gen_range(0.0..2.0 * PI) }),
                    // cos(πkx x) cos(πky y) as two cosines with half wavenumbers.
                    Symmetry::Even => {
                        modes.push(Mode { amp: 0.5 * a, kx: 0.5 * kx, ky: 0.5 * ky, omega: 0.0, phase: PI / 2.0 });
                        modes.push(Mode { amp: 0.5 * a, kx: 0.5 * kx, ky: -0.5 * ky, omega: 0.0, phase: PI / 2.0 });
                    }
                    // sin(πkx x) sin(πky y), or sin(πkx x) in one dimension.
                    Symmetry::Odd if dim == 1 => modes.push(Mode::sin(a, 0.5 * kx, 0.0)),
                    Symmetry::Odd if kx > 0.0 && ky > 0.0 => {
                        modes.push(Mode { amp: 0.5 * a, kx: 0.5 * kx, ky: -0.5 * ky, omega: 0.0, phase: PI / 2.0 });
                        modes.push(Mode { amp: -0.5 * a, kx: 0.5 * kx, ky: 0.5 * ky, omega: 0.0, phase: PI / 2.0 });
                    }
                    Symmetry::Odd => {}
                }
            }
        }
        let total: f64 = modes.iter().map(|m| m.amp.abs()).sum();
        if total > 0.0 {
            modes.iter_mut().for_each(|m| m.amp *= amplitude / total);
        }
        TrigField::new(base, modes)
    }

    fn phase(&self, m: &Mode, x: [f64; 2], t: f64) -> (f64, f64, f64) {
        let wx = 2.0 * PI * m.kx / self.lx;
        let wy = 2.0 * PI * m.ky / self.ly;
        (wx * x[0] + wy * x[1] + m.omega * t + m.phase, wx, wy)
    }

    pub fn value(&self, x: [f64; 2], t: f64) -> f64 {
        self.base + self.modes.iter().map(|m| m.amp * self.phase(m, x, t).0.sin()).sum::<f64>()
    }

    pub fn dt(&self, x: [f64; 2], t: f64) -> f64 {
        self.eval(x, t).dt
    }

    pub fn grad(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        self.eval(x, t).grad
    }

    /// Second derivatives `[[∂xx, ∂xy], [∂xy, ∂yy]]`.
    pub fn hessian(&self, x: [f64; 2], t: f64) -> [[f64; 2]; 2] {
        self.eval(x, t).hessian
    }

    /// Value and all derivatives in one pass over the modes.
    pub fn eval(&self, x: [f64; 2], t: f64) -> Derivs {
        let mut d = Derivs { value: self.base, ..Derivs::default() };
        for m in &self.modes {
            let (p, wx, wy) = self.phase(m, x, t);
            let (sn, cs) = p.sin_cos();
            let (s, c) = (m.amp * sn, m.amp * cs);
            d.value += s;
            d.dt += c * m.omega;
            d.grad[0] += c * wx;
            d.grad[1] += c * wy;
            d.hessian[0][0] -= s * wx * wx;
            d.hessian[0][1] -= s * wx * wy;
            d.hessian[1][1] -= s * wy * wy;
        }
        d.hessian[1][0] = d.hessian[0][1];
        d
    }

    pub fn sample(&self, grid: Grid, t: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| self.value(x, t))
    }
}

/// A field value with its time derivative, gradient and Hessian.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Derivs {
    pub value: f64,
    pub dt: f64,
    pub grad: [f64; 2],
    pub hessian: [[f64; 2]; 2],
}

/// Analytic density, velocity and concentration.
#[derive(Debug, Clone, PartialEq)]
pub struct Manufactured {
    pub dim: usize,
    pub rho: TrigField,
    pub v: [TrigField; 2],
    pub c: TrigField,
}

impl Manufactured {
    /// `(2 + 0.1 sin 2πx, 0.1 sin 2πx e₁, 1 + 0.1 cos 2πx)`, steady.
    pub fn standard(dim: usize) -> Manufactured {
        Manufactured {
            dim,
            rho: TrigField::new(2.0, vec![Mode::sin(0.1, 1.0, 0.0)]),
            v: [TrigField::new(0.0, vec![Mode::sin(0.1, 1.0, 0.0)]), TrigField::constant(0.0)],
            c: TrigField::new(1.0, vec![Mode::cos(0.1, 1.0, 0.0)]),
        }
    }

    /// A genuinely two-dimensional, time-dependent case.
    pub fn travelling() -> Manufactured {
        Manufactured {
            dim: 2,
            rho: TrigField::new(1.5, vec![Mode::sin(0.2, 1.0, 1.0).moving(1.0), Mode::cos(0.1, 0.0, 1.0)]),
            v: [
                TrigField::new(0.0, vec![Mode::sin(0.2, 0.0, 1.0).moving(2.0)]),
                TrigField::new(0.0, vec![Mode::cos(0.15, 1.0, 0.0), Mode::sin(0.05, 1.0, 1.0).moving(-1.0)]),
            ],
            c: TrigField::new(1.0, vec![Mode::cos(0.1, 1.0, -1.0).moving(-1.0)]),
        }
    }

    pub fn on_box(self, lx: f64, ly: f64) -> Manufactured {
        let [v0, v1] = self.v;
        Manufactured { dim: self.dim, rho: self.rho.on_box(lx, ly), v: [v0.on_box(lx, ly), v1.on_box(lx, ly)], c: self.c.on_box(lx, ly) }
    }

    pub fn state(&self, grid: Grid, t: f64) -> Result<State> {
        if grid.dim() != self.dim {
            return Err(Error::InvalidGrid(format!("manufactured solution is {}-D, grid is {}-D", self.dim, grid.dim())));
        }
        let v = VectorField::from_fn(grid, |x| [self.v[0].value(x, t), self.v[1].value(x, t)]);
        State::new(t, self.rho.sample(grid, t), v, self.c.sample(grid, t))
    }

    /// Analytic jet at one point.
    pub fn jet(&self, x: [f64; 2], t: f64, law: &PressureLaw) -> Jet {
        let d = self.dim;
        let rho = self.rho.eval(x, t);
        let zero = Derivs::default();
        let v = [self.v[0].eval(x, t), if d == 2 { self.v[1].eval(x, t) } else { zero }];
        let cz = self.c.eval(x, t);
        let (r, gr) = (rho.value, rho.grad);
        let u = [v[0].value, v[1].value];
        let gu = [v[0].grad, v[1].grad];
        let hu = [v[0].hessian, v[1].hessian];
        let mut jet = Jet { r, r_t: rho.dt, u, u_t: [v[0].dt, v[1].dt], z: cz.value, z_t: cz.dt, ..Jet::default() };
        let (hz, gz) = (cz.hessian, cz.grad);
        let mut div_u = 0.0;
        for a in 0..d {
            div_u += gu[a][a];
            jet.div_ru += u[a] * gr[a];
            jet.grad_dpsi[a] = law.d2psi(r) * gr[a];
            jet.grad_z[a] = gz[a];
            jet.lap_z += hz[a][a];
            for b in 0..d {
                jet.grad_u[b][a] = gu[b][a];
                jet.lap_u[b] += hu[b][a][a];
                // ∂_b(div u) = Σ_a ∂_b ∂_a u_a.
                jet.grad_div_u[b] += hu[a][a][b];
            }
        }
        jet.div_ru += r * div_u;
        jet
    }

    /// Sources that make this triple an exact solution of the forced system:
    /// `g` for mass, `f + u g / r` per unit density for momentum, `h` for the
    /// concentration. With `convection` off the transport terms `div(ru)` and
    /// `div(ru⊗u)` are taken out so the sources match the reduced system.
    pub fn forcing(&self, params: &PhysParams, convection: bool) -> Result<Forcing> {
        let law = PressureLaw::new(params.gamma)?;
        let me = Arc::new(self.clone());
        let p = *params;
        let (m1, m2, m3) = (Arc::clone(&me), Arc::clone(&me), me);
        Ok(Forcing {
            f_mom: Some(Box::new(move |x, t| {
                let j = m1.jet(x, t, &law);
                let (f, g, _) = j.residuals(&p, m1.dim);
                let mut out = [f[0] + j.u[0] * g / j.r, f[1] + j.u[1] * g / j.r];
                if !convection {
                    for (b, o) in out.iter_mut().enumerate().take(m1.dim) {
                        let adv: f64 = (0..m1.dim).map(|a| j.u[a] * j.grad_u[b][a]).sum();
                        *o -= adv + j.u[b] * j.div_ru / j.r;
                    }
                }
                out
            })),
            g_mass: Some(Box::new(move |x, t| {
                let j = m2.jet(x, t, &law);
                let g = j.residuals(&p, m2.dim).1;
                if convection {
                    g
                } else {
                    g - j.div_ru
                }
            })),
            h_chem: Some(Box::new(move |x, t| m3.jet(x, t, &law).residuals(&p, m3.dim).2)),
        })
    }

    /// `L²` distance between a state and this solution at the state's time.
    pub fn error(&self, s: &State) -> Result<f64> {
        let exact = self.state(*s.grid(), s.t)?;
        let mut sum = 0.0;
        for (a, b) in s.rho.values().iter().zip(exact.rho.values()) {
            sum += (a - b).powi(2);
        }
        for (a, b) in s.v.data().iter().zip(exact.v.data()) {
            sum += (a - b).powi(2);
        }
        for (a, b) in s.c.values().iter().zip(exact.c.values()) {
            sum += (a - b).powi(2);
        }
        Ok((sum * s.grid().cell_measure()).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmsRow {
    pub n: usize,
    pub h: f64,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmsReport {
    pub rows: Vec<MmsRow>,
    /// `log2(e_n / e_2n)` between consecutive rows.
    pub orders: Vec<f64>,
    pub min_order: f64,
}

/// Runs the forced problem on periodic grids of each resolution and reports
/// the observed convergence order of the final-time error.
pub fn mms_convergence(case: &Manufactured, params: &PhysParams, settings: &SchemeSettings, resolutions: &[usize]) -> Result<MmsReport> {
    let forcing = case.forcing(params, settings.convection)?;
    let mut rows = Vec::new();
    for &n in resolutions {
        let grid = Grid::new(case.dim, n, n, case.rho.lx, case.rho.ly, BcKind::PeriodicAll)?;
        let traj = run(&case.state(grid, 0.0)?, params, &forcing, settings)?;
        rows.push(MmsRow { n, h: grid.hx(), error: case.error(traj.last())? });
    }
    let orders: Vec<f64> = rows.windows(2).map(|w| (w[0].error / w[1].error).ln() / (w[0].h / w[1].h).ln()).collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MmsReport { rows, orders, min_order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::rhs_with;
    use crate::relenergy::{residual_g, Reference};

    #[test]
    fn derivatives_match_finite_differences() {
        let m = Manufactured::travelling();
        let x = [0.31, 0.77];
        let t = 0.4;
        let e = 1e-5;
        for f in [&m.rho, &m.v[0], &m.v[1], &m.c] {
            let g = f.grad(x, t);
            let h = f.hessian(x, t);
            let fx = |dx: f64, dy: f64| f.value([x[0] + dx, x[1] + dy], t);
            assert!((g[0] - (fx(e, 0.0) - fx(-e, 0.0)) / (2.0 * e)).abs() < 1e-8);
            assert!((g[1] - (fx(0.0, e) - fx(0.0, -e)) / (2.0 * e)).abs() < 1e-8);
            let dxy = (fx(e, e) - fx(e, -e) - fx(-e, e) + fx(-e, -e)) / (4.0 * e * e);
            assert!((h[0][1] - dxy).abs() < 1e-4);
            let dt = (f.value(x, t + e) - f.value(x, t - e)) / (2.0 * e);
            assert!((f.dt(x, t) - dt).abs() < 1e-8);
        }
    }

    /// Hand-derived residuals of the standard case (steady, one-dimensional):
    /// with s = sin 2πx, k = 2π, r = 2 + 0.1 s, u = 0.1 s, z = 1 + 0.1 cos 2πx.
    #[test]
    fn standard_case_residuals_by_hand() {
        let p = PhysParams { gamma: 2.0, mu: 0.1, lam: 0.0, zeta: 1.0, ..Default::default() };
        let law = PressureLaw::new(2.0).unwrap();
        let m = Manufactured::standard(1);
        let k = 2.0 * PI;
        for i in 0..8 {
            let x = (i as f64 + 0.5) / 8.0;
            let (s, c) = ((k * x).sin(), (k * x).cos());
            let r = 2.0 + 0.1 * s;
            let u = 0.1 * s;
            let ux = 0.1 * k * c;
            let uxx = -0.1 * k * k * s;
            // ψ'(r) = 2r for γ = 2, so ∇ψ'(r) = 2 r_x.
            // In one dimension ∇div u = u_xx, so the viscous part is (2μ + λ) u_xx.
            let f = u * ux + 2.0 * 0.1 * k * c - 0.2 * uxx / r + 0.1 * k * s + u;
            let g = u * 0.1 * k * c + r * ux;
            let h = 0.1 * k * k * c + (1.0 + 0.1 * c) - r;
            let (fj, gj, hj) = m.jet([x, 0.0], 0.0, &law).residuals(&p, 1);
            assert!((fj[0] - f).abs() < 1e-10, "{} vs {}", fj[0], f);
            assert!((gj - g).abs() < 1e-10);
            assert!((hj - h).abs() < 1e-10);
        }
    }

    #[test]
    fn discrete_g_is_second_order() {
        // r = 1 + 0.1 sin 2πx, u = 0.1 e₁, ∂t r = 0: g = 0.01·2π cos 2πx.
        let err = |n: usize| {
            let g = Grid::new(1, n, 1, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
            let r = ScalarField::from_fn(g, |x| 1.0 + 0.1 * (2.0 * PI * x[0]).sin());
            let u = VectorField::from_fn(g, |_| [0.1, 0.0]);
            let s = State::new(0.0, r, u, ScalarField::constant(g, 1.0)).unwrap();
            let res = residual_g(&Reference::stationary(s), &PhysParams::default()).unwrap();
            res.values().iter().zip(g.centers()).map(|(v, x)| (v - 0.01 * 2.0 * PI * (2.0 * PI * x[0]).cos()).abs()).fold(0.0, f64::max)
        };
        let ratio = err(32) / err(64);
        assert!(ratio > 3.8 && ratio < 4.2, "{ratio}");
    }

    #[test]
    fn forced_rhs_matches_time_derivative() {
        // rhs - ∂t(r, ru, z) should shrink with the grid: O(h) from the upwind
        // part, O(h²) without transport.
        let p = PhysParams { gamma: 1.7, lam: 0.02, ..Default::default() };
        let m = Manufactured::travelling();
        let law = PressureLaw::new(p.gamma).unwrap();
        let err = |n: usize, conv: bool| {
            let forcing = m.forcing(&p, conv).unwrap();
            let g = Grid::new(2, n, n, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
            let t = 0.3;
            let s = m.state(g, t).unwrap();
            let r = rhs_with(&s, &p, &forcing, conv).unwrap();
            let mut sum = 0.0;
            for (k, x) in g.centers().enumerate() {
                let j = m.jet(x, t, &law);
                sum += (r.drho.values()[k] - j.r_t).powi(2) + (r.dc.values()[k] - j.z_t).powi(2);
                for a in 0..2 {
                    let dm = j.r_t * j.u[a] + j.r * j.u_t[a];
                    sum += (r.dm.comp(a)[k] - dm).powi(2);
                }
            }
            (sum * g.cell_measure()).sqrt()
        };
        let o2 = (err(32, false) / err(64, false)).log2();
        assert!(o2 > 1.9, "{o2}");
        let o1 = (err(32, true) / err(64, true)).log2();
        assert!(o1 > 0.9, "{o1}");
    }

    #[test]
    fn random_neumann_field_has_flat_walls() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let f = TrigField::random(&mut rng, 2, 3, 1.0, 0.5, Symmetry::Even);
        for y in [0.1, 0.5, 0.9] {
            assert!(f.grad([0.0, y], 0.0)[0].abs() < 1e-12);
            assert!(f.grad([1.0, y], 0.0)[0].abs() < 1e-12);
            assert!(f.grad([y, 0.0], 0.0)[1].abs() < 1e-12);
        }
        let grid = Grid::new(2, 32, 32, 1.0, 1.0, BcKind::NoSlip).unwrap();
        let s = f.sample(grid, 0.0);
        assert!(s.min() >= 0.5 - 1e-12 && s.max() <= 1.5 + 1e-12);
    }

    #[test]
    fn random_odd_field_vanishes_on_walls() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for dim in [1, 2] {
            let f = TrigField::random(&mut rng, dim, 3, 0.0, 0.5, Symmetry::Odd);
            assert!(!f.modes.is_empty());
            for y in [0.1, 0.5, 0.9] {
                let y = if dim == 1 { 0.0 } else { y };
                assert!(f.value([0.0, y], 0.0).abs() < 1e-12);
                assert!(f.value([1.0, y], 0.0).abs() < 1e-12);
                if dim == 2 {
                    assert!(f.value([y, 0.0], 0.0).abs() < 1e-12);
                    assert!(f.value([y, 1.0], 0.0).abs() < 1e-12);
                }
            }
        }
    }
}
