//! Collocated finite-difference operators.
//!
//! First derivatives are centred differences `(f[i+1] - f[i-1]) / 2h`; the
//! Laplacian is `div ∘ grad`, so every discrete integration by parts used by
//! the energy ledgers holds exactly. Under [`BcKind::NoSlip`] ghost cells are
//! filled by reflection with a parity: scalars (density, concentration,
//! divergence) are mirrored evenly, velocities and gradients of scalars oddly.
//! Pairing an even field with an odd one makes `⟨grad s, u⟩ = -⟨s, div u⟩`
//! exact on bounded boxes as well as on the torus.
//!
//! Convection uses a local Lax–Friedrichs (Rusanov) flux with wave speed
//! `max(|v_L|, |v_R|)`. The central part of the momentum flux is the product
//! of face averages `avg(m_n) * avg(v)`, which makes the semi-discrete kinetic
//! energy balance exact (the upwind part only dissipates).

use crate::error::Result;
use crate::fields::{same_grid, BcKind, Grid, ScalarField, VectorField};

/// Reflection parity of a field across a wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    #[inline]
    fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

/// A copy of a field with one ghost layer around it, row-major with row
/// width `nx + 2`. Corner ghosts are never read and stay zero.
struct Padded {
    data: Vec<f64>,
    w: usize,
}

impl Padded {
    /// Padded row `jp` (ghost rows are `0` and `ny + 1`).
    #[inline]
    fn row(&self, jp: usize) -> &[f64] {
        &self.data[jp * self.w..(jp + 1) * self.w]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StencilOps {
    grid: Grid,
}

impl StencilOps {
    pub fn new(grid: Grid) -> Self {
        StencilOps { grid }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn periodic(&self) -> bool {
        self.grid.bc() == BcKind::PeriodicAll
    }

    fn h(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.grid.hx()
        } else {
            self.grid.hy()
        }
    }

    fn pad(&self, f: &[f64], parity: Parity) -> Padded {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let w = nx + 2;
        let mut data = vec![0.0; w * (ny + 2)];
        let periodic = self.periodic();
        let sign = parity.sign();
        for j in 0..ny {
            let src = &f[j * nx..(j + 1) * nx];
            let dst = &mut data[(j + 1) * w..(j + 2) * w];
            dst[1..=nx].copy_from_slice(src);
            if periodic {
                dst[0] = src[nx - 1];
                dst[nx + 1] = src[0];
            } else {
                dst[0] = sign * src[0];
                dst[nx + 1] = sign * src[nx - 1];
            }
        }
        if self.grid.dim() == 2 {
            let (below, above) = if periodic { (ny - 1, 0) } else { (0, ny - 1) };
            let s = if periodic { 1.0 } else { sign };
            for i in 0..nx {
                data[1 + i] = s * f[below * nx + i];
                data[(ny + 1) * w + 1 + i] = s * f[above * nx + i];
            }
        }
        Padded { data, w }
    }

    /// `out += scale * D0_axis f` for an already padded field.
    fn d0_padded(&self, p: &Padded, axis: usize, scale: f64, out: &mut [f64]) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let inv = scale / (2.0 * self.h(axis));
        for j in 0..ny {
            let o = &mut out[j * nx..(j + 1) * nx];
            let (lo, hi) = if axis == 0 {
                let r = p.row(j + 1);
                (&r[..nx], &r[2..])
            } else {
                (&p.row(j)[1..=nx], &p.row(j + 2)[1..=nx])
            };
            for ((o, &a), &b) in o.iter_mut().zip(lo).zip(hi) {
                *o += (b - a) * inv;
            }
        }
    }

    /// `out[a] += D0_a f` for every axis, `out` holding `dim` component planes.
    fn grad_into(&self, f: &[f64], parity: Parity, out: &mut [f64]) {
        let n = self.grid.cells();
        let p = self.pad(f, parity);
        for a in 0..self.grid.dim() {
            self.d0_padded(&p, a, 1.0, &mut out[a * n..(a + 1) * n]);
        }
    }

    /// `out += Σ_a D0_a u_a` for component planes `u`.
    fn div_into(&self, u: &[f64], parity: Parity, out: &mut [f64]) {
        let n = self.grid.cells();
        for a in 0..self.grid.dim() {
            let p = self.pad(&u[a * n..(a + 1) * n], parity);
            self.d0_padded(&p, a, 1.0, out);
        }
    }

    /// Adds the difference of face fluxes along `axis` to `out`. `flux` is
    /// called with the padded left and right neighbour slices of one face row
    /// and fills the fluxes of that row.
    fn flux_difference<F>(&self, axis: usize, mut flux: F, out: &mut [f64])
    where
        F: FnMut(usize, usize, usize, &mut [f64]),
    {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        let inv_h = 1.0 / self.h(axis);
        if axis == 0 {
            // Faces 0..=nx of padded row j+1: left cell k, right cell k+1.
            let mut fl = vec![0.0; nx + 1];
            for j in 0..ny {
                let base = (j + 1) * (nx + 2);
                flux(base, base + 1, nx + 1, &mut fl);
                let o = &mut out[j * nx..(j + 1) * nx];
                for (k, o) in o.iter_mut().enumerate() {
                    *o += (fl[k + 1] - fl[k]) * inv_h;
                }
            }
        } else {
            // Face rows 0..=ny: below is padded row k, above padded row k+1.
            let w = nx + 2;
            let mut prev = vec![0.0; nx];
            let mut next = vec![0.0; nx];
            flux(1, w + 1, nx, &mut prev);
            for j in 0..ny {
                flux((j + 1) * w + 1, (j + 2) * w + 1, nx, &mut next);
                let o = &mut out[j * nx..(j + 1) * nx];
                for ((o, &a), &b) in o.iter_mut().zip(&prev).zip(&next) {
                    *o += (b - a) * inv_h;
                }
                std::mem::swap(&mut prev, &mut next);
            }
        }
    }

    fn check(&self, g: &Grid) -> Result<()> {
        same_grid(&self.grid, g)
    }

    /// Centred gradient of a scalar with ghost parity `parity`.
    pub fn grad_with(&self, s: &ScalarField, parity: Parity) -> Result<VectorField> {
        self.check(s.grid())?;
        let mut data = vec![0.0; self.grid.dim() * self.grid.cells()];
        self.grad_into(s.values(), parity, &mut data);
        VectorField::new(self.grid, data)
    }

    /// Gradient of a scalar field (Neumann mirror at walls).
    pub fn grad(&self, s: &ScalarField) -> Result<VectorField> {
        self.grad_with(s, Parity::Even)
    }

    /// Centred divergence with ghost parity `parity` on every component.
    pub fn div_with(&self, u: &VectorField, parity: Parity) -> Result<ScalarField> {
        self.check(u.grid())?;
        let mut out = vec![0.0; self.grid.cells()];
        self.div_into(u.data(), parity, &mut out);
        ScalarField::new(self.grid, out)
    }

    /// Divergence of a velocity-like field (odd reflection at walls).
    pub fn div(&self, u: &VectorField) -> Result<ScalarField> {
        self.div_with(u, Parity::Odd)
    }

    pub fn laplacian(&self, s: &ScalarField) -> Result<ScalarField> {
        self.check(s.grid())?;
        let n = self.grid.cells();
        let mut g = vec![0.0; self.grid.dim() * n];
        self.grad_into(s.values(), Parity::Even, &mut g);
        let mut out = vec![0.0; n];
        self.div_into(&g, Parity::Odd, &mut out);
        ScalarField::new(self.grid, out)
    }

    /// Componentwise `div ∘ grad` of a no-slip velocity.
    pub fn vector_laplacian(&self, u: &VectorField) -> Result<VectorField> {
        self.check(u.grid())?;
        let n = self.grid.cells();
        let dim = self.grid.dim();
        let mut data = vec![0.0; dim * n];
        let mut g = vec![0.0; dim * n];
        for b in 0..dim {
            g.iter_mut().for_each(|x| *x = 0.0);
            self.grad_into(u.comp(b), Parity::Odd, &mut g);
            self.div_into(&g, Parity::Even, &mut data[b * n..(b + 1) * n]);
        }
        VectorField::new(self.grid, data)
    }

    pub fn grad_div(&self, u: &VectorField) -> Result<VectorField> {
        self.grad_with(&self.div(u)?, Parity::Even)
    }

    /// Velocity gradient `G[b][a] = ∂_a u_b`, returned as one vector field per component.
    pub fn velocity_gradient(&self, u: &VectorField) -> Result<Vec<VectorField>> {
        self.check(u.grid())?;
        let dim = self.grid.dim();
        (0..dim)
            .map(|b| {
                let mut data = vec![0.0; dim * self.grid.cells()];
                self.grad_into(u.comp(b), Parity::Odd, &mut data);
                VectorField::new(self.grid, data)
            })
            .collect()
    }

    /// `(w·∇)u` with centred differences of the velocity `u`.
    pub fn advective_derivative(&self, w: &VectorField, u: &VectorField) -> Result<VectorField> {
        self.check(w.grid())?;
        let gu = self.velocity_gradient(u)?;
        let n = self.grid.cells();
        let mut data = vec![0.0; self.grid.dim() * n];
        for (b, gb) in gu.iter().enumerate() {
            let out = &mut data[b * n..(b + 1) * n];
            for a in 0..self.grid.dim() {
                for ((o, &wa), &g) in out.iter_mut().zip(w.comp(a)).zip(gb.comp(a)) {
                    *o += wa * g;
                }
            }
        }
        VectorField::new(self.grid, data)
    }

    /// Conservative Rusanov discretization of `div(s v)`.
    pub fn convect_scalar(&self, v: &VectorField, s: &ScalarField) -> Result<ScalarField> {
        self.check(v.grid())?;
        self.check(s.grid())?;
        let mut out = vec![0.0; self.grid.cells()];
        let ps = self.pad(s.values(), Parity::Even);
        for a in 0..self.grid.dim() {
            let pv = self.pad(v.comp(a), Parity::Odd);
            let (vd, sd) = (&pv.data, &ps.data);
            self.flux_difference(
                a,
                |l, r, len, fl| {
                    let (vl, vr, sl, sr) = (&vd[l..l + len], &vd[r..r + len], &sd[l..l + len], &sd[r..r + len]);
                    let fl = &mut fl[..len];
                    for k in 0..len {
                        let alpha = vl[k].abs().max(vr[k].abs());
                        fl[k] = 0.5 * (sl[k] * vl[k] + sr[k] * vr[k]) - 0.5 * alpha * (sr[k] - sl[k]);
                    }
                },
                &mut out,
            );
        }
        ScalarField::new(self.grid, out)
    }

    /// Conservative discretization of `div(m ⊗ v)` with `m = ρv`.
    pub fn convect_momentum(&self, v: &VectorField, m: &VectorField) -> Result<VectorField> {
        self.check(v.grid())?;
        self.check(m.grid())?;
        let n = self.grid.cells();
        let dim = self.grid.dim();
        let mut data = vec![0.0; dim * n];
        let pv: Vec<Padded> = (0..dim).map(|b| self.pad(v.comp(b), Parity::Odd)).collect();
        let pm: Vec<Padded> = (0..dim).map(|b| self.pad(m.comp(b), Parity::Odd)).collect();
        for a in 0..dim {
            let (vn, mn) = (&pv[a].data, &pm[a].data);
            for b in 0..dim {
                let (vb, mb) = (&pv[b].data, &pm[b].data);
                self.flux_difference(
                    a,
                    |l, r, len, fl| {
                        let (vnl, vnr, mnl, mnr) = (&vn[l..l + len], &vn[r..r + len], &mn[l..l + len], &mn[r..r + len]);
                        let (vbl, vbr, mbl, mbr) = (&vb[l..l + len], &vb[r..r + len], &mb[l..l + len], &mb[r..r + len]);
                        let fl = &mut fl[..len];
                        for k in 0..len {
                            let alpha = vnl[k].abs().max(vnr[k].abs());
                            let mass_flux = 0.5 * (mnl[k] + mnr[k]);
                            let central = mass_flux * 0.5 * (vbl[k] + vbr[k]);
                            fl[k] = central - 0.5 * alpha * (mbr[k] - mbl[k]);
                        }
                    },
                    &mut data[b * n..(b + 1) * n],
                );
            }
        }
        VectorField::new(self.grid, data)
    }

    /// Discrete `L²` inner product of two vector fields.
    pub fn inner(&self, a: &VectorField, b: &VectorField) -> Result<f64> {
        self.check(a.grid())?;
        self.check(b.grid())?;
        let mut s = 0.0;
        for (x, y) in a.data().iter().zip(b.data()) {
            s += x * y;
        }
        Ok(s * self.grid.cell_measure())
    }

    pub fn inner_scalar(&self, a: &ScalarField, b: &ScalarField) -> Result<f64> {
        self.check(a.grid())?;
        self.check(b.grid())?;
        let mut s = 0.0;
        for (x, y) in a.values().iter().zip(b.values()) {
            s += x * y;
        }
        Ok(s * self.grid.cell_measure())
    }
}

impl From<Grid> for StencilOps {
    fn from(g: Grid) -> Self {
        StencilOps::new(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn grid2(n: usize, bc: BcKind) -> Grid {
        Grid::new(2, n, n, 1.0, 1.0, bc).unwrap()
    }

    fn random_scalar(g: Grid, rng: &mut ChaCha8Rng) -> ScalarField {
        ScalarField::new(g, (0..g.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_vector(g: Grid, rng: &mut ChaCha8Rng) -> VectorField {
        VectorField::new(g, (0..g.dim() * g.cells()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn grad_of_constant_vanishes() {
        for bc in [BcKind::PeriodicAll, BcKind::NoSlip] {
            let ops = StencilOps::new(grid2(8, bc));
            let g = ops.grad(&ScalarField::constant(*ops.grid(), 2.5)).unwrap();
            assert!(g.data().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn polynomial_exactness_interior() {
        let g = grid2(10, BcKind::NoSlip);
        let ops = StencilOps::new(g);
        let lin = ScalarField::from_fn(g, |p| 3.0 * p[0] - 2.0 * p[1] + 1.0);
        let gl = ops.grad(&lin).unwrap();
        let quad = ScalarField::from_fn(g, |p| p[0] * p[0]);
        let lq = ops.laplacian(&quad).unwrap();
        // The Laplacian stencil reaches two cells out.
        for j in 2..8 {
            for i in 2..8 {
                let k = g.idx(i, j);
                assert!((gl.comp(0)[k] - 3.0).abs() < 1e-12);
                assert!((gl.comp(1)[k] + 2.0).abs() < 1e-12);
                assert!((lq.values()[k] - 2.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn div_grad_is_laplacian() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for bc in [BcKind::PeriodicAll, BcKind::NoSlip] {
            let g = grid2(12, bc);
            let ops = StencilOps::new(g);
            let s = random_scalar(g, &mut rng);
            let a = ops.div(&ops.grad(&s).unwrap()).unwrap();
            let b = ops.laplacian(&s).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-12 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn summation_by_parts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for bc in [BcKind::PeriodicAll, BcKind::NoSlip] {
            for g in [grid2(9, bc), Grid::new(1, 13, 1, 2.0, 1.0, bc).unwrap()] {
                let ops = StencilOps::new(g);
                for _ in 0..10 {
                    let s = random_scalar(g, &mut rng);
                    let u = random_vector(g, &mut rng);
                    let lhs = ops.inner(&ops.grad(&s).unwrap(), &u).unwrap();
                    let rhs = -ops.inner_scalar(&s, &ops.div(&u).unwrap()).unwrap();
                    assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()), "{bc:?}: {lhs} vs {rhs}");

                    // Viscous operators are negative semidefinite with exact energy identities.
                    let vl = ops.vector_laplacian(&u).unwrap();
                    let gu = ops.velocity_gradient(&u).unwrap();
                    let gsq: f64 = gu.iter().map(|x| ops.inner(x, x).unwrap()).sum();
                    assert!((ops.inner(&u, &vl).unwrap() + gsq).abs() < 1e-10 * (1.0 + gsq));
                    let gd = ops.grad_div(&u).unwrap();
                    let d = ops.div(&u).unwrap();
                    let dsq = ops.inner_scalar(&d, &d).unwrap();
                    assert!((ops.inner(&u, &gd).unwrap() + dsq).abs() < 1e-10 * (1.0 + dsq));
                }
            }
        }
    }

    #[test]
    fn convection_zero_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = grid2(8, BcKind::NoSlip);
        let ops = StencilOps::new(g);
        let s = random_scalar(g, &mut rng);
        let m = random_vector(g, &mut rng);
        let z = VectorField::zeros(g);
        assert!(ops.convect_scalar(&z, &s).unwrap().values().iter().all(|&x| x == 0.0));
        // With v = 0 only the upwind part could act, and its speed is zero.
        assert!(ops.convect_momentum(&z, &m).unwrap().data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn convection_is_conservative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Periodic: any velocity. Walls: flux vanishes because v reflects oddly.
        for bc in [BcKind::PeriodicAll, BcKind::NoSlip] {
            let g = grid2(10, bc);
            let ops = StencilOps::new(g);
            for _ in 0..5 {
                let v = random_vector(g, &mut rng);
                let s = random_scalar(g, &mut rng).map(|x| x + 2.0);
                let total: f64 = ops.convect_scalar(&v, &s).unwrap().values().iter().sum();
                assert!(total.abs() < 1e-12, "{bc:?}: {total}");
            }
        }
    }

    #[test]
    fn constant_scalar_divergence_free_velocity() {
        // Discretely divergence-free periodic field from a stream function.
        let g = grid2(16, BcKind::PeriodicAll);
        let ops = StencilOps::new(g);
        let v = VectorField::from_fn(g, |p| [(2.0 * PI * p[1]).sin(), (2.0 * PI * p[0]).cos()]);
        let out = ops.convect_scalar(&v, &ScalarField::constant(g, 1.7)).unwrap();
        let total: f64 = out.values().iter().sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn convect_momentum_constant_state() {
        let g = grid2(8, BcKind::PeriodicAll);
        let ops = StencilOps::new(g);
        let v = VectorField::from_fn(g, |_| [0.3, -1.2]);
        let rho = ScalarField::constant(g, 1.9);
        let m = v.scale_by(&rho).unwrap();
        let out = ops.convect_momentum(&v, &m).unwrap();
        assert!(out.data().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn convect_scalar_first_order_convergence() {
        let err = |n: usize| {
            let g = Grid::new(1, n, 1, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
            let ops = StencilOps::new(g);
            let v = VectorField::from_fn(g, |_| [1.0, 0.0]);
            let s = ScalarField::from_fn(g, |p| (2.0 * PI * p[0]).sin());
            let out = ops.convect_scalar(&v, &s).unwrap();
            let e: f64 = out.values().iter().zip(g.centers()).map(|(&o, p)| (o - 2.0 * PI * (2.0 * PI * p[0]).cos()).powi(2)).sum::<f64>();
            (e * g.hx()).sqrt()
        };
        let orders: Vec<f64> = [32, 64, 128].windows(2).map(|w| (err(w[0]) / err(w[1])).log2()).collect();
        assert!(orders.iter().all(|&p| p >= 1.0 - 0.05), "{orders:?}");
    }

    /// Independent flux-by-flux evaluation on an 8-cell periodic line.
    #[test]
    fn convect_momentum_matches_hand_flux_sum() {
        let n = 8;
        let h = 1.0 / n as f64;
        let g = Grid::new(1, n, 1, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let ops = StencilOps::new(g);
        let rho: Vec<f64> = (0..n).map(|i| 1.0 + 0.25 * ((i * 3) % 5) as f64).collect();
        let vel: Vec<f64> = (0..n).map(|i| 0.5 - 0.125 * ((i * 5) % 7) as f64).collect();
        let mom: Vec<f64> = rho.iter().zip(&vel).map(|(r, v)| r * v).collect();

        // Face f sits between cells f-1 and f (mod n).
        let face = |f: usize| {
            let (l, r) = ((f + n - 1) % n, f % n);
            let alpha = vel[l].abs().max(vel[r].abs());
            let fr = 0.5 * (mom[l] + mom[r]) * 0.5 * (vel[l] + vel[r]) - 0.5 * alpha * (mom[r] - mom[l]);
            let fs = 0.5 * (rho[l] * vel[l] + rho[r] * vel[r]) - 0.5 * alpha * (rho[r] - rho[l]);
            (fr, fs)
        };
        let v = VectorField::new(g, vel.clone()).unwrap();
        let m = VectorField::new(g, mom.clone()).unwrap();
        let s = ScalarField::new(g, rho.clone()).unwrap();
        let cm = ops.convect_momentum(&v, &m).unwrap();
        let cs = ops.convect_scalar(&v, &s).unwrap();
        for i in 0..n {
            let (m_r, s_r) = face(i + 1);
            let (m_l, s_l) = face(i);
            assert!((cm.comp(0)[i] - (m_r - m_l) / h).abs() < 1e-12);
            assert!((cs.values()[i] - (s_r - s_l) / h).abs() < 1e-12);
        }
    }

    #[test]
    fn kinetic_energy_exchange_is_dissipative() {
        // -⟨v, C(v, m)⟩ + ½⟨|v|², C(v, ρ)⟩ = -Σ α/(2h) ρ̄|δv|² ≤ 0 on any data.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for bc in [BcKind::PeriodicAll, BcKind::NoSlip] {
            let g = grid2(8, bc);
            let ops = StencilOps::new(g);
            for _ in 0..10 {
                let rho = random_scalar(g, &mut rng).map(|x| 1.5 + x);
                let v = random_vector(g, &mut rng);
                let m = v.scale_by(&rho).unwrap();
                let cm = ops.convect_momentum(&v, &m).unwrap();
                let cs = ops.convect_scalar(&v, &rho).unwrap();
                let ke = -ops.inner(&v, &cm).unwrap() + 0.5 * ops.inner_scalar(&v.norm_sq(), &cs).unwrap();
                assert!(ke <= 1e-12, "{bc:?}: {ke}");
            }
        }
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let ops = StencilOps::new(grid2(8, BcKind::PeriodicAll));
        let other = ScalarField::zeros(grid2(16, BcKind::PeriodicAll));
        assert!(matches!(ops.grad(&other), Err(Error::GridMismatch)));
    }
}
