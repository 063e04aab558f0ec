//! Initial states described by [`InitialCondition`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::InitialCondition;
use super::snapshot::read_snapshot;
use crate::error::{Error, Result};
use crate::fields::{Grid, ScalarField, State, VectorField};
use crate::mms::{Symmetry, TrigField};

pub fn gaussian_blob(grid: Grid, center: [f64; 2], width: f64, amplitude: f64, background: f64) -> Result<State> {
    let dim = grid.dim();
    let rho = ScalarField::from_fn(grid, |x| {
        let mut r2 = (x[0] - center[0]).powi(2);
        if dim == 2 {
            r2 += (x[1] - center[1]).powi(2);
        }
        background + amplitude * (-r2 / (2.0 * width * width)).exp()
    });
    State::new(0.0, rho, VectorField::zeros(grid), ScalarField::zeros(grid))
}

/// Random smooth fields with modes up to `modes` per axis. Density and
/// concentration are `1 ± amplitude`, velocity `0 ± amplitude`, each with
/// the symmetry the boundary condition asks for.
pub fn random_smooth(grid: Grid, seed: u64, modes: usize, amplitude: f64) -> Result<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (dim, bc) = (grid.dim(), grid.bc());
    let mut field = |base: f64, odd: bool| {
        TrigField::random(&mut rng, dim, modes, base, amplitude, Symmetry::for_bc(bc, odd)).on_box(grid.lx(), grid.ly())
    };
    let rho = field(1.0, false);
    let v: Vec<TrigField> = (0..dim).map(|_| field(0.0, true)).collect();
    let c = field(1.0, false);
    let vel = VectorField::from_fn(grid, |x| {
        let mut out = [0.0; 2];
        for (o, f) in out.iter_mut().zip(&v) {
            *o = f.value(x, 0.0);
        }
        out
    });
    State::new(0.0, rho.sample(grid, 0.0), vel, c.sample(grid, 0.0))
}

/// Builds the initial state on `grid`. A snapshot must live on the same grid.
pub fn build_initial(ic: &InitialCondition, grid: Grid) -> Result<State> {
    match ic {
        InitialCondition::Constant { rho_bar } => {
            let s = State::constant(grid, *rho_bar);
            s.check()?;
            Ok(s)
        }
        InitialCondition::GaussianBlob { center, width, amplitude, background } => {
            gaussian_blob(grid, *center, *width, *amplitude, *background)
        }
        InitialCondition::RandomSmooth { seed, modes, amplitude } => random_smooth(grid, *seed, *modes, *amplitude),
        InitialCondition::FromSnapshot { path } => {
            let s = read_snapshot(path)?;
            if *s.grid() != grid {
                return Err(Error::InvalidGrid(format!(
                    "snapshot {} is on a {}x{} grid, the configuration asks for {}x{}",
                    path.display(),
                    s.grid().nx(),
                    s.grid().ny(),
                    grid.nx(),
                    grid.ny()
                )));
            }
            s.check()?;
            Ok(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::BcKind;
    use crate::io::snapshot::write_snapshot;

    #[test]
    fn blob_peaks_at_center() {
        let g = Grid::new(2, 32, 32, 1.0, 1.0, BcKind::PeriodicAll).unwrap();
        let s = gaussian_blob(g, [0.5, 0.5], 0.1, 1.0, 0.5).unwrap();
        let k = s.rho.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let x = g.center(k % 32, k / 32);
        assert!((x[0] - 0.5).abs() <= g.hx() && (x[1] - 0.5).abs() <= g.hy());
        assert!(s.rho.min() > 0.5 && s.rho.max() <= 1.5);
        assert_eq!(s.c.max(), 0.0);
    }

    #[test]
    fn random_smooth_is_seeded_and_bounded() {
        let g = Grid::new(2, 16, 16, 1.0, 1.0, BcKind::NoSlip).unwrap();
        let a = random_smooth(g, 3, 3, 0.3).unwrap();
        let b = random_smooth(g, 3, 3, 0.3).unwrap();
        let c = random_smooth(g, 4, 3, 0.3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.rho, c.rho);
        assert!(a.rho.min() >= 0.7 - 1e-12 && a.rho.max() <= 1.3 + 1e-12);
        assert!(a.v.data().iter().all(|x| x.abs() <= 0.3 + 1e-12));
    }

    #[test]
    fn snapshot_initial_condition() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("init.vnsf");
        let g = Grid::new(2, 8, 8, 1.0, 1.0, BcKind::NoSlip).unwrap();
        let s = random_smooth(g, 1, 2, 0.2).unwrap();
        write_snapshot(&s, &path).unwrap();
        let back = build_initial(&InitialCondition::FromSnapshot { path: path.clone() }, g).unwrap();
        assert_eq!(back, s);
        let other = Grid::new(2, 16, 16, 1.0, 1.0, BcKind::NoSlip).unwrap();
        assert!(build_initial(&InitialCondition::FromSnapshot { path }, other).is_err());
    }
}
