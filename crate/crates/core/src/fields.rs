//! Grid geometry, cell-centred fields and the simulation state.
//!
//! Fields are stored row-major (`j * nx + i`); vector fields store their
//! components as consecutive planes. All integrals use the midpoint rule with
//! a fixed sequential summation order so that diagnostics are bit-reproducible.

use crate::dynamics::SchemeSettings;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcKind {
    /// Periodic in every direction.
    PeriodicAll,
    /// No-slip velocity, homogeneous Neumann for density and concentration.
    NoSlip,
}

impl BcKind {
    pub fn token(self) -> &'static str {
        match self {
            BcKind::PeriodicAll => "periodic",
            BcKind::NoSlip => "noslip",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        match s {
            "periodic" => Some(BcKind::PeriodicAll),
            "noslip" => Some(BcKind::NoSlip),
            _ => None,
        }
    }
}

/// Uniform box grid in one or two dimensions.
///
/// For `dim == 1` the grid has `ny == 1` and `hy == 1`, so `hx * hy` is the
/// cell measure in both cases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
    bc: BcKind,
}

impl Grid {
    /// Builds a grid from cell counts and extents. `ny` and `ly` are ignored
    /// in one dimension.
    pub fn new(dim: usize, nx: usize, ny: usize, lx: f64, ly: f64, bc: BcKind) -> Result<Grid> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if nx < 4 {
            return Err(Error::InvalidGrid(format!("nx must be >= 4, got {nx}")));
        }
        if !(lx.is_finite() && lx > 0.0) {
            return Err(Error::InvalidGrid(format!("lx must be positive, got {lx}")));
        }
        if dim == 1 {
            return Ok(Grid { dim, nx, ny: 1, hx: lx / nx as f64, hy: 1.0, bc });
        }
        if ny < 4 {
            return Err(Error::InvalidGrid(format!("ny must be >= 4, got {ny}")));
        }
        if !(ly.is_finite() && ly > 0.0) {
            return Err(Error::InvalidGrid(format!("ly must be positive, got {ly}")));
        }
        Ok(Grid { dim, nx, ny, hx: lx / nx as f64, hy: ly / ny as f64, bc })
    }

    /// Builds a grid directly from cell widths (used when decoding snapshots).
    pub fn from_spacing(dim: usize, nx: usize, ny: usize, hx: f64, hy: f64, bc: BcKind) -> Result<Grid> {
        if dim == 1 && (ny != 1 || hy != 1.0) {
            return Err(Error::InvalidGrid("1-D grid requires ny = 1 and hy = 1".into()));
        }
        if !(hx.is_finite() && hx > 0.0 && hy.is_finite() && hy > 0.0) {
            return Err(Error::InvalidGrid(format!("cell widths must be positive, got {hx}, {hy}")));
        }
        let g = Grid::new(dim, nx, ny, nx as f64 * hx, ny as f64 * hy, bc)?;
        Ok(Grid { hx, hy, ..g })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn lx(&self) -> f64 {
        self.nx as f64 * self.hx
    }
    pub fn ly(&self) -> f64 {
        self.ny as f64 * self.hy
    }
    pub fn bc(&self) -> BcKind {
        self.bc
    }
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }
    pub fn cell_measure(&self) -> f64 {
        self.hx * self.hy
    }
    pub fn measure(&self) -> f64 {
        self.lx() * self.ly()
    }
    /// Smallest cell width over the active axes.
    pub fn h_min(&self) -> f64 {
        if self.dim == 1 {
            self.hx
        } else {
            self.hx.min(self.hy)
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        let y = if self.dim == 1 { 0.0 } else { (j as f64 + 0.5) * self.hy };
        [(i as f64 + 0.5) * self.hx, y]
    }

    /// Cell centres in storage order.
    pub fn centers(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.ny).flat_map(move |j| (0..self.nx).map(move |i| self.center(i, j)))
    }

    /// Same shape and boundary kind with `factor` times fewer cells per axis.
    pub fn coarsen(&self, factor: usize) -> Result<Grid> {
        if factor == 0 || !self.nx.is_multiple_of(factor) || (self.dim == 2 && !self.ny.is_multiple_of(factor)) {
            return Err(Error::InvalidGrid(format!("cannot coarsen {}x{} by {factor}", self.nx, self.ny)));
        }
        if self.dim == 1 {
            Grid::new(1, self.nx / factor, 1, self.lx(), 1.0, self.bc)
        } else {
            Grid::new(2, self.nx / factor, self.ny / factor, self.lx(), self.ly(), self.bc)
        }
    }

    /// Same geometry with the cell count per axis replaced by `n`.
    pub fn with_resolution(&self, n: usize) -> Result<Grid> {
        Grid::new(self.dim, n, n, self.lx(), self.ly(), self.bc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::InvalidState(format!("scalar field has {} values, grid has {} cells", values.len(), grid.cells())));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        ScalarField { grid, values: vec![0.0; grid.cells()] }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        ScalarField { grid, values: vec![value; grid.cells()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        ScalarField { grid, values: grid.centers().map(f).collect() }
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.cells());
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&x| f(x)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<ScalarField> {
        same_grid(&self.grid, &other.grid)?;
        Ok(ScalarField { grid: self.grid, values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect() })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.values.iter().position(|x| !x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    data: Vec<f64>,
}

impl VectorField {
    /// `data` holds `dim` consecutive component planes.
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.dim() * grid.cells() {
            return Err(Error::InvalidState(format!("vector field has {} values, expected {}", data.len(), grid.dim() * grid.cells())));
        }
        Ok(VectorField { grid, data })
    }

    pub fn zeros(grid: Grid) -> Self {
        VectorField { grid, data: vec![0.0; grid.dim() * grid.cells()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let n = grid.cells();
        let mut data = vec![0.0; grid.dim() * n];
        for (k, x) in grid.centers().enumerate() {
            let v = f(x);
            for (a, va) in v.iter().enumerate().take(grid.dim()) {
                data[a * n + k] = *va;
            }
        }
        VectorField { grid, data }
    }

    pub fn from_components(grid: Grid, comps: Vec<Vec<f64>>) -> Result<Self> {
        if comps.len() != grid.dim() || comps.iter().any(|c| c.len() != grid.cells()) {
            return Err(Error::InvalidState("component shapes do not match grid".into()));
        }
        Ok(VectorField { grid, data: comps.concat() })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn dim(&self) -> usize {
        self.grid.dim()
    }
    pub fn data(&self) -> &[f64] {
        &self.data
    }
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    pub fn comp(&self, a: usize) -> &[f64] {
        let n = self.grid.cells();
        &self.data[a * n..(a + 1) * n]
    }
    pub fn comp_mut(&mut self, a: usize) -> &mut [f64] {
        let n = self.grid.cells();
        &mut self.data[a * n..(a + 1) * n]
    }

    pub fn at(&self, cell: usize) -> [f64; 2] {
        let n = self.grid.cells();
        if self.dim() == 1 {
            [self.data[cell], 0.0]
        } else {
            [self.data[cell], self.data[n + cell]]
        }
    }

    /// Pointwise squared Euclidean norm.
    pub fn norm_sq(&self) -> ScalarField {
        let n = self.grid.cells();
        let mut out = vec![0.0; n];
        for a in 0..self.dim() {
            for (o, &x) in out.iter_mut().zip(self.comp(a)) {
                *o += x * x;
            }
        }
        ScalarField::from_vec_unchecked(self.grid, out)
    }

    pub fn zip_map(&self, other: &VectorField, f: impl Fn(f64, f64) -> f64) -> Result<VectorField> {
        same_grid(&self.grid, &other.grid)?;
        Ok(VectorField { grid: self.grid, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() })
    }

    /// Multiplies every component by the scalar field.
    pub fn scale_by(&self, s: &ScalarField) -> Result<VectorField> {
        same_grid(&self.grid, s.grid())?;
        let n = self.grid.cells();
        let data = self.data.iter().enumerate().map(|(k, &x)| x * s.values()[k % n]).collect();
        Ok(VectorField { grid: self.grid, data })
    }

    pub fn first_non_finite(&self) -> Option<usize> {
        self.data.iter().position(|x| !x.is_finite()).map(|k| k % self.grid.cells())
    }
}

pub(crate) fn same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Midpoint-rule integral `hx * hy * sum(values)` with a fixed left-to-right
/// summation order.
pub fn integrate_cellwise(field: &ScalarField) -> Result<f64> {
    if let Some(cell) = field.first_non_finite() {
        return Err(Error::NonFinite { what: "integrand", cell });
    }
    Ok(field.grid().cell_measure() * sum_seq(field.values()))
}

pub(crate) fn sum_seq(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for &x in xs {
        s += x;
    }
    s
}

/// Midpoint integral of a raw cell array on `grid`, unchecked.
pub(crate) fn integrate_raw(grid: &Grid, xs: &[f64]) -> f64 {
    grid.cell_measure() * sum_seq(xs)
}

/// Physical and regularization coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    pub gamma: f64,
    pub mu: f64,
    pub lam: f64,
    pub zeta: f64,
    /// Artificial viscosity.
    pub eps: f64,
    /// Artificial pressure coefficient.
    pub delta: f64,
    /// Artificial pressure exponent; only read when `delta > 0`.
    pub beta: f64,
}

impl Default for PhysParams {
    fn default() -> Self {
        PhysParams { gamma: 2.0, mu: 0.1, lam: 0.0, zeta: 1.0, eps: 0.0, delta: 0.0, beta: 4.5 }
    }
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        match self.violation() {
            Some((_, msg)) => Err(Error::InvalidParameter(msg)),
            None => Ok(()),
        }
    }

    /// The first violated invariant, with the name of the parameter to blame.
    pub fn violation(&self) -> Option<(&'static str, String)> {
        let named = [
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("lambda", self.lam),
            ("zeta", self.zeta),
            ("eps", self.eps),
            ("delta", self.delta),
            ("beta", self.beta),
        ];
        if let Some((name, x)) = named.iter().find(|(_, x)| !x.is_finite()) {
            return Some((name, format!("{name} must be finite, got {x}")));
        }
        if self.gamma <= 1.0 {
            return Some(("gamma", format!("gamma must satisfy γ>1, got {}", self.gamma)));
        }
        if self.mu <= 0.0 {
            return Some(("mu", format!("viscosity must satisfy μ>0, got {}", self.mu)));
        }
        if 3.0 * self.lam + 2.0 * self.mu <= 0.0 {
            return Some(("lambda", format!("Lamé coefficients must satisfy 3λ+2μ>0, got λ={}, μ={}", self.lam, self.mu)));
        }
        if self.zeta <= 0.0 {
            return Some(("zeta", format!("drag relaxation must satisfy ζ>0, got {}", self.zeta)));
        }
        if self.eps < 0.0 {
            return Some(("eps", format!("artificial viscosity must satisfy ε≥0, got {}", self.eps)));
        }
        if self.delta < 0.0 {
            return Some(("delta", format!("artificial pressure must satisfy δ≥0, got {}", self.delta)));
        }
        if self.delta > 0.0 && self.beta <= 4.0 {
            return Some(("beta", format!("artificial pressure exponent must satisfy β>4, got {}", self.beta)));
        }
        None
    }

    /// Largest diffusion coefficient entering the explicit stability bound.
    pub fn nu_max(&self) -> f64 {
        self.mu.max(self.lam + 2.0 * self.mu).max(1.0).max(self.eps)
    }
}

/// Density, velocity and chemoattractant at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub rho: ScalarField,
    pub v: VectorField,
    pub c: ScalarField,
}

impl State {
    /// Builds a state and checks every invariant.
    pub fn new(t: f64, rho: ScalarField, v: VectorField, c: ScalarField) -> Result<State> {
        let s = State::assemble(t, rho, v, c)?;
        s.check()?;
        Ok(s)
    }

    /// Builds a state checking only shapes (used for trajectories, where
    /// undershoots are monitored rather than rejected).
    pub fn assemble(t: f64, rho: ScalarField, v: VectorField, c: ScalarField) -> Result<State> {
        same_grid(rho.grid(), v.grid())?;
        same_grid(rho.grid(), c.grid())?;
        Ok(State { t, rho, v, c })
    }

    pub fn grid(&self) -> &Grid {
        self.rho.grid()
    }

    /// Rejects non-finite entries and negative density or concentration
    /// beyond `1e-13` times the field maximum.
    pub fn check(&self) -> Result<()> {
        if !self.t.is_finite() {
            return Err(Error::InvalidState("time is not finite".into()));
        }
        if let Some(cell) = self.rho.first_non_finite() {
            return Err(Error::NonFinite { what: "rho", cell });
        }
        if let Some(cell) = self.v.first_non_finite() {
            return Err(Error::NonFinite { what: "v", cell });
        }
        if let Some(cell) = self.c.first_non_finite() {
            return Err(Error::NonFinite { what: "c", cell });
        }
        for (name, f) in [("rho", &self.rho), ("c", &self.c)] {
            let floor = -1e-13 * f.max().max(0.0);
            if let Some(cell) = f.values().iter().position(|&x| x < floor) {
                return Err(Error::InvalidState(format!("{name} = {:e} < 0 at cell {cell}", f.values()[cell])));
            }
        }
        Ok(())
    }

    /// Constant equilibrium `(rho_bar, 0, rho_bar)`.
    pub fn constant(grid: Grid, rho_bar: f64) -> State {
        State { t: 0.0, rho: ScalarField::constant(grid, rho_bar), v: VectorField::zeros(grid), c: ScalarField::constant(grid, rho_bar) }
    }

    pub fn momentum(&self) -> VectorField {
        self.v.scale_by(&self.rho).expect("state fields share a grid")
    }

    pub fn mass(&self) -> f64 {
        integrate_raw(self.grid(), self.rho.values())
    }

    /// Cell-average restriction onto a grid `factor` times coarser.
    /// Velocity is restricted through momentum so mass and momentum are kept.
    pub fn restrict(&self, factor: usize) -> Result<State> {
        if factor == 1 {
            return Ok(self.clone());
        }
        let fine = *self.grid();
        let coarse = fine.coarsen(factor)?;
        let avg = |xs: &[f64]| restrict_plane(&fine, &coarse, factor, xs);
        let rho = avg(self.rho.values());
        let c = avg(self.c.values());
        let m = self.momentum();
        let mut v = Vec::with_capacity(coarse.dim() * coarse.cells());
        for a in 0..fine.dim() {
            let ma = avg(m.comp(a));
            v.extend(ma.iter().zip(&rho).map(|(&mk, &rk)| if rk > 0.0 { mk / rk } else { 0.0 }));
        }
        Ok(State {
            t: self.t,
            rho: ScalarField::from_vec_unchecked(coarse, rho),
            v: VectorField { grid: coarse, data: v },
            c: ScalarField::from_vec_unchecked(coarse, c),
        })
    }
}

fn restrict_plane(fine: &Grid, coarse: &Grid, factor: usize, xs: &[f64]) -> Vec<f64> {
    let fy = if fine.dim() == 1 { 1 } else { factor };
    let w = 1.0 / (factor * fy) as f64;
    let mut out = vec![0.0; coarse.cells()];
    for jc in 0..coarse.ny() {
        for ic in 0..coarse.nx() {
            let mut s = 0.0;
            for dj in 0..fy {
                for di in 0..factor {
                    s += xs[fine.idx(ic * factor + di, jc * fy + dj)];
                }
            }
            out[coarse.idx(ic, jc)] = s * w;
        }
    }
    out
}

/// Health counters collected while integrating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunDiagnostics {
    pub steps: usize,
    pub min_rho: f64,
    pub min_c: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

impl Default for RunDiagnostics {
    fn default() -> Self {
        RunDiagnostics { steps: 0, min_rho: f64::INFINITY, min_c: f64::INFINITY, dt_min: f64::INFINITY, dt_max: 0.0 }
    }
}

impl RunDiagnostics {
    pub(crate) fn observe(&mut self, s: &State) {
        self.min_rho = self.min_rho.min(s.rho.min());
        self.min_c = self.min_c.min(s.c.min());
    }
}

/// Ordered snapshots of one run together with its provenance.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub params: PhysParams,
    pub settings: SchemeSettings,
    pub snapshots: Vec<State>,
    pub diagnostics: RunDiagnostics,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn last(&self) -> &State {
        self.snapshots.last().expect("trajectory holds at least the initial state")
    }

    /// Checks ordering and grid invariants.
    pub fn check(&self) -> Result<()> {
        for w in self.snapshots.windows(2) {
            if w[1].t <= w[0].t {
                return Err(Error::InvalidState("snapshot times not strictly increasing".into()));
            }
        }
        for s in &self.snapshots {
            same_grid(&self.grid, s.grid())?;
        }
        Ok(())
    }
}
