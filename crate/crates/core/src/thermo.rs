//! Barotropic pressure law `p(ρ) = ρ^γ`, its internal energy
//! `ψ(ρ) = ρ^γ/(γ-1)`, Bregman distances, and the exponents of the
//! interpolation bound `∫ρc ≤ κ‖ρ‖_m^m + ξ‖∇c‖² + C1‖c‖_1^{C2}`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PressureLaw {
    gamma: f64,
}

impl PressureLaw {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(Error::InvalidParameter(format!("adiabatic exponent must satisfy γ>1, got {gamma}")));
        }
        Ok(PressureLaw { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Global existence of finite-energy weak solutions in three dimensions
    /// is known for `γ > 8/5`.
    pub fn admissible_3d(&self) -> bool {
        self.gamma > 8.0 / 5.0
    }

    /// The interpolation bound with `m = γ` holds in two dimensions for `γ > 3/2`.
    pub fn admissible_2d(&self) -> bool {
        self.gamma > 1.5
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        nonneg(rho)?;
        Ok(self.p(rho))
    }

    pub fn internal_energy(&self, rho: f64) -> Result<f64> {
        nonneg(rho)?;
        Ok(self.psi(rho))
    }

    pub fn psi_prime(&self, rho: f64) -> Result<f64> {
        nonneg(rho)?;
        Ok(self.dpsi(rho))
    }

    /// `ψ''(ρ) = γρ^{γ-2}`, singular at vacuum when `γ < 2`.
    pub fn psi_second(&self, rho: f64) -> Result<f64> {
        nonneg(rho)?;
        if rho == 0.0 && self.gamma < 2.0 {
            return Err(Error::Domain(format!("ψ'' is singular at ρ=0 for γ={} < 2", self.gamma)));
        }
        Ok(self.d2psi(rho))
    }

    /// `ψ(ρ|r) = ψ(ρ) - ψ(r) - ψ'(r)(ρ - r)`.
    pub fn bregman_psi(&self, rho: f64, r: f64) -> Result<f64> {
        nonneg(rho)?;
        positive_ref(r)?;
        Ok(self.bregman(rho, r))
    }

    /// `p(ρ|r) = p(ρ) - p(r) - p'(r)(ρ - r)`, evaluated from its definition.
    pub fn relative_pressure(&self, rho: f64, r: f64) -> Result<f64> {
        nonneg(rho)?;
        positive_ref(r)?;
        let g = self.gamma;
        Ok(self.p(rho) - self.p(r) - g * r.powf(g - 1.0) * (rho - r))
    }

    // Unchecked kernels for inner loops; callers guarantee the domain.

    #[inline]
    pub(crate) fn p(&self, rho: f64) -> f64 {
        rho.powf(self.gamma)
    }
    #[inline]
    pub(crate) fn psi(&self, rho: f64) -> f64 {
        rho.powf(self.gamma) / (self.gamma - 1.0)
    }
    #[inline]
    pub(crate) fn dpsi(&self, rho: f64) -> f64 {
        self.gamma * rho.powf(self.gamma - 1.0) / (self.gamma - 1.0)
    }
    #[inline]
    pub(crate) fn d2psi(&self, rho: f64) -> f64 {
        self.gamma * rho.powf(self.gamma - 2.0)
    }
    #[inline]
    pub(crate) fn bregman(&self, rho: f64, r: f64) -> f64 {
        self.psi(rho) - self.psi(r) - self.dpsi(r) * (rho - r)
    }
    #[inline]
    pub(crate) fn rel_p(&self, rho: f64, r: f64) -> f64 {
        (self.gamma - 1.0) * self.bregman(rho, r)
    }
}

fn nonneg(rho: f64) -> Result<()> {
    if rho >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("density must be nonnegative, got {rho}")))
    }
}

fn positive_ref(r: f64) -> Result<()> {
    if r > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("reference density must be positive, got {r}")))
    }
}

pub fn pressure(rho: f64, law: &PressureLaw) -> Result<f64> {
    law.pressure(rho)
}

pub fn internal_energy(rho: f64, law: &PressureLaw) -> Result<f64> {
    law.internal_energy(rho)
}

pub fn psi_prime(rho: f64, law: &PressureLaw) -> Result<f64> {
    law.psi_prime(rho)
}

pub fn psi_second(rho: f64, law: &PressureLaw) -> Result<f64> {
    law.psi_second(rho)
}

pub fn bregman_psi(rho: f64, r: f64, law: &PressureLaw) -> Result<f64> {
    law.bregman_psi(rho, r)
}

pub fn relative_pressure(rho: f64, r: f64, law: &PressureLaw) -> Result<f64> {
    law.relative_pressure(rho, r)
}

/// Exponents of the interpolation inequality for a given `(m, d)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SugiyamaExponents {
    pub m: f64,
    pub d: usize,
    /// Gagliardo–Nirenberg interpolation exponent `2d / (m(d+2))`.
    pub theta: f64,
    /// Growth exponent on `‖c‖_1`.
    pub c2: f64,
}

impl SugiyamaExponents {
    /// Admissibility threshold `2(d+1)/(d+2)` on `m`.
    pub fn threshold(d: usize) -> f64 {
        2.0 * (d as f64 + 1.0) / (d as f64 + 2.0)
    }

    /// `mθ/(m-1)`, which must stay below 2 for the Young splitting to close.
    pub fn young_exponent(&self) -> f64 {
        self.m * self.theta / (self.m - 1.0)
    }
}

pub fn sugiyama_exponents(m: f64, d: usize) -> Result<SugiyamaExponents> {
    if d != 2 && d != 3 {
        return Err(Error::InvalidParameter(format!("dimension must be 2 or 3, got {d}")));
    }
    let thr = SugiyamaExponents::threshold(d);
    if !(m > thr) {
        return Err(Error::InvalidParameter(format!("exponent m={m} must exceed 2(d+1)/(d+2) = {thr} for d={d}")));
    }
    let df = d as f64;
    let theta = 2.0 * df / (m * (df + 2.0));
    let c2 = (m / (m - 1.0)).max(2.0 * m * (1.0 - theta) / (2.0 * (m - 1.0) - m * theta));
    Ok(SugiyamaExponents { m, d, theta, c2 })
}

/// Empirical constants in `ψ(ρ|r) ≥ C3 (ρ-r)²` for `0 ≤ ρ ≤ R` and
/// `ψ(ρ|r) ≥ C4 |ρ-r|^γ` for `ρ > R`, uniformly over `c_p ≤ r ≤ C_p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BregmanBounds {
    pub c3: f64,
    pub c4: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    pub cutoff: f64,
}

/// Fits the lower-bound constants by dense sampling. The `ρ > R` branch is
/// sampled geometrically up to `1e3 * R`, where the ratio has settled to its
/// asymptote `1/(γ-1)`.
pub fn fit_bregman_bounds(law: &PressureLaw, r_lo: f64, r_hi: f64, cutoff: f64, samples: usize) -> Result<BregmanBounds> {
    if !(r_lo > 0.0 && r_hi >= r_lo && cutoff > r_hi && samples >= 2) {
        return Err(Error::InvalidParameter(format!("need 0 < c_p <= C_p < R and samples >= 2, got c_p={r_lo}, C_p={r_hi}, R={cutoff}")));
    }
    let g = law.gamma();
    let mut c3 = f64::INFINITY;
    let mut c4 = f64::INFINITY;
    for a in 0..samples {
        let r = r_lo + (r_hi - r_lo) * a as f64 / (samples - 1) as f64;
        for b in 0..=samples {
            let rho = cutoff * b as f64 / samples as f64;
            let d = rho - r;
            let ratio = if d.abs() < 1e-9 * r { 0.5 * law.d2psi(r) } else { law.bregman(rho, r) / (d * d) };
            c3 = c3.min(ratio);
        }
        for b in 1..=samples {
            let rho = cutoff * 1e3f64.powf(b as f64 / samples as f64);
            c4 = c4.min(law.bregman(rho, r) / (rho - r).abs().powf(g));
        }
    }
    if !(c3 > 0.0 && c4 > 0.0) {
        return Err(Error::Audit(format!("degenerate Bregman bounds: C3={c3}, C4={c4}")));
    }
    Ok(BregmanBounds { c3, c4, r_lo, r_hi, cutoff })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn law(g: f64) -> PressureLaw {
        PressureLaw::new(g).unwrap()
    }

    #[test]
    fn pressure_examples() {
        assert_eq!(pressure(0.0, &law(2.0)).unwrap(), 0.0);
        assert_eq!(pressure(1.0, &law(2.0)).unwrap(), 1.0);
        assert_eq!(pressure(2.0, &law(2.0)).unwrap(), 4.0);
        assert!(pressure(-1.0, &law(2.0)).is_err());
        assert!(PressureLaw::new(1.0).is_err());
    }

    #[test]
    fn internal_energy_examples() {
        assert_eq!(internal_energy(0.0, &law(2.0)).unwrap(), 0.0);
        assert_eq!(internal_energy(1.0, &law(2.0)).unwrap(), 1.0);
        assert!(internal_energy(-0.1, &law(2.0)).is_err());
        let l = law(1.8);
        let rho = 2.0;
        let lhs = rho * l.psi_prime(rho).unwrap() - l.internal_energy(rho).unwrap();
        assert!((lhs - l.pressure(rho).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn psi_derivative_examples() {
        let l = law(2.0);
        assert_eq!(l.psi_prime(3.0).unwrap(), 6.0);
        for rho in [0.0, 0.5, 7.0] {
            assert_eq!(l.psi_second(rho).unwrap(), 2.0);
        }
        assert!(law(1.7).psi_second(0.0).is_err());
        assert!(law(1.7).psi_second(0.1).is_ok());

        // Central-difference oracle: error shrinks like h².
        let l = law(1.7);
        let rho = 1.3;
        let err = |h: f64| {
            let fd = (l.internal_energy(rho + h).unwrap() - l.internal_energy(rho - h).unwrap()) / (2.0 * h);
            (fd - l.psi_prime(rho).unwrap()).abs()
        };
        let ratio = err(1e-2) / err(5e-3);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
        let fd2 = (l.psi_prime(rho + 1e-4).unwrap() - l.psi_prime(rho - 1e-4).unwrap()) / 2e-4;
        assert!((fd2 - l.psi_second(rho).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn bregman_examples() {
        let l = law(2.0);
        assert_eq!(l.bregman_psi(1.5, 1.5).unwrap(), 0.0);
        assert_eq!(l.bregman_psi(3.0, 1.0).unwrap(), 4.0);
        assert!(l.bregman_psi(1.0, 0.0).is_err());
        assert!(l.bregman_psi(-1.0, 1.0).is_err());
        assert_eq!(l.relative_pressure(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(l.relative_pressure(3.0, 1.0).unwrap(), 4.0);
        assert!(l.relative_pressure(1.0, -1.0).is_err());
    }

    #[test]
    fn sugiyama_examples() {
        let e = sugiyama_exponents(2.0, 3).unwrap();
        assert!((e.theta - 0.6).abs() < 1e-15);
        assert!((e.c2 - 2.0).abs() < 1e-15);
        let e = sugiyama_exponents(2.0, 2).unwrap();
        assert_eq!(e.theta, 0.5);
        assert_eq!(e.c2, 2.0);
        let err = sugiyama_exponents(1.6, 3).unwrap_err().to_string();
        assert!(err.contains("1.6"), "{err}");
        assert!(sugiyama_exponents(1.5, 2).is_err());
        assert!(sugiyama_exponents(2.0, 1).is_err());
    }

    #[test]
    fn bregman_lower_bounds_are_positive() {
        for g in [1.7, 2.0, 3.0] {
            let l = law(g);
            let b = fit_bregman_bounds(&l, 0.5, 2.0, 4.0, 200).unwrap();
            assert!(b.c3 > 0.0 && b.c4 > 0.0, "γ={g}: {b:?}");
            // Spot-check the fitted bounds on an independent, shifted sample.
            for k in 0..500 {
                let r = 0.5 + 1.5 * ((k * 37) % 101) as f64 / 100.0;
                let rho = 12.0 * ((k * 53) % 97) as f64 / 96.0 + 0.0137;
                let bound = if rho <= 4.0 { b.c3 * (rho - r).powi(2) } else { b.c4 * (rho - r).abs().powf(g) };
                assert!(l.bregman(rho, r) >= bound * (1.0 - 1e-2), "γ={g} ρ={rho} r={r}");
            }
        }
        assert!(fit_bregman_bounds(&law(2.0), 0.5, 2.0, 1.0, 10).is_err());
    }

    proptest! {
        #[test]
        fn bregman_nonnegative(g in 1.05f64..4.0, rho in 0.0f64..10.0, r in 1e-3f64..10.0) {
            let l = law(g);
            let b = l.bregman_psi(rho, r).unwrap();
            let scale = l.psi(rho) + l.psi(r) + l.dpsi(r) * (rho + r);
            prop_assert!(b >= -1e-12 * scale);
            if (rho - r).abs() > 1e-3 * r {
                prop_assert!(b > 0.0);
            }
        }

        #[test]
        fn pressure_identity(g in 1.05f64..4.0, rho in 1e-3f64..10.0) {
            let l = law(g);
            let p = l.pressure(rho).unwrap();
            let lhs = rho * l.psi_prime(rho).unwrap() - l.internal_energy(rho).unwrap();
            prop_assert!((lhs - p).abs() <= 1e-12 * p.max(1e-300) + 1e-300);
        }

        #[test]
        fn relative_pressure_matches_bregman(rho in 0.0f64..10.0, r in 1e-2f64..10.0) {
            let l = law(1.9);
            let a = l.relative_pressure(rho, r).unwrap();
            let b = 0.9 * l.bregman_psi(rho, r).unwrap();
            let scale = l.p(rho) + l.p(r) + 1.9 * r.powf(0.9) * (rho + r);
            prop_assert!((a - b).abs() <= 1e-12 * scale);
        }

        #[test]
        fn young_exponent_below_two(d in 2usize..=3, extra in 1e-6f64..10.0) {
            let m = SugiyamaExponents::threshold(d) + extra;
            let e = sugiyama_exponents(m, d).unwrap();
            prop_assert!(e.young_exponent() < 2.0);
            prop_assert!(e.theta > 0.0 && e.theta < 1.0);
        }
    }
}
