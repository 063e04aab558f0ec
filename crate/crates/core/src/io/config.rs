//! Line-oriented run configuration: `key = value`, `#` starts a comment.
//!
//! Every key is optional; unknown and repeated keys are errors. Lists are
//! comma separated. [`RunConfig::to_text`] writes every key, and parsing that
//! text gives back the same configuration.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use crate::dynamics::SchemeSettings;
use crate::error::{Error, Result};
use crate::fields::{BcKind, Grid, PhysParams};
use crate::relenergy::Quadrature;

/// How the initial state is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// `(rho_bar, 0, rho_bar)`.
    Constant {
        rho_bar: f64,
    },
    /// `background + amplitude * exp(-|x - center|² / (2 width²))` for the
    /// density, zero velocity and concentration.
    GaussianBlob {
        center: [f64; 2],
        width: f64,
        amplitude: f64,
        background: f64,
    },
    /// Smooth random density, velocity and concentration around
    /// `(1, 0, 1)`, each within `± amplitude`.
    RandomSmooth {
        seed: u64,
        modes: usize,
        amplitude: f64,
    },
    FromSnapshot {
        path: PathBuf,
    },
}

impl InitialCondition {
    pub fn kind(&self) -> &'static str {
        match self {
            InitialCondition::Constant { .. } => "constant",
            InitialCondition::GaussianBlob { .. } => "gaussian_blob",
            InitialCondition::RandomSmooth { .. } => "random_smooth",
            InitialCondition::FromSnapshot { .. } => "snapshot",
        }
    }
}

/// Manufactured solution used by `mms-convergence`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MmsCase {
    Standard,
    Travelling,
}

/// Settings of the audit and diagnostic commands.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditSettings {
    /// Write the per-step energy ledger during `simulate`.
    pub energy_csv: bool,
    /// Write binary snapshots during `simulate`.
    pub write_snapshots: bool,
    /// Time-step multipliers of the energy audit.
    pub dt_scales: Vec<f64>,
    /// Allowed relative spread of the fitted defect constants.
    pub fit_tolerance: f64,
    pub mms_case: MmsCase,
    pub mms_levels: Vec<usize>,
    /// Coarse resolutions of the weak–strong diagnostic.
    pub coarse: Vec<usize>,
    /// Reference resolution of the weak–strong diagnostic.
    pub fine: usize,
    /// Required decrease of `sup rel_H` per coarse halving.
    pub min_factor: f64,
    /// Refinement of the reference run in `relenergy-audit`.
    pub strong_factor: usize,
    pub quadrature: Quadrature,
    /// Number of random pairs in the coupling-inequality ensemble.
    pub ensemble: usize,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings {
            energy_csv: true,
            write_snapshots: true,
            dt_scales: vec![1.0, 0.5, 0.25],
            fit_tolerance: 0.2,
            mms_case: MmsCase::Travelling,
            mms_levels: vec![16, 32, 64],
            coarse: vec![16, 32, 64],
            fine: 128,
            min_factor: 1.5,
            strong_factor: 4,
            quadrature: Quadrature::Trapezoid,
            ensemble: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub bc: BcKind,
    pub params: PhysParams,
    pub settings: SchemeSettings,
    pub initial: InitialCondition,
    pub audits: AuditSettings,
    /// Read the parameters against the three-dimensional theory when
    /// reporting thresholds (the simulation itself stays 1-D or 2-D).
    pub three_d: bool,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 2,
            nx: 32,
            ny: 32,
            lx: 1.0,
            ly: 1.0,
            bc: BcKind::PeriodicAll,
            params: PhysParams::default(),
            settings: SchemeSettings::default(),
            initial: InitialCondition::GaussianBlob { center: [0.5, 0.5], width: 0.1, amplitude: 1.0, background: 0.5 },
            audits: AuditSettings::default(),
            three_d: false,
            out_dir: PathBuf::from("out"),
        }
    }
}

#[rustfmt::skip]
const KEYS: &[&str] = &[
    "dim", "nx", "ny", "lx", "ly", "bc",
    "gamma", "mu", "lambda", "zeta", "eps", "delta", "beta",
    "integrator", "cfl_adv", "cfl_diff", "rho_floor", "t_end", "snapshot_stride", "snapshot_interval", "convection", "seed",
    "initial", "rho_bar", "center", "width", "amplitude", "background", "modes", "snapshot_path",
    "energy_csv", "write_snapshots", "dt_scales", "fit_tolerance", "mms_case", "mms_levels", "coarse", "fine", "min_factor",
    "strong_factor", "quadrature", "ensemble",
    "three_d", "out",
];

/// Initial-condition keys and the kinds they apply to.
const IC_KEYS: &[(&str, &[&str])] = &[
    ("rho_bar", &["constant"]),
    ("center", &["gaussian_blob"]),
    ("width", &["gaussian_blob"]),
    ("amplitude", &["gaussian_blob", "random_smooth"]),
    ("background", &["gaussian_blob"]),
    ("modes", &["random_smooth"]),
    ("snapshot_path", &["snapshot"]),
];

struct Entries<'a> {
    map: HashMap<&'a str, (usize, &'a str)>,
}

impl<'a> Entries<'a> {
    fn get<T>(&self, key: &str, default: T, parse: impl Fn(&str) -> Option<T>, expects: &str) -> Result<T> {
        match self.map.get(key) {
            None => Ok(default),
            Some(&(line, raw)) => parse(raw).ok_or_else(|| Error::Config { line, msg: format!("{key} expects {expects}, got {raw:?}") }),
        }
    }

    fn line(&self, key: &str) -> usize {
        self.map.get(key).map_or(0, |e| e.0)
    }

    /// Line to blame for a whole-config problem: the given key if present,
    /// else the last line that set anything.
    fn blame(&self, key: &str) -> usize {
        match self.map.get(key) {
            Some(e) => e.0,
            None => self.map.values().map(|e| e.0).max().unwrap_or(0),
        }
    }
}

fn real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|x| x.is_finite())
}

fn count(s: &str) -> Option<usize> {
    s.parse().ok()
}

fn boolean(s: &str) -> Option<bool> {
    match s {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

fn list<T>(s: &str, item: fn(&str) -> Option<T>) -> Option<Vec<T>> {
    let v: Option<Vec<T>> = s.split(',').map(|x| item(x.trim())).collect();
    v.filter(|v| !v.is_empty())
}

fn pair(s: &str) -> Option<[f64; 2]> {
    match list(s, real)?.as_slice() {
        [a, b] => Some([*a, *b]),
        _ => None,
    }
}

fn fmt_list<T: std::fmt::Debug>(v: &[T]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.dim, self.nx, self.ny, self.lx, self.ly, self.bc)
    }

    /// Advisory messages: parameters the simulation accepts but the
    /// existence theory does not cover.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.three_d && self.params.gamma <= 1.6 {
            w.push(format!("gamma = {} is below the 8/5 existence threshold for d = 3; the run proceeds", self.params.gamma));
        }
        w
    }

    /// Re-checks every invariant (also done by [`parse_config`]).
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.params.validate()?;
        self.settings.validate()?;
        self.validate_extra().map_err(|(_, msg)| Error::InvalidParameter(msg))
    }

    fn validate_extra(&self) -> std::result::Result<(), (&'static str, String)> {
        match &self.initial {
            InitialCondition::Constant { rho_bar } if !(*rho_bar > 0.0) => {
                return Err(("rho_bar", format!("rho_bar must be positive, got {rho_bar}")));
            }
            InitialCondition::GaussianBlob { width, amplitude, background, .. } => {
                if !(*width > 0.0) {
                    return Err(("width", format!("width must be positive, got {width}")));
                }
                if *amplitude < 0.0 || *background < 0.0 || !(amplitude + background > 0.0) {
                    return Err(("amplitude", "gaussian_blob needs nonnegative amplitude and background, not both zero".into()));
                }
            }
            InitialCondition::RandomSmooth { modes, amplitude, .. } => {
                if *modes == 0 {
                    return Err(("modes", "modes must be at least 1".into()));
                }
                if !(*amplitude >= 0.0 && *amplitude < 1.0) {
                    return Err(("amplitude", format!("random_smooth amplitude must lie in [0,1), got {amplitude}")));
                }
            }
            _ => {}
        }
        let a = &self.audits;
        if a.dt_scales.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return Err(("dt_scales", "dt_scales must lie in (0,1]".into()));
        }
        if !(a.fit_tolerance > 0.0) {
            return Err(("fit_tolerance", "fit_tolerance must be positive".into()));
        }
        if a.mms_levels.len() < 2 || a.mms_levels.iter().any(|&n| n < 4) {
            return Err(("mms_levels", "mms_levels needs at least two resolutions of at least 4 cells".into()));
        }
        if a.coarse.is_empty() || a.coarse.iter().any(|&n| n < 4 || !a.fine.is_multiple_of(n) || a.fine < 2 * n) {
            return Err(("coarse", format!("coarse resolutions must divide fine = {} at least twice over", a.fine)));
        }
        if a.strong_factor < 2 {
            return Err(("strong_factor", "strong_factor must be at least 2".into()));
        }
        if !(a.min_factor >= 1.0) {
            return Err(("min_factor", "min_factor must be at least 1".into()));
        }
        if a.ensemble == 0 {
            return Err(("ensemble", "ensemble must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical text listing every key.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let st = &self.settings;
        let a = &self.audits;
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dim", self.dim.to_string());
        kv("nx", self.nx.to_string());
        kv("ny", self.ny.to_string());
        kv("lx", format!("{:?}", self.lx));
        kv("ly", format!("{:?}", self.ly));
        kv("bc", self.bc.token().into());
        kv("gamma", format!("{:?}", p.gamma));
        kv("mu", format!("{:?}", p.mu));
        kv("lambda", format!("{:?}", p.lam));
        kv("zeta", format!("{:?}", p.zeta));
        kv("eps", format!("{:?}", p.eps));
        kv("delta", format!("{:?}", p.delta));
        kv("beta", format!("{:?}", p.beta));
        kv("integrator", st.integrator.name().into());
        kv("cfl_adv", format!("{:?}", st.cfl_adv));
        kv("cfl_diff", format!("{:?}", st.cfl_diff));
        kv("rho_floor", format!("{:?}", st.rho_floor));
        kv("t_end", format!("{:?}", st.t_end));
        kv("snapshot_stride", st.snapshot_stride.to_string());
        kv("snapshot_interval", st.snapshot_interval.map_or("none".into(), |x| format!("{x:?}")));
        kv("convection", st.convection.to_string());
        kv("seed", st.seed.to_string());
        kv("initial", self.initial.kind().into());
        match &self.initial {
            InitialCondition::Constant { rho_bar } => kv("rho_bar", format!("{rho_bar:?}")),
            InitialCondition::GaussianBlob { center, width, amplitude, background } => {
                kv("center", fmt_list(center));
                kv("width", format!("{width:?}"));
                kv("amplitude", format!("{amplitude:?}"));
                kv("background", format!("{background:?}"));
            }
            InitialCondition::RandomSmooth { modes, amplitude, .. } => {
                kv("modes", modes.to_string());
                kv("amplitude", format!("{amplitude:?}"));
            }
            InitialCondition::FromSnapshot { path } => kv("snapshot_path", path.display().to_string()),
        }
        kv("energy_csv", a.energy_csv.to_string());
        kv("write_snapshots", a.write_snapshots.to_string());
        kv("dt_scales", fmt_list(&a.dt_scales));
        kv("fit_tolerance", format!("{:?}", a.fit_tolerance));
        kv(
            "mms_case",
            match a.mms_case {
                MmsCase::Standard => "standard".into(),
                MmsCase::Travelling => "travelling".into(),
            },
        );
        kv("mms_levels", fmt_list(&a.mms_levels));
        kv("coarse", fmt_list(&a.coarse));
        kv("fine", a.fine.to_string());
        kv("min_factor", format!("{:?}", a.min_factor));
        kv("strong_factor", a.strong_factor.to_string());
        kv(
            "quadrature",
            match a.quadrature {
                Quadrature::LeftEndpoint => "left".into(),
                Quadrature::Trapezoid => "trapezoid".into(),
            },
        );
        kv("ensemble", a.ensemble.to_string());
        kv("three_d", self.three_d.to_string());
        kv("out", self.out_dir.display().to_string());
        s
    }
}

/// Parses a configuration, applying defaults for missing keys and checking
/// every invariant. Errors carry the 1-based line number.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut map: HashMap<&str, (usize, &str)> = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (key, value) =
            body.split_once('=').ok_or_else(|| Error::Config { line, msg: format!("expected `key = value`, got {body:?}") })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(Error::Config { line, msg: format!("unknown key {key:?}") });
        }
        if value.is_empty() {
            return Err(Error::Config { line, msg: format!("{key} has no value") });
        }
        if let Some((first, _)) = map.insert(key, (line, value)) {
            return Err(Error::Config { line, msg: format!("duplicate key {key:?} (first set on line {first})") });
        }
    }
    let e = Entries { map };
    let d = RunConfig::default();
    let dp = d.params;
    let ds = &d.settings;
    let da = &d.audits;

    let dim = e.get("dim", d.dim, count, "1 or 2")?;
    let nx = e.get("nx", d.nx, count, "a positive integer")?;
    let ny = e.get("ny", if dim == 1 { 1 } else { nx }, count, "a positive integer")?;
    let bc = e.get("bc", d.bc, BcKind::from_token, "periodic or noslip")?;
    let params = PhysParams {
        gamma: e.get("gamma", dp.gamma, real, "a number")?,
        mu: e.get("mu", dp.mu, real, "a number")?,
        lam: e.get("lambda", dp.lam, real, "a number")?,
        zeta: e.get("zeta", dp.zeta, real, "a number")?,
        eps: e.get("eps", dp.eps, real, "a number")?,
        delta: e.get("delta", dp.delta, real, "a number")?,
        beta: e.get("beta", dp.beta, real, "a number")?,
    };
    e.get("integrator", (), |s| (s == ds.integrator.name()).then_some(()), ds.integrator.name())?;
    let seed = e.get("seed", ds.seed, |s| s.parse().ok(), "a nonnegative integer")?;
    let settings = SchemeSettings {
        integrator: ds.integrator,
        cfl_adv: e.get("cfl_adv", ds.cfl_adv, real, "a number")?,
        cfl_diff: e.get("cfl_diff", ds.cfl_diff, real, "a number")?,
        rho_floor: e.get("rho_floor", ds.rho_floor, real, "a number")?,
        t_end: e.get("t_end", ds.t_end, real, "a number")?,
        snapshot_stride: e.get("snapshot_stride", ds.snapshot_stride, count, "a positive integer")?,
        snapshot_interval: e.get(
            "snapshot_interval",
            ds.snapshot_interval,
            |s| if s == "none" { Some(None) } else { real(s).map(Some) },
            "a number or none",
        )?,
        convection: e.get("convection", ds.convection, boolean, "true or false")?,
        seed,
    };

    let kind = e.get(
        "initial",
        d.initial.kind(),
        |s| ["constant", "gaussian_blob", "random_smooth", "snapshot"].into_iter().find(|k| *k == s),
        "constant, gaussian_blob, random_smooth or snapshot",
    )?;
    for (key, kinds) in IC_KEYS {
        if e.map.contains_key(key) && !kinds.contains(&kind) {
            return Err(Error::Config { line: e.line(key), msg: format!("{key} does not apply to initial = {kind}") });
        }
    }
    let initial = match kind {
        "constant" => InitialCondition::Constant { rho_bar: e.get("rho_bar", 1.0, real, "a number")? },
        "gaussian_blob" => InitialCondition::GaussianBlob {
            center: e.get(
                "center",
                [0.5 * e.get("lx", d.lx, real, "a number")?, 0.5 * e.get("ly", d.ly, real, "a number")?],
                pair,
                "two numbers",
            )?,
            width: e.get("width", 0.1, real, "a number")?,
            amplitude: e.get("amplitude", 1.0, real, "a number")?,
            background: e.get("background", 0.5, real, "a number")?,
        },
        "random_smooth" => InitialCondition::RandomSmooth {
            seed,
            modes: e.get("modes", 3, count, "a positive integer")?,
            amplitude: e.get("amplitude", 0.3, real, "a number")?,
        },
        _ => match e.map.get("snapshot_path") {
            Some(&(_, p)) => InitialCondition::FromSnapshot { path: PathBuf::from(p) },
            None => return Err(Error::Config { line: e.line("initial"), msg: "initial = snapshot requires snapshot_path".into() }),
        },
    };

    let audits = AuditSettings {
        energy_csv: e.get("energy_csv", da.energy_csv, boolean, "true or false")?,
        write_snapshots: e.get("write_snapshots", da.write_snapshots, boolean, "true or false")?,
        dt_scales: e.get("dt_scales", da.dt_scales.clone(), |s| list(s, real), "a list of numbers")?,
        fit_tolerance: e.get("fit_tolerance", da.fit_tolerance, real, "a number")?,
        mms_case: e.get(
            "mms_case",
            da.mms_case,
            |s| match s {
                "standard" => Some(MmsCase::Standard),
                "travelling" => Some(MmsCase::Travelling),
                _ => None,
            },
            "standard or travelling",
        )?,
        mms_levels: e.get("mms_levels", da.mms_levels.clone(), |s| list(s, count), "a list of integers")?,
        coarse: e.get("coarse", da.coarse.clone(), |s| list(s, count), "a list of integers")?,
        fine: e.get("fine", da.fine, count, "a positive integer")?,
        min_factor: e.get("min_factor", da.min_factor, real, "a number")?,
        strong_factor: e.get("strong_factor", da.strong_factor, count, "a positive integer")?,
        quadrature: e.get(
            "quadrature",
            da.quadrature,
            |s| match s {
                "left" => Some(Quadrature::LeftEndpoint),
                "trapezoid" => Some(Quadrature::Trapezoid),
                _ => None,
            },
            "left or trapezoid",
        )?,
        ensemble: e.get("ensemble", da.ensemble, count, "a positive integer")?,
    };

    let cfg = RunConfig {
        dim,
        nx,
        ny,
        lx: e.get("lx", d.lx, real, "a number")?,
        ly: e.get("ly", d.ly, real, "a number")?,
        bc,
        params,
        settings,
        initial,
        audits,
        three_d: e.get("three_d", d.three_d, boolean, "true or false")?,
        out_dir: e.get("out", d.out_dir.clone(), |s| Some(PathBuf::from(s)), "a path")?,
    };

    if let Err(err) = cfg.grid() {
        let msg = err.to_string();
        let key = ["dim", "nx", "ny", "lx", "ly"].into_iter().find(|k| msg.contains(&format!("{k} "))).unwrap_or("dim");
        return Err(Error::Config { line: e.blame(key), msg });
    }
    if let Some((key, msg)) = cfg.params.violation().or_else(|| cfg.settings.violation()).or_else(|| cfg.validate_extra().err()) {
        return Err(Error::Config { line: e.blame(key), msg });
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_of(err: Error) -> (usize, String) {
        match err {
            Error::Config { line, msg } => (line, msg),
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = parse_config("nx=32\nt_end=0.1\n").unwrap();
        assert_eq!(cfg.params, PhysParams { gamma: 2.0, mu: 0.1, lam: 0.0, zeta: 1.0, eps: 0.0, delta: 0.0, beta: 4.5 });
        assert_eq!(cfg.settings.t_end, 0.1);
        assert_eq!((cfg.nx, cfg.ny), (32, 32));
        assert!(cfg.warnings().is_empty());
        cfg.validate().unwrap();
    }

    #[test]
    fn gamma_below_threshold_in_three_d_warns() {
        let cfg = parse_config("gamma = 1.5\nthree_d = true\n").unwrap();
        let w = cfg.warnings();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("8/5"));
        assert!(parse_config("gamma = 1.5\n").unwrap().warnings().is_empty());
    }

    #[test]
    fn negative_viscosity_cites_invariant_and_line() {
        let (line, msg) = line_of(parse_config("# viscosity\nnx = 16\nmu = -1\n").unwrap_err());
        assert_eq!(line, 3);
        assert!(msg.contains("μ>0"), "{msg}");
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("nx = 8\nfoo = 1\n", 2, "unknown key"),
            ("nx = 8\nnx = 9\n", 2, "duplicate"),
            ("\n\nnx = eight\n", 3, "positive integer"),
            ("nx = 8\njust text\n", 2, "key = value"),
            ("nx = 2\n", 1, "nx must be"),
            ("initial = constant\nwidth = 0.2\n", 2, "does not apply"),
            ("lambda = -1\n", 1, "3λ+2μ>0"),
            ("cfl_adv = 1.5\n", 1, "cfl_adv"),
            ("coarse = 16, 48\n", 1, "coarse"),
            ("gamma = nan\n", 1, "a number"),
        ];
        for (text, want_line, want) in cases {
            let (line, msg) = line_of(parse_config(text).unwrap_err());
            assert_eq!(line, want_line, "{text:?}: {msg}");
            assert!(msg.contains(want), "{text:?}: {msg}");
        }
    }

    #[test]
    fn comments_and_lists() {
        let cfg = parse_config("coarse = 8, 16 # two levels\nfine=32\ncenter = 0.25,0.75\nsnapshot_interval = 0.01\n").unwrap();
        assert_eq!(cfg.audits.coarse, vec![8, 16]);
        assert_eq!(cfg.initial, InitialCondition::GaussianBlob { center: [0.25, 0.75], width: 0.1, amplitude: 1.0, background: 0.5 });
        assert_eq!(cfg.settings.snapshot_interval, Some(0.01));
    }

    #[test]
    fn canonical_text_round_trips() {
        for text in [
            "",
            "initial = constant\nrho_bar = 1.25\nbc = noslip\n",
            "initial = random_smooth\nseed = 7\ndim = 1\nnx = 64\n",
            "initial = snapshot\nsnapshot_path = a/b.vnsf\n",
        ] {
            let cfg = parse_config(text).unwrap();
            assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
