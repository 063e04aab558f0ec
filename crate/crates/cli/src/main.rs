//! `vnsim`: simulations, energy audits and convergence diagnostics.
//!
//! Exit status: 0 on success or PASS, 2 on FAIL, 1 on any error.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vnsim_core::energetics::{c_l1_audit, energy_audit_refinement, energy_ledger, sugiyama_ensemble, EnergyLedger, EnsembleSpec};
use vnsim_core::io::csv::{write_table, TableWriter};
use vnsim_core::io::{build_initial, parse_config, write_snapshot, MmsCase, RunConfig};
use vnsim_core::mms::{mms_convergence, Manufactured};
use vnsim_core::relenergy::{relenergy_cadence_audit, weak_strong_diagnostic};
use vnsim_core::thermo::sugiyama_exponents;
use vnsim_core::{run, run_with_observer, Error, Forcing, Grid, Result, SchemeSettings};

/// Largest relative drift of the ensemble constant under one grid halving.
const ENSEMBLE_DRIFT_TOLERANCE: f64 = 0.02;

#[derive(Parser, Debug)]
#[command(name = "vnsim", version, about = "Compressible Navier–Stokes–Keller–Segel simulations and audits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (`key = value` lines); defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, overriding the `out` key.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print only warnings and the PASS/FAIL line.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the model; writes snapshots and the per-step energy ledger.
    Simulate,
    /// Energy inequality audit under time-step refinement.
    EnergyAudit,
    /// Coupling interpolation inequality: exponents and a random ensemble.
    SugiyamaCheck,
    /// Manufactured-solution refinement study.
    MmsConvergence {
        /// Smallest acceptable observed order.
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
    },
    /// Relative energy inequality of a run against a finer reference run.
    RelenergyAudit,
    /// Relative energy of coarse runs against a fine run under refinement.
    WeakStrong,
}

struct Ctx {
    cfg: RunConfig,
    quiet: bool,
}

impl Ctx {
    fn info(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }

    fn out_file(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.cfg.out_dir)?;
        Ok(self.cfg.out_dir.join(name))
    }

    /// Scheme settings with a snapshot cadence, as the trajectory comparisons need one.
    fn cadence_settings(&self) -> SchemeSettings {
        let mut s = self.cfg.settings.clone();
        if s.snapshot_interval.is_none() {
            s.snapshot_interval = Some(s.t_end / 40.0);
        }
        s
    }
}

fn verdict(name: &str, pass: bool, details: &str) -> bool {
    println!("{} {name}: {details}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn load(cli: &Cli) -> Result<Ctx> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::InvalidParameter(format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(Ctx { cfg, quiet: cli.quiet })
}

fn simulate(ctx: &Ctx) -> Result<bool> {
    let cfg = &ctx.cfg;
    let grid = cfg.grid()?;
    let initial = build_initial(&cfg.initial, grid)?;
    fs::write(ctx.out_file("config.cfg")?, cfg.to_text())?;
    let mut csv =
        if cfg.audits.energy_csv { Some(TableWriter::create(&ctx.out_file("energy.csv")?, &EnergyLedger::CSV_HEADER)?) } else { None };
    let result = run_with_observer(&initial, &cfg.params, &Forcing::none(), &cfg.settings, |s| {
        if let Some(w) = csv.as_mut() {
            w.row(&energy_ledger(s, &cfg.params)?.csv_row())?;
        }
        Ok(())
    });
    if let Some(w) = csv {
        w.finish()?;
    }
    let traj = match result {
        Ok(t) => t,
        Err(failure) => {
            eprintln!("run stopped at t = {}: {}", failure.partial.last().t, failure.error);
            return Err(failure.error);
        }
    };
    if cfg.audits.write_snapshots {
        let dir = ctx.out_file("snapshots")?;
        fs::create_dir_all(&dir)?;
        for (k, s) in traj.snapshots.iter().enumerate() {
            write_snapshot(s, &dir.join(format!("snap_{k:05}.vnsf")))?;
        }
    }
    let (first, last) = (&traj.snapshots[0], traj.last());
    let (e0, e1) = (energy_ledger(first, &cfg.params)?.e, energy_ledger(last, &cfg.params)?.e);
    let d = &traj.diagnostics;
    ctx.info(format!("steps {} to t = {}; dt in [{:e}, {:e}]", d.steps, last.t, d.dt_min, d.dt_max));
    ctx.info(format!("mass {:e} -> {:e} (relative change {:e})", first.mass(), last.mass(), (last.mass() - first.mass()) / first.mass()));
    ctx.info(format!("energy {e0:e} -> {e1:e}; min rho {:e}, min c {:e}", d.min_rho, d.min_c));
    let cl1 = c_l1_audit(&traj)?;
    ctx.info(format!("c L1 bound: max excess {:e} (tolerance {:e})", cl1.max_excess, cl1.tolerance));
    ctx.info(format!("wrote {} snapshots to {}", if cfg.audits.write_snapshots { traj.snapshots.len() } else { 0 }, cfg.out_dir.display()));
    Ok(true)
}

fn energy_audit(ctx: &Ctx) -> Result<bool> {
    let cfg = &ctx.cfg;
    let initial = build_initial(&cfg.initial, cfg.grid()?)?;
    let audit = energy_audit_refinement(&initial, &cfg.params, &cfg.settings, &cfg.audits.dt_scales, cfg.audits.fit_tolerance)?;
    let mut rows = Vec::new();
    ctx.info("dt_scale  intervals  C_fit  max_defect  E(0)  E(t_end)");
    for ((scale, rep), c) in audit.dt_scales.iter().zip(&audit.reports).zip(&audit.c_fits) {
        ctx.info(format!(
            "{scale}  {}  {c:.6e}  {:.3e}  {:.9e}  {:.9e}",
            rep.rows.len(),
            rep.max_positive_defect,
            rep.energy_start,
            rep.energy_end
        ));
        rows.extend(rep.rows.iter().map(|r| [*scale, r.t, r.dt, r.defect]));
    }
    write_table(&ctx.out_file("energy_audit.csv")?, &["dt_scale", "t", "dt", "defect"], &rows)?;
    let rise = audit.reports.iter().map(|r| r.energy_end - r.energy_start).fold(f64::NEG_INFINITY, f64::max);
    Ok(verdict(
        "energy-audit",
        audit.pass,
        &format!("C_fit spread = {:.3e} (tolerance {:.3e}); max E(t_end) - E(0) = {rise:.3e} (tolerance 0)", audit.spread, audit.tolerance),
    ))
}

fn sugiyama_check(ctx: &Ctx) -> Result<bool> {
    let cfg = &ctx.cfg;
    let gamma = cfg.params.gamma;
    let d = if cfg.three_d { 3 } else { cfg.dim.max(2) };
    let ex = match sugiyama_exponents(gamma, d) {
        Ok(ex) => ex,
        Err(e) => return Ok(verdict("sugiyama-check", false, &e.to_string())),
    };
    ctx.info(format!("m = {gamma}, d = {d}: theta = {}, C2 = {}", ex.theta, ex.c2));
    let spec = EnsembleSpec { count: cfg.audits.ensemble, seed: cfg.settings.seed, ..EnsembleSpec::default() };
    let (kappa, xi) = (1.0 / (2.0 * (gamma - 1.0)), 0.25);
    let r = sugiyama_ensemble(cfg.grid()?, &spec, gamma, d, kappa, xi, ENSEMBLE_DRIFT_TOLERANCE)?;
    ctx.info(format!("sup required C1: {:.9e} ({}), {:.9e} ({})", r.sup_coarse, r.coarse_n, r.sup_fine, 2 * r.coarse_n));
    Ok(verdict(
        "sugiyama-check",
        r.pass,
        &format!("drift = {:.3e} (tolerance {:.3e}); sup C1 = {:.6e}", r.drift, r.tolerance, r.sup_coarse),
    ))
}

fn mms(ctx: &Ctx, threshold: f64) -> Result<bool> {
    let cfg = &ctx.cfg;
    let case = match cfg.audits.mms_case {
        MmsCase::Standard => Manufactured::standard(cfg.dim),
        MmsCase::Travelling if cfg.dim == 2 => Manufactured::travelling(),
        MmsCase::Travelling => return Err(Error::InvalidParameter("the travelling case is two-dimensional".into())),
    }
    .on_box(cfg.lx, cfg.ly);
    let rep = mms_convergence(&case, &cfg.params, &cfg.settings, &cfg.audits.mms_levels)?;
    let mut rows = Vec::new();
    ctx.info("n  h  L2_error  order");
    for (k, r) in rep.rows.iter().enumerate() {
        let order = if k == 0 { f64::NAN } else { rep.orders[k - 1] };
        let shown = if k == 0 { "-".to_string() } else { format!("{order:.3}") };
        ctx.info(format!("{}  {:.6e}  {:.6e}  {shown}", r.n, r.h, r.error));
        rows.push([r.h, r.error, order]);
    }
    write_table(&ctx.out_file("mms.csv")?, &["h", "error", "order"], &rows)?;
    Ok(verdict(
        "mms-convergence",
        rep.min_order >= threshold,
        &format!("min observed order = {:.4} (threshold {threshold})", rep.min_order),
    ))
}

fn relenergy(ctx: &Ctx) -> Result<bool> {
    let cfg = &ctx.cfg;
    let settings = ctx.cadence_settings();
    let weak_grid = cfg.grid()?;
    let f = cfg.audits.strong_factor;
    let strong_grid = Grid::new(cfg.dim, cfg.nx * f, cfg.ny * f, cfg.lx, cfg.ly, cfg.bc)?;
    let strong_init = build_initial(&cfg.initial, strong_grid)?;
    let weak_init = strong_init.restrict(f)?;
    debug_assert_eq!(*weak_init.grid(), weak_grid);
    let strong = run(&strong_init, &cfg.params, &Forcing::none(), &settings)?;
    let weak = run(&weak_init, &cfg.params, &Forcing::none(), &settings)?;
    let a = relenergy_cadence_audit(&weak, &strong, &cfg.params, cfg.audits.quadrature, cfg.audits.fit_tolerance)?;
    ctx.info(format!("model at cadence dt: C = {:.3e}, C' = {:.3e}", a.model_coarse.c_dt, a.model_coarse.c_res));
    ctx.info(format!("model at cadence dt/2: C = {:.3e}, C' = {:.3e}", a.model_fine.c_dt, a.model_fine.c_res));
    ctx.info("t  rel_E  lhs  rhs  defect  tolerance");
    let mut rows = Vec::new();
    for (r, l) in a.fine.rows.iter().zip(&a.fine.ledgers) {
        let tol = a.model_coarse.tolerance(r) * (1.0 + a.tolerance);
        ctx.info(format!("{:.5}  {:.4e}  {:+.4e}  {:+.4e}  {:+.4e}  {:.4e}", r.t, l.rel_e, r.lhs, r.rhs, r.defect, tol));
        rows.push([r.t, r.dt, l.rel_e, r.lhs, r.rhs, r.defect, r.residual, tol]);
    }
    write_table(&ctx.out_file("relenergy.csv")?, &["t", "dt", "rel_E", "lhs", "rhs", "defect", "residual", "tolerance"], &rows)?;
    Ok(verdict(
        "relenergy-audit",
        a.pass,
        &format!(
            "max defect / tolerance = {:.4} (tolerance 1); model spread = {:.3e} (tolerance {:.3e})",
            a.worst_ratio, a.spread, a.tolerance
        ),
    ))
}

fn weak_strong(ctx: &Ctx) -> Result<bool> {
    let cfg = &ctx.cfg;
    let settings = ctx.cadence_settings();
    let fine = cfg.grid()?.with_resolution(cfg.audits.fine)?;
    let initial = build_initial(&cfg.initial, fine)?;
    let rep = weak_strong_diagnostic(&initial, &cfg.params, &settings, &cfg.audits.coarse, cfg.audits.min_factor)?;
    ctx.info(format!("fine resolution {}", rep.fine_n));
    ctx.info("n  sup_rel_H  A  B");
    let mut rows = Vec::new();
    for l in &rep.levels {
        ctx.info(format!("{}  {:.6e}  {:.4e}  {:.4}", l.n, l.sup_rel_h, l.fit_a, l.fit_b));
        rows.push([l.n as f64, l.sup_rel_h, l.fit_a, l.fit_b]);
    }
    write_table(&ctx.out_file("weak_strong.csv")?, &["n", "sup_rel_H", "A", "B"], &rows)?;
    Ok(verdict(
        "weak-strong",
        rep.pass,
        &format!(
            "min ratio of sup rel_H per halving = {:.4} (tolerance {}); ratios {:?}",
            rep.min_ratio, cfg.audits.min_factor, rep.ratios
        ),
    ))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = load(&cli).and_then(|ctx| match &cli.command {
        Command::Simulate => simulate(&ctx),
        Command::EnergyAudit => energy_audit(&ctx),
        Command::SugiyamaCheck => sugiyama_check(&ctx),
        Command::MmsConvergence { threshold } => mms(&ctx, *threshold),
        Command::RelenergyAudit => relenergy(&ctx),
        Command::WeakStrong => weak_strong(&ctx),
    });
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
