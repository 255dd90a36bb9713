use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use wavekernel::boundary_map::weyl_solution;
use wavekernel::control_op::{
    apply_w, build_volterra, certify_h2_bound_with, condition_estimate, invert_w, reflect, CertifyOptions,
    SampledFunction,
};
use wavekernel::io::{self, KernelSummary};
use wavekernel::kernel::{check_goursat, kernel_constants_with, KernelDerivatives, Lattice};
use wavekernel::oracle::{compare, fd_solve, FdConfig};
use wavekernel::propagator::{difference_quotient_test, propagate_with};
use wavekernel::{solve_goursat, Bump, Control, Error, KernelField, PotentialGrid};

use crate::config::RunConfig;

/// Outcome of a command that ran to completion but may have failed checks.
pub enum Status {
    Ok,
    ValidationFailed(Vec<String>),
}

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    outputs: Vec<String>,
}

impl Context {
    pub fn new(cfg: RunConfig, out: PathBuf) -> Self {
        Self {
            cfg,
            out,
            outputs: Vec::new(),
        }
    }

    fn create(&mut self, name: &str) -> wavekernel::Result<BufWriter<File>> {
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_json(&mut self, name: &str, value: &Value) -> wavekernel::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.outputs.push(name.to_string());
        std::fs::write(self.out.join(name), text)?;
        Ok(())
    }

    pub fn write_manifest(&mut self, command: &str) -> wavekernel::Result<()> {
        let manifest = json!({
            "tool": "wavekernel",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "config": self.cfg.resolved(),
            "outputs": self.outputs,
        });
        self.write_json("manifest.json", &manifest)
    }

    fn potential(&self) -> wavekernel::Result<PotentialGrid> {
        PotentialGrid::build(&io::read_potential_spec(&self.cfg.potential)?)
    }

    fn control(&self, dim: usize) -> wavekernel::Result<Control> {
        self.cfg.build_control(dim)
    }

    /// The configured kernel dump, or a fresh solve when none is configured.
    fn kernel(&self, p: &PotentialGrid) -> wavekernel::Result<KernelField> {
        let cfg = &self.cfg;
        let Some(path) = &cfg.kernel else {
            return solve_goursat(p, cfg.horizon, cfg.h, cfg.tol);
        };
        let summary_path = path.with_extension("json");
        let summary: KernelSummary = serde_json::from_str(&std::fs::read_to_string(&summary_path).map_err(|e| {
            Error::Parse(format!("cannot read kernel summary {}: {e}", summary_path.display()))
        })?)?;
        let step = Lattice::for_horizon(cfg.horizon, cfg.h)?.step();
        if summary.horizon != cfg.horizon || (summary.h - step).abs() > 1e-12 * step || summary.n != p.dim() {
            return Err(Error::Parse(format!(
                "kernel dump (T = {}, h = {}, n = {}) does not match the configuration (T = {}, h = {}, n = {})",
                summary.horizon,
                summary.h,
                summary.n,
                cfg.horizon,
                cfg.h,
                p.dim()
            )));
        }
        let file = File::open(path)
            .map_err(|e| Error::Parse(format!("cannot read kernel dump {}: {e}", path.display())))?;
        let values = io::read_kernel_dump(file, &summary)?;
        KernelField::from_values(p, cfg.horizon, values, summary.iterations, summary.tail_bound)
    }
}

pub fn kernel(ctx: &mut Context) -> wavekernel::Result<Status> {
    let p = ctx.potential()?;
    let field = solve_goursat(&p, ctx.cfg.horizon, ctx.cfg.h, ctx.cfg.tol)?;
    let derivs = KernelDerivatives::compute(&p, &field)?;
    let constants = kernel_constants_with(&p, &derivs)?;
    io::write_kernel_dump(ctx.create("kernel.csv")?, &field)?;
    let summary = serde_json::to_value(KernelSummary::new(&field, &constants))?;
    ctx.write_json("kernel.json", &summary)?;
    Ok(Status::Ok)
}

pub fn propagate(ctx: &mut Context) -> wavekernel::Result<Status> {
    let p = ctx.potential()?;
    let field = ctx.kernel(&p)?;
    let f = ctx.control(p.dim())?;
    let derivs = KernelDerivatives::compute(&p, &field)?;
    let snap = propagate_with(&p, &derivs, &f, ctx.cfg.horizon, ctx.cfg.intervals)?;
    io::write_snapshot(ctx.create("snapshot.csv")?, &snap)?;
    Ok(Status::Ok)
}

pub fn apply(ctx: &mut Context) -> wavekernel::Result<Status> {
    let p = ctx.potential()?;
    let field = ctx.kernel(&p)?;
    let f = ctx.control(p.dim())?;
    let u = apply_w(&field, &f, ctx.cfg.horizon, ctx.cfg.intervals)?;
    io::write_sampled(ctx.create("applied.csv")?, &u)?;
    if let Some((cutoff, c)) = ctx.cfg.weyl.clone() {
        let k = weyl_solution(&p, cutoff, &c)?;
        io::write_weyl(ctx.create("weyl.csv")?, &k)?;
    }
    Ok(Status::Ok)
}

fn relative_l2(a: &[wavekernel::linalg::C64], b: &[wavekernel::linalg::C64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let n: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    if n > 0.0 {
        (d / n).sqrt()
    } else {
        d.sqrt()
    }
}

pub fn invert(ctx: &mut Context) -> wavekernel::Result<Status> {
    let p = ctx.potential()?;
    let cfg = &ctx.cfg;
    let path = cfg
        .snapshot
        .clone()
        .ok_or_else(|| Error::Parse("missing key `snapshot`".into()))?;
    let snap = io::read_snapshot(
        File::open(&path).map_err(|e| Error::Parse(format!("cannot read snapshot {}: {e}", path.display())))?,
    )?;
    if snap.intervals() != cfg.intervals || snap.dim != p.dim() {
        return Err(Error::Parse(format!(
            "snapshot has {} intervals of dimension {}, the configuration expects {} of dimension {}",
            snap.intervals(),
            snap.dim,
            cfg.intervals,
            p.dim()
        )));
    }
    if (snap.horizon - cfg.horizon).abs() > 1e-12 * cfg.horizon {
        return Err(Error::HorizonMismatch(snap.horizon, cfg.horizon));
    }
    let field = ctx.kernel(&p)?;
    let u = SampledFunction::new(cfg.horizon, p.dim(), snap.u.clone())?;
    let sys = build_volterra(&field, cfg.horizon, cfg.intervals)?;
    let g = invert_w(&sys, &u)?;
    let residual = relative_l2(&sys.apply(&reflect(&g))?.values, &u.values);
    let error = match &cfg.control {
        Some(_) => {
            let f = ctx.control(p.dim())?;
            let exact = SampledFunction::from_control(&f, cfg.horizon, cfg.intervals);
            Value::from(relative_l2(&g.values, &exact.values))
        }
        None => Value::Null,
    };
    io::write_sampled(ctx.create("recovered.csv")?, &g)?;
    ctx.write_json(
        "invert.json",
        &json!({ "intervals": g.intervals(), "residual": residual, "relative_error": error }),
    )?;
    Ok(Status::Ok)
}

pub fn bounds(ctx: &mut Context) -> wavekernel::Result<Status> {
    let p = ctx.potential()?;
    let field = ctx.kernel(&p)?;
    let derivs = KernelDerivatives::compute(&p, &field)?;
    let opts = CertifyOptions {
        trials: ctx.cfg.trials,
        seed: ctx.cfg.seed,
        intervals: None,
    };
    let report = certify_h2_bound_with(&p, &derivs, ctx.cfg.horizon, opts)?;
    let mut value = serde_json::to_value(&report)?;
    value["holds"] = Value::from(report.holds());
    ctx.write_json("bounds.json", &value)?;
    Ok(Status::Ok)
}

pub fn oracle(ctx: &mut Context) -> wavekernel::Result<Status> {
    let p = ctx.potential()?;
    let field = ctx.kernel(&p)?;
    let f = ctx.control(p.dim())?;
    let cfg = &ctx.cfg;
    let fd = fd_solve(
        &p,
        &f,
        FdConfig {
            nx: cfg.fd_nx,
            cfl: cfg.fd_cfl,
            horizon: cfg.horizon,
        },
    )?;
    let derivs = KernelDerivatives::compute(&p, &field)?;
    let snap = propagate_with(&p, &derivs, &f, cfg.horizon, cfg.intervals)?;
    let figures = compare(&snap, &fd)?;
    io::write_snapshot(ctx.create("fd.csv")?, &fd)?;
    ctx.write_json("oracle.json", &serde_json::to_value(figures)?)?;
    Ok(Status::Ok)
}

struct Check {
    name: &'static str,
    value: f64,
    threshold: f64,
    pass: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    fn at_least(name: &'static str, value: f64, threshold: f64) -> Self {
        Self {
            name,
            value,
            threshold,
            pass: value >= threshold,
        }
    }

    fn json(&self) -> Value {
        json!({ "name": self.name, "value": self.value, "threshold": self.threshold, "pass": self.pass })
    }
}

pub fn validate(ctx: &mut Context) -> wavekernel::Result<Status> {
    let p = ctx.potential()?;
    let field = ctx.kernel(&p)?;
    let cfg = &ctx.cfg;
    let (horizon, intervals) = (cfg.horizon, cfg.intervals);
    let f = match cfg.control {
        Some(_) => ctx.control(p.dim())?,
        None => {
            let ones = vec![wavekernel::linalg::C64::new(1.0, 0.0); p.dim()];
            Control::bump(horizon, Bump::new(0.1 * horizon, 0.9 * horizon)?, ones)?
        }
    };
    let derivs = KernelDerivatives::compute(&p, &field)?;
    let t = &cfg.thresholds;

    let goursat = check_goursat(&p, &field)?;

    let snap = propagate_with(&p, &derivs, &f, horizon, intervals)?;
    let fd = fd_solve(
        &p,
        &f,
        FdConfig {
            nx: cfg.fd_nx,
            cfl: cfg.fd_cfl,
            horizon,
        },
    )?;
    let figures = compare(&snap, &fd)?;

    let sys = build_volterra(&field, horizon, intervals)?;
    let u = apply_w(&field, &f, horizon, intervals)?;
    let back = invert_w(&sys, &u)?;
    let roundtrip = relative_l2(&back.values, &SampledFunction::from_control(&f, horizon, intervals).values);
    let condition = condition_estimate(&sys)?;

    let opts = CertifyOptions {
        trials: cfg.trials,
        seed: cfg.seed,
        intervals: None,
    };
    let report = certify_h2_bound_with(&p, &derivs, horizon, opts)?;

    let span = horizon - cfg.quotient_t;
    let hs: Vec<f64> = (0..cfg.quotient_levels).map(|k| span / 2f64.powi(k as i32)).collect();
    let quotients = difference_quotient_test(&field, &f, cfg.quotient_t, &hs)?;

    let checks = [
        Check::at_most("goursat_diagonal", goursat.diagonal, 0.0),
        Check::at_most("goursat_edge", goursat.edge, t.goursat_edge),
        Check::at_most("oracle_rel_l2", figures.rel_l2, t.oracle_rel_l2),
        Check::at_most("roundtrip", roundtrip, t.roundtrip),
        Check::at_most("h2_ratio", report.empirical_ratio, report.composite * report.embedding),
        Check::at_least("h2_estimates", if report.holds() { 1.0 } else { 0.0 }, 1.0),
        Check::at_least("quotient_slope", quotients.slope, t.quotient_slope),
        Check::at_most("cond", condition.cond, t.cond_max),
    ];
    let failed: Vec<String> = checks.iter().filter(|c| !c.pass).map(|c| c.name.to_string()).collect();
    let value = json!({
        "pass": failed.is_empty(),
        "checks": checks.iter().map(Check::json).collect::<Vec<_>>(),
        "goursat": goursat,
        "oracle": figures,
        "roundtrip": roundtrip,
        "condition": condition,
        "certification": report,
        "quotients": quotients,
    });
    ctx.write_json("validate.json", &value)?;
    if failed.is_empty() {
        Ok(Status::Ok)
    } else {
        Ok(Status::ValidationFailed(failed))
    }
}

pub fn ensure_out_dir(dir: &Path) -> wavekernel::Result<()> {
    std::fs::create_dir_all(dir)?;
    let probe = dir.join(".wavekernel-write-test");
    std::fs::write(&probe, b"")?;
    std::fs::remove_file(&probe)?;
    Ok(())
}
