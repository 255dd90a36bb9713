//! Flat `key = value` run configuration; paths are relative to the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use wavekernel::io::{self, KeyValues};
use wavekernel::linalg::{CMatrix, C64};
use wavekernel::{Bump, Control, Error, Result};

const KEYS: &[&str] = &[
    "potential",
    "T",
    "h",
    "N",
    "tol",
    "seed",
    "trials",
    "kernel",
    "snapshot",
    "control",
    "control.start",
    "control.end",
    "control.coeffs",
    "control.samples",
    "control.support_start",
    "fd.nx",
    "fd.cfl",
    "weyl.cutoff",
    "weyl.c",
    "quotient.t",
    "quotient.levels",
    "validate.goursat_edge",
    "validate.oracle_rel_l2",
    "validate.roundtrip",
    "validate.quotient_slope",
    "validate.cond_max",
];

#[derive(Debug, Clone)]
pub enum ControlSpec {
    Bump { start: f64, end: f64, coeffs: Vec<C64> },
    Samples { path: PathBuf, support_start: f64 },
}

#[derive(Debug, Clone)]
pub struct Thresholds {
    pub goursat_edge: f64,
    pub oracle_rel_l2: f64,
    pub roundtrip: f64,
    pub quotient_slope: f64,
    pub cond_max: f64,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub raw: KeyValues,
    pub potential: PathBuf,
    pub horizon: f64,
    pub h: f64,
    pub intervals: usize,
    pub tol: f64,
    pub seed: u64,
    pub trials: usize,
    pub kernel: Option<PathBuf>,
    pub snapshot: Option<PathBuf>,
    pub control: Option<ControlSpec>,
    pub fd_nx: usize,
    pub fd_cfl: f64,
    pub weyl: Option<(f64, CMatrix)>,
    pub quotient_t: f64,
    pub quotient_levels: usize,
    pub thresholds: Thresholds,
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Parse(format!("`{key}` must be positive, got {v}")))
    }
}

fn count(kv: &KeyValues, key: &str, default: Option<usize>) -> Result<usize> {
    match (kv.get(key), default) {
        (Some(s), _) => match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Parse(format!("`{key}` must be a positive integer, got `{s}`"))),
        },
        (None, Some(d)) => Ok(d),
        (None, None) => Err(Error::Parse(format!("missing key `{key}`"))),
    }
}

fn real(kv: &KeyValues, key: &str, default: Option<f64>) -> Result<f64> {
    match (kv.get(key), default) {
        (Some(s), _) => io::parse_f64(key, s),
        (None, Some(d)) => Ok(d),
        (None, None) => Err(Error::Parse(format!("missing key `{key}`"))),
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let kv = io::parse_key_values(text)?;
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Parse(format!("unknown config key `{k}`")));
        }
        let path = |key: &str| kv.get(key).map(|v| io::resolve(base, v));
        let potential = path("potential").ok_or_else(|| Error::Parse("missing key `potential`".into()))?;
        let horizon = positive("T", real(&kv, "T", None)?)?;
        let h = positive("h", real(&kv, "h", Some(horizon / 100.0))?)?;
        let intervals = count(&kv, "N", Some(200))?;
        let tol = positive("tol", real(&kv, "tol", Some(1e-10))?)?;
        let seed = match kv.get("seed") {
            Some(s) => s
                .parse()
                .map_err(|_| Error::Parse(format!("`seed` must be a nonnegative integer, got `{s}`")))?,
            None => 0,
        };
        let control = match kv.get("control").map(String::as_str) {
            None => None,
            Some("bump") => {
                let start = real(&kv, "control.start", Some(0.1 * horizon))?;
                let end = real(&kv, "control.end", Some(0.9 * horizon))?;
                let coeffs = match kv.get("control.coeffs") {
                    Some(s) => io::parse_complex_list("control.coeffs", s)?,
                    None => vec![C64::new(1.0, 0.0)],
                };
                Some(ControlSpec::Bump { start, end, coeffs })
            }
            Some("samples") => Some(ControlSpec::Samples {
                path: path("control.samples").ok_or_else(|| Error::Parse("missing key `control.samples`".into()))?,
                support_start: positive("control.support_start", real(&kv, "control.support_start", None)?)?,
            }),
            Some(other) => return Err(Error::Parse(format!("unknown control kind `{other}`"))),
        };
        let weyl = match kv.get("weyl.cutoff") {
            Some(s) => {
                let cutoff = positive("weyl.cutoff", io::parse_f64("weyl.cutoff", s)?)?;
                let c = kv
                    .get("weyl.c")
                    .ok_or_else(|| Error::Parse("missing key `weyl.c`".into()))?;
                Some((cutoff, io::parse_matrix("weyl.c", c)?))
            }
            None => None,
        };
        let quotient_t = positive("quotient.t", real(&kv, "quotient.t", Some(0.8 * horizon))?)?;
        if quotient_t >= horizon {
            return Err(Error::Parse(format!("`quotient.t` must lie below T = {horizon}")));
        }
        let thresholds = Thresholds {
            goursat_edge: real(&kv, "validate.goursat_edge", Some(1e-4))?,
            oracle_rel_l2: real(&kv, "validate.oracle_rel_l2", Some(1e-3))?,
            roundtrip: real(&kv, "validate.roundtrip", Some(1e-10))?,
            quotient_slope: real(&kv, "validate.quotient_slope", Some(0.9))?,
            cond_max: real(&kv, "validate.cond_max", Some(1e6))?,
        };
        Ok(Self {
            potential,
            horizon,
            h,
            intervals,
            tol,
            seed,
            trials: count(&kv, "trials", Some(100))?,
            kernel: path("kernel"),
            snapshot: path("snapshot"),
            control,
            fd_nx: count(&kv, "fd.nx", Some(intervals.max(16)))?,
            fd_cfl: real(&kv, "fd.cfl", Some(1.0))?,
            weyl,
            quotient_t,
            quotient_levels: count(&kv, "quotient.levels", Some(4))?,
            thresholds,
            raw: kv,
        })
    }

    pub fn build_control(&self, dim: usize) -> Result<Control> {
        match &self.control {
            None => Err(Error::Parse("missing key `control`".into())),
            Some(ControlSpec::Bump { start, end, coeffs }) => {
                if coeffs.len() != dim {
                    return Err(Error::Parse(format!(
                        "`control.coeffs` has {} entries, the potential is {dim} x {dim}",
                        coeffs.len()
                    )));
                }
                Control::bump(self.horizon, Bump::new(*start, *end)?, coeffs.clone())
            }
            Some(ControlSpec::Samples { path, support_start }) => {
                let g = io::read_sampled(std::fs::File::open(path)?)?;
                if g.dim != dim {
                    return Err(Error::Parse(format!("control samples have dimension {}, expected {dim}", g.dim)));
                }
                if (g.horizon - self.horizon).abs() > 1e-12 * self.horizon {
                    return Err(Error::HorizonMismatch(g.horizon, self.horizon));
                }
                let rows: Vec<Vec<C64>> = (0..=g.intervals()).map(|k| g.at(k).to_vec()).collect();
                Control::from_samples(self.horizon, &rows, *support_start)
            }
        }
    }

    /// Every key with its effective value, defaults included.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut out = self.raw.clone();
        let mut put = |k: &str, v: String| {
            out.entry(k.to_string()).or_insert(v);
        };
        put("T", format!("{}", self.horizon));
        put("h", format!("{}", self.h));
        put("N", format!("{}", self.intervals));
        put("tol", format!("{}", self.tol));
        put("trials", format!("{}", self.trials));
        put("fd.nx", format!("{}", self.fd_nx));
        put("fd.cfl", format!("{}", self.fd_cfl));
        put("quotient.t", format!("{}", self.quotient_t));
        put("quotient.levels", format!("{}", self.quotient_levels));
        let t = &self.thresholds;
        put("validate.goursat_edge", format!("{}", t.goursat_edge));
        put("validate.oracle_rel_l2", format!("{}", t.oracle_rel_l2));
        put("validate.roundtrip", format!("{}", t.roundtrip));
        put("validate.quotient_slope", format!("{}", t.quotient_slope));
        put("validate.cond_max", format!("{}", t.cond_max));
        out.insert("seed".into(), format!("{}", self.seed));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_paths() {
        let c = RunConfig::parse("potential = q.txt\nT = 2\n", Path::new("/cfg")).unwrap();
        assert_eq!(c.potential, PathBuf::from("/cfg/q.txt"));
        assert_eq!((c.h, c.intervals, c.tol, c.seed), (0.02, 200, 1e-10, 0));
        assert!(c.control.is_none());
        assert_eq!(c.resolved()["N"], "200");
    }

    #[test]
    fn rejects_bad_values() {
        let base = Path::new(".");
        assert!(RunConfig::parse("potential = q\nT = -1", base).is_err());
        assert!(RunConfig::parse("potential = q\nT = 1\nN = 0", base).is_err());
        assert!(RunConfig::parse("potential = q\nT = 1\ncolour = red", base).is_err());
        assert!(RunConfig::parse("T = 1", base).is_err());
        assert!(RunConfig::parse("potential = q\nT = 1\ncontrol = wiggle", base).is_err());
    }

    #[test]
    fn bump_control() {
        let c = RunConfig::parse(
            "potential = q\nT = 1\ncontrol = bump\ncontrol.start = 0.2\ncontrol.coeffs = 1 0.5-2i",
            Path::new("."),
        )
        .unwrap();
        let f = c.build_control(2).unwrap();
        assert!((f.value(0.55)[1] - C64::new(0.5, -2.0)).norm() < 1e-12);
        assert!(c.build_control(1).is_err());
    }
}
