//! Text formats: `key = value` files, potential specs, and CSV dumps of
//! kernels, snapshots, controls and decaying solutions.
//!
//! Floats are written with the shortest representation that parses back to
//! the same value, so every dump round-trips exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::boundary_map::WeylSolution;
use crate::control_op::SampledFunction;
use crate::error::{Error, Result};
use crate::kernel::{KernelConstants, KernelField, Lattice, NodeField};
use crate::linalg::{CMatrix, C64};
use crate::potential::{PotentialSpec, Preset};
use crate::propagator::WaveSnapshot;

/// Ordered `key = value` pairs; `#` starts a comment, blank lines are ignored.
pub type KeyValues = BTreeMap<String, String>;

pub fn parse_key_values(text: &str) -> Result<KeyValues> {
    let mut out = KeyValues::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`, got `{line}`", no + 1)))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", no + 1)));
        }
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Parse(format!("line {}: duplicate key `{key}`", no + 1)));
        }
    }
    Ok(out)
}

pub fn parse_f64(key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("`{key}`: `{value}` is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("`{key}`: `{value}` is not finite")));
    }
    Ok(v)
}

pub fn parse_complex(key: &str, token: &str) -> Result<C64> {
    token
        .trim()
        .parse::<C64>()
        .map_err(|_| Error::Parse(format!("`{key}`: `{token}` is not a complex number")))
}

/// Whitespace-separated complex entries.
pub fn parse_complex_list(key: &str, value: &str) -> Result<Vec<C64>> {
    value.split_whitespace().map(|t| parse_complex(key, t)).collect()
}

/// Row-major matrix with rows separated by `;`.
pub fn parse_matrix(key: &str, value: &str) -> Result<CMatrix> {
    let rows: Vec<Vec<C64>> = value
        .split(';')
        .map(|r| parse_complex_list(key, r))
        .collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse(format!("`{key}`: matrix must be square with `;`-separated rows")));
    }
    Ok(CMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

fn require<'a>(kv: &'a KeyValues, key: &str) -> Result<&'a str> {
    kv.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Parse(format!("missing key `{key}`")))
}

fn reject_unknown(kv: &KeyValues, allowed: &[&str]) -> Result<()> {
    match kv.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::Parse(format!("unknown key `{k}`"))),
        None => Ok(()),
    }
}

/// Potential spec file:
///
/// ```text
/// kind = zero | constant | preset | sampled
/// dimension = 2            # required for zero, checked otherwise
/// value = 1 0.5i; -0.5i 2  # constant
/// preset = coupled         # preset
/// samples = q.csv          # sampled, relative to the spec file
/// x_max = 2
/// step = 0.001
/// ```
pub fn parse_potential_spec(text: &str, base: &Path) -> Result<PotentialSpec> {
    let kv = parse_key_values(text)?;
    let spec = potential_from_keys(&kv, base)?;
    if let Some(d) = kv.get("dimension") {
        let d: usize = d
            .parse()
            .map_err(|_| Error::Parse("`dimension` must be a positive integer".into()))?;
        let actual = spec_dimension(&spec);
        if d != actual {
            return Err(Error::Parse(format!("`dimension` = {d} but the potential is {actual} x {actual}")));
        }
    }
    Ok(spec)
}

fn spec_dimension(spec: &PotentialSpec) -> usize {
    match spec {
        PotentialSpec::Zero { n, .. } => *n,
        PotentialSpec::Constant { value, .. } => value.nrows(),
        PotentialSpec::Sampled { values, .. } => values.first().map_or(0, |m| m.nrows()),
        PotentialSpec::Preset { preset, .. } => preset.dimension(),
    }
}

fn potential_from_keys(kv: &KeyValues, base: &Path) -> Result<PotentialSpec> {
    let kind = require(&kv, "kind")?;
    let grid = |kv: &KeyValues| -> Result<(f64, f64)> {
        let x_max = parse_f64("x_max", require(kv, "x_max")?)?;
        let step = kv.get("step").map(|s| parse_f64("step", s)).transpose()?.unwrap_or(1e-3);
        Ok((x_max, step))
    };
    match kind {
        "zero" => {
            reject_unknown(&kv, &["kind", "dimension", "x_max", "step"])?;
            let n: usize = require(&kv, "dimension")?
                .parse()
                .map_err(|_| Error::Parse("`dimension` must be a positive integer".into()))?;
            if n == 0 {
                return Err(Error::Parse("`dimension` must be a positive integer".into()));
            }
            let (x_max, step) = grid(&kv)?;
            Ok(PotentialSpec::Zero { n, x_max, step })
        }
        "constant" => {
            reject_unknown(&kv, &["kind", "dimension", "value", "x_max", "step"])?;
            let value = parse_matrix("value", require(&kv, "value")?)?;
            let (x_max, step) = grid(&kv)?;
            Ok(PotentialSpec::Constant { value, x_max, step })
        }
        "preset" => {
            reject_unknown(&kv, &["kind", "dimension", "preset", "x_max", "step"])?;
            let name = require(&kv, "preset")?;
            let preset = Preset::parse(name).ok_or_else(|| Error::Parse(format!("unknown preset `{name}`")))?;
            let (x_max, step) = grid(&kv)?;
            Ok(PotentialSpec::Preset { preset, x_max, step })
        }
        "sampled" => {
            reject_unknown(&kv, &["kind", "dimension", "samples"])?;
            let path = resolve(base, require(&kv, "samples")?);
            let (xs, values) = read_matrix_samples(std::fs::File::open(&path)?)?;
            Ok(PotentialSpec::Sampled { xs, values })
        }
        other => Err(Error::Parse(format!("unknown potential kind `{other}`"))),
    }
}

pub fn read_potential_spec(path: &Path) -> Result<PotentialSpec> {
    let text = std::fs::read_to_string(path)?;
    parse_potential_spec(&text, path.parent().unwrap_or(Path::new(".")))
}

/// `base.join(rel)` unless `rel` is absolute.
pub fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn complex_header(prefix: &str, count: usize) -> Vec<String> {
    (1..=count)
        .flat_map(|k| [format!("{prefix}{k}_re"), format!("{prefix}{k}_im")])
        .collect()
}

fn push_complex(record: &mut Vec<String>, values: &[C64]) {
    for z in values {
        record.push(fmt(z.re));
        record.push(fmt(z.im));
    }
}

fn parse_cell(record: &csv::StringRecord, k: usize, line: usize) -> Result<f64> {
    let cell = record
        .get(k)
        .ok_or_else(|| Error::Parse(format!("row {line}: missing column {}", k + 1)))?;
    cell.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("row {line}: `{cell}` is not a number")))
}

/// Rows of `(abscissa, complex entries)` from a CSV with a header and `2 width + 1` columns.
fn read_complex_rows<R: Read>(reader: R, width: Option<usize>) -> Result<(Vec<f64>, Vec<Vec<C64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let mut xs = Vec::new();
    let mut rows = Vec::new();
    let mut expected = width;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() < 3 || rec.len() % 2 == 0 {
            return Err(Error::Parse(format!(
                "row {line}: expected an abscissa followed by (re, im) pairs, got {} columns",
                rec.len()
            )));
        }
        let count = (rec.len() - 1) / 2;
        match expected {
            Some(w) if w != count => {
                return Err(Error::Parse(format!("row {line}: expected {w} complex entries, found {count}")))
            }
            _ => expected = Some(count),
        }
        xs.push(parse_cell(&rec, 0, line)?);
        let row = (0..count)
            .map(|c| Ok(C64::new(parse_cell(&rec, 1 + 2 * c, line)?, parse_cell(&rec, 2 + 2 * c, line)?)))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Ok((xs, rows))
}

/// Potential samples: `x, q11_re, q11_im, q12_re, ...` (row-major entries).
pub fn read_matrix_samples<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<CMatrix>)> {
    let (xs, rows) = read_complex_rows(reader, None)?;
    let count = rows[0].len();
    let n = (count as f64).sqrt().round() as usize;
    if n * n != count {
        return Err(Error::Parse(format!("{count} entries per row do not form a square matrix")));
    }
    let mats = rows.into_iter().map(|r| CMatrix::from_row_slice(n, n, &r)).collect();
    Ok((xs, mats))
}

pub fn write_matrix_samples<W: Write>(writer: W, xs: &[f64], values: &[CMatrix]) -> Result<()> {
    let n = values.first().map_or(1, |m| m.nrows());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["x".to_string()];
    header.extend(complex_header("q", n * n));
    w.write_record(&header)?;
    for (x, m) in xs.iter().zip(values) {
        let mut rec = vec![fmt(*x)];
        let flat: Vec<C64> = (0..n).flat_map(|r| (0..n).map(move |c| m[(r, c)])).collect();
        push_complex(&mut rec, &flat);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Companion summary of a kernel dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub h: f64,
    pub n: usize,
    pub iterations: usize,
    pub tail_bound: f64,
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
}

impl KernelSummary {
    pub fn new(field: &KernelField, constants: &KernelConstants) -> Self {
        Self {
            horizon: field.horizon(),
            h: field.step(),
            n: field.dim(),
            iterations: field.iterations(),
            tail_bound: field.tail_bound(),
            b1: constants.b1,
            b2: constants.b2,
            b3: constants.b3,
            b4: constants.b4,
        }
    }
}

/// `xi, eta, v11_re, v11_im, ...` for every lattice node, rows ordered by `xi` then `eta`.
pub fn write_kernel_dump<W: Write>(writer: W, field: &KernelField) -> Result<()> {
    let n = field.dim();
    let lattice = field.lattice();
    let h = lattice.step();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["xi".to_string(), "eta".to_string()];
    header.extend(complex_header("v", n * n));
    w.write_record(&header)?;
    let values = field.values();
    for (i, j) in lattice.nodes() {
        let mut rec = vec![fmt(i as f64 * h), fmt(j as f64 * h)];
        push_complex(&mut rec, values.block(i, j));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Node values of a kernel dump on the lattice described by `summary`.
pub fn read_kernel_dump<R: Read>(reader: R, summary: &KernelSummary) -> Result<NodeField> {
    let lattice = Lattice::for_horizon(summary.horizon, summary.h)?;
    let n = summary.n;
    let nn = n * n;
    let mut field = NodeField::zeros(lattice, n);
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let mut nodes = lattice.nodes();
    let mut count = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != 2 + 2 * nn {
            return Err(Error::Parse(format!("row {line}: expected {} columns, found {}", 2 + 2 * nn, rec.len())));
        }
        let (i, j) = nodes
            .next()
            .ok_or_else(|| Error::Parse(format!("row {line}: more rows than lattice nodes")))?;
        let (xi, eta) = (parse_cell(&rec, 0, line)?, parse_cell(&rec, 1, line)?);
        let h = lattice.step();
        if (xi - i as f64 * h).abs() > 1e-9 * h || (eta - j as f64 * h).abs() > 1e-9 * h {
            return Err(Error::Parse(format!("row {line}: node ({xi}, {eta}) out of lattice order")));
        }
        let block = field.block_mut(i, j);
        for e in 0..nn {
            block[e] = C64::new(parse_cell(&rec, 2 + 2 * e, line)?, parse_cell(&rec, 3 + 2 * e, line)?);
        }
        count += 1;
    }
    if count != lattice.len() {
        return Err(Error::Parse(format!("kernel dump has {count} rows, lattice needs {}", lattice.len())));
    }
    Ok(field)
}

/// `x, u1_re, u1_im, ..., ux1_re, ..., uxx1_re, ...`.
pub fn write_snapshot<W: Write>(writer: W, snap: &WaveSnapshot) -> Result<()> {
    let n = snap.dim;
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["x".to_string()];
    header.extend(complex_header("u", n));
    header.extend(complex_header("ux", n));
    header.extend(complex_header("uxx", n));
    w.write_record(&header)?;
    for k in 0..=snap.intervals() {
        let mut rec = vec![fmt(snap.x(k))];
        push_complex(&mut rec, snap.u_at(k));
        push_complex(&mut rec, snap.u_x_at(k));
        push_complex(&mut rec, snap.u_xx_at(k));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot<R: Read>(reader: R) -> Result<WaveSnapshot> {
    let (xs, rows) = read_complex_rows(reader, None)?;
    let width = rows[0].len();
    if width % 3 != 0 {
        return Err(Error::Parse(format!("snapshot rows hold {width} complex entries, not 3 n")));
    }
    let n = width / 3;
    if xs.len() < 2 || xs[0] != 0.0 {
        return Err(Error::Parse("snapshot must start at x = 0 and hold at least two nodes".into()));
    }
    let intervals = xs.len() - 1;
    let horizon = xs[intervals];
    check_uniform(&xs)?;
    let mut snap = WaveSnapshot::zeros(horizon, n, intervals);
    for (k, row) in rows.iter().enumerate() {
        snap.u[k * n..(k + 1) * n].copy_from_slice(&row[..n]);
        snap.u_x[k * n..(k + 1) * n].copy_from_slice(&row[n..2 * n]);
        snap.u_xx[k * n..(k + 1) * n].copy_from_slice(&row[2 * n..]);
    }
    Ok(snap)
}

fn check_uniform(xs: &[f64]) -> Result<()> {
    let step = xs[xs.len() - 1] / (xs.len() - 1) as f64;
    for (k, x) in xs.iter().enumerate() {
        if (x - k as f64 * step).abs() > 1e-9 * step.max(1.0) {
            return Err(Error::NonUniformGrid { x: *x });
        }
    }
    Ok(())
}

/// `t, f1_re, f1_im, ...`.
pub fn write_sampled<W: Write>(writer: W, g: &SampledFunction) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string()];
    header.extend(complex_header("f", g.dim));
    w.write_record(&header)?;
    let big = g.intervals();
    for k in 0..=big {
        let t = if k == big { g.horizon } else { g.horizon * k as f64 / big as f64 };
        let mut rec = vec![fmt(t)];
        push_complex(&mut rec, g.at(k));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Uniform samples on `[0, T]`, `T` taken from the last row.
pub fn read_sampled<R: Read>(reader: R) -> Result<SampledFunction> {
    let (ts, rows) = read_complex_rows(reader, None)?;
    if ts.len() < 2 || ts[0] != 0.0 {
        return Err(Error::Parse("samples must start at t = 0 and hold at least two rows".into()));
    }
    check_uniform(&ts)?;
    let dim = rows[0].len();
    SampledFunction::new(ts[ts.len() - 1], dim, rows.concat())
}

/// `x, K11_re, K11_im, ...` on `[0, X]`.
pub fn write_weyl<W: Write>(writer: W, k: &WeylSolution) -> Result<()> {
    let n = k.dim();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["x".to_string()];
    header.extend(complex_header("K", n * n));
    w.write_record(&header)?;
    for (x, m) in k.samples() {
        let mut rec = vec![fmt(x)];
        let flat: Vec<C64> = (0..n).flat_map(|r| (0..n).map(move |c| m[(r, c)])).collect();
        push_complex(&mut rec, &flat);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::solve_goursat;
    use crate::potential::PotentialGrid;

    #[test]
    fn key_values_with_comments() {
        let kv = parse_key_values("# head\n a = 1 \n\nb= x y # tail\n").unwrap();
        assert_eq!(kv["a"], "1");
        assert_eq!(kv["b"], "x y");
        assert!(parse_key_values("a = 1\na = 2").is_err());
        assert!(parse_key_values("just words").is_err());
    }

    #[test]
    fn matrices_and_complex_tokens() {
        let m = parse_matrix("value", "1 0.5+0.25i; 0.5-0.25i 2").unwrap();
        assert_eq!(m[(0, 1)], C64::new(0.5, 0.25));
        assert_eq!(m[(1, 0)], C64::new(0.5, -0.25));
        assert!(parse_matrix("value", "1 2; 3").is_err());
        assert!(parse_complex("z", "1+").is_err());
        assert_eq!(parse_complex("z", "-2i").unwrap(), C64::new(0.0, -2.0));
    }

    #[test]
    fn potential_spec_kinds() {
        let base = Path::new(".");
        let spec = parse_potential_spec("kind = constant\nvalue = 1\nx_max = 2\n", base).unwrap();
        assert!(matches!(spec, PotentialSpec::Constant { x_max, .. } if x_max == 2.0));
        let spec = parse_potential_spec("kind = preset\npreset = coupled\nx_max = 1\nstep = 0.01", base).unwrap();
        assert!(matches!(spec, PotentialSpec::Preset { preset: Preset::Coupled, .. }));
        assert!(parse_potential_spec("kind = preset\npreset = nope\nx_max = 1", base).is_err());
        assert!(parse_potential_spec("kind = constant\nvalue = 1\nx_max = 1\ncolour = red", base).is_err());
        assert!(parse_potential_spec("kind = zero\ndimension = 0\nx_max = 1", base).is_err());
    }

    #[test]
    fn sampled_potential_file() {
        let dir = tempfile::tempdir().unwrap();
        let xs: Vec<f64> = (0..=10).map(|k| k as f64 * 0.1).collect();
        let vals: Vec<CMatrix> = xs.iter().map(|x| CMatrix::from_element(1, 1, C64::new(1.0 + x, 0.0))).collect();
        write_matrix_samples(std::fs::File::create(dir.path().join("q.csv")).unwrap(), &xs, &vals).unwrap();
        std::fs::write(dir.path().join("p.txt"), "kind = sampled\ndimension = 1\nsamples = q.csv\n").unwrap();
        let spec = read_potential_spec(&dir.path().join("p.txt")).unwrap();
        let p = PotentialGrid::build(&spec).unwrap();
        assert!((p.eval(0.55).unwrap()[(0, 0)].re - 1.55).abs() < 1e-12);
    }

    #[test]
    fn kernel_dump_round_trips_exactly() {
        let p = PotentialGrid::build(&PotentialSpec::Preset {
            preset: Preset::Coupled,
            x_max: 1.0,
            step: 1e-3,
        })
        .unwrap();
        let field = solve_goursat(&p, 1.0, 0.05, 1e-10).unwrap();
        let mut buf = Vec::new();
        write_kernel_dump(&mut buf, &field).unwrap();
        let summary = KernelSummary::new(&field, &KernelConstants { b1: 0.0, b2: 0.0, b3: 0.0, b4: 0.0 });
        let values = read_kernel_dump(buf.as_slice(), &summary).unwrap();
        assert_eq!(&values, field.values());
        let back = KernelField::from_values(&p, 1.0, values, field.iterations(), field.tail_bound()).unwrap();
        assert_eq!(back.explicit_part(), field.explicit_part());
        let truncated = &buf[..buf.len() / 2];
        assert!(read_kernel_dump(truncated, &summary).is_err());
    }

    #[test]
    fn snapshot_and_samples_round_trip() {
        let mut snap = WaveSnapshot::zeros(1.5, 2, 6);
        for (k, z) in snap.u.iter_mut().enumerate() {
            *z = C64::new(k as f64 / 7.0, -(k as f64).sqrt());
        }
        snap.u_xx[3] = C64::new(1e-300, 3.0);
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &snap).unwrap();
        assert_eq!(read_snapshot(buf.as_slice()).unwrap(), snap);

        let g = SampledFunction::new(2.0, 1, (0..5).map(|k| C64::new(0.1 * k as f64, 1.0 / 3.0)).collect()).unwrap();
        let mut buf = Vec::new();
        write_sampled(&mut buf, &g).unwrap();
        assert_eq!(read_sampled(buf.as_slice()).unwrap(), g);
        assert!(read_sampled("t,f1_re,f1_im\n0,1,2\n0.5,1\n".as_bytes()).is_err());
    }
}
