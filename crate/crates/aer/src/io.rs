//! CSV serialization for the artifact types, plus atomic file writes.
//!
//! All floats are printed with 17 significant digits (`{:.16e}`), which is
//! enough for a bit-exact `f64` round trip through `parse::<f64>()`.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::asymptotics::PhysicalSetup;
use crate::fvm::{FieldSeries, SpatialGrid};
use crate::inversion::{ErrorReport, Observations, SourceEstimate};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv format error at line {line}: {message}")]
    Format { line: usize, message: String },
}

/// 17-significant-digit float formatting; round trips `f64` exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

fn bad(line: usize, message: impl Into<String>) -> IoError {
    IoError::Format { line, message: message.into() }
}

fn parse_f64(tok: &str, line: usize) -> Result<f64, IoError> {
    tok.trim()
        .parse::<f64>()
        .map_err(|e| bad(line, format!("bad float {tok:?}: {e}")))
}

/// Writes `contents` to `path` via a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), IoError> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = Path::new(&tmp);
    {
        let mut file = fs::File::create(tmp_path)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
    }
    fs::rename(tmp_path, path)?;
    Ok(())
}

/// Splits a CSV line; no quoting is needed, every field is numeric or empty.
fn fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

// ---------------------------------------------------------------------------
// FieldSeries: header `x,t,u`, one row per (node, instant), times outermost.
// ---------------------------------------------------------------------------

pub fn field_series_to_csv(series: &FieldSeries) -> String {
    let mut out = String::from("x,t,u\n");
    for (j, &t) in series.times.iter().enumerate() {
        for (i, &x) in series.grid.centers.iter().enumerate() {
            out.push_str(&fmt_f64(x));
            out.push(',');
            out.push_str(&fmt_f64(t));
            out.push(',');
            out.push_str(&fmt_f64(series.values[j][i]));
            out.push('\n');
        }
    }
    out
}

pub fn parse_field_series(text: &str, setup: PhysicalSetup) -> Result<FieldSeries, IoError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if fields(h) == ["x", "t", "u"] => {}
        _ => return Err(bad(1, "expected header `x,t,u`")),
    }
    let mut xs: Vec<f64> = Vec::new();
    let mut times: Vec<f64> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f = fields(line);
        if f.len() != 3 {
            return Err(bad(idx + 1, format!("expected 3 fields, got {}", f.len())));
        }
        let x = parse_f64(f[0], idx + 1)?;
        let t = parse_f64(f[1], idx + 1)?;
        let u = parse_f64(f[2], idx + 1)?;
        if times.last() != Some(&t) {
            times.push(t);
            values.push(Vec::new());
        }
        if times.len() == 1 {
            xs.push(x);
        }
        values.last_mut().unwrap().push(u);
    }
    if xs.len() < 2 {
        return Err(bad(0, "fewer than two grid nodes"));
    }
    for (j, row) in values.iter().enumerate() {
        if row.len() != xs.len() {
            return Err(bad(0, format!("ragged block at time index {j}")));
        }
    }
    let n_cells = xs.len() - 1;
    let grid = SpatialGrid { n_cells, h: 1.0 / n_cells as f64, centers: xs };
    Ok(FieldSeries { grid, times, values, setup })
}

// ---------------------------------------------------------------------------
// Observations: header `x,u,w,mask`; missing w written as an empty field,
// mask as 0/1. Slice metadata (t0, delta, seed) lives in the run config.
// ---------------------------------------------------------------------------

pub fn observations_to_csv(obs: &Observations) -> String {
    let mut out = String::from("x,u,w,mask\n");
    for i in 0..obs.xs.len() {
        out.push_str(&fmt_f64(obs.xs[i]));
        out.push(',');
        out.push_str(&fmt_f64(obs.u_noisy[i]));
        out.push(',');
        if let Some(w) = &obs.w_noisy {
            out.push_str(&fmt_f64(w[i]));
        }
        out.push(',');
        out.push(if obs.mask[i] { '1' } else { '0' });
        out.push('\n');
    }
    out
}

pub fn parse_observations(
    text: &str,
    t0: f64,
    delta: f64,
    seed: u64,
) -> Result<Observations, IoError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if fields(h) == ["x", "u", "w", "mask"] => {}
        _ => return Err(bad(1, "expected header `x,u,w,mask`")),
    }
    let mut xs = Vec::new();
    let mut u = Vec::new();
    let mut w: Vec<f64> = Vec::new();
    let mut have_w: Option<bool> = None;
    let mut mask = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f = fields(line);
        if f.len() != 4 {
            return Err(bad(idx + 1, format!("expected 4 fields, got {}", f.len())));
        }
        xs.push(parse_f64(f[0], idx + 1)?);
        u.push(parse_f64(f[1], idx + 1)?);
        let row_has_w = !f[2].is_empty();
        match have_w {
            None => have_w = Some(row_has_w),
            Some(h) if h != row_has_w => {
                return Err(bad(idx + 1, "mixed presence of the w column"));
            }
            _ => {}
        }
        if row_has_w {
            w.push(parse_f64(f[2], idx + 1)?);
        }
        mask.push(match f[3] {
            "1" => true,
            "0" => false,
            other => return Err(bad(idx + 1, format!("bad mask value {other:?}"))),
        });
    }
    Ok(Observations {
        t0,
        xs,
        u_noisy: u,
        w_noisy: if have_w == Some(true) { Some(w) } else { None },
        delta,
        mask,
        seed,
    })
}

// ---------------------------------------------------------------------------
// ErrorReport: pointwise table `x,f_delta,f_low,f_up,delta2` on the dense
// grid, plus a one-row scalar sidecar `delta1,delta1_bar,feasible`.
// ---------------------------------------------------------------------------

/// Parsed pointwise error table; the estimate column is the piecewise-linear
/// interpolant of the nodal reconstruction on the dense grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTable {
    pub x: Vec<f64>,
    pub f_delta: Vec<f64>,
    pub f_low: Vec<f64>,
    pub f_up: Vec<f64>,
    pub delta2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorScalars {
    pub delta1: f64,
    pub delta1_bar: f64,
    pub feasible: bool,
}

fn lerp_on_grid(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let j = xs.partition_point(|&v| v <= x).min(xs.len() - 1);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let s = (x - x0) / (x1 - x0);
    ys[j - 1] * (1.0 - s) + ys[j] * s
}

pub fn error_report_to_csv(report: &ErrorReport, estimate: &SourceEstimate) -> String {
    let mut out = String::from("x,f_delta,f_low,f_up,delta2\n");
    for (i, &x) in report.xs_dense.iter().enumerate() {
        let fd = lerp_on_grid(&estimate.xs, &estimate.values, x);
        out.push_str(&fmt_f64(x));
        out.push(',');
        out.push_str(&fmt_f64(fd));
        out.push(',');
        out.push_str(&fmt_f64(report.envelope.eval_low(x)));
        out.push(',');
        out.push_str(&fmt_f64(report.envelope.eval_up(x)));
        out.push(',');
        out.push_str(&fmt_f64(report.delta2[i]));
        out.push('\n');
    }
    out
}

pub fn error_scalars_to_csv(report: &ErrorReport) -> String {
    format!(
        "delta1,delta1_bar,feasible\n{},{},{}\n",
        fmt_f64(report.delta1),
        fmt_f64(report.delta1_bar),
        report.feasible,
    )
}

pub fn parse_error_table(text: &str) -> Result<ErrorTable, IoError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if fields(h) == ["x", "f_delta", "f_low", "f_up", "delta2"] => {}
        _ => return Err(bad(1, "expected header `x,f_delta,f_low,f_up,delta2`")),
    }
    let mut table = ErrorTable {
        x: Vec::new(),
        f_delta: Vec::new(),
        f_low: Vec::new(),
        f_up: Vec::new(),
        delta2: Vec::new(),
    };
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f = fields(line);
        if f.len() != 5 {
            return Err(bad(idx + 1, format!("expected 5 fields, got {}", f.len())));
        }
        table.x.push(parse_f64(f[0], idx + 1)?);
        table.f_delta.push(parse_f64(f[1], idx + 1)?);
        table.f_low.push(parse_f64(f[2], idx + 1)?);
        table.f_up.push(parse_f64(f[3], idx + 1)?);
        table.delta2.push(parse_f64(f[4], idx + 1)?);
    }
    Ok(table)
}

pub fn parse_error_scalars(text: &str) -> Result<ErrorScalars, IoError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if fields(h) == ["delta1", "delta1_bar", "feasible"] => {}
        _ => return Err(bad(1, "expected header `delta1,delta1_bar,feasible`")),
    }
    let (idx, line) = lines
        .find(|(_, l)| !l.is_empty())
        .ok_or_else(|| bad(2, "missing data row"))?;
    let f = fields(line);
    if f.len() != 3 {
        return Err(bad(idx + 1, format!("expected 3 fields, got {}", f.len())));
    }
    Ok(ErrorScalars {
        delta1: parse_f64(f[0], idx + 1)?,
        delta1_bar: parse_f64(f[1], idx + 1)?,
        feasible: match f[2] {
            "true" => true,
            "false" => false,
            other => return Err(bad(idx + 1, format!("bad bool {other:?}"))),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{monotone_envelope, Envelope, ShapeClass};
    use crate::inversion::FillMethod;

    fn setup() -> PhysicalSetup {
        PhysicalSetup {
            mu: 0.01,
            k: 1.0,
            u_left: -10.0,
            u_right: 5.0,
            t_final: 0.3,
            x0_init: 0.1,
        }
    }

    fn awkward_floats() -> Vec<f64> {
        vec![
            0.1 + 0.2,
            std::f64::consts::PI,
            -1.0 / 3.0,
            1.2345678901234567e-7,
            -9.876543210987654e12,
        ]
    }

    #[test]
    fn float_format_round_trips_bit_exactly() {
        for v in awkward_floats() {
            let back: f64 = fmt_f64(v).parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits());
        }
    }

    #[test]
    fn field_series_round_trip() {
        let grid = SpatialGrid::uniform(4);
        let series = FieldSeries {
            grid,
            times: vec![0.0, 0.15, 0.3],
            values: vec![
                vec![0.1 + 0.2, -1.0, 2.0, 3.0, 4.0],
                vec![5.0, 6.0, std::f64::consts::E, 8.0, 9.0],
                vec![-0.5, 0.5, 1.5, 2.5, 3.5],
            ],
            setup: setup(),
        };
        let csv = field_series_to_csv(&series);
        let parsed = parse_field_series(&csv, setup()).unwrap();
        assert_eq!(parsed.times, series.times);
        assert_eq!(parsed.grid.centers, series.grid.centers);
        assert_eq!(parsed.values, series.values);
        // Re-serialization is byte-identical.
        assert_eq!(field_series_to_csv(&parsed), csv);
    }

    #[test]
    fn observations_round_trip_with_and_without_w() {
        let base = Observations {
            t0: 0.2,
            xs: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            u_noisy: awkward_floats(),
            w_noisy: Some(vec![1.0, -2.0, 0.1 + 0.2, 4.0, -5.0]),
            delta: 0.01,
            mask: vec![true, true, false, true, true],
            seed: 7,
        };
        for with_w in [true, false] {
            let mut obs = base.clone();
            if !with_w {
                obs.w_noisy = None;
            }
            let csv = observations_to_csv(&obs);
            let parsed = parse_observations(&csv, obs.t0, obs.delta, obs.seed).unwrap();
            assert_eq!(parsed.xs, obs.xs);
            assert_eq!(parsed.u_noisy, obs.u_noisy);
            assert_eq!(parsed.w_noisy, obs.w_noisy);
            assert_eq!(parsed.mask, obs.mask);
            assert_eq!(observations_to_csv(&parsed), csv);
        }
    }

    #[test]
    fn error_report_round_trip() {
        let xs = vec![0.0, 0.5, 1.0];
        let env: Envelope =
            monotone_envelope(&[0.0, 0.4, 0.9], &[0.2, 0.6, 1.1], &xs);
        let dense: Vec<f64> = (0..11).map(|i| i as f64 / 10.0).collect();
        let delta2: Vec<f64> = dense.iter().map(|&x| env.eval_up(x) - env.eval_low(x)).collect();
        let report = ErrorReport {
            delta1: 0.1234567890123,
            delta1_bar: 1.5,
            xs_dense: dense,
            delta2,
            envelope: env,
            feasible: true,
        };
        let estimate = SourceEstimate {
            xs: xs.clone(),
            values: vec![0.1, 0.5, 1.0],
            class: ShapeClass::Monotone,
            fill: FillMethod::None,
        };
        let table_csv = error_report_to_csv(&report, &estimate);
        let table = parse_error_table(&table_csv).unwrap();
        assert_eq!(table.x, report.xs_dense);
        assert_eq!(table.delta2, report.delta2);
        // Interpolated estimate hits the nodal values at the nodes.
        assert_eq!(table.f_delta[0], 0.1);
        assert_eq!(table.f_delta[5], 0.5);
        assert_eq!(table.f_delta[10], 1.0);

        let scalars_csv = error_scalars_to_csv(&report);
        let scalars = parse_error_scalars(&scalars_csv).unwrap();
        assert_eq!(scalars.delta1.to_bits(), report.delta1.to_bits());
        assert_eq!(scalars.delta1_bar.to_bits(), report.delta1_bar.to_bits());
        assert!(scalars.feasible);
    }

    #[test]
    fn malformed_inputs_rejected() {
        assert!(parse_field_series("a,b\n", setup()).is_err());
        assert!(parse_field_series("x,t,u\n1.0,2.0\n", setup()).is_err());
        assert!(parse_observations("x,u,w,mask\n0.0,1.0,,2\n", 0.2, 0.01, 0).is_err());
        assert!(parse_observations("x,u,w,mask\n0.0,1.0,1.0,1\n0.5,1.0,,1\n", 0.2, 0.01, 0)
            .is_err());
        assert!(parse_error_scalars("delta1,delta1_bar,feasible\n1.0,2.0,maybe\n").is_err());
    }

    #[test]
    fn atomic_write_creates_and_replaces() {
        let dir = std::env::temp_dir().join(format!("aer-io-test-{}", std::process::id()));
        let path = dir.join("nested").join("out.csv");
        write_atomic(&path, "first\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "first\n");
        write_atomic(&path, "second\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "second\n");
        fs::remove_dir_all(&dir).unwrap();
    }
}
