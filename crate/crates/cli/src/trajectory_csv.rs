//! Trajectory CSV: `t,x1..xn,u1..um,k11..k1n,…,km1..kmn,running_cost`,
//! one row per grid point, floats with 17 significant digits and `inf`
//! for infinities.

use std::fmt::Write as _;
use std::io::{self, Write};

use sdre_core::dynamics::{SdcModel, Trajectory};

pub fn header(n: usize, m: usize) -> String {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=m).map(|j| format!("u{j}")));
    for r in 1..=m {
        cols.extend((1..=n).map(|c| format!("k{r}{c}")));
    }
    cols.push("running_cost".into());
    cols.join(",")
}

fn push_float(line: &mut String, v: f64) {
    if v.is_infinite() {
        line.push_str(if v > 0.0 { "inf" } else { "-inf" });
    } else {
        write!(line, "{v:.16e}").expect("writing to a String");
    }
}

pub fn write_trajectory<W: Write>(mut out: W, trajectory: &Trajectory, n: usize, m: usize) -> io::Result<()> {
    writeln!(out, "{}", header(n, m))?;
    let mut line = String::new();
    for s in &trajectory.samples {
        line.clear();
        let values = std::iter::once(s.t)
            .chain(s.x.iter().copied())
            .chain(s.u.iter().copied())
            .chain(s.gain.as_slice().iter().copied())
            .chain(std::iter::once(s.running_cost));
        for (i, v) in values.enumerate() {
            if i > 0 {
                line.push(',');
            }
            push_float(&mut line, v);
        }
        writeln!(out, "{line}")?;
    }
    out.flush()
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    /// Row-major `m × n`.
    pub gain: Vec<f64>,
    pub running_cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvTrajectory {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<CsvRow>,
}

impl CsvTrajectory {
    /// Trapezoid integral of the model's running cost over the rows.
    pub fn integrated_cost(&self, model: &SdcModel) -> f64 {
        let mut total = 0.0;
        let mut prev: Option<(f64, f64)> = None;
        for row in &self.rows {
            let f = model.running_cost(&row.x, &row.u);
            if let Some((t, f_prev)) = prev {
                total += 0.5 * (row.t - t) * (f_prev + f);
            }
            prev = Some((row.t, f));
        }
        total
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CsvError {
    #[error("unrecognized header `{0}`")]
    Header(String),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
}

/// Reads back a file produced by [`write_trajectory`].
pub fn read_trajectory(text: &str) -> Result<CsvTrajectory, CsvError> {
    let mut lines = text.lines();
    let head = lines.next().unwrap_or("");
    let cols: Vec<&str> = head.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with('x')).count();
    let m = cols.iter().filter(|c| c.starts_with('u')).count();
    if n == 0 || m == 0 || header(n, m) != head {
        return Err(CsvError::Header(head.to_string()));
    }
    let width = cols.len();
    let mut rows = Vec::new();
    for (index, line) in lines.enumerate() {
        let line_no = index + 2;
        let values: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| CsvError::Row { line: line_no, message: e.to_string() })?;
        if values.len() != width {
            return Err(CsvError::Row { line: line_no, message: format!("{} fields, expected {width}", values.len()) });
        }
        rows.push(CsvRow {
            t: values[0],
            x: values[1..=n].to_vec(),
            u: values[n + 1..=n + m].to_vec(),
            gain: values[n + m + 1..width - 1].to_vec(),
            running_cost: values[width - 1],
        });
    }
    Ok(CsvTrajectory { n, m, rows })
}
