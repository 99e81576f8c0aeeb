//! File formats.
//!
//! * Matrix CSV: first line `m,n`, then `m` lines of `n` comma-separated
//!   reals. Values are written in shortest round-trip form, so a write/read
//!   cycle is bit-exact.
//! * Family JSON: `{"n": int, "members": [{"base": [..], "basis_columns":
//!   [[..], ..]}, ..]}`. `base` may be omitted for linear members; bases are
//!   re-orthonormalized on load.
//! * Distortion report CSV (`member_index,sigma_min,sigma_max`) and summary JSON.
//! * Sweep CSV (`m,trials,successes,success_rate,mean_achieved_distortion`).
//! * Trial log: one JSON object per line.
//! * Point CSV: one point per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distortion::{DistortionReport, RandomMatrix, ScaleChoice};
use crate::geometry::{orthonormalize, AffineSubspace, SubspaceFamily};
use crate::harness::{SweepResult, TrialResult};
use crate::{Error, Result};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Input(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

fn parse_real(field: &str, line: usize) -> Result<f64> {
    let t = field.trim();
    t.parse::<f64>().map_err(|_| Error::Csv {
        line,
        msg: format!("`{t}` is not a number"),
    })
}

pub fn render_matrix_csv(matrix: &RandomMatrix) -> String {
    let mut out = format!("{},{}\n", matrix.rows(), matrix.cols());
    for row in matrix.matrix().row_iter() {
        let fields: Vec<String> = row.iter().map(|&x| fmt_real(x)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_matrix_csv(text: &str) -> Result<RandomMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (hline, header) = lines.next().ok_or(Error::Csv {
        line: 1,
        msg: "missing `m,n` header".into(),
    })?;
    let dims: Vec<&str> = header.split(',').collect();
    let parse_dim = |s: &str| {
        s.trim().parse::<usize>().map_err(|_| Error::Csv {
            line: hline,
            msg: format!("header `{header}` must be two positive integers `m,n`"),
        })
    };
    if dims.len() != 2 {
        return Err(Error::Csv {
            line: hline,
            msg: format!("header `{header}` must be `m,n`"),
        });
    }
    let (m, n) = (parse_dim(dims[0])?, parse_dim(dims[1])?);
    if m == 0 || n == 0 {
        return Err(Error::Csv {
            line: hline,
            msg: "m and n must be positive".into(),
        });
    }
    let mut entries = Vec::with_capacity(m * n);
    let mut rows = 0usize;
    for (line, body) in lines {
        rows += 1;
        if rows > m {
            return Err(Error::Csv {
                line,
                msg: format!("row {rows} exceeds the {m} rows declared in the header"),
            });
        }
        let before = entries.len();
        for field in body.split(',') {
            entries.push(parse_real(field, line)?);
        }
        let got = entries.len() - before;
        if got != n {
            return Err(Error::Csv {
                line,
                msg: format!("row {rows} has {got} entries, header declares n = {n}"),
            });
        }
    }
    if rows != m {
        return Err(Error::Csv {
            line: hline,
            msg: format!("header declares m = {m} rows, body has {rows}"),
        });
    }
    RandomMatrix::from_row_major(m, n, &entries)
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<RandomMatrix> {
    parse_matrix_csv(&read(path.as_ref())?)
}

pub fn store_matrix_csv(matrix: &RandomMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), render_matrix_csv(matrix).as_bytes())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MemberFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    base: Option<Vec<f64>>,
    basis_columns: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FamilyFile {
    n: usize,
    members: Vec<MemberFile>,
}

pub fn parse_family_json(text: &str) -> Result<SubspaceFamily> {
    let file: FamilyFile = serde_json::from_str(text)?;
    let n = file.n;
    if n == 0 {
        return Err(Error::Input("family dimension n must be positive".into()));
    }
    let members = file
        .members
        .into_iter()
        .enumerate()
        .map(|(i, m)| {
            if m.basis_columns.is_empty() {
                return Err(Error::Input(format!("member {i} has no basis columns")));
            }
            if let Some(c) = m.basis_columns.iter().position(|c| c.len() != n) {
                return Err(Error::Dimension(format!(
                    "member {i} column {c} has length {}, expected {n}",
                    m.basis_columns[c].len()
                )));
            }
            let cols: Vec<DVector<f64>> = m
                .basis_columns
                .into_iter()
                .map(DVector::from_vec)
                .collect();
            let direction = orthonormalize(&DMatrix::from_columns(&cols))
                .map_err(|e| Error::Input(format!("member {i}: {e}")))?;
            let base = DVector::from_vec(m.base.unwrap_or_else(|| vec![0.0; n]));
            AffineSubspace::new(base, direction)
                .map_err(|e| Error::Input(format!("member {i}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    SubspaceFamily::new(members)
}

pub fn render_family_json(family: &SubspaceFamily) -> String {
    let file = FamilyFile {
        n: family.ambient_dim(),
        members: family
            .members()
            .iter()
            .map(|m| MemberFile {
                base: (!m.is_linear()).then(|| m.base_point.iter().copied().collect()),
                basis_columns: m
                    .direction
                    .basis()
                    .column_iter()
                    .map(|c| c.iter().copied().collect())
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("family serializes") + "\n"
}

pub fn load_family(path: impl AsRef<Path>) -> Result<SubspaceFamily> {
    parse_family_json(&read(path.as_ref())?)
}

pub fn store_family(family: &SubspaceFamily, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), render_family_json(family).as_bytes())
}

pub fn render_report_csv(report: &DistortionReport) -> String {
    let mut out = String::from("member_index,sigma_min,sigma_max\n");
    for (i, e) in report.per_subspace.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{}", fmt_real(e.sigma_min), fmt_real(e.sigma_max));
    }
    out
}

/// Family-level summary of a certification run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub family_sigma_min: f64,
    pub family_sigma_max: f64,
    /// `null` on rank collapse.
    pub achieved_distortion: f64,
    pub feasible: bool,
    #[serde(rename = "L")]
    pub scale: Option<f64>,
    #[serde(rename = "D")]
    pub distortion: f64,
}

impl ReportSummary {
    pub fn new(report: &DistortionReport, choice: &ScaleChoice) -> Self {
        ReportSummary {
            family_sigma_min: report.family_sigma_min,
            family_sigma_max: report.family_sigma_max,
            achieved_distortion: report.achieved_distortion,
            feasible: choice.feasible,
            scale: choice.scale,
            distortion: choice.distortion,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes") + "\n"
    }
}

pub fn render_sweep_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("m,trials,successes,success_rate,mean_achieved_distortion\n");
    for p in &sweep.points {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.m,
            p.trials,
            p.successes,
            fmt_real(p.success_rate),
            fmt_real(p.mean_achieved_distortion)
        );
    }
    out
}

pub fn render_trials_jsonl(trials: &[TrialResult]) -> String {
    trials
        .iter()
        .map(|t| serde_json::to_string(t).expect("trial serializes") + "\n")
        .collect()
}

/// One point per non-empty line; `#` starts a comment line.
pub fn parse_points_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut points: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let p = line
            .split(',')
            .map(|f| parse_real(f, i + 1))
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = points.first() {
            if first.len() != p.len() {
                return Err(Error::Csv {
                    line: i + 1,
                    msg: format!("point has {} coordinates, expected {}", p.len(), first.len()),
                });
            }
        }
        points.push(p);
    }
    Ok(points)
}

pub fn load_points_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    parse_points_csv(&read(path.as_ref())?)
}
