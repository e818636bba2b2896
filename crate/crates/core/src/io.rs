//! JSON file formats for fields, curves, systems, trajectories and reports.
//!
//! Readers report problems as [`Error::File`] with the JSON path of the
//! offending value (`terms[3].coeff`) and, for expressions, the byte offset
//! inside the string. Writers print every number with 17 significant digits
//! so that identical results serialize to identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{Error, Result};
use crate::gauge::SampledSystem;
use crate::identify::{GaugeCertificate, IdempotentSet, NonAutoSystem};
use crate::linalg::RealMatrix;
use crate::matcurve::MatrixCurve;
use crate::odeint::{CorrespondenceReport, Trajectory};
use crate::polyfield::{degree, PolyField};
use crate::timexpr::{parse_expr, TimeExpr};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDoc {
    pub dim: usize,
    pub terms: Vec<FieldTermDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldTermDoc {
    pub component: usize,
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveDoc {
    pub dim: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sign: Option<f64>,
}

/// Missing `constant` or `linear` sections mean zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    pub dim: usize,
    #[serde(default)]
    pub constant: Vec<String>,
    #[serde(default)]
    pub linear: Vec<Vec<String>>,
    pub terms: Vec<SystemTermDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemTermDoc {
    pub component: usize,
    pub exponents: Vec<u32>,
    pub coeff: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryDoc {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

/// Frozen coefficient tables of a system without a closed form.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampledDoc {
    pub dim: usize,
    pub t: Vec<f64>,
    pub fields: Vec<FieldDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateDoc {
    pub status: String,
    #[serde(rename = "B")]
    pub b_matrix: Vec<Vec<f64>>,
    pub kernel_dim: usize,
    pub kernel_basis: Vec<Vec<Vec<f64>>>,
    pub b: Vec<f64>,
    pub f: FieldDoc,
    pub residuals: ResidualsDoc,
    pub grid: GridDoc,
    pub diagnostics: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResidualsDoc {
    pub constant: f64,
    pub per_degree: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridDoc {
    pub t0: f64,
    pub t1: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdempotentsDoc {
    /// `[re, im]` pairs per component.
    pub points: Vec<Vec<[f64; 2]>>,
    pub spanning: bool,
    pub reliable: bool,
    pub converged: usize,
    pub verdict: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyDoc {
    pub max_deviation: f64,
    pub tol: f64,
    pub passed: bool,
    pub t_end: f64,
    pub truncated: bool,
}

fn file_error(file: &str, location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::File {
        file: file.to_string(),
        location: location.into(),
        message: message.into(),
    }
}

/// Deserializes `text`, reporting failures at their JSON path.
fn parse_doc<T: DeserializeOwned>(text: &str, file: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let location = if path == "." { String::new() } else { path };
        file_error(file, location, e.into_inner().to_string())
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| file_error(&path.display().to_string(), "", e.to_string()))
}

fn check_term(file: &str, at: &str, dim: usize, component: usize, exponents: &[u32]) -> Result<()> {
    if component >= dim {
        return Err(file_error(
            file,
            format!("{at}.component"),
            format!("{component} out of range for dim {dim}"),
        ));
    }
    if exponents.len() != dim {
        return Err(file_error(
            file,
            format!("{at}.exponents"),
            format!("expected {dim} entries, found {}", exponents.len()),
        ));
    }
    Ok(())
}

fn check_dim_positive(file: &str, dim: usize) -> Result<()> {
    if dim == 0 {
        Err(file_error(file, "dim", "must be positive"))
    } else {
        Ok(())
    }
}

fn expr(file: &str, at: String, s: &str) -> Result<TimeExpr> {
    parse_expr(s).map_err(|e| file_error(file, at, e.to_string()))
}

fn expr_matrix(
    file: &str,
    name: &str,
    dim: usize,
    rows: &[Vec<String>],
) -> Result<Vec<Vec<TimeExpr>>> {
    if rows.len() != dim {
        return Err(file_error(
            file,
            name,
            format!("expected {dim} rows, found {}", rows.len()),
        ));
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != dim {
                return Err(file_error(
                    file,
                    format!("{name}[{i}]"),
                    format!("expected {dim} entries, found {}", row.len()),
                ));
            }
            row.iter()
                .enumerate()
                .map(|(j, s)| expr(file, format!("{name}[{i}][{j}]"), s))
                .collect()
        })
        .collect()
}

fn check_finite(file: &str, at: String, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(file_error(file, at, "must be finite"))
    }
}

pub fn field_from_doc(doc: &FieldDoc, file: &str) -> Result<PolyField> {
    check_dim_positive(file, doc.dim)?;
    for (k, term) in doc.terms.iter().enumerate() {
        let at = format!("terms[{k}]");
        check_term(file, &at, doc.dim, term.component, &term.exponents)?;
        check_finite(file, format!("{at}.coeff"), term.coeff)?;
    }
    PolyField::from_terms(
        doc.dim,
        doc.terms
            .iter()
            .map(|t| (t.component, t.exponents.clone(), t.coeff)),
    )
    .map_err(|e| file_error(file, "terms", e.to_string()))
}

pub fn field_to_doc(f: &PolyField) -> FieldDoc {
    FieldDoc {
        dim: f.dim(),
        terms: f
            .terms()
            .map(|(component, alpha, coeff)| FieldTermDoc {
                component,
                exponents: alpha.clone(),
                coeff,
            })
            .collect(),
    }
}

pub fn curve_from_doc(doc: &CurveDoc, file: &str) -> Result<MatrixCurve> {
    check_dim_positive(file, doc.dim)?;
    let n = doc.dim;
    match doc.kind.as_str() {
        "closed_form" => {
            let entries = doc
                .entries
                .as_ref()
                .ok_or_else(|| file_error(file, "entries", "required for closed_form"))?;
            let entries = expr_matrix(file, "entries", n, entries)?;
            let inverse = doc
                .inverse
                .as_ref()
                .map(|m| expr_matrix(file, "inverse", n, m))
                .transpose()?;
            let location = if inverse.is_some() {
                "inverse"
            } else {
                "entries"
            };
            MatrixCurve::closed_form(entries, inverse)
                .map_err(|e| file_error(file, location, e.to_string()))
        }
        "exp" => {
            let rows = doc
                .generator
                .as_ref()
                .ok_or_else(|| file_error(file, "generator", "required for exp"))?;
            if rows.len() != n {
                return Err(file_error(
                    file,
                    "generator",
                    format!("expected {n} rows, found {}", rows.len()),
                ));
            }
            for (i, row) in rows.iter().enumerate() {
                if row.len() != n {
                    return Err(file_error(
                        file,
                        format!("generator[{i}]"),
                        format!("expected {n} entries, found {}", row.len()),
                    ));
                }
                for (j, v) in row.iter().enumerate() {
                    check_finite(file, format!("generator[{i}][{j}]"), *v)?;
                }
            }
            let sign = doc
                .sign
                .ok_or_else(|| file_error(file, "sign", "required for exp"))?;
            if sign != 1.0 && sign != -1.0 {
                return Err(file_error(
                    file,
                    "sign",
                    format!("must be 1 or -1, found {sign}"),
                ));
            }
            let generator = RealMatrix::from_fn(n, n, |i, j| rows[i][j]);
            MatrixCurve::exponential(generator, sign)
                .map_err(|e| file_error(file, "generator", e.to_string()))
        }
        other => Err(file_error(
            file,
            "kind",
            format!("expected \"closed_form\" or \"exp\", found \"{other}\""),
        )),
    }
}

pub fn system_from_doc(doc: &SystemDoc, file: &str) -> Result<NonAutoSystem> {
    check_dim_positive(file, doc.dim)?;
    let n = doc.dim;
    let constant = if doc.constant.is_empty() {
        vec![TimeExpr::zero(); n]
    } else {
        if doc.constant.len() != n {
            return Err(file_error(
                file,
                "constant",
                format!("expected {n} entries, found {}", doc.constant.len()),
            ));
        }
        doc.constant
            .iter()
            .enumerate()
            .map(|(i, s)| expr(file, format!("constant[{i}]"), s))
            .collect::<Result<_>>()?
    };
    let linear = if doc.linear.is_empty() {
        vec![vec![TimeExpr::zero(); n]; n]
    } else {
        expr_matrix(file, "linear", n, &doc.linear)?
    };
    let mut terms = Vec::with_capacity(doc.terms.len());
    for (k, term) in doc.terms.iter().enumerate() {
        let at = format!("terms[{k}]");
        check_term(file, &at, n, term.component, &term.exponents)?;
        if degree(&term.exponents) < 2 {
            return Err(file_error(
                file,
                format!("{at}.exponents"),
                "total degree must be at least 2; use constant/linear for lower degrees",
            ));
        }
        terms.push((
            term.component,
            term.exponents.clone(),
            expr(file, format!("{at}.coeff"), &term.coeff)?,
        ));
    }
    let mut higher = BTreeMap::new();
    for (comp, alpha, c) in terms {
        let slot = higher.entry((comp, alpha)).or_insert_with(TimeExpr::zero);
        *slot = TimeExpr::add(slot, &c);
    }
    NonAutoSystem::new(constant, linear, higher).map_err(|e| file_error(file, "", e.to_string()))
}

pub fn system_to_doc(q: &NonAutoSystem) -> SystemDoc {
    SystemDoc {
        dim: q.dim(),
        constant: q.constant().iter().map(ToString::to_string).collect(),
        linear: q
            .linear()
            .iter()
            .map(|row| row.iter().map(ToString::to_string).collect())
            .collect(),
        terms: q
            .higher()
            .iter()
            .map(|((component, alpha), c)| SystemTermDoc {
                component: *component,
                exponents: alpha.clone(),
                coeff: c.to_string(),
            })
            .collect(),
    }
}

pub fn trajectory_from_doc(doc: &TrajectoryDoc, file: &str) -> Result<Trajectory> {
    Trajectory::new(doc.t.clone(), doc.x.clone()).map_err(|e| file_error(file, "", e.to_string()))
}

pub fn trajectory_to_doc(z: &Trajectory) -> TrajectoryDoc {
    TrajectoryDoc {
        t: z.t.clone(),
        x: z.x.clone(),
    }
}

pub fn sampled_to_doc(s: &SampledSystem) -> SampledDoc {
    SampledDoc {
        dim: s.dim,
        t: s.t.clone(),
        fields: s.fields.iter().map(field_to_doc).collect(),
    }
}

fn rows(m: &RealMatrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn certificate_to_doc(cert: &GaugeCertificate) -> CertificateDoc {
    let (t0, t1) = match (cert.grid.first(), cert.grid.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => (0.0, 0.0),
    };
    CertificateDoc {
        status: cert.status.as_str().to_string(),
        b_matrix: rows(&cert.b_matrix),
        kernel_dim: cert.kernel_dim(),
        kernel_basis: cert.kernel_basis.iter().map(rows).collect(),
        b: cert.b.clone(),
        f: field_to_doc(&cert.f),
        residuals: ResidualsDoc {
            constant: cert.residuals.constant,
            per_degree: cert
                .residuals
                .per_degree
                .iter()
                .map(|(j, v)| (j.to_string(), *v))
                .collect(),
        },
        grid: GridDoc {
            t0,
            t1,
            points: cert.grid.len(),
        },
        diagnostics: cert.diagnostics.clone(),
    }
}

pub fn idempotents_to_doc(set: &IdempotentSet) -> IdempotentsDoc {
    IdempotentsDoc {
        points: set
            .points
            .iter()
            .map(|p| p.iter().map(|z| [z.re, z.im]).collect())
            .collect(),
        spanning: set.spanning,
        reliable: set.reliable,
        converged: set.converged,
        verdict: set.verdict().to_string(),
    }
}

pub fn verify_to_doc(r: &CorrespondenceReport, tol: f64) -> VerifyDoc {
    VerifyDoc {
        max_deviation: r.max_deviation,
        tol,
        passed: r.max_deviation <= tol,
        t_end: r.t_end,
        truncated: r.truncated,
    }
}

pub fn parse_field(text: &str, file: &str) -> Result<PolyField> {
    field_from_doc(&parse_doc(text, file)?, file)
}

pub fn parse_curve(text: &str, file: &str) -> Result<MatrixCurve> {
    curve_from_doc(&parse_doc(text, file)?, file)
}

pub fn parse_system(text: &str, file: &str) -> Result<NonAutoSystem> {
    system_from_doc(&parse_doc(text, file)?, file)
}

pub fn parse_trajectory(text: &str, file: &str) -> Result<Trajectory> {
    trajectory_from_doc(&parse_doc(text, file)?, file)
}

pub fn read_field(path: &Path) -> Result<PolyField> {
    parse_field(&read_text(path)?, &path.display().to_string())
}

pub fn read_curve(path: &Path) -> Result<MatrixCurve> {
    parse_curve(&read_text(path)?, &path.display().to_string())
}

pub fn read_system(path: &Path) -> Result<NonAutoSystem> {
    parse_system(&read_text(path)?, &path.display().to_string())
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    parse_trajectory(&read_text(path)?, &path.display().to_string())
}

/// Pretty printing with every float written as `d.dddddddddddddddde±x`.
struct Fixed17 {
    inner: PrettyFormatter<'static>,
}

impl Formatter for Fixed17 {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        // -0.0 would otherwise print with a sign that depends on the code path
        let value = if value == 0.0 { 0.0 } else { value };
        write!(writer, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        w: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

/// Serializes `value` as pretty JSON with 17 significant digits per number.
/// Non-finite numbers become `null`.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(
        &mut buf,
        Fixed17 {
            inner: PrettyFormatter::new(),
        },
    );
    value.serialize(&mut ser).expect("in-memory serialization");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value))
        .map_err(|e| file_error(&path.display().to_string(), "", e.to_string()))
}
