//! Native JSON instance format.
//!
//! Three forms share one file schema. `primal` stores the objective matrix
//! `C` and a list of constraint matrices; its variable is the matrix itself,
//! embedded into `R^{n(n+1)/2}` at load time. `lmi` stores a cost vector and
//! the affine pencil `G0, G`. `composite` stores every field of the internal
//! model explicitly: `Q`, `c`, `c0`, `A` (rows), `b`, `G0`, `G` and the
//! optional curvature tensor `H`. Matrices are dense row-major arrays of
//! numbers; files never contain scaled coordinates.

use super::{
    primal_instance, EqConstraints, InstanceForm, MatrixMapping, NsdpInstance, Quadratic,
};
use crate::error::{Error, Result};
use crate::symmat::SymMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct NativeFile {
    form: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    d: Option<usize>,
    #[serde(rename = "Q", skip_serializing_if = "Option::is_none")]
    qmat: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    c0: Option<f64>,
    #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
    cmat: Option<Vec<Vec<f64>>>,
    #[serde(rename = "A", skip_serializing_if = "Option::is_none")]
    amat: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    b: Option<Vec<f64>>,
    #[serde(rename = "G0", skip_serializing_if = "Option::is_none")]
    g0: Option<Vec<Vec<f64>>>,
    #[serde(rename = "G", skip_serializing_if = "Option::is_none")]
    gmats: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(rename = "H", skip_serializing_if = "Option::is_none")]
    hmats: Option<Vec<Vec<Vec<Vec<f64>>>>>,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInstance(msg.into())
}

fn to_sym(rows: &[Vec<f64>], what: &str) -> Result<SymMatrix> {
    SymMatrix::from_rows(rows)
        .map_err(|e| invalid(format!("{what}: {e}")))
}

fn matrices_from(value: &serde_json::Value, what: &str) -> Result<Vec<SymMatrix>> {
    let list: Vec<Vec<Vec<f64>>> = serde_json::from_value(value.clone())
        .map_err(|e| invalid(format!("{what} must be a list of matrices: {e}")))?;
    list.iter().map(|m| to_sym(m, what)).collect()
}

fn rows_from(value: &serde_json::Value, what: &str) -> Result<Vec<Vec<f64>>> {
    serde_json::from_value(value.clone())
        .map_err(|e| invalid(format!("{what} must be a list of rows: {e}")))
        .map_err(|e: Error| e)
}

/// Parses an instance from native JSON text.
pub fn load_native_str(text: &str, default_name: &str) -> Result<NsdpInstance> {
    let file: NativeFile = serde_json::from_str(text)?;
    let name = file.name.clone().unwrap_or_else(|| default_name.to_string());
    match file.form.as_str() {
        "primal" => {
            let n = file.n.ok_or_else(|| invalid("primal form requires n"))?;
            let cmat = to_sym(
                file.cmat.as_ref().ok_or_else(|| invalid("primal form requires C"))?,
                "C",
            )?;
            if cmat.dim() != n {
                return Err(invalid(format!("C has order {} but n = {n}", cmat.dim())));
            }
            let amats = match &file.amat {
                Some(v) => matrices_from(v, "A")?,
                None => vec![],
            };
            let rhs = file.b.clone().unwrap_or_default();
            if amats.len() != rhs.len() {
                return Err(invalid("A and b have different lengths"));
            }
            primal_instance(&name, &cmat, &amats, &rhs)
        }
        "lmi" => {
            let d = file.d.ok_or_else(|| invalid("lmi form requires d"))?;
            let cvec = file.c.clone().ok_or_else(|| invalid("lmi form requires c"))?;
            if cvec.len() != d {
                return Err(invalid("c has wrong length"));
            }
            let g0 = to_sym(file.g0.as_ref().ok_or_else(|| invalid("lmi form requires G0"))?, "G0")?;
            let gm = file.gmats.as_ref().ok_or_else(|| invalid("lmi form requires G"))?;
            let lin: Vec<SymMatrix> = gm.iter().map(|m| to_sym(m, "G")).collect::<Result<_>>()?;
            if lin.len() != d {
                return Err(invalid("G has wrong length"));
            }
            let objective = match &file.qmat {
                Some(q) => Quadratic {
                    qmat: to_sym(q, "Q")?,
                    cvec,
                    c0: file.c0.unwrap_or(0.0),
                },
                None => Quadratic { cvec, c0: file.c0.unwrap_or(0.0), qmat: SymMatrix::zeros(d) },
            };
            NsdpInstance::new(
                name,
                InstanceForm::Lmi,
                objective,
                EqConstraints::default(),
                MatrixMapping::affine(g0, lin),
            )
        }
        "composite" => {
            let d = file.d.ok_or_else(|| invalid("composite form requires d"))?;
            let n = file.n.ok_or_else(|| invalid("composite form requires n"))?;
            let cvec = file.c.clone().unwrap_or_else(|| vec![0.0; d]);
            if cvec.len() != d {
                return Err(invalid("c has wrong length"));
            }
            let qmat = match &file.qmat {
                Some(q) => to_sym(q, "Q")?,
                None => SymMatrix::zeros(d),
            };
            let rows = match &file.amat {
                Some(v) => rows_from(v, "A")?,
                None => vec![],
            };
            let rhs = file.b.clone().unwrap_or_default();
            let g0 = match &file.g0 {
                Some(g) => to_sym(g, "G0")?,
                None => SymMatrix::zeros(n),
            };
            let gm = file.gmats.as_ref().ok_or_else(|| invalid("composite form requires G"))?;
            let lin: Vec<SymMatrix> = gm.iter().map(|m| to_sym(m, "G")).collect::<Result<_>>()?;
            let quad = match &file.hmats {
                Some(h) => Some(
                    h.iter()
                        .map(|row| row.iter().map(|m| to_sym(m, "H")).collect::<Result<Vec<_>>>())
                        .collect::<Result<Vec<_>>>()?,
                ),
                None => None,
            };
            NsdpInstance::new(
                name,
                InstanceForm::Composite,
                Quadratic { qmat, cvec, c0: file.c0.unwrap_or(0.0) },
                EqConstraints { rows, rhs },
                MatrixMapping { n, g0, lin, quad },
            )
        }
        other => Err(invalid(format!("unknown form {other:?}"))),
    }
}

/// Loads an instance from a native JSON file.
pub fn load_native(path: &Path) -> Result<NsdpInstance> {
    let text = std::fs::read_to_string(path)?;
    let default_name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".to_string());
    load_native_str(&text, &default_name)
}

/// Serialises an instance as composite-form native JSON. Numbers are written
/// in the shortest form that parses back to the identical value, so a load
/// and re-write round-trips exactly.
pub fn write_native(inst: &NsdpInstance) -> Result<String> {
    let d = inst.var_dim();
    let file = NativeFile {
        form: "composite".to_string(),
        name: Some(inst.name.clone()),
        n: Some(inst.matrix_order()),
        d: Some(d),
        qmat: Some(inst.objective.qmat.to_rows()),
        c: Some(inst.objective.cvec.clone()),
        c0: Some(inst.objective.c0),
        cmat: None,
        amat: if inst.eq.is_empty() {
            None
        } else {
            Some(serde_json::to_value(&inst.eq.rows)?)
        },
        b: if inst.eq.is_empty() { None } else { Some(inst.eq.rhs.clone()) },
        g0: Some(inst.gmap.g0.to_rows()),
        gmats: Some(inst.gmap.lin.iter().map(|g| g.to_rows()).collect()),
        hmats: inst
            .gmap
            .quad
            .as_ref()
            .map(|h| h.iter().map(|r| r.iter().map(|m| m.to_rows()).collect()).collect()),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}
