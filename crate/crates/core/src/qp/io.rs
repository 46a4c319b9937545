//! Problem exchange as sparse `row,col,value` CSV files plus a JSON header.
//! Infinite limits are written as `null`. Round trips are exact.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::capacity::finite_or_none;
use crate::error::{Error, Result};
use crate::qp::{CscMatrix, QpProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpHeader {
    pub n_rows: usize,
    pub n_cols: usize,
    pub lower: Vec<Option<f64>>,
    pub upper: Vec<Option<f64>>,
    /// Linear cost; absent for a pure constraint system.
    #[serde(default)]
    pub q: Option<Vec<f64>>,
}

pub fn write_triplets<W: Write>(m: &CscMatrix, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["row", "col", "value"])?;
    for t in m.triplets() {
        out.serialize(t)?;
    }
    out.flush().map_err(|e| Error::io("triplets", e))?;
    Ok(())
}

pub fn read_triplets<R: Read>(r: R, nrows: usize, ncols: usize) -> Result<CscMatrix> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut t = Vec::new();
    for rec in rdr.deserialize() {
        let (i, j, v): (usize, usize, f64) = rec?;
        if i >= nrows || j >= ncols {
            return Err(Error::Problem(format!("triplet ({i}, {j}) outside {nrows}x{ncols}")));
        }
        t.push((i, j, v));
    }
    Ok(CscMatrix::from_triplets(nrows, ncols, &t))
}

/// Writes constraints, cost matrix (upper triangle) and header.
pub fn write_problem<W1: Write, W2: Write, W3: Write>(
    prob: &QpProblem,
    constraints: W1,
    cost: W2,
    header: W3,
) -> Result<()> {
    write_triplets(&prob.a, constraints)?;
    write_triplets(&prob.p, cost)?;
    let h = QpHeader {
        n_rows: prob.m(),
        n_cols: prob.n(),
        lower: prob.l.iter().map(|&v| finite_or_none(v)).collect(),
        upper: prob.u.iter().map(|&v| finite_or_none(v)).collect(),
        q: Some(prob.q.clone()),
    };
    serde_json::to_writer_pretty(header, &h)?;
    Ok(())
}

/// Reads a problem. `cost` may be absent (zero cost matrix); a header
/// without `q` gives a zero linear cost, so a constraint-set export can be
/// loaded directly as a feasibility problem.
pub fn read_problem<R1: Read, R2: Read, R3: Read>(
    constraints: R1,
    cost: Option<R2>,
    header: R3,
) -> Result<QpProblem> {
    let h: QpHeader = serde_json::from_reader(header)?;
    if h.lower.len() != h.n_rows || h.upper.len() != h.n_rows {
        return Err(Error::Problem("limit arrays disagree with n_rows".into()));
    }
    let a = read_triplets(constraints, h.n_rows, h.n_cols)?;
    let p = match cost {
        Some(c) => read_triplets(c, h.n_cols, h.n_cols)?,
        None => CscMatrix::zeros(h.n_cols, h.n_cols),
    };
    let prob = QpProblem {
        p,
        q: h.q.unwrap_or_else(|| vec![0.0; h.n_cols]),
        a,
        l: h.lower.iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
        u: h.upper.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
    };
    prob.validate()?;
    Ok(prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let prob = QpProblem::new(
            3,
            &[(0, 0, 1.0 / 3.0), (0, 2, 0.1), (2, 2, 7.0)],
            vec![0.1, -0.2, 1e-17],
            2,
            &[(0, 0, 1.0), (0, 1, std::f64::consts::PI), (1, 2, -2.5)],
            vec![f64::NEG_INFINITY, -1.0 / 7.0],
            vec![2.0 / 3.0, f64::INFINITY],
        )
        .unwrap();
        let (mut a, mut p, mut h) = (Vec::new(), Vec::new(), Vec::new());
        write_problem(&prob, &mut a, &mut p, &mut h).unwrap();
        let back = read_problem(a.as_slice(), Some(p.as_slice()), h.as_slice()).unwrap();
        assert_eq!(back, prob);
        assert!(String::from_utf8(h).unwrap().contains("null"));
    }
}
