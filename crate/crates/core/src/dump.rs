//! JSON dumps of complex matrices.
//!
//! A matrix is stored as `{"n": n, "re": [[..]], "im": [[..]]}` with rows
//! outermost; `re[j][k]` and `im[j][k]` are the parts of entry (j, k).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{QfpError, Result};
use crate::fock::FockOperator;
use crate::linalg::CMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixDump {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixDump {
    pub fn from_matrix(a: &CMatrix) -> Self {
        let rows = |f: fn(&num_complex::Complex64) -> f64| -> Vec<Vec<f64>> {
            a.rows().into_iter().map(|r| r.iter().map(f).collect()).collect()
        };
        Self {
            n: a.nrows(),
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }

    pub fn to_operator(&self) -> Result<FockOperator> {
        let n = self.n;
        let shape_ok = self.re.len() == n
            && self.im.len() == n
            && self.re.iter().chain(&self.im).all(|r| r.len() == n);
        if !shape_ok {
            return Err(QfpError::InvalidState(format!("matrix dump is not {n}x{n}")));
        }
        FockOperator::new(CMatrix::from_shape_fn((n, n), |(j, k)| {
            num_complex::Complex64::new(self.re[j][k], self.im[j][k])
        }))
    }
}

/// Several states on a shared time axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatesDump {
    pub format: String,
    pub n: usize,
    pub times: Vec<f64>,
    pub states: Vec<MatrixDump>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    #[test]
    fn round_trip() {
        let a = CMatrix::from_shape_fn((3, 3), |(j, k)| Complex64::new(j as f64, k as f64 - 0.5));
        let dump = MatrixDump::from_matrix(&a);
        assert_eq!(dump.re[2][1], 2.0);
        assert_eq!(dump.im[2][1], 0.5);
        let text = serde_json::to_string(&dump).unwrap();
        let back: MatrixDump = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_operator().unwrap().entries(), &a);
    }

    #[test]
    fn rejects_ragged() {
        let dump = MatrixDump {
            n: 2,
            re: vec![vec![1.0, 0.0], vec![0.0]],
            im: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        };
        assert!(dump.to_operator().is_err());
    }
}
