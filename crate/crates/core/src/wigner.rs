//! Phase-space view: position kernels, Wigner functions and characteristic
//! functions of truncated density matrices.
//!
//! Convention: w(x, v) = (1/2π) ∫ ρ(x + s/2, x − s/2) e^{−ivs} ds, which pairs
//! with φ(ξ, η) = tr(ρ e^{−i(ξq + ηp)}) through
//! w(x, v) = (2π)⁻² ∫∫ φ(ξ, η) e^{i(ξx + ηv)} dξ dη.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::dump::write_json;
use crate::dynamics::{csv_err, DensityMatrix};
use crate::error::{QfpError, Result};
use crate::fock::{build_canonical, FockOperator};
use crate::gksl::QfpParams;
use crate::linalg::{self, CMatrix, I, ZERO};
use crate::quadrature::hermite_table;

/// Boundary values above this fraction of max|w| signal a grid that cuts
/// off the state.
pub const ALIASING_TOL: f64 = 1e-6;
/// Largest embedding dimension for the characteristic function.
pub const MAX_CHARACTERISTIC_DIM: usize = 512;
/// Fraction of each axis excluded from interior residual claims.
pub const INTERIOR_MARGIN: f64 = 0.1;

/// Uniform axis `min, min + step, …, min + (count − 1)·step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformAxis {
    pub count: usize,
    pub min: f64,
    pub step: f64,
}

impl UniformAxis {
    pub fn new(count: usize, min: f64, step: f64) -> Result<Self> {
        if count < 2 || !(step > 0.0) || !step.is_finite() || !min.is_finite() {
            return Err(QfpError::InvalidGrid(format!(
                "axis needs at least 2 nodes and a positive step (count {count}, step {step})"
            )));
        }
        Ok(Self { count, min, step })
    }

    /// `count` nodes spanning [−half_width, half_width].
    pub fn symmetric(half_width: f64, count: usize) -> Result<Self> {
        if count < 2 {
            return Err(QfpError::InvalidGrid("axis needs at least 2 nodes".into()));
        }
        Self::new(count, -half_width, 2.0 * half_width / (count - 1) as f64)
    }

    pub fn node(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.node(i)).collect()
    }

    pub fn max(&self) -> f64 {
        self.node(self.count - 1)
    }

    pub fn is_symmetric(&self) -> bool {
        (self.min + self.max()).abs() <= 1e-12 * self.max().abs().max(1.0)
    }

    fn interior(&self) -> std::ops::Range<usize> {
        let skip = ((self.count as f64) * INTERIOR_MARGIN).ceil() as usize;
        skip..self.count.saturating_sub(skip)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x: UniformAxis,
    pub v: UniformAxis,
}

impl GridSpec {
    pub fn symmetric(x_max: f64, nx: usize, v_max: f64, nv: usize) -> Result<Self> {
        Ok(Self {
            x: UniformAxis::symmetric(x_max, nx)?,
            v: UniformAxis::symmetric(v_max, nv)?,
        })
    }

    /// Square grid covering the classically allowed disc of the top level
    /// with a margin, spacing 0.1.
    pub fn for_truncation(n: usize) -> Result<Self> {
        let half = support_radius(n);
        let count = 2 * (half / 0.1).ceil() as usize + 1;
        Self::symmetric(half, count, half, count)
    }
}

/// Radius beyond which every Hermite function ψ_k, k < n, is negligible.
pub fn support_radius(n: usize) -> f64 {
    (2.0 * n as f64 + 1.0).sqrt() + 6.0
}

/// Real Wigner samples, `values[[i, j]] = w(x_i, v_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerGrid {
    pub x: UniformAxis,
    pub v: UniformAxis,
    pub values: Array2<f64>,
    /// Σ w dx dv
    pub mass: f64,
    /// max |Im w| before it was discarded
    pub imag_residue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerHeader {
    pub format: String,
    pub dtype: String,
    pub byte_order: String,
    pub layout: String,
    pub rows: usize,
    pub cols: usize,
    pub x: UniformAxis,
    pub v: UniformAxis,
    pub mass: f64,
    pub imag_residue: f64,
}

impl WignerGrid {
    fn from_complex(x: UniformAxis, v: UniformAxis, values: Array2<Complex64>) -> Self {
        let imag_residue = values.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        let values = values.mapv(|z| z.re);
        let mass = values.sum() * x.step * v.step;
        Self {
            x,
            v,
            values,
            mass,
            imag_residue,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, w| m.max(w.abs()))
    }

    pub fn boundary_max(&self) -> f64 {
        let (nx, nv) = self.values.dim();
        let mut m = 0.0_f64;
        for i in 0..nx {
            m = m.max(self.values[[i, 0]].abs()).max(self.values[[i, nv - 1]].abs());
        }
        for j in 0..nv {
            m = m.max(self.values[[0, j]].abs()).max(self.values[[nx - 1, j]].abs());
        }
        m
    }

    /// Σ f(x, v) w(x, v) dx dv
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        let mut acc = 0.0;
        for ((i, j), w) in self.values.indexed_iter() {
            acc += f(self.x.node(i), self.v.node(j)) * w;
        }
        acc * self.x.step * self.v.step
    }

    /// Max |w − other| over interior nodes of matching grids.
    pub fn interior_max_diff(&self, other: &WignerGrid) -> Result<f64> {
        if self.values.dim() != other.values.dim() {
            return Err(QfpError::InvalidGrid("grids have different shapes".into()));
        }
        let mut m = 0.0_f64;
        for i in self.x.interior() {
            for j in self.v.interior() {
                m = m.max((self.values[[i, j]] - other.values[[i, j]]).abs());
            }
        }
        Ok(m)
    }

    /// CSV with header `x,v,w`, x outermost.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "v", "w"]).map_err(csv_err)?;
        for ((i, j), val) in self.values.indexed_iter() {
            w.write_record([self.x.node(i).to_string(), self.v.node(j).to_string(), format!("{val:e}")])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn header(&self) -> WignerHeader {
        WignerHeader {
            format: "qfp-wigner-v1".into(),
            dtype: "float64".into(),
            byte_order: "little".into(),
            layout: "row-major, rows are x nodes, columns are v nodes".into(),
            rows: self.x.count,
            cols: self.v.count,
            x: self.x,
            v: self.v,
            mass: self.mass,
            imag_residue: self.imag_residue,
        }
    }

    /// Raw little-endian float64 payload, row-major.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    /// Writes `path` (binary payload) and `sidecar` (JSON header).
    pub fn save_binary(&self, path: &Path, sidecar: &Path) -> Result<()> {
        std::fs::write(path, self.to_le_bytes())?;
        write_json(sidecar, &self.header())
    }

    pub fn load_binary(path: &Path, sidecar: &Path) -> Result<Self> {
        let header: WignerHeader = serde_json::from_reader(std::fs::File::open(sidecar)?)?;
        let bytes = std::fs::read(path)?;
        if bytes.len() != 8 * header.rows * header.cols {
            return Err(QfpError::InvalidGrid("payload size does not match header".into()));
        }
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let values = Array2::from_shape_vec((header.rows, header.cols), data)
            .map_err(|e| QfpError::InvalidGrid(e.to_string()))?;
        Ok(Self {
            x: header.x,
            v: header.v,
            values,
            mass: header.mass,
            imag_residue: header.imag_residue,
        })
    }
}

/// Position kernel ρ(x, y) = Σ ρ_mn ψ_m(x) ψ_n(y) on a symmetric axis,
/// `[i, j]` ↔ (x_i, x_j).
pub fn density_kernel(rho: &DensityMatrix, grid: &UniformAxis) -> Result<CMatrix> {
    let n = rho.dim();
    if !grid.is_symmetric() {
        return Err(QfpError::InvalidGrid("kernel grid must be symmetric about 0".into()));
    }
    // eight nodes per local wavelength of ψ_{n−1} at the origin
    let max_step = 2.0 * std::f64::consts::PI / (8.0 * ((2 * n - 1) as f64).sqrt());
    if grid.step > max_step {
        return Err(QfpError::GridTooCoarse(format!(
            "spacing {} exceeds {max_step} needed for n = {n}",
            grid.step
        )));
    }
    let psi = hermite_table(n, &grid.nodes()).mapv(|x| Complex64::new(x, 0.0));
    Ok(psi.t().dot(rho.matrix()).dot(&psi))
}

/// Wigner function of `rho` sampled on `spec` by an FFT over the kernel's
/// off-diagonal coordinate.
pub fn wigner_transform(rho: &DensityMatrix, spec: &GridSpec) -> Result<WignerGrid> {
    let grid = wigner_unchecked(rho.matrix(), spec)?;
    let max = grid.max_abs();
    let edge = grid.boundary_max();
    if edge > ALIASING_TOL * max {
        return Err(QfpError::GridTooSmall(format!(
            "boundary value {edge:e} exceeds {ALIASING_TOL:e} of max {max:e}; enlarge the grid"
        )));
    }
    Ok(grid)
}

fn wigner_unchecked(rho: &CMatrix, spec: &GridSpec) -> Result<WignerGrid> {
    let n = rho.nrows();
    let r = support_radius(n);
    let dv = spec.v.step;
    // FFT bins are dv / p apart; p·2π/dv is the covered s-range, which must
    // reach ±2R, and the s-step π/R resolves momenta up to R.
    let p = ((2.0 * r * dv / std::f64::consts::PI).ceil() as usize).max(1);
    let dv_f = dv / p as f64;
    let mut len = ((2.0 * p as f64 * r / dv).ceil() as usize).max(spec.v.count * p + 1);
    len += len % 2;
    let ds = 2.0 * std::f64::consts::PI / (len as f64 * dv_f);
    let s_nodes: Vec<f64> = (0..len).map(|k| (k as f64 - (len / 2) as f64) * ds).collect();

    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(len);
    let v_min = spec.v.min;
    let rows: Vec<Vec<Complex64>> = (0..spec.x.count)
        .into_par_iter()
        .map(|i| {
            let x = spec.x.node(i);
            let plus: Vec<f64> = s_nodes.iter().map(|s| x + 0.5 * s).collect();
            let minus: Vec<f64> = s_nodes.iter().map(|s| x - 0.5 * s).collect();
            let a = hermite_table(n, &plus);
            let b = hermite_table(n, &minus).mapv(|t| Complex64::new(t, 0.0));
            let rb = rho.dot(&b);
            let mut buf: Vec<Complex64> = (0..len)
                .map(|k| {
                    let f: Complex64 = (0..n).map(|m| rb[[m, k]] * a[[m, k]]).sum();
                    f * Complex64::from_polar(1.0, -v_min * s_nodes[k])
                })
                .collect();
            fft.process(&mut buf);
            (0..spec.v.count)
                .map(|j| {
                    let m = j * p;
                    // e^{−i m dv_f s_k} = e^{−2πi mk/len} e^{iπm}
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    buf[m] * (sign * ds / (2.0 * std::f64::consts::PI))
                })
                .collect()
        })
        .collect();
    let values = Array2::from_shape_fn((spec.x.count, spec.v.count), |(i, j)| rows[i][j]);
    Ok(WignerGrid::from_complex(spec.x, spec.v, values))
}

/// φ(ξ, η) together with its arguments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicSample {
    pub xi: f64,
    pub eta: f64,
    pub value: Complex64,
}

/// Levels needed so that e^{−i(ξq + ηp)} acts accurately on the first `n`
/// levels when √(ξ² + η²) ≤ radius.
pub fn characteristic_embedding(n: usize, radius: f64) -> usize {
    ((n as f64).sqrt() + radius / std::f64::consts::SQRT_2 + 5.0).powi(2).ceil() as usize
}

fn embedding_for(n: usize, radius: f64) -> Result<usize> {
    let needed = characteristic_embedding(n, radius).max(n);
    if needed > MAX_CHARACTERISTIC_DIM {
        return Err(QfpError::CharacteristicGuard {
            radius,
            needed,
            max: MAX_CHARACTERISTIC_DIM,
        });
    }
    Ok(needed)
}

/// φ(ξ, η) = tr(ρ e^{−i(ξq + ηp)}) with a Padé matrix exponential on an
/// enlarged truncation.
pub fn characteristic_function(rho: &DensityMatrix, xi: f64, eta: f64) -> Result<CharacteristicSample> {
    let n = rho.dim();
    let m = embedding_for(n, xi.hypot(eta))?;
    let ops = build_canonical(m)?;
    let gen = &(&ops.q * xi) + &(&ops.p * eta);
    let u = linalg::expm(&gen.entries().mapv(|z| -I * z));
    let r = rho.matrix();
    let mut value = ZERO;
    for j in 0..n {
        for k in 0..n {
            value += r[[j, k]] * u[[k, j]];
        }
    }
    Ok(CharacteristicSample { xi, eta, value })
}

/// φ on the tensor grid `xi × eta`, `[i, j]` ↔ (ξ_i, η_j).
///
/// Uses ξq + ηp = r e^{iθN} q e^{−iθN} with ξ + iη = re^{iθ}, so a single
/// eigendecomposition of the embedded q serves every grid point.
pub fn characteristic_grid(rho: &DensityMatrix, xi: &UniformAxis, eta: &UniformAxis) -> Result<Array2<Complex64>> {
    let n = rho.dim();
    let radius = xi.min.abs().max(xi.max().abs()).hypot(eta.min.abs().max(eta.max().abs()));
    let m = embedding_for(n, radius)?;
    let mut q = Array2::<f64>::zeros((m, m));
    for j in 0..m - 1 {
        let v = ((j + 1) as f64 / 2.0).sqrt();
        q[[j, j + 1]] = v;
        q[[j + 1, j]] = v;
    }
    let (lambda, vecs) = linalg::eigh_real(&q)?;
    let r = rho.matrix();
    // c[i][d + n − 1] = Σ_{j − k = d} V_ji V_ki ρ_jk
    let width = 2 * n - 1;
    let c: Vec<Vec<Complex64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![ZERO; width];
            for j in 0..n {
                let vj = vecs[[j, i]];
                for k in 0..n {
                    row[j + n - 1 - k] += r[[j, k]] * (vj * vecs[[k, i]]);
                }
            }
            row
        })
        .collect();
    let xs = xi.nodes();
    let es = eta.nodes();
    let values: Vec<Complex64> = (0..xs.len() * es.len())
        .into_par_iter()
        .map(|idx| {
            let (a, b) = (xs[idx / es.len()], es[idx % es.len()]);
            let rad = a.hypot(b);
            let theta = b.atan2(a);
            let rot: Vec<Complex64> = (0..width)
                .map(|t| Complex64::from_polar(1.0, -theta * (t as f64 - (n - 1) as f64)))
                .collect();
            let mut acc = ZERO;
            for (i, ci) in c.iter().enumerate() {
                let inner: Complex64 = ci.iter().zip(&rot).map(|(x, y)| x * y).sum();
                acc += Complex64::from_polar(1.0, -rad * lambda[i]) * inner;
            }
            acc
        })
        .collect();
    Ok(Array2::from_shape_vec((xs.len(), es.len()), values).expect("grid shape"))
}

/// Wigner function from the characteristic function by a 2-D inverse FFT.
///
/// The phase-space grid has `points` nodes per axis, spacing
/// `2·half_width/points`, starting at −half_width; `points` must be a
/// multiple of 4.
pub fn wigner_from_characteristic(rho: &DensityMatrix, points: usize, half_width: f64) -> Result<WignerGrid> {
    if points < 8 || points % 4 != 0 || !(half_width > 0.0) {
        return Err(QfpError::InvalidGrid(format!(
            "need a positive half width and a multiple of 4 (>= 8) points, got {points}"
        )));
    }
    let big_l = 2.0 * half_width;
    let dx = big_l / points as f64;
    let dxi = 2.0 * std::f64::consts::PI / big_l;
    let half = (points / 2) as f64;
    let x_axis = UniformAxis::new(points, -half_width, dx)?;
    let xi_axis = UniformAxis::new(points, -half * dxi, dxi)?;
    let phi = characteristic_grid(rho, &xi_axis, &xi_axis)?;

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(points);
    // (−1)^{k+l} on the input, (−1)^{j+m} on the output
    let sign = |a: usize, b: usize| if (a + b) % 2 == 0 { 1.0 } else { -1.0 };
    let mut data = Array2::from_shape_fn((points, points), |(k, l)| phi[[k, l]] * sign(k, l));
    for mut row in data.rows_mut() {
        let mut buf = row.to_vec();
        ifft.process(&mut buf);
        row.assign(&Array1::from(buf));
    }
    for mut col in data.columns_mut() {
        let mut buf = col.to_vec();
        ifft.process(&mut buf);
        col.assign(&Array1::from(buf));
    }
    let scale = dxi * dxi / (4.0 * std::f64::consts::PI * std::f64::consts::PI);
    let values = Array2::from_shape_fn((points, points), |(j, m)| data[[j, m]] * (scale * sign(j, m)));
    Ok(WignerGrid::from_complex(x_axis, x_axis, values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryRow {
    pub name: String,
    pub phase_space: f64,
    pub operator: f64,
    /// |phase_space − operator| / max(1, |operator|)
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryReport {
    pub rows: Vec<DictionaryRow>,
    pub max_residual: f64,
}

impl DictionaryReport {
    pub fn row(&self, name: &str) -> Option<&DictionaryRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Compares phase-space integrals of `w` with the traces their dictionary
/// rows predict:
///
/// | row       | phase space    | operator            |
/// |-----------|----------------|---------------------|
/// | mass      | ∫∫ w           | tr ρ                |
/// | x         | ∫∫ x w         | tr(qρ)              |
/// | v         | ∫∫ v w         | tr(pρ)              |
/// | x2        | ∫∫ x² w        | tr(q²ρ)             |
/// | v2        | ∫∫ v² w        | tr(p²ρ)             |
/// | xv        | ∫∫ x v w       | ½ tr((qp + pq)ρ)    |
/// | x_dx      | ∫∫ x ∂ₓw       | i tr(ρ[q, p])       |
/// | v_dv      | ∫∫ v ∂ᵥw       | −i tr(ρ[p, q])      |
pub fn dictionary_moments(rho: &DensityMatrix, w: &WignerGrid) -> Result<DictionaryReport> {
    let n = rho.dim();
    let ops = build_canonical(n)?;
    let tr = |a: &FockOperator| -> Complex64 { rho.op().dot(a).trace() };
    let comm_qp = ops.q.commutator(&ops.p);
    let comm_pq = ops.p.commutator(&ops.q);
    let dx = derivative_x(&w.values, w.x.step);
    let dv = derivative_v(&w.values, w.v.step);
    let grid_sum = |f: &dyn Fn(usize, usize) -> f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..w.x.count {
            for j in 0..w.v.count {
                acc += f(i, j);
            }
        }
        acc * w.x.step * w.v.step
    };
    let x = |i: usize| w.x.node(i);
    let v = |j: usize| w.v.node(j);
    let entries: Vec<(&str, f64, f64)> = vec![
        ("mass", w.mass, rho.op().trace().re),
        ("x", w.integrate(|x, _| x), tr(&ops.q).re),
        ("v", w.integrate(|_, v| v), tr(&ops.p).re),
        ("x2", w.integrate(|x, _| x * x), tr(&ops.q2()).re),
        ("v2", w.integrate(|_, v| v * v), tr(&ops.p2()).re),
        ("xv", w.integrate(|x, v| x * v), 0.5 * tr(&ops.pq_sym()).re),
        ("x_dx", grid_sum(&|i, j| x(i) * dx[[i, j]]), (I * tr(&comm_qp)).re),
        ("v_dv", grid_sum(&|i, j| v(j) * dv[[i, j]]), (-I * tr(&comm_pq)).re),
    ];
    let rows: Vec<DictionaryRow> = entries
        .into_iter()
        .map(|(name, ps, op)| DictionaryRow {
            name: name.into(),
            phase_space: ps,
            operator: op,
            residual: (ps - op).abs() / op.abs().max(1.0),
        })
        .collect();
    let max_residual = rows.iter().map(|r| r.residual).fold(0.0, f64::max);
    Ok(DictionaryReport { rows, max_residual })
}

// Fourth-order central differences; the two nodes next to each edge use
// second-order stencils (one-sided at the edge itself).
fn diff1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            if i >= 2 && i + 2 < n {
                (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * h)
            } else if i >= 1 && i + 1 < n {
                (f[i + 1] - f[i - 1]) / (2.0 * h)
            } else if i == 0 {
                (f[1] - f[0]) / h
            } else {
                (f[n - 1] - f[n - 2]) / h
            }
        })
        .collect()
}

fn diff2(f: &[f64], h: f64, fourth: bool) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            if fourth && i >= 2 && i + 2 < n {
                (-f[i + 2] + 16.0 * f[i + 1] - 30.0 * f[i] + 16.0 * f[i - 1] - f[i - 2]) / (12.0 * h * h)
            } else if i >= 1 && i + 1 < n {
                (f[i + 1] - 2.0 * f[i] + f[i - 1]) / (h * h)
            } else {
                0.0
            }
        })
        .collect()
}

fn diff1_second_order(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            if i >= 1 && i + 1 < n {
                (f[i + 1] - f[i - 1]) / (2.0 * h)
            } else {
                0.0
            }
        })
        .collect()
}

fn along_x(values: &Array2<f64>, op: impl Fn(&[f64]) -> Vec<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(values.raw_dim());
    for (j, col) in values.columns().into_iter().enumerate() {
        let d = op(&col.to_vec());
        for (i, x) in d.into_iter().enumerate() {
            out[[i, j]] = x;
        }
    }
    out
}

fn along_v(values: &Array2<f64>, op: impl Fn(&[f64]) -> Vec<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(values.raw_dim());
    for (i, row) in values.rows().into_iter().enumerate() {
        let d = op(&row.to_vec());
        for (j, x) in d.into_iter().enumerate() {
            out[[i, j]] = x;
        }
    }
    out
}

fn derivative_x(values: &Array2<f64>, h: f64) -> Array2<f64> {
    along_x(values, |f| diff1(f, h))
}

fn derivative_v(values: &Array2<f64>, h: f64) -> Array2<f64> {
    along_v(values, |f| diff1(f, h))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WfpResidual {
    /// Right-hand side at every node (zero where stencils do not fit).
    pub residual: Array2<f64>,
    /// max |RHS| over interior nodes
    pub max_abs: f64,
    /// Largest single term, max over interior nodes.
    pub max_term: f64,
    /// max_abs / max_term
    pub relative: f64,
    /// max |RHS₄ − RHS₂| over the interior, a discretization error proxy
    pub stencil_gap: f64,
}

/// Right side of the Wigner–Fokker–Planck equation,
/// ω²x∂ᵥw − v∂ₓw + 2γ∂ᵥ(vw) + D_pp∂²ᵥw + D_qq∂²ₓw + 2D_pq∂ᵥ∂ₓw,
/// evaluated with fourth-order differences on interior nodes.
pub fn wfp_residual(w: &WignerGrid, params: &QfpParams) -> Result<WfpResidual> {
    if !params.potential.is_none() {
        return Err(QfpError::Unsupported(
            "the Wigner-Fokker-Planck residual is only defined without a potential".into(),
        ));
    }
    if w.x.count < 9 || w.v.count < 9 {
        return Err(QfpError::InvalidGrid("residual needs at least 9 nodes per axis".into()));
    }
    let (hx, hv) = (w.x.step, w.v.step);
    let f = &w.values;
    let rhs = |fourth: bool| -> (Array2<f64>, f64) {
        let d1 = |g: &[f64], h: f64| if fourth { diff1(g, h) } else { diff1_second_order(g, h) };
        let wx = along_x(f, |g| d1(g, hx));
        let wv = along_v(f, |g| d1(g, hv));
        let wxx = along_x(f, |g| diff2(g, hx, fourth));
        let wvv = along_v(f, |g| diff2(g, hv, fourth));
        let wxv = along_v(&wx, |g| d1(g, hv));
        let mut out = Array2::zeros(f.raw_dim());
        let mut max_term = 0.0_f64;
        let w2 = params.omega * params.omega;
        for i in w.x.interior() {
            let x = w.x.node(i);
            for j in w.v.interior() {
                let v = w.v.node(j);
                let terms = [
                    w2 * x * wv[[i, j]],
                    -v * wx[[i, j]],
                    2.0 * params.gamma * (f[[i, j]] + v * wv[[i, j]]),
                    params.d_pp * wvv[[i, j]],
                    params.d_qq * wxx[[i, j]],
                    2.0 * params.d_pq * wxv[[i, j]],
                ];
                for t in terms {
                    max_term = max_term.max(t.abs());
                }
                out[[i, j]] = terms.iter().sum();
            }
        }
        (out, max_term)
    };
    let (res4, max_term) = rhs(true);
    let (res2, _) = rhs(false);
    let mut max_abs = 0.0_f64;
    let mut stencil_gap = 0.0_f64;
    for i in w.x.interior() {
        for j in w.v.interior() {
            max_abs = max_abs.max(res4[[i, j]].abs());
            stencil_gap = stencil_gap.max((res4[[i, j]] - res2[[i, j]]).abs());
        }
    }
    if stencil_gap > 0.5 * max_term {
        return Err(QfpError::GridTooCoarse(format!(
            "second- and fourth-order stencils differ by {stencil_gap:e} against terms of size {max_term:e}"
        )));
    }
    Ok(WfpResidual {
        residual: res4,
        max_abs,
        max_term,
        relative: if max_term > 0.0 { max_abs / max_term } else { 0.0 },
        stencil_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn axis_construction() {
        let a = UniformAxis::symmetric(2.0, 5).unwrap();
        assert_eq!(a.nodes(), vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert!(a.is_symmetric());
        assert!(UniformAxis::new(1, 0.0, 1.0).is_err());
        assert!(UniformAxis::new(4, 0.0, 0.0).is_err());
        assert_eq!(a.interior(), 1..4);
    }

    #[test]
    fn ground_state_kernel() {
        let rho = DensityMatrix::fock(10, 0).unwrap();
        let axis = UniformAxis::symmetric(6.0, 121).unwrap();
        let k = density_kernel(&rho, &axis).unwrap();
        for (i, x) in axis.nodes().into_iter().enumerate().step_by(7) {
            for (j, y) in axis.nodes().into_iter().enumerate().step_by(5) {
                let expected = (-(x * x + y * y) / 2.0).exp() / PI.sqrt();
                assert_abs_diff_eq!(k[[i, j]].re, expected, epsilon = 1e-12);
                assert_abs_diff_eq!(k[[i, j]].im, 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn kernel_diagonal_and_hermiticity() {
        let rho = DensityMatrix::random(12, 8, 4).unwrap();
        let axis = UniformAxis::symmetric(9.0, 241).unwrap();
        let k = density_kernel(&rho, &axis).unwrap();
        let diag: f64 = (0..axis.count).map(|i| k[[i, i]].re).sum::<f64>() * axis.step;
        assert_abs_diff_eq!(diag, 1.0, epsilon = 1e-6);
        for i in 0..axis.count {
            for j in 0..axis.count {
                assert!((k[[i, j]] - k[[j, i]].conj()).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn kernel_grid_checks() {
        let rho = DensityMatrix::fock(40, 0).unwrap();
        assert!(matches!(
            density_kernel(&rho, &UniformAxis::symmetric(6.0, 21).unwrap()),
            Err(QfpError::GridTooCoarse(_))
        ));
        assert!(matches!(
            density_kernel(&rho, &UniformAxis::new(200, -5.0, 0.05).unwrap()),
            Err(QfpError::InvalidGrid(_))
        ));
    }

    #[test]
    fn ground_and_first_excited_wigner() {
        let spec = GridSpec::symmetric(6.0, 61, 6.0, 61).unwrap();
        let w0 = wigner_transform(&DensityMatrix::fock(12, 0).unwrap(), &spec).unwrap();
        for i in (0..61).step_by(4) {
            for j in (0..61).step_by(3) {
                let (x, v) = (spec.x.node(i), spec.v.node(j));
                assert_abs_diff_eq!(w0.values[[i, j]], (-x * x - v * v).exp() / PI, epsilon = 1e-6);
            }
        }
        let w1 = wigner_transform(&DensityMatrix::fock(12, 1).unwrap(), &spec).unwrap();
        assert_abs_diff_eq!(w1.values[[30, 30]], -1.0 / PI, epsilon = 1e-10);
        // W₁ = (2(x² + v²) − 1) e^{−x²−v²}/π
        let (x, v) = (spec.x.node(40), spec.v.node(17));
        let r2 = x * x + v * v;
        assert_abs_diff_eq!(w1.values[[40, 17]], (2.0 * r2 - 1.0) * (-r2).exp() / PI, epsilon = 1e-10);
        assert!(w1.imag_residue < 1e-10);
    }

    #[test]
    fn off_center_v_axis() {
        // v nodes that are not multiples of the spacing
        let rho = DensityMatrix::coherent(20, Complex64::new(0.5, 0.8)).unwrap();
        let spec = GridSpec {
            x: UniformAxis::new(50, -6.3, 0.25).unwrap(),
            v: UniformAxis::new(47, -5.17, 0.23).unwrap(),
        };
        let w = wigner_transform(&rho, &spec).unwrap();
        // coherent state: Gaussian centred at (√2 Re α, √2 Im α)
        let (x0, v0) = (2f64.sqrt() * 0.5, 2f64.sqrt() * 0.8);
        for (i, j) in [(10, 10), (25, 30), (31, 40)] {
            let (x, v) = (spec.x.node(i), spec.v.node(j));
            let expected = (-(x - x0).powi(2) - (v - v0).powi(2)).exp() / PI;
            assert_abs_diff_eq!(w.values[[i, j]], expected, epsilon = 1e-8);
        }
    }

    #[test]
    fn small_grid_is_detected() {
        let rho = DensityMatrix::coherent(30, Complex64::new(2.0, 0.0)).unwrap();
        let spec = GridSpec::symmetric(2.0, 41, 2.0, 41).unwrap();
        assert!(matches!(wigner_transform(&rho, &spec), Err(QfpError::GridTooSmall(_))));
    }

    #[test]
    fn characteristic_of_vacuum() {
        let rho = DensityMatrix::fock(8, 0).unwrap();
        for (xi, eta) in [(0.0, 0.0), (1.0, 0.5), (-2.0, 3.0)] {
            let s = characteristic_function(&rho, xi, eta).unwrap();
            let expected = (-(xi * xi + eta * eta) / 4.0f64).exp();
            assert_abs_diff_eq!(s.value.re, expected, epsilon = 1e-10);
            assert_abs_diff_eq!(s.value.im, 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn characteristic_routes_agree_and_bounded() {
        let rho = DensityMatrix::random(10, 6, 9).unwrap();
        let axis = UniformAxis::symmetric(3.0, 7).unwrap();
        let grid = characteristic_grid(&rho, &axis, &axis).unwrap();
        for (i, xi) in axis.nodes().into_iter().enumerate() {
            for (j, eta) in axis.nodes().into_iter().enumerate() {
                let s = characteristic_function(&rho, xi, eta).unwrap();
                assert!((s.value - grid[[i, j]]).norm() < 1e-10);
                assert!(s.value.norm() <= 1.0 + 1e-12);
            }
        }
        assert_abs_diff_eq!(grid[[3, 3]].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn characteristic_guard() {
        let rho = DensityMatrix::fock(40, 0).unwrap();
        assert!(matches!(
            characteristic_function(&rho, 30.0, 0.0),
            Err(QfpError::CharacteristicGuard { .. })
        ));
    }

    #[test]
    fn pipelines_agree() {
        let rho = DensityMatrix::thermal(20, 1.0, 1.0).unwrap();
        let a = wigner_from_characteristic(&rho, 64, 10.0).unwrap();
        let spec = GridSpec { x: a.x, v: a.v };
        let b = wigner_transform(&rho, &spec).unwrap();
        assert!(a.interior_max_diff(&b).unwrap() < 1e-8);
        assert!(matches!(wigner_from_characteristic(&rho, 30, 10.0), Err(QfpError::InvalidGrid(_))));
    }

    #[test]
    fn vacuum_dictionary_first_moments_vanish() {
        let rho = DensityMatrix::fock(16, 0).unwrap();
        let w = wigner_transform(&rho, &GridSpec::symmetric(7.0, 141, 7.0, 141).unwrap()).unwrap();
        let d = dictionary_moments(&rho, &w).unwrap();
        assert!(d.row("x").unwrap().phase_space.abs() < 1e-8);
        assert!(d.row("v").unwrap().phase_space.abs() < 1e-8);
        assert!(d.max_residual < 1e-6, "{d:?}");
    }

    #[test]
    fn thermal_dictionary() {
        let n = 40;
        let rho = DensityMatrix::thermal(n, 1.0, 1.0).unwrap();
        let w = wigner_transform(&rho, &GridSpec::symmetric(9.0, 181, 9.0, 181).unwrap()).unwrap();
        assert_abs_diff_eq!(w.mass, 1.0, epsilon = 1e-4);
        let mean_n = 1.0 / (1f64.exp() - 1.0);
        let second = w.integrate(|x, v| x * x + v * v);
        assert_abs_diff_eq!(second, 2.0 * mean_n + 1.0, epsilon = 1e-4);
        let d = dictionary_moments(&rho, &w).unwrap();
        assert!(d.max_residual <= 1e-4, "{d:?}");
    }

    #[test]
    fn binary_and_csv_round_trip() {
        let rho = DensityMatrix::fock(6, 1).unwrap();
        let w = wigner_transform(&rho, &GridSpec::symmetric(6.0, 25, 6.0, 21).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (bin, json) = (dir.path().join("w.bin"), dir.path().join("w.json"));
        w.save_binary(&bin, &json).unwrap();
        assert_eq!(std::fs::metadata(&bin).unwrap().len(), 8 * 25 * 21);
        let back = WignerGrid::load_binary(&bin, &json).unwrap();
        assert_eq!(back, w);
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("x,v,w"));
        assert_eq!(text.lines().count(), 25 * 21 + 1);
    }

    #[test]
    fn wfp_negative_control() {
        let params = QfpParams::harmonic(1.0, 0.5, 1.0, 0.5, 0.0);
        let w = wigner_transform(&DensityMatrix::fock(16, 0).unwrap(), &GridSpec::symmetric(7.0, 141, 7.0, 141).unwrap())
            .unwrap();
        let r = wfp_residual(&w, &params).unwrap();
        assert!(r.relative > 0.1, "{}", r.relative);
    }

    #[test]
    fn wfp_requires_harmonic() {
        let params = QfpParams::harmonic(1.0, 0.5, 1.0, 0.5, 0.0)
            .with_potential(crate::fock::PotentialSpec::SoftLinear { lambda: 1.0 });
        let w = wigner_transform(&DensityMatrix::fock(8, 0).unwrap(), &GridSpec::symmetric(6.0, 41, 6.0, 41).unwrap())
            .unwrap();
        assert!(matches!(wfp_residual(&w, &params), Err(QfpError::Unsupported(_))));
    }

    #[test]
    fn wfp_residual_of_gaussian_steady_state() {
        let params = QfpParams::harmonic(1.0, 0.5, 1.0, 0.5, 0.0);
        let (_, rho) = crate::steady::gaussian_reference(&params, 40).unwrap();
        let w = wigner_transform(&rho, &GridSpec::symmetric(8.0, 161, 8.0, 161).unwrap()).unwrap();
        // positive up to truncation ripple in the far tails
        let floor = -1e-8 * w.max_abs();
        assert!(w.values.iter().all(|&x| x > floor));
        let r = wfp_residual(&w, &params).unwrap();
        assert!(r.relative < 1e-3, "{}", r.relative);
    }
}
