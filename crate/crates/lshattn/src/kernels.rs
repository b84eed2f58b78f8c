//! Ground-truth kernels and the random-feature approximation.
//!
//! The base kernel is the unit-bandwidth Gaussian `k(z) = exp(-z^2/2)`;
//! bandwidth generalization is a scale on the inputs, not the kernel. The
//! truncated variant zeroes the kernel outside an interaction support, either
//! a k-NN pair set or a radial cutoff.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::SupportSet;

/// The unit-bandwidth Gaussian kernel `exp(-z^2/2)` at distance `z >= 0`.
pub fn gaussian_eval(z: f64) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(Error::invalid(format!("kernel distance must be nonnegative, got {z}")));
    }
    Ok(gaussian(z))
}

#[inline]
pub(crate) fn gaussian(z: f64) -> f64 {
    (-0.5 * z * z).exp()
}

/// Interaction support for a truncated kernel.
#[derive(Debug, Clone, Copy)]
pub enum Support<'a> {
    /// Nonzero exactly on the given ordered pair set.
    Pairs(&'a SupportSet),
    /// Nonzero exactly for distances `z <= radius` (radial bounded support).
    Radius(f64),
}

/// Gaussian kernel that is exactly zero outside its support.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedKernel<'a> {
    support: Support<'a>,
}

impl<'a> TruncatedKernel<'a> {
    pub fn new(support: Support<'a>) -> Self {
        TruncatedKernel { support }
    }

    pub fn from_support(support: &'a SupportSet) -> Self {
        TruncatedKernel { support: Support::Pairs(support) }
    }

    pub fn in_support(&self, u: usize, v: usize, z: f64) -> bool {
        match self.support {
            Support::Pairs(s) => s.contains(u, v),
            Support::Radius(r) => z <= r,
        }
    }

    /// Kernel value for the ordered pair `(u, v)` at distance `z`.
    pub fn eval(&self, u: usize, v: usize, z: f64) -> Result<f64> {
        if u == v {
            return Err(Error::invalid("truncated kernel is undefined on diagonal pairs"));
        }
        if !(z >= 0.0) {
            return Err(Error::invalid("kernel distance must be nonnegative"));
        }
        Ok(if self.in_support(u, v, z) { gaussian(z) } else { 0.0 })
    }
}

/// Concatenate a query/key vector with `sqrt(2*omega)`-scaled coordinates.
///
/// Applying the Gaussian kernel to two such vectors factorizes into
/// `exp(-||q-k||^2/2) * exp(-omega*||rho_u-rho_v||^2)`.
pub fn concat_scaled_coords(
    vec: ArrayView1<'_, f64>,
    coords: ArrayView1<'_, f64>,
    omega: f64,
) -> Result<Array1<f64>> {
    if !(omega > 0.0) {
        return Err(Error::invalid(format!("omega must be positive, got {omega}")));
    }
    let scale = (2.0 * omega).sqrt();
    let mut out = Array1::zeros(vec.len() + coords.len());
    for (i, &v) in vec.iter().enumerate() {
        out[i] = v;
    }
    for (j, &c) in coords.iter().enumerate() {
        out[vec.len() + j] = scale * c;
    }
    Ok(out)
}

/// A random Fourier feature map for the unit-bandwidth Gaussian kernel.
///
/// `features(x)^T features(y)` is an unbiased estimator of `exp(-||x-y||^2/2)`.
/// The spectral distribution of the Gaussian kernel is the standard normal,
/// so frequency rows are i.i.d. `N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RffMap {
    // (D/2) x dim frequency matrix.
    freqs: Array2<f64>,
    seed: u64,
}

impl RffMap {
    pub fn new(dim: usize, n_features: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature map input dimension must be at least 1"));
        }
        if n_features == 0 || n_features % 2 != 0 {
            return Err(Error::invalid(format!(
                "feature count must be a positive even number, got {n_features}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let freqs = Array2::from_shape_fn((n_features / 2, dim), |_| rng.sample(StandardNormal));
        Ok(RffMap { freqs, seed })
    }

    pub fn from_freqs(freqs: Array2<f64>) -> Result<Self> {
        if freqs.nrows() == 0 || freqs.ncols() == 0 {
            return Err(Error::invalid("frequency matrix must be nonempty"));
        }
        Ok(RffMap { freqs, seed: 0 })
    }

    pub fn dim(&self) -> usize {
        self.freqs.ncols()
    }

    /// Feature dimension `D` (always even).
    pub fn n_features(&self) -> usize {
        2 * self.freqs.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The length-`D` feature vector `sqrt(2/D) * (sin w_i.x, cos w_i.x, ...)`.
    pub fn features(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!(
                "input has dimension {}, feature map expects {}",
                x.len(),
                self.dim()
            )));
        }
        let d = self.n_features();
        let scale = (2.0 / d as f64).sqrt();
        let mut out = Array1::zeros(d);
        for (i, w) in self.freqs.rows().into_iter().enumerate() {
            let proj: f64 = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            out[2 * i] = scale * proj.sin();
            out[2 * i + 1] = scale * proj.cos();
        }
        Ok(out)
    }

    /// Row-wise features for a whole point matrix, `n x D`.
    pub fn features_matrix(&self, points: &Array2<f64>) -> Result<Array2<f64>> {
        if points.ncols() != self.dim() {
            return Err(Error::dim(format!(
                "points have dimension {}, feature map expects {}",
                points.ncols(),
                self.dim()
            )));
        }
        let n = points.nrows();
        let d = self.n_features();
        let scale = (2.0 / d as f64).sqrt();
        let mut out = Array2::zeros((n, d));
        for u in 0..n {
            let x = points.row(u);
            for (i, w) in self.freqs.rows().into_iter().enumerate() {
                let proj: f64 = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
                out[[u, 2 * i]] = scale * proj.sin();
                out[[u, 2 * i + 1]] = scale * proj.cos();
            }
        }
        Ok(out)
    }

    /// Write frequency rows as CSV (one row per frequency, `dim` columns).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = Vec::with_capacity(self.dim());
        header.extend((0..self.dim()).map(|j| format!("w{j}")));
        w.write_record(&header)?;
        for row in self.freqs.rows() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let dim = r.headers()?.len();
        let mut rows = Vec::new();
        let mut count = 0usize;
        for record in r.records() {
            let record = record?;
            for field in record.iter() {
                rows.push(field.parse::<f64>().map_err(|e| Error::invalid(e.to_string()))?);
            }
            count += 1;
        }
        let freqs = Array2::from_shape_vec((count, dim), rows)
            .map_err(|e| Error::invalid(e.to_string()))?;
        RffMap::from_freqs(freqs)
    }
}

/// Analytic per-pair mean squared error of the RFF estimator at distance `z`:
/// `(1/D) * (1 + k(2z) - 2k(z)^2)`.
pub fn rff_mse_expected(z: f64, n_features: usize) -> Result<f64> {
    if n_features == 0 || n_features % 2 != 0 {
        return Err(Error::invalid(format!(
            "feature count must be a positive even number, got {n_features}"
        )));
    }
    if !(z >= 0.0) {
        return Err(Error::invalid("kernel distance must be nonnegative"));
    }
    let k = gaussian(z);
    Ok((1.0 + gaussian(2.0 * z) - 2.0 * k * k) / n_features as f64)
}
