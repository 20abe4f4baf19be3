//! Radial discretization of R^N.
//!
//! Functions here are radial profiles u(r) on [0, r_max] sampled at nodes
//! r_0 = 0 < r_1 < ... < r_M = r_max, with quadrature weights that carry the
//! full R^N measure S_{N-1} r^{N-1} dr. The weights are the exact moments of
//! the piecewise-linear hat functions against that measure, so
//!
//!   * the weights sum to the ball volume exactly (to roundoff), and
//!   * polynomials of degree <= 1 in r are integrated exactly.
//!
//! Decay at infinity becomes a Dirichlet cutoff at r_max (u_M = 0); the
//! Strauss bound for radial H^1 functions makes that benign, and
//! [`RadialProfile::strauss_ratio`] exposes the corresponding diagnostic.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Surface area of the unit sphere S^{N-1}: 2 pi^{N/2} / Gamma(N/2).
pub fn sphere_area(dim: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(dim as f64 / 2.0) / gamma_half(dim)
}

/// Volume of the ball of radius r in R^N.
pub fn ball_volume(dim: usize, r: f64) -> f64 {
    sphere_area(dim) * r.powi(dim as i32) / dim as f64
}

/// Gamma(n/2) for integer n >= 1.
fn gamma_half(n: usize) -> f64 {
    if n.is_multiple_of(2) {
        // Gamma(k) = (k-1)!
        let k = n / 2;
        (1..k).map(|i| i as f64).product()
    } else {
        // Gamma(k + 1/2) = (2k)! sqrt(pi) / (4^k k!)
        let k = (n - 1) / 2;
        let mut v = std::f64::consts::PI.sqrt();
        for i in 1..=k {
            v *= i as f64 - 0.5;
        }
        v
    }
}

/// Weighted 1-D discretization of radial functions on R^N, N >= 3.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    dim: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Exact measure of each cell [r_i, r_{i+1}].
    cell_vols: Vec<f64>,
    spacings: Vec<f64>,
}

impl RadialGrid {
    /// Build a grid with `m` cells (m+1 nodes) on [0, r_max].
    ///
    /// `stretch` is the ratio of the last spacing to the first; 1 gives a
    /// uniform grid, larger values concentrate nodes near the origin.
    pub fn build(dim: usize, r_max: f64, m: usize, stretch: f64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::BadDimension { dim });
        }
        assert!(m >= 64, "grid needs at least 64 cells");
        assert!(r_max > 0.0 && stretch >= 1.0);
        let mut nodes = Vec::with_capacity(m + 1);
        if stretch == 1.0 {
            let h = r_max / m as f64;
            for i in 0..=m {
                nodes.push(i as f64 * h);
            }
            nodes[m] = r_max;
        } else {
            let q = stretch.powf(1.0 / (m as f64 - 1.0));
            // spacings h0 * q^i, normalized to sum to r_max
            let total = if (q - 1.0).abs() < 1e-14 {
                m as f64
            } else {
                (q.powi(m as i32) - 1.0) / (q - 1.0)
            };
            let h0 = r_max / total;
            let mut r = 0.0;
            nodes.push(0.0);
            for i in 0..m {
                r += h0 * q.powi(i as i32);
                nodes.push(r);
            }
            nodes[m] = r_max;
        }
        Self::from_nodes(dim, nodes)
    }

    /// Build a grid from explicit node positions (r_0 = 0 required).
    pub fn from_nodes(dim: usize, nodes: Vec<f64>) -> Result<Self> {
        if dim < 3 {
            return Err(Error::BadDimension { dim });
        }
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::Invalid("grid nodes must start at r = 0".into()));
        }
        for w in nodes.windows(2) {
            // also rejects NaN nodes
            if w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Invalid("grid nodes must increase strictly".into()));
            }
        }
        let s = sphere_area(dim);
        let n = dim as i32;
        let m = nodes.len() - 1;
        let mut weights = vec![0.0; m + 1];
        let mut cell_vols = Vec::with_capacity(m);
        let mut spacings = Vec::with_capacity(m);
        for c in 0..m {
            let (a, b) = (nodes[c], nodes[c + 1]);
            let h = b - a;
            let vol = s * (b.powi(n) - a.powi(n)) / dim as f64;
            // moment of the rising hat (r - a)/h on the cell
            let up = s * ((b.powi(n + 1) - a.powi(n + 1)) / (dim as f64 + 1.0)
                - a * (b.powi(n) - a.powi(n)) / dim as f64)
                / h;
            weights[c] += vol - up;
            weights[c + 1] += up;
            cell_vols.push(vol);
            spacings.push(h);
        }
        Ok(Self {
            dim,
            nodes,
            weights,
            cell_vols,
            spacings,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }
    /// Number of cells; the grid has `m() + 1` nodes.
    pub fn m(&self) -> usize {
        self.nodes.len() - 1
    }
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn cell_vols(&self) -> &[f64] {
        &self.cell_vols
    }
    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    /// Integrate a nodewise-sampled integrand against the R^N measure.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        (0..self.nodes.len()).map(|i| self.weights[i] * f(i)).sum()
    }

    /// Sample a function of r into a profile (last node forced to zero).
    pub fn sample(self: &Arc<Self>, f: impl Fn(f64) -> f64) -> RadialProfile {
        let mut values: Vec<f64> = self.nodes.iter().map(|&r| f(r)).collect();
        *values.last_mut().unwrap() = 0.0;
        RadialProfile {
            grid: Arc::clone(self),
            values,
        }
    }

    pub fn zero_profile(self: &Arc<Self>) -> RadialProfile {
        RadialProfile {
            grid: Arc::clone(self),
            values: vec![0.0; self.nodes.len()],
        }
    }
}

/// The canonical plateau profile: s0 on [0, r_n], linear down to 0 on
/// [r_n, r_n + 1], zero beyond. Certifies J^{<0} is nonempty for R(s0) < 0
/// once r_n is large.
pub fn bump(grid: &Arc<RadialGrid>, s0: f64, r_n: f64) -> Result<RadialProfile> {
    if r_n + 1.0 > grid.r_max() {
        return Err(Error::PlateauTooLarge {
            r_n,
            r_max: grid.r_max(),
        });
    }
    Ok(plateau_profile(grid, s0, r_n, 1.0))
}

/// Generalized plateau with configurable ramp width (the solver's
/// initializer family; width 1 is the canonical bump).
pub fn plateau_profile(grid: &Arc<RadialGrid>, s0: f64, r_n: f64, width: f64) -> RadialProfile {
    grid.sample(|r| {
        if r <= r_n {
            s0
        } else if r < r_n + width {
            s0 * (1.0 - (r - r_n) / width)
        } else {
            0.0
        }
    })
}

/// Norms of a radial profile. `h1_sq` uses nodal centered differences with
/// u'(0) = 0 enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub l2_sq: f64,
    pub h1_sq: f64,
    pub linf: f64,
}

/// A radial function sampled on a shared grid. Values are finite and the
/// last node is pinned to zero (Dirichlet truncation of decay at infinity).
#[derive(Debug, Clone)]
pub struct RadialProfile {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialProfile {
    pub fn new(grid: Arc<RadialGrid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.nodes().len() {
            return Err(Error::Invalid(format!(
                "profile has {} values for a grid with {} nodes",
                values.len(),
                grid.nodes().len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("profile values must be finite".into()));
        }
        *values.last_mut().unwrap() = 0.0;
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn l2_sq(&self) -> f64 {
        self.grid.integrate(|i| self.values[i] * self.values[i])
    }

    /// Nodal centered derivative; u'(0) = 0, one-sided at r_max.
    pub fn nodal_derivative(&self) -> Vec<f64> {
        let r = self.grid.nodes();
        let u = &self.values;
        let m = self.grid.m();
        let mut d = vec![0.0; m + 1];
        for i in 1..m {
            d[i] = (u[i + 1] - u[i - 1]) / (r[i + 1] - r[i - 1]);
        }
        d[m] = (u[m] - u[m - 1]) / (r[m] - r[m - 1]);
        d
    }

    pub fn norms(&self) -> NormReport {
        let l2_sq = self.l2_sq();
        let d = self.nodal_derivative();
        let grad_sq = self.grid.integrate(|i| d[i] * d[i]);
        NormReport {
            l2_sq,
            h1_sq: l2_sq + grad_sq,
            linf: self.linf(),
        }
    }

    /// The value-set restriction u_I: u where u(x) in I = (a, b), zero
    /// elsewhere, nodewise.
    pub fn restrict(&self, a: f64, b: f64) -> RadialProfile {
        let values = self
            .values
            .iter()
            .map(|&v| if v > a && v < b { v } else { 0.0 })
            .collect();
        RadialProfile {
            grid: Arc::clone(&self.grid),
            values,
        }
    }

    /// Measure of the set {x : u(x) in (a,b)} via the characteristic
    /// function's quadrature weights.
    pub fn measure_where(&self, a: f64, b: f64) -> f64 {
        self.grid
            .integrate(|i| if self.values[i] > a && self.values[i] < b { 1.0 } else { 0.0 })
    }

    /// max over r >= beta of |u(r)| r^{(N-1)/2} / ||u||_{H^1}; stays bounded
    /// under refinement by the Strauss inequality for radial functions.
    pub fn strauss_ratio(&self, beta: f64) -> f64 {
        assert!(beta < self.grid.r_max(), "beta must lie inside the grid");
        let h1 = self.norms().h1_sq.sqrt();
        if h1 == 0.0 {
            return 0.0;
        }
        let p = (self.grid.dim() as f64 - 1.0) / 2.0;
        self.grid
            .nodes()
            .iter()
            .zip(&self.values)
            .filter(|(&r, _)| r >= beta)
            .map(|(&r, &u)| u.abs() * r.powf(p))
            .fold(0.0, f64::max)
            / h1
    }

    /// Evaluate by linear interpolation; zero beyond r_max.
    pub fn eval_linear(&self, r: f64) -> f64 {
        let nodes = self.grid.nodes();
        if r <= 0.0 {
            return self.values[0];
        }
        if r >= self.grid.r_max() {
            return 0.0;
        }
        let idx = match nodes.binary_search_by(|n| n.partial_cmp(&r).unwrap()) {
            Ok(i) => return self.values[i],
            Err(i) => i,
        };
        let (r0, r1) = (nodes[idx - 1], nodes[idx]);
        let t = (r - r0) / (r1 - r0);
        self.values[idx - 1] * (1.0 - t) + self.values[idx] * t
    }

    /// Serialize as two-column CSV with a header comment carrying the grid
    /// metadata. Full-precision floats; re-parsing reproduces the profile
    /// bit-exactly.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# dim={} r_max={}", self.grid.dim(), self.grid.r_max());
        let _ = writeln!(s, "r,u");
        for (r, u) in self.grid.nodes().iter().zip(&self.values) {
            let _ = writeln!(s, "{r},{u}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut dim: Option<usize> = None;
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line == "r,u" {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                for tok in meta.split_whitespace() {
                    if let Some(d) = tok.strip_prefix("dim=") {
                        dim = Some(d.parse().map_err(|_| {
                            Error::Invalid(format!("bad dim in profile header: {tok}"))
                        })?);
                    }
                }
                continue;
            }
            let mut parts = line.split(',');
            let r: f64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Invalid(format!("bad profile row: {line}")))?;
            let u: f64 = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Invalid(format!("bad profile row: {line}")))?;
            nodes.push(r);
            values.push(u);
        }
        let dim = dim.ok_or_else(|| Error::Invalid("profile header missing dim=".into()))?;
        let grid = Arc::new(RadialGrid::from_nodes(dim, nodes)?);
        RadialProfile::new(grid, values)
    }
}
