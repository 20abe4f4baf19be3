//! Scalar nonlinear terms and their well structure.
//!
//! A [`Nonlinearity`] represents the density R(s) appearing under the
//! gradient term of the energy, split as R = (optional) ½Ω²s² + T with
//! T(0) = T'(0) = T''(0) = 0. Everything is even in s; all evaluation paths
//! go through |s|, so evenness holds to the bit.
//!
//! The multiplicity machinery needs three constructions on top of plain
//! evaluation:
//!
//!   * [`detect_wells`]: the maximal open intervals where R < 0,
//!   * [`truncate`]: the modified term R̃_j equal to R below η_j and
//!     nondecreasing beyond, realized as a C² quintic blend of the
//!     derivative to zero followed by a constant plateau,
//!   * [`translate`]: s ↦ R̃_j(s + η_{j-1}).
//!
//! [`max_principle_bound`] computes the smallest s̄ with G' ≥ -tol on
//! [s̄, s_max]; solutions of -Δu + G'(u) = 0 then satisfy ‖u‖∞ ≤ s̄.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Anything that evaluates like a scalar density with two derivatives.
pub trait ScalarTerm {
    fn value(&self, s: f64) -> f64;
    fn deriv(&self, s: f64) -> f64;
    fn deriv2(&self, s: f64) -> f64;
}

/// Growth metadata for the (H3)-style bound |T''(s)| ≤ c1 s^{p-2} + c2 s^{q-2}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthBounds {
    pub p: f64,
    pub q: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Coercivity metadata for the (H4)-style bound T(s) ≥ -c3 s² - c4 |s|^γ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoercivityBounds {
    pub c3: f64,
    pub c4: f64,
    pub gamma_exp: f64,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// The evaluable shape of the T-part.
#[derive(Clone)]
pub enum NonlinearityForm {
    /// Polynomial in s²: `coeffs[k]` multiplies s^{2(k+1)} (no constant or s²⁰
    /// term, so T(0) = T'(0) = 0 by construction).
    PolyS2 { coeffs: Vec<f64> },
    /// -a |s|^p + b |s|^q with p, q > 2.
    PowerWell { a: f64, p: f64, b: f64, q: f64 },
    /// Piecewise quintic Hermite: knots carry (s, value, deriv, deriv2) and
    /// the interpolant matches all three at every knot, hence is C².
    /// Quadratic C² extension beyond the last knot.
    Table { knots: Vec<TableKnot> },
    /// User-supplied closures, symmetrized via |s|. Not expressible in the
    /// problem-file grammar.
    Custom {
        value: ScalarFn,
        deriv: ScalarFn,
        deriv2: ScalarFn,
    },
}

impl std::fmt::Debug for NonlinearityForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::PolyS2 { coeffs } => f.debug_struct("PolyS2").field("coeffs", coeffs).finish(),
            Self::PowerWell { a, p, b, q } => f
                .debug_struct("PowerWell")
                .field("a", a)
                .field("p", p)
                .field("b", b)
                .field("q", q)
                .finish(),
            Self::Table { knots } => f.debug_struct("Table").field("knots", &knots.len()).finish(),
            Self::Custom { .. } => f.write_str("Custom{..}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableKnot {
    pub s: f64,
    pub v: f64,
    pub d: f64,
    pub d2: f64,
}

/// A scalar nonlinear term R(s) = [½Ω²s² +] T(s).
///
/// `omega_in_value` is set for the semilinear elliptic application, where
/// the J-density is the full F = ½Ω²s² + T; the standing-wave applications
/// keep Ω in the K-part and use the bare T as J-density.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    form: NonlinearityForm,
    omega: f64,
    omega_in_value: bool,
    pub growth: Option<GrowthBounds>,
    pub coercivity: Option<CoercivityBounds>,
}

impl Nonlinearity {
    pub fn poly_s2(coeffs: Vec<f64>) -> Self {
        Self {
            form: NonlinearityForm::PolyS2 { coeffs },
            omega: 0.0,
            omega_in_value: false,
            growth: None,
            coercivity: None,
        }
    }

    pub fn power_well(a: f64, p: f64, b: f64, q: f64) -> Result<Self> {
        if p <= 2.0 || q <= 2.0 {
            return Err(Error::Invalid(format!(
                "power well exponents must exceed 2, got p={p} q={q}"
            )));
        }
        Ok(Self {
            form: NonlinearityForm::PowerWell { a, p, b, q },
            omega: 0.0,
            omega_in_value: false,
            growth: None,
            coercivity: None,
        })
    }

    pub fn table(knots: Vec<TableKnot>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Invalid("table needs at least two knots".into()));
        }
        if knots[0].s != 0.0 || knots[0].v != 0.0 || knots[0].d != 0.0 {
            return Err(Error::Invalid(
                "table must start at s=0 with value 0 and derivative 0".into(),
            ));
        }
        for w in knots.windows(2) {
            if w[1].s.partial_cmp(&w[0].s) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Invalid("table knots must increase in s".into()));
            }
        }
        Ok(Self {
            form: NonlinearityForm::Table { knots },
            omega: 0.0,
            omega_in_value: false,
            growth: None,
            coercivity: None,
        })
    }

    /// Wrap user closures for the T-part; they are evaluated at |s| so the
    /// result is even regardless of the input.
    pub fn from_fns(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv2: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            form: NonlinearityForm::Custom {
                value: Arc::new(value),
                deriv: Arc::new(deriv),
                deriv2: Arc::new(deriv2),
            },
            omega: 0.0,
            omega_in_value: false,
            growth: None,
            coercivity: None,
        }
    }

    pub fn with_omega(mut self, omega: f64, baked_into_value: bool) -> Self {
        assert!(omega >= 0.0, "omega must be nonnegative");
        self.omega = omega;
        self.omega_in_value = baked_into_value;
        self
    }

    pub fn with_growth(mut self, g: GrowthBounds) -> Self {
        self.growth = Some(g);
        self
    }

    pub fn with_coercivity(mut self, c: CoercivityBounds) -> Self {
        self.coercivity = Some(c);
        self
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn omega_in_value(&self) -> bool {
        self.omega_in_value
    }
    pub fn form(&self) -> &NonlinearityForm {
        &self.form
    }

    /// T(s): the anharmonic part, always without the Ω-term.
    pub fn t_value(&self, s: f64) -> f64 {
        let x = s.abs();
        match &self.form {
            NonlinearityForm::PolyS2 { coeffs } => {
                let u = x * x;
                let mut acc = 0.0;
                for &c in coeffs.iter().rev() {
                    acc = acc * u + c;
                }
                acc * u
            }
            NonlinearityForm::PowerWell { a, p, b, q } => -a * x.powf(*p) + b * x.powf(*q),
            NonlinearityForm::Table { knots } => table_eval(knots, x, 0),
            NonlinearityForm::Custom { value, .. } => value(x),
        }
    }

    pub fn t_deriv(&self, s: f64) -> f64 {
        let x = s.abs();
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        let raw = match &self.form {
            NonlinearityForm::PolyS2 { coeffs } => {
                let u = x * x;
                let mut acc = 0.0;
                for (k, &c) in coeffs.iter().enumerate().rev() {
                    let pow = 2 * (k + 1);
                    acc = acc * u + c * pow as f64;
                }
                // acc is sum c_k * 2(k+1) * u^k; multiply by x for d/ds
                acc * x
            }
            NonlinearityForm::PowerWell { a, p, b, q } => {
                -a * p * x.powf(p - 1.0) + b * q * x.powf(q - 1.0)
            }
            NonlinearityForm::Table { knots } => table_eval(knots, x, 1),
            NonlinearityForm::Custom { deriv, .. } => deriv(x),
        };
        sign * raw
    }

    pub fn t_deriv2(&self, s: f64) -> f64 {
        let x = s.abs();
        match &self.form {
            NonlinearityForm::PolyS2 { coeffs } => {
                let u = x * x;
                let mut acc = 0.0;
                for (k, &c) in coeffs.iter().enumerate().rev() {
                    let pow = 2 * (k + 1);
                    acc = acc * u + c * (pow * (pow - 1)) as f64;
                }
                acc
            }
            NonlinearityForm::PowerWell { a, p, b, q } => {
                -a * p * (p - 1.0) * x.powf(p - 2.0) + b * q * (q - 1.0) * x.powf(q - 2.0)
            }
            NonlinearityForm::Table { knots } => table_eval(knots, x, 2),
            NonlinearityForm::Custom { deriv2, .. } => deriv2(x),
        }
    }

    /// W(s) = ½Ω²s² + T(s): the Klein-Gordon potential.
    pub fn w_value(&self, s: f64) -> f64 {
        0.5 * self.omega * self.omega * s * s + self.t_value(s)
    }
    pub fn w_deriv(&self, s: f64) -> f64 {
        self.omega * self.omega * s + self.t_deriv(s)
    }
}

impl ScalarTerm for Nonlinearity {
    /// R(s): the J-density (F when Ω is baked in, T otherwise).
    fn value(&self, s: f64) -> f64 {
        let t = self.t_value(s);
        if self.omega_in_value {
            t + 0.5 * self.omega * self.omega * s * s
        } else {
            t
        }
    }

    fn deriv(&self, s: f64) -> f64 {
        let t = self.t_deriv(s);
        if self.omega_in_value {
            t + self.omega * self.omega * s
        } else {
            t
        }
    }

    fn deriv2(&self, s: f64) -> f64 {
        let t = self.t_deriv2(s);
        if self.omega_in_value {
            t + self.omega * self.omega
        } else {
            t
        }
    }
}

/// Quintic Hermite table evaluation. `order` = 0, 1, 2 for value and
/// derivatives in s (caller handles the odd reflection of the derivative).
fn table_eval(knots: &[TableKnot], x: f64, order: usize) -> f64 {
    let last = knots.last().unwrap();
    if x >= last.s {
        // quadratic C^2 extension
        let dx = x - last.s;
        return match order {
            0 => last.v + last.d * dx + 0.5 * last.d2 * dx * dx,
            1 => last.d + last.d2 * dx,
            _ => last.d2,
        };
    }
    let idx = knots.partition_point(|k| k.s <= x).max(1) - 1;
    let (k0, k1) = (&knots[idx], &knots[idx + 1]);
    let h = k1.s - k0.s;
    let t = (x - k0.s) / h;
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    match order {
        0 => {
            let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
            let h01 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
            let h02 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
            let h10 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
            let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
            let h12 = 0.5 * (t3 - 2.0 * t4 + t5);
            k0.v * h00
                + k0.d * h * h01
                + k0.d2 * h * h * h02
                + k1.v * h10
                + k1.d * h * h11
                + k1.d2 * h * h * h12
        }
        1 => {
            let h00 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
            let h01 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
            let h02 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4);
            let h10 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4;
            let h11 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4;
            let h12 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4);
            (k0.v * h00 + k1.v * h10) / h
                + k0.d * h01
                + k1.d * h11
                + k0.d2 * h * h02
                + k1.d2 * h * h12
        }
        _ => {
            let h00 = -60.0 * t + 180.0 * t2 - 120.0 * t3;
            let h01 = -36.0 * t + 96.0 * t2 - 60.0 * t3;
            let h02 = 0.5 * (2.0 - 18.0 * t + 36.0 * t2 - 20.0 * t3);
            let h10 = 60.0 * t - 180.0 * t2 + 120.0 * t3;
            let h11 = -24.0 * t + 84.0 * t2 - 60.0 * t3;
            let h12 = 0.5 * (6.0 * t - 24.0 * t2 + 20.0 * t3);
            (k0.v * h00 + k1.v * h10) / (h * h)
                + (k0.d * h01 + k1.d * h11) / h
                + k0.d2 * h02
                + k1.d2 * h12
        }
    }
}

/// One well of (A1): an open interval (xi, eta) where R < 0. The last well
/// may have `eta = f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Well {
    pub xi: f64,
    pub eta: f64,
}

impl Well {
    pub fn midpoint(&self) -> f64 {
        if self.eta.is_finite() {
            0.5 * (self.xi + self.eta)
        } else {
            self.xi + 1.0
        }
    }
    pub fn width(&self) -> f64 {
        self.eta - self.xi
    }
}

/// The ordered wells C_1, ..., C_ell of assumption (A1).
#[derive(Debug, Clone, PartialEq)]
pub struct WellDecomposition {
    wells: Vec<Well>,
}

impl WellDecomposition {
    pub fn ell(&self) -> usize {
        self.wells.len()
    }
    pub fn wells(&self) -> &[Well] {
        &self.wells
    }
    /// 1-based access: wells are numbered C_1 through C_ell.
    pub fn well(&self, j: usize) -> Result<Well> {
        if j == 0 || j > self.wells.len() {
            return Err(Error::BadWellIndex {
                j,
                ell: self.wells.len(),
            });
        }
        Ok(self.wells[j - 1])
    }
    /// η_{j-1} with η_0 = 0, the shift of the translated modified term.
    pub fn eta_prev(&self, j: usize) -> Result<f64> {
        if j == 0 || j > self.wells.len() {
            return Err(Error::BadWellIndex {
                j,
                ell: self.wells.len(),
            });
        }
        Ok(if j == 1 { 0.0 } else { self.wells[j - 2].eta })
    }
}

/// Locate all maximal open subintervals of (0, s_max) where R < 0 by
/// sampling and bisection. A trailing negative span reaching s_max is
/// reported as an unbounded last well (η_ell = ∞).
pub fn detect_wells(
    nl: &dyn ScalarTerm,
    s_max: f64,
    scan_points: usize,
    root_tol: f64,
) -> Result<WellDecomposition> {
    assert!(s_max > 0.0 && root_tol > 0.0);
    assert!(scan_points >= 64, "well scan needs at least 64 points");
    let h = s_max / scan_points as f64;
    let sample = |i: usize| i as f64 * h;
    let neg: Vec<bool> = (0..=scan_points).map(|i| nl.value(sample(i)) < 0.0).collect();

    let mut wells = Vec::new();
    let mut i = 1;
    while i <= scan_points {
        if !neg[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < scan_points && neg[i + 1] {
            i += 1;
        }
        let end = i;
        // left endpoint: either the origin-touching case or a bisected root
        let xi = if start == 1 {
            0.0
        } else {
            bisect_root(nl, sample(start - 1), sample(start), root_tol)
        };
        let eta = if end == scan_points {
            f64::INFINITY
        } else {
            bisect_root(nl, sample(end), sample(end + 1), root_tol)
        };
        wells.push(Well { xi, eta });
        i += 1;
    }

    if wells.is_empty() {
        return Err(Error::NoWells { s_max, scan_points });
    }
    // interleaving sanity: wells must be separated beyond the root tolerance
    for k in 0..wells.len() {
        let w = wells[k];
        if w.eta.is_finite() && w.eta - w.xi <= root_tol {
            return Err(Error::ResolutionTooCoarse {
                at: w.xi,
                root_tol,
            });
        }
        if k + 1 < wells.len() && wells[k + 1].xi - w.eta <= root_tol {
            return Err(Error::ResolutionTooCoarse {
                at: w.eta,
                root_tol,
            });
        }
    }
    Ok(WellDecomposition { wells })
}

/// Bisect for the sign change of R between a nonnegative and a negative
/// sample (either orientation); returns the midpoint of the final bracket.
fn bisect_root(nl: &dyn ScalarTerm, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let neg_lo = nl.value(lo) < 0.0;
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if (nl.value(mid) < 0.0) == neg_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// R modified above the well's upper endpoint: identical to the base below
/// η_j, rising with a C² quintic-blended derivative across a window, then
/// constant. Optionally translated by η_{j-1}.
#[derive(Debug, Clone)]
pub struct TruncatedNonlinearity {
    base: Nonlinearity,
    pub well_index: usize,
    pub eta: f64,
    pub blend_window: f64,
    pub shift: f64,
    d0: f64,
    d1w: f64,
    value_at_eta: f64,
    plateau: f64,
}

impl TruncatedNonlinearity {
    pub fn base(&self) -> &Nonlinearity {
        &self.base
    }

    /// Plateau value of the flat tail.
    pub fn tail_value(&self) -> f64 {
        self.plateau
    }

    fn eval(&self, x: f64, order: usize) -> f64 {
        if x <= self.eta {
            return match order {
                0 => self.base.value(x),
                1 => self.base.deriv(x),
                _ => self.base.deriv2(x),
            };
        }
        let w = self.blend_window;
        if x >= self.eta + w {
            return match order {
                0 => self.plateau,
                _ => 0.0,
            };
        }
        let t = (x - self.eta) / w;
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let t5 = t4 * t;
        match order {
            0 => {
                // integrals of the derivative blend bases
                let t6 = t3 * t3;
                let int_p1 = t - 2.5 * t4 + 3.0 * t5 - t6;
                let int_p2 = 0.5 * t2 - 1.5 * t4 + 1.6 * t5 - 0.5 * t6;
                self.value_at_eta + w * (self.d0 * int_p1 + self.d1w * int_p2)
            }
            1 => {
                let p1 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
                let p2 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
                self.d0 * p1 + self.d1w * p2
            }
            _ => {
                let dp1 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4;
                let dp2 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4;
                (self.d0 * dp1 + self.d1w * dp2) / w
            }
        }
    }
}

impl ScalarTerm for TruncatedNonlinearity {
    fn value(&self, s: f64) -> f64 {
        self.eval(s.abs() + self.shift, 0)
    }
    fn deriv(&self, s: f64) -> f64 {
        let sign = if s < 0.0 { -1.0 } else { 1.0 };
        sign * self.eval(s.abs() + self.shift, 1)
    }
    fn deriv2(&self, s: f64) -> f64 {
        self.eval(s.abs() + self.shift, 2)
    }
}

/// Build R̃_j for the given well. Fails for the unbounded last well (the
/// theory runs that case untruncated) and when R' at η_j is negative,
/// which would contradict an upward zero crossing.
pub fn truncate(
    nl: &Nonlinearity,
    wells: &WellDecomposition,
    j: usize,
    blend_window: f64,
) -> Result<TruncatedNonlinearity> {
    assert!(blend_window > 0.0);
    let well = wells.well(j)?;
    if !well.eta.is_finite() {
        return Err(Error::LastWellUnbounded { index: j });
    }
    let eta = well.eta;
    let d0 = nl.deriv(eta);
    let d1 = nl.deriv2(eta);
    let slope_tol = 1e-9 * (1.0 + d0.abs() + d1.abs() * blend_window);
    if d0 < -slope_tol {
        return Err(Error::NegativeSlopeAtEndpoint { eta, slope: d0 });
    }
    let d0 = d0.max(0.0);
    // The kept second derivative: clamped so the derivative blend
    // d0*p1 + d1w*p2 stays nonnegative on the window (p2 peaks at ~0.2 and
    // p1 there is ~0.76; the 2*d0 cap keeps the dip impossible).
    let d1w = (d1 * blend_window).max(-2.0 * d0);
    let value_at_eta = nl.value(eta);
    let plateau = value_at_eta + blend_window * (0.5 * d0 + 0.1 * d1w);
    Ok(TruncatedNonlinearity {
        base: nl.clone(),
        well_index: j,
        eta,
        blend_window,
        shift: 0.0,
        d0,
        d1w,
        value_at_eta,
        plateau,
    })
}

/// The translated modified term s ↦ R̃_j(s + η_{j-1}).
pub fn translate(tn: &TruncatedNonlinearity, eta_prev: f64) -> TruncatedNonlinearity {
    assert!(eta_prev >= 0.0);
    let mut out = tn.clone();
    out.shift = eta_prev;
    out
}

/// Smallest s̄ in [s_lo, s_max] with g' ≥ -tol on [s̄, s_max], by scan and
/// bisection. Solutions of -Δu + G'(u) = 0 then obey ‖u‖∞ ≤ s̄.
pub fn max_principle_bound(
    g_deriv: impl Fn(f64) -> f64,
    s_lo: f64,
    s_max: f64,
    tol: f64,
) -> Result<f64> {
    assert!(s_max > s_lo && s_lo >= 0.0 && tol > 0.0);
    const SCAN: usize = 4096;
    let h = (s_max - s_lo) / SCAN as f64;
    let mut last_violation: Option<usize> = None;
    for i in 0..=SCAN {
        if g_deriv(s_lo + i as f64 * h) < -tol {
            last_violation = Some(i);
        }
    }
    let Some(iv) = last_violation else {
        return Ok(s_lo);
    };
    if iv == SCAN {
        return Err(Error::NoBound { s_max });
    }
    let (mut lo, mut hi) = (s_lo + iv as f64 * h, s_lo + (iv + 1) as f64 * h);
    // g(lo) < -tol <= g(hi); refine the crossing of g + tol
    for _ in 0..200 {
        if hi - lo <= 1e-13 * (1.0 + s_max) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if g_deriv(mid) < -tol {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// One inequality check of [`verify_growth`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub holds: bool,
    /// Worst value of (bound - quantity); negative means violated there.
    pub worst_margin: f64,
    pub worst_at: f64,
    pub violations: usize,
}

/// Advisory growth report: (H3) on |T''| and (H4) on T. Failures are
/// reported, never fatal: truncation restores growth control wherever the
/// solver actually uses the term.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GrowthReport {
    pub h3: Option<BoundCheck>,
    pub h4: Option<BoundCheck>,
    /// Set when the (H4) exponent lies outside [2, 2 + 4/N) for the given
    /// dimension.
    pub h4_exponent_out_of_range: bool,
}

pub fn verify_growth(nl: &Nonlinearity, dim: usize, samples: usize) -> GrowthReport {
    let mut rep = GrowthReport::default();
    if let Some(g) = nl.growth {
        rep.h3 = Some(check_bound(samples, |s| {
            g.c1 * s.powf(g.p - 2.0) + g.c2 * s.powf(g.q - 2.0) - nl.t_deriv2(s).abs()
        }));
    }
    if let Some(c) = nl.coercivity {
        rep.h4_exponent_out_of_range =
            !(2.0..2.0 + 4.0 / dim as f64).contains(&c.gamma_exp);
        rep.h4 = Some(check_bound(samples, |s| {
            nl.t_value(s) + c.c3 * s * s + c.c4 * s.powf(c.gamma_exp)
        }));
    }
    rep
}

/// Shared margin scan for [`verify_growth`]-style checks over a log-spaced
/// grid of s in [1e-6, 1e3].
pub fn check_bound(samples: usize, margin: impl Fn(f64) -> f64) -> BoundCheck {
    let samples = samples.max(16);
    let (lo, hi) = (1e-6_f64, 1e3_f64);
    let step = (hi / lo).powf(1.0 / (samples as f64 - 1.0));
    let mut worst = f64::INFINITY;
    let mut worst_at = lo;
    let mut violations = 0;
    let mut s = lo;
    for _ in 0..samples {
        let m = margin(s);
        if m < worst {
            worst = m;
            worst_at = s;
        }
        if m < -1e-12 * (1.0 + m.abs()) {
            violations += 1;
        }
        s *= step;
    }
    BoundCheck {
        holds: violations == 0,
        worst_margin: worst,
        worst_at,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// R(s) = s^4 (s^2 - 1): single well (0, 1).
    fn single_well() -> Nonlinearity {
        Nonlinearity::poly_s2(vec![0.0, -1.0, 1.0])
    }

    /// R(s) = s^4 (s^2-1)(s^2-4)(s^2-9)(s^2-16): wells (1,2) and (3,4).
    pub(crate) fn two_well() -> Nonlinearity {
        // expand (u-1)(u-4)(u-9)(u-16) = u^4 - 30u^3 + 273u^2 - 820u + 576
        // R = u^2 * that, u = s^2 -> coeffs of u^2..u^6
        Nonlinearity::poly_s2(vec![0.0, 576.0, -820.0, 273.0, -30.0, 1.0])
    }

    #[test]
    fn poly_matches_factored_form() {
        let nl = two_well();
        for s in [0.3, 0.9, 1.5, 2.2, 3.6, 4.4] {
            let u: f64 = s * s;
            let direct = u.powi(2) * (u - 1.0) * (u - 4.0) * (u - 9.0) * (u - 16.0);
            assert!((nl.value(s) - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        }
    }

    #[test]
    fn evenness_is_bit_exact() {
        let nl = two_well();
        let pw = Nonlinearity::power_well(1.0, 4.0, 0.01, 6.0).unwrap();
        let mut s = 0.1;
        for _ in 0..1000 {
            s = (s * 1.07) % 9.0 + 1e-3;
            assert_eq!(nl.value(-s), nl.value(s));
            assert_eq!(pw.value(-s), pw.value(s));
            assert_eq!(nl.deriv(-s), -nl.deriv(s));
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let nl = two_well();
        let pw = Nonlinearity::power_well(1.0, 4.0, 0.01, 6.0).unwrap();
        let eps = 1e-5;
        let mut s = 0.05;
        for _ in 0..200 {
            s = (s * 1.13) % 8.0 + 1e-2;
            for n in [&nl, &pw] {
                let fd = (n.value(s + eps) - n.value(s - eps)) / (2.0 * eps);
                assert!(
                    (n.deriv(s) - fd).abs() <= 1e-6 * (1.0 + n.deriv(s).abs()),
                    "deriv mismatch at s={s}: {} vs {fd}",
                    n.deriv(s)
                );
                let fd2 = (n.deriv(s + eps) - n.deriv(s - eps)) / (2.0 * eps);
                assert!((n.deriv2(s) - fd2).abs() <= 1e-5 * (1.0 + n.deriv2(s).abs()));
            }
        }
    }

    #[test]
    fn value_and_slope_vanish_at_origin() {
        for nl in [
            single_well(),
            Nonlinearity::power_well(0.3, 4.0, 0.05, 6.0).unwrap(),
        ] {
            assert_eq!(nl.value(0.0), 0.0);
            assert_eq!(nl.deriv(0.0), 0.0);
        }
    }

    #[test]
    fn detect_no_wells_for_nonnegative_term() {
        // R(s) = s^2 via omega baked into the value
        let nl = Nonlinearity::poly_s2(vec![]).with_omega(2.0_f64.sqrt(), true);
        assert!((nl.value(2.0) - 4.0).abs() < 1e-12);
        match detect_wells(&nl, 10.0, 4096, 1e-10) {
            Err(Error::NoWells { .. }) => {}
            other => panic!("expected NoWells, got {other:?}"),
        }
    }

    #[test]
    fn detect_single_well() {
        let wells = detect_wells(&single_well(), 10.0, 4096, 1e-10).unwrap();
        assert_eq!(wells.ell(), 1);
        let w = wells.well(1).unwrap();
        assert_eq!(w.xi, 0.0);
        assert!((w.eta - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn detect_two_wells() {
        let wells = detect_wells(&two_well(), 10.0, 4096, 1e-10).unwrap();
        assert_eq!(wells.ell(), 2);
        let (w1, w2) = (wells.well(1).unwrap(), wells.well(2).unwrap());
        assert!((w1.xi - 1.0).abs() <= 1e-9 && (w1.eta - 2.0).abs() <= 1e-9);
        assert!((w2.xi - 3.0).abs() <= 1e-9 && (w2.eta - 4.0).abs() <= 1e-9);
        // strict interleaving and negative midpoints
        let mut prev = -1.0;
        for w in wells.wells() {
            assert!(w.xi > prev || (w.xi == 0.0 && prev < 0.0));
            assert!(w.eta > w.xi);
            assert!(two_well().value(w.midpoint()) < 0.0);
            prev = w.eta;
        }
    }

    #[test]
    fn detect_unbounded_last_well() {
        let nl = Nonlinearity::power_well(1.0, 4.0, 0.0, 6.0).unwrap(); // -s^4
        let wells = detect_wells(&nl, 10.0, 4096, 1e-10).unwrap();
        assert_eq!(wells.ell(), 1);
        assert_eq!(wells.well(1).unwrap().xi, 0.0);
        assert!(wells.well(1).unwrap().eta.is_infinite());
    }

    #[test]
    fn truncation_agreement_and_flat_tail() {
        let nl = single_well();
        let wells = detect_wells(&nl, 10.0, 4096, 1e-12).unwrap();
        let tn = truncate(&nl, &wells, 1, 0.5).unwrap();
        // bit-exact agreement below eta
        assert_eq!(tn.value(0.5), nl.value(0.5));
        assert_eq!(tn.value(0.5), -0.046875);
        for i in 0..=100 {
            let s = tn.eta * i as f64 / 100.0;
            assert_eq!(tn.value(s), nl.value(s));
        }
        // constant beyond eta + window
        let v = tn.value(1.5);
        for s in [1.5, 2.0, 5.0, 10.0] {
            assert_eq!(tn.value(s), v);
            assert_eq!(tn.deriv(s), 0.0);
        }
    }

    #[test]
    fn truncation_dominates_on_negative_set() {
        // R̃ >= min(R, 0) everywhere sampled: equality below eta, and the
        // blend keeps R̃ >= 0 >= R wherever R dips negative again.
        let nl = two_well();
        let wells = detect_wells(&nl, 10.0, 4096, 1e-12).unwrap();
        let tn = truncate(&nl, &wells, 1, 0.25).unwrap();
        for i in 0..10_000 {
            let s = 10.0 * i as f64 / 10_000.0;
            assert!(
                tn.value(s) >= nl.value(s).min(0.0) - 1e-12,
                "dominance failed at s={s}"
            );
        }
    }

    #[test]
    fn truncation_is_nondecreasing_beyond_eta() {
        let nl = two_well();
        let wells = detect_wells(&nl, 10.0, 4096, 1e-12).unwrap();
        for j in [1usize, 2] {
            let w = wells.well(j).unwrap();
            let tn = truncate(&nl, &wells, j, 0.25 * w.width()).unwrap();
            // agreement on [0, eta_j]
            for i in 0..=400 {
                let s = w.eta * i as f64 / 400.0;
                assert_eq!(tn.value(s), nl.value(s));
            }
            // f_j' >= 0 from eta_j on
            for i in 0..=2000 {
                let s = w.eta + 6.0 * i as f64 / 2000.0;
                assert!(tn.deriv(s) >= -1e-12, "negative slope at s={s} (j={j})");
            }
        }
    }

    #[test]
    fn truncation_is_c2_at_eta() {
        let nl = two_well();
        let wells = detect_wells(&nl, 10.0, 4096, 1e-12).unwrap();
        let tn = truncate(&nl, &wells, 2, 0.25).unwrap();
        let eta = wells.well(2).unwrap().eta;
        let eps = 1e-6;
        let fd1 = (tn.value(eta + eps) - tn.value(eta - eps)) / (2.0 * eps);
        assert!((fd1 - nl.deriv(eta)).abs() <= 1e-4 * (1.0 + nl.deriv(eta).abs()));
        let fd2 = (tn.deriv(eta + eps) - tn.deriv(eta - eps)) / (2.0 * eps);
        assert!((fd2 - nl.deriv2(eta)).abs() <= 1e-3 * (1.0 + nl.deriv2(eta).abs()));
    }

    #[test]
    fn truncate_refuses_unbounded_well() {
        let nl = Nonlinearity::power_well(1.0, 4.0, 0.0, 6.0).unwrap();
        let wells = detect_wells(&nl, 10.0, 4096, 1e-10).unwrap();
        assert!(matches!(
            truncate(&nl, &wells, 1, 0.5),
            Err(Error::LastWellUnbounded { index: 1 })
        ));
    }

    #[test]
    fn translate_shifts_the_argument() {
        let nl = two_well();
        let wells = detect_wells(&nl, 10.0, 4096, 1e-12).unwrap();
        let tn = truncate(&nl, &wells, 2, 0.25).unwrap();
        let tr = translate(&tn, wells.well(1).unwrap().eta);
        // shift 0 is the identity
        let id = translate(&tn, 0.0);
        for i in 0..1000 {
            let s = 8.0 * i as f64 / 1000.0;
            assert_eq!(id.value(s), tn.value(s));
        }
        // translated value at 1.0 equals R̃_2(3.0) (eta_1 = 2)
        let eta1 = wells.well(1).unwrap().eta;
        assert!((tr.value(1.0) - tn.value(1.0 + eta1)).abs() < 1e-15);
        // nonnegative for s >= eta_2 - eta_1
        let gap = wells.well(2).unwrap().eta - eta1;
        for i in 0..=1000 {
            let s = gap + 8.0 * i as f64 / 1000.0;
            assert!(tr.value(s) >= -1e-12);
        }
    }

    #[test]
    fn max_principle_bound_examples() {
        // G'(s) = 4 s^3 - 2 s: negative up to 1/sqrt(2)
        let sbar = max_principle_bound(|s| 4.0 * s.powi(3) - 2.0 * s, 0.0, 3.0, 1e-9).unwrap();
        assert!((sbar - 0.5_f64.sqrt()).abs() < 1e-6);
        // G'(s) = s: nonnegative everywhere
        assert_eq!(max_principle_bound(|s| s, 0.0, 3.0, 1e-9).unwrap(), 0.0);
        // positive scaling leaves the sign set alone
        let nl = two_well();
        let lam = 0.3;
        let plain = max_principle_bound(|s| nl.deriv(s), 0.0, 10.0, 1e-9).unwrap();
        let scaled =
            max_principle_bound(|s| (1.0 - lam) * nl.deriv(s), 0.0, 10.0, 1e-9).unwrap();
        assert!((plain - scaled).abs() < 1e-7);
        // still negative at the top of the range
        assert!(matches!(
            max_principle_bound(|_: f64| -1.0, 0.0, 2.0, 1e-9),
            Err(Error::NoBound { .. })
        ));
    }

    #[test]
    fn max_principle_bound_monotone_in_tol() {
        let g = |s: f64| 4.0 * s.powi(3) - 2.0 * s;
        let mut prev = f64::INFINITY;
        for tol in [1e-10, 1e-6, 1e-3, 1e-1] {
            let sbar = max_principle_bound(g, 0.0, 3.0, tol).unwrap();
            assert!(sbar <= prev + 1e-9, "tol={tol}: {sbar} > {prev}");
            prev = sbar;
        }
    }

    #[test]
    fn growth_check_quartic_h3_exact_h4_fails() {
        // T = -s^4: |T''| = 12 s^2 = c1 s^{p-2} with c1 = 12, p = 4
        let nl = Nonlinearity::poly_s2(vec![0.0, -1.0])
            .with_growth(GrowthBounds {
                p: 4.0,
                q: 4.0,
                c1: 12.0,
                c2: 0.0,
            })
            .with_coercivity(CoercivityBounds {
                c3: 10.0,
                c4: 10.0,
                gamma_exp: 3.0,
            });
        let rep = verify_growth(&nl, 3, 4096);
        let h3 = rep.h3.unwrap();
        assert!(h3.holds, "worst margin {}", h3.worst_margin);
        assert!(h3.worst_margin.abs() < 1e-6 * (1.0 + h3.worst_at.powi(2) * 12.0));
        // quartic loss beats any subcritical (H4) bound at large s
        let h4 = rep.h4.unwrap();
        assert!(!h4.holds);
        assert!(h4.violations > 0);
    }

    #[test]
    fn growth_check_truncated_term_passes_h3() {
        let nl = two_well();
        let wells = detect_wells(&nl, 10.0, 4096, 1e-12).unwrap();
        let tn = truncate(&nl, &wells, 1, 0.25).unwrap();
        // sampled sup of |R̃''| / (s^2 + s^4) gives finite (H3) constants
        let mut c = 0.0_f64;
        for i in 1..=20_000 {
            let s = 12.0 * i as f64 / 20_000.0;
            c = c.max(tn.deriv2(s).abs() / (s * s + s.powi(4)));
        }
        let tn2 = tn.clone();
        let probe = Nonlinearity::from_fns(
            move |s| tn.value(s),
            {
                let t = tn2.clone();
                move |s| t.deriv(s)
            },
            move |s| tn2.deriv2(s),
        )
        .with_growth(GrowthBounds {
            p: 4.0,
            q: 6.0,
            c1: 1.01 * c,
            c2: 1.01 * c,
        });
        let rep = verify_growth(&probe, 3, 4096);
        assert!(rep.h3.unwrap().holds);
    }

    #[test]
    fn table_form_is_c2_and_even() {
        // crude quartic-well table: T ~ -s^4 + s^6/10 sampled with exact
        // derivatives at the knots
        let f = |s: f64| -s.powi(4) + s.powi(6) / 10.0;
        let d = |s: f64| -4.0 * s.powi(3) + 0.6 * s.powi(5);
        let d2 = |s: f64| -12.0 * s.powi(2) + 3.0 * s.powi(4);
        let knots: Vec<TableKnot> = (0..=8)
            .map(|i| {
                let s = i as f64 * 0.5;
                TableKnot {
                    s,
                    v: f(s),
                    d: d(s),
                    d2: d2(s),
                }
            })
            .collect();
        let nl = Nonlinearity::table(knots).unwrap();
        for i in 0..200 {
            let s = 3.9 * i as f64 / 200.0;
            assert!((nl.value(s) - f(s)).abs() < 2e-2 * (1.0 + f(s).abs()));
            assert_eq!(nl.value(-s), nl.value(s));
        }
        // C2 across a knot by finite differences
        let eps = 1e-6;
        let fd2 = (nl.deriv(1.5 + eps) - nl.deriv(1.5 - eps)) / (2.0 * eps);
        assert!((fd2 - nl.deriv2(1.5)).abs() < 1e-3 * (1.0 + nl.deriv2(1.5).abs()));
    }
}
