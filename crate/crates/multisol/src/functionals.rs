//! Energies, constraints and their first variations.
//!
//! All four applications share the split H = J + K with
//! J(u) = ∫ ½|∇u|² + R(u); they differ in the K-part, the constraint and
//! the meaning of the Lagrange multiplier:
//!
//! | kind       | R   | K                        | constraint            | multiplier |
//! |------------|-----|--------------------------|-----------------------|------------|
//! | Elliptic   | F   | 0                        | ∫F(u) = c (c < 0)     | λ < 1      |
//! | NLS        | T   | 0                        | ‖u‖₂ = c              | ω < 0      |
//! | KleinGordon| T   | ½Ω²‖u‖₂² + σ²/(2‖u‖₂²)   | none (𝓜 = H¹)         | ω = σ/‖u‖₂²|
//! | KGMaxwell  | T   | ½Ω²‖u‖₂²                 | ½∫(1-eΦᵤ)u² = c²      | 0 < ω < Ω  |
//!
//! Discretely, the Dirichlet term is the exact P1 finite-element energy
//! ½Σ_c ω_c d_c² (cellwise constant derivative against the exact cell
//! measure) and the gradient returned by [`grad_h`] is the exact derivative
//! of the discrete energy, represented in the weighted L² inner product.
//! Directional finite differences therefore match ⟨grad_h, w⟩ to O(ε²).

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{RadialGrid, RadialProfile};
use crate::kgm;
use crate::nonlinearity::{Nonlinearity, ScalarTerm, TruncatedNonlinearity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProblemKind {
    Elliptic,
    Nls,
    KleinGordon,
    KgMaxwell,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Elliptic => "elliptic",
            Self::Nls => "nls",
            Self::KleinGordon => "kg",
            Self::KgMaxwell => "kgm",
        }
    }
}

/// Which application is being solved, on which grid, with which constraint
/// level. `constraint_value` is c for Elliptic (∫F(u) = c), c for NLS
/// (‖u‖₂ = c), σ for Klein-Gordon, and c for Klein-Gordon-Maxwell
/// (charge = c²).
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub kind: ProblemKind,
    pub nl: Nonlinearity,
    pub constraint_value: f64,
    pub e_charge: f64,
    pub grid: Arc<RadialGrid>,
}

impl ProblemSpec {
    pub fn new(
        kind: ProblemKind,
        nl: Nonlinearity,
        constraint_value: f64,
        e_charge: f64,
        grid: Arc<RadialGrid>,
    ) -> Result<Self> {
        match kind {
            ProblemKind::Elliptic => {
                if constraint_value >= 0.0 {
                    return Err(Error::Invalid(
                        "elliptic constraint must be negative (the level ∫F(u) = c)".into(),
                    ));
                }
            }
            ProblemKind::Nls => {
                if constraint_value <= 0.0 {
                    return Err(Error::Invalid("NLS needs c > 0 (the L² norm)".into()));
                }
            }
            ProblemKind::KleinGordon => {
                if constraint_value <= 0.0 {
                    return Err(Error::Invalid("Klein-Gordon needs σ > 0".into()));
                }
                if nl.omega() <= 0.0 {
                    return Err(Error::Invalid("Klein-Gordon needs Ω > 0".into()));
                }
            }
            ProblemKind::KgMaxwell => {
                if constraint_value <= 0.0 {
                    return Err(Error::Invalid("Klein-Gordon-Maxwell needs c > 0".into()));
                }
                if e_charge <= 0.0 {
                    return Err(Error::Invalid("Klein-Gordon-Maxwell needs e > 0".into()));
                }
                if nl.omega() <= 0.0 {
                    return Err(Error::Invalid("Klein-Gordon-Maxwell needs Ω > 0".into()));
                }
                if grid.dim() != 3 {
                    return Err(Error::Invalid(
                        "the Klein-Gordon-Maxwell system lives in R^3".into(),
                    ));
                }
            }
        }
        // the J-density carries Ω only in the elliptic case
        let nl = nl
            .clone()
            .with_omega(nl.omega(), matches!(kind, ProblemKind::Elliptic));
        Ok(Self {
            kind,
            nl,
            constraint_value,
            e_charge,
            grid,
        })
    }

    /// The level the constraint function must hit; `None` for Klein-Gordon
    /// where the manifold is all of H¹.
    pub fn constraint_target(&self) -> Option<f64> {
        match self.kind {
            ProblemKind::Elliptic => Some(self.constraint_value),
            ProblemKind::Nls | ProblemKind::KgMaxwell => {
                Some(self.constraint_value * self.constraint_value)
            }
            ProblemKind::KleinGordon => None,
        }
    }

    pub(crate) fn density<'a>(&'a self, ov: Option<&'a TruncatedNonlinearity>) -> &'a dyn ScalarTerm {
        match ov {
            Some(t) => t,
            None => &self.nl,
        }
    }
}

/// Weighted L² inner product Σ wᵢ aᵢ bᵢ.
pub fn inner_w(grid: &RadialGrid, a: &[f64], b: &[f64]) -> f64 {
    grid.weights()
        .iter()
        .zip(a.iter().zip(b))
        .map(|(w, (x, y))| w * x * y)
        .sum()
}

pub fn norm_w(grid: &RadialGrid, a: &[f64]) -> f64 {
    inner_w(grid, a, a).sqrt()
}

/// Exact discrete Dirichlet integral ∫½|∇u|² (cellwise-constant derivative).
pub fn dirichlet_energy(u: &RadialProfile) -> f64 {
    let g = u.grid();
    let v = u.values();
    let mut acc = 0.0;
    for c in 0..g.m() {
        let d = (v[c + 1] - v[c]) / g.spacings()[c];
        acc += 0.5 * g.cell_vols()[c] * d * d;
    }
    acc
}

/// The reduced stiffness matrix over nodes 0..M-1 (node M is Dirichlet):
/// the matrix of [`stiffness_apply`].
pub(crate) fn stiffness_tridiag(grid: &RadialGrid) -> crate::tridiag::SymTridiag {
    let m = grid.m();
    let mut diag = vec![0.0; m];
    let mut off = vec![0.0; m - 1];
    for c in 0..m {
        let k = grid.cell_vols()[c] / (grid.spacings()[c] * grid.spacings()[c]);
        diag[c] += k;
        if c + 1 < m {
            diag[c + 1] += k;
            off[c] = -k;
        }
    }
    crate::tridiag::SymTridiag::new(diag, off)
}

/// (A u): the exact Euclidean gradient of [`dirichlet_energy`]; entry M is
/// forced to zero (the Dirichlet node never moves).
pub fn stiffness_apply(grid: &RadialGrid, v: &[f64]) -> Vec<f64> {
    let m = grid.m();
    let mut out = vec![0.0; m + 1];
    for c in 0..m {
        let flux = grid.cell_vols()[c] * (v[c + 1] - v[c]) / (grid.spacings()[c] * grid.spacings()[c]);
        out[c] -= flux;
        out[c + 1] += flux;
    }
    out[m] = 0.0;
    out
}

/// J(u) = ∫ ½|∇u|² + R(u), with R replaced by the truncated term when the
/// per-well loop supplies one.
pub fn eval_j(spec: &ProblemSpec, u: &RadialProfile, ov: Option<&TruncatedNonlinearity>) -> f64 {
    let density = spec.density(ov);
    let v = u.values();
    dirichlet_energy(u) + u.grid().integrate(|i| density.value(v[i]))
}

/// J(u_I) per the restricted form: the same density summed over the nodes
/// where u ∈ I = (a, b). Each cell's Dirichlet energy is split half-half
/// between its end nodes, except that a node where u = 0 exactly cedes the
/// whole cell share to its partner; with that convention, restricting to
/// I ⊇ (0, ‖u‖∞] reproduces [`eval_j`] exactly.
pub fn eval_j_restricted(
    spec: &ProblemSpec,
    u: &RadialProfile,
    a: f64,
    b: f64,
    ov: Option<&TruncatedNonlinearity>,
) -> f64 {
    assert!(a > 0.0 && b > a, "the restriction interval needs 0 < a < b");
    let density = spec.density(ov);
    let g = u.grid();
    let v = u.values();
    let mut shares = vec![0.0; v.len()];
    for c in 0..g.m() {
        let d = (v[c + 1] - v[c]) / g.spacings()[c];
        let e = 0.5 * g.cell_vols()[c] * d * d;
        let (lo, hi) = (v[c], v[c + 1]);
        if lo == 0.0 && hi != 0.0 {
            shares[c + 1] += e;
        } else if hi == 0.0 && lo != 0.0 {
            shares[c] += e;
        } else {
            shares[c] += 0.5 * e;
            shares[c + 1] += 0.5 * e;
        }
    }
    let mut acc = 0.0;
    for i in 0..v.len() {
        if v[i] > a && v[i] < b {
            acc += shares[i] + g.weights()[i] * density.value(v[i]);
        }
    }
    acc
}

/// K(u): zero for Elliptic and NLS, the frequency/charge terms for the
/// Klein-Gordon family.
pub fn eval_k(spec: &ProblemSpec, u: &RadialProfile) -> Result<f64> {
    match spec.kind {
        ProblemKind::Elliptic | ProblemKind::Nls => Ok(0.0),
        ProblemKind::KleinGordon => {
            let l2 = u.l2_sq();
            if l2 == 0.0 {
                return Err(Error::ZeroProfile {
                    context: "K is singular at u = 0 for Klein-Gordon",
                });
            }
            let om = spec.nl.omega();
            let sigma = spec.constraint_value;
            Ok(0.5 * om * om * l2 + 0.5 * sigma * sigma / l2)
        }
        ProblemKind::KgMaxwell => {
            let om = spec.nl.omega();
            Ok(0.5 * om * om * u.l2_sq())
        }
    }
}

pub fn eval_h(spec: &ProblemSpec, u: &RadialProfile, ov: Option<&TruncatedNonlinearity>) -> Result<f64> {
    Ok(eval_j(spec, u, ov) + eval_k(spec, u)?)
}

/// The weighted-L² Riesz representative of dH(u): exactly
/// (A u)ᵢ/wᵢ + R'(uᵢ) + (K-part)ᵢ, zero at the Dirichlet node.
pub fn grad_h(
    spec: &ProblemSpec,
    u: &RadialProfile,
    ov: Option<&TruncatedNonlinearity>,
) -> Result<RadialProfile> {
    let density = spec.density(ov);
    let g = u.grid();
    let v = u.values();
    let au = stiffness_apply(g, v);
    let m = g.m();
    let kfac = match spec.kind {
        ProblemKind::Elliptic | ProblemKind::Nls => 0.0,
        ProblemKind::KleinGordon => {
            let l2 = u.l2_sq();
            if l2 == 0.0 {
                return Err(Error::ZeroProfile {
                    context: "Klein-Gordon gradient needs u ≠ 0",
                });
            }
            let om = spec.nl.omega();
            let sigma = spec.constraint_value;
            om * om - sigma * sigma / (l2 * l2)
        }
        ProblemKind::KgMaxwell => spec.nl.omega() * spec.nl.omega(),
    };
    let mut out = vec![0.0; m + 1];
    for i in 0..m {
        out[i] = au[i] / g.weights()[i] + density.deriv(v[i]) + kfac * v[i];
    }
    RadialProfile::new(Arc::clone(u.grid()), out)
}

/// The constraint function g(u). For the elliptic per-well solve the
/// truncated density defines the manifold too, so the override applies.
pub fn constraint_g(
    spec: &ProblemSpec,
    u: &RadialProfile,
    ov: Option<&TruncatedNonlinearity>,
) -> Result<f64> {
    match spec.kind {
        ProblemKind::Elliptic => {
            let density = spec.density(ov);
            let v = u.values();
            Ok(u.grid().integrate(|i| density.value(v[i])))
        }
        ProblemKind::Nls => Ok(u.l2_sq()),
        ProblemKind::KleinGordon => Ok(0.0),
        ProblemKind::KgMaxwell => kgm::kgm_charge(u, spec.e_charge),
    }
}

/// Riesz representative of dg(u); zero profile for Klein-Gordon.
pub fn grad_g(
    spec: &ProblemSpec,
    u: &RadialProfile,
    ov: Option<&TruncatedNonlinearity>,
) -> Result<RadialProfile> {
    let g = u.grid();
    let v = u.values();
    let m = g.m();
    let mut out = vec![0.0; m + 1];
    match spec.kind {
        ProblemKind::Elliptic => {
            let density = spec.density(ov);
            for i in 0..m {
                out[i] = density.deriv(v[i]);
            }
        }
        ProblemKind::Nls => {
            for i in 0..m {
                out[i] = 2.0 * v[i];
            }
        }
        ProblemKind::KleinGordon => {}
        ProblemKind::KgMaxwell => {
            let phi = kgm::solve_phi(u, spec.e_charge)?;
            let pv = phi.phi.values();
            for i in 0..m {
                let f = 1.0 - spec.e_charge * pv[i];
                out[i] = f * f * v[i];
            }
        }
    }
    RadialProfile::new(Arc::clone(u.grid()), out)
}

/// Least-squares factor λ minimizing ‖grad_H − λ grad_g‖ in the weighted
/// inner product.
pub fn least_squares_multiplier(
    grid: &RadialGrid,
    grad_h: &RadialProfile,
    grad_g: &RadialProfile,
) -> Result<f64> {
    let denom = inner_w(grid, grad_g.values(), grad_g.values());
    if denom <= 1e-300 {
        return Err(Error::DegenerateConstraintGradient {
            norm: denom.sqrt(),
        });
    }
    Ok(inner_w(grid, grad_h.values(), grad_g.values()) / denom)
}

/// The physical multiplier of each application's strong equation:
/// λ (Elliptic), ω (NLS), ω = σ/‖u‖₂² (Klein-Gordon), ω (KGMaxwell, from
/// the least-squares estimate of ω²; clamped to 0 when that is negative).
pub fn multiplier_estimate(
    spec: &ProblemSpec,
    u: &RadialProfile,
    ov: Option<&TruncatedNonlinearity>,
) -> Result<f64> {
    if spec.kind == ProblemKind::KleinGordon {
        let l2 = u.l2_sq();
        if l2 == 0.0 {
            return Err(Error::ZeroProfile {
                context: "ω = σ/‖u‖₂² needs u ≠ 0",
            });
        }
        return Ok(spec.constraint_value / l2);
    }
    let gh = grad_h(spec, u, ov)?;
    let gg = grad_g(spec, u, ov)?;
    let ls = least_squares_multiplier(u.grid(), &gh, &gg)?;
    Ok(match spec.kind {
        ProblemKind::Elliptic => ls,
        // grad g = 2u while the equation reads -Δu + T'(u) = ω u
        ProblemKind::Nls => 2.0 * ls,
        // the equation carries ω² against (1-eΦ)²u
        ProblemKind::KgMaxwell => ls.max(0.0).sqrt(),
        ProblemKind::KleinGordon => unreachable!(),
    })
}

/// Relative Derrick-Pohozaev residual; zero profile returns 0 by the 0/0
/// convention. `multiplier` is the physical multiplier of the application.
///
/// The computation honors the Dirichlet truncation: on the ball the scaling
/// identity carries the boundary flux term (R/(N-2))·|u'(R)|²·area(∂B_R),
/// which vanishes as R grows for decaying profiles but is owed by slowly
/// decaying (zero-mass) solutions. Without it the residual would measure
/// the domain cutoff, not the equation.
pub fn pohozaev_residual(spec: &ProblemSpec, u: &RadialProfile, multiplier: f64) -> Result<f64> {
    let grad_sq = 2.0 * dirichlet_energy(u);
    if grad_sq == 0.0 {
        return Ok(0.0);
    }
    let n = spec.grid.dim() as f64;
    let coef = 2.0 * n / (n - 2.0);
    let v = u.values();
    let g = u.grid();
    let boundary = {
        let m = g.m();
        let h = g.spacings()[m - 1];
        let du = (v[m] - v[m - 1]) / h;
        let r = g.r_max();
        let area = crate::grid::sphere_area(g.dim()) * r.powi(g.dim() as i32 - 1);
        r / (n - 2.0) * du * du * area
    };
    let num = boundary
        + match spec.kind {
        ProblemKind::Elliptic => {
            let int_f = g.integrate(|i| spec.nl.value(v[i]));
            grad_sq + coef * (1.0 - multiplier) * int_f
        }
        ProblemKind::Nls => {
            let int_t = g.integrate(|i| spec.nl.t_value(v[i]));
            grad_sq + coef * int_t - (n / (n - 2.0)) * multiplier * u.l2_sq()
        }
        ProblemKind::KleinGordon => {
            let om = spec.nl.omega();
            let int_t = g.integrate(|i| spec.nl.t_value(v[i]));
            let eff = int_t + 0.5 * (om * om - multiplier * multiplier) * u.l2_sq();
            grad_sq + coef * eff
        }
        ProblemKind::KgMaxwell => {
            let om = spec.nl.omega();
            let w2 = multiplier * multiplier;
            let e = spec.e_charge;
            let phi = kgm::solve_phi(u, e)?;
            let pv = phi.phi.values();
            let dphi = phi.phi.nodal_derivative();
            let int_geff = g.integrate(|i| {
                let f = 1.0 - e * pv[i];
                spec.nl.t_value(v[i]) + 0.5 * (om * om - w2 * f * f) * v[i] * v[i]
            });
            // x·∇ₓ of the Φ-dependent density: e ω² (1-eΦ) r Φ' u²
            let drift = g.integrate(|i| {
                e * w2 * (1.0 - e * pv[i]) * g.nodes()[i] * dphi[i] * v[i] * v[i]
            });
            grad_sq + coef * int_geff + (2.0 / (n - 2.0)) * drift
        }
    };
    Ok(num.abs() / grad_sq)
}

/// Flat record of the energy split at a profile.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    pub j_value: f64,
    pub k_value: f64,
    pub h_value: f64,
    pub constraint_g: f64,
    pub multiplier_estimate: f64,
}

impl EnergyBreakdown {
    pub fn compute(
        spec: &ProblemSpec,
        u: &RadialProfile,
        ov: Option<&TruncatedNonlinearity>,
    ) -> Result<Self> {
        let j_value = eval_j(spec, u, ov);
        let k_value = eval_k(spec, u)?;
        let constraint = constraint_g(spec, u, ov)?;
        let multiplier = multiplier_estimate(spec, u, ov)?;
        Ok(Self {
            j_value,
            k_value,
            h_value: j_value + k_value,
            constraint_g: constraint,
            multiplier_estimate: multiplier,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::bump;
    use crate::synth::SplitMix64;

    fn grid(m: usize, r_max: f64) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::build(3, r_max, m, 1.0).unwrap())
    }

    fn two_well() -> Nonlinearity {
        Nonlinearity::poly_s2(vec![0.0, 576.0, -820.0, 273.0, -30.0, 1.0])
    }

    fn nls_spec(m: usize, r_max: f64, c: f64) -> ProblemSpec {
        let nl = Nonlinearity::poly_s2(vec![0.0, -1.0, 0.01]);
        ProblemSpec::new(ProblemKind::Nls, nl, c, 0.0, grid(m, r_max)).unwrap()
    }

    fn kg_spec(m: usize, sigma: f64) -> ProblemSpec {
        let nl = Nonlinearity::poly_s2(vec![0.0, -0.3, 0.05]).with_omega(1.0, false);
        ProblemSpec::new(ProblemKind::KleinGordon, nl, sigma, 0.0, grid(m, 40.0)).unwrap()
    }

    #[test]
    fn j_vanishes_at_zero() {
        let spec = nls_spec(256, 30.0, 1.0);
        let z = spec.grid.zero_profile();
        assert_eq!(eval_j(&spec, &z, None), 0.0);
        assert_eq!(eval_j_restricted(&spec, &z, 0.5, 1.5, None), 0.0);
    }

    #[test]
    fn bump_energy_crossover_in_plateau_radius() {
        // volume term ~ r^N eventually beats the surface term ~ r^{N-1}
        let nl = Nonlinearity::poly_s2(vec![0.0, -1.0, 1.0]); // s^4(s^2-1)
        let spec = ProblemSpec::new(ProblemKind::Nls, nl, 1.0, 0.0, grid(2048, 40.0)).unwrap();
        let small = bump(&spec.grid, 0.9, 2.0).unwrap();
        let large = bump(&spec.grid, 0.9, 20.0).unwrap();
        assert!(eval_j(&spec, &small, None) > 0.0);
        assert!(eval_j(&spec, &large, None) < 0.0);
    }

    #[test]
    fn positive_plateau_value_means_positive_j() {
        let nl = Nonlinearity::poly_s2(vec![0.0, -1.0, 1.0]);
        let spec = ProblemSpec::new(ProblemKind::Nls, nl, 1.0, 0.0, grid(1024, 60.0)).unwrap();
        for r_n in [2.0, 10.0, 30.0, 50.0] {
            let u = bump(&spec.grid, 1.4, r_n).unwrap(); // R(1.4) > 0
            assert!(eval_j(&spec, &u, None) > 0.0);
        }
    }

    #[test]
    fn bump_j_grows_like_volume() {
        // log-log slope of |J| against r_n approaches the dimension
        let nl = two_well();
        let spec =
            ProblemSpec::new(ProblemKind::Nls, nl, 1.0, 0.0, grid(4096, 170.0)).unwrap();
        let mut pts = Vec::new();
        for r_n in [20.0, 40.0, 80.0, 160.0] {
            let j = eval_j(&spec, &bump(&spec.grid, 1.5, r_n).unwrap(), None);
            assert!(j < 0.0);
            pts.push((r_n.ln(), j.abs().ln()));
        }
        let slope = fit_slope(&pts);
        assert!((slope - 3.0).abs() < 0.15, "slope {slope}");
    }

    pub(super) fn fit_slope(pts: &[(f64, f64)]) -> f64 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    }

    #[test]
    fn bump_energy_matches_independent_quadrature() {
        // oracle: plateau term in closed form, ramp term by fine Simpson
        // quadrature of the 1-D integrand, with no grid weights involved
        let nl = two_well();
        let spec =
            ProblemSpec::new(ProblemKind::Nls, nl.clone(), 1.0, 0.0, grid(4096, 40.0)).unwrap();
        let (s0, r_n) = (1.5, 20.0);
        let u = bump(&spec.grid, s0, r_n).unwrap();
        let j_grid = eval_j(&spec, &u, None);

        let sphere = crate::grid::sphere_area(3);
        let plateau = nl.value(s0) * crate::grid::ball_volume(3, r_n);
        let ramp_density = |r: f64| {
            let v = s0 * (1.0 + r_n - r);
            (0.5 * s0 * s0 + nl.value(v)) * sphere * r * r
        };
        let mut ramp = 0.0;
        let n = 200_000;
        let h = 1.0 / n as f64;
        for i in 0..n {
            let a = r_n + i as f64 * h;
            ramp += h / 6.0
                * (ramp_density(a) + 4.0 * ramp_density(a + 0.5 * h) + ramp_density(a + h));
        }
        let j_oracle = plateau + ramp;
        assert!(j_oracle < 0.0);
        assert!(
            (j_grid - j_oracle).abs() <= 1e-3 * j_oracle.abs(),
            "grid {j_grid} vs oracle {j_oracle}"
        );
    }

    #[test]
    fn gradient_vanishes_at_zero_for_nls() {
        let spec = nls_spec(256, 30.0, 1.0);
        let g = grad_h(&spec, &spec.grid.zero_profile(), None).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kgm_constraint_gradient_matches_finite_differences() {
        // the closed form (1-eΦ)²u versus a directional difference of the
        // charge, which requires re-solving Φ at the perturbed profiles
        let nl = Nonlinearity::poly_s2(vec![0.0, -0.3, 0.05]).with_omega(1.0, false);
        let spec =
            ProblemSpec::new(ProblemKind::KgMaxwell, nl, 2.0, 0.05, grid(512, 40.0)).unwrap();
        let u = bump(&spec.grid, 1.2, 8.0).unwrap();
        let w = spec.grid.sample(|r| (-(r - 4.0) * (r - 4.0) / 4.0).exp());
        let gg = grad_g(&spec, &u, None).unwrap();
        let lhs = inner_w(&spec.grid, gg.values(), w.values());
        let eps = 1e-5;
        let charge_at = |scale: f64| {
            let mut v = u.clone();
            for (x, wv) in v.values_mut().iter_mut().zip(w.values()) {
                *x += scale * wv;
            }
            constraint_g(&spec, &v, None).unwrap()
        };
        let rhs = (charge_at(eps) - charge_at(-eps)) / (2.0 * eps);
        assert!(
            (lhs - rhs).abs() <= 1e-7 * (1.0 + lhs.abs()),
            "{lhs} vs {rhs}"
        );
    }

    #[test]
    fn restricted_j_with_full_interval_is_eval_j() {
        let spec = nls_spec(512, 30.0, 1.0);
        let u = bump(&spec.grid, 1.5, 10.0).unwrap();
        let full = eval_j(&spec, &u, None);
        let restricted = eval_j_restricted(&spec, &u, 1e-12, u.linf() + 1.0, None);
        assert!(
            (full - restricted).abs() <= 1e-14 * full.abs().max(1.0),
            "{full} vs {restricted}"
        );
    }

    /// Nudge a cutoff to the midpoint of the two nearest node values, so the
    /// membership set is stable under small perturbations (the continuity
    /// lemma assumes no node value sits exactly at an endpoint).
    pub(crate) fn fair_cutoff(u: &RadialProfile, near: f64) -> f64 {
        let mut below = f64::NEG_INFINITY;
        let mut above = f64::INFINITY;
        for &v in u.values() {
            if v <= near && v > below {
                below = v;
            }
            if v > near && v < above {
                above = v;
            }
        }
        if below.is_finite() && above.is_finite() {
            0.5 * (below + above)
        } else {
            near
        }
    }

    #[test]
    fn restricted_j_is_continuous_under_h1_perturbations() {
        let spec = nls_spec(1024, 30.0, 1.0);
        let g = &spec.grid;
        let u = g.sample(|r| 1.8 * (-r * r / 12.0).exp());
        let w = g.sample(|r| (-(r - 3.0) * (r - 3.0)).exp());
        let (a, b) = (fair_cutoff(&u, 0.5), fair_cutoff(&u, 1.5));
        let j0 = eval_j_restricted(&spec, &u, a, b, None);
        let mut diffs = Vec::new();
        for k in 1..=12 {
            let eps = 2.0_f64.powi(-k);
            let mut v = u.clone();
            for (vi, wi) in v.values_mut().iter_mut().zip(w.values()) {
                *vi += eps * wi;
            }
            diffs.push((eval_j_restricted(&spec, &v, a, b, None) - j0).abs());
        }
        let violations = diffs.windows(2).filter(|w| w[1] > w[0] + 1e-12).count();
        assert!(violations <= 2, "{violations} monotonicity violations: {diffs:?}");
        // once the membership set stabilizes the difference vanishes
        // linearly in eps
        assert!(diffs[11] <= 1e-2 * diffs[0], "no decay: {diffs:?}");
        for w in diffs[8..].windows(2) {
            assert!(w[1] <= 0.75 * w[0], "tail not vanishing: {diffs:?}");
        }
    }

    #[test]
    fn k_values_per_kind() {
        let spec = nls_spec(256, 30.0, 2.0);
        let u = bump(&spec.grid, 1.0, 5.0).unwrap();
        assert_eq!(eval_k(&spec, &u).unwrap(), 0.0);

        // KG: at ‖u‖₂² = σ/Ω the K-part equals Ωσ, its infimum over H¹
        let kg = kg_spec(512, 7.0);
        let raw = bump(&kg.grid, 1.0, 5.0).unwrap();
        let target = kg.constraint_value / kg.nl.omega();
        let scale = (target / raw.l2_sq()).sqrt();
        let mut v = raw.clone();
        for x in v.values_mut() {
            *x *= scale;
        }
        let k = eval_k(&kg, &v).unwrap();
        assert!((k - kg.nl.omega() * kg.constraint_value).abs() < 1e-10 * k);
        assert!(matches!(
            eval_k(&kg, &kg.grid.zero_profile()),
            Err(Error::ZeroProfile { .. })
        ));

        // KGM with Ω = 1 and ‖u‖₂² = 2 gives K = 1
        let nl = Nonlinearity::poly_s2(vec![0.0, -0.3, 0.05]).with_omega(1.0, false);
        let kgm =
            ProblemSpec::new(ProblemKind::KgMaxwell, nl, 1.0, 0.01, grid(512, 40.0)).unwrap();
        let raw = bump(&kgm.grid, 0.5, 5.0).unwrap();
        let scale = (2.0 / raw.l2_sq()).sqrt();
        let mut v = raw;
        for x in v.values_mut() {
            *x *= scale;
        }
        assert!((eval_k(&kgm, &v).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_identity_h_equals_j_plus_k() {
        let kg = kg_spec(512, 7.0);
        let u = bump(&kg.grid, 1.0, 5.0).unwrap();
        let j = eval_j(&kg, &u, None);
        let k = eval_k(&kg, &u).unwrap();
        assert_eq!(eval_h(&kg, &u, None).unwrap(), j + k);
    }

    #[test]
    fn pure_dirichlet_scales_quadratically() {
        let nl = Nonlinearity::poly_s2(vec![]);
        let spec = ProblemSpec::new(ProblemKind::Nls, nl, 1.0, 0.0, grid(256, 30.0)).unwrap();
        let u = bump(&spec.grid, 1.0, 5.0).unwrap();
        let j1 = eval_j(&spec, &u, None);
        let mut u3 = u.clone();
        for x in u3.values_mut() {
            *x *= 3.0;
        }
        let j9 = eval_j(&spec, &u3, None);
        assert!((j9 - 9.0 * j1).abs() <= 1e-12 * j9.abs());
    }

    fn random_profile(grid: &Arc<RadialGrid>, rng: &mut SplitMix64, nonneg: bool) -> RadialProfile {
        let r_max = grid.r_max();
        let mut parts = Vec::new();
        for _ in 0..3 {
            let amp = rng.uniform(0.2, 1.5) * if nonneg || rng.uniform(0.0, 1.0) > 0.3 { 1.0 } else { -1.0 };
            let center = rng.uniform(0.0, 0.3 * r_max);
            let width = rng.uniform(1.0, 0.15 * r_max);
            parts.push((amp, center, width));
        }
        grid.sample(move |r| {
            parts
                .iter()
                .map(|(a, c, w)| a * (-(r - c) * (r - c) / (w * w)).exp())
                .sum()
        })
    }

    #[test]
    fn gradient_matches_directional_differences() {
        // max relative error over 20 random (u, w) pairs per application
        let eps = 1e-4;
        let specs: Vec<ProblemSpec> = vec![
            ProblemSpec::new(
                ProblemKind::Elliptic,
                two_well().with_omega(0.0, true),
                -5.0,
                0.0,
                grid(512, 30.0),
            )
            .unwrap(),
            nls_spec(512, 30.0, 2.0),
            kg_spec(512, 7.0),
            ProblemSpec::new(
                ProblemKind::KgMaxwell,
                Nonlinearity::poly_s2(vec![0.0, -0.3, 0.05]).with_omega(1.0, false),
                2.0,
                0.01,
                grid(512, 40.0),
            )
            .unwrap(),
        ];
        for spec in &specs {
            let mut rng = SplitMix64::new(7);
            let mut worst = 0.0_f64;
            for _ in 0..20 {
                let u = random_profile(&spec.grid, &mut rng, true);
                let w = random_profile(&spec.grid, &mut rng, false);
                let gh = grad_h(spec, &u, None).unwrap();
                let lhs = inner_w(&spec.grid, gh.values(), w.values());
                let mut up = u.clone();
                let mut dn = u.clone();
                for ((a, b), wv) in up
                    .values_mut()
                    .iter_mut()
                    .zip(dn.values_mut())
                    .zip(w.values())
                {
                    *a += eps * wv;
                    *b -= eps * wv;
                }
                let rhs = (eval_h(spec, &up, None).unwrap() - eval_h(spec, &dn, None).unwrap())
                    / (2.0 * eps);
                worst = worst.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
            }
            assert!(
                worst <= 1e-5,
                "{}: directional derivative error {worst}",
                spec.kind.name()
            );
        }
    }

    #[test]
    fn constraint_functions_per_kind() {
        let spec = nls_spec(512, 30.0, 2.0);
        let raw = bump(&spec.grid, 1.0, 5.0).unwrap();
        let scale = (4.0 / raw.l2_sq()).sqrt();
        let mut u = raw;
        for x in u.values_mut() {
            *x *= scale;
        }
        assert!((constraint_g(&spec, &u, None).unwrap() - 4.0).abs() < 1e-12);
        let gg = grad_g(&spec, &u, None).unwrap();
        for (a, b) in gg.values().iter().zip(u.values()) {
            assert!((a - 2.0 * b).abs() < 1e-15);
        }

        let ell = ProblemSpec::new(
            ProblemKind::Elliptic,
            two_well().with_omega(0.0, true),
            -5.0,
            0.0,
            grid(512, 30.0),
        )
        .unwrap();
        assert_eq!(constraint_g(&ell, &ell.grid.zero_profile(), None).unwrap(), 0.0);
    }

    #[test]
    fn multiplier_estimates() {
        // KG formula is direct
        let kg = kg_spec(512, 7.0);
        let raw = bump(&kg.grid, 1.0, 5.0).unwrap();
        let target = kg.constraint_value / kg.nl.omega();
        let scale = (target / raw.l2_sq()).sqrt();
        let mut u = raw;
        for x in u.values_mut() {
            *x *= scale;
        }
        let om = multiplier_estimate(&kg, &u, None).unwrap();
        assert!((om - kg.nl.omega()).abs() < 1e-10);

        // exact proportionality recovers the factor
        let g = grid(256, 20.0);
        let a = g.sample(|r| (-r * r / 4.0).exp());
        let b = g.sample(|r| 3.0 * (-r * r / 4.0).exp());
        assert!((least_squares_multiplier(&g, &b, &a).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pohozaev_zero_convention_and_negative_control() {
        let spec = nls_spec(1024, 30.0, 2.0);
        assert_eq!(
            pohozaev_residual(&spec, &spec.grid.zero_profile(), -1.0).unwrap(),
            0.0
        );
        // a bump is not a solution; the identity must fail loudly
        let u = bump(&spec.grid, 1.0, 8.0).unwrap();
        let om = multiplier_estimate(&spec, &u, None).unwrap();
        assert!(pohozaev_residual(&spec, &u, om).unwrap() > 0.1);
    }

    #[test]
    fn nls_energy_admits_a_uniform_lower_bound_on_the_sphere() {
        // split-sample check of H ≥ ½‖∇u‖² − C(c) on ‖u‖₂ = c: fit C on
        // half the profiles, verify on the rest with 1% slack
        let spec = nls_spec(256, 30.0, 2.0);
        let mut rng = SplitMix64::new(42);
        let mut margins = Vec::new();
        for _ in 0..1000 {
            let raw = random_profile(&spec.grid, &mut rng, true);
            let l2 = raw.l2_sq();
            if l2 < 1e-12 {
                continue;
            }
            let scale = (spec.constraint_value * spec.constraint_value / l2).sqrt();
            let mut u = raw;
            for x in u.values_mut() {
                *x *= scale;
            }
            let h = eval_h(&spec, &u, None).unwrap();
            margins.push(0.5 * 2.0 * dirichlet_energy(&u) - h);
        }
        let (fit, test) = margins.split_at(margins.len() / 2);
        let c_fit = fit.iter().cloned().fold(f64::MIN, f64::max);
        let allowance = 0.01 * c_fit.abs().max(1.0);
        for m in test {
            assert!(*m <= c_fit + allowance, "bound violated: {m} > {c_fit}");
        }
    }

    #[test]
    fn positive_scaling_of_h_is_argmin_invariant() {
        // κ·H has gradient κ·grad_H, so the least-squares multiplier scales
        // by κ and the ordering of candidate energies is unchanged.
        let spec = nls_spec(512, 30.0, 2.0);
        let u = bump(&spec.grid, 1.0, 5.0).unwrap();
        let w = bump(&spec.grid, 0.8, 7.0).unwrap();
        let gh = grad_h(&spec, &u, None).unwrap();
        let gg = grad_g(&spec, &u, None).unwrap();
        let lam = least_squares_multiplier(&spec.grid, &gh, &gg).unwrap();
        let kappa = 3.7;
        let mut gh_scaled = gh.clone();
        for x in gh_scaled.values_mut() {
            *x *= kappa;
        }
        let lam_scaled = least_squares_multiplier(&spec.grid, &gh_scaled, &gg).unwrap();
        assert!((lam_scaled - kappa * lam).abs() <= 1e-12 * lam.abs().max(1.0));
        let (hu, hw) = (
            eval_h(&spec, &u, None).unwrap(),
            eval_h(&spec, &w, None).unwrap(),
        );
        assert_eq!(hu < hw, kappa * hu < kappa * hw);
    }
}
