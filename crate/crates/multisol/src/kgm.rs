//! The electrostatic subproblem of the Klein-Gordon-Maxwell system.
//!
//! For a fixed profile u the rescaled electric potential Φᵤ solves
//!
//!   -ΔΦ + e²u²Φ = e u²,   Φ'(0) = 0,  Φ(r_max) = 0,
//!
//! a symmetric positive definite tridiagonal system on the radial grid.
//! The discrete operator is an M-matrix, so 0 ≤ Φᵤ ≤ 1/e holds nodewise
//! with no tolerance: nonnegativity because the inverse is nonnegative and
//! the source is, the upper bound because ψ = 1/e − Φ solves the same
//! system with the nonnegative right-hand side (1/e)·A·1.

use crate::error::{Error, Result};
use crate::functionals::stiffness_tridiag;
use crate::grid::RadialProfile;
use crate::nonlinearity::Nonlinearity;

/// Φᵤ together with the data it was solved for.
#[derive(Debug, Clone)]
pub struct PhiSolution {
    pub phi: RadialProfile,
    pub e_charge: f64,
    /// The source profile u (kept so downstream checks can re-verify).
    pub source: RadialProfile,
}

/// Solve the screened Poisson problem for Φᵤ.
pub fn solve_phi(u: &RadialProfile, e: f64) -> Result<PhiSolution> {
    if e <= 0.0 || e.is_nan() || !e.is_finite() {
        return Err(Error::SingularSystem {
            context: "electrostatic coupling needs finite e > 0",
        });
    }
    let grid = u.grid();
    let w = grid.weights();
    let v = u.values();
    let m = grid.m();
    let mut sys = stiffness_tridiag(grid);
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        sys.diag[i] += e * e * w[i] * v[i] * v[i];
        rhs[i] = e * w[i] * v[i] * v[i];
    }
    let mut phi = sys.factor()?.solve(&rhs);
    phi.push(0.0);
    Ok(PhiSolution {
        phi: RadialProfile::new(std::sync::Arc::clone(grid), phi)?,
        e_charge: e,
        source: u.clone(),
    })
}

#[cfg(test)]
pub(crate) fn solve_with_coefficient(
    coeff_u: &RadialProfile,
    source_u: &RadialProfile,
    e: f64,
) -> Vec<f64> {
    // linear solve with the zeroth-order coefficient frozen at coeff_u
    let grid = coeff_u.grid();
    let w = grid.weights();
    let m = grid.m();
    let mut sys = stiffness_tridiag(grid);
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        let c = coeff_u.values()[i];
        let s = source_u.values()[i];
        sys.diag[i] += e * e * w[i] * c * c;
        rhs[i] = e * w[i] * s * s;
    }
    let mut phi = sys.factor().unwrap().solve(&rhs);
    phi.push(0.0);
    phi
}

/// The conserved electric charge ½∫(1 - eΦᵤ)u².
pub fn kgm_charge(u: &RadialProfile, e: f64) -> Result<f64> {
    let phi = solve_phi(u, e)?;
    Ok(charge_with_phi(u, &phi))
}

pub fn charge_with_phi(u: &RadialProfile, phi: &PhiSolution) -> f64 {
    let v = u.values();
    let pv = phi.phi.values();
    0.5 * u
        .grid()
        .integrate(|i| (1.0 - phi.e_charge * pv[i]) * v[i] * v[i])
}

/// (J(u) + K(u)) / charge(u): a value below Ω² at any trial profile
/// certifies the hylomorphy-type inequality for this e.
pub fn hylomorphy_ratio(u: &RadialProfile, e: f64, nl: &Nonlinearity) -> Result<f64> {
    let charge = kgm_charge(u, e)?;
    if charge <= 0.0 {
        return Err(Error::ZeroCharge);
    }
    let v = u.values();
    let j = crate::functionals::dirichlet_energy(u) + u.grid().integrate(|i| nl.t_value(v[i]));
    let k = 0.5 * nl.omega() * nl.omega() * u.l2_sq();
    Ok((j + k) / charge)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::inner_w;
    use crate::grid::{bump, RadialGrid};
    use std::sync::Arc;

    fn grid(m: usize, r_max: f64) -> Arc<RadialGrid> {
        Arc::new(RadialGrid::build(3, r_max, m, 1.0).unwrap())
    }

    #[test]
    fn zero_source_gives_zero_phi() {
        let g = grid(256, 30.0);
        let phi = solve_phi(&g.zero_profile(), 0.5).unwrap();
        assert!(phi.phi.values().iter().all(|&p| p == 0.0));
        assert_eq!(kgm_charge(&g.zero_profile(), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn phi_bounds_hold_nodewise() {
        let g = grid(512, 40.0);
        for (s0, r_n, e) in [(1.0, 5.0, 0.5), (2.0, 10.0, 0.05), (0.3, 20.0, 2.0)] {
            let u = bump(&g, s0, r_n).unwrap();
            let phi = solve_phi(&u, e).unwrap();
            for &p in phi.phi.values() {
                assert!(p >= -1e-13, "nonnegativity violated: {p}");
                assert!(p <= 1.0 / e + 1e-13, "upper bound violated: {p}");
            }
        }
    }

    #[test]
    fn small_e_limit_is_the_newtonian_potential() {
        // independent oracle: for N = 3 with a Dirichlet end,
        // Φ₀(r) = ∫_r^{R} Q(t)/t² dt, Q(t) = ∫_0^t u²(s) s² ds.
        let g = grid(2048, 30.0);
        let u = g.sample(|r| 1.3 * (-r * r / 6.0).exp());
        let e = 1e-4;
        let phi = solve_phi(&u, e).unwrap();

        let rho = |r: f64| {
            let v = 1.3 * (-r * r / 6.0_f64).exp();
            v * v
        };
        let r_max = g.r_max();
        let n_fine = 40_000;
        let h = r_max / n_fine as f64;
        // cumulative Q on the fine grid
        let mut q = vec![0.0; n_fine + 1];
        for i in 0..n_fine {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            q[i + 1] = q[i] + 0.5 * h * (rho(a) * a * a + rho(b) * b * b);
        }
        // tail integral of Q/t² from r to r_max
        let mut tail = vec![0.0; n_fine + 1];
        for i in (0..n_fine).rev() {
            let (a, b) = (i as f64 * h, (i + 1) as f64 * h);
            let fa = if a == 0.0 { 0.0 } else { q[i] / (a * a) };
            let fb = q[i + 1] / (b * b);
            tail[i] = tail[i + 1] + 0.5 * h * (fa + fb);
        }
        let oracle = |r: f64| {
            let idx = ((r / h) as usize).min(n_fine);
            tail[idx]
        };
        let mut worst = 0.0_f64;
        let scale = oracle(0.0);
        for (idx, &r) in g.nodes().iter().enumerate().step_by(16) {
            let expect = e * oracle(r);
            let got = phi.phi.values()[idx];
            worst = worst.max((got - expect).abs() / (e * scale));
        }
        assert!(worst < 5e-3, "Newtonian limit mismatch: {worst}");
    }

    #[test]
    fn superposition_at_fixed_coefficient() {
        let g = grid(256, 30.0);
        let coeff = bump(&g, 1.0, 8.0).unwrap();
        let a = g.sample(|r| (-r * r / 5.0).exp());
        let b = g.sample(|r| 0.7 * (-(r - 4.0) * (r - 4.0) / 3.0).exp());
        let ab = g.sample(|r| {
            let x = (-r * r / 5.0_f64).exp();
            let y = 0.7 * (-(r - 4.0) * (r - 4.0) / 3.0_f64).exp();
            (x * x + y * y).sqrt()
        });
        let e = 0.3;
        let pa = solve_with_coefficient(&coeff, &a, e);
        let pb = solve_with_coefficient(&coeff, &b, e);
        let pab = solve_with_coefficient(&coeff, &ab, e);
        for i in 0..pa.len() {
            assert!(
                (pab[i] - pa[i] - pb[i]).abs() <= 1e-11 * (1.0 + pab[i].abs()),
                "superposition failed at {i}"
            );
        }
    }

    #[test]
    fn swapped_solves_are_self_adjoint() {
        let g = grid(256, 30.0);
        let coeff = bump(&g, 1.0, 8.0).unwrap();
        let a = g.sample(|r| (-r * r / 5.0).exp());
        let b = g.sample(|r| 0.7 * (-(r - 4.0) * (r - 4.0) / 3.0).exp());
        let e = 0.3;
        let pa = solve_with_coefficient(&coeff, &a, e);
        let pb = solve_with_coefficient(&coeff, &b, e);
        let rhs_a: Vec<f64> = a.values().iter().map(|&x| e * x * x).collect();
        let rhs_b: Vec<f64> = b.values().iter().map(|&x| e * x * x).collect();
        let lhs = inner_w(&g, &pa, &rhs_b);
        let rhs = inner_w(&g, &pb, &rhs_a);
        assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn screening_increases_with_e() {
        let g = grid(512, 40.0);
        let u = bump(&g, 1.5, 10.0).unwrap();
        let mut prev = 0.0;
        for e in [1e-3, 1e-2, 1e-1, 1.0, 10.0] {
            let phi = solve_phi(&u, e).unwrap();
            let screened = e * phi.phi.values()[0];
            assert!(screened >= prev - 1e-13, "e·Φ(0) decreased at e={e}");
            prev = screened;
        }
    }

    #[test]
    fn charge_is_dominated_by_half_l2() {
        let g = grid(512, 40.0);
        let u = bump(&g, 1.5, 10.0).unwrap();
        for e in [1e-3, 1e-1, 1.0] {
            let c = kgm_charge(&u, e).unwrap();
            assert!(c <= 0.5 * u.l2_sq() + 1e-12);
            assert!(c > 0.0);
        }
    }

    #[test]
    fn charge_deficit_vanishes_quadratically_in_e() {
        let g = grid(512, 40.0);
        let u = bump(&g, 1.5, 10.0).unwrap();
        let half_l2 = 0.5 * u.l2_sq();
        let deficits: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&e| half_l2 - kgm_charge(&u, e).unwrap())
            .collect();
        // Richardson-style: deficit/e² is stable across the decade steps
        let d2: Vec<f64> = deficits
            .iter()
            .zip([1e-1_f64, 1e-2, 1e-3])
            .map(|(d, e)| d / (e * e))
            .collect();
        for w in d2.windows(2) {
            assert!(w[1] / w[0] > 0.5 && w[1] / w[0] < 2.0, "rate drifted: {d2:?}");
        }
        // and the single fitted constant C = deficit(e_max)/e_max bounds all
        let c = deficits[0] / 1e-1;
        for (d, e) in deficits.iter().zip([1e-1, 1e-2, 1e-3]) {
            assert!(*d <= c * e * (1.0 + 1e-9));
        }
    }

    #[test]
    fn hylomorphy_ratio_behaviour() {
        let g = grid(512, 40.0);
        let nl = Nonlinearity::poly_s2(vec![0.0, -0.3, 0.05]).with_omega(1.0, false);
        // a bump at the well floor with a generous radius beats Ω²
        let s_star = 3.0_f64.sqrt();
        let e = 1e-2;
        let mut best = f64::INFINITY;
        for r_n in [5.0, 10.0, 20.0] {
            let u = bump(&g, s_star, r_n).unwrap();
            best = best.min(hylomorphy_ratio(&u, e, &nl).unwrap());
        }
        assert!(best < 1.0, "hylomorphy ratio {best} not below Ω² = 1");

        // scaling the profile changes the ratio (no invariance claimed)
        let u = bump(&g, s_star, 10.0).unwrap();
        let mut u2 = u.clone();
        for x in u2.values_mut() {
            *x *= 0.5;
        }
        let r1 = hylomorphy_ratio(&u, e, &nl).unwrap();
        let r2 = hylomorphy_ratio(&u2, e, &nl).unwrap();
        assert!((r1 - r2).abs() > 1e-6);

        // e -> 0 recovers the Klein-Gordon quantity (J + K)/(½‖u‖₂²)
        let tiny = hylomorphy_ratio(&u, 1e-4, &nl).unwrap();
        let v = u.values();
        let j = crate::functionals::dirichlet_energy(&u)
            + u.grid().integrate(|i| nl.t_value(v[i]));
        let k = 0.5 * u.l2_sq();
        let kg_ratio = (j + k) / (0.5 * u.l2_sq());
        assert!((tiny - kg_ratio).abs() / kg_ratio.abs() < 1e-2);

        assert!(matches!(
            hylomorphy_ratio(&g.zero_profile(), e, &nl),
            Err(Error::ZeroCharge)
        ));
    }
}
