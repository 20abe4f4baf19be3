//! Independent validation of solver output.
//!
//! A converged well solve is only trusted after it survives checks that do
//! not share machinery with the descent: the strong-form Euler-Lagrange
//! residual at the reported multiplier, the Derrick-Pohozaev identity, the
//! maximum-principle sup-norm bound, the multiplier sign window of the
//! application, and (Klein-Gordon family) the hylomorphy inequality. A
//! radial shooting oracle provides an independently computed profile for
//! cross-validation.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{
    constraint_g, eval_h, norm_w, pohozaev_residual, stiffness_apply, stiffness_tridiag,
    ProblemKind, ProblemSpec,
};
use crate::grid::RadialProfile;
use crate::kgm;
use crate::minimizer::{SolveStatus, WellSolveResult};
use crate::nonlinearity::{max_principle_bound, truncate, ScalarTerm, WellDecomposition};

/// Residual thresholds and the truncation parameters the certificate
/// recomputes with. Tolerances are larger for the Pohozaev identity, which
/// compounds the quadrature error of three integrals.
#[derive(Debug, Clone)]
pub struct CertifyOptions {
    pub el_tol: f64,
    pub pohozaev_tol: f64,
    pub constraint_tol: f64,
    /// Grid tolerance on the strict localization window.
    pub sup_tol: f64,
    /// 0 means a quarter of the well width, matching the solver default.
    pub blend_window: f64,
    pub s_max: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            el_tol: 1e-6,
            pohozaev_tol: 1e-2,
            constraint_tol: 1e-8,
            sup_tol: 1e-6,
            blend_window: 0.0,
            s_max: 12.0,
        }
    }
}

/// Everything the theory promises about one solution, as numbers and flags.
#[derive(Debug, Clone, Serialize)]
pub struct SolutionCertificate {
    pub well_index: usize,
    pub el_residual_rel: f64,
    pub pohozaev_rel: f64,
    pub linf: f64,
    pub localization_ok: bool,
    pub multiplier: f64,
    pub multiplier_sign_ok: bool,
    pub max_principle_ok: bool,
    /// The maximum-principle bound s̄ the sup-norm was checked against.
    pub s_bar: f64,
    pub hylomorphy_ok: Option<bool>,
    pub constraint_err: f64,
}

impl SolutionCertificate {
    /// All flags true and all residuals within the given thresholds.
    pub fn passes(&self, opts: &CertifyOptions) -> bool {
        self.localization_ok
            && self.multiplier_sign_ok
            && self.max_principle_ok
            && self.hylomorphy_ok.unwrap_or(true)
            && self.el_residual_rel <= opts.el_tol
            && self.pohozaev_rel <= opts.pohozaev_tol
            && self.constraint_err <= opts.constraint_tol
    }

    pub fn summary_line(&self) -> String {
        format!(
            "well {}: |u|_inf={:.6} mult={:.6e} el={:.3e} poh={:.3e} loc={} sign={} maxp={} hyl={} g_err={:.3e}",
            self.well_index,
            self.linf,
            self.multiplier,
            self.el_residual_rel,
            self.pohozaev_rel,
            self.localization_ok,
            self.multiplier_sign_ok,
            self.max_principle_ok,
            self.hylomorphy_ok.map(|b| b.to_string()).unwrap_or_else(|| "-".into()),
            self.constraint_err,
        )
    }
}

/// Discrete L² norm of the strong-form residual of the application's
/// equation at the given multiplier, normalized by the largest term.
pub fn el_residual(spec: &ProblemSpec, u: &RadialProfile, multiplier: f64) -> Result<f64> {
    el_residual_with(spec, u, multiplier, None)
}

/// As [`el_residual`] but with the density replaced by a truncated term
/// (used to confirm that truncation does not alter a converged solution).
pub fn el_residual_with(
    spec: &ProblemSpec,
    u: &RadialProfile,
    multiplier: f64,
    ov: Option<&crate::nonlinearity::TruncatedNonlinearity>,
) -> Result<f64> {
    let g = u.grid();
    let v = u.values();
    let m = g.m();
    let au = stiffness_apply(g, v);
    let density = spec.density(ov);
    let mut lap = vec![0.0; m + 1];
    let mut nonlin = vec![0.0; m + 1];
    let mut rhs = vec![0.0; m + 1];
    match spec.kind {
        ProblemKind::Elliptic => {
            for i in 0..m {
                lap[i] = au[i] / g.weights()[i];
                nonlin[i] = density.deriv(v[i]);
                rhs[i] = multiplier * density.deriv(v[i]);
            }
        }
        ProblemKind::Nls => {
            for i in 0..m {
                lap[i] = au[i] / g.weights()[i];
                nonlin[i] = density.deriv(v[i]);
                rhs[i] = multiplier * v[i];
            }
        }
        ProblemKind::KleinGordon => {
            let om2 = spec.nl.omega() * spec.nl.omega();
            for i in 0..m {
                lap[i] = au[i] / g.weights()[i];
                nonlin[i] = om2 * v[i] + density.deriv(v[i]);
                rhs[i] = multiplier * multiplier * v[i];
            }
        }
        ProblemKind::KgMaxwell => {
            let om2 = spec.nl.omega() * spec.nl.omega();
            let e = spec.e_charge;
            let phi = kgm::solve_phi(u, e)?;
            let pv = phi.phi.values();
            for i in 0..m {
                lap[i] = au[i] / g.weights()[i];
                nonlin[i] = om2 * v[i] + density.deriv(v[i]);
                let f = 1.0 - e * pv[i];
                rhs[i] = multiplier * multiplier * f * f * v[i];
            }
        }
    }
    let res: Vec<f64> = (0..=m).map(|i| lap[i] + nonlin[i] - rhs[i]).collect();
    let denom = norm_w(g, &lap)
        .max(norm_w(g, &nonlin))
        .max(norm_w(g, &rhs));
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(norm_w(g, &res) / denom)
}

/// The effective radial ODE right-hand side G'_eff for the multiplier-fixed
/// strong equation u'' + (N-1)/r u' = G'_eff(u). Not available for
/// Klein-Gordon-Maxwell, whose coupling is nonlocal.
fn effective_gradient(
    spec: &ProblemSpec,
    multiplier: f64,
) -> Result<(impl Fn(f64) -> f64 + '_, impl Fn(f64) -> f64 + '_)> {
    if spec.kind == ProblemKind::KgMaxwell {
        return Err(Error::Invalid(
            "the KGM effective potential is nonlocal; no shooting oracle".into(),
        ));
    }
    let kind = spec.kind;
    let nl = &spec.nl;
    let om2 = nl.omega() * nl.omega();
    let d1 = move |s: f64| match kind {
        ProblemKind::Elliptic => (1.0 - multiplier) * nl.deriv(s),
        ProblemKind::Nls => nl.deriv(s) - multiplier * s,
        ProblemKind::KleinGordon => (om2 - multiplier * multiplier) * s + nl.deriv(s),
        ProblemKind::KgMaxwell => unreachable!(),
    };
    let nl2 = &spec.nl;
    let d2 = move |s: f64| match kind {
        ProblemKind::Elliptic => (1.0 - multiplier) * nl2.deriv2(s),
        ProblemKind::Nls => nl2.deriv2(s) - multiplier,
        ProblemKind::KleinGordon => (om2 - multiplier * multiplier) + nl2.deriv2(s),
        ProblemKind::KgMaxwell => unreachable!(),
    };
    Ok((d1, d2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ShotClass {
    Crossed,
    NotCrossed,
}

/// Integrate the radial IVP u(0) = alpha, u'(0) = 0 and bisect the initial
/// amplitude on the decay/blowup dichotomy; the returned separatrix profile
/// is polished into the exact discrete solution by a damped Newton
/// iteration on the same grid operators the residuals use.
pub fn shooting_oracle(
    spec: &ProblemSpec,
    multiplier: f64,
    alpha_bracket: (f64, f64),
) -> Result<RadialProfile> {
    let (g1, g2) = effective_gradient(spec, multiplier)?;
    let grid = &spec.grid;
    let dim = grid.dim() as f64;
    let r_max = grid.r_max();
    let cap = 4.0 * alpha_bracket.1.abs().max(alpha_bracket.0.abs()) + 1.0;
    let h = (r_max / (8.0 * grid.m() as f64)).min(2e-3 * r_max);

    let shoot = |alpha: f64, record: Option<&mut Vec<f64>>| -> ShotClass {
        let mut rec = record;
        let mut node_idx = 0usize;
        // series start past the coordinate singularity
        let mut r = h;
        let mut u = alpha + g1(alpha) * h * h / (2.0 * dim);
        let mut v = g1(alpha) * h / dim;
        let mut prev = (0.0, alpha);
        if let Some(rec) = rec.as_deref_mut() {
            rec.clear();
        }
        let f = |r: f64, u: f64, v: f64| -> (f64, f64) { (v, g1(u) - (dim - 1.0) / r * v) };
        loop {
            if let Some(rec) = rec.as_deref_mut() {
                while node_idx < grid.nodes().len() && grid.nodes()[node_idx] <= r {
                    let rn = grid.nodes()[node_idx];
                    let t = if r > prev.0 { (rn - prev.0) / (r - prev.0) } else { 0.0 };
                    rec.push(prev.1 * (1.0 - t) + u * t);
                    node_idx += 1;
                }
            }
            if u < 0.0 {
                return ShotClass::Crossed;
            }
            if u > cap || r >= r_max {
                if let Some(rec) = rec.as_deref_mut() {
                    while rec.len() < grid.nodes().len() {
                        rec.push(0.0);
                    }
                }
                return ShotClass::NotCrossed;
            }
            prev = (r, u);
            // RK4
            let (k1u, k1v) = f(r, u, v);
            let (k2u, k2v) = f(r + 0.5 * h, u + 0.5 * h * k1u, v + 0.5 * h * k1v);
            let (k3u, k3v) = f(r + 0.5 * h, u + 0.5 * h * k2u, v + 0.5 * h * k2v);
            let (k4u, k4v) = f(r + h, u + h * k3u, v + h * k3v);
            u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            r += h;
        }
    };

    let (mut lo, mut hi) = alpha_bracket;
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Invalid("empty shooting bracket".into()));
    }
    let class_lo = shoot(lo, None);
    let class_hi = shoot(hi, None);
    if class_lo == class_hi {
        return Err(Error::NoSignChange { lo, hi });
    }
    for _ in 0..200 {
        if (hi - lo) <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if shoot(mid, None) == class_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    let mut rec = Vec::with_capacity(grid.nodes().len());
    shoot(alpha, Some(&mut rec));
    while rec.len() < grid.nodes().len() {
        rec.push(0.0);
    }
    // cut the tail where finite bisection precision lets the trajectory
    // peel off the separatrix: zero everything past the first local
    // minimum of |u| in the decaying tail
    let peak = rec
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut cut = rec.len() - 1;
    for i in (peak + 1).max(1)..rec.len() - 1 {
        if rec[i] <= 0.0 || rec[i + 1] > rec[i] {
            cut = i;
            break;
        }
    }
    for x in rec.iter_mut().skip(cut) {
        *x = 0.0;
    }
    for x in rec.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let raw = RadialProfile::new(Arc::clone(grid), rec)?;
    Ok(newton_polish(grid, &raw, &g1, &g2).unwrap_or(raw))
}

/// Damped Newton for the discrete multiplier-fixed system
/// (A u)_i + w_i G'(u_i) = 0. Returns None when it cannot improve on the
/// starting profile.
fn newton_polish(
    grid: &Arc<crate::grid::RadialGrid>,
    start: &RadialProfile,
    g1: &impl Fn(f64) -> f64,
    g2: &impl Fn(f64) -> f64,
) -> Option<RadialProfile> {
    let m = grid.m();
    let w = grid.weights();
    let residual = |vals: &[f64]| -> Vec<f64> {
        let au = stiffness_apply(grid, vals);
        (0..m).map(|i| au[i] + w[i] * g1(vals[i])).collect()
    };
    let norm = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut u = start.values().to_vec();
    let mut res = residual(&u);
    let mut rn = norm(&res);
    let scale = norm(
        &(0..m)
            .map(|i| w[i] * g1(u[i]).abs().max(u[i].abs()))
            .collect::<Vec<_>>(),
    )
    .max(1e-300);
    for _ in 0..60 {
        if rn <= 1e-14 * scale.max(rn * 0.0 + 1e-10) || rn <= 1e-250 {
            break;
        }
        let mut jac = stiffness_tridiag(grid);
        for i in 0..m {
            jac.diag[i] += w[i] * g2(u[i]);
        }
        let factor = jac.factor().ok()?;
        let delta = factor.solve(&res);
        let mut damp = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let mut trial: Vec<f64> = (0..m).map(|i| u[i] - damp * delta[i]).collect();
            trial.push(0.0);
            let tres = residual(&trial);
            let tn = norm(&tres);
            if tn < rn {
                u = trial;
                res = tres;
                rn = tn;
                improved = true;
                break;
            }
            damp *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let start_res = norm(&residual(start.values()));
    if rn >= start_res {
        return None;
    }
    let out = RadialProfile::new(Arc::clone(grid), u).ok()?;
    // a polish that collapsed to the trivial solution is useless
    if out.linf() < 1e-3 * start.linf() {
        return None;
    }
    Some(out)
}

/// Fill a full certificate for a converged result.
pub fn certify(
    spec: &ProblemSpec,
    result: &WellSolveResult,
    wells: &WellDecomposition,
    opts: &CertifyOptions,
) -> Result<SolutionCertificate> {
    if result.status != SolveStatus::Converged {
        return Err(Error::NotConverged {
            status: result.status.name(),
        });
    }
    let u = &result.profile;
    let mult = result.multiplier;
    let well = wells.well(result.well_index)?;
    let linf = u.linf();

    let el = el_residual(spec, u, mult)?;
    let poh = pohozaev_residual(spec, u, mult)?;

    let localization_ok = {
        let above = if well.xi > 0.0 {
            linf > well.xi + opts.sup_tol
        } else {
            linf > 0.0
        };
        let below = if well.eta.is_finite() {
            linf < well.eta - opts.sup_tol
        } else {
            true
        };
        above && below
    };

    let omega_cap = spec.nl.omega();
    let multiplier_sign_ok = match spec.kind {
        ProblemKind::Elliptic => mult < 1.0,
        ProblemKind::Nls => mult < 0.0,
        ProblemKind::KleinGordon => 0.0 < mult && mult < omega_cap,
        ProblemKind::KgMaxwell => {
            let phi_ok = kgm::solve_phi(u, spec.e_charge)?.phi.values().iter().all(|&p| {
                p >= -1e-12 && p <= 1.0 / spec.e_charge + 1e-12
            });
            0.0 < mult && mult < omega_cap && phi_ok
        }
    };

    // maximum principle against the truncated effective potential of the
    // solve (untruncated for an unbounded last well)
    let trunc = if well.eta.is_finite() {
        let window = if opts.blend_window > 0.0 {
            opts.blend_window
        } else {
            0.25 * well.width()
        };
        Some(truncate(&spec.nl, wells, result.well_index, window)?)
    } else {
        None
    };
    let dens_deriv = |s: f64| match &trunc {
        Some(t) => t.deriv(s),
        None => spec.nl.deriv(s),
    };
    let om2 = omega_cap * omega_cap;
    // G' of the equation-form effective potential: -Δu + G'(u) = 0
    let geff = |s: f64| match spec.kind {
        ProblemKind::Elliptic => (1.0 - mult) * dens_deriv(s),
        ProblemKind::Nls => dens_deriv(s) - mult * s,
        ProblemKind::KleinGordon | ProblemKind::KgMaxwell => {
            (om2 - mult * mult) * s + dens_deriv(s)
        }
    };
    let (s_bar, max_principle_ok) =
        match max_principle_bound(geff, 0.0, opts.s_max.max(linf * 1.5), 1e-9) {
            Ok(sb) => (sb, linf <= sb + opts.sup_tol),
            Err(_) => (f64::NAN, false),
        };

    let hylomorphy_ok = match spec.kind {
        ProblemKind::KleinGordon => {
            let h = eval_h(spec, u, None)?;
            Some(h < omega_cap * spec.constraint_value)
        }
        ProblemKind::KgMaxwell => {
            let ratio = kgm::hylomorphy_ratio(u, spec.e_charge, &spec.nl)?;
            Some(ratio < om2)
        }
        _ => None,
    };

    let constraint_err = match spec.constraint_target() {
        None => 0.0,
        Some(t) => (constraint_g(spec, u, None)? - t).abs() / (1.0 + t.abs()),
    };

    Ok(SolutionCertificate {
        well_index: result.well_index,
        el_residual_rel: el,
        pohozaev_rel: poh,
        linf,
        localization_ok,
        multiplier: mult,
        multiplier_sign_ok,
        max_principle_ok,
        s_bar,
        hylomorphy_ok,
        constraint_err,
    })
}
