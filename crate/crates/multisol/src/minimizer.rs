//! Per-well localized minimization.
//!
//! One well, one solve: modify the density above the well's upper endpoint
//! (so the maximum principle pins every critical point below it), seed with
//! a plateau profile, descend the modified energy on the constraint inside
//! the open set 𝓞 = {J̃_j < 0} (∩ {J̃_j(u_{(η_{j-1},η_j)}) < 0} from the
//! second well on), and report the minimizer with its multiplier. Running
//! this for every well yields the multiplicity the theory guarantees:
//! distinct solutions separated by their sup-norm windows.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::{
    constraint_g, eval_j, eval_j_restricted, eval_k, grad_g, grad_h, inner_w,
    least_squares_multiplier, multiplier_estimate, stiffness_apply, stiffness_tridiag,
    EnergyBreakdown, ProblemKind, ProblemSpec,
};
use crate::grid::{plateau_profile, RadialProfile};
use crate::kgm;
use crate::nonlinearity::{truncate, ScalarTerm, TruncatedNonlinearity, Well, WellDecomposition};
use crate::synth::SplitMix64;
use crate::tridiag::LdlFactor;

/// Knobs of the descent. Defaults are calibrated for the bundled problems;
/// `blend_window = 0` means "a quarter of the well width".
#[derive(Debug, Clone, Serialize)]
pub struct SolveOptions {
    pub max_iters: usize,
    pub step0: f64,
    pub step_shrink: f64,
    pub grad_tol: f64,
    pub constraint_tol: f64,
    /// Minimum |J̃| distance from ∂𝓞 before a step is rejected.
    pub boundary_margin: f64,
    pub restarts: usize,
    pub blend_window: f64,
    pub r_n_schedule: Vec<f64>,
    pub seed: u64,
    /// Precondition descent directions by (M + A)⁻¹M, the discrete
    /// (I − Δ)⁻¹. Stationary points are unchanged; convergence is not.
    pub precondition: bool,
    /// Scan range and resolution for well detection.
    pub s_max: f64,
    pub scan_points: usize,
    pub root_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iters: 20_000,
            step0: 0.5,
            step_shrink: 0.5,
            grad_tol: 1e-8,
            constraint_tol: 1e-10,
            boundary_margin: 1e-12,
            restarts: 3,
            blend_window: 0.0,
            r_n_schedule: vec![10.0, 20.0, 40.0, 80.0],
            seed: 0,
            precondition: true,
            s_max: 12.0,
            scan_points: 4096,
            root_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Converged,
    BoundaryHit,
    MaxIters,
    InitFailed,
}

impl SolveStatus {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Converged => "Converged",
            Self::BoundaryHit => "BoundaryHit",
            Self::MaxIters => "MaxIters",
            Self::InitFailed => "InitFailed",
        }
    }
}

/// One per-well outcome. On `Converged` the gradient residual is below
/// `grad_tol·(1+‖grad_H‖)` and the constraint is met to `constraint_tol`.
#[derive(Debug, Clone)]
pub struct WellSolveResult {
    pub profile: RadialProfile,
    pub well_index: usize,
    pub multiplier: f64,
    pub energy: EnergyBreakdown,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Final scaled gradient residual ‖grad_H − λ grad_g‖/(1+‖grad_H‖).
    pub grad_residual: f64,
    /// Iterate log (one record per accepted step) when tracing is on.
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub h: f64,
    pub j: f64,
    pub grad_norm: f64,
    pub linf: f64,
    pub g: f64,
}

/// Minimize the truncated energy over well `j`, per the two localization
/// lemmas: membership in 𝓞 keeps the sup-norm above ξ_j, the truncation and
/// maximum principle keep it below η_j.
pub fn minimize_in_well(
    spec: &ProblemSpec,
    wells: &WellDecomposition,
    j: usize,
    opts: &SolveOptions,
) -> Result<WellSolveResult> {
    minimize_in_well_traced(spec, wells, j, opts, false)
}

pub fn minimize_in_well_traced(
    spec: &ProblemSpec,
    wells: &WellDecomposition,
    j: usize,
    opts: &SolveOptions,
    trace: bool,
) -> Result<WellSolveResult> {
    let well = wells.well(j)?;
    let trunc = if well.eta.is_finite() {
        let window = if opts.blend_window > 0.0 {
            opts.blend_window
        } else {
            0.25 * well.width()
        };
        Some(truncate(&spec.nl, wells, j, window)?)
    } else {
        None // the unbounded last well runs untruncated
    };
    let work = WellWorkspace::new(spec, wells, j, well, trunc, opts, trace);
    work.run()
}

/// Solve every well; failures never abort the batch. `jobs` caps the worker
/// pool (0 means the available parallelism).
pub fn find_all(
    spec: &ProblemSpec,
    wells: &WellDecomposition,
    opts: &SolveOptions,
    jobs: usize,
) -> Vec<Result<WellSolveResult>> {
    find_all_traced(spec, wells, opts, jobs, false)
}

pub fn find_all_traced(
    spec: &ProblemSpec,
    wells: &WellDecomposition,
    opts: &SolveOptions,
    jobs: usize,
    trace: bool,
) -> Vec<Result<WellSolveResult>> {
    let ell = wells.ell();
    let jobs = if jobs == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
            .min(ell)
    } else {
        jobs.min(ell).max(1)
    };
    if jobs <= 1 || ell == 1 {
        return (1..=ell)
            .map(|j| minimize_in_well_traced(spec, wells, j, opts, trace))
            .collect();
    }
    let mut results: Vec<Option<Result<WellSolveResult>>> = (0..ell).map(|_| None).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst) + 1;
                if j > ell {
                    break;
                }
                let r = minimize_in_well_traced(spec, wells, j, opts, trace);
                slots.lock().unwrap()[j - 1] = Some(r);
            });
        }
    });
    results.into_iter().map(|r| r.unwrap()).collect()
}

/// Resample u(x/√(1−λ)) onto the same grid: the stretch that turns a
/// solution of the constrained equation into one of the unconstrained
/// elliptic problem.
pub fn rescale_elliptic(u: &RadialProfile, lambda: f64) -> Result<RadialProfile> {
    if lambda >= 1.0 {
        return Err(Error::BadMultiplier { lambda });
    }
    let beta = (1.0 - lambda).sqrt();
    let values: Vec<f64> = u
        .grid()
        .nodes()
        .iter()
        .map(|&r| u.eval_linear(r / beta))
        .collect();
    RadialProfile::new(Arc::clone(u.grid()), values)
}

/// One row of a threshold scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub value: f64,
    pub status: SolveStatus,
    pub h: f64,
    pub linf: f64,
    pub j: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct ScanReport {
    pub rows: Vec<ScanRow>,
    /// Smallest scanned constraint value that converged with J < 0: an
    /// upper bound for the theory's threshold.
    pub threshold: Option<f64>,
}

/// Run the first-well solve across constraint values (sorted ascending by
/// magnitude of interest) and report where minimization starts succeeding.
pub fn threshold_scan(
    spec_template: &ProblemSpec,
    values: &[f64],
    opts: &SolveOptions,
) -> ScanReport {
    let mut report = ScanReport::default();
    for &value in values {
        let mut spec = spec_template.clone();
        spec.constraint_value = value;
        let row = match detect_and_solve_first(&spec, opts) {
            Ok(res) => {
                let j = res.energy.j_value;
                ScanRow {
                    value,
                    status: res.status,
                    h: res.energy.h_value,
                    linf: res.profile.linf(),
                    j,
                }
            }
            Err(_) => ScanRow {
                value,
                status: SolveStatus::InitFailed,
                h: f64::NAN,
                linf: f64::NAN,
                j: f64::NAN,
            },
        };
        if report.threshold.is_none()
            && row.status == SolveStatus::Converged
            && row.j < 0.0
        {
            report.threshold = Some(value);
        }
        report.rows.push(row);
    }
    report
}

fn detect_and_solve_first(spec: &ProblemSpec, opts: &SolveOptions) -> Result<WellSolveResult> {
    let wells = crate::nonlinearity::detect_wells(
        &spec.nl,
        opts.s_max,
        opts.scan_points,
        opts.root_tol,
    )?;
    minimize_in_well(spec, &wells, 1, opts)
}

// ---------------------------------------------------------------------------

struct WellWorkspace<'a> {
    spec: &'a ProblemSpec,
    j: usize,
    well: Well,
    trunc: Option<TruncatedNonlinearity>,
    opts: &'a SolveOptions,
    trace: bool,
    precond: Option<LdlFactor>,
    eta_prev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Reject {
    None,
    Boundary,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl<'a> WellWorkspace<'a> {
    fn new(
        spec: &'a ProblemSpec,
        wells: &'a WellDecomposition,
        j: usize,
        well: Well,
        trunc: Option<TruncatedNonlinearity>,
        opts: &'a SolveOptions,
        trace: bool,
    ) -> Self {
        let precond = if opts.precondition {
            let grid = &spec.grid;
            let mut p = stiffness_tridiag(grid);
            for i in 0..grid.m() {
                p.diag[i] += grid.weights()[i];
            }
            p.factor().ok()
        } else {
            None
        };
        let eta_prev = wells.eta_prev(j).unwrap_or(0.0);
        Self {
            spec,
            j,
            well,
            trunc,
            opts,
            trace,
            precond,
            eta_prev,
        }
    }

    fn ov(&self) -> Option<&TruncatedNonlinearity> {
        self.trunc.as_ref()
    }

    fn j_tilde(&self, u: &RadialProfile) -> f64 {
        eval_j(self.spec, u, self.ov())
    }

    fn h_tilde(&self, u: &RadialProfile) -> Result<f64> {
        Ok(self.j_tilde(u) + eval_k(self.spec, u)?)
    }

    /// The defining clauses of 𝓞, with the margin folded in.
    fn membership(&self, u: &RadialProfile, margin: f64) -> bool {
        if self.j_tilde(u) >= -margin {
            return false;
        }
        if self.j >= 2 {
            let restricted =
                eval_j_restricted(self.spec, u, self.eta_prev, self.well.eta, self.ov());
            if restricted >= -margin {
                return false;
            }
        }
        true
    }

    fn constraint_err(&self, u: &RadialProfile) -> Result<f64> {
        match self.spec.constraint_target() {
            None => Ok(0.0),
            Some(target) => {
                let g = constraint_g(self.spec, u, self.ov())?;
                Ok((g - target).abs() / (1.0 + target.abs()))
            }
        }
    }

    /// Pull a profile back onto the constraint manifold. NLS rescales
    /// exactly; elliptic and KGM run a safeguarded Newton iteration in the
    /// amplitude. Klein-Gordon is unconstrained.
    fn retract(&self, u: &mut RadialProfile) -> Result<bool> {
        match self.spec.kind {
            ProblemKind::KleinGordon => Ok(true),
            ProblemKind::Nls => {
                let l2 = u.l2_sq();
                if l2 <= 0.0 {
                    return Ok(false);
                }
                let alpha = self.spec.constraint_value / l2.sqrt();
                for x in u.values_mut() {
                    *x *= alpha;
                }
                Ok(true)
            }
            ProblemKind::Elliptic => {
                let target = self.spec.constraint_value;
                self.amplitude_newton(u, target, |w| constraint_g(self.spec, w, self.ov()))
            }
            ProblemKind::KgMaxwell => {
                let c = self.spec.constraint_value;
                self.amplitude_newton(u, c * c, |w| {
                    kgm::kgm_charge(w, self.spec.e_charge)
                })
            }
        }
    }

    /// Solve g(α·u) = target for the amplitude α by damped Newton with a
    /// bisection fallback on a bracketing scan.
    fn amplitude_newton(
        &self,
        u: &mut RadialProfile,
        target: f64,
        g: impl Fn(&RadialProfile) -> Result<f64>,
    ) -> Result<bool> {
        let base = u.clone();
        let scaled = |alpha: f64| -> RadialProfile {
            let mut w = base.clone();
            for x in w.values_mut() {
                *x *= alpha;
            }
            w
        };
        let tol = self.opts.constraint_tol * (1.0 + target.abs());
        let eval = |alpha: f64| -> Result<f64> { Ok(g(&scaled(alpha))? - target) };

        let mut alpha = 1.0;
        let mut f = eval(alpha)?;
        for _ in 0..60 {
            if f.abs() <= tol {
                *u = scaled(alpha);
                return Ok(true);
            }
            let h = 1e-6 * (1.0 + alpha.abs());
            let fp = (eval(alpha + h)? - eval(alpha - h)?) / (2.0 * h);
            if fp.abs() < 1e-300 {
                break;
            }
            let step = f / fp;
            let mut next = alpha - step;
            // keep the amplitude positive and the step sane
            if !(next > 1e-8 && next < 1e8) || !next.is_finite() {
                break;
            }
            // damping: insist on |f| decreasing
            let mut fn_next = eval(next)?;
            let mut damp = 0;
            while fn_next.abs() > f.abs() && damp < 30 {
                next = 0.5 * (alpha + next);
                fn_next = eval(next)?;
                damp += 1;
            }
            if fn_next.abs() >= f.abs() && damp >= 30 {
                break;
            }
            alpha = next;
            f = fn_next;
        }
        if f.abs() <= tol {
            *u = scaled(alpha);
            return Ok(true);
        }
        // bracketing fallback over a geometric amplitude scan
        let mut lo = None;
        let mut prev: Option<(f64, f64)> = None;
        let mut a = 1e-4;
        while a <= 1e4 {
            let fa = eval(a)?;
            if let Some((pa, pf)) = prev {
                if fa.signum() != pf.signum() {
                    lo = Some((pa, pf, a));
                    break;
                }
            }
            prev = Some((a, fa));
            a *= 1.25;
        }
        let Some((mut lo, flo, mut hi)) = lo else {
            return Ok(false);
        };
        let mut flo = flo;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let fm = eval(mid)?;
            if fm.abs() <= tol {
                *u = scaled(mid);
                return Ok(true);
            }
            if fm.signum() == flo.signum() {
                lo = mid;
                flo = fm;
            } else {
                hi = mid;
            }
        }
        Ok(false)
    }

    /// Clip to nonnegative values and re-pin the Dirichlet node.
    fn clip(u: &mut RadialProfile) {
        for x in u.values_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let m = u.grid().m();
        u.values_mut()[m] = 0.0;
    }

    /// Candidate plateau seeds: the configured radius schedule plus a
    /// constraint-matched radius, with unit, wide and narrow ramp widths.
    fn seed_candidates(&self, jitter: f64) -> Vec<RadialProfile> {
        let grid = &self.spec.grid;
        let s0_base = if self.well.eta.is_finite() {
            self.well.midpoint()
        } else {
            // unbounded well: seed at the deepest sampled point
            let mut best = (self.well.xi + 1.0, 0.0);
            for i in 0..512 {
                let s = self.well.xi + (self.opts.s_max - self.well.xi) * i as f64 / 512.0;
                let v = self.spec.nl.value(s);
                if v < best.1 {
                    best = (s, v);
                }
            }
            best.0
        };
        let s0 = s0_base * (1.0 + jitter);
        let h_min = self
            .spec
            .grid
            .spacings()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let mut radii = self.opts.r_n_schedule.clone();
        // constraint-matched radius: put the (possibly retracted) plateau
        // mass where the constraint wants it
        if let Some(target) = self.spec.constraint_target() {
            let v1 = crate::grid::ball_volume(grid.dim(), 1.0);
            let depth = self.spec.nl.value(s0).abs().max(1e-6);
            let guess = match self.spec.kind {
                ProblemKind::Elliptic => (target.abs() / (depth * v1)).powf(1.0 / grid.dim() as f64),
                // mass-type constraints: ‖u‖₂² ≈ s0²·V₁ r^N
                _ => (target / (s0 * s0 * v1)).powf(1.0 / grid.dim() as f64),
            };
            if guess.is_finite() {
                for scale in [0.5, 1.0, 2.0] {
                    let r = (scale * guess).clamp(2.0 * h_min, 0.8 * grid.r_max());
                    radii.push(r);
                }
            }
        }
        radii.retain(|r| r.is_finite() && *r > 0.0);
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        radii.dedup();
        let mut seeds = Vec::new();
        for &r_n in &radii {
            if r_n + 2.0 * h_min > grid.r_max() {
                continue;
            }
            // unit ramp plus a wide and a radius-scaled narrow variant;
            // small constraint levels need concentrated seeds
            let mut widths = vec![1.0, (0.5 * r_n).max(1.0), r_n];
            for w in widths.iter_mut() {
                *w = w.clamp(2.0 * h_min, grid.r_max() - r_n);
            }
            widths.sort_by(|a, b| a.partial_cmp(b).unwrap());
            widths.dedup();
            for width in widths {
                seeds.push(plateau_profile(grid, s0, r_n, width));
            }
        }
        seeds
    }

    fn run(mut self) -> Result<WellSolveResult> {
        let mut rng = SplitMix64::new(self.opts.seed ^ (self.j as u64).wrapping_mul(0x9E37));
        let mut last: Option<WellSolveResult> = None;
        for attempt in 0..=self.opts.restarts {
            let jitter = if attempt == 0 {
                0.0
            } else {
                0.1 * rng.uniform(-1.0, 1.0)
            };
            let step0 = self.opts.step0 * self.opts.step_shrink.powi(attempt as i32);
            let out = self.attempt(step0, jitter)?;
            if out.status == SolveStatus::Converged {
                return Ok(out);
            }
            last = Some(out);
        }
        Ok(last.expect("at least one attempt ran"))
    }

    fn attempt(&mut self, step0: f64, jitter: f64) -> Result<WellSolveResult> {
        let opts = self.opts;
        let spec = self.spec;
        let mut trace = Vec::new();

        // --- seed: best on-constraint candidate by J̃ ---
        let mut seed: Option<(f64, RadialProfile)> = None;
        for mut cand in self.seed_candidates(jitter) {
            Self::clip(&mut cand);
            if !self.retract(&mut cand)? {
                continue;
            }
            Self::clip(&mut cand);
            if self.constraint_err(&cand)? > opts.constraint_tol * 100.0 {
                // clipping after retraction can drift mass-type constraints;
                // retract once more
                if !self.retract(&mut cand)? {
                    continue;
                }
            }
            let j = self.j_tilde(&cand);
            if seed.as_ref().map(|(bj, _)| j < *bj).unwrap_or(true) {
                seed = Some((j, cand));
            }
        }
        let Some((_, mut u)) = seed else {
            return self.finish(
                spec.grid.zero_profile(),
                0,
                SolveStatus::InitFailed,
                f64::NAN,
                trace,
            );
        };

        // --- phase A: drive J̃ negative on the constraint (feasibility) ---
        let margin = opts.boundary_margin;
        let feas_budget = opts.max_iters / 4;
        let mut iters = 0usize;
        if !self.membership(&u, 2.0 * margin) {
            let mut step = step0;
            let mut k = 0;
            while k < feas_budget && !self.membership(&u, 2.0 * margin) {
                k += 1;
                iters += 1;
                let (next, accepted, _) =
                    self.descent_step(&u, step, true, margin, f64::INFINITY)?;
                if accepted {
                    u = next;
                    step = (step * 1.5).min(step0 * 64.0);
                } else {
                    step *= opts.step_shrink;
                    if step < 1e-18 {
                        break;
                    }
                }
            }
            if !self.membership(&u, margin) {
                return self.finish(u, iters, SolveStatus::InitFailed, f64::NAN, trace);
            }
        }

        // --- phase B: minimize H̃ inside 𝓞 ---
        let mut step = step0;
        let mut h_curr = self.h_tilde(&u)?;
        let mut next_polish = 0usize;
        while iters < opts.max_iters {
            iters += 1;
            let (gres, gnorm) = self.residual(&u)?;
            if gres <= opts.grad_tol * (1.0 + gnorm)
                && self.constraint_err(&u)? <= opts.constraint_tol
            {
                // tie-break: a sup-norm pinned at η_j means the localization
                // failed; restart with a smaller step
                if self.well.eta.is_finite() && u.linf() >= self.well.eta - 1e-6 {
                    return self.finish(u, iters, SolveStatus::BoundaryHit, gres, trace);
                }
                if self.trace {
                    self.push_trace(&mut trace, iters, &u, gnorm)?;
                }
                return self.finish(u, iters, SolveStatus::Converged, gres, trace);
            }
            // once descent has the basin, Newton finishes the job
            if gres <= 1e-3 * (1.0 + gnorm) && iters >= next_polish {
                next_polish = iters + 25;
                if let Some(p) = self.kkt_polish(&u)? {
                    u = p;
                    h_curr = self.h_tilde(&u)?;
                    continue;
                }
            }
            let (next, accepted, reject) = self.descent_step(&u, step, false, margin, h_curr)?;
            if accepted {
                u = next;
                h_curr = self.h_tilde(&u)?;
                step = (step * 1.5).min(step0 * 64.0);
                if self.trace {
                    self.push_trace(&mut trace, iters, &u, gnorm)?;
                }
            } else {
                step *= opts.step_shrink;
                if step < 1e-18 {
                    if let Some(p) = self.kkt_polish(&u)? {
                        u = p;
                        h_curr = self.h_tilde(&u)?;
                        step = step0 * 1e-3;
                        continue;
                    }
                    let status = if reject == Reject::Boundary {
                        SolveStatus::BoundaryHit
                    } else {
                        SolveStatus::MaxIters
                    };
                    return self.finish(u, iters, status, gres, trace);
                }
            }
        }
        let (gres, _) = self.residual(&u)?;
        self.finish(u, iters, SolveStatus::MaxIters, gres, trace)
    }

    fn push_trace(
        &self,
        trace: &mut Vec<TraceRecord>,
        iteration: usize,
        u: &RadialProfile,
        grad_norm: f64,
    ) -> Result<()> {
        trace.push(TraceRecord {
            iteration,
            h: self.h_tilde(u)?,
            j: self.j_tilde(u),
            grad_norm,
            linf: u.linf(),
            g: constraint_g(self.spec, u, self.ov())?,
        });
        Ok(())
    }

    /// Newton polish of the KKT system once descent has located the basin:
    /// solves grad_H̃ = m·grad_g̃ together with the constraint by a bordered
    /// tridiagonal Newton iteration (rank-one corrected for the nonlocal
    /// Klein-Gordon K-part; the Klein-Gordon-Maxwell Jacobian freezes Φ,
    /// which costs only the convergence rate). Returns an improved iterate
    /// when the combined residual strictly decreased.
    fn kkt_polish(&self, u: &RadialProfile) -> Result<Option<RadialProfile>> {
        let spec = self.spec;
        let grid = &spec.grid;
        let m = grid.m();
        let w = grid.weights();
        let density = spec.density(self.ov());

        // combined euclidean residual: stationarity + constraint
        let combined = |vals: &[f64], mult: f64| -> Result<(Vec<f64>, f64)> {
            let au = stiffness_apply(grid, vals);
            let mut f = vec![0.0; m];
            match spec.kind {
                ProblemKind::Elliptic => {
                    for i in 0..m {
                        f[i] = au[i] + w[i] * (1.0 - mult) * density.deriv(vals[i]);
                    }
                }
                ProblemKind::Nls => {
                    for i in 0..m {
                        f[i] = au[i] + w[i] * (density.deriv(vals[i]) - mult * vals[i]);
                    }
                }
                ProblemKind::KleinGordon => {
                    let l2: f64 = (0..=m).map(|i| w[i] * vals[i] * vals[i]).sum();
                    let om = spec.nl.omega();
                    let omu = spec.constraint_value / l2;
                    for i in 0..m {
                        f[i] = au[i]
                            + w[i] * (density.deriv(vals[i]) + (om * om - omu * omu) * vals[i]);
                    }
                }
                ProblemKind::KgMaxwell => {
                    let prof = RadialProfile::new(Arc::clone(grid), vals.to_vec())?;
                    let phi = kgm::solve_phi(&prof, spec.e_charge)?;
                    let pv = phi.phi.values();
                    let om = spec.nl.omega();
                    for i in 0..m {
                        let fac = 1.0 - spec.e_charge * pv[i];
                        f[i] = au[i]
                            + w[i]
                                * (om * om * vals[i] + density.deriv(vals[i])
                                    - mult * fac * fac * vals[i]);
                    }
                }
            }
            let cerr = match spec.constraint_target() {
                None => 0.0,
                Some(target) => {
                    let prof = RadialProfile::new(Arc::clone(grid), vals.to_vec())?;
                    constraint_g(spec, &prof, self.ov())? - target
                }
            };
            Ok((f, cerr))
        };
        let norm2 = |f: &[f64], c: f64| -> f64 {
            (f.iter().map(|x| x * x).sum::<f64>() + c * c).sqrt()
        };

        // physical multiplier in the equation parametrization
        let mut mult = match spec.kind {
            ProblemKind::Elliptic | ProblemKind::Nls => {
                multiplier_estimate(spec, u, self.ov())?
            }
            ProblemKind::KleinGordon => 0.0, // unused
            ProblemKind::KgMaxwell => {
                let est = multiplier_estimate(spec, u, self.ov())?;
                est * est // the equation carries ν = ω²
            }
        };
        let mut vals: Vec<f64> = u.values().to_vec();
        let (mut f, mut cerr) = combined(&vals, mult)?;
        let mut best = norm2(&f, cerr);
        let start = best;

        for _ in 0..30 {
            // Jacobian diagonal part
            let mut jac = stiffness_tridiag(grid);
            match spec.kind {
                ProblemKind::Elliptic => {
                    for i in 0..m {
                        jac.diag[i] += w[i] * (1.0 - mult) * density.deriv2(vals[i]);
                    }
                }
                ProblemKind::Nls => {
                    for i in 0..m {
                        jac.diag[i] += w[i] * (density.deriv2(vals[i]) - mult);
                    }
                }
                ProblemKind::KleinGordon => {
                    let l2: f64 = (0..=m).map(|i| w[i] * vals[i] * vals[i]).sum();
                    let om = spec.nl.omega();
                    let s = spec.constraint_value;
                    let omu = s / l2;
                    for i in 0..m {
                        jac.diag[i] +=
                            w[i] * (density.deriv2(vals[i]) + om * om - omu * omu);
                    }
                    let Ok(factor) = jac.factor() else { break };
                    // rank-one term +β ρρᵀ with ρ = w∘u, β = 4σ²/l2³
                    let rho: Vec<f64> = (0..m).map(|i| w[i] * vals[i]).collect();
                    let beta = 4.0 * s * s / (l2 * l2 * l2);
                    let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
                    let x1 = factor.solve(&rhs);
                    let x2 = factor.solve(&rho);
                    let denom = 1.0 + beta * dot(&rho, &x2);
                    let fac = beta * dot(&rho, &x1) / denom;
                    let delta: Vec<f64> =
                        (0..m).map(|i| x1[i] - fac * x2[i]).collect();
                    if !self.polish_accept(
                        &mut vals, &delta, 0.0, &mut mult, &mut f, &mut cerr, &mut best,
                        &combined, &norm2,
                    )? {
                        break;
                    }
                    continue;
                }
                ProblemKind::KgMaxwell => {
                    let prof = RadialProfile::new(Arc::clone(grid), vals.to_vec())?;
                    let phi = kgm::solve_phi(&prof, spec.e_charge)?;
                    let pv = phi.phi.values();
                    let om = spec.nl.omega();
                    for i in 0..m {
                        let fac = 1.0 - spec.e_charge * pv[i];
                        jac.diag[i] += w[i]
                            * (om * om + density.deriv2(vals[i]) - mult * fac * fac);
                    }
                }
            }
            // bordered system for the constrained kinds
            let Ok(factor) = jac.factor() else { break };
            let (border, row): (Vec<f64>, Vec<f64>) = match spec.kind {
                ProblemKind::Elliptic => {
                    let gg: Vec<f64> = (0..m).map(|i| w[i] * density.deriv(vals[i])).collect();
                    (gg.iter().map(|x| -x).collect(), gg)
                }
                ProblemKind::Nls => {
                    let wu: Vec<f64> = (0..m).map(|i| w[i] * vals[i]).collect();
                    (wu.iter().map(|x| -x).collect(), wu.iter().map(|x| 2.0 * x).collect())
                }
                ProblemKind::KgMaxwell => {
                    let prof = RadialProfile::new(Arc::clone(grid), vals.to_vec())?;
                    let phi = kgm::solve_phi(&prof, spec.e_charge)?;
                    let pv = phi.phi.values();
                    let gg: Vec<f64> = (0..m)
                        .map(|i| {
                            let fac = 1.0 - spec.e_charge * pv[i];
                            w[i] * fac * fac * vals[i]
                        })
                        .collect();
                    (gg.iter().map(|x| -x).collect(), gg)
                }
                ProblemKind::KleinGordon => unreachable!(),
            };
            let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
            let x1 = factor.solve(&rhs);
            let x2 = factor.solve(&border); // J⁻¹ (∂F/∂m)
            let r_x2 = dot(&row, &x2);
            if r_x2.abs() < 1e-300 {
                break;
            }
            // J δu + b δm = -F,  rᵀδu = -cerr
            let dm = (dot(&row, &x1) + cerr) / r_x2;
            let delta: Vec<f64> = (0..m).map(|i| x1[i] - dm * x2[i]).collect();
            if !self.polish_accept(
                &mut vals, &delta, dm, &mut mult, &mut f, &mut cerr, &mut best, &combined,
                &norm2,
            )? {
                break;
            }
        }

        if best >= start {
            return Ok(None);
        }
        // the discrete positive solution keeps a positive tail; anything
        // below roundoff scale is clipped without measurable residual change
        let linf = vals.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        if vals.iter().any(|&x| x < -1e-10 * linf) {
            return Ok(None);
        }
        let mut out = vals;
        for x in out.iter_mut() {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let prof = RadialProfile::new(Arc::clone(grid), out)?;
        if !self.membership(&prof, self.opts.boundary_margin) {
            return Ok(None);
        }
        Ok(Some(prof))
    }

    #[allow(clippy::too_many_arguments)]
    fn polish_accept(
        &self,
        vals: &mut Vec<f64>,
        delta: &[f64],
        dmult: f64,
        mult: &mut f64,
        f: &mut Vec<f64>,
        cerr: &mut f64,
        best: &mut f64,
        combined: &impl Fn(&[f64], f64) -> Result<(Vec<f64>, f64)>,
        norm2: &impl Fn(&[f64], f64) -> f64,
    ) -> Result<bool> {
        let m = delta.len();
        let mut damp = 1.0;
        for _ in 0..25 {
            let mut trial: Vec<f64> = (0..m).map(|i| vals[i] + damp * delta[i]).collect();
            trial.push(0.0);
            let tmult = *mult + damp * dmult;
            let (tf, tc) = combined(&trial, tmult)?;
            let tn = norm2(&tf, tc);
            if tn < *best {
                *vals = trial;
                *mult = tmult;
                *f = tf;
                *cerr = tc;
                *best = tn;
                return Ok(true);
            }
            damp *= 0.5;
        }
        Ok(false)
    }

    /// Projected-gradient residual and raw gradient norm.
    fn residual(&self, u: &RadialProfile) -> Result<(f64, f64)> {
        let gh = grad_h(self.spec, u, self.ov())?;
        let gnorm = inner_w(&self.spec.grid, gh.values(), gh.values()).sqrt();
        let proj = self.projected_direction(u, &gh)?;
        let res = inner_w(&self.spec.grid, proj.values(), proj.values()).sqrt();
        Ok((res, gnorm))
    }

    fn projected_direction(&self, u: &RadialProfile, gh: &RadialProfile) -> Result<RadialProfile> {
        let gg = grad_g(self.spec, u, self.ov())?;
        let lam = if self.spec.kind == ProblemKind::KleinGordon {
            0.0
        } else {
            least_squares_multiplier(&self.spec.grid, gh, &gg).unwrap_or(0.0)
        };
        let mut d = gh.clone();
        for (dv, gv) in d.values_mut().iter_mut().zip(gg.values()) {
            *dv -= lam * gv;
        }
        Ok(d)
    }

    /// One trial step. `feasibility` switches the objective to J̃ (phase A).
    /// Returns (candidate, accepted, rejection kind).
    fn descent_step(
        &self,
        u: &RadialProfile,
        step: f64,
        feasibility: bool,
        margin: f64,
        h_curr: f64,
    ) -> Result<(RadialProfile, bool, Reject)> {
        let spec = self.spec;
        let dir = if feasibility {
            // gradient of J̃ projected against the constraint
            let v = u.values();
            let au = crate::functionals::stiffness_apply(&spec.grid, v);
            let density = spec.density(self.ov());
            let mut g = vec![0.0; v.len()];
            for i in 0..spec.grid.m() {
                g[i] = au[i] / spec.grid.weights()[i] + density.deriv(v[i]);
            }
            let gj = RadialProfile::new(Arc::clone(&spec.grid), g)?;
            self.projected_direction(u, &gj)?
        } else {
            let gh = grad_h(spec, u, self.ov())?;
            self.projected_direction(u, &gh)?
        };
        // precondition: z = (M + A)^{-1} M d
        let z = match &self.precond {
            Some(f) => {
                let m = spec.grid.m();
                let rhs: Vec<f64> = (0..m)
                    .map(|i| spec.grid.weights()[i] * dir.values()[i])
                    .collect();
                let mut z = f.solve(&rhs);
                z.push(0.0);
                z
            }
            None => dir.values().to_vec(),
        };
        let mut cand = u.clone();
        for (x, zi) in cand.values_mut().iter_mut().zip(&z) {
            *x -= step * zi;
        }
        Self::clip(&mut cand);
        if !self.retract(&mut cand)? {
            return Ok((cand, false, Reject::None));
        }
        Self::clip(&mut cand);
        if self.constraint_err(&cand)? > self.opts.constraint_tol && !self.retract(&mut cand)? {
            return Ok((cand, false, Reject::None));
        }
        if feasibility {
            let better = self.j_tilde(&cand) <= self.j_tilde(u);
            return Ok((cand, better, Reject::None));
        }
        if !self.membership(&cand, margin) {
            return Ok((cand, false, Reject::Boundary));
        }
        let h_next = self.h_tilde(&cand)?;
        Ok((cand, h_next <= h_curr, Reject::None))
    }

    fn finish(
        &self,
        u: RadialProfile,
        iterations: usize,
        status: SolveStatus,
        grad_residual: f64,
        trace: Vec<TraceRecord>,
    ) -> Result<WellSolveResult> {
        // report true (untruncated) energies; at a converged solution they
        // coincide with the modified ones since ‖u‖∞ < η_j
        let energy = if u.linf() > 0.0 {
            EnergyBreakdown::compute(self.spec, &u, None)
                .or_else(|_| EnergyBreakdown::compute(self.spec, &u, self.ov()))
        } else {
            Ok(EnergyBreakdown {
                j_value: 0.0,
                k_value: 0.0,
                h_value: 0.0,
                constraint_g: 0.0,
                multiplier_estimate: 0.0,
            })
        }?;
        let multiplier = if status == SolveStatus::Converged {
            multiplier_estimate(self.spec, &u, None)?
        } else {
            energy.multiplier_estimate
        };
        Ok(WellSolveResult {
            profile: u,
            well_index: self.j,
            multiplier,
            energy,
            iterations,
            status,
            grad_residual,
            trace,
        })
    }
}
