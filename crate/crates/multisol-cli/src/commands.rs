//! The three subcommands and their exit-code contract:
//! 0 full success, 1 usage/config error, 2 precondition failure (no wells),
//! 3 partial solve.

use std::io::Write as _;
use std::path::Path;

use multisol::certify::{certify, CertifyOptions, SolutionCertificate};
use multisol::minimizer::{find_all_traced, threshold_scan, SolveStatus, WellSolveResult};
use multisol::nonlinearity::{detect_wells, max_principle_bound, truncate, ScalarTerm};
use multisol::{verify_growth, Error, ProblemKind, ProblemSpec, SolveOptions};
use serde::Serialize;

use crate::config::RunConfig;
use crate::log::{log_debug, log_info};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_PRECONDITION: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

fn build(cfg: &RunConfig) -> Result<(ProblemSpec, SolveOptions), i32> {
    cfg.build().map_err(|e| {
        eprintln!("config error: {e}");
        EXIT_USAGE
    })
}

fn wells_or_exit(
    spec: &ProblemSpec,
    opts: &SolveOptions,
) -> Result<multisol::WellDecomposition, i32> {
    match detect_wells(&spec.nl, opts.s_max, opts.scan_points, opts.root_tol) {
        Ok(w) => Ok(w),
        Err(Error::NoWells { .. }) => {
            eprintln!(
                "no wells: the nonlinearity is nonnegative on (0, {}]; nothing to solve",
                opts.s_max
            );
            Err(EXIT_PRECONDITION)
        }
        Err(e) => {
            eprintln!("well detection failed: {e}");
            Err(EXIT_PRECONDITION)
        }
    }
}

/// Print the well decomposition table and per-well maximum-principle bounds.
pub fn cmd_wells(cfg: &RunConfig) -> i32 {
    let (spec, opts) = match build(cfg) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let wells = match wells_or_exit(&spec, &opts) {
        Ok(w) => w,
        Err(code) => return code,
    };
    println!("detected {} well(s) of the nonlinear density:", wells.ell());
    println!("{:>4} {:>14} {:>14} {:>14} {:>14} {:>12}", "j", "xi", "eta", "midpoint", "R(mid)", "s_bar");
    for (idx, w) in wells.wells().iter().enumerate() {
        let j = idx + 1;
        let mid = w.midpoint();
        let sbar = if w.eta.is_finite() {
            let window = if opts.blend_window > 0.0 {
                opts.blend_window
            } else {
                0.25 * w.width()
            };
            truncate(&spec.nl, &wells, j, window)
                .ok()
                .and_then(|tn| {
                    max_principle_bound(|s| tn.deriv(s), 0.0, opts.s_max, 1e-9).ok()
                })
        } else {
            max_principle_bound(|s| spec.nl.deriv(s), 0.0, opts.s_max, 1e-9).ok()
        };
        let sbar = sbar
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{j:>4} {:>14.8} {:>14.8} {mid:>14.8} {:>14.6e} {sbar:>12}",
            w.xi,
            w.eta,
            spec.nl.value(mid)
        );
    }
    if spec.nl.growth.is_some() || spec.nl.coercivity.is_some() {
        let rep = verify_growth(&spec.nl, spec.grid.dim(), 4096);
        if let Some(h3) = rep.h3 {
            println!(
                "growth bound |T''| <= c1 s^(p-2) + c2 s^(q-2): {} (worst margin {:.3e} at s = {:.3e})",
                if h3.holds { "holds" } else { "violated" },
                h3.worst_margin,
                h3.worst_at
            );
        }
        if let Some(h4) = rep.h4 {
            println!(
                "coercivity bound T >= -c3 s^2 - c4 |s|^gamma: {} ({} violations; advisory only)",
                if h4.holds { "holds" } else { "violated" },
                h4.violations
            );
        }
    }
    EXIT_OK
}

#[derive(Serialize)]
struct WellRecord<'a> {
    well_index: usize,
    status: &'a str,
    iterations: usize,
    grad_residual: f64,
    multiplier: f64,
    energy: &'a multisol::EnergyBreakdown,
    certificate: Option<&'a SolutionCertificate>,
}

/// Solve every well, certify, write artifacts.
pub fn cmd_solve(cfg: &RunConfig, jobs: usize) -> i32 {
    let (spec, opts) = match build(cfg) {
        Ok(v) => v,
        Err(code) => return code,
    };
    let wells = match wells_or_exit(&spec, &opts) {
        Ok(w) => w,
        Err(code) => return code,
    };
    log_info(&format!(
        "solving {} well(s) of a {} problem on {} cells (r_max = {})",
        wells.ell(),
        spec.kind.name(),
        spec.grid.m(),
        spec.grid.r_max()
    ));
    let out_dir = Path::new(&cfg.outputs.out_dir);
    if let Err(e) = std::fs::create_dir_all(out_dir) {
        eprintln!("cannot create output directory {}: {e}", out_dir.display());
        return EXIT_USAGE;
    }

    let results = find_all_traced(&spec, &wells, &opts, jobs, cfg.outputs.emit_trace);
    let copts = CertifyOptions {
        blend_window: opts.blend_window,
        s_max: opts.s_max,
        ..CertifyOptions::default()
    };

    let mut all_ok = true;
    let mut records = Vec::new();
    let mut certs: Vec<Option<SolutionCertificate>> = Vec::new();
    for res in &results {
        match res {
            Ok(r) => {
                let cert = if r.status == SolveStatus::Converged {
                    match certify(&spec, r, &wells, &copts) {
                        Ok(c) => Some(c),
                        Err(e) => {
                            eprintln!("certification failed for well {}: {e}", r.well_index);
                            all_ok = false;
                            None
                        }
                    }
                } else {
                    all_ok = false;
                    None
                };
                if let Some(c) = &cert {
                    if !c.passes(&copts) {
                        all_ok = false;
                    }
                    println!("{}", c.summary_line());
                } else {
                    println!(
                        "well {}: status={} after {} iterations (grad residual {:.3e})",
                        r.well_index,
                        r.status.name(),
                        r.iterations,
                        r.grad_residual
                    );
                }
                certs.push(cert);
            }
            Err(e) => {
                eprintln!("solve error: {e}");
                all_ok = false;
                certs.push(None);
            }
        }
    }

    // artifacts
    for (res, cert) in results.iter().zip(&certs) {
        let Ok(r) = res else { continue };
        if let Err(e) = write_well_artifacts(&spec, cfg, out_dir, r, cert.as_ref()) {
            eprintln!("failed to write artifacts for well {}: {e}", r.well_index);
            all_ok = false;
        }
        records.push((r, cert));
    }
    let json_records: Vec<WellRecord> = records
        .iter()
        .map(|(r, c)| WellRecord {
            well_index: r.well_index,
            status: r.status.name(),
            iterations: r.iterations,
            grad_residual: r.grad_residual,
            multiplier: r.multiplier,
            energy: &r.energy,
            certificate: c.as_ref(),
        })
        .collect();
    match serde_json::to_string_pretty(&json_records) {
        Ok(json) => {
            if let Err(e) = std::fs::write(out_dir.join("certificates.json"), json) {
                eprintln!("cannot write certificates.json: {e}");
                all_ok = false;
            }
        }
        Err(e) => {
            eprintln!("cannot serialize certificates: {e}");
            all_ok = false;
        }
    }

    if all_ok {
        EXIT_OK
    } else {
        EXIT_PARTIAL
    }
}

fn write_well_artifacts(
    spec: &ProblemSpec,
    cfg: &RunConfig,
    out_dir: &Path,
    r: &WellSolveResult,
    cert: Option<&SolutionCertificate>,
) -> std::io::Result<()> {
    let j = r.well_index;
    if cfg.outputs.emit_profiles {
        std::fs::write(
            out_dir.join(format!("well_{j}_profile.csv")),
            r.profile.to_csv(),
        )?;
        if spec.kind == ProblemKind::Elliptic
            && r.status == SolveStatus::Converged
            && r.multiplier < 1.0
        {
            if let Ok(rescaled) =
                multisol::minimizer::rescale_elliptic(&r.profile, r.multiplier)
            {
                std::fs::write(
                    out_dir.join(format!("well_{j}_rescaled.csv")),
                    rescaled.to_csv(),
                )?;
            }
        }
        if spec.kind == ProblemKind::KgMaxwell && r.status == SolveStatus::Converged {
            if let Ok(phi) = multisol::kgm::solve_phi(&r.profile, spec.e_charge) {
                let mut text = format!(
                    "# dim={} r_max={}\nr,u,phi_flag\n",
                    spec.grid.dim(),
                    spec.grid.r_max()
                );
                for (rr, p) in spec.grid.nodes().iter().zip(phi.phi.values()) {
                    text.push_str(&format!("{rr},{p},1\n"));
                }
                std::fs::write(out_dir.join(format!("well_{j}_phi.csv")), text)?;
            }
        }
    }
    if cfg.outputs.emit_trace && !r.trace.is_empty() {
        let mut f = std::fs::File::create(out_dir.join(format!("well_{j}_trace.ndjson")))?;
        for rec in &r.trace {
            writeln!(f, "{}", serde_json::to_string(rec).unwrap())?;
        }
    }
    let _ = cert;
    log_debug(&format!("artifacts for well {j} written"));
    Ok(())
}

/// Scan the first-well solve over constraint values and report the
/// smallest value that succeeds.
pub fn cmd_scan(cfg: &RunConfig, values: &[f64]) -> i32 {
    if values.is_empty() {
        eprintln!("scan needs at least one value (--values a,b,c)");
        return EXIT_USAGE;
    }
    let (spec, opts) = match build(cfg) {
        Ok(v) => v,
        Err(code) => return code,
    };
    if let Err(code) = wells_or_exit(&spec, &opts) {
        return code;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let report = threshold_scan(&spec, &sorted, &opts);
    println!("{:>14} {:>12} {:>14} {:>12} {:>14}", "value", "status", "H", "|u|_inf", "J");
    for row in &report.rows {
        println!(
            "{:>14.6} {:>12} {:>14.6} {:>12.6} {:>14.6}",
            row.value,
            row.status.name(),
            row.h,
            row.linf,
            row.j
        );
    }
    match report.threshold {
        Some(t) => println!("threshold estimate (smallest converged value with J < 0): {t}"),
        None => println!("no scanned value converged with J < 0"),
    }
    if cfg.outputs.emit_plot_data {
        let out_dir = Path::new(&cfg.outputs.out_dir);
        if let Err(e) = std::fs::create_dir_all(out_dir) {
            eprintln!("cannot create output directory {}: {e}", out_dir.display());
            return EXIT_USAGE;
        }
        let mut csv = String::from("value,status,h,linf,j\n");
        for row in &report.rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                row.value,
                row.status.name(),
                row.h,
                row.linf,
                row.j
            ));
        }
        if let Err(e) = std::fs::write(out_dir.join("scan.csv"), csv) {
            eprintln!("cannot write scan.csv: {e}");
            return EXIT_PARTIAL;
        }
    }
    EXIT_OK
}
