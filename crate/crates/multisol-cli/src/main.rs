use std::process::exit;

use multisol_cli::{cmd_scan, cmd_solve, cmd_wells, RunConfig, EXIT_USAGE};

const USAGE: &str = "\
multisol: multiple positive radial solutions of nonlinear field equations

usage: multisol <wells|solve|scan> --config PATH [options]

commands:
  wells    print the well decomposition and maximum-principle bounds
  solve    minimize in every well, certify, write profiles + certificates
  scan     run the first-well solve across constraint values (--values)

options:
  --config PATH      problem file (sectioned text or JSON)
  --out DIR          override the output directory
  --jobs N           worker pool size for per-well solves (default: all)
  --seed N           override the solver seed
  --constraint X     override the constraint value (c or sigma)
  --values a,b,c     constraint values for `scan`
  --trace            stream per-iterate records to well_<j>_trace.ndjson
  --dump-config      print the canonical text form of the config and exit

environment:
  MULTISOL_LOG       off | error | info | debug (default: error)

exit codes: 0 success, 1 usage/config error, 2 no wells, 3 partial solve";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    exit(run(&args));
}

fn run(args: &[String]) -> i32 {
    let Some(command) = args.first() else {
        eprintln!("{USAGE}");
        return EXIT_USAGE;
    };
    if command == "--help" || command == "-h" || command == "help" {
        println!("{USAGE}");
        return 0;
    }
    if !["wells", "solve", "scan"].contains(&command.as_str()) {
        eprintln!("unknown command `{command}`\n\n{USAGE}");
        return EXIT_USAGE;
    }

    let mut config_path: Option<String> = None;
    let mut out_dir: Option<String> = None;
    let mut jobs: usize = 0;
    let mut seed: Option<u64> = None;
    let mut constraint: Option<f64> = None;
    let mut values: Vec<f64> = Vec::new();
    let mut trace = false;
    let mut dump = false;

    let mut it = args[1..].iter();
    while let Some(arg) = it.next() {
        match arg.as_str() {
            "--config" => match it.next() {
                Some(v) => config_path = Some(v.clone()),
                None => {
                    eprintln!("--config needs a path");
                    return EXIT_USAGE;
                }
            },
            "--out" => match it.next() {
                Some(v) => out_dir = Some(v.clone()),
                None => {
                    eprintln!("--out needs a directory");
                    return EXIT_USAGE;
                }
            },
            "--jobs" => match it.next().and_then(|v| v.parse().ok()) {
                Some(v) => jobs = v,
                None => {
                    eprintln!("--jobs needs an integer");
                    return EXIT_USAGE;
                }
            },
            "--seed" => match it.next().and_then(|v| v.parse().ok()) {
                Some(v) => seed = Some(v),
                None => {
                    eprintln!("--seed needs an integer");
                    return EXIT_USAGE;
                }
            },
            "--constraint" => match it.next().and_then(|v| v.parse().ok()) {
                Some(v) => constraint = Some(v),
                None => {
                    eprintln!("--constraint needs a number");
                    return EXIT_USAGE;
                }
            },
            "--values" => {
                let Some(list) = it.next() else {
                    eprintln!("--values needs a comma-separated list");
                    return EXIT_USAGE;
                };
                for tok in list.split(',') {
                    match tok.trim().parse() {
                        Ok(v) => values.push(v),
                        Err(_) => {
                            eprintln!("--values: `{tok}` is not a number");
                            return EXIT_USAGE;
                        }
                    }
                }
            }
            "--trace" => trace = true,
            "--dump-config" => dump = true,
            other => {
                eprintln!("unknown option `{other}`\n\n{USAGE}");
                return EXIT_USAGE;
            }
        }
    }

    let Some(config_path) = config_path else {
        eprintln!("--config PATH is required\n\n{USAGE}");
        return EXIT_USAGE;
    };
    let mut cfg = match RunConfig::from_path(std::path::Path::new(&config_path)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{config_path}: {e}");
            return EXIT_USAGE;
        }
    };
    if let Some(dir) = out_dir {
        cfg.outputs.out_dir = dir;
    }
    if let Some(s) = seed {
        cfg.solver.seed = s;
    }
    if let Some(c) = constraint {
        cfg.problem.constraint = c;
    }
    if trace {
        cfg.outputs.emit_trace = true;
    }
    if dump {
        print!("{}", cfg.dump_text());
        return 0;
    }

    match command.as_str() {
        "wells" => cmd_wells(&cfg),
        "solve" => cmd_solve(&cfg, jobs),
        "scan" => cmd_scan(&cfg, &values),
        _ => unreachable!(),
    }
}
