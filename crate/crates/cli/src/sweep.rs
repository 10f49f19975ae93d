//! Grid of fits over the shape hyperparameter a and seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;

use ardnmf::io::{read_mask, read_matrix};

use crate::{resolve_fit, run_fit, run_seed, usage, CliError, Method, SolverArgs};

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated values of a.
    #[arg(long = "a", value_delimiter = ',', required = true)]
    pub a: Vec<f64>,
    /// Number of runs per value of a.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    /// Base seed; run i uses a seed derived from (seed, i).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory for runs.csv and summary.csv.
    #[arg(long)]
    pub out: PathBuf,
}

/// Result of one cell of the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRow {
    pub a: f64,
    pub run: u64,
    pub seed: u64,
    pub outcome: Result<RunStats, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunStats {
    pub k_eff: usize,
    pub iterations: usize,
    pub termination: String,
    pub final_objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub a: f64,
    pub runs: usize,
    pub failures: usize,
    pub mean_k_eff: f64,
    /// Population standard deviation over successful runs.
    pub std_k_eff: f64,
}

pub fn summarize(rows: &[RunRow], grid: &[f64]) -> Vec<SummaryRow> {
    grid.iter()
        .map(|&a| {
            let cell: Vec<&RunRow> = rows.iter().filter(|r| r.a.to_bits() == a.to_bits()).collect();
            let ks: Vec<f64> = cell
                .iter()
                .filter_map(|r| r.outcome.as_ref().ok().map(|s| s.k_eff as f64))
                .collect();
            let (mean, std) = if ks.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                let n = ks.len() as f64;
                let m = ks.iter().sum::<f64>() / n;
                (m, (ks.iter().map(|k| (k - m) * (k - m)).sum::<f64>() / n).sqrt())
            };
            SummaryRow {
                a,
                runs: cell.len(),
                failures: cell.len() - ks.len(),
                mean_k_eff: mean,
                std_k_eff: std,
            }
        })
        .collect()
}

fn csv_escape(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

pub fn runs_csv(rows: &[RunRow]) -> String {
    let mut out = String::from("a,run,seed,status,k_eff,iterations,termination,final_objective,error\n");
    for r in rows {
        match &r.outcome {
            Ok(s) => {
                let _ = writeln!(
                    out,
                    "{},{},{},ok,{},{},{},{},",
                    r.a, r.run, r.seed, s.k_eff, s.iterations, s.termination, s.final_objective
                );
            }
            Err(e) => {
                let _ = writeln!(out, "{},{},{},failed,,,,,{}", r.a, r.run, r.seed, csv_escape(e));
            }
        }
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from("a,runs,failures,mean_k_eff,std_k_eff\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.a, r.runs, r.failures, r.mean_k_eff, r.std_k_eff
        );
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    if args.solver.method == Method::Nmf {
        return Err(usage("sweep needs an ARD method"));
    }
    if args.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    if args.jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let v = read_matrix(&args.solver.data)
        .map_err(|e| usage(format!("data {}: {e}", args.solver.data.display())))?;
    let mask = match &args.solver.mask {
        Some(p) => Some(read_mask(p).map_err(|e| usage(format!("mask {}: {e}", p.display())))?),
        None => None,
    };
    // Resolve every a up front so flag errors stop the sweep before any fit.
    let mut cells = Vec::new();
    for &a in &args.a {
        for run in 0..args.seeds {
            let seed = run_seed(args.seed, run);
            let cfg = resolve_fit(&args.solver, Some(a), seed, false, &v, mask.as_ref())?;
            cells.push((a, run, cfg));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .map_err(usage)?;
    let rows: Vec<RunRow> = pool.install(|| {
        cells
            .par_iter()
            .map(|(a, run, cfg)| RunRow {
                a: *a,
                run: *run,
                seed: cfg.seed,
                outcome: run_fit(cfg, &v, mask.as_ref())
                    .map(|o| RunStats {
                        k_eff: o.report.k_eff,
                        iterations: o.report.iterations,
                        termination: match o.report.termination {
                            ardnmf::Termination::Tolerance => "tolerance".into(),
                            ardnmf::Termination::IterationCap => "iteration_cap".into(),
                        },
                        final_objective: o.report.final_objective(),
                    })
                    .map_err(|e| e.to_string()),
            })
            .collect()
    });
    let summary = summarize(&rows, &args.a);
    fs::create_dir_all(&args.out).map_err(|e| usage(format!("{}: {e}", args.out.display())))?;
    fs::write(args.out.join("runs.csv"), runs_csv(&rows)).map_err(usage)?;
    fs::write(args.out.join("summary.csv"), summary_csv(&summary)).map_err(usage)?;
    println!("a mean_K_eff std_K_eff failures");
    for s in &summary {
        println!("{} {:.3} {:.3} {}", s.a, s.mean_k_eff, s.std_k_eff, s.failures);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(a: f64, run: u64, k: usize) -> RunRow {
        RunRow {
            a,
            run,
            seed: run,
            outcome: Ok(RunStats {
                k_eff: k,
                iterations: 10,
                termination: "tolerance".into(),
                final_objective: 1.5,
            }),
        }
    }

    #[test]
    fn summary_statistics() {
        let rows = vec![
            ok(5.0, 0, 4),
            ok(5.0, 1, 6),
            ok(10.0, 0, 5),
            RunRow {
                a: 10.0,
                run: 1,
                seed: 1,
                outcome: Err("boom".into()),
            },
        ];
        let s = summarize(&rows, &[5.0, 10.0]);
        assert_eq!(s[0].mean_k_eff, 5.0);
        assert_eq!(s[0].std_k_eff, 1.0);
        assert_eq!((s[1].runs, s[1].failures), (2, 1));
        assert_eq!(s[1].std_k_eff, 0.0);
    }

    #[test]
    fn failed_rows_are_explicit() {
        let rows = vec![RunRow {
            a: 2.0,
            run: 0,
            seed: 7,
            outcome: Err("bad \"b\"".into()),
        }];
        let text = runs_csv(&rows);
        assert_eq!(text.lines().nth(1).unwrap(), "2,0,7,failed,,,,,\"bad \"\"b\"\"\"");
    }
}
