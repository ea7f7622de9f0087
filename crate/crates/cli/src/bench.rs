//! Side-by-side timing of several solvers on one batch of reads.

use anyhow::Context;

use dna_inverse::io::{Method, ReportRecord};

use crate::{load_reads, solve_reads, write_output, BenchCmd, Failure};

/// Relative slack when deciding whether two objectives tie.
const TIE_TOL: f64 = 1e-9;

struct Summary {
    method: &'static str,
    solved: usize,
    failed: usize,
    mean_ms: f64,
    median_ms: f64,
    /// Fraction of reads, among those every method solved, where this method
    /// reached the smallest objective (ties count for all tied methods).
    win_rate: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

fn summarise(methods: &[Method], runs: &[Vec<ReportRecord>]) -> Vec<Summary> {
    let reads = runs.first().map_or(0, Vec::len);
    let mut wins = vec![0usize; methods.len()];
    let mut contested = 0usize;
    for i in 0..reads {
        let objectives: Option<Vec<f64>> = runs.iter().map(|r| r[i].objective).collect();
        let Some(objectives) = objectives else { continue };
        contested += 1;
        let best = objectives.iter().copied().fold(f64::INFINITY, f64::min);
        for (k, f) in objectives.iter().enumerate() {
            if *f <= best + TIE_TOL * best.abs().max(1.0) {
                wins[k] += 1;
            }
        }
    }
    methods
        .iter()
        .zip(runs)
        .zip(wins)
        .map(|((m, run), w)| {
            let times: Vec<f64> = run
                .iter()
                .filter(|r| r.error.is_none())
                .map(|r| r.wall_ms)
                .collect();
            let solved = times.len();
            Summary {
                method: m.name(),
                solved,
                failed: run.len() - solved,
                mean_ms: if solved > 0 {
                    times.iter().sum::<f64>() / solved as f64
                } else {
                    f64::NAN
                },
                median_ms: median(times),
                win_rate: if contested > 0 {
                    w as f64 / contested as f64
                } else {
                    f64::NAN
                },
            }
        })
        .collect()
}

fn tsv(rows: Vec<Vec<String>>) -> anyhow::Result<String> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(Vec::new());
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok(String::from_utf8(bytes)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub(crate) fn run(a: &BenchCmd) -> Result<usize, Failure> {
    let model = a.solver.model.build()?;
    let reads = load_reads(&a.input)?;
    let mut methods: Vec<Method> = Vec::new();
    for m in &a.methods {
        let m = Method::from(*m);
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let runs = methods
        .iter()
        .map(|&m| solve_reads(&model, &reads, m, &a.solver))
        .collect::<anyhow::Result<Vec<_>>>()?;

    let mut rows = vec![["method", "reads", "failed", "mean_ms", "median_ms", "win_rate"]
        .map(String::from)
        .to_vec()];
    for s in summarise(&methods, &runs) {
        rows.push(vec![
            s.method.to_string(),
            s.solved.to_string(),
            s.failed.to_string(),
            format!("{:.3}", s.mean_ms),
            format!("{:.3}", s.median_ms),
            format!("{:.3}", s.win_rate),
        ]);
    }
    write_output(a.out.as_deref(), &tsv(rows)?)?;

    if let Some(path) = &a.per_read {
        let mut rows = vec![[
            "read_id",
            "method",
            "wall_ms",
            "objective",
            "same_d_as_first",
            "rel_error",
            "error",
        ]
        .map(String::from)
        .to_vec()];
        for (i, read) in reads.iter().enumerate() {
            let first = &runs[0][i];
            for (m, run) in methods.iter().zip(&runs) {
                let r = &run[i];
                rows.push(vec![
                    read.id.clone(),
                    m.name().to_string(),
                    format!("{:.3}", r.wall_ms),
                    opt(r.objective),
                    (r.error.is_none() && r.d_star == first.d_star).to_string(),
                    opt(r.recovery.as_ref().map(|x| x.rel_error)),
                    r.error.clone().unwrap_or_default(),
                ]);
            }
        }
        std::fs::write(path, tsv(rows)?)
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(runs
        .iter()
        .flatten()
        .filter(|r| r.error.is_some())
        .count())
}
