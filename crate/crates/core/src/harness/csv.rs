use std::fmt::Write;

use crate::driver::{RunRecord, RunRow};

use super::config::BenchmarkConfig;

pub const HEADER: &str =
    "benchmark,scheme,delta,gamma,theta,k,ell,accepted,n_elem,n_rt,n_s1,eta,mu,N,grad_inf,marked,wall_ms,budget";

/// One line per row; `wall_ms` is written as 0 unless timings are requested
/// so that reruns are byte-identical. `budget` is 1 on every row of a run
/// that stopped on a budget or a numerical breakdown rather than a tolerance.
pub fn render_rows(config: &BenchmarkConfig, record: &RunRecord, timings: bool, out: &mut String) {
    let budget = u8::from(record.budget_exhausted());
    for row in &record.rows {
        render_row(config, row, timings, budget, out);
    }
}

fn render_row(config: &BenchmarkConfig, row: &RunRow, timings: bool, budget: u8, out: &mut String) {
    let n = row.n_functional.map(|v| format!("{v:?}")).unwrap_or_default();
    let wall = if timings { row.wall_ms } else { 0.0 };
    writeln!(
        out,
        "{},{},{:?},{:?},{:?},{},{},{},{},{},{},{:?},{:?},{},{:?},{},{:.3},{}",
        config.benchmark.name(),
        config.scheme,
        config.delta,
        config.gamma,
        config.theta,
        row.k,
        row.ell,
        u8::from(row.accepted),
        row.n_elem,
        row.n_rt,
        row.n_s1,
        row.eta,
        row.mu,
        n,
        row.grad_inf,
        row.marked,
        wall,
        budget
    )
    .expect("writing to a String cannot fail");
}

pub fn render_csv(config: &BenchmarkConfig, record: &RunRecord, timings: bool) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    render_rows(config, record, timings, &mut out);
    out
}
