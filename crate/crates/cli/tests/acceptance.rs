//! Acceptance criteria 1-8 at their stated tolerances, one line each.

use std::process::ExitCode;
use std::time::Instant;

use sa_cli::suite::{run_suite, SuiteOptions};

fn main() -> ExitCode {
    let start = Instant::now();
    let run = run_suite(&SuiteOptions::default());
    for row in &run.rows {
        eprintln!("  {}", row.line());
    }
    for c in &run.criteria {
        println!("{}", c.line());
        for f in &c.failures {
            println!("    {f}");
        }
    }
    println!("acceptance suite finished in {:.1}s", start.elapsed().as_secs_f64());
    if run.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
