//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! status 1 if any criterion fails.

mod common;

use std::time::Duration;

use common::criteria::{self, timed, Outcome};

fn main() {
    let checks: Vec<(u32, &str, Duration, fn() -> Outcome)> = vec![
        (1, "flat-time formula", Duration::from_secs(1), criteria::flat_time),
        (2, "curve limits", Duration::from_secs(1), criteria::curve_limits),
        (3, "inversion identity", Duration::from_secs(1), criteria::inversion_identity),
        (4, "full-conditional consistency", Duration::from_secs(10), criteria::conditional_consistency),
        (5, "Geweke joint-distribution test", Duration::from_secs(600), criteria::geweke_outcome),
        (6, "sampler kernels", Duration::from_secs(60), criteria::sampler_kernels),
        (7, "posterior recovery", Duration::from_secs(900), criteria::posterior_recovery),
        (8, "model comparison at desk scale", Duration::from_secs(1800), criteria::model_comparison),
        (9, "protocol arithmetic", Duration::from_secs(1), criteria::protocol_arithmetic),
        (10, "determinism", Duration::from_secs(60), criteria::determinism),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (id, name, budget, check) in checks {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let out = timed(budget, check);
        let status = if out.passed { "PASS" } else { "FAIL" };
        println!("criterion {id:>2} {status} {name}: {}", out.detail);
        failed += usize::from(!out.passed);
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
