//! Acceptance checks: one PASS/FAIL line per criterion, then its individual
//! checks. Exits non-zero if any criterion fails.
//!
//! Positional numbers select criteria (`cargo test --test acceptance -- 5 8`);
//! libtest flags are ignored.
//!
//! The Hermite-regime reference sample (m = 10^5 paths of length 2^16) is
//! generated on first use and cached under `$FBMVAR_CACHE_DIR`.

use std::io::Write;
use std::process::ExitCode;

use fbmvar_core::verify::{run_criterion, VerifyOptions, CRITERIA};

fn main() -> ExitCode {
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let opts = VerifyOptions::default();
    let mut failed = Vec::new();
    for &(id, _) in CRITERIA.iter() {
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        let report = run_criterion(id, &opts);
        print!("{}", report.render());
        std::io::stdout().flush().ok();
        if !report.passed {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
