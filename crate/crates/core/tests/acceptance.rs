//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use ncprob::experiments::{run_item, DEFAULT_SEED, ITEMS};

fn main() -> ExitCode {
    let mut failed = 0;
    for item in 1..=ITEMS.len() {
        let start = Instant::now();
        match run_item(item, DEFAULT_SEED) {
            Ok(rep) => {
                println!("{}  [{:.1} s]", rep.line(), start.elapsed().as_secs_f64());
                if !rep.passed {
                    failed += 1;
                }
            }
            Err(e) => {
                println!("criterion {item:>2} FAIL  {}: {e}", ITEMS[item - 1]);
                failed += 1;
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", ITEMS.len() - failed, ITEMS.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
