//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Criteria 1-9 run at their stated sizes. Criterion 10 regenerates the
//! self-test artifacts on 1 and 8 threads with the quick profile and
//! compares them byte for byte.

use std::process::ExitCode;
use std::time::Instant;

use errdist::acceptance::{self, Profile};

fn main() -> ExitCode {
    let filter: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wanted = |id: u8| filter.is_empty() || filter.contains(&id);
    let mut failed = 0;
    let mut run = |id: u8, f: &dyn Fn() -> acceptance::CriterionReport| {
        if !wanted(id) {
            return;
        }
        let t = Instant::now();
        let r = f();
        println!("{} ({:.1}s)", r.line(), t.elapsed().as_secs_f64());
        if !r.passed {
            failed += 1;
        }
    };
    run(1, &acceptance::criterion_1);
    run(2, &acceptance::criterion_2);
    run(3, &acceptance::criterion_3);
    run(4, &acceptance::criterion_4);
    run(5, &|| acceptance::criterion_5(Profile::Full));
    run(6, &acceptance::criterion_6);
    run(7, &|| acceptance::criterion_7(Profile::Full));
    run(8, &|| acceptance::criterion_8(Profile::Full));
    run(9, &|| acceptance::criterion_9(Profile::Full));
    run(10, &|| acceptance::criterion_10(Profile::Quick));
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
