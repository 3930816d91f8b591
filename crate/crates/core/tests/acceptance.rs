use std::process::ExitCode;

use cwdyn::acceptance::{run_suite, suite_ids, SuiteConfig};

fn main() -> ExitCode {
    let ids = suite_ids("all").expect("suite ids");
    let run = match run_suite(&ids, SuiteConfig::default(), &mut |r, secs| println!("{} ({secs:.1}s)", r.line())) {
        Ok(run) => run,
        Err(e) => {
            println!("acceptance suite aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    let failures = run.failures();
    println!("{}/{} criteria passed", run.reports.len() - failures.len(), run.reports.len());
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
