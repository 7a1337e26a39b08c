//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use featseg_cli::suite::{run_suite, Suite};

fn main() {
    let workdir = tempfile::tempdir().expect("temporary directory");
    println!("running acceptance criteria");
    let report = match run_suite(Suite::All, workdir.path(), |r| println!("{}", r.line())) {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance suite aborted: {e}");
            std::process::exit(1);
        }
    };
    println!("\nsummary\n{}", report.summary());
    if !report.all_passed() {
        std::process::exit(1);
    }
}
