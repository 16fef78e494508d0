use std::process::ExitCode;

use frontlab::verify::{run_suite, Suite};

fn main() -> ExitCode {
    let suite = match std::env::var("FRONTLAB_SUITE").as_deref() {
        Ok("quick") => Suite::Quick,
        _ => Suite::Full,
    };
    let report = run_suite(suite, |c| {
        println!("{}", c.line());
        for d in &c.details {
            println!("        {d}");
        }
    });
    let failed = report
        .criteria
        .iter()
        .filter(|c| c.status == frontlab::verify::Status::Fail)
        .count();
    println!(
        "acceptance: {} of {} criteria passed",
        report.criteria.len() - failed,
        report.criteria.len()
    );
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
