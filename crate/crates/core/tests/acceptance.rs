//! Acceptance suite at full scale. Prints one pass/fail line per criterion
//! and exits non-zero if any criterion fails.
//!
//! Positional arguments select criteria by number or by a substring of the
//! name: `cargo test --test acceptance -- 5 stability`.

use std::process::ExitCode;

use adapted_ot::acceptance::{run_criterion, Scale, CRITERIA};

fn selected(args: &[String]) -> Vec<usize> {
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    (1..=CRITERIA.len())
        .filter(|&id| {
            filters.is_empty()
                || filters
                    .iter()
                    .any(|f| f.parse::<usize>() == Ok(id) || CRITERIA[id - 1].contains(f.as_str()))
        })
        .collect()
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let ids = selected(&args);
    println!("running {} acceptance criteria", ids.len());
    let mut failed = Vec::new();
    for id in &ids {
        let r = run_criterion(*id, Scale::Full);
        println!("{r}");
        if !r.passed {
            failed.push(r.name);
        }
    }
    println!(
        "acceptance: {} passed, {} failed{}",
        ids.len() - failed.len(),
        failed.len(),
        if failed.is_empty() { String::new() } else { format!(" ({})", failed.join(", ")) }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
