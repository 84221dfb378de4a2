//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Positional arguments select criteria by name substring.

mod algebraic;
mod experiments;
mod oracle;

use std::process::ExitCode;
use std::time::Instant;

use experiments::Lab;

pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: String) -> Self {
        Verdict { pass, detail }
    }
}

const CRITERIA: [(usize, &str); 12] = [
    (1, "whitening_identity"),
    (2, "gradient_oracle"),
    (3, "epsilon_formula"),
    (4, "collapse_trichotomy"),
    (5, "rank_separation"),
    (6, "further_decorrelation"),
    (7, "utility_ordering"),
    (8, "bn_setup_ablation"),
    (9, "rank_precondition"),
    (10, "objective_contrast"),
    (11, "determinism"),
    (12, "cifar_ingestion"),
];

fn evaluate(id: usize, lab: &mut Option<Lab>) -> Verdict {
    match id {
        1 => algebraic::whitening_identity(),
        2 => algebraic::gradient_oracle(),
        3 => algebraic::epsilon_formula(),
        4 => experiments::collapse_trichotomy(lab.get_or_insert_with(Lab::new)),
        5 => experiments::rank_separation(lab.get_or_insert_with(Lab::new)),
        6 => experiments::further_decorrelation(lab.get_or_insert_with(Lab::new)),
        7 => experiments::utility_ordering(lab.get_or_insert_with(Lab::new)),
        8 => experiments::bn_setup_ablation(lab.get_or_insert_with(Lab::new)),
        9 => algebraic::rank_precondition(),
        10 => experiments::objective_contrast(lab.get_or_insert_with(Lab::new)),
        11 => experiments::determinism(),
        12 => algebraic::cifar_ingestion(),
        _ => unreachable!("unknown criterion {id}"),
    }
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture are accepted and ignored
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |name: &str| filters.is_empty() || filters.iter().any(|f| name.contains(f.as_str()));

    let start = Instant::now();
    let mut lab = None;
    let mut failed = Vec::new();
    let mut ran = 0;
    for (id, name) in CRITERIA.into_iter().filter(|(_, n)| selected(n)) {
        let v = evaluate(id, &mut lab);
        ran += 1;
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id:>2} {name}: {}", v.detail);
        if !v.pass {
            failed.push(id);
        }
    }
    if let Some(lab) = &lab {
        let (runs, total) = lab.total();
        println!(
            "{runs} training runs, {:.1}s in total, slowest {:.1}s",
            total.as_secs_f64(),
            lab.slowest().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {ran} criteria passed in {:.1}s",
        ran - failed.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
