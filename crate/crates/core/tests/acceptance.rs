// SPDX-License-Identifier: Apache-2.0

//! One PASS/FAIL line per acceptance criterion. Runs every bundled scenario
//! twice (checks plus determinism) and the randomized oracle suites.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use common::{counter_oracle, fp_close, random_bf, random_inputs, random_instance, random_trace, riemann};
use pronet::bf::{aggregation_residual, bf_aggregate};
use pronet::coordinator::{compute_targets, mean_target};
use pronet::harness::{execute, figures, RunSummary};
use pronet::sim::time::SimTime;
use pronet::switch::TenantCounter;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Run {
    summary: RunSummary,
    wall: f64,
}

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, n: u32, title: &str, pass: bool, detail: String) {
        if !pass {
            self.failures += 1;
        }
        println!("{} criterion {n}: {title} ({detail})", if pass { "PASS" } else { "FAIL" });
    }
}

fn checks<'a>(runs: &'a BTreeMap<String, Run>, names: &[&str], keep: impl Fn(&str) -> bool) -> (bool, String) {
    let mut pass = true;
    let mut detail = Vec::new();
    for name in names {
        let run = &runs[*name];
        for c in run.summary.checks.iter().filter(|c| keep(&c.expectation)) {
            pass &= c.pass;
            let v = c.value.map_or_else(|| c.error.clone().unwrap_or_default(), |v| format!("{v:.3}"));
            let mark = if c.pass { "" } else { " FAILED" };
            detail.push(format!("{name}: {} = {v}{mark}", c.expectation));
        }
    }
    (pass, detail.join("; "))
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "csv") {
            let name = path.file_name().unwrap().to_string_lossy().into_owned();
            out.insert(name, fs::read(&path).unwrap());
        }
    }
    out
}

fn bf_suite() -> (bool, String) {
    let mut r = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let (flows, tenant) = random_instance(&mut r);
        let agg = bf_aggregate(&flows, &tenant).unwrap();
        worst = worst.max(aggregation_residual(&agg, &tenant, 1000));
    }
    let mut worst_int = 0.0f64;
    for _ in 0..200 {
        let base = r.gen_range(0.0..2e9);
        let f = random_bf(&mut r, 6, base);
        let a = r.gen_range(0.0..f.max_share() + 2.0);
        let b = a + r.gen_range(0.01..f.max_share() + 3.0);
        let exact = f.integral(a, b).unwrap();
        let approx = riemann(&f, a, b, 200_000);
        worst_int = worst_int.max((exact - approx).abs() / exact.abs().max(1e-9));
    }
    (
        worst < 1e-6 && worst_int < 1e-6,
        format!("max residual {worst:.2e} over 500 instances, max integral error {worst_int:.2e}"),
    )
}

fn coordinator_suite() -> (bool, String) {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let mut bad = 0;
    for _ in 0..10_000 {
        let inputs = random_inputs(&mut r);
        let alpha = r.gen_range(0.0..0.5);
        let sum: f64 = inputs.iter().sum();
        let want = (1.0 + alpha) * sum;
        let out = compute_targets(&inputs, alpha);
        let got: f64 = out.iter().sum();
        let reflect_ok = if out.iter().all(|&t| t > 0.0) {
            fp_close(got, want, inputs.len())
        } else {
            got >= want || fp_close(got, want, inputs.len())
        };
        let mean_ok = fp_close(mean_target(&inputs, alpha).unwrap() * inputs.len() as f64, want, inputs.len());
        let equal = vec![inputs[0]; inputs.len()];
        let fix_ok = compute_targets(&equal, 0.0) == equal && mean_target(&equal, 0.0) == Some(inputs[0]);
        if !(reflect_ok && mean_ok && fix_ok) {
            bad += 1;
        }
    }
    (bad == 0, format!("{bad} of 10000 arrays violate conservation or the fixpoint"))
}

fn counter_suite() -> (bool, String) {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let (mut agree, mut total) = (0usize, 0usize);
    for _ in 0..1000 {
        let th = SimTime(r.gen_range(1..100_000));
        let trace = random_trace(&mut r, th);
        let want = counter_oracle(&trace, th);
        let mut counter = TenantCounter::new(th);
        for (i, &(tenant, ts)) in trace.iter().enumerate() {
            total += 1;
            agree += usize::from(counter.update(tenant, ts) == want[i]);
        }
    }
    (agree == total, format!("{agree}/{total} packets agree over 1000 traces"))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = BTreeMap::new();
    let mut mismatched = Vec::new();
    let scenarios = figures::all();
    for (_, s) in &scenarios {
        let (a, b) = (tmp.path().join(&s.name).join("a"), tmp.path().join(&s.name).join("b"));
        let start = Instant::now();
        let (summary, _) = execute(s, Some(&a)).expect("scenario runs");
        let wall = start.elapsed().as_secs_f64();
        execute(s, Some(&b)).expect("scenario runs");
        let (fa, fb) = (csv_files(&a), csv_files(&b));
        if fa.is_empty() || fa != fb {
            mismatched.push(s.name.clone());
        }
        runs.insert(s.name.clone(), Run { summary, wall });
    }

    let mut report = Report { failures: 0 };

    let weighted = ["fig7b", "fig8b", "fig9b", "fig12"];
    let (pass, detail) = checks(&runs, &weighted, |e| !e.starts_with("settleTime"));
    let slowest = weighted.iter().map(|n| runs[*n].wall).fold(0.0, f64::max);
    report.line(
        1,
        "weighted tenant proportionality",
        pass && slowest < 30.0,
        format!("{detail}; slowest run {slowest:.1} s"),
    );

    let (pass, detail) = checks(&runs, &["fig7a", "fig8a", "fig9a"], |_| true);
    report.line(2, "equal-weight fairness", pass, detail);

    let (pass, detail) = checks(&runs, &["fig10a"], |_| true);
    report.line(3, "work conservation", pass, detail);

    let (pass, detail) = checks(&runs, &["fig10b"], |_| true);
    report.line(4, "minimum bandwidth guarantee", pass, detail);

    let (pass, detail) = checks(&runs, &["fig13-intra", "fig13-intra-nocounter", "fig13-shared"], |_| true);
    report.line(5, "intra- vs inter-tenant congestion", pass, detail);

    let settle = runs["fig9b"]
        .summary
        .checks
        .iter()
        .find(|c| c.expectation.starts_with("settleTime"));
    let (pass, detail) = match settle {
        Some(c) => (c.pass, format!("settled after {:.3} s", c.value.unwrap_or(f64::NAN))),
        None => (false, "no settleTime check in fig9b".into()),
    };
    report.line(6, "convergence speed", pass, detail);

    let (pass, detail) = bf_suite();
    report.line(7, "bandwidth-function algebra", pass, detail);

    let (pass, detail) = coordinator_suite();
    report.line(8, "coordinator arithmetic", pass, detail);

    let (pass, detail) = counter_suite();
    report.line(9, "tenant-counter state machine", pass, detail);

    report.line(
        10,
        "determinism",
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("{} scenarios gave byte-identical CSVs twice", runs.len())
        } else {
            format!("differing CSVs: {}", mismatched.join(", "))
        },
    );

    if report.failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{} criteria failed", report.failures);
        ExitCode::FAILURE
    }
}
