//! The `check` self-test suite.

use tgnn_core::diagnostics::{
    bank_fifo_failures, bank_receives_gradient, kernel_oracle_check, loss_invariants, model_gradient_check,
    primitive_gradient_errors, triangle_times_edge,
};
use tgnn_core::trainer::Variant;

use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn result(name: impl Into<String>, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed, detail }
}

/// Every gradient, oracle and invariant check. A check that errors counts
/// as failed.
pub fn run_checks() -> Vec<CheckResult> {
    let checks: Vec<(&str, fn() -> Result<CheckResult>)> = vec![
        ("primitive gradients", primitive_check),
        ("model gradients", model_check),
        ("kernel oracle", oracle_check),
        ("loss invariants", invariants_check),
        ("memory bank", bank_check),
    ];
    let mut out = Vec::new();
    for (name, run) in checks {
        match run() {
            Ok(r) => out.push(r),
            Err(e) => out.push(result(name, false, format!("error: {e}"))),
        }
    }
    out
}

fn primitive_check() -> Result<CheckResult> {
    let errors = primitive_gradient_errors(100, 0)?;
    let (worst_name, worst) = errors.iter().copied().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    Ok(result(
        "primitive gradients",
        errors.iter().all(|e| e.1 < 1e-4),
        format!("{} primitives x 100 inputs, worst {worst:.2e} ({worst_name})", errors.len()),
    ))
}

fn model_check() -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut entries = 0;
    for v in Variant::ALL {
        let r = model_gradient_check(v, 0)?;
        worst = worst.max(r.max_relative_error);
        entries += r.entries_checked;
    }
    Ok(result("model gradients", worst < 1e-4, format!("every variant, {entries} parameters, worst {worst:.2e}")))
}

fn oracle_check() -> Result<CheckResult> {
    let r = kernel_oracle_check(100, 0)?;
    let (fast, slow) = triangle_times_edge()?;
    Ok(result(
        "kernel oracle",
        r.max_relative_error < 1e-9 && fast == 12.0 && slow == 12.0,
        format!("{} pairs, worst {:.2e}; C3 x K2 at p=1: {fast} vs {slow}", r.pairs, r.max_relative_error),
    ))
}

fn invariants_check() -> Result<CheckResult> {
    let r = loss_invariants(1000, 0)?;
    Ok(result(
        "loss invariants",
        r.holds(),
        format!(
            "{} instances, sum deviation {:.1e}, min loss {:.1e}, asymmetric {}, zero mismatches {}",
            r.instances, r.max_sum_deviation, r.min_loss, r.asymmetric, r.zero_mismatch
        ),
    ))
}

fn bank_check() -> Result<CheckResult> {
    let failures = bank_fifo_failures(10_000, 0)?;
    let leaked = bank_receives_gradient(0)?;
    Ok(result(
        "memory bank",
        failures == 0 && !leaked,
        format!("10000 push sequences, {failures} FIFO failures; gradient reached bank storage: {leaked}"),
    ))
}
