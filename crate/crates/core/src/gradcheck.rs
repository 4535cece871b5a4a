//! Central finite-difference checks against [`Tape::backward`].

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::params::{Bindings, ParamStore};
use crate::tensor::Tensor;
use alloc::vec::Vec;

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Fourth-order central difference from evaluations at `x - 2h, x - h,
/// x + h, x + 2h`.
fn stencil(f_m2: f64, f_m1: f64, f_p1: f64, f_p2: f64, h: f64) -> f64 {
    ((f_m2 - f_p2) + 8.0 * (f_p1 - f_m1)) / (12.0 * h)
}

/// Largest relative error between the analytic gradient of `f` at `params`
/// and its central-difference estimate with the given `step`.
pub fn finite_diff_check<F>(f: F, params: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(params.clone());
    let loss = f(&mut tape, x)?;
    let grads = tape.backward(loss)?;
    let zero = Tensor::zeros(params.rows(), params.cols());
    let analytic = grads.get(x).unwrap_or(&zero);

    let eval = |p: Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let x = tape.leaf(p);
        let out = f(&mut tape, x)?;
        Ok(tape.value(out).item())
    };
    let mut worst: f64 = 0.0;
    let shifted = |i: usize, k: f64| {
        let mut p = params.clone();
        p.data_mut()[i] += k * step;
        eval(p)
    };
    for i in 0..params.len() {
        let numeric = stencil(shifted(i, -2.0)?, shifted(i, -1.0)?, shifted(i, 1.0)?, shifted(i, 2.0)?, step);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Ridders' extrapolated central difference of `f` at `x`.
///
/// Starts from `initial_step` and shrinks it by [`RIDDERS_SHRINK`] per
/// level, extrapolating each new estimate against the coarser ones. Returns
/// the estimate with the smallest error bound together with that bound. The
/// bound of an entry is the larger of the tableau disagreement and the
/// roundoff floor `eps * |f| / h` of the step it was built from, so runs of
/// identical evaluations at tiny steps do not look spuriously exact.
pub fn ridders_derivative<F>(mut f: F, x: f64, initial_step: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    const LEVELS: usize = 10;
    const SAFE: f64 = 2.0;
    let shrink2 = RIDDERS_SHRINK * RIDDERS_SHRINK;
    let mut table = [[0.0f64; LEVELS]; LEVELS];
    let mut h = initial_step;
    let mut central = |h: f64| -> Result<(f64, f64)> {
        let (up, down) = (f(x + h)?, f(x - h)?);
        let roundoff = f64::EPSILON * up.abs().max(down.abs()) / h;
        Ok(((up - down) / (2.0 * h), roundoff))
    };
    let (first, _) = central(h)?;
    table[0][0] = first;
    let mut best = first;
    let mut bound = f64::INFINITY;
    for i in 1..LEVELS {
        h /= RIDDERS_SHRINK;
        let (estimate, roundoff) = central(h)?;
        table[0][i] = estimate;
        let mut factor = shrink2;
        for j in 1..=i {
            table[j][i] = (table[j - 1][i] * factor - table[j - 1][i - 1]) / (factor - 1.0);
            factor *= shrink2;
            let spread = (table[j][i] - table[j - 1][i]).abs().max((table[j][i] - table[j - 1][i - 1]).abs());
            let err = spread.max(roundoff);
            if err <= bound {
                bound = err;
                best = table[j][i];
            }
        }
        if (table[i][i] - table[i - 1][i - 1]).abs() >= SAFE * bound {
            break;
        }
    }
    Ok((best, bound))
}

/// [`ridders_derivative`] from each of `initial_steps`, keeping the
/// estimate with the smallest bound. A start whose steps leave the domain
/// of `f` (a non-finite evaluation) is skipped; the error is returned only
/// when every start fails.
pub fn ridders_best<F>(mut f: F, x: f64, initial_steps: &[f64]) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut best: Option<(f64, f64)> = None;
    let mut failure = None;
    for &h in initial_steps {
        match ridders_derivative(&mut f, x, h) {
            Ok(candidate) => {
                if best.is_none_or(|b| candidate.1 < b.1) {
                    best = Some(candidate);
                }
            }
            Err(e @ Error::NonFinite { .. }) => failure = Some(e),
            Err(e) => return Err(e),
        }
    }
    match (best, failure) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::InvalidArgument("no initial steps given".into())),
    }
}

/// Starting steps tried by [`ridders_check_store`], coarse to fine.
pub const RIDDERS_STEPS: [f64; 8] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12];

/// Step ratio between consecutive levels of [`ridders_derivative`].
pub const RIDDERS_SHRINK: f64 = 1.4;

#[derive(Debug, Clone, PartialEq)]
pub struct StoreCheck {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst_param: Option<(alloc::string::String, usize)>,
    pub entries_checked: usize,
    /// Worst relative error per parameter, in store order.
    pub per_param: Vec<(alloc::string::String, f64)>,
}

impl StoreCheck {
    /// Worst error over parameters whose name starts with `prefix`.
    pub fn max_for_prefix(&self, prefix: &str) -> Option<f64> {
        self.per_param.iter().filter(|(n, _)| n.starts_with(prefix)).map(|p| p.1).reduce(f64::max)
    }
}

/// [`finite_diff_check`] over every scalar in a parameter store.
///
/// Every gate (relu, clamp, attention mask) is frozen at its decision in the
/// unperturbed pass, so the difference quotient measures the same smooth
/// piece the analytic gradient belongs to.
pub fn finite_diff_check_store<F>(store: &ParamStore, f: F, step: f64) -> Result<StoreCheck>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::recording();
    let bindings = store.bind(&mut tape);
    let loss = f(&mut tape, &bindings)?;
    let grads = tape.backward(loss)?;
    let gates = tape.gate_pattern().cloned().unwrap_or_default();

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::replaying(gates.clone());
        let b = s.bind(&mut tape);
        let out = f(&mut tape, &b)?;
        Ok(tape.value(out).item())
    };
    let mut report = StoreCheck { max_relative_error: 0.0, worst_param: None, entries_checked: 0, per_param: Vec::new() };
    let mut probe = store.clone();
    for (id, param) in store.iter() {
        let analytic = grads.get(bindings[id]);
        let mut param_worst: f64 = 0.0;
        for i in 0..param.value.len() {
            let orig = param.value.data()[i];
            let mut at = |k: f64| {
                probe.value_mut(id).data_mut()[i] = orig + k * step;
                eval(&probe)
            };
            let numeric = stencil(at(-2.0)?, at(-1.0)?, at(1.0)?, at(2.0)?, step);
            probe.value_mut(id).data_mut()[i] = orig;
            let a = analytic.map_or(0.0, |g| g.data()[i]);
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            param_worst = param_worst.max(err);
            if report.worst_param.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_param = Some((param.name.clone(), i));
            }
        }
        report.per_param.push((param.name.clone(), param_worst));
    }
    Ok(report)
}

/// [`finite_diff_check_store`] with [`ridders_best`] over [`RIDDERS_STEPS`]
/// as the numeric estimate for every scalar. Suited to losses whose
/// gradient entries span many orders of magnitude, where any single step
/// is either roundoff-bound on the tiny entries or truncation-bound on the
/// sharply curved ones.
pub fn ridders_check_store<F>(store: &ParamStore, f: F) -> Result<StoreCheck>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::recording();
    let bindings = store.bind(&mut tape);
    let loss = f(&mut tape, &bindings)?;
    let grads = tape.backward(loss)?;
    let gates = tape.gate_pattern().cloned().unwrap_or_default();

    let mut report = StoreCheck { max_relative_error: 0.0, worst_param: None, entries_checked: 0, per_param: Vec::new() };
    let mut probe = store.clone();
    for (id, param) in store.iter() {
        let analytic = grads.get(bindings[id]);
        let mut param_worst: f64 = 0.0;
        for i in 0..param.value.len() {
            let orig = param.value.data()[i];
            let (numeric, _) = ridders_best(
                |x| {
                    probe.value_mut(id).data_mut()[i] = x;
                    let mut tape = Tape::replaying(gates.clone());
                    let b = probe.bind(&mut tape);
                    let out = f(&mut tape, &b)?;
                    Ok(tape.value(out).item())
                },
                orig,
                &RIDDERS_STEPS,
            )?;
            probe.value_mut(id).data_mut()[i] = orig;
            let a = analytic.map_or(0.0, |g| g.data()[i]);
            let err = relative_error(a, numeric);
            report.entries_checked += 1;
            param_worst = param_worst.max(err);
            if report.worst_param.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst_param = Some((param.name.clone(), i));
            }
        }
        report.per_param.push((param.name.clone(), param_worst));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sum_of_squares() {
        let x = Tensor::from_vec(2, 3, vec![0.3, -1.2, 2.0, 0.7, -0.4, 1.1]).unwrap();
        let err = finite_diff_check(
            |t, x| {
                let sq = t.mul(x, x)?;
                t.sum(sq)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::row(vec![1.0, 2.0]);
        let err = finite_diff_check(
            |t, _x| {
                let c = t.constant(Tensor::scalar(4.0));
                t.sum(c)
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn ridders_is_near_exact_on_smooth_functions() {
        let (d, bound) = ridders_derivative(|x| Ok(libm::sin(x) * libm::exp(x)), 0.7, 0.1).unwrap();
        let exact = libm::exp(0.7) * (libm::sin(0.7) + libm::cos(0.7));
        assert!((d - exact).abs() < 1e-11, "{d} vs {exact}");
        assert!(bound < 1e-9);
    }

    #[test]
    fn ridders_resolves_tiny_slopes_on_a_large_offset() {
        let slope = 3e-9;
        let (d, _) = ridders_best(|x| Ok(40.0 + slope * x + 1e-3 * x * x), 0.5, &RIDDERS_STEPS).unwrap();
        assert!(relative_error(slope + 1e-3, d) < 1e-6, "{d}");
        let (d, _) = ridders_best(|x| Ok(40.0 + slope * libm::sin(x)), 0.0, &RIDDERS_STEPS).unwrap();
        assert!(relative_error(slope, d) < 1e-4, "{d}");
    }

    #[test]
    fn ridders_skips_starts_that_leave_the_domain() {
        let f = |x: f64| if x > 0.0 { Ok(libm::log(x)) } else { Err(Error::NonFinite { op: "log" }) };
        let (d, _) = ridders_best(f, 1e-3, &RIDDERS_STEPS).unwrap();
        assert!(relative_error(1e3, d) < 1e-8, "{d}");
        assert!(ridders_best(f, 1e-3, &[1.0]).is_err());
    }

    #[test]
    fn store_check_freezes_relu_at_a_kink() {
        let mut store = ParamStore::new();
        // relu(x) at exactly 0 has analytic gradient 0 (closed gate); the
        // frozen check agrees instead of averaging both sides.
        let id = store.add("x", Tensor::row(vec![0.0, 1.0, -1.0]));
        let check = |t: &mut Tape, b: &Bindings| {
            let v = b[id];
            let r = t.relu(v)?;
            t.sum(r)
        };
        assert!(finite_diff_check_store(&store, check, 1e-4).unwrap().max_relative_error < 1e-10);
        assert!(ridders_check_store(&store, check).unwrap().max_relative_error < 1e-10);
    }
}
