//! Gauss-Legendre quadrature helpers.

use std::num::NonZeroUsize;
use std::sync::OnceLock;

use gauss_quad::legendre::GaussLegendre;

use crate::error::{Error, Result};

const ORDER: usize = 12;

fn base_rule() -> &'static Vec<(f64, f64)> {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| rule_unit(ORDER))
}

/// Nodes and weights on [0, 1].
pub fn rule_unit(n: usize) -> Vec<(f64, f64)> {
    let gl = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    gl.as_node_weight_pairs()
        .iter()
        .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
        .collect()
}

fn fixed<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> f64 {
    let h = b - a;
    base_rule().iter().map(|&(x, w)| w * f(a + h * x)).sum::<f64>() * h
}

/// Adaptive bisection on a 12-point Gauss-Legendre rule. Fails with
/// `QuadratureFailure` when the subdivision budget is exhausted or the
/// integrand is not finite.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let whole = fixed(&mut f, a, b);
    let mut stack = vec![(a, b, whole, 0usize)];
    let mut total = 0.0;
    let mut budget = 4000usize;
    while let Some((lo, hi, est, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let l = fixed(&mut f, lo, mid);
        let r = fixed(&mut f, mid, hi);
        if !(l + r).is_finite() {
            return Err(Error::QuadratureFailure);
        }
        let scale = (b - a).abs().max(f64::MIN_POSITIVE);
        let local_tol = tol * ((hi - lo).abs() / scale).max(1e-3);
        if ((l + r) - est).abs() <= local_tol.max(1e-15 * (l + r).abs()) || depth > 40 {
            if depth > 40 {
                return Err(Error::QuadratureFailure);
            }
            total += l + r;
        } else {
            if budget == 0 {
                return Err(Error::QuadratureFailure);
            }
            budget -= 1;
            stack.push((lo, mid, l, depth + 1));
            stack.push((mid, hi, r, depth + 1));
        }
    }
    Ok(total)
}
