use alloc::vec::Vec;

use rand::{seq::index, RngCore};

use crate::error::{Error, Result};
use crate::policy::{Gradient, PolicyParams};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub probes: usize,
    pub max_relative_error: f64,
    /// Flat parameter index of the worst probe.
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_relative_error < tolerance
    }
}

/// Compares `analytic` against fourth-order central differences of `loss`
/// on `probes` coordinates drawn uniformly (without replacement) from the
/// analytic gradient's support. Coordinates outside the support have zero
/// gradient by construction of the features and are not informative.
///
/// The five-point stencil `(-f(+2h) + 8 f(+h) - 8 f(-h) + f(-2h)) / 12h` has
/// O(h^4) truncation error, so a step near 1e-3 keeps both truncation and
/// cancellation error far below 1e-5 relative, even on coordinates whose
/// gradient is ~1e-9.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<F, R>(
    loss: F,
    params: &PolicyParams,
    analytic: &Gradient,
    probes: usize,
    step: f64,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: Fn(&PolicyParams) -> f64,
    R: RngCore + ?Sized,
{
    let support = analytic.support();
    if support.len() < probes {
        return Err(Error::Precondition(alloc::format!(
            "gradient support has {} coordinates, {} probes requested",
            support.len(),
            probes
        )));
    }
    let chosen: Vec<usize> = index::sample(rng, support.len(), probes).into_iter().map(|i| support[i]).collect();
    let mut theta = params.clone();
    let mut report = GradCheckReport {
        probes,
        max_relative_error: 0.0,
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };
    for idx in chosen {
        let original = theta.as_slice()[idx];
        let mut at = |offset: f64| {
            theta.as_mut_slice()[idx] = original + offset;
            loss(&theta)
        };
        let (p2, p1, m1, m2) = (at(2.0 * step), at(step), at(-step), at(-2.0 * step));
        theta.as_mut_slice()[idx] = original;
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step);
        let a = analytic.values[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if !(rel <= report.max_relative_error) {
            report.max_relative_error = rel;
            report.worst_index = idx;
            report.worst_analytic = a;
            report.worst_numeric = numeric;
        }
    }
    Ok(report)
}
