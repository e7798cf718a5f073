//! Nested-refinement search over the single parameter k.
//!
//! The search walks k upward from `k_min` in steps of `√(k_max − k_min)`.
//! When a probe satisfies the predicate, that k becomes the new upper limit,
//! the step shrinks to its square root, and the walk restarts
//! `step·⌊step⌋` below the accepted k. It stops at the first success whose
//! step is at most the stop threshold.

use std::fmt::Write as _;

use serde::Serialize;

use crate::archive::estimated_ratio;
use crate::error::{Error, Result};
use crate::forward::{CalibrationSet, ReferenceOutputs};
use crate::model::Model;
use crate::quant::{quantize_model, QuantConfig, QuantizedModel, DEFAULT_EPS0};

pub const DEFAULT_STOP_THRESHOLD: f64 = 3.0;

/// Search interval for k derived from the largest layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchBounds {
    pub k_min: f64,
    pub k_max: f64,
    pub n_star: usize,
    pub eps0: f64,
}

impl SearchBounds {
    pub fn contains(&self, k: f64) -> bool {
        let tol = 1e-12 * self.k_max;
        k >= self.k_min - tol && k <= self.k_max + tol
    }
}

/// `√(n*/24)/(1−ε₀) ≤ k* ≤ √(n*/24)/(ε₀·√ε₀)` for the largest layer size n*.
pub fn bounds_for(n_star: usize, eps0: f64) -> Result<SearchBounds> {
    if !(eps0 > 0.0 && eps0 < 1.0) {
        return Err(Error::Eps0OutOfRange(eps0));
    }
    if n_star == 0 {
        return Err(Error::EmptyArch);
    }
    let root = (n_star as f64 / 24.0).sqrt();
    let k_min = root / (1.0 - eps0);
    let k_max = root / (eps0 * eps0.sqrt());
    // the interval is empty once ε₀^1.5 ≥ 1 − ε₀ (ε₀ ≳ 0.4656)
    if k_min >= k_max {
        return Err(Error::Eps0OutOfRange(eps0));
    }
    Ok(SearchBounds {
        k_min,
        k_max,
        n_star,
        eps0,
    })
}

pub fn k_bounds(model: &Model, eps0: f64) -> Result<SearchBounds> {
    if model.is_empty() {
        return Err(Error::EmptyArch);
    }
    bounds_for(model.largest_layer(), eps0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SearchParams {
    pub eps0: f64,
    pub stop_threshold: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        SearchParams {
            eps0: DEFAULT_EPS0,
            stop_threshold: DEFAULT_STOP_THRESHOLD,
        }
    }
}

impl SearchParams {
    fn validate(&self) -> Result<()> {
        // below 1 the shrinking step (√step → 1) would never reach the threshold
        if !(self.stop_threshold >= 1.0 && self.stop_threshold.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "stop threshold must be a finite value >= 1, got {}",
                self.stop_threshold
            )));
        }
        Ok(())
    }
}

/// One probe of the search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub k: f64,
    pub step: f64,
    pub deviation: f64,
    pub est_ratio: f64,
    /// The probe met the search predicate.
    pub accepted: bool,
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SearchTrace {
    pub evaluations: Vec<Evaluation>,
    pub chosen_k: f64,
    /// Number of step refinements performed.
    pub iterations: usize,
}

impl SearchTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,step,deviation,est_ratio,accepted\n");
        for e in &self.evaluations {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                e.k, e.step, e.deviation, e.est_ratio, e.accepted
            );
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub qmodel: QuantizedModel,
    pub trace: SearchTrace,
    pub bounds: SearchBounds,
    pub deviation: f64,
    pub est_ratio: f64,
    /// False for the best-effort result carried by [`Error::Unsatisfiable`].
    pub satisfied: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Refinement {
    pub accepted: Option<f64>,
    pub final_step: f64,
    pub stages: usize,
}

/// Generic nested refinement. `probe(k, step)` reports whether k satisfies
/// the predicate; the predicate is assumed to hold from some k onwards.
pub(crate) fn nested_refine<F>(
    k_min: f64,
    k_max: f64,
    stop_threshold: f64,
    mut probe: F,
) -> Result<Refinement>
where
    F: FnMut(f64, f64) -> Result<bool>,
{
    let mut upper = k_max;
    let mut base = k_min;
    let mut step = (k_max - k_min).max(0.0).sqrt();
    let mut stages = 0;
    let mut j = 0u64;
    let mut last = f64::NEG_INFINITY;
    loop {
        // k indexed from the stage base so repeated additions cannot drift past `upper`
        let mut k = base + j as f64 * step;
        if k > upper {
            if last < upper {
                k = upper;
            } else {
                break;
            }
        }
        if probe(k, step)? {
            if step <= stop_threshold {
                return Ok(Refinement {
                    accepted: Some(k),
                    final_step: step,
                    stages,
                });
            }
            upper = k;
            step = step.sqrt();
            base = (k - step * step.floor()).max(k_min);
            j = 0;
            last = f64::NEG_INFINITY;
            stages += 1;
        } else {
            if step == 0.0 {
                break;
            }
            last = k;
            j += 1;
        }
    }
    Ok(Refinement {
        accepted: None,
        final_step: step,
        stages,
    })
}

struct Evaluator<'a> {
    model: &'a Model,
    reference: ReferenceOutputs,
    eps0: f64,
}

struct Probe {
    qmodel: QuantizedModel,
    deviation: f64,
    est_ratio: f64,
}

impl<'a> Evaluator<'a> {
    fn new(model: &'a Model, calib: &CalibrationSet, eps0: f64) -> Result<Self> {
        Ok(Evaluator {
            model,
            reference: ReferenceOutputs::new(model, calib)?,
            eps0,
        })
    }

    fn probe(&self, k: f64) -> Result<Probe> {
        let qmodel = quantize_model(self.model, &QuantConfig::new(k, self.eps0))?;
        let deviation = self.reference.mean_deviation(&qmodel.to_model()?)?;
        let est_ratio = estimated_ratio(&qmodel)?;
        Ok(Probe {
            qmodel,
            deviation,
            est_ratio,
        })
    }
}

fn record(trace: &mut SearchTrace, k: f64, step: f64, p: &Probe, accepted: bool) {
    trace.evaluations.push(Evaluation {
        k,
        step,
        deviation: p.deviation,
        est_ratio: p.est_ratio,
        accepted,
        deltas: p.qmodel.deltas(),
    });
}

/// Smallest k (at the stop-threshold resolution) whose quantized model keeps
/// the mean output deviation within `budget`.
///
/// On failure the error carries the quantization at `k_max` and the full
/// trace.
pub fn riq_search(
    model: &Model,
    calib: &CalibrationSet,
    budget: f64,
    params: &SearchParams,
) -> Result<SearchOutcome> {
    if !(budget > 0.0 && budget <= 2.0) {
        return Err(Error::BudgetOutOfRange(format!(
            "deviation budget {budget} outside (0, 2]"
        )));
    }
    params.validate()?;
    let bounds = k_bounds(model, params.eps0)?;
    let eval = Evaluator::new(model, calib, params.eps0)?;

    let mut trace = SearchTrace::default();
    let mut best: Option<(f64, Probe)> = None;
    let refinement = nested_refine(
        bounds.k_min,
        bounds.k_max,
        params.stop_threshold,
        |k, step| {
            let p = eval.probe(k)?;
            let ok = p.deviation <= budget;
            record(&mut trace, k, step, &p, ok);
            if ok {
                best = Some((k, p));
            }
            Ok(ok)
        },
    )?;
    trace.iterations = refinement.stages;

    match (refinement.accepted, best) {
        (Some(k), Some((bk, p))) if bk == k => {
            trace.chosen_k = k;
            Ok(SearchOutcome {
                deviation: p.deviation,
                est_ratio: p.est_ratio,
                qmodel: p.qmodel,
                trace,
                bounds,
                satisfied: true,
            })
        }
        _ => {
            let p = eval.probe(bounds.k_max)?;
            trace.chosen_k = bounds.k_max;
            Err(Error::Unsatisfiable(Box::new(SearchOutcome {
                deviation: p.deviation,
                est_ratio: p.est_ratio,
                qmodel: p.qmodel,
                trace,
                bounds,
                satisfied: false,
            })))
        }
    }
}

/// Dual mode: the largest k (smallest deviation) whose estimated compression
/// ratio still reaches `target_ratio`.
///
/// The refinement locates the first k whose ratio falls below the target;
/// the answer is the largest probed k below that boundary that met it.
pub fn rate_targeted_search(
    model: &Model,
    calib: &CalibrationSet,
    target_ratio: f64,
    params: &SearchParams,
) -> Result<SearchOutcome> {
    if !(target_ratio > 1.0 && target_ratio.is_finite()) {
        return Err(Error::BudgetOutOfRange(format!(
            "target ratio {target_ratio} must exceed 1"
        )));
    }
    params.validate()?;
    let bounds = k_bounds(model, params.eps0)?;
    let eval = Evaluator::new(model, calib, params.eps0)?;

    let mut trace = SearchTrace::default();
    let refinement = nested_refine(
        bounds.k_min,
        bounds.k_max,
        params.stop_threshold,
        |k, step| {
            let p = eval.probe(k)?;
            let ok = p.est_ratio >= target_ratio;
            record(&mut trace, k, step, &p, ok);
            Ok(!ok)
        },
    )?;
    trace.iterations = refinement.stages;

    let boundary = refinement.accepted.unwrap_or(f64::INFINITY);
    // the probe one final step below the boundary, if the walk skipped it
    if let Some(kb) = refinement.accepted {
        let below = kb - refinement.final_step;
        if below >= bounds.k_min && !trace.evaluations.iter().any(|e| e.k == below) {
            let p = eval.probe(below)?;
            let ok = p.est_ratio >= target_ratio;
            record(&mut trace, below, refinement.final_step, &p, ok);
        }
    } else {
        let p = eval.probe(bounds.k_max)?;
        let ok = p.est_ratio >= target_ratio;
        record(&mut trace, bounds.k_max, refinement.final_step, &p, ok);
    }
    // quantization is deterministic, so the winner is rebuilt from its k
    let winner = trace
        .evaluations
        .iter()
        .filter(|e| e.accepted && e.k < boundary)
        .map(|e| e.k)
        .max_by(f64::total_cmp);

    match winner {
        Some(k) => {
            let p = eval.probe(k)?;
            trace.chosen_k = k;
            Ok(SearchOutcome {
                deviation: p.deviation,
                est_ratio: p.est_ratio,
                qmodel: p.qmodel,
                trace,
                bounds,
                satisfied: true,
            })
        }
        None => {
            let p = eval.probe(bounds.k_min)?;
            trace.chosen_k = bounds.k_min;
            Err(Error::Unsatisfiable(Box::new(SearchOutcome {
                deviation: p.deviation,
                est_ratio: p.est_ratio,
                qmodel: p.qmodel,
                trace,
                bounds,
                satisfied: false,
            })))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{synth_model, Activation, Init, LayerSpec};

    #[test]
    fn bounds_from_the_proof() {
        let b = bounds_for(9600, 0.01).unwrap();
        assert!((b.k_min - 20.0 / 0.99).abs() <= 1e-9 * b.k_min);
        assert!((b.k_max - 20_000.0).abs() <= 1e-9 * b.k_max);
        assert!((b.k_max - 1000.0 * (9600.0f64 / 24.0).sqrt()).abs() <= 1e-9 * b.k_max);
    }

    #[test]
    fn bounds_by_hand() {
        let b = bounds_for(24, 0.25).unwrap();
        assert!((b.k_min - 4.0 / 3.0).abs() < 1e-12);
        assert!((b.k_max - 8.0).abs() < 1e-12);
    }

    #[test]
    fn bounds_guard_eps0() {
        for e in [0.0, 1.0, 1.5, -0.1, 0.6] {
            assert!(
                matches!(bounds_for(100, e), Err(Error::Eps0OutOfRange(_))),
                "{e}"
            );
        }
        assert!(bounds_for(100, 0.46).is_ok());
    }

    /// Exhaustive scan on the grid k_min + j·resolution.
    fn grid_oracle(
        k_min: f64,
        k_max: f64,
        resolution: f64,
        pred: impl Fn(f64) -> bool,
    ) -> Option<f64> {
        (0..)
            .map(|j| k_min + j as f64 * resolution)
            .take_while(|&k| k <= k_max)
            .find(|&k| pred(k))
    }

    #[test]
    fn refinement_matches_grid_on_monotone_deviation() {
        let (k_min, k_max) = (26.4, 26_128.0);
        for budget in [5e-2, 1e-3, 3.3e-4, 1e-5, 2e-6, 7.5e-7] {
            let dev = |k: f64| 5.0 / (k * k);
            let mut evals = 0;
            let r = nested_refine(k_min, k_max, 3.0, |k, _| {
                evals += 1;
                Ok(dev(k) <= budget)
            })
            .unwrap();
            let k = r.accepted.expect("reachable budget");
            let oracle = grid_oracle(k_min, k_max, 3.0, |k| dev(k) <= budget).unwrap();
            assert!(dev(k) <= budget);
            assert!(
                (k - oracle).abs() <= 3.0,
                "budget {budget}: {k} vs grid {oracle}"
            );
            assert!(evals <= 200, "{evals} evaluations");
        }
    }

    #[test]
    fn refinement_reports_unreachable_predicate() {
        let mut evals = 0;
        let r = nested_refine(10.0, 1000.0, 3.0, |_, _| {
            evals += 1;
            Ok(false)
        })
        .unwrap();
        assert!(r.accepted.is_none());
        // ⌈√990⌉ steps plus the final probe at k_max
        assert_eq!(evals, 33);
    }

    #[test]
    fn refinement_accepts_first_probe_when_always_true() {
        let mut seen = Vec::new();
        let r = nested_refine(10.0, 1000.0, 3.0, |k, _| {
            seen.push(k);
            Ok(true)
        })
        .unwrap();
        assert_eq!(r.accepted, Some(10.0));
        assert!(seen.iter().all(|&k| k == 10.0));
    }

    fn toy() -> (Model, CalibrationSet) {
        let arch = vec![
            LayerSpec::dense("a", 32, 16, Activation::Relu),
            LayerSpec::dense("b", 8, 32, Activation::Identity),
        ];
        let m = synth_model(1, &arch, Init::Gaussian).unwrap();
        let c = CalibrationSet::gaussian(1, 8, &[16]).unwrap();
        (m, c)
    }

    #[test]
    fn vacuous_budget_accepts_k_min() {
        let (m, c) = toy();
        let out = riq_search(&m, &c, 2.0, &SearchParams::default()).unwrap();
        assert_eq!(out.trace.chosen_k, out.bounds.k_min);
        assert_eq!(out.trace.evaluations[0].k, out.bounds.k_min);
        assert!(out.satisfied);
    }

    #[test]
    fn accepted_solution_meets_budget_and_is_minimal_in_trace() {
        let (m, c) = toy();
        let out = riq_search(&m, &c, 1e-3, &SearchParams::default()).unwrap();
        let recheck =
            crate::forward::cosine_deviation(&m, &out.qmodel.to_model().unwrap(), &c).unwrap();
        assert!(recheck.mean_deviation <= 1e-3);
        assert_eq!(recheck.mean_deviation, out.deviation);
        let min_ok = out
            .trace
            .evaluations
            .iter()
            .filter(|e| e.accepted)
            .map(|e| e.k)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(min_ok, out.trace.chosen_k);
        assert_eq!(out.qmodel.config.k, out.trace.chosen_k);
    }

    #[test]
    fn impossible_budget_is_unsatisfiable() {
        let (m, c) = toy();
        match riq_search(&m, &c, 1e-12, &SearchParams::default()) {
            Err(Error::Unsatisfiable(best)) => {
                assert!(!best.satisfied);
                assert_eq!(best.qmodel.config.k, best.bounds.k_max);
                assert!(best.deviation > 1e-12);
                assert!(!best.trace.evaluations.is_empty());
            }
            other => panic!("expected Unsatisfiable, got {other:?}"),
        }
    }

    #[test]
    fn budget_and_threshold_validation() {
        let (m, c) = toy();
        for d in [0.0, -1.0, 2.5] {
            assert!(matches!(
                riq_search(&m, &c, d, &SearchParams::default()),
                Err(Error::BudgetOutOfRange(_))
            ));
        }
        let p = SearchParams {
            stop_threshold: 0.5,
            ..SearchParams::default()
        };
        assert!(matches!(
            riq_search(&m, &c, 0.1, &p),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            rate_targeted_search(&m, &c, 1.0, &SearchParams::default()),
            Err(Error::BudgetOutOfRange(_))
        ));
    }

    #[test]
    fn trace_csv_header() {
        let (m, c) = toy();
        let out = riq_search(&m, &c, 0.05, &SearchParams::default()).unwrap();
        let csv = out.trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("k,step,deviation,est_ratio,accepted"));
        assert_eq!(lines.count(), out.trace.evaluations.len());
    }

    #[test]
    fn rate_target_is_met() {
        let (m, c) = toy();
        let out = rate_targeted_search(&m, &c, 8.0, &SearchParams::default()).unwrap();
        assert!(out.est_ratio >= 8.0);
        assert_eq!(estimated_ratio(&out.qmodel).unwrap(), out.est_ratio);
    }

    #[test]
    fn rate_target_at_k_min_returns_k_min() {
        let (m, c) = toy();
        let b = k_bounds(&m, DEFAULT_EPS0).unwrap();
        let q = quantize_model(&m, &QuantConfig::new(b.k_min, DEFAULT_EPS0)).unwrap();
        let target = estimated_ratio(&q).unwrap();
        let out = rate_targeted_search(&m, &c, target, &SearchParams::default()).unwrap();
        assert_eq!(out.trace.chosen_k, b.k_min);
    }

    #[test]
    fn unreachable_rate_target() {
        let (m, c) = toy();
        assert!(matches!(
            rate_targeted_search(&m, &c, 1e6, &SearchParams::default()),
            Err(Error::Unsatisfiable(_))
        ));
    }
}
