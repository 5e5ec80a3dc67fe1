//! Functional rejection: fit an M-parameter model to contaminated data by
//! generalizing the mean, median and mode into parameter space, then run the
//! staged rejection loop against model residuals.
//!
//! Every combination of M points pins down a candidate parameter vector, so
//! the ensemble of all such solutions (or a weighted random subset once the
//! combination count passes the draw budget) carries the full fit
//! information. The maximum-likelihood fit generalizes the mean; the
//! per-parameter weighted median and half-sample mode of the ensemble
//! generalize the median and mode, with solution weights propagated from the
//! data error bars through each tuple fit's Jacobian. Residuals from the
//! stage's model replace deviations, and the correction factors are adjusted
//! for the degrees of freedom the fit consumes.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calibration::CorrectionTable;
use crate::error::{RcrError, Result};
use crate::linalg;
use crate::models::Model;
use crate::reject::{meets_criterion_sided, select_plan, DistributionAssumption};
use crate::stats::{
    sigma_for, CentralTendency, Sample, SigmaEstimate, SigmaTechnique, SigmaValue,
};

/// Random-draw budget: enumeration switches to weighted sampling without
/// repetition once C(N, M) exceeds this many tuples.
pub const ENSEMBLE_BUDGET: usize = 20_000;

const GN_MAX_ITERATIONS: usize = 50;
const GN_STEP_TOLERANCE: f64 = 1e-10;

/// One measurement: an x-vector, the dependent value, and optional symmetric
/// error bar and weight.
#[derive(Debug, Clone)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub y: f64,
    pub sigma_y: Option<f64>,
    pub weight: Option<f64>,
}

/// A validated collection of points sharing one x-dimensionality.
#[derive(Debug, Clone)]
pub struct DataSet {
    points: Vec<DataPoint>,
    n_dims: usize,
}

impl DataSet {
    pub fn new(points: Vec<DataPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(RcrError::EmptySample);
        }
        let n_dims = points[0].x.len();
        for (index, p) in points.iter().enumerate() {
            if p.x.len() != n_dims {
                return Err(RcrError::LengthMismatch {
                    expected: n_dims,
                    got: p.x.len(),
                });
            }
            if !p.y.is_finite() || p.x.iter().any(|v| !v.is_finite()) {
                return Err(RcrError::NonFiniteValue {
                    index,
                    value: p.y,
                });
            }
            if let Some(s) = p.sigma_y {
                if !(s.is_finite() && s > 0.0) {
                    return Err(RcrError::InvalidErrorBar { index, value: s });
                }
            }
            if let Some(w) = p.weight {
                if !(w.is_finite() && w > 0.0) {
                    return Err(RcrError::InvalidWeight { index, value: w });
                }
            }
        }
        Ok(DataSet { points, n_dims })
    }

    /// Convenience constructor for 1-D unweighted data.
    pub fn from_xy(xs: &[f64], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(RcrError::LengthMismatch {
                expected: xs.len(),
                got: ys.len(),
            });
        }
        DataSet::new(
            xs.iter()
                .zip(ys)
                .map(|(&x, &y)| DataPoint {
                    x: vec![x],
                    y,
                    sigma_y: None,
                    weight: None,
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n_dims(&self) -> usize {
        self.n_dims
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &DataPoint {
        &self.points[i]
    }

    /// Error bar with the unit default for absent bars.
    pub fn sigma_y(&self, i: usize) -> f64 {
        self.points[i].sigma_y.unwrap_or(1.0)
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.points[i].weight.unwrap_or(1.0)
    }

    /// Whether any point carries an explicit error bar.
    pub fn has_error_bars(&self) -> bool {
        self.points.iter().any(|p| p.sigma_y.is_some())
    }
}

/// A candidate parameter vector from one M-tuple of points, with propagated
/// per-parameter uncertainties and inverse-variance weights.
#[derive(Debug, Clone)]
pub struct ParameterSolution {
    pub theta: Vec<f64>,
    pub sigma_theta: Vec<f64>,
    pub weight_theta: Vec<f64>,
    pub source_tuple: Vec<usize>,
}

/// The collection of candidate solutions for one data subset.
#[derive(Debug, Clone)]
pub struct ParameterEnsemble {
    pub solutions: Vec<ParameterSolution>,
    /// True when every C(N, M) tuple was enumerated.
    pub exhaustive: bool,
    /// Tuples dropped for singular Jacobians or non-convergent fits.
    pub degenerate_dropped: usize,
}

/// Which parameter-space generalization of the central tendency to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnsembleStatistic {
    /// Maximum likelihood: the chi-squared minimizer over the full subset.
    Mle,
    /// Per-parameter weighted median of the solution ensemble.
    Median,
    /// Per-parameter weighted half-sample mode of the solution ensemble.
    Mode,
}

impl EnsembleStatistic {
    fn from_central_tendency(kind: CentralTendency) -> Self {
        match kind {
            CentralTendency::Mean => EnsembleStatistic::Mle,
            CentralTendency::Median => EnsembleStatistic::Median,
            CentralTendency::Mode => EnsembleStatistic::Mode,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            EnsembleStatistic::Mle => "mle",
            EnsembleStatistic::Median => "median",
            EnsembleStatistic::Mode => "mode",
        }
    }
}

/// Sum of squared error-normalized residuals. Missing error bars count as
/// unit; at the maximum-likelihood fit this is approximately N - M.
pub fn chi_squared(model: &dyn Model, data: &DataSet, theta: &[f64]) -> f64 {
    data.points()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let r = (p.y - model.evaluate(&p.x, theta)) / data.sigma_y(i);
            r * r
        })
        .sum()
}

/// Weighted Gauss-Newton least squares over the indexed subset: iterate
/// `theta += (J^T W J)^-1 J^T W r` until the step falls below 1e-10
/// relative, then canonicalize. Singular systems fail with
/// `DegenerateTuple`; fits that do not settle within 50 iterations fail with
/// `NonConverged` (callers drop such tuples).
pub fn gauss_newton_fit(
    model: &dyn Model,
    data: &DataSet,
    indices: &[usize],
    theta0: &[f64],
) -> Result<Vec<f64>> {
    let m = model.n_params();
    if indices.len() < m {
        return Err(RcrError::InsufficientPoints {
            needed: m,
            got: indices.len(),
        });
    }
    let mut theta = theta0.to_vec();
    let mut partials = vec![0.0; m];

    for _ in 0..GN_MAX_ITERATIONS {
        let mut normal = vec![vec![0.0; m]; m];
        let mut gradient = vec![0.0; m];
        for &i in indices {
            let p = data.point(i);
            let sigma = data.sigma_y(i);
            let w = data.weight(i) / (sigma * sigma);
            let fit = model.evaluate(&p.x, &theta);
            if !fit.is_finite() {
                return Err(RcrError::NonConverged {
                    max_iterations: GN_MAX_ITERATIONS,
                });
            }
            let r = p.y - fit;
            model.partials(&p.x, &theta, &mut partials);
            if partials.iter().any(|v| !v.is_finite()) {
                return Err(RcrError::NonConverged {
                    max_iterations: GN_MAX_ITERATIONS,
                });
            }
            for a in 0..m {
                gradient[a] += w * partials[a] * r;
                for b in a..m {
                    normal[a][b] += w * partials[a] * partials[b];
                }
            }
        }
        for a in 0..m {
            for b in 0..a {
                normal[a][b] = normal[b][a];
            }
        }

        let step = linalg::solve(normal, gradient)?;
        let mut step_norm = 0.0;
        let mut theta_norm = 0.0;
        for (t, s) in theta.iter_mut().zip(&step) {
            *t += s;
            step_norm += s * s;
            theta_norm += *t * *t;
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(RcrError::NonConverged {
                max_iterations: GN_MAX_ITERATIONS,
            });
        }
        if step_norm.sqrt() < GN_STEP_TOLERANCE * (1.0 + theta_norm.sqrt()) {
            model.canonicalize(&mut theta);
            return Ok(theta);
        }
    }
    Err(RcrError::NonConverged {
        max_iterations: GN_MAX_ITERATIONS,
    })
}

/// Propagate the tuple's error bars through the inverse Jacobian of the
/// exact M-point fit: `sigma_theta_j = sqrt(sum_k (J^-1)_jk^2 sigma_y_k^2)`.
pub fn parameter_uncertainties(
    model: &dyn Model,
    data: &DataSet,
    tuple: &[usize],
    theta: &[f64],
) -> Result<Vec<f64>> {
    let m = model.n_params();
    debug_assert_eq!(tuple.len(), m);
    let mut jacobian = vec![vec![0.0; m]; m];
    for (row, &i) in tuple.iter().enumerate() {
        model.partials(&data.point(i).x, theta, &mut jacobian[row]);
        if jacobian[row].iter().any(|v| !v.is_finite()) {
            return Err(RcrError::DegenerateTuple);
        }
    }
    let inverse = linalg::invert(&jacobian)?;
    let mut sigma_theta = Vec::with_capacity(m);
    for j in 0..m {
        let mut acc = 0.0;
        for (k, &i) in tuple.iter().enumerate() {
            let s = data.sigma_y(i);
            acc += inverse[j][k] * inverse[j][k] * s * s;
        }
        let s = acc.sqrt();
        if !(s.is_finite() && s > 0.0) {
            return Err(RcrError::DegenerateTuple);
        }
        sigma_theta.push(s);
    }
    Ok(sigma_theta)
}

fn fit_tuple(
    model: &dyn Model,
    data: &DataSet,
    tuple: &[usize],
    tuple_weight: f64,
) -> Result<ParameterSolution> {
    let points: Vec<(&[f64], f64)> = tuple
        .iter()
        .map(|&i| {
            let p = data.point(i);
            (p.x.as_slice(), p.y)
        })
        .collect();
    let theta0 = model
        .tuple_guess(&points)
        .unwrap_or_else(|| model.default_guess());
    let theta = gauss_newton_fit(model, data, tuple, &theta0)?;
    // An M-point fit of an M-parameter model must interpolate its own tuple;
    // anything else is a spuriously converged fit and carries no information.
    for &i in tuple {
        let p = data.point(i);
        let residual = (p.y - model.evaluate(&p.x, &theta)).abs();
        if !residual.is_finite() || residual > 1e-8 * p.y.abs().max(1.0) {
            return Err(RcrError::DegenerateTuple);
        }
    }
    let sigma_theta = parameter_uncertainties(model, data, tuple, &theta)?;
    let prior = model.prior(&theta);
    if !(prior.is_finite() && prior > 0.0) {
        return Err(RcrError::DegenerateTuple);
    }
    let weight_theta: Vec<f64> = sigma_theta
        .iter()
        .map(|s| tuple_weight * prior / (s * s))
        .collect();
    if weight_theta.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(RcrError::DegenerateTuple);
    }
    Ok(ParameterSolution {
        theta,
        sigma_theta,
        weight_theta,
        source_tuple: tuple.to_vec(),
    })
}

/// C(n, k), capped: returns None once the count exceeds `cap`.
fn binomial_capped(n: usize, k: usize, cap: usize) -> Option<usize> {
    let k = k.min(n - k);
    let mut count: u128 = 1;
    for i in 0..k {
        count = count * (n - i) as u128 / (i + 1) as u128;
        if count > cap as u128 {
            return None;
        }
    }
    Some(count as usize)
}

fn enumerate_tuples(members: &[usize], m: usize) -> Vec<Vec<usize>> {
    let n = members.len();
    let mut tuples = Vec::new();
    let mut odometer: Vec<usize> = (0..m).collect();
    loop {
        tuples.push(odometer.iter().map(|&i| members[i]).collect());
        // advance
        let mut pos = m;
        while pos > 0 {
            pos -= 1;
            if odometer[pos] < n - m + pos {
                odometer[pos] += 1;
                for later in pos + 1..m {
                    odometer[later] = odometer[later - 1] + 1;
                }
                break;
            }
            if pos == 0 {
                return tuples;
            }
        }
        if m == 0 {
            return tuples;
        }
    }
}

fn sample_tuples(
    members: &[usize],
    m: usize,
    data: &DataSet,
    budget: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Cumulative weights for proportional index draws.
    let mut cumulative = Vec::with_capacity(members.len());
    let mut acc = 0.0;
    for &i in members {
        acc += data.weight(i);
        cumulative.push(acc);
    }
    let total = acc;

    let mut seen: HashSet<Vec<usize>> = HashSet::with_capacity(budget);
    let mut tuples = Vec::with_capacity(budget);
    let max_attempts = budget.saturating_mul(64);
    let mut attempts = 0;
    while tuples.len() < budget && attempts < max_attempts {
        attempts += 1;
        let mut picks: Vec<usize> = Vec::with_capacity(m);
        while picks.len() < m {
            let target = rng.random::<f64>() * total;
            let pos = cumulative.partition_point(|&c| c <= target).min(members.len() - 1);
            let index = members[pos];
            if !picks.contains(&index) {
                picks.push(index);
            }
        }
        picks.sort_unstable();
        if seen.insert(picks.clone()) {
            tuples.push(picks);
        }
    }
    tuples
}

/// Build the solution ensemble for the indexed subset: exhaustive while
/// C(N, M) stays within the budget, otherwise that many distinct tuples
/// drawn with per-point probability proportional to weight. Degenerate
/// tuples are dropped and counted.
pub fn enumerate_solutions(
    model: &dyn Model,
    data: &DataSet,
    members: &[usize],
    budget: usize,
    seed: u64,
) -> Result<ParameterEnsemble> {
    let m = model.n_params();
    let n = members.len();
    if n < m {
        return Err(RcrError::InsufficientPoints { needed: m, got: n });
    }

    let exact_count = binomial_capped(n, m, budget);
    let exhaustive = exact_count.is_some();
    let tuples = if exhaustive {
        enumerate_tuples(members, m)
    } else {
        sample_tuples(members, m, data, budget, seed)
    };

    // In exhaustive mode the tuple's data weights scale the solution weight;
    // in sampling mode the weight already acted through tuple selection.
    let outcomes: Vec<Result<ParameterSolution>> = tuples
        .par_iter()
        .map(|tuple| {
            let tuple_weight = if exhaustive {
                tuple.iter().map(|&i| data.weight(i)).product()
            } else {
                1.0
            };
            fit_tuple(model, data, tuple, tuple_weight)
        })
        .collect();

    let mut solutions = Vec::with_capacity(outcomes.len());
    let mut degenerate_dropped = 0;
    for outcome in outcomes {
        match outcome {
            Ok(solution) => solutions.push(solution),
            Err(RcrError::DegenerateTuple) | Err(RcrError::NonConverged { .. }) => {
                degenerate_dropped += 1;
            }
            Err(other) => return Err(other),
        }
    }
    if solutions.is_empty() {
        return Err(RcrError::NoValidTuples);
    }
    Ok(ParameterEnsemble {
        solutions,
        exhaustive,
        degenerate_dropped,
    })
}

fn ensemble_vector_statistic(
    ensemble: &ParameterEnsemble,
    statistic: EnsembleStatistic,
    model: &dyn Model,
    error_bars: bool,
) -> Result<Vec<f64>> {
    if ensemble.solutions.is_empty() {
        return Err(RcrError::NoValidTuples);
    }
    let m = model.n_params();
    let stat_1d = |pairs: Vec<(f64, f64)>| -> Result<f64> {
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(RcrError::ZeroTotalWeight);
        }
        Ok(match statistic {
            EnsembleStatistic::Median => crate::stats::weighted_median(pairs),
            EnsembleStatistic::Mode => crate::stats::weighted_half_sample_mode(pairs),
            EnsembleStatistic::Mle => unreachable!("MLE is a full-data fit"),
        })
    };

    let parameter_stat = |j: usize| -> Result<f64> {
        // Scale parameters move to log space, provided every solution is
        // strictly positive. Without explicit error bars the propagated
        // sigma_theta is pure leverage — in contaminated data it correlates
        // with the contamination itself — so the inverse-variance factor is
        // applied only when the data carry real error bars (in statistic
        // space, via the delta method); tuple weight and prior always apply.
        let log_space = model.log_scale_params().contains(&j)
            && ensemble.solutions.iter().all(|s| s.theta[j] > 0.0);
        let pairs: Vec<(f64, f64)> = ensemble
            .solutions
            .iter()
            .map(|s| {
                let v = s.theta[j];
                let sigma = s.sigma_theta[j];
                // weight_theta = tuple_weight * prior / sigma^2
                let base = s.weight_theta[j] * sigma * sigma;
                match (log_space, error_bars) {
                    (false, false) => (v, base),
                    (false, true) => (v, s.weight_theta[j]),
                    (true, false) => (v.ln(), base),
                    (true, true) => (v.ln(), base * v * v / (sigma * sigma)),
                }
            })
            .collect();
        let value = stat_1d(pairs)?;
        Ok(if log_space { value.exp() } else { value })
    };

    // Per-parameter statistics, swept until the vector stops moving.
    // With fixed weights one sweep is already a fixed point; the loop guards
    // future statistics that couple parameters.
    let mut theta = vec![0.0; m];
    for (j, slot) in theta.iter_mut().enumerate() {
        *slot = parameter_stat(j)?;
    }
    for _sweep in 0..9 {
        let mut next = vec![0.0; m];
        for (j, slot) in next.iter_mut().enumerate() {
            *slot = parameter_stat(j)?;
        }
        let stable = theta
            .iter()
            .zip(&next)
            .all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        theta = next;
        if stable {
            break;
        }
    }
    Ok(theta)
}

/// Full-data fit with a ladder of starting points: heavy contamination can
/// push a single seed into a region where the normal equations degenerate.
fn fit_with_fallbacks(
    model: &dyn Model,
    data: &DataSet,
    members: &[usize],
    guesses: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let mut last = RcrError::NoValidTuples;
    for theta0 in guesses {
        match gauss_newton_fit(model, data, members, theta0) {
            Ok(theta) => return Ok(theta),
            Err(err) => last = err,
        }
    }
    Err(last)
}

fn ensemble_statistic_over(
    ensemble: &ParameterEnsemble,
    statistic: EnsembleStatistic,
    model: &dyn Model,
    data: &DataSet,
    members: &[usize],
) -> Result<Vec<f64>> {
    let error_bars = data.has_error_bars();
    match statistic {
        EnsembleStatistic::Mle => {
            let mut guesses = Vec::new();
            if !ensemble.solutions.is_empty() {
                guesses.push(ensemble_vector_statistic(
                    ensemble,
                    EnsembleStatistic::Median,
                    model,
                    error_bars,
                )?);
            }
            guesses.push(model.default_guess());
            fit_with_fallbacks(model, data, members, &guesses)
        }
        EnsembleStatistic::Median | EnsembleStatistic::Mode => {
            let mut theta = ensemble_vector_statistic(ensemble, statistic, model, error_bars)?;
            model.canonicalize(&mut theta);
            Ok(theta)
        }
    }
}

/// Parameter-space central tendency of an ensemble over the full data set:
/// the maximum-likelihood fit (seeded at the ensemble median), or the
/// per-parameter weighted median/mode of the solutions.
pub fn ensemble_central_tendency(
    ensemble: &ParameterEnsemble,
    statistic: EnsembleStatistic,
    model: &dyn Model,
    data: &DataSet,
) -> Result<Vec<f64>> {
    let members: Vec<usize> = (0..data.len()).collect();
    ensemble_statistic_over(ensemble, statistic, model, data, &members)
}

/// Default pivot: the weighted mean of the x values, per dimension.
pub fn compute_pivot(data: &DataSet) -> Vec<f64> {
    let dims = data.n_dims();
    let mut acc = vec![0.0; dims];
    let mut total = 0.0;
    for (i, p) in data.points().iter().enumerate() {
        let w = data.weight(i);
        total += w;
        for (a, &x) in acc.iter_mut().zip(&p.x) {
            *a += w * x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= total);
    acc
}

/// One iteration record of a functional run.
#[derive(Debug, Clone)]
pub struct FitStageRecord {
    pub stage: String,
    pub n: usize,
    pub theta: Vec<f64>,
    pub sigma: SigmaValue,
    pub rejected: Vec<usize>,
}

/// Outcome of a functional run.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Maximum-likelihood parameters over the finally kept points.
    pub theta_best: Vec<f64>,
    pub kept: Vec<usize>,
    pub rejected: Vec<usize>,
    pub stage_log: Vec<FitStageRecord>,
    /// Corrected residual scale from the last stage.
    pub final_sigma: SigmaEstimate,
    /// The pre-rejection ensemble over the full data set.
    pub initial_ensemble: ParameterEnsemble,
}

/// Configurable functional runner; see [`functional_rcr`].
#[derive(Debug, Clone)]
pub struct FunctionalRcr<'a> {
    assumption: DistributionAssumption,
    table: &'a CorrectionTable,
    budget: usize,
    seed: u64,
    bulk_enabled: bool,
}

impl<'a> FunctionalRcr<'a> {
    pub fn new(assumption: DistributionAssumption, table: &'a CorrectionTable) -> Self {
        FunctionalRcr {
            assumption,
            table,
            budget: ENSEMBLE_BUDGET,
            seed: 0,
            bulk_enabled: true,
        }
    }

    /// Seed for weighted tuple sampling past the enumeration budget.
    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn budget(mut self, budget: usize) -> Self {
        self.budget = budget;
        self
    }

    pub fn bulk(mut self, enabled: bool) -> Self {
        self.bulk_enabled = enabled;
        self
    }

    pub fn run(&self, model: &dyn Model, data: &DataSet) -> Result<FitResult> {
        let m = model.n_params();
        if data.len() <= m {
            return Err(RcrError::TooFewPointsForModel {
                min: m + 1,
                m,
                stage_log: Vec::new(),
            });
        }

        let plan = select_plan(self.assumption);
        let mut kept: Vec<usize> = (0..data.len()).collect();
        let mut rejected: Vec<usize> = Vec::new();
        let mut log: Vec<FitStageRecord> = Vec::new();

        let initial_ensemble =
            enumerate_solutions(model, data, &kept, self.budget, self.seed)?;
        let mut reusable_ensemble = Some(initial_ensemble.clone());
        let mut last_theta: Option<Vec<f64>> = None;
        let mut last_sigma: Option<SigmaEstimate> = None;

        if self.bulk_enabled {
            let statistic = EnsembleStatistic::from_central_tendency(plan.bulk_mu);
            let mut label = String::new();
            let _ = write!(
                label,
                "bulk({}, {}-sided)",
                statistic.label(),
                plan.bulk_sidedness.label()
            );
            loop {
                if kept.len() <= m {
                    return Err(RcrError::TooFewPointsForModel {
                        min: m + 1,
                        m,
                        stage_log: log.clone(),
                    });
                }
                let ensemble = match reusable_ensemble.take() {
                    Some(e) => e,
                    None => enumerate_solutions(model, data, &kept, self.budget, self.seed)?,
                };
                let theta =
                    ensemble_statistic_over(&ensemble, statistic, model, data, &kept)?;
                let residual = residual_sample(model, data, &kept, &theta)?;
                let n = kept.len();

                let mut components = Vec::with_capacity(2);
                for technique in [SigmaTechnique::Percentile, SigmaTechnique::LineFit] {
                    let raw = sigma_for(&residual, 0.0, technique, plan.bulk_sidedness)?;
                    let factor = self.table.dof_factor(
                        technique,
                        plan.bulk_mu,
                        plan.bulk_sidedness,
                        n,
                        m,
                    )?;
                    components.push(raw.corrected_by(factor).value);
                }
                let sigma = sigma_value_max(components[0], components[1]);

                let mut survivors = Vec::with_capacity(n);
                let mut culled = Vec::new();
                for (pos, &i) in kept.iter().enumerate() {
                    let delta = residual.values()[pos];
                    let z = residual_z(delta, &sigma, plan.symmetric_core);
                    if meets_criterion_sided(n, z, plan.bulk_sidedness) {
                        culled.push(i);
                    } else {
                        survivors.push(i);
                    }
                }
                log.push(FitStageRecord {
                    stage: label.clone(),
                    n,
                    theta: theta.clone(),
                    sigma,
                    rejected: culled.clone(),
                });
                last_theta = Some(theta);
                if culled.is_empty() {
                    break;
                }
                rejected.extend_from_slice(&culled);
                kept = survivors;
            }
        }

        for stage in &plan.stages {
            let statistic = EnsembleStatistic::from_central_tendency(stage.mu);
            let label = format!(
                "{}+{}({}-sided)",
                statistic.label(),
                stage.technique.label(),
                stage.sidedness.label()
            );
            loop {
                if kept.len() <= m {
                    return Err(RcrError::TooFewPointsForModel {
                        min: m + 1,
                        m,
                        stage_log: log.clone(),
                    });
                }
                let theta = match statistic {
                    EnsembleStatistic::Mle => {
                        // The chi-squared minimum moves only with the kept
                        // set; seed from the previous stage's parameters.
                        let mut guesses = Vec::new();
                        if let Some(t) = &last_theta {
                            guesses.push(t.clone());
                        }
                        guesses.push(model.default_guess());
                        fit_with_fallbacks(model, data, &kept, &guesses)?
                    }
                    _ => {
                        let ensemble =
                            enumerate_solutions(model, data, &kept, self.budget, self.seed)?;
                        ensemble_statistic_over(&ensemble, statistic, model, data, &kept)?
                    }
                };
                let residual = residual_sample(model, data, &kept, &theta)?;
                let n = kept.len();
                let raw = sigma_for(&residual, 0.0, stage.technique, stage.sidedness)?;
                let factor = self
                    .table
                    .dof_factor(stage.technique, stage.mu, stage.sidedness, n, m)?;
                let sigma = raw.corrected_by(factor);

                let mut worst: Option<(f64, f64, usize)> = None;
                for (pos, _) in kept.iter().enumerate() {
                    let delta = residual.values()[pos];
                    let z = residual_z(delta, &sigma.value, plan.symmetric_core);
                    let better = match worst {
                        None => true,
                        Some((bz, bd, _)) => z > bz || (z == bz && delta < bd),
                    };
                    if better {
                        worst = Some((z, delta, pos));
                    }
                }
                let (z, _, pos) = worst.expect("kept set is nonempty");

                last_theta = Some(theta.clone());
                last_sigma = Some(sigma);
                if z.is_finite() && meets_criterion_sided(n, z, stage.sidedness) {
                    let index = kept.remove(pos);
                    rejected.push(index);
                    log.push(FitStageRecord {
                        stage: label.clone(),
                        n,
                        theta,
                        sigma: sigma.value,
                        rejected: vec![index],
                    });
                } else {
                    log.push(FitStageRecord {
                        stage: label.clone(),
                        n,
                        theta,
                        sigma: sigma.value,
                        rejected: Vec::new(),
                    });
                    break;
                }
            }
        }

        let mut guesses = Vec::new();
        if let Some(t) = last_theta {
            guesses.push(t);
        }
        guesses.push(model.default_guess());
        let theta_best = fit_with_fallbacks(model, data, &kept, &guesses)?;
        let final_sigma = last_sigma.expect("at least one stage ran");

        kept.sort_unstable();
        rejected.sort_unstable();
        Ok(FitResult {
            theta_best,
            kept,
            rejected,
            stage_log: log,
            final_sigma,
            initial_ensemble,
        })
    }
}

/// Functional rejection with the default budget and seed. The model's pivot,
/// when it has one, should be fixed (see [`compute_pivot`]) before calling.
pub fn functional_rcr(
    model: &dyn Model,
    data: &DataSet,
    assumption: DistributionAssumption,
    table: &CorrectionTable,
) -> Result<FitResult> {
    FunctionalRcr::new(assumption, table).run(model, data)
}

fn residual_sample(
    model: &dyn Model,
    data: &DataSet,
    kept: &[usize],
    theta: &[f64],
) -> Result<Sample> {
    let mut residuals = Vec::with_capacity(kept.len());
    let mut weights = Vec::with_capacity(kept.len());
    let mut weighted = false;
    for &i in kept {
        let p = data.point(i);
        residuals.push(p.y - model.evaluate(&p.x, theta));
        let w = data.weight(i);
        weighted |= w != 1.0;
        weights.push(w);
    }
    Sample::new(residuals, weighted.then_some(weights), None)
}

fn residual_z(delta: f64, sigma: &SigmaValue, symmetric_core: bool) -> f64 {
    let s = match *sigma {
        SigmaValue::TwoSided(s) => s,
        SigmaValue::OneSided { below, above } => {
            if symmetric_core {
                below.min(above)
            } else if delta < 0.0 {
                below
            } else {
                above
            }
        }
    };
    if delta == 0.0 || s == 0.0 {
        return 0.0;
    }
    delta.abs() / s
}

fn sigma_value_max(a: SigmaValue, b: SigmaValue) -> SigmaValue {
    match (a, b) {
        (SigmaValue::TwoSided(x), SigmaValue::TwoSided(y)) => SigmaValue::TwoSided(x.max(y)),
        (
            SigmaValue::OneSided { below: b1, above: a1 },
            SigmaValue::OneSided { below: b2, above: a2 },
        ) => SigmaValue::OneSided {
            below: b1.max(b2),
            above: a1.max(a2),
        },
        _ => unreachable!("bulk components share sidedness"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ExponentialModel, LinearModel};

    #[test]
    fn chi_squared_exact_interpolant_is_zero() {
        let data = DataSet::from_xy(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]).unwrap();
        let chi2 = chi_squared(&LinearModel, &data, &[1.0, 2.0]);
        assert_eq!(chi2, 0.0);
    }

    #[test]
    fn chi_squared_single_term() {
        let data = DataSet::new(vec![DataPoint {
            x: vec![0.0],
            y: 2.0,
            sigma_y: Some(1.0),
            weight: None,
        }])
        .unwrap();
        // Residual of two error bars: chi2 = 4.
        let chi2 = chi_squared(&LinearModel, &data, &[0.0, 0.0]);
        assert_eq!(chi2, 4.0);
    }

    #[test]
    fn gauss_newton_interpolates_two_points() {
        let data = DataSet::from_xy(&[0.0, 2.0], &[1.0, 5.0]).unwrap();
        let theta = gauss_newton_fit(&LinearModel, &data, &[0, 1], &[0.0, 0.0]).unwrap();
        assert!((theta[0] - 1.0).abs() < 1e-10);
        assert!((theta[1] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn gauss_newton_matches_closed_form_least_squares() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|&x| 2.0 - 0.7 * x + 0.3 * (rng.random::<f64>() - 0.5))
            .collect();
        let data = DataSet::from_xy(&xs, &ys).unwrap();
        let all: Vec<usize> = (0..xs.len()).collect();
        let theta = gauss_newton_fit(&LinearModel, &data, &all, &[0.0, 0.0]).unwrap();

        // Closed-form simple linear regression oracle.
        let n = xs.len() as f64;
        let sx: f64 = xs.iter().sum();
        let sy: f64 = ys.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        assert!((theta[0] - intercept).abs() < 1e-8, "{theta:?}");
        assert!((theta[1] - slope).abs() < 1e-8, "{theta:?}");
    }

    #[test]
    fn gauss_newton_recovers_exponential_parameters() {
        let mut model = ExponentialModel::default();
        model.set_pivot(&[0.5]);
        let xs: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 10.0 * (-(x - 0.5)).exp()).collect();
        let data = DataSet::from_xy(&xs, &ys).unwrap();
        let all: Vec<usize> = (0..xs.len()).collect();
        let theta = gauss_newton_fit(&model, &data, &all, &[1.0, 0.0]).unwrap();
        assert!((theta[0] - 10.0).abs() < 1e-6, "{theta:?}");
        assert!((theta[1] + 1.0).abs() < 1e-6, "{theta:?}");
    }

    #[test]
    fn degenerate_tuple_is_reported() {
        // Two points with the same x cannot pin down a line.
        let data = DataSet::from_xy(&[1.0, 1.0], &[0.0, 2.0]).unwrap();
        let err = gauss_newton_fit(&LinearModel, &data, &[0, 1], &[0.0, 0.0]).unwrap_err();
        assert!(matches!(err, RcrError::DegenerateTuple));
    }

    #[test]
    fn uncertainty_propagation_identity_model() {
        // Location model via a linear fit pinned at x = 0: dy/da = 1.
        let data = DataSet::new(vec![DataPoint {
            x: vec![0.0],
            y: 3.0,
            sigma_y: Some(0.5),
            weight: None,
        }])
        .unwrap();

        struct Location;
        impl Model for Location {
            fn n_dims(&self) -> usize {
                1
            }
            fn n_params(&self) -> usize {
                1
            }
            fn evaluate(&self, _x: &[f64], theta: &[f64]) -> f64 {
                theta[0]
            }
            fn partials(&self, _x: &[f64], _theta: &[f64], out: &mut [f64]) {
                out[0] = 1.0;
            }
            fn default_guess(&self) -> Vec<f64> {
                vec![0.0]
            }
            fn name(&self) -> &'static str {
                "location"
            }
        }

        let sigma = parameter_uncertainties(&Location, &data, &[0], &[3.0]).unwrap();
        assert!((sigma[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn uncertainty_scales_linearly_with_error_bars() {
        let make = |s: f64| {
            DataSet::new(vec![
                DataPoint {
                    x: vec![0.0],
                    y: 1.0,
                    sigma_y: Some(s),
                    weight: None,
                },
                DataPoint {
                    x: vec![1.0],
                    y: 2.0,
                    sigma_y: Some(s),
                    weight: None,
                },
            ])
            .unwrap()
        };
        let theta = [1.0, 1.0];
        let s1 = parameter_uncertainties(&LinearModel, &make(1.0), &[0, 1], &theta).unwrap();
        let s2 = parameter_uncertainties(&LinearModel, &make(2.0), &[0, 1], &theta).unwrap();
        for (a, b) in s1.iter().zip(&s2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        // Analytic propagation through the 2x2 inverse: intercept picks up
        // sigma from the x=0 point alone, slope from both in quadrature.
        assert!((s1[0] - 1.0).abs() < 1e-12);
        assert!((s1[1] - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn enumeration_counts_and_cutoff() {
        assert_eq!(binomial_capped(101, 2, 20_000), Some(5050));
        assert_eq!(binomial_capped(300, 2, 20_000), None); // 44850
        assert_eq!(binomial_capped(10, 3, 20_000), Some(120));

        let members: Vec<usize> = (0..6).collect();
        let tuples = enumerate_tuples(&members, 2);
        assert_eq!(tuples.len(), 15);
        let unique: HashSet<Vec<usize>> = tuples.into_iter().collect();
        assert_eq!(unique.len(), 15);
    }

    #[test]
    fn exhaustive_ensemble_on_collinear_data() {
        let xs: Vec<f64> = (0..12).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 1.0 + 0.5 * x).collect();
        let data = DataSet::from_xy(&xs, &ys).unwrap();
        let members: Vec<usize> = (0..12).collect();
        let ensemble = enumerate_solutions(&LinearModel, &data, &members, 20_000, 0).unwrap();
        assert!(ensemble.exhaustive);
        assert_eq!(ensemble.solutions.len(), 66);
        assert_eq!(ensemble.degenerate_dropped, 0);
        for s in &ensemble.solutions {
            assert!((s.theta[0] - 1.0).abs() < 1e-8);
            assert!((s.theta[1] - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn sampled_ensemble_draws_distinct_tuples() {
        let xs: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 2.0 * x).collect();
        let data = DataSet::from_xy(&xs, &ys).unwrap();
        let members: Vec<usize> = (0..300).collect();
        let ensemble = enumerate_solutions(&LinearModel, &data, &members, 1000, 9).unwrap();
        assert!(!ensemble.exhaustive);
        let unique: HashSet<Vec<usize>> = ensemble
            .solutions
            .iter()
            .map(|s| s.source_tuple.clone())
            .collect();
        assert_eq!(unique.len(), ensemble.solutions.len());
        assert_eq!(ensemble.solutions.len() + ensemble.degenerate_dropped, 1000);

        // Sampling is deterministic for a given seed and thread-count
        // independent: tuples are drawn sequentially, fits in parallel.
        let replay = enumerate_solutions(&LinearModel, &data, &members, 1000, 9).unwrap();
        let tuples: Vec<_> = ensemble.solutions.iter().map(|s| &s.source_tuple).collect();
        let replayed: Vec<_> = replay.solutions.iter().map(|s| &s.source_tuple).collect();
        assert_eq!(tuples, replayed);
    }

    #[test]
    fn ensemble_statistics_on_identical_solutions() {
        let solution = ParameterSolution {
            theta: vec![2.0, -1.0],
            sigma_theta: vec![0.1, 0.2],
            weight_theta: vec![100.0, 25.0],
            source_tuple: vec![0, 1],
        };
        let ensemble = ParameterEnsemble {
            solutions: vec![solution; 7],
            exhaustive: true,
            degenerate_dropped: 0,
        };
        for statistic in [EnsembleStatistic::Median, EnsembleStatistic::Mode] {
            let theta = ensemble_vector_statistic(&ensemble, statistic, &LinearModel, true).unwrap();
            assert_eq!(theta, vec![2.0, -1.0]);
        }
    }

    #[test]
    fn ensemble_statistics_ignore_uniform_weight_scaling() {
        let mut solutions = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for i in 0..40 {
            let theta = vec![i as f64 * 0.1, 1.0 - i as f64 * 0.05];
            let w = 1.0 + rng.random::<f64>();
            solutions.push(ParameterSolution {
                theta,
                sigma_theta: vec![1.0, 1.0],
                weight_theta: vec![w, w * 0.5],
                source_tuple: vec![i, i + 1],
            });
        }
        let base = ParameterEnsemble {
            solutions: solutions.clone(),
            exhaustive: true,
            degenerate_dropped: 0,
        };
        let scaled = ParameterEnsemble {
            solutions: solutions
                .into_iter()
                .map(|mut s| {
                    s.weight_theta.iter_mut().for_each(|w| *w *= 37.5);
                    s
                })
                .collect(),
            exhaustive: true,
            degenerate_dropped: 0,
        };
        for statistic in [EnsembleStatistic::Median, EnsembleStatistic::Mode] {
            let a = ensemble_vector_statistic(&base, statistic, &LinearModel, true).unwrap();
            let b = ensemble_vector_statistic(&scaled, statistic, &LinearModel, true).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pivot_is_weighted_mean() {
        let data = DataSet::from_xy(&[0.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(compute_pivot(&data), vec![0.5]);

        let data = DataSet::new(vec![
            DataPoint {
                x: vec![2.0],
                y: 0.0,
                sigma_y: None,
                weight: Some(3.0),
            },
            DataPoint {
                x: vec![5.0],
                y: 0.0,
                sigma_y: None,
                weight: Some(1.0),
            },
        ])
        .unwrap();
        assert_eq!(compute_pivot(&data), vec![2.75]);

        let data = DataSet::from_xy(&[4.0, 4.0, 4.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(compute_pivot(&data), vec![4.0]);
    }

    #[test]
    fn functional_rcr_clean_data_rejects_nothing() {
        let mut model = ExponentialModel::default();
        model.set_pivot(&[0.5]);
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| 10.0 * (-(x - 0.5)).exp()).collect();
        let data = DataSet::from_xy(&xs, &ys).unwrap();
        let table = CorrectionTable::identity();
        let result = functional_rcr(
            &model,
            &data,
            DistributionAssumption::default(),
            &table,
        )
        .unwrap();
        assert!(result.rejected.is_empty(), "{:?}", result.rejected);
        assert!((result.theta_best[0] - 10.0).abs() < 1e-6);
        assert!((result.theta_best[1] + 1.0).abs() < 1e-6);
    }
}
