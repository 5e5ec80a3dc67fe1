//! Robust measures of central tendency and of sample deviation, weighted and
//! unweighted. These are the building blocks every rejection stage consumes:
//! mean/median/half-sample mode on one axis, and on the other the standard
//! deviation plus three flavors of the 68.3-percentile deviation (direct
//! percentile, a line fit through the origin of the sorted-deviation curve,
//! and a two-segment broken-line fit whose first slope is the estimate).

use std::cell::RefCell;
use std::collections::HashMap;

use crate::error::{RcrError, Result};
use crate::special::erf_inv;

/// Bin-center offset for the percentile of the i-th sorted deviation:
/// the i-th element sits at cumulative probability `(i - 1 + 0.683) / n`.
pub const PERCENTILE_BIN_OFFSET: f64 = 0.683;

/// The percentile that defines the 68.3-percentile deviation.
pub const SIGMA_PERCENTILE: f64 = 0.683;

/// A one-dimensional sample with optional per-point weights and error bars.
#[derive(Debug, Clone)]
pub struct Sample {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
    error_bars: Option<Vec<f64>>,
}

impl Sample {
    /// Validate and build a sample. Weights must be positive and finite;
    /// error bars, when given, must be positive and finite.
    pub fn new(
        values: Vec<f64>,
        weights: Option<Vec<f64>>,
        error_bars: Option<Vec<f64>>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(RcrError::EmptySample);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(RcrError::NonFiniteValue { index, value });
            }
        }
        if let Some(w) = &weights {
            if w.len() != values.len() {
                return Err(RcrError::LengthMismatch {
                    expected: values.len(),
                    got: w.len(),
                });
            }
            for (index, &value) in w.iter().enumerate() {
                if !(value.is_finite() && value > 0.0) {
                    return Err(RcrError::InvalidWeight { index, value });
                }
            }
        }
        if let Some(e) = &error_bars {
            if e.len() != values.len() {
                return Err(RcrError::LengthMismatch {
                    expected: values.len(),
                    got: e.len(),
                });
            }
            for (index, &value) in e.iter().enumerate() {
                if !(value.is_finite() && value > 0.0) {
                    return Err(RcrError::InvalidErrorBar { index, value });
                }
            }
        }
        Ok(Self {
            values,
            weights,
            error_bars,
        })
    }

    pub fn unweighted(values: Vec<f64>) -> Result<Self> {
        Self::new(values, None, None)
    }

    pub fn weighted(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::new(values, Some(weights), None)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn error_bars(&self) -> Option<&[f64]> {
        self.error_bars.as_deref()
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn total_weight(&self) -> f64 {
        match &self.weights {
            Some(w) => w.iter().sum(),
            None => self.values.len() as f64,
        }
    }

    /// A new sample restricted to the given indices (order preserved).
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let values = indices.iter().map(|&i| self.values[i]).collect();
        let weights = self
            .weights
            .as_ref()
            .map(|w| indices.iter().map(|&i| w[i]).collect());
        let error_bars = self
            .error_bars
            .as_ref()
            .map(|e| indices.iter().map(|&i| e[i]).collect());
        Self::new(values, weights, error_bars)
    }
}

/// The three measures of central tendency, in decreasing precision and
/// increasing robustness: mean, median, half-sample mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CentralTendency {
    Mean,
    Median,
    Mode,
}

impl CentralTendency {
    pub fn label(self) -> &'static str {
        match self {
            CentralTendency::Mean => "mean",
            CentralTendency::Median => "median",
            CentralTendency::Mode => "mode",
        }
    }
}

/// Deviation estimators. `Percentile`, `LineFit` and `BrokenLine` are the
/// three definitions of the 68.3-percentile deviation; `StdDev` pairs with
/// the mean for the traditional final stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SigmaTechnique {
    StdDev,
    Percentile,
    LineFit,
    BrokenLine,
}

impl SigmaTechnique {
    pub fn label(self) -> &'static str {
        match self {
            SigmaTechnique::StdDev => "stddev",
            SigmaTechnique::Percentile => "percentile",
            SigmaTechnique::LineFit => "linefit",
            SigmaTechnique::BrokenLine => "brokenline",
        }
    }
}

/// Whether deviations are pooled across both sides of the center or measured
/// separately below and above it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sidedness {
    TwoSided,
    OneSided,
}

impl Sidedness {
    pub fn label(self) -> &'static str {
        match self {
            Sidedness::TwoSided => "two",
            Sidedness::OneSided => "one",
        }
    }
}

/// A scale estimate: symmetric, or split into below/above components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaValue {
    TwoSided(f64),
    OneSided { below: f64, above: f64 },
}

impl SigmaValue {
    /// The sigma that applies to a point at signed offset `delta` from mu.
    pub fn for_offset(&self, delta: f64) -> f64 {
        match *self {
            SigmaValue::TwoSided(s) => s,
            SigmaValue::OneSided { below, above } => {
                if delta < 0.0 {
                    below
                } else {
                    above
                }
            }
        }
    }

    pub fn max_component(&self) -> f64 {
        match *self {
            SigmaValue::TwoSided(s) => s,
            SigmaValue::OneSided { below, above } => below.max(above),
        }
    }

    pub fn scaled(&self, factor: f64) -> SigmaValue {
        match *self {
            SigmaValue::TwoSided(s) => SigmaValue::TwoSided(s * factor),
            SigmaValue::OneSided { below, above } => SigmaValue::OneSided {
                below: below * factor,
                above: above * factor,
            },
        }
    }
}

/// A sigma estimate tagged with the technique that produced it and whether
/// the sample-size correction factor has been applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaEstimate {
    pub technique: SigmaTechnique,
    pub value: SigmaValue,
    pub corrected: bool,
}

impl SigmaEstimate {
    pub fn corrected_by(self, factor: f64) -> SigmaEstimate {
        SigmaEstimate {
            value: self.value.scaled(factor),
            corrected: true,
            ..self
        }
    }
}

/// Sorted absolute deviations from a center, paired with the percentile of
/// each element and the matching standard-normal abscissa
/// `sqrt(2) erf^-1(percentile)`. Weighted samples generalize the percentile
/// through cumulative weight.
#[derive(Debug, Clone)]
pub struct DeviationSet {
    deviations: Vec<f64>,
    weights: Vec<f64>,
    percentiles: Vec<f64>,
    abscissae: Vec<f64>,
    source_mu: f64,
}

impl DeviationSet {
    pub fn len(&self) -> usize {
        self.deviations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deviations.is_empty()
    }

    pub fn deviations(&self) -> &[f64] {
        &self.deviations
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn percentiles(&self) -> &[f64] {
        &self.percentiles
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.abscissae
    }

    pub fn source_mu(&self) -> f64 {
        self.source_mu
    }

    /// Build from already-computed (deviation, weight) pairs.
    pub fn from_deviations(mut pairs: Vec<(f64, f64)>, source_mu: f64) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let n = pairs.len();

        let mut deviations = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let mut percentiles = Vec::with_capacity(n);
        let mut cum = 0.0;
        for &(dev, w) in &pairs {
            percentiles.push((cum + PERCENTILE_BIN_OFFSET * w) / total);
            cum += w;
            deviations.push(dev);
            weights.push(w);
        }

        let uniform = pairs.iter().all(|p| p.1 == 1.0);
        let abscissae = if uniform {
            cached_uniform_abscissae(n)
        } else {
            percentiles
                .iter()
                .map(|&p| std::f64::consts::SQRT_2 * erf_inv(p))
                .collect()
        };

        DeviationSet {
            deviations,
            weights,
            percentiles,
            abscissae,
            source_mu,
        }
    }
}

// Unweighted abscissae depend only on n; cache them for the Monte Carlo
// loops that rebuild deviation sets of the same size millions of times.
thread_local! {
    static ABSCISSA_CACHE: RefCell<HashMap<usize, Vec<f64>>> = RefCell::new(HashMap::new());
}
const ABSCISSA_CACHE_CAP: usize = 64;

fn cached_uniform_abscissae(n: usize) -> Vec<f64> {
    ABSCISSA_CACHE.with(|cache| {
        let mut cache = cache.borrow_mut();
        if let Some(hit) = cache.get(&n) {
            return hit.clone();
        }
        let computed: Vec<f64> = (1..=n)
            .map(|i| {
                let p = (i as f64 - 1.0 + PERCENTILE_BIN_OFFSET) / n as f64;
                std::f64::consts::SQRT_2 * erf_inv(p)
            })
            .collect();
        if cache.len() < ABSCISSA_CACHE_CAP {
            cache.insert(n, computed.clone());
        }
        computed
    })
}

/// Deviations `|y_i - mu|` of a sample about `mu`, sorted, with percentiles
/// and abscissae attached.
pub fn build_deviation_set(sample: &Sample, mu: f64) -> DeviationSet {
    assert!(mu.is_finite(), "mu must be finite");
    let pairs = sample
        .values()
        .iter()
        .enumerate()
        .map(|(i, &y)| ((y - mu).abs(), sample.weight(i)))
        .collect();
    DeviationSet::from_deviations(pairs, mu)
}

/// Weight-normalized mean, cumulative-weight median, or iterated half-sample
/// mode of the sample.
pub fn central_tendency(sample: &Sample, kind: CentralTendency) -> f64 {
    match kind {
        CentralTendency::Mean => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (i, &y) in sample.values().iter().enumerate() {
                let w = sample.weight(i);
                num += w * y;
                den += w;
            }
            num / den
        }
        CentralTendency::Median => {
            let mut pairs = value_weight_pairs(sample);
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            weighted_median_sorted(&pairs)
        }
        CentralTendency::Mode => {
            let mut pairs = value_weight_pairs(sample);
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            half_sample_mode_sorted(&pairs)
        }
    }
}

fn value_weight_pairs(sample: &Sample) -> Vec<(f64, f64)> {
    sample
        .values()
        .iter()
        .enumerate()
        .map(|(i, &y)| (y, sample.weight(i)))
        .collect()
}

/// Weighted median of (value, weight) pairs; see [`central_tendency`].
pub fn weighted_median(mut pairs: Vec<(f64, f64)>) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    weighted_median_sorted(&pairs)
}

/// Weighted half-sample mode of (value, weight) pairs; see
/// [`central_tendency`].
pub fn weighted_half_sample_mode(mut pairs: Vec<(f64, f64)>) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    half_sample_mode_sorted(&pairs)
}

/// Weighted median by the cumulative-weight crossing rule: take the first
/// value whose cumulative weight reaches half the total; when it lands on
/// half exactly, average with the next value.
fn weighted_median_sorted(pairs: &[(f64, f64)]) -> f64 {
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let half = total / 2.0;
    let tol = 1e-9 * total;
    let mut cum = 0.0;
    for (k, &(value, weight)) in pairs.iter().enumerate() {
        cum += weight;
        if cum >= half - tol {
            if (cum - half).abs() <= tol && k + 1 < pairs.len() {
                return (value + pairs[k + 1].0) / 2.0;
            }
            return value;
        }
    }
    pairs[pairs.len() - 1].0
}

/// Iterated half-sample mode: repeatedly keep the narrowest window holding
/// half the current weight (lowest-index window on ties), then return the
/// weighted mean once two or fewer points remain.
fn half_sample_mode_sorted(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &(_, w) in pairs {
        prefix.push(prefix.last().unwrap() + w);
    }

    let mut lo = 0usize;
    let mut hi = n - 1;
    loop {
        let len = hi - lo + 1;
        if len <= 2 {
            break;
        }
        let total = prefix[hi + 1] - prefix[lo];
        let target = (total / 2.0) * (1.0 - 1e-12);

        let mut best: Option<(f64, usize, usize)> = None;
        let mut j = lo;
        for i in lo..=hi {
            if j < i {
                j = i;
            }
            while j <= hi && prefix[j + 1] - prefix[i] < target {
                j += 1;
            }
            if j > hi {
                break;
            }
            let width = pairs[j].0 - pairs[i].0;
            // Widths within rounding of each other count as tied, and ties
            // keep the lowest-index window.
            let better = match best {
                None => true,
                Some((bw, _, _)) => width < bw - 1e-12 * bw.max(width),
            };
            if better {
                best = Some((width, i, j));
            }
        }

        let (_, bi, bj) = best.expect("a half-weight window always exists");
        if bi == lo && bj == hi {
            break; // window cannot shrink further
        }
        lo = bi;
        hi = bj;
    }

    let mut num = 0.0;
    let mut den = 0.0;
    for &(v, w) in &pairs[lo..=hi] {
        num += v * w;
        den += w;
    }
    num / den
}

/// Technique 1: the 68.3rd percentile of the sorted absolute deviations,
/// interpolated linearly between bin centers (and toward zero below the
/// first center).
pub fn sigma_percentile(devset: &DeviationSet) -> SigmaEstimate {
    let sigma = percentile_of_curve(devset, SIGMA_PERCENTILE);
    SigmaEstimate {
        technique: SigmaTechnique::Percentile,
        value: SigmaValue::TwoSided(sigma),
        corrected: false,
    }
}

fn percentile_of_curve(devset: &DeviationSet, q: f64) -> f64 {
    let p = devset.percentiles();
    let d = devset.deviations();
    let n = d.len();
    if n == 0 {
        return 0.0;
    }
    if q <= p[0] {
        // Interpolate toward zero at percentile zero.
        return d[0] * q / p[0];
    }
    if q >= p[n - 1] {
        return d[n - 1];
    }
    let hi = p.partition_point(|&v| v < q);
    let lo = hi - 1;
    let t = (q - p[lo]) / (p[hi] - p[lo]);
    d[lo] + t * (d[hi] - d[lo])
}

/// Technique 2: weighted least-squares slope of the line through the origin
/// fit to (abscissa, deviation) pairs.
pub fn sigma_line_fit(devset: &DeviationSet) -> Result<SigmaEstimate> {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&a, &d), &w) in devset
        .abscissae()
        .iter()
        .zip(devset.deviations())
        .zip(devset.weights())
    {
        num += w * a * d;
        den += w * a * a;
    }
    if den == 0.0 {
        return Err(RcrError::InsufficientPoints { needed: 1, got: 0 });
    }
    Ok(SigmaEstimate {
        technique: SigmaTechnique::LineFit,
        value: SigmaValue::TwoSided((num / den).max(0.0)),
        corrected: false,
    })
}

/// Technique 3: fit a continuous two-segment broken line of intercept zero to
/// the (abscissa, deviation) curve, scanning every interior break position;
/// the estimate is the slope of the first segment. Contamination makes the
/// curve break upward, so the first slope tracks the uncontaminated core.
///
/// Falls back to the straight-line fit below three points.
pub fn sigma_broken_line(devset: &DeviationSet) -> Result<SigmaEstimate> {
    let n = devset.len();
    if n < 3 {
        let mut est = sigma_line_fit(devset)?;
        est.technique = SigmaTechnique::BrokenLine;
        return Ok(est);
    }
    if devset.deviations().iter().all(|&d| d == 0.0) {
        return Ok(SigmaEstimate {
            technique: SigmaTechnique::BrokenLine,
            value: SigmaValue::TwoSided(0.0),
            corrected: false,
        });
    }

    let a = devset.abscissae();
    let d = devset.deviations();
    let w = devset.weights();

    // Prefix sums make every break candidate an O(1) evaluation.
    let mut p_w = vec![0.0; n + 1];
    let mut p_wa = vec![0.0; n + 1]; // w a
    let mut p_waa = vec![0.0; n + 1]; // w a^2
    let mut p_wd = vec![0.0; n + 1]; // w d
    let mut p_wad = vec![0.0; n + 1]; // w a d
    let mut p_wdd = vec![0.0; n + 1]; // w d^2
    for i in 0..n {
        p_w[i + 1] = p_w[i] + w[i];
        p_wa[i + 1] = p_wa[i] + w[i] * a[i];
        p_waa[i + 1] = p_waa[i] + w[i] * a[i] * a[i];
        p_wd[i + 1] = p_wd[i] + w[i] * d[i];
        p_wad[i + 1] = p_wad[i] + w[i] * a[i] * d[i];
        p_wdd[i + 1] = p_wdd[i] + w[i] * d[i] * d[i];
    }

    let mut best: Option<(f64, f64)> = None; // (sse, first slope)
    for k in 0..n - 1 {
        // Break at abscissa a[k]: points 0..=k lie on the first segment with
        // predictor u_i = a_i, and the rest continue from the break with
        // u_i = a_k, v_i = a_i - a_k.
        let ak = a[k];
        let tail_w = p_w[n] - p_w[k + 1];
        let tail_wa = p_wa[n] - p_wa[k + 1];
        let tail_waa = p_waa[n] - p_waa[k + 1];
        let tail_wd = p_wd[n] - p_wd[k + 1];
        let tail_wad = p_wad[n] - p_wad[k + 1];

        let suu = p_waa[k + 1] + ak * ak * tail_w;
        let suv = ak * (tail_wa - ak * tail_w);
        let svv = tail_waa - 2.0 * ak * tail_wa + ak * ak * tail_w;
        let sud = p_wad[k + 1] + ak * tail_wd;
        let svd = tail_wad - ak * tail_wd;

        let det = suu * svv - suv * suv;
        let (s1, sse) = if det.abs() <= 1e-14 * suu.abs() * svv.abs() {
            // Second segment carries no independent information (tied
            // abscissae); fall back to a single slope over everything.
            let s = if p_waa[n] > 0.0 { p_wad[n] / p_waa[n] } else { 0.0 };
            (s, p_wdd[n] - s * p_wad[n])
        } else {
            let s1 = (sud * svv - svd * suv) / det;
            let s2 = (svd * suu - sud * suv) / det;
            (s1, p_wdd[n] - s1 * sud - s2 * svd)
        };
        if best.is_none_or(|(b, _)| sse < b) {
            best = Some((sse, s1));
        }
    }

    let (_, slope) = best.unwrap();
    Ok(SigmaEstimate {
        technique: SigmaTechnique::BrokenLine,
        value: SigmaValue::TwoSided(slope.max(0.0)),
        corrected: false,
    })
}

/// One-sided scale: sigma-below from points at or under mu, sigma-above from
/// points at or over mu, each treated as its own deviation set with its own
/// count. A side with no points inherits the other side's estimate.
pub fn one_sided_sigmas(
    sample: &Sample,
    mu: f64,
    technique: SigmaTechnique,
) -> Result<SigmaEstimate> {
    let mut below = Vec::new();
    let mut above = Vec::new();
    for (i, &y) in sample.values().iter().enumerate() {
        let w = sample.weight(i);
        if y <= mu {
            below.push((mu - y, w));
        }
        if y >= mu {
            above.push((y - mu, w));
        }
    }

    let eval = |pairs: Vec<(f64, f64)>| -> Result<Option<f64>> {
        if pairs.is_empty() {
            return Ok(None);
        }
        let devset = DeviationSet::from_deviations(pairs, mu);
        let est = match technique {
            SigmaTechnique::Percentile => sigma_percentile(&devset),
            SigmaTechnique::LineFit => sigma_line_fit(&devset)?,
            SigmaTechnique::BrokenLine => sigma_broken_line(&devset)?,
            SigmaTechnique::StdDev => {
                return Err(RcrError::InsufficientPoints { needed: 2, got: 0 })
            }
        };
        match est.value {
            SigmaValue::TwoSided(s) => Ok(Some(s)),
            SigmaValue::OneSided { .. } => unreachable!("side estimates are scalar"),
        }
    };

    let s_below = eval(below)?;
    let s_above = eval(above)?;
    let (below, above) = match (s_below, s_above) {
        (Some(b), Some(a)) => (b, a),
        (Some(b), None) => (b, b),
        (None, Some(a)) => (a, a),
        (None, None) => unreachable!("sample is nonempty"),
    };
    Ok(SigmaEstimate {
        technique,
        value: SigmaValue::OneSided { below, above },
        corrected: false,
    })
}

/// Weighted standard deviation about `mu` with the unbiased n-1 denominator;
/// weights are normalized to frequencies summing to n so the estimate is
/// invariant under uniform weight rescaling.
pub fn std_deviation(sample: &Sample, mu: f64) -> Result<SigmaEstimate> {
    let n = sample.len();
    if n < 2 {
        return Err(RcrError::InsufficientPoints { needed: 2, got: n });
    }
    let total = sample.total_weight();
    let mut acc = 0.0;
    for (i, &y) in sample.values().iter().enumerate() {
        let d = y - mu;
        acc += sample.weight(i) * d * d;
    }
    let variance = acc * (n as f64) / (total * (n as f64 - 1.0));
    Ok(SigmaEstimate {
        technique: SigmaTechnique::StdDev,
        value: SigmaValue::TwoSided(variance.sqrt()),
        corrected: false,
    })
}

/// Uncorrected sigma for a (technique, sidedness) pair about `mu`.
pub fn sigma_for(
    sample: &Sample,
    mu: f64,
    technique: SigmaTechnique,
    sidedness: Sidedness,
) -> Result<SigmaEstimate> {
    match (technique, sidedness) {
        (SigmaTechnique::StdDev, _) => std_deviation(sample, mu),
        (_, Sidedness::TwoSided) => {
            let devset = build_deviation_set(sample, mu);
            match technique {
                SigmaTechnique::Percentile => Ok(sigma_percentile(&devset)),
                SigmaTechnique::LineFit => sigma_line_fit(&devset),
                SigmaTechnique::BrokenLine => sigma_broken_line(&devset),
                SigmaTechnique::StdDev => unreachable!(),
            }
        }
        (_, Sidedness::OneSided) => one_sided_sigmas(sample, mu, technique),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::Distribution;

    fn sigma_scalar(est: &SigmaEstimate) -> f64 {
        match est.value {
            SigmaValue::TwoSided(s) => s,
            _ => panic!("expected two-sided"),
        }
    }

    #[test]
    fn mean_of_symmetric_sample() {
        let s = Sample::unweighted(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(central_tendency(&s, CentralTendency::Mean), 2.0);
    }

    #[test]
    fn weighted_median_crossing_rule() {
        // Cumulative fractions 0.25, 0.50, 1.00; the exact crossing at one
        // half averages the adjacent values.
        let s = Sample::weighted(vec![1.0, 2.0, 3.0], vec![1.0, 1.0, 2.0]).unwrap();
        assert_eq!(central_tendency(&s, CentralTendency::Median), 2.5);
    }

    #[test]
    fn unweighted_median_matches_convention() {
        let s = Sample::unweighted(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(central_tendency(&s, CentralTendency::Median), 2.0);
        let s = Sample::unweighted(vec![4.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(central_tendency(&s, CentralTendency::Median), 2.5);
    }

    #[test]
    fn half_sample_mode_recursion_trace() {
        // Three-point windows have widths 1.1, 0.2 and 3.9; the winner is
        // [1, 1.1, 1.2]. The two-point widths then tie at 0.1 and the
        // lowest-index window [1, 1.1] is kept, so the mode is 1.05.
        let s = Sample::unweighted(vec![0.0, 1.0, 1.1, 1.2, 5.0]).unwrap();
        let mode = central_tendency(&s, CentralTendency::Mode);
        assert!((mode - 1.05).abs() < 1e-12, "got {mode}");
    }

    #[test]
    fn mode_of_constant_sample() {
        let s = Sample::unweighted(vec![7.0; 9]).unwrap();
        assert_eq!(central_tendency(&s, CentralTendency::Mode), 7.0);
    }

    #[test]
    fn mode_survives_skewed_weights_on_tied_values() {
        // All values equal with a dominant weight at the end: the window
        // cannot shrink, so the estimator falls back to the weighted mean.
        let s = Sample::weighted(vec![2.0; 5], vec![0.1, 0.1, 0.1, 0.1, 10.0]).unwrap();
        assert_eq!(central_tendency(&s, CentralTendency::Mode), 2.0);
    }

    #[test]
    fn deviation_set_single_point_abscissa() {
        let s = Sample::unweighted(vec![3.0]).unwrap();
        let d = build_deviation_set(&s, 1.0);
        assert_eq!(d.deviations(), &[2.0]);
        assert!((d.abscissae()[0] - 1.0008).abs() < 1e-3);
    }

    #[test]
    fn deviation_set_zero_case() {
        let s = Sample::unweighted(vec![0.0, 0.0, 0.0]).unwrap();
        let d = build_deviation_set(&s, 0.0);
        assert_eq!(d.deviations(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn deviation_set_percentile_formula() {
        let s = Sample::unweighted(vec![0.0; 1000]).unwrap();
        let d = build_deviation_set(&s, 0.0);
        // i = 683 of n = 1000 sits at (683 - 0.317)/1000.
        assert!((d.percentiles()[682] - 0.682683).abs() < 1e-12);
    }

    #[test]
    fn deviation_set_weighted_percentiles_use_cumulative_weight() {
        // The bin-center offset applies in weight units:
        // p_i = (C_{i-1} + 0.683 w_i) / W.
        let s = Sample::weighted(vec![0.0, 1.0], vec![1.0, 3.0]).unwrap();
        let d = build_deviation_set(&s, 0.0);
        assert!((d.percentiles()[0] - 0.683 / 4.0).abs() < 1e-15);
        assert!((d.percentiles()[1] - (1.0 + 0.683 * 3.0) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn percentile_sigma_constant_deviations() {
        let pairs = vec![(3.0, 1.0); 8];
        let d = DeviationSet::from_deviations(pairs, 0.0);
        assert_eq!(sigma_scalar(&sigma_percentile(&d)), 3.0);
    }

    #[test]
    fn percentile_sigma_interpolates_between_bins() {
        // Percentile targets (i - 0.317)/3; 0.683 falls between the second
        // and third deviations.
        let pairs = vec![(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)];
        let d = DeviationSet::from_deviations(pairs, 0.0);
        let sigma = sigma_scalar(&sigma_percentile(&d));
        let p2 = (2.0 - 0.317) / 3.0;
        let p3 = (3.0 - 0.317) / 3.0;
        let expect = 2.0 + (0.683 - p2) / (p3 - p2);
        assert!((sigma - expect).abs() < 1e-12);
        assert!((sigma - 2.366).abs() < 1e-9);
    }

    #[test]
    fn percentile_sigma_standard_normal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let normal = rand_distr::StandardNormal;
        let values: Vec<f64> = (0..100_000)
            .map(|_| Distribution::<f64>::sample(&normal, &mut rng))
            .collect();
        let s = Sample::unweighted(values).unwrap();
        let d = build_deviation_set(&s, 0.0);
        let sigma = sigma_scalar(&sigma_percentile(&d));
        assert!((sigma - 1.0).abs() < 0.02, "got {sigma}");
    }

    #[test]
    fn line_fit_recovers_exact_slope() {
        let s = Sample::unweighted(vec![0.5, -0.5, 1.5, -1.5, 2.5]).unwrap();
        let base = build_deviation_set(&s, 0.0);
        let scaled: Vec<(f64, f64)> = base
            .abscissae()
            .iter()
            .map(|&a| (3.0 * a, 1.0))
            .collect();
        let d = DeviationSet::from_deviations(scaled, 0.0);
        let sigma = sigma_scalar(&sigma_line_fit(&d).unwrap());
        assert!((sigma - 3.0).abs() < 1e-12, "got {sigma}");
    }

    #[test]
    fn line_fit_single_point() {
        let d = DeviationSet::from_deviations(vec![(2.0, 1.0)], 0.0);
        let sigma = sigma_scalar(&sigma_line_fit(&d).unwrap());
        assert!((sigma - 2.0 / 1.0008).abs() < 1e-3, "got {sigma}");
    }

    #[test]
    fn line_fit_standard_normal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let normal = rand_distr::StandardNormal;
        let values: Vec<f64> = (0..10_000)
            .map(|_| Distribution::<f64>::sample(&normal, &mut rng))
            .collect();
        let s = Sample::unweighted(values).unwrap();
        let d = build_deviation_set(&s, 0.0);
        let sigma = sigma_scalar(&sigma_line_fit(&d).unwrap());
        assert!((sigma - 1.0).abs() < 0.03, "got {sigma}");
    }

    #[test]
    fn broken_line_recovers_unbroken_slope() {
        let s = Sample::unweighted((0..40).map(|i| i as f64 * 0.1 - 2.0).collect()).unwrap();
        let base = build_deviation_set(&s, 0.0);
        let scaled: Vec<(f64, f64)> = base
            .abscissae()
            .iter()
            .map(|&a| (2.5 * a, 1.0))
            .collect();
        let d = DeviationSet::from_deviations(scaled, 0.0);
        let sigma = sigma_scalar(&sigma_broken_line(&d).unwrap());
        assert!((sigma - 2.5).abs() < 1e-9, "got {sigma}");
    }

    #[test]
    fn broken_line_recovers_synthetic_break() {
        // Construct deviations lying exactly on a broken line with slopes
        // 1 then 5, breaking at abscissa 1.
        let n = 200;
        let abscissae: Vec<f64> = (1..=n)
            .map(|i| {
                let p = (i as f64 - 0.317) / n as f64;
                std::f64::consts::SQRT_2 * erf_inv(p)
            })
            .collect();
        let pairs: Vec<(f64, f64)> = abscissae
            .iter()
            .map(|&a| {
                let d = if a <= 1.0 { a } else { 1.0 + 5.0 * (a - 1.0) };
                (d, 1.0)
            })
            .collect();
        let d = DeviationSet::from_deviations(pairs, 0.0);
        let sigma = sigma_scalar(&sigma_broken_line(&d).unwrap());
        assert!((sigma - 1.0).abs() < 0.05, "got {sigma}");
    }

    #[test]
    fn broken_line_zero_deviations() {
        let d = DeviationSet::from_deviations(vec![(0.0, 1.0); 5], 0.0);
        assert_eq!(sigma_scalar(&sigma_broken_line(&d).unwrap()), 0.0);
    }

    #[test]
    fn one_sided_symmetric_sample() {
        let s = Sample::unweighted(vec![-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]).unwrap();
        let est = one_sided_sigmas(&s, 0.0, SigmaTechnique::Percentile).unwrap();
        match est.value {
            SigmaValue::OneSided { below, above } => {
                assert!((below - above).abs() < 1e-12);
            }
            _ => panic!("expected one-sided"),
        }
    }

    #[test]
    fn one_sided_fallback_when_empty() {
        let s = Sample::unweighted(vec![1.0, 2.0, 3.0]).unwrap();
        let est = one_sided_sigmas(&s, 0.0, SigmaTechnique::Percentile).unwrap();
        match est.value {
            SigmaValue::OneSided { below, above } => assert_eq!(below, above),
            _ => panic!("expected one-sided"),
        }
    }

    #[test]
    fn std_deviation_two_points() {
        let s = Sample::unweighted(vec![0.0, 2.0]).unwrap();
        let est = std_deviation(&s, 1.0).unwrap();
        assert!((sigma_scalar(&est) - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn std_deviation_constant_sample() {
        let s = Sample::unweighted(vec![4.0; 10]).unwrap();
        assert_eq!(sigma_scalar(&std_deviation(&s, 4.0).unwrap()), 0.0);
    }

    #[test]
    fn std_deviation_requires_two_points() {
        let s = Sample::unweighted(vec![1.0]).unwrap();
        assert!(std_deviation(&s, 1.0).is_err());
    }

    #[test]
    fn std_deviation_standard_normal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let normal = rand_distr::StandardNormal;
        let values: Vec<f64> = (0..100_000)
            .map(|_| Distribution::<f64>::sample(&normal, &mut rng))
            .collect();
        let s = Sample::unweighted(values.clone()).unwrap();
        let mu = central_tendency(&s, CentralTendency::Mean);
        let sigma = sigma_scalar(&std_deviation(&s, mu).unwrap());
        assert!((sigma - 1.0).abs() < 0.01, "got {sigma}");
    }

    #[test]
    fn unit_weights_reduce_exactly() {
        let values = vec![0.3, -1.2, 4.5, 2.2, 0.0, -3.3, 1.1];
        let a = Sample::unweighted(values.clone()).unwrap();
        let b = Sample::weighted(values, vec![1.0; 7]).unwrap();
        for kind in [
            CentralTendency::Mean,
            CentralTendency::Median,
            CentralTendency::Mode,
        ] {
            assert_eq!(central_tendency(&a, kind), central_tendency(&b, kind));
        }
        let mu = central_tendency(&a, CentralTendency::Median);
        for tech in [
            SigmaTechnique::Percentile,
            SigmaTechnique::LineFit,
            SigmaTechnique::BrokenLine,
        ] {
            let sa = sigma_for(&a, mu, tech, Sidedness::TwoSided).unwrap();
            let sb = sigma_for(&b, mu, tech, Sidedness::TwoSided).unwrap();
            assert_eq!(sigma_scalar(&sa), sigma_scalar(&sb));
        }
    }

    #[test]
    fn rejects_invalid_samples() {
        assert!(Sample::unweighted(vec![]).is_err());
        assert!(Sample::unweighted(vec![f64::NAN]).is_err());
        assert!(Sample::weighted(vec![1.0], vec![0.0]).is_err());
        assert!(Sample::weighted(vec![1.0], vec![-1.0]).is_err());
        assert!(Sample::weighted(vec![1.0, 2.0], vec![1.0]).is_err());
    }
}
