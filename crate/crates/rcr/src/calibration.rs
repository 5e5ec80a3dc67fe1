//! Monte Carlo machinery: synthetic contaminated samples for tests and demos,
//! and the sample-size dependent correction factors that make every sigma
//! estimate unbiased on uncontaminated Gaussian data.
//!
//! Percentile-style deviation estimators are biased low at small n (and
//! residuals from an M-parameter fit are biased low for any n), which left
//! uncorrected leads to runaway over-rejection. The factors here are the
//! reciprocal of the mean uncorrected estimate over many pure-Gaussian
//! trials; runtime multiplies each computed sigma by the factor for the
//! current kept count, interpolating in log n between grid points. Factors
//! ship as a versioned table regenerated by the `calibrate` CLI subcommand;
//! nothing calibrates implicitly at runtime.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use crate::error::{RcrError, Result};
use crate::fitting::{DataPoint, DataSet};
use crate::linalg;
use crate::stats::{
    central_tendency, sigma_for, CentralTendency, Sample, Sidedness, SigmaTechnique, SigmaValue,
};

/// Shape of the uncontaminated core distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Uncontaminated {
    Gaussian { mu: f64, sigma: f64 },
    /// Exponential-power with shape exponent 1 (Laplace), unit variance.
    Peaked,
    /// Exponential-power with shape exponent 10, unit variance.
    FlatTopped,
    /// Two half-Gaussians with a 1.5 sigma ratio.
    MildlyAsymmetric,
}

/// Shape of the contaminant distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Contaminants {
    /// Symmetric: N(0, sigma).
    TwoSided { sigma: f64 },
    /// Drawn from the positive side of N(0, sigma).
    OneSided { sigma: f64 },
    /// Mostly positive; `mix` in [0, 1] is the symmetric share (a draw goes
    /// negative with probability mix/2).
    InBetween { sigma: f64, mix: f64 },
}

/// Whether a contaminant replaces the core value or is added to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContaminationMode {
    Replace,
    Add,
}

/// A reproducible recipe for a synthetic contaminated sample.
#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub n_points: usize,
    pub fraction: f64,
    pub core: Uncontaminated,
    pub contaminants: Contaminants,
    pub mode: ContaminationMode,
    pub seed: u64,
}

/// A generated sample with ground-truth contaminant labels.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub sample: Sample,
    pub contaminant: Vec<bool>,
}

impl LabeledSample {
    pub fn contaminant_count(&self) -> usize {
        self.contaminant.iter().filter(|&&c| c).count()
    }
}

fn draw_core<R: Rng>(rng: &mut R, core: Uncontaminated) -> f64 {
    match core {
        Uncontaminated::Gaussian { mu, sigma } => {
            mu + sigma * Distribution::<f64>::sample(&StandardNormal, rng)
        }
        Uncontaminated::Peaked => {
            // Laplace with unit variance: scale 1/sqrt(2).
            let u: f64 = rng.random_range(-0.5..0.5);
            let b = std::f64::consts::FRAC_1_SQRT_2;
            -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        }
        Uncontaminated::FlatTopped => {
            // Generalized normal, beta = 10: |x/alpha|^beta ~ Gamma(1/beta).
            const BETA: f64 = 10.0;
            let alpha = (libm::tgamma(1.0 / BETA) / libm::tgamma(3.0 / BETA)).sqrt();
            let g = Gamma::new(1.0 / BETA, 1.0).unwrap().sample(rng);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            sign * alpha * g.powf(1.0 / BETA)
        }
        Uncontaminated::MildlyAsymmetric => {
            let (sigma_left, sigma_right) = (1.0, 1.5);
            let p_left = sigma_left / (sigma_left + sigma_right);
            let magnitude: f64 = Distribution::<f64>::sample(&StandardNormal, rng);
            if rng.random::<f64>() < p_left {
                -magnitude.abs() * sigma_left
            } else {
                magnitude.abs() * sigma_right
            }
        }
    }
}

fn draw_contaminant<R: Rng>(rng: &mut R, contaminants: Contaminants) -> f64 {
    let normal = |rng: &mut R| -> f64 { Distribution::<f64>::sample(&StandardNormal, rng) };
    match contaminants {
        Contaminants::TwoSided { sigma } => sigma * normal(rng),
        Contaminants::OneSided { sigma } => sigma * normal(rng).abs(),
        Contaminants::InBetween { sigma, mix } => {
            let magnitude = sigma * normal(rng).abs();
            if rng.random::<f64>() < mix / 2.0 {
                -magnitude
            } else {
                magnitude
            }
        }
    }
}

/// Generate a contaminated sample. Deterministic for a given scenario: the
/// same `(scenario, seed)` yields bit-identical output. Exactly
/// `round(fraction * n_points)` points are labeled contaminants.
pub fn generate_sample(scenario: &Scenario) -> Result<LabeledSample> {
    if scenario.n_points == 0 {
        return Err(RcrError::InvalidScenario("n_points must be >= 1".into()));
    }
    if !(0.0..1.0).contains(&scenario.fraction) {
        return Err(RcrError::InvalidScenario(format!(
            "fraction must lie in [0, 1), got {}",
            scenario.fraction
        )));
    }
    if let Contaminants::InBetween { mix, .. } = scenario.contaminants {
        if !(0.0..=1.0).contains(&mix) {
            return Err(RcrError::InvalidScenario(format!(
                "mix must lie in [0, 1], got {mix}"
            )));
        }
    }
    let sigma2 = match scenario.contaminants {
        Contaminants::TwoSided { sigma }
        | Contaminants::OneSided { sigma }
        | Contaminants::InBetween { sigma, .. } => sigma,
    };
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(RcrError::InvalidScenario(format!(
            "contaminant sigma must be positive, got {sigma2}"
        )));
    }

    let n = scenario.n_points;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let mut values: Vec<f64> = (0..n).map(|_| draw_core(&mut rng, scenario.core)).collect();

    let k = (scenario.fraction * n as f64).round() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    for pick in 0..k {
        let j = rng.random_range(pick..n);
        indices.swap(pick, j);
    }
    let mut contaminant = vec![false; n];
    let mut chosen: Vec<usize> = indices[..k].to_vec();
    chosen.sort_unstable();
    for &i in &chosen {
        contaminant[i] = true;
        let draw = draw_contaminant(&mut rng, scenario.contaminants);
        match scenario.mode {
            ContaminationMode::Replace => values[i] = draw,
            ContaminationMode::Add => values[i] += draw,
        }
    }

    Ok(LabeledSample {
        sample: Sample::unweighted(values)?,
        contaminant,
    })
}

/// Ready-made scenarios for the two simulation demonstrations.
pub mod presets {
    use super::*;

    /// 1000 points: 15% from N(0, 1), 85% replaced by one-sided draws from
    /// the positive half of N(0, 10).
    pub fn fig3(seed: u64) -> Scenario {
        Scenario {
            n_points: 1000,
            fraction: 0.85,
            core: Uncontaminated::Gaussian { mu: 0.0, sigma: 1.0 },
            contaminants: Contaminants::OneSided { sigma: 10.0 },
            mode: ContaminationMode::Replace,
            seed,
        }
    }

    /// True parameters of the exponential demonstration: y = 10 e^(-(x-0.5)),
    /// expressed as (b, m) about the pivot 0.5.
    pub const FIG4_TRUE_THETA: [f64; 2] = [10.0, -1.0];

    /// Exponential dataset on a 101-point grid over [0, 1]: unit Gaussian
    /// scatter about 10 e^(-(x-0.5)), with one-sided |N(0, 10)| contamination
    /// added to `round(fraction * 101)` points.
    pub fn fig4(seed: u64, fraction: f64) -> Result<(DataSet, Vec<bool>)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(RcrError::InvalidScenario(format!(
                "fraction must lie in [0, 1), got {fraction}"
            )));
        }
        let n = 101usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let mut ys: Vec<f64> = xs
            .iter()
            .map(|&x| {
                10.0 * (-(x - 0.5)).exp() + Distribution::<f64>::sample(&StandardNormal, &mut rng)
            })
            .collect();

        let k = (fraction * n as f64).round() as usize;
        let mut indices: Vec<usize> = (0..n).collect();
        for pick in 0..k {
            let j = rng.random_range(pick..n);
            indices.swap(pick, j);
        }
        let mut contaminant = vec![false; n];
        let mut chosen: Vec<usize> = indices[..k].to_vec();
        chosen.sort_unstable();
        for &i in &chosen {
            contaminant[i] = true;
            ys[i] += 10.0 * Distribution::<f64>::sample(&StandardNormal, &mut rng).abs();
        }

        let points = xs
            .into_iter()
            .zip(ys)
            .map(|(x, y)| DataPoint {
                x: vec![x],
                y,
                sigma_y: None,
                weight: None,
            })
            .collect();
        Ok((DataSet::new(points)?, contaminant))
    }
}

/// Mean uncorrected sigma estimate over pure N(0, 1) trials; the correction
/// factor is its reciprocal. One-sided cells contribute both side estimates
/// of every trial. Trials use independent, deterministic RNG streams, so the
/// result is identical regardless of thread count.
pub fn calibrate_correction_factor(
    n: usize,
    technique: SigmaTechnique,
    mu_kind: CentralTendency,
    sidedness: Sidedness,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    if trials < 1000 {
        return Err(RcrError::InsufficientTrials {
            needed: 1000,
            got: trials as usize,
        });
    }
    let min_n = if technique == SigmaTechnique::StdDev { 2 } else { 1 };
    if n < min_n {
        return Err(RcrError::InsufficientPoints { needed: min_n, got: n });
    }
    if technique == SigmaTechnique::StdDev && sidedness == Sidedness::OneSided {
        return Err(RcrError::InvalidScenario(
            "the standard deviation is calibrated two-sided only".into(),
        ));
    }
    if n == 1 {
        // A single point is its own center: every deviation is zero and no
        // rejection is possible, so the factor is moot.
        return Ok(1.0);
    }

    let contributions: Vec<(f64, u32)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(trial);
            let values: Vec<f64> = (0..n)
                .map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let sample = Sample::unweighted(values).expect("finite draws");
            let mu = central_tendency(&sample, mu_kind);
            let est = sigma_for(&sample, mu, technique, sidedness).expect("valid estimate");
            match est.value {
                SigmaValue::TwoSided(s) => (s, 1),
                SigmaValue::OneSided { below, above } => (below + above, 2),
            }
        })
        .collect();

    let mut total = 0.0;
    let mut count = 0u64;
    for (s, c) in contributions {
        total += s;
        count += c as u64;
    }
    let mean = total / count as f64;
    if mean <= 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 / mean)
}

/// Correction factor for deviations measured about a fitted M-parameter
/// model, which are artificially small because the fit consumes degrees of
/// freedom. Calibrated over least-squares polynomial fits to pure Gaussian
/// data, with the technique then applied to the residuals about zero.
/// Reduces to the one-dimensional factor at m = 1.
pub fn dof_adjusted_factor(
    n: usize,
    m: usize,
    technique: SigmaTechnique,
    mu_kind: CentralTendency,
    sidedness: Sidedness,
    trials: u64,
    seed: u64,
) -> Result<f64> {
    if m == 0 {
        return Err(RcrError::InvalidScenario("m must be >= 1".into()));
    }
    if n <= m {
        return Err(RcrError::NoDegreesOfFreedom { n, m });
    }
    if m == 1 {
        return calibrate_correction_factor(n, technique, mu_kind, sidedness, trials, seed);
    }
    if trials < 1000 {
        return Err(RcrError::InsufficientTrials {
            needed: 1000,
            got: trials as usize,
        });
    }

    // Fixed design: an evenly spaced grid with polynomial columns.
    let design: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let x = (i as f64 + 0.5) / n as f64;
            (0..m).map(|j| x.powi(j as i32)).collect()
        })
        .collect();
    let mut xtx = vec![vec![0.0; m]; m];
    for row in &design {
        for a in 0..m {
            for b in 0..m {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }

    let contributions: Vec<(f64, u32)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
            rng.set_stream(trial);
            let ys: Vec<f64> = (0..n)
                .map(|_| Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let mut xty = vec![0.0; m];
            for (row, &y) in design.iter().zip(&ys) {
                for a in 0..m {
                    xty[a] += row[a] * y;
                }
            }
            let beta = linalg::solve(xtx.clone(), xty).expect("fixed design is full rank");
            let residuals: Vec<f64> = design
                .iter()
                .zip(&ys)
                .map(|(row, &y)| {
                    let fit: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
                    y - fit
                })
                .collect();
            let sample = Sample::unweighted(residuals).expect("finite residuals");
            let est = sigma_for(&sample, 0.0, technique, sidedness).expect("valid estimate");
            match est.value {
                SigmaValue::TwoSided(s) => (s, 1),
                SigmaValue::OneSided { below, above } => (below + above, 2),
            }
        })
        .collect();

    let mut total = 0.0;
    let mut count = 0u64;
    for (s, c) in contributions {
        total += s;
        count += c as u64;
    }
    let mean = total / count as f64;
    if mean <= 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 / mean)
}

const TABLE_VERSION: &str = "rcr-correction-table/1";

/// Token used in the table's mu column for DOF-adjusted rows, where the
/// center is a fitted model rather than a location statistic.
const FIT_MU_TOKEN: &str = "fit";

#[derive(Debug, Clone, PartialEq)]
struct TableRecord {
    technique: SigmaTechnique,
    mu: Option<CentralTendency>, // None for m >= 2 rows
    sidedness: Sidedness,
    m: usize,
    n: usize,
    trials: u64,
    factor: f64,
}

/// Correction factors on an n-grid, per (technique, mu, sidedness) for the
/// one-dimensional case and per (technique, sidedness, m) for model fits.
/// Queries interpolate linearly in log n and clamp beyond the grid.
#[derive(Debug, Clone)]
pub struct CorrectionTable {
    version: String,
    seed: u64,
    records: Vec<TableRecord>,
    one_d: BTreeMap<(SigmaTechnique, CentralTendency, Sidedness), Vec<(usize, f64)>>,
    dof: BTreeMap<(SigmaTechnique, Sidedness, usize), Vec<(usize, f64)>>,
    identity: bool,
}

impl CorrectionTable {
    /// A table that corrects nothing; useful for tests that need the raw
    /// estimator behavior.
    pub fn identity() -> Self {
        CorrectionTable {
            version: TABLE_VERSION.to_string(),
            seed: 0,
            records: Vec::new(),
            one_d: BTreeMap::new(),
            dof: BTreeMap::new(),
            identity: true,
        }
    }

    /// The table shipped with the crate, regenerated by `rcr calibrate`.
    pub fn builtin() -> &'static CorrectionTable {
        static BUILTIN: OnceLock<CorrectionTable> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            CorrectionTable::parse(include_str!("../data/correction_table.v1.tsv"))
                .expect("embedded table is well-formed")
        })
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Correction factor for a one-dimensional sigma estimate.
    pub fn factor(
        &self,
        technique: SigmaTechnique,
        mu: CentralTendency,
        sidedness: Sidedness,
        n: usize,
    ) -> Result<f64> {
        if self.identity {
            return Ok(1.0);
        }
        let series = self
            .one_d
            .get(&(technique, mu, sidedness))
            .ok_or_else(|| {
                RcrError::MissingTableEntry(format!(
                    "{} {} {}",
                    technique.label(),
                    mu.label(),
                    sidedness.label()
                ))
            })?;
        Ok(interpolate_log_n(series, n))
    }

    /// Correction factor for deviations about a fitted m-parameter model.
    /// Delegates to the one-dimensional factor at m = 1; m beyond the grid
    /// clamps to the largest calibrated m.
    pub fn dof_factor(
        &self,
        technique: SigmaTechnique,
        mu: CentralTendency,
        sidedness: Sidedness,
        n: usize,
        m: usize,
    ) -> Result<f64> {
        if self.identity {
            return Ok(1.0);
        }
        if m <= 1 {
            return self.factor(technique, mu, sidedness, n);
        }
        let max_m = self
            .dof
            .keys()
            .filter(|(t, s, _)| *t == technique && *s == sidedness)
            .map(|&(_, _, m)| m)
            .max()
            .ok_or_else(|| {
                RcrError::MissingTableEntry(format!(
                    "{} {} m={}",
                    technique.label(),
                    sidedness.label(),
                    m
                ))
            })?;
        let series = self
            .dof
            .get(&(technique, sidedness, m.min(max_m)))
            .ok_or_else(|| {
                RcrError::MissingTableEntry(format!(
                    "{} {} m={}",
                    technique.label(),
                    sidedness.label(),
                    m
                ))
            })?;
        Ok(interpolate_log_n(series, n))
    }

    /// Render in the versioned plain-text format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.version);
        let _ = writeln!(out, "# seed={}", self.seed);
        let _ = writeln!(out, "# columns: technique mu sidedness m n trials factor");
        for r in &self.records {
            let mu = r.mu.map_or(FIT_MU_TOKEN, |m| m.label());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.12e}",
                r.technique.label(),
                mu,
                r.sidedness.label(),
                r.m,
                r.n,
                r.trials,
                r.factor
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut seed = 0u64;
        let mut records = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                let comment = comment.trim();
                if version.is_none() && comment.starts_with("rcr-correction-table/") {
                    version = Some(comment.to_string());
                } else if let Some(s) = comment.strip_prefix("seed=") {
                    seed = s
                        .trim()
                        .parse()
                        .map_err(|_| RcrError::TableFormat(format!("bad seed line: {line}")))?;
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(RcrError::TableFormat(format!(
                    "line {}: expected 7 fields, got {}",
                    line_no + 1,
                    fields.len()
                )));
            }
            let technique = parse_technique(fields[0])?;
            let mu = if fields[1] == FIT_MU_TOKEN {
                None
            } else {
                Some(parse_mu(fields[1])?)
            };
            let sidedness = parse_sidedness(fields[2])?;
            let m: usize = fields[3]
                .parse()
                .map_err(|_| RcrError::TableFormat(format!("bad m at line {}", line_no + 1)))?;
            let n: usize = fields[4]
                .parse()
                .map_err(|_| RcrError::TableFormat(format!("bad n at line {}", line_no + 1)))?;
            let trials: u64 = fields[5]
                .parse()
                .map_err(|_| RcrError::TableFormat(format!("bad trials at line {}", line_no + 1)))?;
            let factor: f64 = fields[6].parse().map_err(|_| {
                RcrError::TableFormat(format!("bad factor at line {}", line_no + 1))
            })?;
            if !(factor.is_finite() && factor > 0.0) {
                return Err(RcrError::TableFormat(format!(
                    "factor must be positive at line {}",
                    line_no + 1
                )));
            }
            records.push(TableRecord {
                technique,
                mu,
                sidedness,
                m,
                n,
                trials,
                factor,
            });
        }
        let version = version
            .ok_or_else(|| RcrError::TableFormat("missing version header".into()))?;
        if version != TABLE_VERSION {
            return Err(RcrError::TableFormat(format!(
                "unsupported version {version}"
            )));
        }
        Ok(Self::from_records(version, seed, records))
    }

    fn from_records(version: String, seed: u64, records: Vec<TableRecord>) -> Self {
        let mut one_d: BTreeMap<_, Vec<(usize, f64)>> = BTreeMap::new();
        let mut dof: BTreeMap<_, Vec<(usize, f64)>> = BTreeMap::new();
        for r in &records {
            match r.mu {
                Some(mu) if r.m == 1 => {
                    one_d
                        .entry((r.technique, mu, r.sidedness))
                        .or_default()
                        .push((r.n, r.factor));
                }
                _ => {
                    dof.entry((r.technique, r.sidedness, r.m))
                        .or_default()
                        .push((r.n, r.factor));
                }
            }
        }
        for series in one_d.values_mut().chain(dof.values_mut()) {
            series.sort_by_key(|&(n, _)| n);
            series.dedup_by_key(|&mut (n, _)| n);
        }
        CorrectionTable {
            version,
            seed,
            records,
            one_d,
            dof,
            identity: false,
        }
    }
}

fn parse_technique(token: &str) -> Result<SigmaTechnique> {
    match token {
        "stddev" => Ok(SigmaTechnique::StdDev),
        "percentile" => Ok(SigmaTechnique::Percentile),
        "linefit" => Ok(SigmaTechnique::LineFit),
        "brokenline" => Ok(SigmaTechnique::BrokenLine),
        other => Err(RcrError::TableFormat(format!("unknown technique {other}"))),
    }
}

fn parse_mu(token: &str) -> Result<CentralTendency> {
    match token {
        "mean" => Ok(CentralTendency::Mean),
        "median" => Ok(CentralTendency::Median),
        "mode" => Ok(CentralTendency::Mode),
        other => Err(RcrError::TableFormat(format!("unknown mu kind {other}"))),
    }
}

fn parse_sidedness(token: &str) -> Result<Sidedness> {
    match token {
        "two" => Ok(Sidedness::TwoSided),
        "one" => Ok(Sidedness::OneSided),
        other => Err(RcrError::TableFormat(format!("unknown sidedness {other}"))),
    }
}

fn interpolate_log_n(series: &[(usize, f64)], n: usize) -> f64 {
    debug_assert!(!series.is_empty());
    let first = series[0];
    let last = series[series.len() - 1];
    if n <= first.0 {
        return first.1;
    }
    if n >= last.0 {
        return last.1;
    }
    let hi = series.partition_point(|&(gn, _)| gn < n);
    let (n0, f0) = series[hi - 1];
    let (n1, f1) = series[hi];
    if n0 == n {
        return f0;
    }
    let t = ((n as f64).ln() - (n0 as f64).ln()) / ((n1 as f64).ln() - (n0 as f64).ln());
    f0 + t * (f1 - f0)
}

/// Grid and trial budgets for a full table regeneration.
#[derive(Debug, Clone)]
pub struct TableSpec {
    pub seed: u64,
    /// Target random draws per one-dimensional cell; trials = budget / n,
    /// clamped to [1000, max_trials].
    pub one_d_budget: u64,
    pub dof_budget: u64,
    pub max_trials: u64,
}

impl Default for TableSpec {
    fn default() -> Self {
        TableSpec {
            seed: 20_260_808,
            one_d_budget: 3_000_000,
            dof_budget: 1_000_000,
            max_trials: 120_000,
        }
    }
}

impl TableSpec {
    fn trials_for(&self, budget: u64, n: usize) -> u64 {
        (budget / n as u64).clamp(1000, self.max_trials)
    }
}

fn log_grid(start: usize, stop: usize, step: f64) -> Vec<usize> {
    let mut grid = Vec::new();
    let mut exp = (start as f64).log10();
    while 10f64.powf(exp) < stop as f64 * 1.0001 {
        let n = 10f64.powf(exp).round() as usize;
        if grid.last() != Some(&n) {
            grid.push(n);
        }
        exp += step;
    }
    if grid.last() != Some(&stop) {
        grid.push(stop);
    }
    grid
}

/// Dense small-n grid plus a log-spaced tail. The standard deviation extends
/// to 1e5; the percentile techniques stop at 1e4 (their factors are within a
/// few 1e-4 of unity there and queries clamp).
fn one_d_grid(technique: SigmaTechnique) -> Vec<usize> {
    let start = if technique == SigmaTechnique::StdDev { 2 } else { 1 };
    let mut grid: Vec<usize> = (start..=20).collect();
    let stop = if technique == SigmaTechnique::StdDev {
        100_000
    } else {
        10_000
    };
    for n in log_grid(25, stop, 0.2) {
        if n > 20 {
            grid.push(n);
        }
    }
    grid
}

fn dof_grid(m: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = (m + 1..=20).collect();
    for n in log_grid(25, 10_000, 0.2) {
        if n > 20 {
            grid.push(n);
        }
    }
    grid
}

fn one_d_combos() -> Vec<(SigmaTechnique, CentralTendency, Sidedness)> {
    let mut combos = vec![(
        SigmaTechnique::StdDev,
        CentralTendency::Mean,
        Sidedness::TwoSided,
    )];
    for technique in [
        SigmaTechnique::Percentile,
        SigmaTechnique::LineFit,
        SigmaTechnique::BrokenLine,
    ] {
        for mu in [CentralTendency::Median, CentralTendency::Mode] {
            for sidedness in [Sidedness::TwoSided, Sidedness::OneSided] {
                combos.push((technique, mu, sidedness));
            }
        }
    }
    combos
}

fn dof_combos() -> Vec<(SigmaTechnique, Sidedness)> {
    vec![
        (SigmaTechnique::StdDev, Sidedness::TwoSided),
        (SigmaTechnique::Percentile, Sidedness::TwoSided),
        (SigmaTechnique::Percentile, Sidedness::OneSided),
        (SigmaTechnique::LineFit, Sidedness::TwoSided),
        (SigmaTechnique::LineFit, Sidedness::OneSided),
        (SigmaTechnique::BrokenLine, Sidedness::TwoSided),
        (SigmaTechnique::BrokenLine, Sidedness::OneSided),
    ]
}

/// Maximum model parameter count on the DOF grid; larger m clamps here.
pub const MAX_CALIBRATED_M: usize = 5;

/// Regenerate the full correction table. Deterministic for a given spec;
/// `progress(done, total)` is called after each cell.
pub fn generate_table(spec: &TableSpec, mut progress: impl FnMut(usize, usize)) -> CorrectionTable {
    let mut cells: Vec<TableRecord> = Vec::new();
    for (technique, mu, sidedness) in one_d_combos() {
        for n in one_d_grid(technique) {
            cells.push(TableRecord {
                technique,
                mu: Some(mu),
                sidedness,
                m: 1,
                n,
                trials: spec.trials_for(spec.one_d_budget, n),
                factor: 0.0,
            });
        }
    }
    for m in 2..=MAX_CALIBRATED_M {
        for (technique, sidedness) in dof_combos() {
            for n in dof_grid(m) {
                cells.push(TableRecord {
                    technique,
                    mu: None,
                    sidedness,
                    m,
                    n,
                    trials: spec.trials_for(spec.dof_budget, n),
                    factor: 0.0,
                });
            }
        }
    }

    let total = cells.len();
    for (done, cell) in cells.iter_mut().enumerate() {
        let factor = match cell.mu {
            Some(mu) => calibrate_correction_factor(
                cell.n,
                cell.technique,
                mu,
                cell.sidedness,
                cell.trials,
                spec.seed,
            )
            .expect("grid cells are valid"),
            None => dof_adjusted_factor(
                cell.n,
                cell.m,
                cell.technique,
                CentralTendency::Mean,
                cell.sidedness,
                cell.trials,
                spec.seed,
            )
            .expect("grid cells are valid"),
        };
        cell.factor = factor;
        progress(done + 1, total);
    }

    CorrectionTable::from_records(TABLE_VERSION.to_string(), spec.seed, cells)
}
