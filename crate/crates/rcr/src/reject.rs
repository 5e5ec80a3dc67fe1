//! The single-value rejection pipeline: bulk pre-rejection followed by staged
//! one-at-a-time rejection with increasingly precise technique pairs, ending
//! with the traditional mean + standard deviation stage. A point is rejected
//! when `N P(>|z|) < 0.5` under the current stage's center and corrected
//! scale; mu and sigma are recomputed from the surviving points after every
//! rejection.

use std::fmt;

use crate::calibration::CorrectionTable;
use crate::error::{RcrError, Result};
use crate::special::erfc;
use crate::stats::{
    central_tendency, sigma_for, CentralTendency, Sample, Sidedness, SigmaEstimate,
    SigmaTechnique, SigmaValue,
};

/// Symmetry of the uncontaminated core distribution, as declared by the user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoreShape {
    Symmetric,
    MildlyAsymmetric,
}

/// Sidedness of the contaminant distribution, as declared by the user.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContaminantSidedness {
    TwoSided,
    OneSided,
    InBetween,
}

/// The user's declaration of core shape and contaminant sidedness; this is
/// what selects the technique sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DistributionAssumption {
    pub core: CoreShape,
    pub contaminants: ContaminantSidedness,
}

impl Default for DistributionAssumption {
    fn default() -> Self {
        DistributionAssumption {
            core: CoreShape::Symmetric,
            contaminants: ContaminantSidedness::TwoSided,
        }
    }
}

impl DistributionAssumption {
    pub fn new(core: CoreShape, contaminants: ContaminantSidedness) -> Self {
        DistributionAssumption { core, contaminants }
    }
}

/// One individual-rejection stage: which center, which deviation technique,
/// and whether deviations are split by side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndividualStage {
    pub mu: CentralTendency,
    pub technique: SigmaTechnique,
    pub sidedness: Sidedness,
}

impl fmt::Display for IndividualStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}+{}({}-sided)",
            self.mu.label(),
            self.technique.label(),
            self.sidedness.label()
        )
    }
}

/// The stage sequence for an assumption: a bulk pre-rejection pass, then the
/// best-option robust stage, the most precise robust stage, and finally the
/// traditional mean + standard deviation stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TechniquePlan {
    pub bulk_mu: CentralTendency,
    pub bulk_sidedness: Sidedness,
    pub stages: Vec<IndividualStage>,
    /// Declared-symmetric core: one-sided stages may bound the contaminated
    /// side's rejection scale by the cleaner side's estimate, since under
    /// the declaration both sides share the core scale and contamination can
    /// only inflate it.
    pub symmetric_core: bool,
}

/// Best-option technique selection. Two-sided contaminants pair the median
/// with the broken-line deviation; one-sided contaminants pair the mode with
/// the one-sided percentile deviation; the in-between case pairs the mode
/// with the one-sided broken line. A mildly asymmetric core forces one-sided
/// deviations throughout the robust stages. Every plan ends with the
/// traditional stage.
pub fn select_plan(assumption: DistributionAssumption) -> TechniquePlan {
    let asymmetric_core = assumption.core == CoreShape::MildlyAsymmetric;
    let robust_sides = |base: Sidedness| {
        if asymmetric_core {
            Sidedness::OneSided
        } else {
            base
        }
    };

    let first = match assumption.contaminants {
        ContaminantSidedness::TwoSided => IndividualStage {
            mu: CentralTendency::Median,
            technique: SigmaTechnique::BrokenLine,
            sidedness: robust_sides(Sidedness::TwoSided),
        },
        ContaminantSidedness::OneSided => IndividualStage {
            mu: CentralTendency::Mode,
            technique: SigmaTechnique::Percentile,
            sidedness: Sidedness::OneSided,
        },
        ContaminantSidedness::InBetween => IndividualStage {
            mu: CentralTendency::Mode,
            technique: SigmaTechnique::BrokenLine,
            sidedness: Sidedness::OneSided,
        },
    };
    let second = IndividualStage {
        mu: CentralTendency::Median,
        technique: SigmaTechnique::Percentile,
        sidedness: robust_sides(first.sidedness),
    };
    let last = IndividualStage {
        mu: CentralTendency::Mean,
        technique: SigmaTechnique::StdDev,
        sidedness: Sidedness::TwoSided,
    };

    TechniquePlan {
        bulk_mu: first.mu,
        bulk_sidedness: first.sidedness,
        stages: vec![first, second, last],
        symmetric_core: !asymmetric_core,
    }
}

/// Two-sided Gaussian tail probability of exceeding `z` standard deviations:
/// `erfc(z / sqrt(2))`.
pub fn chauvenet_tail_probability(z: f64) -> f64 {
    erfc(z / std::f64::consts::SQRT_2)
}

/// Chauvenet's criterion: a measurement is outlying when fewer than half an
/// expected point lies that far out, `N P(>|z|) < 0.5` (strict).
pub fn meets_criterion(n: usize, z: f64) -> bool {
    n as f64 * chauvenet_tail_probability(z) < 0.5
}

/// Tail probability used by a stage: the full two-sided tail, or the single
/// tail `erfc(z / sqrt(2)) / 2` when deviations are measured per side. The
/// expected exceedance count on one side is half the two-sided count;
/// without the halving, a purely one-sided contaminant cloud is
/// self-consistent under its own one-sided scale and the rejection cascade
/// never starts.
pub fn sided_tail_probability(z: f64, sidedness: Sidedness) -> f64 {
    let tail = chauvenet_tail_probability(z);
    match sidedness {
        Sidedness::TwoSided => tail,
        Sidedness::OneSided => 0.5 * tail,
    }
}

pub(crate) fn meets_criterion_sided(n: usize, z: f64, sidedness: Sidedness) -> bool {
    n as f64 * sided_tail_probability(z, sidedness) < 0.5
}

/// One iteration record: stage label, kept count, center, corrected scale,
/// and the points rejected by that iteration.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub stage: String,
    pub n: usize,
    pub mu: f64,
    pub sigma: SigmaValue,
    pub rejected: Vec<usize>,
}

/// The outcome of a run: a disjoint kept/rejected partition of the input
/// indices, the final center and corrected scale, and the per-iteration log.
#[derive(Debug, Clone)]
pub struct RejectionResult {
    pub kept: Vec<usize>,
    pub rejected: Vec<usize>,
    pub mu: f64,
    pub sigma: SigmaEstimate,
    pub stage_log: Vec<StageRecord>,
}

/// Configurable runner; `rcr` and `traditional_cr` are the common entry
/// points.
#[derive(Debug, Clone)]
pub struct Rejector<'a> {
    assumption: DistributionAssumption,
    table: &'a CorrectionTable,
    bulk_enabled: bool,
}

impl<'a> Rejector<'a> {
    pub fn new(assumption: DistributionAssumption, table: &'a CorrectionTable) -> Self {
        Rejector {
            assumption,
            table,
            bulk_enabled: true,
        }
    }

    /// Disable the bulk pre-rejection pass (one-at-a-time rejection only).
    pub fn bulk(mut self, enabled: bool) -> Self {
        self.bulk_enabled = enabled;
        self
    }

    pub fn run(&self, sample: &Sample) -> Result<RejectionResult> {
        let plan = select_plan(self.assumption);
        self.run_plan(sample, &plan)
    }

    fn run_plan(&self, sample: &Sample, plan: &TechniquePlan) -> Result<RejectionResult> {
        let mut kept: Vec<usize> = (0..sample.len()).collect();
        let mut rejected: Vec<usize> = Vec::new();
        let mut log: Vec<StageRecord> = Vec::new();
        let mut last_stats: Option<(f64, SigmaEstimate)> = None;

        if self.bulk_enabled {
            self.bulk_stage(sample, plan, &mut kept, &mut rejected, &mut log)?;
        }

        for stage in &plan.stages {
            if kept.is_empty() {
                break;
            }
            if stage.technique == SigmaTechnique::StdDev && kept.len() < 2 {
                continue; // stage needs two points; report the last computable one
            }
            let stats = self.individual_stage(
                sample,
                *stage,
                plan.symmetric_core,
                &mut kept,
                &mut rejected,
                &mut log,
            )?;
            last_stats = Some(stats);
        }

        if kept.is_empty() {
            return Err(RcrError::AllRejected {
                stage_log: log.clone(),
            });
        }
        let (mu, sigma) = match last_stats {
            Some(stats) => stats,
            None => {
                // Every individual stage was skipped (tiny sample); fall back
                // to the first robust stage's statistics without rejection.
                let stage = plan.stages[0];
                self.stage_stats(sample, &kept, stage)?
            }
        };

        kept.sort_unstable();
        rejected.sort_unstable();
        Ok(RejectionResult {
            kept,
            rejected,
            mu,
            sigma,
            stage_log: log,
        })
    }

    fn stage_stats(
        &self,
        sample: &Sample,
        kept: &[usize],
        stage: IndividualStage,
    ) -> Result<(f64, SigmaEstimate)> {
        let sub = sample.subset(kept)?;
        let mu = central_tendency(&sub, stage.mu);
        let raw = sigma_for(&sub, mu, stage.technique, stage.sidedness)?;
        let factor = self
            .table
            .factor(stage.technique, stage.mu, stage.sidedness, kept.len())?;
        Ok((mu, raw.corrected_by(factor)))
    }

    /// Corrected bulk scale: the larger of the percentile and line-fit
    /// estimates (componentwise for one-sided), guarding against
    /// underestimated deviations that would trigger runaway over-rejection.
    fn bulk_sigma(&self, sub: &Sample, mu: f64, plan: &TechniquePlan) -> Result<SigmaValue> {
        let mut components = Vec::with_capacity(2);
        for technique in [SigmaTechnique::Percentile, SigmaTechnique::LineFit] {
            let raw = sigma_for(sub, mu, technique, plan.bulk_sidedness)?;
            let factor =
                self.table
                    .factor(technique, plan.bulk_mu, plan.bulk_sidedness, sub.len())?;
            components.push(raw.corrected_by(factor).value);
        }
        Ok(sigma_value_max(components[0], components[1]))
    }

    fn bulk_stage(
        &self,
        sample: &Sample,
        plan: &TechniquePlan,
        kept: &mut Vec<usize>,
        rejected: &mut Vec<usize>,
        log: &mut Vec<StageRecord>,
    ) -> Result<()> {
        let label = format!(
            "bulk({}, {}-sided)",
            plan.bulk_mu.label(),
            plan.bulk_sidedness.label()
        );
        loop {
            if kept.is_empty() {
                return Ok(());
            }
            let sub = sample.subset(kept)?;
            let mu = central_tendency(&sub, plan.bulk_mu);
            let sigma = self.bulk_sigma(&sub, mu, plan)?;
            let n = kept.len();

            let mut to_reject = Vec::new();
            let mut survivors = Vec::with_capacity(n);
            for &i in kept.iter() {
                let z = z_score(sample.values()[i] - mu, &sigma, plan.symmetric_core);
                if meets_criterion_sided(n, z, plan.bulk_sidedness) {
                    to_reject.push(i);
                } else {
                    survivors.push(i);
                }
            }

            log.push(StageRecord {
                stage: label.clone(),
                n,
                mu,
                sigma,
                rejected: to_reject.clone(),
            });
            if to_reject.is_empty() {
                return Ok(());
            }
            rejected.extend_from_slice(&to_reject);
            *kept = survivors;
        }
    }

    fn individual_stage(
        &self,
        sample: &Sample,
        stage: IndividualStage,
        symmetric_core: bool,
        kept: &mut Vec<usize>,
        rejected: &mut Vec<usize>,
        log: &mut Vec<StageRecord>,
    ) -> Result<(f64, SigmaEstimate)> {
        let label = stage.to_string();
        loop {
            let (mu, sigma) = self.stage_stats(sample, kept, stage)?;
            let n = kept.len();

            // Most discrepant survivor; ties resolve toward the smaller
            // value so results do not depend on input order.
            let mut worst: Option<(f64, f64, usize)> = None; // (z, value, position in kept)
            for (pos, &i) in kept.iter().enumerate() {
                let value = sample.values()[i];
                let z = z_score(value - mu, &sigma.value, symmetric_core);
                let candidate = (z, value, pos);
                let better = match worst {
                    None => true,
                    Some((bz, bv, _)) => z > bz || (z == bz && value < bv),
                };
                if better {
                    worst = Some(candidate);
                }
            }
            let (z, _, pos) = worst.expect("stage runs on nonempty kept set");

            if z.is_finite() && meets_criterion_sided(n, z, stage.sidedness) && n > 1 {
                let index = kept.remove(pos);
                rejected.push(index);
                log.push(StageRecord {
                    stage: label.clone(),
                    n,
                    mu,
                    sigma: sigma.value,
                    rejected: vec![index],
                });
                if kept.is_empty() {
                    return Err(RcrError::AllRejected {
                        stage_log: log.clone(),
                    });
                }
                if stage.technique == SigmaTechnique::StdDev && kept.len() < 2 {
                    return Ok((mu, sigma));
                }
            } else {
                log.push(StageRecord {
                    stage: label.clone(),
                    n,
                    mu,
                    sigma: sigma.value,
                    rejected: Vec::new(),
                });
                return Ok((mu, sigma));
            }
        }
    }
}

fn sigma_value_max(a: SigmaValue, b: SigmaValue) -> SigmaValue {
    match (a, b) {
        (SigmaValue::TwoSided(x), SigmaValue::TwoSided(y)) => SigmaValue::TwoSided(x.max(y)),
        (
            SigmaValue::OneSided {
                below: b1,
                above: a1,
            },
            SigmaValue::OneSided {
                below: b2,
                above: a2,
            },
        ) => SigmaValue::OneSided {
            below: b1.max(b2),
            above: a1.max(a2),
        },
        _ => unreachable!("bulk components share sidedness"),
    }
}

/// Side-aware z. Under a declared-symmetric core the smaller side estimate
/// bounds the rejection scale for both sides (contamination only inflates a
/// side). A zero sigma means the deviation set carries no scatter: such
/// points score zero so the stage halts rather than divide by zero.
fn z_score(delta: f64, sigma: &SigmaValue, symmetric_core: bool) -> f64 {
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

/// Full pipeline: bulk pre-rejection, then each planned individual stage to
/// convergence. Rejection is monotone; no point is reinstated.
pub fn rcr(
    sample: &Sample,
    assumption: DistributionAssumption,
    table: &CorrectionTable,
) -> Result<RejectionResult> {
    Rejector::new(assumption, table).run(sample)
}

/// The bulk pass alone: per iteration, reject every point meeting the
/// criterion under the plan's bulk center and the larger of the corrected
/// percentile and line-fit scales, until an iteration rejects nothing.
pub fn bulk_reject(
    sample: &Sample,
    plan: &TechniquePlan,
    table: &CorrectionTable,
) -> Result<RejectionResult> {
    let rejector = Rejector::new(DistributionAssumption::default(), table);
    let mut kept: Vec<usize> = (0..sample.len()).collect();
    let mut rejected = Vec::new();
    let mut log = Vec::new();
    rejector.bulk_stage(sample, plan, &mut kept, &mut rejected, &mut log)?;
    if kept.is_empty() {
        return Err(RcrError::AllRejected { stage_log: log });
    }
    let last = log.last().expect("bulk logs at least one iteration");
    let (mu, sigma) = (
        last.mu,
        SigmaEstimate {
            technique: SigmaTechnique::Percentile,
            value: last.sigma,
            corrected: true,
        },
    );
    kept.sort_unstable();
    rejected.sort_unstable();
    Ok(RejectionResult {
        kept,
        rejected,
        mu,
        sigma,
        stage_log: log,
    })
}

/// A single individual-rejection stage run to convergence on the whole
/// sample: recompute center and corrected scale, reject the most discrepant
/// point while it meets the criterion.
pub fn individual_reject_stage(
    sample: &Sample,
    stage: IndividualStage,
    table: &CorrectionTable,
) -> Result<RejectionResult> {
    let rejector = Rejector::new(DistributionAssumption::default(), table);
    let mut kept: Vec<usize> = (0..sample.len()).collect();
    let mut rejected = Vec::new();
    let mut log = Vec::new();
    let (mu, sigma) =
        rejector.individual_stage(sample, stage, false, &mut kept, &mut rejected, &mut log)?;
    kept.sort_unstable();
    rejected.sort_unstable();
    Ok(RejectionResult {
        kept,
        rejected,
        mu,
        sigma,
        stage_log: log,
    })
}

/// Traditional Chauvenet rejection: the mean + standard deviation stage
/// alone, with no robust pre-stages and no bulk pass.
pub fn traditional_cr(sample: &Sample, table: &CorrectionTable) -> Result<RejectionResult> {
    let plan = TechniquePlan {
        bulk_mu: CentralTendency::Mean,
        bulk_sidedness: Sidedness::TwoSided,
        stages: vec![IndividualStage {
            mu: CentralTendency::Mean,
            technique: SigmaTechnique::StdDev,
            sidedness: Sidedness::TwoSided,
        }],
        symmetric_core: true,
    };
    Rejector::new(DistributionAssumption::default(), table)
        .bulk(false)
        .run_plan(sample, &plan)
}
