//! Robust Chauvenet Rejection (RCR): outlier rejection for heavily
//! contaminated one-dimensional samples, and its generalization to
//! M-parameter model fitting.
//!
//! Chauvenet's criterion rejects a measurement when `N P(>|z|) < 0.5`, i.e.
//! when fewer than half an expected point lies that many standard deviations
//! out in a Gaussian sample of size `N`. Applied with the mean and standard
//! deviation it breaks down quickly as contamination grows, because both
//! statistics are dragged by the very outliers under test. RCR instead runs
//! the criterion in stages: first with robust estimators (median or
//! half-sample mode paired with the 68.3-percentile deviation), then with the
//! traditional mean and standard deviation once the heavy contamination is
//! gone, keeping both the accuracy of the robust statistics and the precision
//! of the traditional ones. A bulk pre-rejection pass makes large samples
//! cheap, and Monte Carlo calibrated correction factors keep every deviation
//! estimate unbiased at small `N`.
//!
//! The same machinery fits models: every combination of M points pins down a
//! candidate parameter vector, and the weighted median/mode of that solution
//! ensemble replace the one-dimensional median/mode while residuals from the
//! fitted curve replace deviations.
//!
//! ```
//! use rcr::{rcr, CorrectionTable, DistributionAssumption, Sample};
//!
//! let mut values = vec![0.1, -0.3, 0.2, 0.0, -0.1, 0.25, -0.15, 0.05];
//! values.push(50.0); // contaminant
//! let sample = Sample::unweighted(values).unwrap();
//! let table = CorrectionTable::builtin();
//! let result = rcr(&sample, DistributionAssumption::default(), table).unwrap();
//! assert!(result.rejected.contains(&8));
//! ```

mod error;
mod linalg;
pub mod special;

pub mod calibration;
pub mod fitting;
pub mod models;
pub mod reject;
pub mod stats;

pub use error::{RcrError, Result};

pub use stats::{
    build_deviation_set, central_tendency, one_sided_sigmas, sigma_broken_line, sigma_for,
    sigma_line_fit, sigma_percentile, std_deviation, CentralTendency, DeviationSet, Sample,
    Sidedness, SigmaEstimate, SigmaTechnique, SigmaValue,
};

pub use calibration::{
    calibrate_correction_factor, dof_adjusted_factor, generate_sample, presets, CorrectionTable,
    ContaminationMode, Contaminants, LabeledSample, Scenario, TableSpec, Uncontaminated,
};

pub use reject::{
    bulk_reject, chauvenet_tail_probability, individual_reject_stage, meets_criterion, rcr,
    select_plan, sided_tail_probability, traditional_cr, ContaminantSidedness, CoreShape,
    DistributionAssumption, IndividualStage, RejectionResult, Rejector, StageRecord,
    TechniquePlan,
};

pub use fitting::{
    chi_squared, compute_pivot, ensemble_central_tendency, enumerate_solutions, functional_rcr,
    gauss_newton_fit, parameter_uncertainties, DataPoint, DataSet, EnsembleStatistic,
    FitResult, FitStageRecord, FunctionalRcr, ParameterEnsemble, ParameterSolution,
    ENSEMBLE_BUDGET,
};

pub use models::{
    canonicalize_sinusoid, model_by_name, ExponentialModel, LinearModel, Model, PowerLawModel,
    QuadraticModel, SinusoidModel,
};
