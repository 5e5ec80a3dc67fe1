//! Shared scenario builders for the benchmark targets.

use rcr::{
    generate_sample, ContaminationMode, Contaminants, LabeledSample, Scenario, Uncontaminated,
};

/// A two-sided contaminated Gaussian sample of the given size.
pub fn contaminated_sample(n: usize, fraction: f64, seed: u64) -> LabeledSample {
    generate_sample(&Scenario {
        n_points: n,
        fraction,
        core: Uncontaminated::Gaussian { mu: 0.0, sigma: 1.0 },
        contaminants: Contaminants::TwoSided { sigma: 10.0 },
        mode: ContaminationMode::Replace,
        seed,
    })
    .expect("valid scenario")
}

/// The one-sided heavy-contamination demonstration sample.
pub fn one_sided_sample(n: usize, fraction: f64, seed: u64) -> LabeledSample {
    generate_sample(&Scenario {
        n_points: n,
        fraction,
        core: Uncontaminated::Gaussian { mu: 0.0, sigma: 1.0 },
        contaminants: Contaminants::OneSided { sigma: 10.0 },
        mode: ContaminationMode::Replace,
        seed,
    })
    .expect("valid scenario")
}
