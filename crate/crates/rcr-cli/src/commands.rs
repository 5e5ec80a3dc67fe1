//! Implementations of the four subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rcr::{
    build_deviation_set, calibrate_correction_factor, dof_adjusted_factor, generate_sample,
    model_by_name, presets, rcr as run_rcr, CentralTendency, ContaminationMode, Contaminants,
    CorrectionTable, FunctionalRcr, Scenario, Sidedness, SigmaTechnique, TableSpec,
    Uncontaminated,
};

use crate::data::{emit, read_dataset, read_sample, sidecar, write_atomic};
use crate::report::{
    render, EnsembleSummary, FitOutcome, FitStageJson, RejectOutcome, Report, SigmaJson,
    StageJson, TableMeta, SCHEMA,
};
use crate::{
    CalibrateArgs, CliError, FitArgs, ModeArg, MuArg, PresetArg, RejectArgs, SidednessArg,
    SimulateArgs, TechniqueArg,
};

fn load_table(path: Option<&PathBuf>) -> Result<(CorrectionTable, String), CliError> {
    match path {
        Some(p) => Ok((
            CorrectionTable::load(p).map_err(CliError::from)?,
            p.display().to_string(),
        )),
        None => Ok((CorrectionTable::builtin().clone(), "builtin".to_string())),
    }
}

pub fn reject(args: RejectArgs) -> Result<(), CliError> {
    let csv = read_sample(&args.input)?;
    let assumption = args.assumption.resolve()?;
    let (core_label, contaminant_label) = args.assumption.labels()?;
    let (table, table_source) = load_table(args.correction_table.as_ref())?;

    let result = run_rcr(&csv.sample, assumption, &table)?;

    let config = serde_json::json!({
        "input": args.input.display().to_string(),
        "uncontaminated": core_label,
        "contaminants": contaminant_label,
        "weighted": csv.had_weights,
        "error_bars": csv.had_error_bars,
        "correction_table": table_source,
    });
    let outcome = RejectOutcome {
        n: csv.sample.len(),
        mu: result.mu,
        sigma: SigmaJson::from_estimate(&result.sigma),
        kept: result.kept.clone(),
        rejected: result.rejected.clone(),
        stage_log: result
            .stage_log
            .iter()
            .map(|r| StageJson {
                stage: r.stage.clone(),
                n: r.n,
                mu: r.mu,
                sigma: SigmaJson::from_value(&r.sigma),
                rejected: r.rejected.clone(),
            })
            .collect(),
    };
    let report = Report {
        schema: SCHEMA,
        command: "reject",
        seed: args.seed,
        config,
        correction_table: TableMeta::from_table(&table),
        result: outcome,
    };
    emit(args.out.as_deref(), &render(&report))?;

    if let Some(out) = &args.out {
        write_kept_sidecar(out, &csv, &result.kept)?;
        write_deviation_sidecar(out, &csv, &result)?;
    }
    Ok(())
}

fn write_kept_sidecar(
    out: &Path,
    csv: &crate::data::SampleCsv,
    kept: &[usize],
) -> Result<(), CliError> {
    let mut text = String::from(if csv.had_weights || csv.had_error_bars {
        "index,y,w\n"
    } else {
        "index,y\n"
    });
    for &i in kept {
        if csv.had_weights || csv.had_error_bars {
            let _ = writeln!(
                text,
                "{},{},{}",
                i,
                csv.sample.values()[i],
                csv.sample.weight(i)
            );
        } else {
            let _ = writeln!(text, "{},{}", i, csv.sample.values()[i]);
        }
    }
    write_atomic(&sidecar(out, "kept"), &text)
}

fn write_deviation_sidecar(
    out: &Path,
    csv: &crate::data::SampleCsv,
    result: &rcr::RejectionResult,
) -> Result<(), CliError> {
    let sub = csv.sample.subset(&result.kept).map_err(CliError::from)?;
    let devset = build_deviation_set(&sub, result.mu);
    let mut text = String::from("abscissa,deviation\n");
    for (a, d) in devset.abscissae().iter().zip(devset.deviations()) {
        let _ = writeln!(text, "{a},{d}");
    }
    write_atomic(&sidecar(out, "deviations"), &text)
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    // Argument validation precedes data loading: an unknown model name is an
    // argument error even when the input file is also bad.
    let mut model = model_by_name(&args.model).map_err(CliError::from)?;
    let assumption = args.assumption.resolve()?;
    let (core_label, contaminant_label) = args.assumption.labels()?;
    let data = read_dataset(&args.input)?;
    let (table, table_source) = load_table(args.correction_table.as_ref())?;
    let pivot = match args.pivot {
        Some(p) => vec![p],
        None => rcr::compute_pivot(&data),
    };
    model.set_pivot(&pivot);

    let result = FunctionalRcr::new(assumption, &table)
        .seed(args.seed)
        .run(model.as_ref(), &data)?;

    let config = serde_json::json!({
        "input": args.input.display().to_string(),
        "model": args.model,
        "pivot": pivot,
        "uncontaminated": core_label,
        "contaminants": contaminant_label,
        "correction_table": table_source,
    });
    let outcome = FitOutcome {
        model: args.model.clone(),
        n: data.len(),
        theta: result.theta_best.clone(),
        pivot: Some(pivot),
        sigma: SigmaJson::from_estimate(&result.final_sigma),
        kept: result.kept.clone(),
        rejected: result.rejected.clone(),
        ensemble: EnsembleSummary {
            size: result.initial_ensemble.solutions.len(),
            exhaustive: result.initial_ensemble.exhaustive,
            degenerate_dropped: result.initial_ensemble.degenerate_dropped,
        },
        stage_log: result
            .stage_log
            .iter()
            .map(|r| FitStageJson {
                stage: r.stage.clone(),
                n: r.n,
                theta: r.theta.clone(),
                sigma: SigmaJson::from_value(&r.sigma),
                rejected: r.rejected.clone(),
            })
            .collect(),
    };
    let report = Report {
        schema: SCHEMA,
        command: "fit",
        seed: args.seed,
        config,
        correction_table: TableMeta::from_table(&table),
        result: outcome,
    };
    emit(args.out.as_deref(), &render(&report))?;

    if let Some(out) = &args.out {
        let m = result
            .initial_ensemble
            .solutions
            .first()
            .map_or(0, |s| s.theta.len());
        let mut header = String::new();
        for j in 0..m {
            let _ = write!(header, "theta{j},");
        }
        for j in 0..m {
            let _ = write!(header, "w{j}{}", if j + 1 < m { "," } else { "\n" });
        }
        let mut text = header;
        for s in &result.initial_ensemble.solutions {
            for v in &s.theta {
                let _ = write!(text, "{v},");
            }
            for (j, w) in s.weight_theta.iter().enumerate() {
                let _ = write!(text, "{w}{}", if j + 1 < m { "," } else { "\n" });
            }
        }
        write_atomic(&sidecar(out, "ensemble"), &text)?;
    }
    Ok(())
}

impl TechniqueArg {
    fn to_technique(self) -> SigmaTechnique {
        match self {
            TechniqueArg::Stddev => SigmaTechnique::StdDev,
            TechniqueArg::Percentile => SigmaTechnique::Percentile,
            TechniqueArg::Linefit => SigmaTechnique::LineFit,
            TechniqueArg::Brokenline => SigmaTechnique::BrokenLine,
        }
    }
}

pub fn calibrate(args: CalibrateArgs) -> Result<(), CliError> {
    match (args.technique, args.n) {
        (Some(technique), Some(n)) => calibrate_single_cell(&args, technique, n as usize),
        (None, None) => calibrate_full_table(&args),
        _ => Err(CliError::argument(
            "single-cell calibration needs both --technique and --n",
        )),
    }
}

fn calibrate_single_cell(
    args: &CalibrateArgs,
    technique: TechniqueArg,
    n: usize,
) -> Result<(), CliError> {
    let technique = technique.to_technique();
    let mu = match args.mu {
        Some(MuArg::Mean) => CentralTendency::Mean,
        Some(MuArg::Median) => CentralTendency::Median,
        Some(MuArg::Mode) => CentralTendency::Mode,
        None if technique == SigmaTechnique::StdDev => CentralTendency::Mean,
        None => CentralTendency::Median,
    };
    let sidedness = match args.sidedness {
        SidednessArg::Two => Sidedness::TwoSided,
        SidednessArg::One => Sidedness::OneSided,
    };
    let trials = args
        .trials
        .unwrap_or_else(|| (4_000_000 / n as u64).clamp(1000, 50_000));
    let m = args.m as usize;

    let factor = if m > 1 {
        dof_adjusted_factor(n, m, technique, mu, sidedness, trials, args.seed)?
    } else {
        calibrate_correction_factor(n, technique, mu, sidedness, trials, args.seed)?
    };

    println!(
        "technique={} mu={} sidedness={} m={} n={} trials={} factor={:.6}",
        technique.label(),
        mu.label(),
        sidedness.label(),
        m,
        n,
        trials,
        factor
    );

    if let Some(out) = &args.out {
        let mut text = String::new();
        let _ = writeln!(text, "# rcr-correction-table/1");
        let _ = writeln!(text, "# seed={}", args.seed);
        let _ = writeln!(text, "# columns: technique mu sidedness m n trials factor");
        let mu_token = if m > 1 { "fit" } else { mu.label() };
        let _ = writeln!(
            text,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.12e}",
            technique.label(),
            mu_token,
            sidedness.label(),
            m,
            n,
            trials,
            factor
        );
        write_atomic(out, &text)?;
        eprintln!("wrote {}", out.display());
    }
    Ok(())
}

fn calibrate_full_table(args: &CalibrateArgs) -> Result<(), CliError> {
    let out = args.out.as_ref().ok_or_else(|| {
        CliError::argument("full-table calibration needs --out (or pass --technique/--n for one cell)")
    })?;
    let mut spec = TableSpec {
        seed: args.seed,
        ..TableSpec::default()
    };
    if let Some(budget) = args.trials {
        spec.one_d_budget = budget;
        spec.dof_budget = budget.div_ceil(3);
    }

    eprintln!(
        "calibrating correction table (seed {}, per-cell budget {}); this takes a few minutes",
        spec.seed, spec.one_d_budget
    );
    let mut last_percent = 0;
    let table = rcr::calibration::generate_table(&spec, |done, total| {
        let percent = done * 100 / total;
        if percent >= last_percent + 5 || done == total {
            eprintln!("  {done}/{total} cells ({percent}%)");
            last_percent = percent;
        }
    });
    table.save(out).map_err(CliError::from)?;

    let stddev_large = table.factor(
        SigmaTechnique::StdDev,
        CentralTendency::Mean,
        Sidedness::TwoSided,
        100_000,
    )?;
    let percentile_small = table.factor(
        SigmaTechnique::Percentile,
        CentralTendency::Median,
        Sidedness::TwoSided,
        2,
    )?;
    println!(
        "wrote {} ({} cells); stddev factor at n=1e5: {:.4}, percentile factor at n=2: {:.4}",
        out.display(),
        table.len(),
        stddev_large,
        percentile_small
    );
    Ok(())
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    match args.preset {
        Some(PresetArg::Fig4) => {
            let fraction = args.f.unwrap_or(0.5);
            let (data, labels) =
                presets::fig4(args.seed, fraction).map_err(CliError::from)?;
            let mut text = String::from("x,y,label\n");
            for (point, &label) in data.points().iter().zip(&labels) {
                let _ = writeln!(text, "{},{},{}", point.x[0], point.y, label as u8);
            }
            emit(args.out.as_deref(), &text)
        }
        Some(PresetArg::Fig3) => {
            let mut scenario = presets::fig3(args.seed);
            if let Some(f) = args.f {
                scenario.fraction = f;
            }
            write_scenario_csv(&scenario, args.out.as_deref())
        }
        None => {
            let core = match args.uncontaminated.as_str() {
                "gaussian" => Uncontaminated::Gaussian { mu: 0.0, sigma: 1.0 },
                "peaked" => Uncontaminated::Peaked,
                "flat-topped" => Uncontaminated::FlatTopped,
                "mildly-asymmetric" => Uncontaminated::MildlyAsymmetric,
                other => {
                    return Err(CliError::argument(format!(
                        "unknown uncontaminated shape '{other}'"
                    )))
                }
            };
            let contaminants = match args.contaminants {
                crate::ContaminantsArg::TwoSided => Contaminants::TwoSided { sigma: args.sigma2 },
                crate::ContaminantsArg::OneSided => Contaminants::OneSided { sigma: args.sigma2 },
                crate::ContaminantsArg::InBetween => Contaminants::InBetween {
                    sigma: args.sigma2,
                    mix: args.mix,
                },
            };
            let scenario = Scenario {
                n_points: args.n as usize,
                fraction: args.f.unwrap_or(0.5),
                core,
                contaminants,
                mode: match args.mode {
                    ModeArg::Replace => ContaminationMode::Replace,
                    ModeArg::Add => ContaminationMode::Add,
                },
                seed: args.seed,
            };
            write_scenario_csv(&scenario, args.out.as_deref())
        }
    }
}

fn write_scenario_csv(scenario: &Scenario, out: Option<&Path>) -> Result<(), CliError> {
    let labeled = generate_sample(scenario).map_err(CliError::from)?;
    let mut text = String::from("y,label\n");
    for (value, &label) in labeled
        .sample
        .values()
        .iter()
        .zip(&labeled.contaminant)
    {
        let _ = writeln!(text, "{},{}", value, label as u8);
    }
    emit(out, &text)
}
