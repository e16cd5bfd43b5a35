use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use eyf_core::analysis::{analyze, YearSeries};
use eyf_core::empirical::{load_incomes, Column, CsvFormat, MergeReport, RejectedRow};
use eyf_core::fitting::{bootstrap_errors_with, fit_with_currency, goodness, resample, FitConfig, Goodness, Weighting};
use eyf_core::synth::{synthesize, SynthSpec};
use eyf_core::{augment_tail, Error, EyfModel, EyfParams, FitResult};
use serde::Serialize;
use serde_json::json;

use crate::manifest::{self, RunManifest};
use crate::{
    AnalyzeArgs, Cli, Command, CsvArgs, EvalArgs, Failure, FitArgs, ReplayArgs, SampleArgs, SynthArgs, EXIT_NUMERIC,
    EXIT_OK,
};

type Outcome = Result<i32, Failure>;

pub(crate) fn dispatch(command: Command, argv: &[OsString]) -> Outcome {
    match command {
        Command::Fit(a) => cmd_fit(a, argv),
        Command::Eval(a) => cmd_eval(a, argv),
        Command::Sample(a) => cmd_sample(a, argv),
        Command::Synth(a) => cmd_synth(a, argv),
        Command::Analyze(a) => cmd_analyze(a, argv),
        Command::Replay(a) => cmd_replay(a),
    }
}

/// Collects output files; nothing touches the disk before `new` is called,
/// which every command does only once its inputs have parsed.
struct Outputs {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Outputs {
    fn new(dir: &Path, manifest: RunManifest) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.into(),
            source: e,
        })?;
        Ok(Self {
            dir: dir.into(),
            manifest,
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.outputs.push(name.into());
        self.dir.join(name)
    }

    fn text(&mut self, name: &str, content: &str) -> Result<(), Failure> {
        let path = self.path(name);
        fs::write(&path, content).map_err(|e| Failure::from(Error::Io { path, source: e }))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut s = serde_json::to_string_pretty(value).map_err(Error::from)?;
        s.push('\n');
        self.text(name, &s)
    }

    fn finish(mut self) -> Result<(), Failure> {
        self.manifest.outputs.push(manifest::FILE_NAME.into());
        let manifest = self.manifest.clone();
        let mut s = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
        s.push('\n');
        let path = self.dir.join(manifest::FILE_NAME);
        fs::write(&path, s).map_err(|e| Failure::from(Error::Io { path, source: e }))
    }
}

fn load_params(path: &Path) -> Result<EyfParams, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    let params: EyfParams = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        message: e.to_string(),
    })?;
    params.validate()?;
    Ok(params)
}

fn csv_format(a: &CsvArgs) -> Result<CsvFormat, Failure> {
    if !a.delimiter.is_ascii() {
        return Err(Failure::usage("delimiter must be a single ASCII character"));
    }
    let income = Column::parse(&a.column);
    let weight = a.weight_column.as_deref().map(Column::parse);
    if a.no_header && (matches!(income, Column::Name(_)) || matches!(weight, Some(Column::Name(_)))) {
        return Err(Failure::usage("--no-header needs numeric column indices"));
    }
    Ok(CsvFormat {
        income,
        weight,
        has_header: !a.no_header,
        delimiter: a.delimiter as u8,
    })
}

#[derive(Serialize)]
struct FitReport<'a> {
    fit: &'a FitResult,
    goodness: &'a Goodness,
    merge: &'a MergeReport,
    survey_records: usize,
    rejected_rows: Vec<RejectedRow>,
    /// Largest income observed in the data (survey and rich list).
    max_income: f64,
}

fn residual_tsv(result: &FitResult) -> String {
    let mut s = String::from("income\tccdf\tresidual\n");
    for r in &result.residuals {
        let _ = writeln!(s, "{}\t{}\t{}", r.income, r.prob, r.residual);
    }
    s
}

fn cmd_fit(a: FitArgs, argv: &[OsString]) -> Outcome {
    let weighting = match a.weighting.as_str() {
        "inverse-variance" => Weighting::InverseVariance,
        "uniform" => Weighting::Uniform,
        other => return Err(Failure::usage(format!("unknown weighting `{other}`"))),
    };
    let format = csv_format(&a.csv)?;
    let survey = load_incomes(&a.input, &format)?;
    for r in &survey.rejected {
        log::warn!("{}:{}: {}", a.input.display(), r.line, r.reason);
    }
    let rich = match &a.rich_list {
        Some(p) => Some(load_incomes(p, &CsvFormat::default())?),
        None => None,
    };
    let population = a.population.unwrap_or_else(|| survey.sample.total_weight());
    let rich_sample = rich.as_ref().map(|r| &r.sample);
    let (ccdf, merge) = augment_tail(&survey.sample, rich_sample, population)?;
    if merge.overlap {
        log::warn!(
            "rich list overlaps the survey; {} survey points removed",
            merge.removed_survey_points
        );
    }

    let config = FitConfig {
        constrain_t1_eq_m1: !a.no_constrain_t1,
        points_per_decade: a.points_per_decade as usize,
        weighting,
        max_iterations: a.max_iterations as usize,
        seed: a.seed,
        starts: a.starts as usize,
        ..Default::default()
    };
    let mut result = fit_with_currency(&ccdf, &config, &a.currency)?;
    if a.bootstrap > 0 {
        let summary = bootstrap_errors_with(&survey.sample, &config, a.bootstrap as usize, a.seed, resample, |s| {
            augment_tail(s, rich_sample, population).map(|c| c.0)
        })?;
        if summary.failed > 0 {
            log::warn!("{} of {} bootstrap replicates failed", summary.failed, a.bootstrap);
        }
        result.errors = Some(summary.errors);
    }
    let good = goodness(&result, &ccdf, config.quad_tol)?;
    let max_income = survey.sample.max().max(rich_sample.map(|r| r.max()).unwrap_or(0.0));

    let mut inputs: Vec<&Path> = vec![&a.input];
    if let Some(p) = &a.rich_list {
        inputs.push(p);
    }
    let manifest = RunManifest::new(
        argv,
        &inputs,
        json!({
            "fit": config,
            "population": population,
            "bootstrap": a.bootstrap,
            "currency": a.currency,
            "csv": format,
        }),
        Some(a.seed),
    );
    let mut out = Outputs::new(&a.out.out, manifest)?;
    out.json("params.json", &result.params)?;
    out.json(
        "fit.json",
        &FitReport {
            fit: &result,
            goodness: &good,
            merge: &merge,
            survey_records: survey.sample.len(),
            rejected_rows: survey.rejected.clone(),
            max_income,
        },
    )?;
    out.text("residuals.tsv", &residual_tsv(&result))?;
    let path = out.path("empirical_ccdf.tsv");
    ccdf.write_tsv(&path)?;
    out.finish()?;

    for w in &result.warnings {
        log::warn!("{w}");
    }
    println!("{}", serde_json::to_string(&result.params).map_err(Error::from)?);
    Ok(if result.converged { EXIT_OK } else { EXIT_NUMERIC })
}

fn cmd_eval(a: EvalArgs, argv: &[OsString]) -> Outcome {
    let params = load_params(&a.params)?;
    if !(a.min > 0.0 && a.max.is_finite() && a.min <= a.max) {
        return Err(Failure::usage("grid bounds need 0 < min <= max"));
    }
    if a.points == 0 || (a.points == 1 && a.min != a.max) || (a.points > 1 && a.min == a.max) {
        return Err(Failure::usage("a grid of more than one point needs min < max"));
    }
    let model = EyfModel::new(params)?;
    let mut tsv = String::from("m\tpdf\tccdf\n");
    let span = (a.max / a.min).ln();
    for i in 0..a.points {
        let m = if i == 0 {
            a.min
        } else if i + 1 == a.points {
            a.max
        } else {
            a.min * (span * i as f64 / (a.points - 1) as f64).exp()
        };
        let _ = writeln!(tsv, "{m}\t{}\t{}", model.pdf(m)?, model.ccdf(m)?);
    }
    let manifest = RunManifest::new(
        argv,
        &[&a.params],
        json!({ "min": a.min, "max": a.max, "points": a.points }),
        None,
    );
    let mut out = Outputs::new(&a.out.out, manifest)?;
    out.text("curve.tsv", &tsv)?;
    out.finish()?;
    Ok(EXIT_OK)
}

fn cmd_sample(a: SampleArgs, argv: &[OsString]) -> Outcome {
    let params = load_params(&a.params)?;
    let model = EyfModel::new(params)?;
    let sample = model.sample(a.n as usize, a.seed)?;
    let manifest = RunManifest::new(argv, &[&a.params], json!({ "n": a.n }), Some(a.seed));
    let mut out = Outputs::new(&a.out.out, manifest)?;
    let path = out.path("sample.csv");
    sample.write_csv(&path)?;
    out.finish()?;
    Ok(EXIT_OK)
}

fn cmd_synth(a: SynthArgs, argv: &[OsString]) -> Outcome {
    let params = load_params(&a.params)?;
    let model = EyfModel::new(params)?;
    let spec = SynthSpec {
        n: a.n as usize,
        population: a.population,
        rich_k: a.rich_k as usize,
        seed: a.seed,
    };
    let data = synthesize(&model, &spec)?;
    let summary = json!({
        "population": a.population,
        "n": a.n,
        "rich_k": a.rich_k,
    });
    let manifest = RunManifest::new(argv, &[&a.params], summary.clone(), Some(a.seed));
    let mut out = Outputs::new(&a.out.out, manifest)?;
    let path = out.path("survey.csv");
    data.survey.write_csv(&path)?;
    if let Some(rich) = &data.rich_list {
        let path = out.path("rich_list.csv");
        rich.write_csv(&path)?;
    }
    out.json("synth.json", &summary)?;
    out.finish()?;
    Ok(EXIT_OK)
}

fn cmd_analyze(a: AnalyzeArgs, argv: &[OsString]) -> Outcome {
    if !(a.threshold_warning >= 0.0 && a.threshold_crisis >= 0.0) {
        return Err(Failure::usage("thresholds must be non-negative"));
    }
    let mut series = Vec::new();
    for p in &a.input {
        series.extend(YearSeries::load(p)?);
    }
    let report = analyze(&series, a.threshold_warning, a.threshold_crisis)?;
    let inputs: Vec<&Path> = a.input.iter().map(PathBuf::as_path).collect();
    let manifest = RunManifest::new(
        argv,
        &inputs,
        json!({
            "threshold_warning": a.threshold_warning,
            "threshold_crisis": a.threshold_crisis,
        }),
        None,
    );
    let table = report.to_table();
    let mut out = Outputs::new(&a.out.out, manifest)?;
    out.json("report.json", &report)?;
    out.text("report.txt", &table)?;
    out.finish()?;
    print!("{table}");
    Ok(EXIT_OK)
}

fn cmd_replay(a: ReplayArgs) -> Outcome {
    let m = RunManifest::load(&a.manifest)?;
    if m.command == "replay" || m.args.is_empty() {
        return Err(Failure::usage("manifest does not describe a replayable command"));
    }
    if m.version != env!("CARGO_PKG_VERSION") {
        log::warn!(
            "manifest written by version {}, replaying with {}",
            m.version,
            env!("CARGO_PKG_VERSION")
        );
    }
    let mut argv: Vec<OsString> = vec!["eyf".into()];
    argv.extend(m.args.iter().map(OsString::from));
    argv.push("--out".into());
    argv.push(a.out.out.into_os_string());
    let cli = <Cli as clap::Parser>::try_parse_from(&argv)
        .map_err(|e| Failure::usage(format!("manifest arguments do not parse: {e}")))?;
    dispatch(cli.command, &argv)
}
