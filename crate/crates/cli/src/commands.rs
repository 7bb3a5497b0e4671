use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use railsched_core::analysis::{
    decode, decode_samples, fit_scaling, passing_histogram, spectrum_summary, FitModel, Histogram, ScalingFit,
    SolutionReport, SpectrumSummary, ViolationKind,
};
use railsched_core::factory::{make_appendix_instance, make_family_instance, FamilySpec};
use railsched_core::hybrid::{run_hybrid, HybridConfig, SamplerChoice};
use railsched_core::ilp::solve_instance;
use railsched_core::ising::to_ising;
use railsched_core::qubo::{assemble, PenaltyConfig, Qubo};
use railsched_core::samplers::{
    enumerate_spectrum, noise_lambda, qaoa_optimize_and_sample, simulated_anneal, two_qubit_gate_count, AnnealConfig,
    QaoaConfig, SampleSet,
};
use railsched_core::textfmt::fmt_g12;
use railsched_core::{compute_time_windows, validate_instance, DisturbanceModel, Instance, Station};

use crate::artifacts::{sidecar, Session};
use crate::{
    AnalyzeArgs, Backend, Cli, Command, FitChoice, GenerateArgs, HybridArgs, IlpSolveArgs, PenaltyArgs,
    QuboArgs, ReportArgs, SamplerArgs, SolveArgs, SpectrumArgs, UsageError,
};

pub fn run(cli: &Cli) -> Result<()> {
    let mut session = Session::new(cli.seed, cli.threads);
    match &cli.command {
        Command::Generate(a) => generate(a, cli.seed, &mut session)?,
        Command::Qubo(a) => qubo(a, &mut session)?,
        Command::IlpSolve(a) => ilp_solve(a, &mut session)?,
        Command::Solve(a) => solve(a, cli.seed, &mut session)?,
        Command::Spectrum(a) => spectrum(a, &mut session)?,
        Command::Analyze(a) => analyze(a, &mut session)?,
        Command::Hybrid(a) => hybrid(a, cli.seed, &mut session)?,
        Command::Report(a) => report(a, &mut session)?,
    }
    session.finish()
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn read_instance(session: &mut Session, path: Option<&Path>) -> Result<Instance> {
    let instance = Instance::from_json(&session.read(path)?).context("parsing instance document")?;
    let problems = validate_instance(&instance);
    if let Some(first) = problems.first() {
        return Err(railsched_core::Error::Config(format!(
            "invalid instance ({} problem(s)); first: {}",
            problems.len(),
            first.message
        ))
        .into());
    }
    Ok(instance)
}

fn compile(instance: &Instance, penalties: &PenaltyConfig) -> Result<Qubo> {
    let windows = compute_time_windows(instance)?;
    Ok(assemble(instance, &windows, penalties)?)
}

/// A QUBO file plus its catalog, from `--catalog` or the `.catalog` sidecar.
fn read_qubo(session: &mut Session, path: &Path, catalog: Option<&Path>) -> Result<Qubo> {
    let text = session.read(Some(path))?;
    let catalog = match catalog {
        Some(c) => Some(session.read(Some(c))?),
        None => session.read_optional(&sidecar(path, "catalog"))?,
    };
    let qubo = Qubo::from_text(&text, catalog.as_deref()).with_context(|| format!("parsing {}", path.display()))?;
    Ok(qubo)
}

fn require_catalog(qubo: &Qubo, path: &Path) -> Result<()> {
    if qubo.n > 0 && qubo.catalog.is_empty() {
        return Err(UsageError(format!(
            "{} has no catalog; pass --catalog or keep the `.catalog` sidecar next to it",
            path.display()
        ))
        .into());
    }
    Ok(())
}

fn generate(a: &GenerateArgs, seed: u64, session: &mut Session) -> Result<()> {
    let instance = if a.appendix {
        make_appendix_instance()
    } else {
        let trains = a.trains.ok_or_else(|| UsageError("--trains is required without --appendix".into()))?;
        make_family_instance(&FamilySpec::new(trains, a.dmax, a.disturbed, seed))?
    };
    session.write(a.out.as_deref(), &instance.to_json()?)
}

fn qubo(a: &QuboArgs, session: &mut Session) -> Result<()> {
    let instance = read_instance(session, a.input.as_deref())?;
    let q = compile(&instance, &a.penalties.config()?)?;
    session.write(a.out.as_deref(), &q.to_text())?;
    if let Some(out) = a.out.as_deref().filter(|p| p.as_os_str() != "-") {
        session.write(Some(&sidecar(out, "catalog")), &q.catalog.to_text())?;
    }
    let c = q.counts;
    eprintln!(
        "{} variables; constraint elements: one-hot {}, passing {}, headway {}, rolling stock {} (total {})",
        q.n,
        c.one_hot,
        c.passing,
        c.headway,
        c.rolling_stock,
        c.one_hot + c.passing + c.headway + c.rolling_stock
    );
    Ok(())
}

fn ilp_solve(a: &IlpSolveArgs, session: &mut Session) -> Result<()> {
    let instance = read_instance(session, a.input.as_deref())?;
    let solution = solve_instance(&instance)?;
    if !solution.is_optimal() {
        return Err(railsched_core::Error::Infeasible("no timetable satisfies every constraint".into()).into());
    }
    let q = compile(&instance, &PenaltyConfig::split())?;
    let report = decode(&q, &q.catalog.encode(&solution.times)?)?;
    session.write(a.out.as_deref(), &json(&report)?)
}

fn sampler_choice(a: &SamplerArgs, seed: u64, qubo: Option<&Qubo>) -> Result<SamplerChoice> {
    Ok(match a.backend {
        Backend::Enumerate => SamplerChoice::Enumerate,
        Backend::Anneal => SamplerChoice::Anneal(AnnealConfig {
            shots: a.shots.unwrap_or(1000),
            sweeps: a.sweeps,
            beta_range: a.beta_min.zip(a.beta_max),
            seed,
        }),
        Backend::Qaoa => {
            let noise = match a.noise_lambda.as_str() {
                "auto" => {
                    let q = qubo.ok_or_else(|| UsageError("--noise-lambda auto needs a QUBO to count gates".into()))?;
                    noise_lambda(two_qubit_gate_count(&to_ising(q), a.layers))
                }
                v => v
                    .parse()
                    .map_err(|_| UsageError(format!("--noise-lambda expects a number or `auto`, got `{v}`")))?,
            };
            SamplerChoice::Qaoa(QaoaConfig {
                layers: a.layers,
                shots: a.shots.unwrap_or(1024),
                max_evaluations: a.max_evals,
                noise_lambda: noise,
                seed,
            })
        }
    })
}

fn solve(a: &SolveArgs, seed: u64, session: &mut Session) -> Result<()> {
    let text = session.read(a.input.as_deref())?;
    let q = Qubo::from_text(&text, None).context("parsing QUBO")?;
    let samples = match sampler_choice(&a.sampler, seed, Some(&q))? {
        SamplerChoice::Enumerate => {
            let spectrum = enumerate_spectrum(&q, a.sampler.cap)?;
            let reads = spectrum.states.iter().map(|s| (spectrum.bits(s), s.energy));
            SampleSet::from_reads(q.n, reads, BTreeMap::from([("backend".into(), "enumerate".into())]))
        }
        SamplerChoice::Anneal(cfg) => simulated_anneal(&to_ising(&q), &cfg)?,
        SamplerChoice::Qaoa(cfg) => {
            let outcome = qaoa_optimize_and_sample(&to_ising(&q), &cfg)?;
            if outcome.warning {
                eprintln!("warning: angle optimiser stopped on its evaluation budget");
            }
            outcome.samples
        }
    };
    if let Some(best) = samples.best() {
        eprintln!("best energy {}", fmt_g12(best.energy));
    }
    session.write(a.out.as_deref(), &samples.to_csv())
}

fn spectrum(a: &SpectrumArgs, session: &mut Session) -> Result<()> {
    if a.bin_width.is_nan() || a.bin_width <= 0.0 {
        return Err(UsageError("--bin-width must be positive".into()).into());
    }
    let instance = read_instance(session, a.input.as_deref())?;
    let q = compile(&instance, &a.penalties.config()?)?;
    let spectrum = enumerate_spectrum(&q, a.cap)?;
    let summary = spectrum_summary(&spectrum, &q, a.bin_width)?;
    session.write(a.out.as_deref(), &json(&summary)?)?;
    if let Some(path) = &a.states_out {
        let reads = spectrum.states.iter().map(|s| (spectrum.bits(s), s.energy));
        let set = SampleSet::from_reads(q.n, reads, BTreeMap::from([("backend".into(), "enumerate".into())]));
        session.write(Some(path), &set.to_csv())?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct AnalysisDocument {
    shots: u64,
    distinct: usize,
    relaxed: bool,
    feasible_strict_fraction: f64,
    feasible_relaxed_fraction: f64,
    violation_counts: BTreeMap<ViolationKind, u64>,
    best_energy: Option<f64>,
    best_objective: Option<f64>,
    /// Lowest-energy sample accepted in the selected mode, else the lowest-energy sample.
    best: Option<SolutionReport>,
    edge: Option<String>,
    histogram_total: Option<u64>,
    histogram_mode: Option<i64>,
}

fn parse_edge(text: &str) -> Result<(Station, Station)> {
    let (from, to) = text
        .split_once(':')
        .ok_or_else(|| UsageError(format!("--edge expects FROM:TO, got `{text}`")))?;
    Ok((Station::new(from), Station::new(to)))
}

fn analyze(a: &AnalyzeArgs, session: &mut Session) -> Result<()> {
    let q = read_qubo(session, &a.qubo, a.catalog.as_deref())?;
    require_catalog(&q, &a.qubo)?;
    let samples = SampleSet::from_csv(&session.read(a.input.as_deref())?).context("parsing sample file")?;
    if samples.n != q.n && !samples.is_empty() {
        return Err(railsched_core::Error::Parameter(format!(
            "sample width {} does not match the QUBO's {} variables",
            samples.n, q.n
        ))
        .into());
    }
    let reports = decode_samples(&q, &samples)?;
    let shots = samples.shots();
    let share = |f: &dyn Fn(&SolutionReport) -> bool| -> f64 {
        if shots == 0 {
            return 0.0;
        }
        reports.iter().filter(|(r, _)| f(r)).map(|(_, c)| c).sum::<u64>() as f64 / shots as f64
    };
    let accept = |r: &SolutionReport| if a.relaxed { r.feasible_relaxed } else { r.feasible_strict };
    let mut violation_counts = BTreeMap::new();
    for (r, c) in &reports {
        let kinds: BTreeSet<ViolationKind> = r.violations.iter().map(|v| v.kind).collect();
        for k in kinds {
            *violation_counts.entry(k).or_insert(0) += c;
        }
    }
    let best_idx = reports
        .iter()
        .position(|(r, _)| accept(r))
        .or((!reports.is_empty()).then_some(0));
    let best_objective = reports
        .iter()
        .filter(|(r, _)| accept(r))
        .filter_map(|(r, _)| r.objective)
        .min_by(f64::total_cmp);

    let mut doc = AnalysisDocument {
        shots,
        distinct: samples.samples.len(),
        relaxed: a.relaxed,
        feasible_strict_fraction: share(&|r| r.feasible_strict),
        feasible_relaxed_fraction: share(&|r| r.feasible_relaxed),
        violation_counts,
        best_energy: best_idx.map(|i| samples.samples[i].energy),
        best_objective,
        best: best_idx.map(|i| reports[i].0.clone()),
        edge: a.edge.clone(),
        histogram_total: None,
        histogram_mode: None,
    };
    if let Some(edge) = &a.edge {
        let edge = parse_edge(edge)?;
        let hist = passing_histogram(&reports, &edge, a.relaxed);
        if hist.warning {
            eprintln!("warning: no accepted sample defines a passing time on this edge");
        }
        doc.histogram_total = Some(hist.total());
        doc.histogram_mode = hist.mode();
        if let Some(path) = &a.histogram_out {
            session.write(Some(path), &hist.to_csv())?;
        }
    }
    session.write(a.out.as_deref(), &json(&doc)?)
}

fn hybrid(a: &HybridArgs, seed: u64, session: &mut Session) -> Result<()> {
    let instance = read_instance(session, a.input.as_deref())?;
    let penalties = PenaltyArgs {
        penalties: a.penalties,
        p_sum: a.p_sum,
        p_pair: a.p_pair,
    }
    .config()?;
    let zone: BTreeSet<Station> = a.zone.iter().map(Station::new).collect();
    let disturbance = if a.disturbance.is_empty() {
        None
    } else {
        Some(DisturbanceModel::uniform(a.disturbance.clone())?)
    };
    let config = HybridConfig {
        sampler: sampler_choice(&a.sampler, seed, None)?,
        iterations: a.iterations,
        representatives: a.representatives,
        penalties,
        disturbance,
        tv_threshold: a.tv_threshold,
    };
    let result = run_hybrid(&instance, &zone, &config)?;
    if let Some(best) = result.best() {
        eprintln!(
            "best joint objective {} after {} iteration(s)",
            fmt_g12(best.joint_objective),
            result.iterations
        );
    }
    session.write(a.out.as_deref(), &json(&result)?)
}

#[derive(Debug, Serialize)]
struct SampleSummary {
    path: String,
    variables: usize,
    shots: u64,
    feasible_fraction: f64,
    relaxed_fraction: f64,
    best_energy: Option<f64>,
    best_objective: Option<f64>,
}

#[derive(Debug, Serialize)]
struct SpectrumEntry {
    path: String,
    summary: SpectrumSummary,
}

#[derive(Debug, Serialize)]
struct HistogramSummary {
    path: String,
    total: u64,
    mode: Option<i64>,
    support: Vec<i64>,
}

#[derive(Debug, Default, Serialize)]
struct ReportDocument {
    samples: Vec<SampleSummary>,
    empty_sample_files: Vec<String>,
    spectra: Vec<SpectrumEntry>,
    histograms: Vec<HistogramSummary>,
    feasible_fraction_fit: Option<ScalingFit>,
}

fn pair_qubos(a: &ReportArgs) -> Result<Vec<(&PathBuf, &PathBuf)>> {
    if a.samples.is_empty() {
        return Ok(Vec::new());
    }
    match a.qubo.len() {
        0 => Err(UsageError("--samples needs --qubo to decode feasibility".into()).into()),
        1 => Ok(a.samples.iter().map(|s| (s, &a.qubo[0])).collect()),
        n if n == a.samples.len() => Ok(a.samples.iter().zip(&a.qubo).collect()),
        n => Err(UsageError(format!("{} sample files but {n} QUBO files", a.samples.len())).into()),
    }
}

fn report(a: &ReportArgs, session: &mut Session) -> Result<()> {
    if a.samples.is_empty() && a.spectrum.is_empty() && a.histogram.is_empty() {
        return Err(UsageError("nothing to report; pass --samples, --spectrum or --histogram".into()).into());
    }
    let mut doc = ReportDocument::default();
    let mut text = String::new();
    let mut qubos: BTreeMap<&PathBuf, Qubo> = BTreeMap::new();
    for (spath, qpath) in pair_qubos(a)? {
        let raw = session.read(Some(spath))?;
        let samples = if raw.trim().is_empty() {
            SampleSet::default()
        } else {
            SampleSet::from_csv(&raw).with_context(|| format!("parsing {}", spath.display()))?
        };
        if samples.is_empty() {
            let _ = writeln!(text, "{}: no samples", spath.display());
            doc.empty_sample_files.push(spath.display().to_string());
            continue;
        }
        if !qubos.contains_key(qpath) {
            let q = read_qubo(session, qpath, None)?;
            require_catalog(&q, qpath)?;
            qubos.insert(qpath, q);
        }
        let q = &qubos[qpath];
        let reports = decode_samples(q, &samples)?;
        let shots = samples.shots() as f64;
        let frac = |f: fn(&SolutionReport) -> bool| {
            reports.iter().filter(|(r, _)| f(r)).map(|(_, c)| *c).sum::<u64>() as f64 / shots
        };
        let summary = SampleSummary {
            path: spath.display().to_string(),
            variables: q.n,
            shots: samples.shots(),
            feasible_fraction: frac(|r| r.feasible_strict),
            relaxed_fraction: frac(|r| r.feasible_relaxed),
            best_energy: samples.best().map(|s| s.energy),
            best_objective: reports
                .iter()
                .filter(|(r, _)| r.feasible_strict)
                .filter_map(|(r, _)| r.objective)
                .min_by(f64::total_cmp),
        };
        let _ = writeln!(
            text,
            "{}: {} variables, {} shots, feasible fraction {} (relaxed {}), best energy {}, best feasible objective {}",
            summary.path,
            summary.variables,
            summary.shots,
            fmt_g12(summary.feasible_fraction),
            fmt_g12(summary.relaxed_fraction),
            opt(summary.best_energy),
            opt(summary.best_objective),
        );
        doc.samples.push(summary);
    }

    let sizes: BTreeSet<usize> = doc.samples.iter().map(|s| s.variables).collect();
    if sizes.len() >= 2 {
        let model = match a.fit {
            FitChoice::Linear => FitModel::Linear,
            FitChoice::Exponential => FitModel::Exponential,
        };
        let points: Vec<(f64, f64)> = doc
            .samples
            .iter()
            .filter(|s| model == FitModel::Linear || s.feasible_fraction > 0.0)
            .map(|s| (s.variables as f64, s.feasible_fraction))
            .collect();
        match fit_scaling(&points, model) {
            Ok(fit) => {
                let _ = writeln!(
                    text,
                    "feasible fraction fit ({:?}): slope {}, intercept {}, r2 {}, {} points",
                    fit.model,
                    fmt_g12(fit.slope),
                    fmt_g12(fit.intercept),
                    fmt_g12(fit.r2),
                    fit.points
                );
                doc.feasible_fraction_fit = Some(fit);
            }
            Err(e) => {
                let _ = writeln!(text, "feasible fraction fit skipped: {e}");
            }
        }
    }

    for path in &a.spectrum {
        let summary: SpectrumSummary = serde_json::from_str(&session.read(Some(path))?)
            .with_context(|| format!("parsing spectrum summary {}", path.display()))?;
        let levels: Vec<String> = summary
            .feasible_levels
            .iter()
            .map(|(e, c)| if *c > 1 { format!("{} (x{c})", fmt_g12(*e)) } else { fmt_g12(*e) })
            .collect();
        let _ = writeln!(
            text,
            "{}: {} states, {} feasible; feasible objectives {{{}}}; gap {}; {} spectrum",
            path.display(),
            summary.states,
            summary.feasible_states,
            levels.join(", "),
            opt(summary.gap),
            summary.regime
        );
        doc.spectra.push(SpectrumEntry {
            path: path.display().to_string(),
            summary,
        });
    }

    for path in &a.histogram {
        let hist = Histogram::from_csv(&session.read(Some(path))?)
            .with_context(|| format!("parsing histogram {}", path.display()))?;
        let support: Vec<i64> = hist.counts.keys().copied().collect();
        let _ = writeln!(
            text,
            "{}: {} counts over {:?}, mode {}",
            path.display(),
            hist.total(),
            support,
            hist.mode().map_or("-".to_string(), |m| m.to_string())
        );
        doc.histograms.push(HistogramSummary {
            path: path.display().to_string(),
            total: hist.total(),
            mode: hist.mode(),
            support,
        });
    }

    session.write(a.out.as_deref(), &text)?;
    if let Some(out) = a.out.as_deref().filter(|p| p.as_os_str() != "-") {
        session.write(Some(&sidecar(out, "json")), &json(&doc)?)?;
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".to_string(), fmt_g12)
}
