use std::fs;
use std::path::{Path, PathBuf};

use emac::certificate::{
    concentration_norm, golfing_certificate, sample_with_replacement, ConcentrationOptions,
    GolfingPlan, GolfingReport, SampleCounts, TangentSpace,
};
use emac::experiments::{
    run_noisy_demo, run_phase_transition, run_superres, transition_summary, ExperimentKind,
    ExperimentSpec, NoisyConfig, NoisyOutcome, TransitionSummary,
};
use emac::hankel::{build_map, PencilShape};
use emac::incoherence::{incoherence_report, IncoherenceReport};
use emac::io::{
    format_float, read_array_csv_file, read_json, write_array_csv_file, write_history_csv,
    write_json, write_table_csv,
};
use emac::model::{
    add_noise, derive_seed, sample_uniform, synthesize, ObservationSet, SpectralSignal,
};
use emac::solver::{emac_svt, SolverConfig};
use emac::{Error, Result};
use serde::Serialize;

use crate::{
    CertifyArgs, Cli, Command, ExperimentArgs, IncoherenceArgs, RecoverArgs, SampleArgs, SynthArgs,
};

/// Success level at which the phase-transition summary reads off `m`.
const TRANSITION_LEVEL: f64 = 0.95;

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Validation(format!("cannot start {n} threads: {e}")))?;
    }
    fs::create_dir_all(&cli.out)?;
    match &cli.command {
        Command::Synth(a) => synth(cli, a),
        Command::Sample(a) => sample(cli, a),
        Command::Recover(a) => recover(cli, a),
        Command::Incoherence(a) => incoherence(cli, a),
        Command::Certify(a) => certify(cli, a),
        Command::PhaseTransition(a) => phase_transition(cli, a),
        Command::NoisyDemo(a) => noisy_demo(cli, a),
        Command::Superres(a) => superres(cli, a),
    }
}

fn out_file(cli: &Cli, name: &str) -> PathBuf {
    cli.out.join(name)
}

fn pencil_for(cli: &Cli, dims: &[usize]) -> Result<PencilShape> {
    match &cli.pencil {
        Some(k) => PencilShape::new(dims.to_vec(), k.clone()),
        None => PencilShape::balanced(dims),
    }
}

fn synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let signal: SpectralSignal = match (&a.spec, &a.dims, a.rank) {
        (Some(path), _, _) => read_json(path)?,
        (None, Some(dims), Some(r)) => {
            let s = SpectralSignal::random(dims, r, a.min_sep, cli.seed.unwrap_or(0))?;
            write_json(&out_file(cli, "signal.json"), &s)?;
            s
        }
        _ => {
            return Err(Error::Validation(
                "give --spec or both --dims and --rank".into(),
            ))
        }
    };
    let path = out_file(cli, "signal.csv");
    write_array_csv_file(&path, &synthesize(&signal))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn sample(cli: &Cli, a: &SampleArgs) -> Result<()> {
    let signal: SpectralSignal = read_json(&a.spec)?;
    let seed = cli.seed.unwrap_or(0);
    let truth = synthesize(&signal);
    let mask = sample_uniform(signal.dims(), a.m, derive_seed(seed, &[0]))?;
    let mut obs = ObservationSet::from_array(&truth, &mask)?;
    if let Some(snr) = a.snr {
        let noisy = add_noise(obs.values(), snr, derive_seed(seed, &[1]))?;
        let delta = noisy
            .iter()
            .zip(obs.values())
            .map(|(x, y)| (x - y).norm_sqr())
            .sum::<f64>()
            .sqrt();
        obs = obs.with_values(noisy, delta)?;
    }
    let path = out_file(cli, "observations.json");
    write_json(&path, &obs)?;
    println!("wrote {} ({} entries)", path.display(), obs.len());
    Ok(())
}

#[derive(Serialize)]
struct RecoverySummary {
    iters: usize,
    converged: bool,
    nmse: Option<f64>,
    final_rank: Option<usize>,
}

fn recover(cli: &Cli, a: &RecoverArgs) -> Result<()> {
    let obs: ObservationSet = read_json(&a.spec)?;
    let mut cfg: SolverConfig = match &a.solver {
        Some(p) => read_json(p)?,
        None => SolverConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let truth = a.truth.as_deref().map(read_array_csv_file).transpose()?;
    let pencil = pencil_for(cli, obs.dims())?;
    let res = emac_svt(&obs, &pencil, &cfg, truth.as_ref())?;
    write_array_csv_file(&out_file(cli, "recovered.csv"), &res.data_hat)?;
    write_history_csv(
        fs::File::create(out_file(cli, "history.csv"))?,
        &res.history,
    )?;
    let summary = RecoverySummary {
        iters: res.iters,
        converged: res.converged,
        nmse: res.nmse,
        final_rank: res.history.last().map(|h| h.rank),
    };
    write_json(&out_file(cli, "recovery.json"), &summary)?;
    match res.nmse {
        Some(e) => println!("{} iterations, NMSE {}", res.iters, format_float(e)),
        None => println!("{} iterations", res.iters),
    }
    Ok(())
}

#[derive(Serialize)]
struct BatchInstance {
    seed: u64,
    rank: usize,
    mu1: Option<f64>,
    mu2: f64,
    mu3: f64,
    lemma1_bound: Option<f64>,
    holds: Option<bool>,
}

#[derive(Serialize)]
struct BatchSummary {
    dims: Vec<usize>,
    instances: usize,
    violations: usize,
    singular: usize,
    results: Vec<BatchInstance>,
}

fn incoherence(cli: &Cli, a: &IncoherenceArgs) -> Result<()> {
    if let Some(count) = a.batch {
        let dims = a.dims.clone().expect("clap requires --dims with --batch");
        return incoherence_batch(cli, &dims, count, a.max_rank);
    }
    let path = a
        .spec
        .as_ref()
        .expect("clap requires --spec without --batch");
    let signal: SpectralSignal = read_json(path)?;
    let pencil = pencil_for(cli, signal.dims())?;
    let m = a.m.unwrap_or_else(|| pencil.data_len());
    let report = incoherence_report(&signal, &pencil, m)?;
    write_json(&out_file(cli, "incoherence.json"), &report)?;
    print_report(&report);
    Ok(())
}

fn print_report(r: &IncoherenceReport) {
    let mu1 = r.mu1.map_or_else(|| "singular".into(), format_float);
    println!(
        "rank {}  mu1 {}  mu2 {}  mu3 {}  c_s {}",
        r.rank,
        mu1,
        format_float(r.mu2),
        format_float(r.mu3),
        format_float(r.c_s)
    );
}

fn incoherence_batch(cli: &Cli, dims: &[usize], count: usize, max_rank: usize) -> Result<()> {
    if count == 0 || max_rank == 0 {
        return Err(Error::Validation(
            "--batch and --max-rank must be positive".into(),
        ));
    }
    let pencil = pencil_for(cli, dims)?;
    let base = cli.seed.unwrap_or(0);
    let mut results = Vec::with_capacity(count);
    for i in 0..count {
        let seed = derive_seed(base, &[i as u64]);
        let rank = 1 + i % max_rank;
        let signal = SpectralSignal::random(dims, rank, 0.0, seed)?;
        let rep = incoherence_report(&signal, &pencil, pencil.data_len())?;
        results.push(BatchInstance {
            seed,
            rank,
            mu1: rep.mu1,
            mu2: rep.mu2,
            mu3: rep.mu3,
            lemma1_bound: rep.lemma1_bound,
            holds: rep.lemma1_holds(),
        });
    }
    let summary = BatchSummary {
        dims: dims.to_vec(),
        instances: count,
        violations: results.iter().filter(|r| r.holds == Some(false)).count(),
        singular: results.iter().filter(|r| r.holds.is_none()).count(),
        results,
    };
    write_json(&out_file(cli, "incoherence_batch.json"), &summary)?;
    println!(
        "{} instances, {} violations, {} singular",
        summary.instances, summary.violations, summary.singular
    );
    Ok(())
}

#[derive(Serialize)]
struct CertificateSummary {
    m: usize,
    concentration: f64,
    gate: bool,
    golfing: GolfingReport,
    certificate_holds: bool,
}

fn certify(cli: &Cli, a: &CertifyArgs) -> Result<()> {
    let signal: SpectralSignal = read_json(&a.spec)?;
    let pencil = pencil_for(cli, signal.dims())?;
    let map = build_map(&pencil);
    let tangent = TangentSpace::from_data(&synthesize(&signal), &map)?;
    let seed = cli.seed.unwrap_or(0);
    let n = map.data_len();
    let opts = ConcentrationOptions {
        power_iters: a.power_iters,
        seed: derive_seed(seed, &[2]),
        ..ConcentrationOptions::default()
    };
    let draws = sample_with_replacement(n, a.m, derive_seed(seed, &[0]))?;
    let counts = SampleCounts::from_indices(n, &draws)?;
    let concentration = concentration_norm(&counts, &tangent, &map, &opts)?;
    let plan = GolfingPlan::new(n, a.m, a.epsilon, a.law.into(), derive_seed(seed, &[1]))?;
    let (_, golfing) = golfing_certificate(&plan, &tangent, &map, &opts)?;
    let summary = CertificateSummary {
        m: a.m,
        concentration,
        gate: concentration <= 0.5,
        certificate_holds: golfing.all_hold(),
        golfing,
    };
    write_json(&out_file(cli, "certificate.json"), &summary)?;
    println!(
        "concentration {} (gate {}), certificate conditions hold: {}",
        format_float(concentration),
        summary.gate,
        summary.certificate_holds
    );
    Ok(())
}

/// Loads an experiment spec of `kind`, applying command-line overrides.
fn load_experiment(cli: &Cli, a: &ExperimentArgs, kind: ExperimentKind) -> Result<ExperimentSpec> {
    let mut spec = match &a.spec {
        Some(path) => ExperimentSpec::from_json_str(&fs::read_to_string(path)?)?,
        None => ExperimentSpec::defaults_for(kind),
    };
    if spec.kind != kind {
        return Err(Error::Validation(format!(
            "spec kind {:?} does not match this command ({kind:?})",
            spec.kind
        )));
    }
    if let Some(seed) = cli.seed {
        spec.seed = seed;
    }
    if let Some(k) = &cli.pencil {
        spec.pencil = Some(k.clone());
    }
    if let Some(t) = a.trials {
        spec.trials = t;
    }
    spec.validate()?;
    Ok(spec)
}

fn csv_path(cli: &Cli, spec: &ExperimentSpec, default: &str) -> PathBuf {
    spec.output_path
        .clone()
        .unwrap_or_else(|| out_file(cli, default))
}

fn phase_transition(cli: &Cli, a: &ExperimentArgs) -> Result<()> {
    let spec = load_experiment(cli, a, ExperimentKind::PhaseTransition)?;
    let cells = run_phase_transition(&spec)?;
    let rows: Vec<Vec<String>> = cells
        .iter()
        .map(|c| {
            vec![
                c.r.to_string(),
                c.m.to_string(),
                c.successes.to_string(),
                c.trials.to_string(),
                format_float(c.success_rate),
            ]
        })
        .collect();
    let path = csv_path(cli, &spec, "phase_transition.csv");
    write_table_csv(
        create(&path)?,
        &["r", "m", "successes", "trials", "success_rate"],
        &rows,
    )?;
    let summary: TransitionSummary = transition_summary(&cells, TRANSITION_LEVEL)?;
    write_json(&out_file(cli, "phase_summary.json"), &summary)?;
    for (r, m) in &summary.minimal_m {
        match m {
            Some(m) => println!("r = {r}: success ≥ {TRANSITION_LEVEL} from m = {m}"),
            None => println!("r = {r}: success ≥ {TRANSITION_LEVEL} not reached"),
        }
    }
    Ok(())
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(fs::File::create(path)?)
}

fn noisy_demo(cli: &Cli, a: &ExperimentArgs) -> Result<()> {
    let spec = load_experiment(cli, a, ExperimentKind::NoisyRecovery)?;
    let mut outcomes: Vec<NoisyOutcome> = Vec::with_capacity(spec.trials);
    for t in 0..spec.trials {
        let out = run_noisy_demo(&NoisyConfig::from_experiment(&spec, t)?)?;
        println!(
            "trial {t}: NMSE {}  bound holds: {}",
            format_float(out.nmse),
            out.bound_holds
        );
        if t == 0 {
            write_noisy_artifacts(cli, &spec, &out)?;
        }
        outcomes.push(out);
    }
    write_json(&out_file(cli, "noisy_metrics.json"), &outcomes)?;
    Ok(())
}

fn write_noisy_artifacts(cli: &Cli, spec: &ExperimentSpec, out: &NoisyOutcome) -> Result<()> {
    let k = spec.dims.len();
    let mut header: Vec<String> = (1..=k).map(|i| format!("index_{i}")).collect();
    header.extend(["truth_re", "truth_im", "recovered_re", "recovered_im"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = out
        .table
        .iter()
        .map(|row| {
            let mut cells: Vec<String> = row.index.iter().map(|i| i.to_string()).collect();
            cells.extend(
                row.truth
                    .iter()
                    .chain(&row.recovered)
                    .map(|&x| format_float(x)),
            );
            cells
        })
        .collect();
    write_table_csv(
        create(&csv_path(cli, spec, "noisy_table.csv"))?,
        &header,
        &rows,
    )?;
    write_history_csv(
        fs::File::create(out_file(cli, "noisy_history.csv"))?,
        &out.history,
    )?;
    if let Some(x) = &out.recovered {
        write_array_csv_file(&out_file(cli, "noisy_recovered.csv"), x)?;
    }
    Ok(())
}

fn superres(cli: &Cli, a: &ExperimentArgs) -> Result<()> {
    let spec = load_experiment(cli, a, ExperimentKind::Superres)?;
    let mut sr = spec.superres.clone().unwrap_or_default();
    if let Some(cfg) = &spec.solver {
        sr.solver = cfg.clone();
    }
    if spec.pencil.is_some() {
        sr.pencil = spec.pencil.clone();
    }
    if cli.seed.is_some() {
        sr.solver.seed = spec.seed;
    }
    let out = run_superres(&sr)?;
    for (name, image) in [
        ("superres_truth.csv", &out.truth),
        ("superres_lowres.csv", &out.lowres),
        ("superres_recovered.csv", &out.recovered),
    ] {
        if let Some(img) = image {
            write_array_csv_file(&out_file(cli, name), img)?;
        }
    }
    write_json(&out_file(cli, "superres_report.json"), &out)?;
    println!(
        "{} sources, {} recovered peaks, {} low-resolution peaks, all localized: {}",
        sr.sources.len(),
        out.recovered_peaks.len(),
        out.lowres_peaks.len(),
        out.all_localized
    );
    Ok(())
}
