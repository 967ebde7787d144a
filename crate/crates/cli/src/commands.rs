use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use memgrad_core::characterize::{
    bank_pearson, endurance_cycles, histogram, pearson_summary, EnduranceReport, PearsonSummary,
};
use memgrad_core::config::{RunConfig, TaskKind};
use memgrad_core::device::DeviceTechParams;
use memgrad_core::energy::{energy_report, LedgerSummary};
use memgrad_core::gradcheck::{run_suites, GradcheckSettings, RuleSelection, SuiteResult};
use memgrad_core::rules::CfVariant;
use memgrad_core::stats::stat_report;
use memgrad_core::trainer::{
    prepare_splits, run_repeats, run_single, simulate_aging, summarize_repeats, AgingReport, LoadedRun, RepeatSummary,
    RunManifest, TrainingRun,
};
use memgrad_core::{derive_seed, Algorithm};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::failure::{CliResult, Failure};
use crate::overrides::{parse_assignment, set_path};
use crate::{
    AgeArgs, CharacterizeArgs, ConfigArgs, EnergyArgs, GradcheckArgs, ReportArgs, RuleArg, StatsArgs, TaskArg,
    TrainArgs, VariantArg,
};

/// Seed stream used by the aging Monte-Carlo.
const AGING_STREAM: u64 = 6;
/// Seed stream used by the endurance protocol.
const ENDURANCE_STREAM: u64 = 7;

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let f = File::open(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

/// Config file, then flag-derived assignments, then `--set`, then the seed.
fn load_config(args: &ConfigArgs, flags: Vec<(String, Value)>) -> CliResult<RunConfig> {
    let mut value = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
        }
        None => json!({}),
    };
    if !value.is_object() {
        return Err(Failure::Config("config must be a JSON object".into()));
    }
    for (k, v) in flags {
        set_path(&mut value, &k, v)?;
    }
    for s in &args.sets {
        let (k, v) = parse_assignment(s)?;
        set_path(&mut value, &k, v)?;
    }
    if let Some(seed) = args.seed {
        set_path(&mut value, "seed", json!(seed))?;
    }
    let config = RunConfig::from_json_str(&value.to_string())?;
    config.validate()?;
    Ok(config)
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

#[derive(Serialize)]
struct BankInfo {
    source: String,
    devices: usize,
    min_len: usize,
}

#[derive(Serialize)]
struct CharacterizeReport {
    bank: BankInfo,
    tech: String,
    pearson: PearsonSummary,
    endurance: EnduranceReport,
}

pub fn characterize(a: CharacterizeArgs) -> CliResult {
    let mut flags = Vec::new();
    if let Some(b) = &a.bank {
        flags.push(("device.bank_file".to_string(), json!(b)));
    }
    let config = load_config(&a.config, flags)?;
    let bank = config.device.build_bank()?;
    let tech = config.device.tech_params()?;
    std::fs::create_dir_all(&a.out)?;

    let (r, p_max) = bank_pearson(&bank, a.p_max)?;
    let mut w = csv_writer(&a.out.join("pearson_hist.csv"))?;
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for b in histogram(&r, a.bins)? {
        w.write_record([b.lo.to_string(), b.hi.to_string(), b.count.to_string()])?;
    }
    w.flush()?;
    let mut w = csv_writer(&a.out.join("pearson.csv"))?;
    w.write_record(["device_id", "pearson"])?;
    for (i, v) in r.iter().enumerate() {
        w.write_record([i.to_string(), v.to_string()])?;
    }
    w.flush()?;

    let mut w = csv_writer(&a.out.join("endurance.csv"))?;
    w.write_record(["cycle", "pulse_in_cycle", "lifetime_pulse", "conductance_uS"])?;
    let endurance = endurance_cycles(
        &bank,
        &tech,
        a.cycles,
        a.pulses_per_cycle,
        derive_seed(config.seed, ENDURANCE_STREAM),
        a.stride,
        |p| {
            w.write_record([
                p.cycle.to_string(),
                p.pulse_in_cycle.to_string(),
                p.lifetime_pulse.to_string(),
                p.conductance_us.to_string(),
            ])?;
            Ok(())
        },
    )?;
    w.flush()?;
    if a.write_bank {
        bank.write_csv(BufWriter::new(File::create(a.out.join("bank.csv"))?))?;
    }

    let summary = pearson_summary(&r, p_max);
    println!(
        "pearson: {} devices, median {:.4}, {:.2}% above -0.5",
        summary.devices,
        summary.median,
        100.0 * summary.fraction_above_minus_half
    );
    println!(
        "endurance: {} cycles x {} pulses = {} lifetime pulses (budget {}, {})",
        endurance.cycles,
        endurance.pulses_per_cycle,
        endurance.lifetime_pulses,
        endurance.endurance_budget,
        if endurance.within_budget { "within" } else { "exceeded" }
    );
    let report = CharacterizeReport {
        bank: BankInfo {
            source: config
                .device
                .bank_file
                .as_ref()
                .map_or_else(|| "synthetic".to_string(), |p| p.display().to_string()),
            devices: bank.len(),
            min_len: bank.min_len(),
        },
        tech: tech.name,
        pearson: summary,
        endurance,
    };
    write_json(&a.out.join("characterize.json"), &report)
}

fn train_flags(a: &TrainArgs) -> CliResult<Vec<(String, Value)>> {
    let mut f: Vec<(String, Value)> = Vec::new();
    if let Some(algo) = &a.algo {
        let parsed: Algorithm = algo.parse()?;
        f.push(("algorithm".into(), json!(parsed)));
    }
    if let Some(arch) = &a.arch {
        f.push(("arch".into(), json!(arch)));
    }
    if let Some(t) = a.task {
        let kind = match t {
            TaskArg::Synthetic => TaskKind::Synthetic,
            TaskArg::Csv => TaskKind::Csv,
            TaskArg::Idx => TaskKind::Idx,
        };
        f.push(("task.kind".into(), json!(kind)));
    }
    if let Some(e) = &a.epochs {
        f.push(("epochs".into(), json!(e)));
    }
    if let Some(t) = &a.tau {
        f.push(("tau".into(), json!(t)));
    }
    if let Some(b) = a.batch_size {
        f.push(("batch_size".into(), json!(b)));
    }
    if let Some(lr) = a.lr {
        f.push(("lr".into(), json!(lr)));
    }
    if let Some(t) = &a.tech {
        f.push(("device.tech".into(), json!(t)));
    }
    if let Some(k) = a.kappa {
        f.push(("device.kappa".into(), json!(k)));
    }
    if let Some(b) = &a.bank {
        f.push(("device.bank_file".into(), json!(b)));
    }
    if let Some(s) = a.read_noise {
        f.push(("device.read_model.enabled".into(), json!(true)));
        f.push(("device.read_model.multiplicative_sigma".into(), json!(s)));
    }
    Ok(f)
}

#[derive(Serialize, Deserialize)]
struct RepeatOutput {
    #[serde(flatten)]
    summary: RepeatSummary,
    run_dirs: Vec<String>,
}

fn print_run(run: &TrainingRun) {
    let f = run.final_eval.as_ref().expect("trained");
    let stats = run.pulse_statistics();
    let pulses = if stats.layers.is_empty() {
        String::new()
    } else {
        let per_layer: Vec<String> = stats
            .layers
            .iter()
            .map(|l| format!("{:.1}", l.mean_per_device))
            .collect();
        format!(", mean pulses/device [{}]", per_layer.join(", "))
    };
    println!(
        "{} seed {}: test accuracy {:.4} (val {:.4}){pulses}",
        run.model.algorithm,
        run.seed(),
        f.test_accuracy,
        f.val_accuracy,
    );
}

pub fn train(a: TrainArgs) -> CliResult {
    if a.repeat == 0 {
        return Err(Failure::Config("--repeat must be >= 1".into()));
    }
    let mut config = load_config(&a.config, train_flags(&a)?)?;
    if let Some(d) = &a.data {
        match config.task.kind {
            TaskKind::Csv => config.task.csv_path = Some(d.clone()),
            TaskKind::Idx => config.task.idx_images = Some(d.clone()),
            TaskKind::Synthetic => return Err(Failure::Config("--data needs --task csv or --task idx".into())),
        }
    }
    if let Some(l) = &a.labels {
        config.task.idx_labels = Some(l.clone());
    }
    let data = prepare_splits(&config)?;
    let bank = if config.algorithm.is_device() {
        Some(config.device.build_bank()?)
    } else {
        None
    };
    if a.repeat == 1 {
        let run = run_single(&config, &data, bank.as_ref())?;
        run.write_artifacts(&a.out, &data)?;
        print_run(&run);
        return Ok(());
    }
    let runs = run_repeats(&config, a.repeat, &data, bank.as_ref())?;
    std::fs::create_dir_all(&a.out)?;
    let mut dirs = Vec::new();
    for run in &runs {
        let name = format!("seed_{}", run.seed());
        run.write_artifacts(&a.out.join(&name), &data)?;
        print_run(run);
        dirs.push(name);
    }
    let summary = summarize_repeats(&runs)?;
    println!(
        "{} over {} seeds: test accuracy {:.4} +- {:.4}",
        summary.algorithm,
        runs.len(),
        summary.mean_test_accuracy,
        summary.std_test_accuracy
    );
    write_json(
        &a.out.join("summary.json"),
        &RepeatOutput {
            summary,
            run_dirs: dirs,
        },
    )
}

fn load_run(dir: &Path) -> CliResult<LoadedRun> {
    if !dir.is_dir() {
        return Err(Failure::Data(format!("run directory {} does not exist", dir.display())));
    }
    Ok(LoadedRun::load(dir)?)
}

pub fn age(a: AgeArgs) -> CliResult {
    let run = load_run(&a.run)?;
    let config = &run.manifest.config;
    let data = prepare_splits(config)?;
    if data.data_hash != run.manifest.data_hash {
        return Err(Failure::Data(format!(
            "dataset content differs from the one the run was trained on ({} vs {})",
            data.data_hash, run.manifest.data_hash
        )));
    }
    let days = a.days.unwrap_or_else(|| config.aging.days.clone());
    let repeats = a.repeats.unwrap_or(config.aging.repeats);
    let seed = a.seed.unwrap_or(config.seed);
    let report = simulate_aging(
        &run.manifest.model,
        &run.layers,
        &data.test,
        &days,
        &config.drift,
        repeats,
        derive_seed(seed, AGING_STREAM),
    )?;
    let out = a.out.unwrap_or_else(|| a.run.join("aging"));
    std::fs::create_dir_all(&out)?;
    report.write_csv(BufWriter::new(File::create(out.join("aging.csv"))?))?;
    write_json(&out.join("aging.json"), &report)?;
    println!("baseline test accuracy {:.4}", report.baseline);
    for s in &report.summary {
        println!(
            "day {:>6}: {:.4} +- {:.4} (drop {:+.4})",
            s.day,
            s.mean,
            s.std,
            report.baseline - s.mean
        );
    }
    Ok(())
}

pub fn energy(a: EnergyArgs) -> CliResult {
    let (summary, default_out): (LedgerSummary, PathBuf) = if a.source.is_dir() {
        (LoadedRun::ledger(&a.source)?, a.source.join("energy.json"))
    } else if a.source.is_file() {
        let parent = a.source.parent().map(Path::to_path_buf).unwrap_or_default();
        (read_json(&a.source)?, parent.join("energy.json"))
    } else {
        return Err(Failure::Data(format!("{} does not exist", a.source.display())));
    };
    let techs = a
        .tech
        .iter()
        .map(|n| DeviceTechParams::by_name(n).ok_or_else(|| Failure::Config(format!("unknown tech profile {n:?}"))))
        .collect::<CliResult<Vec<_>>>()?;
    if techs.is_empty() {
        return Err(Failure::Config("need at least one tech profile".into()));
    }
    let report = energy_report(&summary, &techs, a.ops_per_joule, a.pv_energy)?;
    let out = a.out.unwrap_or(default_out);
    write_json(&out, &report)?;
    println!(
        "{} pulses, mean pre-pulse conductance {:.2} uS",
        report.pulse_count, report.mean_pre_pulse_conductance_us
    );
    for c in &report.programming {
        println!(
            "{:>20}: {:.4e} J total, {:.4e} J/pulse",
            c.tech, c.total_j, c.mean_per_pulse_j
        );
    }
    for (t, r) in &report.ratios.recost {
        println!("{} / {t}: {r:.2}", report.programming[0].tech);
    }
    println!(
        "program-and-verify baseline {:.4e} J ({:.1}x the cheapest mean pulse)",
        report.pv_baseline_j, report.ratios.pv_over_cheapest_pulse
    );
    Ok(())
}

fn parse_numbers(text: &str, name: &str) -> CliResult<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Failure::Data(format!("{name}: {t:?} is not a number")))
        })
        .collect()
}

fn json_numbers(v: &Value, name: &str) -> CliResult<Vec<f64>> {
    v.as_array()
        .ok_or_else(|| Failure::Data(format!("{name}: expected a list of numbers")))?
        .iter()
        .map(|x| {
            x.as_f64()
                .ok_or_else(|| Failure::Data(format!("{name}: {x} is not a number")))
        })
        .collect()
}

fn read_groups(path: &Path) -> CliResult<Vec<(String, Vec<f64>)>> {
    let name = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{name}: {e}")))?;
    if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(&text).map_err(|e| Failure::Data(format!("{name}: {e}")))?;
        let obj = v
            .as_object()
            .ok_or_else(|| Failure::Data(format!("{name}: expected a JSON object")))?;
        if let (Some(alg), Some(accs)) = (obj.get("algorithm"), obj.get("test_accuracies")) {
            let alg = alg.as_str().unwrap_or("run").to_string();
            return Ok(vec![(alg, json_numbers(accs, &name)?)]);
        }
        return obj
            .iter()
            .map(|(k, v)| Ok((k.clone(), json_numbers(v, &name)?)))
            .collect();
    }
    let stem = path
        .file_stem()
        .map_or_else(|| name.clone(), |s| s.to_string_lossy().into_owned());
    Ok(vec![(stem, parse_numbers(&text, &name)?)])
}

pub fn stats(a: StatsArgs) -> CliResult {
    let mut groups = Vec::new();
    for f in &a.files {
        groups.extend(read_groups(f)?);
    }
    for g in &a.groups {
        let (name, values) = g
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--group {g:?} is not NAME=V1,V2,...")))?;
        groups.push((name.to_string(), parse_numbers(values, name)?));
    }
    let report = stat_report(&groups, a.alpha)?;
    for g in &report.groups {
        println!("{:>12}: n={} mean {:.4} sd {:.4}", g.name, g.n, g.mean, g.std);
    }
    for t in &report.pairwise {
        println!(
            "{} vs {}: t={:.4} df={:.2} p={:.4} p_holm={:.4} {}",
            t.a,
            t.b,
            t.t,
            t.df,
            t.p,
            t.p_holm,
            if t.reject { "reject" } else { "retain" }
        );
    }
    write_json(&a.out, &report)
}

#[derive(Serialize)]
struct GradcheckReport {
    settings: GradcheckSettings,
    suites: Vec<SuiteResult>,
    passed: bool,
}

pub fn gradcheck(a: GradcheckArgs) -> CliResult {
    let settings = GradcheckSettings {
        configs: a.configs,
        seed: a.seed,
        rtol: a.rtol,
        ..Default::default()
    };
    let rule = match a.rule {
        RuleArg::All => RuleSelection::All,
        RuleArg::Sff => RuleSelection::Sff,
        RuleArg::Cf => RuleSelection::Cf,
        RuleArg::Bp => RuleSelection::Bp,
    };
    let variant = a.variant.map(|v| match v {
        VariantArg::Offset => CfVariant::Offset,
        VariantArg::Temperature => CfVariant::Temperature,
    });
    let suites = run_suites(&settings, rule, variant)?;
    for s in &suites {
        println!(
            "{} {:<32} configs {:>4} entries {:>7} max rel err {:.3e}",
            if s.passed { "PASS" } else { "FAIL" },
            s.name,
            s.configs,
            s.entries,
            s.max_rel_err
        );
    }
    let passed = suites.iter().all(|s| s.passed);
    if let Some(out) = &a.out {
        write_json(
            out,
            &GradcheckReport {
                settings,
                suites: suites.clone(),
                passed,
            },
        )?;
    }
    if passed {
        Ok(())
    } else {
        let n = suites.iter().filter(|s| !s.passed).count();
        Err(Failure::Check(format!("{n} gradient suite(s) failed")))
    }
}

fn report_run(dir: &Path, m: &RunManifest) -> CliResult {
    println!("run {}", dir.display());
    println!("  algorithm {}  seed {}  dataset {}", m.algorithm, m.seed, m.dataset);
    println!(
        "  split sizes train/val/test {}/{}/{}  input hash {}",
        m.split_sizes[0],
        m.split_sizes[1],
        m.split_sizes[2],
        &m.input_hash[..12.min(m.input_hash.len())]
    );
    for (k, p) in m.schedule.phases.iter().enumerate() {
        println!(
            "  phase {k}: layer {} for {} epochs (tau {})",
            p.layer, p.epochs, m.schedule.tau[p.layer]
        );
    }
    if let Some(f) = &m.final_eval {
        println!(
            "  accuracy train {:.4}  val {:.4}  test {:.4}",
            f.train_accuracy, f.val_accuracy, f.test_accuracy
        );
        if let (Some(mp), Some(ag)) = (f.sff_multipass_accuracy, f.sff_protocol_agreement) {
            println!("  sff label-sweep accuracy {mp:.4}, agreement with single pass {ag:.4}");
        }
    }
    for l in &m.pulse_statistics.layers {
        println!(
            "  layer {} ({}x{}): {} pulses, mean {:.1} / device, max {}",
            l.layer, l.rows, l.cols, l.total, l.mean_per_device, l.max_per_device
        );
    }
    let curve = dir.join("curve.csv");
    if curve.is_file() {
        let mut r = csv::Reader::from_path(&curve)?;
        let mut vals = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            if &rec[1] == "val" {
                vals.push(format!("{:.3}", rec[2].parse::<f64>().unwrap_or(f64::NAN)));
            }
        }
        println!("  validation curve: {}", vals.join(" "));
    }
    let aging = dir.join("aging").join("aging.json");
    if aging.is_file() {
        let a: AgingReport = read_json(&aging)?;
        let parts: Vec<String> = a.summary.iter().map(|s| format!("d{}={:.4}", s.day, s.mean)).collect();
        println!("  aging (baseline {:.4}): {}", a.baseline, parts.join(" "));
    }
    let energy = dir.join("energy.json");
    if energy.is_file() {
        let e: memgrad_core::energy::EnergyReport = read_json(&energy)?;
        for c in &e.programming {
            println!("  energy {}: {:.4e} J", c.tech, c.total_j);
        }
    }
    Ok(())
}

pub fn report(a: ReportArgs) -> CliResult {
    let dir = &a.run;
    if dir.join("manifest.json").is_file() {
        let run = load_run(dir)?;
        return report_run(dir, &run.manifest);
    }
    let summary = dir.join("summary.json");
    if summary.is_file() {
        let s: RepeatOutput = read_json(&summary)?;
        println!(
            "{} over {} seeds: test accuracy {:.4} +- {:.4}",
            s.summary.algorithm,
            s.summary.seeds.len(),
            s.summary.mean_test_accuracy,
            s.summary.std_test_accuracy
        );
        for d in &s.run_dirs {
            let run = load_run(&dir.join(d))?;
            report_run(&dir.join(d), &run.manifest)?;
        }
        return Ok(());
    }
    Err(Failure::Data(format!(
        "{} holds neither manifest.json nor summary.json",
        dir.display()
    )))
}
