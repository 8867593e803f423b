//! geacl-sim: run gossip-coordination simulations from JSON configs, sweep
//! parameters across seeds, and compare gossip-augmented runs against the
//! direct-messaging baseline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 at least one run hit its
//! tick budget before its stop condition.

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use geacl::config::{apply_override, Mode, RunConfig, ScenarioKind, SweepAxis};
use geacl::report;
use geacl::runner::{self, RunOutput};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_TIMEOUT: u8 = 3;

#[derive(Parser)]
#[command(name = "geacl-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path overrides, e.g. --override gossip.fanout=2 (repeatable).
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory for reports and tables.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for multi-run commands (0 = all cores). Defaults to
    /// the GEACL_SIM_JOBS environment variable, then 0.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one configuration (optionally over several seeds).
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Seed override; wins over the config's seed and seeds fields.
        #[arg(long)]
        seed: Option<u64>,
        /// Persist the event trace as newline-delimited JSON.
        #[arg(long)]
        trace: bool,
    },
    /// Cross-product of one axis' values and a seed list, one CSV row per run.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Axis: N, fanout, mode, drop_p, suppression_k, k_corroboration.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values, e.g. 16,32,64 or Push,PushPull.
        #[arg(long)]
        values: String,
        /// Seeds as a comma list (1,2,3) or a range (0..20).
        #[arg(long, default_value = "0..20")]
        seeds: String,
    },
    /// Paired baseline/gossip runs per seed with a per-metric delta table.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value = "0..20")]
        seeds: String,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { common, seed, trace } => cmd_run(&common, seed, trace),
        Command::Sweep { common, axis, values, seeds } => cmd_sweep(&common, &axis, &values, &seeds),
        Command::Compare { common, seeds } => cmd_compare(&common, &seeds),
    };
    match result {
        Ok(timed_out) => {
            if timed_out {
                ExitCode::from(EXIT_TIMEOUT)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn jobs_of(common: &CommonArgs) -> usize {
    common.jobs.unwrap_or_else(|| {
        std::env::var("GEACL_SIM_JOBS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    })
}

fn load_config(common: &CommonArgs) -> anyhow::Result<RunConfig> {
    let text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut doc: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", common.config.display()))?;
    for entry in &common.overrides {
        let (key, value) = entry
            .split_once('=')
            .ok_or_else(|| anyhow!("override {entry:?} is not KEY=VALUE"))?;
        apply_override(&mut doc, key, value).map_err(|e| anyhow!(e))?;
    }
    RunConfig::from_value(doc).map_err(|e| anyhow!(e))
}

fn parse_seeds(spec: &str) -> anyhow::Result<Vec<u64>> {
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().context("seed range start")?;
        let b: u64 = b.trim().parse().context("seed range end")?;
        if a >= b {
            return Err(anyhow!("empty seed range {spec:?}"));
        }
        return Ok((a..b).collect());
    }
    spec.split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("seed {s:?}")))
        .collect()
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn run_name(report: &geacl::metrics::MetricsReport) -> String {
    format!("run_{}_{}_seed{}", report.scenario, report.mode, report.seed)
}

fn cmd_run(common: &CommonArgs, seed: Option<u64>, trace: bool) -> anyhow::Result<bool> {
    let config = load_config(common)?;
    let seeds: Vec<u64> = match (seed, &config.seeds) {
        (Some(s), _) => vec![s],
        (None, Some(list)) if !list.is_empty() => list.clone(),
        (None, _) => vec![config.seed],
    };
    if config.scenario == ScenarioKind::Walkthrough {
        let mut timed_out = false;
        for &s in &seeds {
            let wt = runner::execute_walkthrough(&config, s).map_err(|e| anyhow!(e))?;
            for step in &wt.steps {
                println!(
                    "walkthrough seed {s}: {} {} ({})",
                    step.step,
                    if step.passed { "PASS" } else { "FAIL" },
                    step.detail
                );
            }
            if !wt.all_passed {
                return Err(anyhow!("walkthrough assertions failed"));
            }
            timed_out |= wt.report.timed_out;
            let base = common.out.join(run_name(&wt.report));
            write(&base.with_extension("json"), &report::to_json(&wt.report))?;
            write(&base.with_extension("csv"), &report::run_csv(&wt.report))?;
        }
        return Ok(timed_out);
    }
    let jobs: Vec<(RunConfig, u64)> = seeds.iter().map(|&s| (config.clone(), s)).collect();
    let outputs = runner::execute_batch(&jobs, trace, jobs_of(common));
    let mut timed_out = false;
    for output in outputs {
        let RunOutput { report: run_report, trace_ndjson } = output.map_err(|e| anyhow!(e))?;
        timed_out |= run_report.timed_out;
        let base = common.out.join(run_name(&run_report));
        write(&base.with_extension("json"), &report::to_json(&run_report))?;
        write(&base.with_extension("csv"), &report::run_csv(&run_report))?;
        if let Some(ndjson) = trace_ndjson {
            write(
                &common.out.join(format!("trace_{}.ndjson", run_name(&run_report))),
                &ndjson,
            )?;
        }
        println!(
            "{}: rounds={} timed_out={} report={}",
            run_name(&run_report),
            run_report.rounds_executed,
            run_report.timed_out,
            base.with_extension("json").display()
        );
    }
    Ok(timed_out)
}

fn cmd_sweep(common: &CommonArgs, axis: &str, values: &str, seeds: &str) -> anyhow::Result<bool> {
    let axis: SweepAxis = axis.parse().map_err(|e: String| anyhow!(e))?;
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(anyhow!("sweep needs at least one value"));
    }
    let seeds = parse_seeds(seeds)?;
    let base_text = std::fs::read_to_string(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    let mut jobs: Vec<(RunConfig, u64)> = Vec::new();
    let mut labels: Vec<(String, u64)> = Vec::new();
    for value in &values {
        let mut doc: serde_json::Value = serde_json::from_str(&base_text)?;
        for entry in &common.overrides {
            let (key, v) = entry
                .split_once('=')
                .ok_or_else(|| anyhow!("override {entry:?} is not KEY=VALUE"))?;
            apply_override(&mut doc, key, v).map_err(|e| anyhow!(e))?;
        }
        apply_override(&mut doc, axis.dotted_path(), value).map_err(|e| anyhow!(e))?;
        let config = RunConfig::from_value(doc).map_err(|e| anyhow!(e))?;
        for &seed in &seeds {
            jobs.push((config.clone(), seed));
            labels.push((value.to_string(), seed));
        }
    }
    let outputs = runner::execute_batch(&jobs, false, jobs_of(common));
    let axis_name = format!("{:?}", axis).to_lowercase();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut timed_out = false;
    for (output, (value, _seed)) in outputs.into_iter().zip(labels) {
        let out = output.map_err(|e| anyhow!(e))?;
        timed_out |= out.report.timed_out;
        if rows.is_empty() {
            rows.push(report::sweep_header(&out.report.scenario, &out.report));
        }
        rows.push(report::sweep_row(&out.report, &axis_name, &value));
    }
    let path = common.out.join(format!("sweep_{axis_name}.csv"));
    write(&path, &report::write_csv(&rows))?;
    println!("sweep over {axis_name}: {} runs -> {}", rows.len() - 1, path.display());
    Ok(timed_out)
}

fn cmd_compare(common: &CommonArgs, seeds: &str) -> anyhow::Result<bool> {
    let config = load_config(common)?;
    if config.scenario == ScenarioKind::Walkthrough {
        return Err(anyhow!("compare requires a scenario with both modes; walkthrough has one"));
    }
    let seeds = parse_seeds(seeds)?;
    let mut jobs: Vec<(RunConfig, u64)> = Vec::new();
    for &seed in &seeds {
        let mut baseline = config.clone();
        baseline.mode = Mode::BaselineDirect;
        let mut gossip = config.clone();
        gossip.mode = Mode::GossipAugmented;
        jobs.push((baseline, seed));
        jobs.push((gossip, seed));
    }
    let outputs = runner::execute_batch(&jobs, false, jobs_of(common));
    let mut reports = Vec::with_capacity(outputs.len());
    let mut timed_out = false;
    for output in outputs {
        let out = output.map_err(|e| anyhow!(e))?;
        timed_out |= out.report.timed_out;
        reports.push(out.report);
    }
    let mut rows: Vec<Vec<String>> = vec![vec![
        "scenario".into(),
        "seed".into(),
        "metric".into(),
        "baseline".into(),
        "gossip".into(),
        "delta".into(),
    ]];
    #[derive(Default)]
    struct Tally {
        gossip_lower: u64,
        baseline_lower: u64,
        ties: u64,
        deltas: Vec<f64>,
    }
    let mut tallies: BTreeMap<String, Tally> = BTreeMap::new();
    let mut byte_ratios: Vec<f64> = Vec::new();
    for pair in reports.chunks(2) {
        let (baseline, gossip) = (&pair[0], &pair[1]);
        if baseline.env_hash != gossip.env_hash {
            return Err(anyhow!(
                "environment hash mismatch at seed {}: paired runs are not comparable",
                baseline.seed
            ));
        }
        if baseline.traffic.total_bytes > 0 {
            byte_ratios
                .push(gossip.traffic.total_bytes as f64 / baseline.traffic.total_bytes as f64);
        }
        let b: BTreeMap<&str, String> = report::metric_pairs(baseline).into_iter().collect();
        let g: BTreeMap<&str, String> = report::metric_pairs(gossip).into_iter().collect();
        for (metric, bv) in &b {
            let gv = g.get(metric).cloned().unwrap_or_default();
            let delta = match (bv.parse::<f64>(), gv.parse::<f64>()) {
                (Ok(bn), Ok(gn)) => {
                    let t = tallies.entry(metric.to_string()).or_default();
                    t.deltas.push(gn - bn);
                    if gn < bn {
                        t.gossip_lower += 1;
                    } else if bn < gn {
                        t.baseline_lower += 1;
                    } else {
                        t.ties += 1;
                    }
                    format!("{}", gn - bn)
                }
                _ => String::new(),
            };
            rows.push(vec![
                baseline.scenario.clone(),
                baseline.seed.to_string(),
                metric.to_string(),
                bv.clone(),
                gv,
                delta,
            ]);
        }
    }
    let csv_path = common.out.join("compare.csv");
    write(&csv_path, &report::write_csv(&rows))?;
    let mut summary: BTreeMap<String, serde_json::Value> = tallies
        .into_iter()
        .map(|(metric, t)| {
            let mean = if t.deltas.is_empty() {
                None
            } else {
                Some(t.deltas.iter().sum::<f64>() / t.deltas.len() as f64)
            };
            (
                metric,
                serde_json::json!({
                    "gossip_lower": t.gossip_lower,
                    "baseline_lower": t.baseline_lower,
                    "ties": t.ties,
                    "mean_delta_gossip_minus_baseline": mean,
                }),
            )
        })
        .collect();
    // Bandwidth efficiency ratio: gossip bytes over baseline bytes, per
    // paired seed.
    if !byte_ratios.is_empty() {
        summary.insert(
            "bandwidth_efficiency_ratio".to_string(),
            serde_json::json!({
                "mean": byte_ratios.iter().sum::<f64>() / byte_ratios.len() as f64,
                "per_seed": byte_ratios,
            }),
        );
    }
    let json_path = common.out.join("compare.json");
    write(&json_path, &format!("{}\n", serde_json::to_string_pretty(&summary)?))?;
    println!(
        "compared {} seeds -> {} and {}",
        seeds.len(),
        csv_path.display(),
        json_path.display()
    );
    Ok(timed_out)
}
