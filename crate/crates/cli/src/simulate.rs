use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::str::FromStr;

use clap::Args;

use mrconformal::sim::{self, ExperimentConfig, Method, Scenario, Setting, SimConfig};

use crate::config::{self, ConfigFile};
use crate::{Completion, Failure, SharedArgs};

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Settings to run, comma separated (S1..S4) [default: all]
    #[arg(long, value_delimiter = ',')]
    pub settings: Option<Vec<String>>,
    /// Scenarios to run, comma separated (A, B, C) [default: all]
    #[arg(long, value_delimiter = ',')]
    pub scenarios: Option<Vec<String>>,
    /// Methods, comma separated (cm_mrl, impute_sc, sc_cc, oracle) [default: all]
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Monte Carlo replicates per cell [default: 50]
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Sample size per replicate [default: 1600]
    #[arg(long)]
    pub n: Option<usize>,
    /// Fresh fully observed points used to measure coverage [default: 2000]
    #[arg(long)]
    pub n_eval: Option<usize>,
    /// Training share of each replicate [default: 0.5]
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Outcome model (index among those available) used by impute_sc [default: 0]
    #[arg(long)]
    pub impute_sc_model: Option<usize>,
    /// Use sigma = 1 instead of 0.6 in scenario C
    #[arg(long)]
    pub c_unit_sigma: bool,
    /// Worker threads [default: all cores]
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub shared: SharedArgs,
}

fn parse_list<T: FromStr<Err = mrconformal::Error>>(
    flag: Option<&Vec<String>>,
    file: Option<&Vec<String>>,
    all: &[T],
) -> Result<Vec<T>, Failure>
where
    T: Copy + PartialEq,
{
    let Some(items) = flag.or(file) else { return Ok(all.to_vec()) };
    let mut out = Vec::new();
    for s in items {
        let v = s.trim().parse::<T>().map_err(|e| Failure::Usage(e.to_string()))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Failure::Usage("empty selection list".into()));
    }
    Ok(out)
}

pub fn experiment_config(args: &SimulateArgs, file: &ConfigFile) -> Result<(ExperimentConfig, PathBuf, Option<usize>), Failure> {
    let shared = config::resolve(&args.shared, file)?;
    let replicates = args.replicates.or(file.replicates).unwrap_or(50);
    if replicates < 1 {
        return Err(Failure::Usage("--replicates must be at least 1".into()));
    }
    let defaults = SimConfig::default();
    let n = args.n.or(file.n).unwrap_or(defaults.n);
    let n_eval = args.n_eval.or(file.n_eval).unwrap_or(defaults.n_eval);
    if n < 4 || n_eval < 1 {
        return Err(Failure::Usage("--n must be at least 4 and --n-eval at least 1".into()));
    }
    let train_fraction = config::check_fraction(args.train_fraction.or(file.train_fraction).unwrap_or(defaults.train_fraction))?;
    let threads = args.threads.or(file.threads);
    if threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let cfg = ExperimentConfig {
        settings: parse_list(args.settings.as_ref(), file.settings.as_ref(), &Setting::ALL)?,
        scenarios: parse_list(args.scenarios.as_ref(), file.scenarios.as_ref(), &Scenario::ALL)?,
        methods: parse_list(args.methods.as_ref(), file.methods.as_ref(), &Method::ALL)?,
        replicates,
        master_seed: shared.seed,
        sim: SimConfig {
            n,
            n_eval,
            train_fraction,
            calibration: shared.calibration,
            impute_sc_model: args.impute_sc_model.or(file.impute_sc_model).unwrap_or(defaults.impute_sc_model),
            c_unit_sigma: args.c_unit_sigma || file.c_unit_sigma.unwrap_or(false),
        },
    };
    Ok((cfg, shared.out_dir.unwrap_or_else(|| PathBuf::from(".")), threads))
}

pub fn run(args: &SimulateArgs, file: &ConfigFile) -> Result<Completion, Failure> {
    let (cfg, out_dir, threads) = experiment_config(args, file)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", out_dir.display())))?;

    let results = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Failure::Usage(format!("cannot start thread pool: {e}")))?
            .install(|| sim::run_experiment(&cfg)),
        None => sim::run_experiment(&cfg),
    }?;

    let open = |name: &str| -> Result<BufWriter<File>, Failure> {
        let path = out_dir.join(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
    };
    sim::write_summary_csv(&results, open("summary.csv")?)?;
    sim::write_lengths_csv(&results, open("lengths.csv")?)?;

    for s in results.summaries.iter().filter(|s| s.failed > 0) {
        eprintln!(
            "failed_cell method={} setting={} scenario={} failed={} ok={}",
            s.method.name(),
            s.setting,
            s.scenario,
            s.failed,
            s.replicates
        );
    }
    if let Some(r) = results.records.iter().find(|r| r.result.is_err()) {
        eprintln!("first_failure={:?}", r.result.as_ref().err().unwrap());
    }
    eprintln!("cells={} records={} out_dir={}", results.summaries.len(), results.records.len(), out_dir.display());
    Ok(if results.any_failed() { Completion::Partial } else { Completion::Success })
}
