use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::Args;

use mrconformal::calibration::{self, PredictionInterval};
use mrconformal::data::{self, format_real};
use mrconformal::{mr, seeds, Dataset, ModelSpec};

use crate::config::{self, ConfigFile};
use crate::{Completion, Failure, SharedArgs};

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Training CSV with covariates, the outcome (empty when missing) and
    /// optionally an observation indicator column
    pub train_csv: PathBuf,
    /// CSV of covariate rows to predict
    pub new_csv: PathBuf,
    /// Outcome column name [default: y]
    #[arg(long)]
    pub outcome_column: Option<String>,
    /// Optional 0/1 observation indicator column in the training CSV
    #[arg(long)]
    pub r_column: Option<String>,
    /// Propensity model covariates, comma separated; repeat for several
    /// models; `1` for intercept only [default: all covariates]
    #[arg(long)]
    pub propensity: Vec<String>,
    /// Outcome model covariates, comma separated; repeat for several
    /// models [default: all covariates]
    #[arg(long)]
    pub outcome: Vec<String>,
    /// Training share of the internal split [default: 0.5]
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[command(flatten)]
    pub shared: SharedArgs,
}

/// Parses a model term list such as `X1,X3` against the training columns.
pub fn parse_terms(list: &str, ds: &Dataset) -> Result<Vec<usize>, Failure> {
    let list = list.trim();
    if list.is_empty() || list == "1" {
        return Ok(Vec::new());
    }
    list.split(',')
        .map(|name| {
            let name = name.trim();
            ds.column_index(name).ok_or_else(|| {
                Failure::Usage(format!("unknown covariate `{name}`; available: {}", ds.names().join(", ")))
            })
        })
        .collect()
}

/// Covariate rows of `new_csv` in training column order.
pub fn read_new_rows(path: &PathBuf, ds: &Dataset, ignore: &[&str]) -> Result<Vec<Vec<f64>>, Failure> {
    let file = File::open(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?.clone();
    let pos: HashMap<&str, usize> = headers.iter().enumerate().map(|(j, h)| (h, j)).collect();
    let missing: Vec<&str> = ds.names().iter().map(String::as_str).filter(|n| !pos.contains_key(n)).collect();
    let extra: Vec<&str> =
        headers.iter().filter(|h| !ds.names().iter().any(|n| n == h) && !ignore.contains(h)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Failure::Usage(format!(
            "schema mismatch between training and new CSV: missing [{}], unexpected [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    let cols: Vec<usize> = ds.names().iter().map(|n| pos[n.as_str()]).collect();
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Failure::Usage(format!("{} row {}: {e}", path.display(), k + 1)))?;
        let row = cols
            .iter()
            .map(|&j| {
                rec[j].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Failure::Usage(format!("{} row {}: `{}` is not a number in column `{}`", path.display(), k + 1, &rec[j], &headers[j]))
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_intervals<W: Write>(intervals: &[PredictionInterval], writer: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["prediction", "lower", "upper"])?;
    for iv in intervals {
        w.write_record([format_real(iv.center), format_real(iv.lower()), format_real(iv.upper())])?;
    }
    w.flush()
}

pub fn run(args: &PredictArgs, file: &ConfigFile) -> Result<Completion, Failure> {
    let shared = config::resolve(&args.shared, file)?;
    let y_col = args.outcome_column.clone().or_else(|| file.outcome_column.clone()).unwrap_or_else(|| "y".into());
    let r_col = args.r_column.clone().or_else(|| file.r_column.clone());
    let fraction = config::check_fraction(args.train_fraction.or(file.train_fraction).unwrap_or(0.5))?;

    let ds = Dataset::load_csv(&args.train_csv, &y_col, r_col.as_deref())?;
    let all = ds.names().join(",");
    let pick = |flag: &Vec<String>, from_file: &Option<Vec<String>>| -> Vec<String> {
        if !flag.is_empty() {
            flag.clone()
        } else {
            from_file.clone().unwrap_or_else(|| vec![all.clone()])
        }
    };
    let prop_specs = pick(&args.propensity, &file.propensity)
        .iter()
        .map(|s| parse_terms(s, &ds).map(ModelSpec::propensity))
        .collect::<Result<Vec<_>, _>>()?;
    let out_specs = pick(&args.outcome, &file.outcome)
        .iter()
        .map(|s| parse_terms(s, &ds).map(ModelSpec::outcome))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ignore = vec![y_col.as_str()];
    if let Some(r) = r_col.as_deref() {
        ignore.push(r);
    }
    let rows = read_new_rows(&args.new_csv, &ds, &ignore)?;

    let seed = shared.seed;
    let opts = shared.calibration;
    let split = data::split(ds.n(), fraction, seeds::derive(seed, &["split"]))?;
    let trained = mr::train(&ds, &split.train, &prop_specs, &out_specs, opts.n_draws, seeds::derive(seed, &["train"]), &opts.el)?;
    let cal = calibration::calibrate(
        &trained.fit,
        &ds,
        &split.calib,
        &trained.propensities,
        &trained.outcome_models(),
        &opts,
        seeds::derive(seed, &["calib"]),
    )?;

    let intervals: Vec<PredictionInterval> =
        rows.iter().map(|x| calibration::predict_interval(&trained.fit, x, cal.q_mr)).collect();
    match &shared.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", dir.display())))?;
            let path = dir.join("intervals.csv");
            let f = File::create(&path).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))?;
            write_intervals(&intervals, BufWriter::new(f)).map_err(|e| Failure::Usage(e.to_string()))?;
        }
        None => write_intervals(&intervals, io::stdout().lock()).map_err(|e| Failure::Usage(e.to_string()))?,
    }

    let join = |v: &[f64]| v.iter().map(|x| format_real(*x)).collect::<Vec<_>>().join(",");
    let lambda_norm = cal.lambda.iter().map(|l| l * l).sum::<f64>().sqrt();
    let train_el = &trained.fit.train_weights;
    eprintln!("n_train={} n_calib={}", split.train.len(), split.calib.len());
    eprintln!("m_train={} m_calib={}", ds.complete_cases(&split.train).len(), cal.d.len());
    eprintln!("propensity_models={}", prop_specs.iter().map(|s| s.label(&ds)).collect::<Vec<_>>().join(";"));
    eprintln!("outcome_models={}", out_specs.iter().map(|s| s.label(&ds)).collect::<Vec<_>>().join(";"));
    eprintln!("beta_mr={}", join(&trained.fit.beta));
    eprintln!("train_el_iterations={} train_dropped_moments={:?}", train_el.iterations, train_el.dropped_columns);
    eprintln!("calib_el_iterations={} calib_dropped_moments={:?}", cal.el.iterations, cal.el.dropped_columns);
    eprintln!("q_k={}", join(&cal.q_k));
    eprintln!("xi_k={}", join(&cal.xi_k));
    eprintln!("lambda_norm={}", format_real(lambda_norm));
    eprintln!("level={}", format_real(cal.level));
    eprintln!("q_mr={}", format_real(cal.q_mr));
    Ok(Completion::Success)
}
