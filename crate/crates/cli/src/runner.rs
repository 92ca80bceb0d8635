//! Grid execution and results plumbing.
//!
//! The study is a cartesian product of dataset, model, correction, and flip
//! rate; each cell runs stratified cross-validation and yields one record
//! per fold. Cells are independent rayon work items whose seeds derive from
//! (config seed, dataset, model, eta) -- the correction deliberately stays
//! out of the derivation so all three corrections see identical folds,
//! noise, and per-fold model seeds and their scores are comparable row for
//! row. Records stream to `<out>.partial` as cells finish (crash
//! visibility); the final file is rewritten sorted, so output bytes do not
//! depend on worker count or scheduling.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rayon::prelude::*;

use noisytree_core::correction::CorrectionKind;
use noisytree_core::dataset::{parse_arff, parse_csv, Dataset, LabelColumn};
use noisytree_core::evaluation::{cross_validate_timed, CvOptions, ModelSpec, ScoreSummary};
use noisytree_core::noise::NoiseSpec;
use noisytree_core::seeding::{self, RNG_ALGORITHM};
use noisytree_openml::{verify_descriptor, Client, DatasetDescriptor};

use crate::config::{DatasetSource, ExperimentConfig};

/// Why a run could not proceed; the distinction drives the process exit code.
#[derive(Debug)]
pub enum RunFailure {
    Validation(String),
    Runtime(String),
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunFailure::Validation(msg) | RunFailure::Runtime(msg) => write!(f, "{msg}"),
        }
    }
}

pub const RESULT_HEADER: &str = "dataset,model,correction,eta,fold,f1_weighted,seed,wall_time_ms";
pub const SUMMARY_HEADER: &str = "dataset,model,correction,eta,f1_mean,f1_std,n_folds";

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRecord {
    pub dataset: String,
    pub model: String,
    pub correction: String,
    pub eta: f64,
    pub fold: usize,
    pub f1_weighted: f64,
    pub seed: u64,
    pub wall_time_ms: u64,
}

impl ResultRecord {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{:.6},{},{:.6},{},{}",
            self.dataset,
            self.model,
            self.correction,
            self.eta,
            self.fold,
            self.f1_weighted,
            self.seed,
            self.wall_time_ms
        )
    }

    fn sort_key(&self) -> (&str, &str, &str, u64, usize) {
        // Etas are validated nonnegative, so the bit pattern orders them.
        (
            &self.dataset,
            &self.model,
            &self.correction,
            self.eta.to_bits(),
            self.fold,
        )
    }
}

pub fn sort_records(records: &mut [ResultRecord]) {
    records.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

/// Byte-stable CSV: pinned header, 6-decimal floats, UNIX newlines.
pub fn render_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from(RESULT_HEADER);
    out.push('\n');
    for record in records {
        out.push_str(&record.csv_line());
        out.push('\n');
    }
    out
}

pub fn emit_csv(records: &[ResultRecord], path: &Path) -> Result<(), RunFailure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| RunFailure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    std::fs::write(path, render_csv(records))
        .map_err(|e| RunFailure::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn parse_results_csv(text: &str) -> Result<Vec<ResultRecord>, RunFailure> {
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == RESULT_HEADER => {}
        other => {
            return Err(RunFailure::Runtime(format!(
                "results header is {other:?}, expected {RESULT_HEADER:?}"
            )))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(RunFailure::Runtime(format!(
                "line {}: {} fields, expected 8",
                i + 2,
                fields.len()
            )));
        }
        let parse_err =
            |what: &str, v: &str| RunFailure::Runtime(format!("line {}: bad {what} {v:?}", i + 2));
        records.push(ResultRecord {
            dataset: fields[0].to_string(),
            model: fields[1].to_string(),
            correction: fields[2].to_string(),
            eta: fields[3].parse().map_err(|_| parse_err("eta", fields[3]))?,
            fold: fields[4].parse().map_err(|_| parse_err("fold", fields[4]))?,
            f1_weighted: fields[5]
                .parse()
                .map_err(|_| parse_err("f1_weighted", fields[5]))?,
            seed: fields[6].parse().map_err(|_| parse_err("seed", fields[6]))?,
            wall_time_ms: fields[7]
                .parse()
                .map_err(|_| parse_err("wall_time_ms", fields[7]))?,
        });
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub dataset: String,
    pub model: String,
    pub correction: String,
    pub eta: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub n_folds: usize,
}

/// Mean and sample std of f1 per (dataset, model, correction, eta) cell,
/// rows in the records' sorted order.
pub fn summarize(records: &[ResultRecord]) -> Vec<SummaryRow> {
    let mut sorted = records.to_vec();
    sort_records(&mut sorted);
    let mut rows: Vec<SummaryRow> = Vec::new();
    for record in &sorted {
        let same_cell = rows.last().is_some_and(|row| {
            (&row.dataset, &row.model, &row.correction, row.eta.to_bits())
                == (
                    &record.dataset,
                    &record.model,
                    &record.correction,
                    record.eta.to_bits(),
                )
        });
        if !same_cell {
            rows.push(SummaryRow {
                dataset: record.dataset.clone(),
                model: record.model.clone(),
                correction: record.correction.clone(),
                eta: record.eta,
                f1_mean: 0.0,
                f1_std: 0.0,
                n_folds: 0,
            });
        }
        let row = rows.last_mut().expect("just pushed");
        // Stash the running scores in f1_mean until the cell closes; the
        // final pass below replaces them with the summary statistics.
        row.n_folds += 1;
        row.f1_mean += record.f1_weighted;
    }
    // Second pass for the std, which needs every fold of the cell.
    let mut at = 0;
    for row in &mut rows {
        let scores: Vec<f64> = sorted[at..at + row.n_folds]
            .iter()
            .map(|r| r.f1_weighted)
            .collect();
        at += row.n_folds;
        let summary = ScoreSummary::from_scores(scores);
        row.f1_mean = summary.mean;
        row.f1_std = summary.std;
    }
    rows
}

pub fn render_summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{}\n",
            row.dataset, row.model, row.correction, row.eta, row.f1_mean, row.f1_std, row.n_folds
        ));
    }
    out
}

/// Parses a local file by extension. CSV label column: `class` when the
/// header has it, otherwise the last column.
pub fn load_local(path: &Path) -> Result<Dataset, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let extension = path
        .extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    let parsed = match extension.as_str() {
        "arff" => parse_arff(&text),
        "csv" => {
            let header = text.lines().next().unwrap_or_default();
            let column = if header.split(',').any(|h| h.trim() == "class") {
                LabelColumn::Name("class".into())
            } else {
                let last = header.split(',').count().saturating_sub(1);
                LabelColumn::Index(last)
            };
            parse_csv(&text, &column)
        }
        other => return Err(format!("unsupported dataset extension {other:?}")),
    };
    parsed.map_err(|e| format!("{}: {e}", path.display()))
}

/// Resolves every configured dataset to (name, parsed data). Descriptor
/// mismatches warn on stderr rather than abort: the shapes still make a
/// valid study, just not the tabulated one.
pub fn load_datasets(config: &ExperimentConfig) -> Result<Vec<(String, Dataset)>, RunFailure> {
    let mut out = Vec::new();
    for source in &config.datasets {
        let name = source.name();
        let data = match source {
            DatasetSource::Local(path) => load_local(path).map_err(RunFailure::Runtime)?,
            DatasetSource::Remote(d) => fetch_remote(d, &config.cache_dir)?,
        };
        for &eta in &config.etas {
            let bound = (data.c() as f64 - 1.0) / data.c() as f64;
            if eta >= bound {
                return Err(RunFailure::Validation(format!(
                    "flip rate {eta} is not below ({}-1)/{} for dataset {name}",
                    data.c(),
                    data.c()
                )));
            }
        }
        out.push((name, data));
    }
    Ok(out)
}

fn fetch_remote(d: &DatasetDescriptor, cache_dir: &Path) -> Result<Dataset, RunFailure> {
    let client = Client::http();
    let outcome = client
        .fetch(d.openml_id, cache_dir)
        .map_err(|e| RunFailure::Runtime(format!("dataset {}: {e}", d.name)))?;
    let text = std::fs::read_to_string(&outcome.path)
        .map_err(|e| RunFailure::Runtime(format!("dataset {}: {e}", d.name)))?;
    let data = parse_arff(&text)
        .map_err(|e| RunFailure::Runtime(format!("dataset {}: {e}", d.name)))?;
    let report = verify_descriptor(&data, d);
    for mismatch in &report.mismatches {
        eprintln!("warning: {mismatch}");
    }
    Ok(data)
}

struct Cell {
    dataset: usize,
    model: ModelSpec,
    correction: CorrectionKind,
    eta: f64,
}

pub struct RunSummary {
    pub records: usize,
    pub out: PathBuf,
}

/// Executes the whole grid and writes the sorted CSV plus a small metadata
/// sidecar. `workers` bounds the rayon pool; `timings` turns on wall-clock
/// capture, which is off by default so output files are byte-stable.
pub fn run_experiment(
    config: &ExperimentConfig,
    out: &Path,
    workers: Option<usize>,
    timings: bool,
) -> Result<RunSummary, RunFailure> {
    let datasets = load_datasets(config)?;
    let mut cells = Vec::new();
    for (i, _) in datasets.iter().enumerate() {
        for &model in &config.parsed_models() {
            for correction in config.parsed_corrections() {
                for &eta in &config.etas {
                    cells.push(Cell {
                        dataset: i,
                        model,
                        correction,
                        eta,
                    });
                }
            }
        }
    }

    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)
            .map_err(|e| RunFailure::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    }
    let partial_path = out.with_extension("csv.partial");
    let partial = std::fs::File::create(&partial_path)
        .map_err(|e| RunFailure::Runtime(format!("cannot write {}: {e}", partial_path.display())))?;
    let partial = Mutex::new(std::io::BufWriter::new(partial));
    writeln!(partial.lock().expect("no poison"), "{RESULT_HEADER}")
        .map_err(|e| RunFailure::Runtime(e.to_string()))?;

    let criterion = config.parsed_criterion();
    let options = CvOptions {
        noise_on_test: config.noise_on_test,
    };
    let run_cell = |cell: &Cell| -> Result<Vec<ResultRecord>, RunFailure> {
        let (name, data) = &datasets[cell.dataset];
        // The correction stays out of the seed so corrections share folds
        // and noise within a (dataset, model, eta) cell.
        let cell_seed = seeding::derive(
            config.seed,
            "cell",
            &[
                seeding::hash_tag(name),
                seeding::hash_tag(cell.model.name()),
                cell.eta.to_bits(),
            ],
        );
        let noise = NoiseSpec::new(cell.eta, seeding::derive(cell_seed, "noise", &[]))
            .map_err(|e| RunFailure::Runtime(format!("{name}: {e}")))?;
        let (summary, times) = cross_validate_timed(
            data,
            &cell.model,
            criterion,
            cell.correction,
            &noise,
            config.folds,
            cell_seed,
            &options,
        )
        .map_err(|e| {
            RunFailure::Runtime(format!(
                "{name} {} eta {}: {e}",
                cell.model.name(),
                cell.eta
            ))
        })?;
        let records: Vec<ResultRecord> = summary
            .per_fold
            .iter()
            .zip(&times)
            .enumerate()
            .map(|(fold, (&f1, &ms))| ResultRecord {
                dataset: name.clone(),
                model: cell.model.name().to_string(),
                correction: cell.correction.name().to_string(),
                eta: cell.eta,
                fold,
                f1_weighted: f1,
                seed: cell_seed,
                wall_time_ms: if timings { ms } else { 0 },
            })
            .collect();
        let mut sink = partial.lock().expect("no poison");
        for record in &records {
            writeln!(sink, "{}", record.csv_line())
                .map_err(|e| RunFailure::Runtime(e.to_string()))?;
        }
        Ok(records)
    };

    let nested: Result<Vec<Vec<ResultRecord>>, RunFailure> = match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| RunFailure::Runtime(format!("thread pool: {e}")))?;
            pool.install(|| cells.par_iter().map(run_cell).collect())
        }
        None => cells.par_iter().map(run_cell).collect(),
    };
    let mut records: Vec<ResultRecord> = nested?.into_iter().flatten().collect();
    sort_records(&mut records);
    emit_csv(&records, out)?;
    write_meta(config, out, records.len(), timings)?;
    let _ = std::fs::remove_file(&partial_path);
    Ok(RunSummary {
        records: records.len(),
        out: out.to_path_buf(),
    })
}

fn write_meta(
    config: &ExperimentConfig,
    out: &Path,
    records: usize,
    timings: bool,
) -> Result<(), RunFailure> {
    let meta = serde_json::json!({
        "rng_algorithm": RNG_ALGORITHM,
        "seed": config.seed,
        "folds": config.folds,
        "records": records,
        "timings": timings,
    });
    let path = PathBuf::from(format!("{}.meta.json", out.display()));
    std::fs::write(&path, format!("{meta:#}\n"))
        .map_err(|e| RunFailure::Runtime(format!("cannot write {}: {e}", path.display())))
}
