use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hypernet::data::{
    generate_synthetic, load_dataset, save_dataset, MultiModalDataset, SyntheticSpec,
    MANIFEST_FILE,
};
use hypernet::Error;

use crate::args::{
    Cli, Command, DepthSweepArgs, GenSyntheticArgs, RatioSweepArgs, RunArgs, Source, SweepCommon,
    ValidateDatasetArgs,
};
use crate::report::SweepReport;
use crate::sweep::{self, Job};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = if e.is_validation() || matches!(e, Error::Io { .. }) {
            EXIT_VALIDATION
        } else {
            EXIT_NUMERIC
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::from(Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(a) => run(a),
        Command::DepthSweep(a) => depth_sweep(a),
        Command::RatioSweep(a) => ratio_sweep(a),
        Command::GenSynthetic(a) => gen_synthetic(a),
        Command::ValidateDataset(a) => validate_dataset(a),
    }
}

pub fn load_spec(arg: &str) -> Result<SyntheticSpec, Error> {
    if arg == "default" {
        return Ok(SyntheticSpec::benchmark());
    }
    let path = PathBuf::from(arg);
    let text = fs::read_to_string(&path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        file: path,
        line: e.line(),
        msg: e.to_string(),
    })
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

pub fn load_source(source: &Source) -> Result<MultiModalDataset, Error> {
    match (&source.dataset, &source.synthetic) {
        (Some(path), _) => load_dataset(manifest_path(path)),
        (None, Some(spec)) => generate_synthetic(&load_spec(spec)?),
        (None, None) => unreachable!("clap requires one source"),
    }
}

fn write_report(report: &SweepReport, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| io_error(path, e))?;
            report
                .write_csv(std::io::BufWriter::new(file))
                .map_err(|e| CliError {
                    code: EXIT_VALIDATION,
                    message: format!("{}: {e}", path.display()),
                })
        }
        None => report.write_csv(std::io::stdout().lock()).map_err(|e| CliError {
            code: EXIT_VALIDATION,
            message: e,
        }),
    }
}

fn run(a: RunArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let ds = load_source(&a.source)?;
    let job = Job {
        family: a.family,
        depth: a.depth,
        ratio: None,
        seed: a.seed,
    };
    sweep::validate_jobs(&a.settings, &[job], &ds)?;
    let prepared = sweep::prepare(&ds, &a.settings, &job)?;
    let outcome = sweep::run_job(&ds, &a.settings, &job);
    let result = outcome.as_ref().map_err(|e| CliError {
        code: if e.is_validation() { EXIT_VALIDATION } else { EXIT_NUMERIC },
        message: e.to_string(),
    })?;
    let count = |m: &[bool]| m.iter().filter(|&&b| b).count();
    println!(
        "dataset={} family={} depth={} label_mode={} seed={} train={} test={} final_acc={:.6} best_acc={:.6} final_loss={:.6}",
        ds.name,
        job.family,
        job.depth,
        a.settings.label_mode,
        job.seed,
        count(&prepared.train_mask),
        count(&prepared.test_mask),
        result.final_test_accuracy,
        result.best_test_accuracy,
        result.loss_curve.last().copied().unwrap_or(f64::NAN),
    );
    if let Some(out) = &a.out {
        let row = sweep::to_row(&ds, &a.settings, &job, &outcome, a.timing);
        write_report(&SweepReport::new(vec![row]), Some(out))?;
    }
    eprintln!("elapsed {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn finish_sweep(
    ds: &MultiModalDataset,
    common: &SweepCommon,
    jobs: Vec<Job>,
    start: Instant,
) -> Result<(), CliError> {
    sweep::validate_jobs(&common.settings, &jobs, ds)?;
    let outcomes = sweep::run_all(ds, &common.settings, &jobs, common.jobs as usize);
    let rows = jobs
        .iter()
        .zip(&outcomes)
        .map(|(job, o)| sweep::to_row(ds, &common.settings, job, o, common.timing))
        .collect();
    let report = SweepReport::new(rows);
    write_report(&report, common.out.as_deref())?;
    let summary = report.summary();
    if common.out.is_some() {
        print!("{summary}");
        std::io::stdout().flush().ok();
    } else {
        eprint!("{summary}");
    }
    let failed = outcomes.iter().filter(|o| o.is_err()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", jobs.len());
    }
    eprintln!("elapsed {:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn seeds(common: &SweepCommon, n: usize) -> Result<Vec<u64>, CliError> {
    if n == 0 {
        return Err(Error::Parameter("--seeds must be at least 1".into()).into());
    }
    Ok((0..n as u64).map(|i| common.seed + i).collect())
}

fn depth_sweep(a: DepthSweepArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if a.depths.is_empty() || a.family.is_empty() {
        return Err(Error::Parameter("need at least one family and one depth".into()).into());
    }
    let seeds = seeds(&a.common, a.seeds)?;
    let ds = load_source(&a.common.source)?;
    let mut jobs = Vec::new();
    for &family in &a.family {
        for &depth in &a.depths {
            for &seed in &seeds {
                jobs.push(Job {
                    family,
                    depth,
                    ratio: None,
                    seed,
                });
            }
        }
    }
    finish_sweep(&ds, &a.common, jobs, start)
}

fn ratio_sweep(a: RatioSweepArgs) -> Result<(), CliError> {
    let start = Instant::now();
    if a.ratios.is_empty() || a.family.is_empty() {
        return Err(Error::Parameter("need at least one family and one ratio".into()).into());
    }
    let seeds = seeds(&a.common, a.seeds)?;
    let ds = load_source(&a.common.source)?;
    let mut jobs = Vec::new();
    for spec in &a.family {
        for &ratio in &a.ratios {
            for &seed in &seeds {
                jobs.push(Job {
                    family: spec.family,
                    depth: spec.depth.unwrap_or(a.depth),
                    ratio: Some(ratio),
                    seed,
                });
            }
        }
    }
    finish_sweep(&ds, &a.common, jobs, start)
}

fn gen_synthetic(a: GenSyntheticArgs) -> Result<(), CliError> {
    let spec = load_spec(&a.synthetic)?;
    let ds = generate_synthetic(&spec)?;
    let manifest = save_dataset(&ds, &a.out, a.force)?;
    println!(
        "wrote {} ({} vertices, {} classes, {} modalities) to {}",
        manifest.name,
        manifest.n_vertices,
        manifest.n_classes,
        manifest.modalities.len(),
        a.out.display()
    );
    Ok(())
}

fn validate_dataset(a: ValidateDatasetArgs) -> Result<(), CliError> {
    let ds = load_dataset(manifest_path(&a.dataset))?;
    let n = ds.n_vertices();
    println!("dataset      {}", ds.name);
    println!("vertices     {n}");
    println!("classes      {}", ds.n_classes);
    println!("knn_k        {}", ds.knn_k);
    println!(
        "label_rate   {:.4} ({} train, {} test)",
        ds.label_rate(),
        ds.train_mask.iter().filter(|&&b| b).count(),
        ds.test_mask.iter().filter(|&&b| b).count()
    );
    println!("train/class  {:?}", ds.class_counts(&ds.train_mask));
    for m in &ds.modalities {
        println!(
            "modality     {} dim={} hyperedges={}",
            m.id,
            m.features.cols(),
            m.hypergraph.n_hyperedges()
        );
    }
    Ok(())
}
