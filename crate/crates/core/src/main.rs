use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use wiremark::matrix_text::read_matrix_text;
use wiremark::pipeline::{run_pipeline, write_stage_dumps};
use wiremark::signal::{batch_compare, ccf_max, read_results_csv, roc, write_results_csv, Signal};
use wiremark::synth::{generate, make_pair, SynthSpec};
use wiremark::x3p::{read_x3p, write_x3p, X3pMeta};
use wiremark::{PipelineParams, SurfaceMatrix};

#[derive(Parser)]
#[command(name = "wiremark", version, about = "Striation signals from topographic scans of cut wire surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ParamArgs {
    /// JSON parameter file; flags below override its values
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    min_overlap: Option<f64>,
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long)]
    margin_px: Option<usize>,
    #[arg(long)]
    theta_bins: Option<usize>,
    #[arg(long)]
    loess_span: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run all stages on one scan and write its signal
    Process {
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Run report path [default: <out>.report.json]
        #[arg(long)]
        report: Option<PathBuf>,
        /// Directory for intermediate surfaces and stage files
        #[arg(long)]
        dump_stages: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Maximized cross-correlation of two signal CSVs, as JSON
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Compare every pair of scans (x3p) or signals (csv) in a directory
    Batch {
        dir: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Worker threads [default: all cores]
        #[arg(long)]
        jobs: Option<usize>,
        /// Write each processed signal here
        #[arg(long)]
        signals_dir: Option<PathBuf>,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// ROC table from a batch results CSV
    Roc {
        results: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Leave same-tool, different-site pairs out of the negative class
        #[arg(long)]
        exclude_site_mismatch: bool,
    },
    /// Generate a synthetic scan and its ground truth
    Synth {
        /// JSON spec; defaults apply to missing fields
        spec: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// File stem of the scan
        #[arg(long, default_value = "synth")]
        name: String,
        /// Also write a second scan sharing (same) or not sharing (different) the signature
        #[arg(long)]
        pair: Option<PairKind>,
    },
    /// Print dimensions, resolution, missing fraction and metadata of a scan
    Inspect { input: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum PairKind {
    Same,
    Different,
}

/// Exit code with a message for stderr.
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn pipeline_failure(message: impl Into<String>) -> Failure {
    Failure {
        code: 3,
        message: message.into(),
    }
}

impl ParamArgs {
    fn resolve(&self) -> Result<PipelineParams, Failure> {
        let mut p = match &self.params {
            Some(path) => PipelineParams::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?,
            None => PipelineParams::default(),
        };
        if let Some(v) = self.min_overlap {
            p.min_overlap_frac = v;
        }
        if let Some(v) = self.delta {
            p.delta = v;
        }
        if let Some(v) = self.margin_px {
            p.margin_px = v;
        }
        if let Some(v) = self.theta_bins {
            p.theta_bins = v;
        }
        if let Some(v) = self.loess_span {
            p.loess_span = v;
        }
        p.validate().map_err(|e| usage(e.to_string()))?;
        Ok(p)
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn read_surface(path: &Path) -> Result<SurfaceMatrix, Failure> {
    let describe = |e: &dyn std::fmt::Display| usage(format!("{}: {e}", path.display()));
    if has_ext(path, "txt") {
        read_matrix_text(path).map_err(|e| describe(&e))
    } else {
        read_x3p(path).map(|(s, _)| s).map_err(|e| describe(&e))
    }
}

fn sha256_hex(path: &Path) -> Result<String, Failure> {
    let bytes = fs::read(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| usage(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn process_scan(path: &Path, params: &PipelineParams) -> Result<wiremark::pipeline::PipelineOutput, Failure> {
    let surface = read_surface(path)?;
    let mut out = run_pipeline(&surface, params)
        .map_err(|e| pipeline_failure(format!("{}: {} stage failed: {e}", path.display(), e.stage())))?;
    out.signal.source = stem(path);
    out.report.input = Some(path.display().to_string());
    out.report.input_sha256 = Some(sha256_hex(path)?);
    Ok(out)
}

fn cmd_process(
    input: &Path,
    out: &Path,
    report: Option<&Path>,
    dump: Option<&Path>,
    params: &ParamArgs,
) -> Result<(), Failure> {
    let params = params.resolve()?;
    let result = process_scan(input, &params)?;
    result
        .signal
        .save(out)
        .map_err(|e| usage(format!("{}: {e}", out.display())))?;
    let report_path = report.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("report.json"));
    write_json(&report_path, &result.report)?;
    if let Some(dir) = dump {
        write_stage_dumps(dir, &result).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
        write_json(&dir.join("report.json"), &result.report)?;
    }
    Ok(())
}

fn load_signal(path: &Path) -> Result<Signal, Failure> {
    Signal::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_compare(a: &Path, b: &Path, params: &ParamArgs) -> Result<(), Failure> {
    let params = params.resolve()?;
    let (sa, sb) = (load_signal(a)?, load_signal(b)?);
    let c = ccf_max(&sa, &sb, params.min_overlap_frac).map_err(|e| pipeline_failure(e.to_string()))?;
    #[derive(Serialize)]
    struct Out {
        ccf_max: f64,
        lag_um: f64,
        overlap: usize,
    }
    let text = serde_json::to_string(&Out {
        ccf_max: c.ccf_max,
        lag_um: c.lag_um,
        overlap: c.overlap,
    })
    .map_err(|e| usage(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn cmd_batch(dir: &Path, out: &Path, signals_dir: Option<&Path>, params: &ParamArgs) -> Result<(), Failure> {
    let params = params.resolve()?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && (has_ext(p, "x3p") || has_ext(p, "csv")))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(usage(format!("{}: no .x3p or .csv files", dir.display())));
    }
    let loaded: Vec<Result<Signal, Failure>> = files
        .par_iter()
        .map(|p| {
            if has_ext(p, "csv") {
                load_signal(p)
            } else {
                process_scan(p, &params).map(|o| o.signal)
            }
        })
        .collect();
    let mut signals = Vec::with_capacity(loaded.len());
    for (path, r) in files.iter().zip(loaded) {
        match r {
            Ok(s) => signals.push(s),
            Err(f) => log::warn!("skipping {}: {}", path.display(), f.message),
        }
    }
    if signals.len() < 2 {
        return Err(pipeline_failure("fewer than two scans could be processed"));
    }
    if let Some(sd) = signals_dir {
        fs::create_dir_all(sd).map_err(|e| usage(format!("{}: {e}", sd.display())))?;
        for s in &signals {
            let path = sd.join(format!("{}.csv", s.source));
            s.save(&path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        }
    }
    let batch = batch_compare(&signals, params.min_overlap_frac);
    for f in &batch.failures {
        log::warn!("{} vs {}: {}", f.a, f.b, f.error);
    }
    let file = fs::File::create(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    write_results_csv(&batch.results, file).map_err(|e| usage(e.to_string()))?;
    if !batch.failures.is_empty() {
        write_json(&out.with_extension("failures.json"), &batch.failures)?;
    }
    eprintln!(
        "{} signals, {} pairs scored, {} failed",
        signals.len(),
        batch.results.len(),
        batch.failures.len()
    );
    Ok(())
}

fn cmd_roc(results: &Path, out: &Path, exclude_site_mismatch: bool) -> Result<(), Failure> {
    let file = fs::File::open(results).map_err(|e| usage(format!("{}: {e}", results.display())))?;
    let rows = read_results_csv(file).map_err(|e| usage(format!("{}: {e}", results.display())))?;
    let summary = roc(&rows, !exclude_site_mismatch).map_err(|e| pipeline_failure(e.to_string()))?;
    let file = fs::File::create(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    summary.write_csv(file).map_err(|e| usage(e.to_string()))?;
    println!(
        "{{\"auc\":{},\"positives\":{},\"negatives\":{}}}",
        summary.auc, summary.positives, summary.negatives
    );
    Ok(())
}

fn cmd_synth(
    spec: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
    name: &str,
    pair: Option<PairKind>,
) -> Result<(), Failure> {
    let mut spec = match spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            SynthSpec::from_json(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    spec.validate().map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    let scans = match pair {
        None => vec![generate(&spec).map_err(|e| usage(e.to_string()))?],
        Some(kind) => {
            let (a, b) = make_pair(&spec, matches!(kind, PairKind::Same)).map_err(|e| usage(e.to_string()))?;
            vec![a, b]
        }
    };
    let n = scans.len();
    for (k, (surface, truth)) in scans.into_iter().enumerate() {
        let stem = if n == 1 { name.to_string() } else { format!("{name}_{}", k + 1) };
        let path = out.join(format!("{stem}.x3p"));
        let mut meta = X3pMeta::for_surface(&surface);
        meta.creator = "wiremark synth".into();
        meta.comment = format!("seed {}", truth.seed);
        write_x3p(&surface, &meta, &path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        write_json(&out.join(format!("{stem}.truth.json")), &truth)?;
    }
    Ok(())
}

fn cmd_inspect(input: &Path) -> Result<(), Failure> {
    let describe = |e: &dyn std::fmt::Display| usage(format!("{}: {e}", input.display()));
    let (s, meta) = if has_ext(input, "txt") {
        let s = read_matrix_text(input).map_err(|e| describe(&e))?;
        let meta = X3pMeta::for_surface(&s);
        (s, meta)
    } else {
        read_x3p(input).map_err(|e| describe(&e))?
    };
    let res = if s.res_x() == s.res_y() {
        format!("{} µm", s.res_x())
    } else {
        format!("{} × {} µm", s.res_x(), s.res_y())
    };
    println!("{} × {} @ {}", s.rows(), s.cols(), res);
    println!("missing fraction: {:.4}", s.missing_fraction());
    println!("data type: {:?}", meta.data_kind);
    for (k, v) in [
        ("creator", &meta.creator),
        ("instrument", &meta.instrument),
        ("comment", &meta.comment),
    ] {
        if !v.is_empty() {
            println!("{k}: {v}");
        }
    }
    if let Some(d) = &meta.date {
        println!("date: {d}");
    }
    for w in &meta.warnings {
        println!("warning: {w}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Process {
            input,
            out,
            report,
            dump_stages,
            params,
        } => cmd_process(&input, &out, report.as_deref(), dump_stages.as_deref(), &params),
        Command::Compare { a, b, params } => cmd_compare(&a, &b, &params),
        Command::Batch {
            dir,
            out,
            jobs,
            signals_dir,
            params,
        } => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| usage(e.to_string()))?;
            pool.install(|| cmd_batch(&dir, &out, signals_dir.as_deref(), &params))
        }
        Command::Roc {
            results,
            out,
            exclude_site_mismatch,
        } => cmd_roc(&results, &out, exclude_site_mismatch),
        Command::Synth {
            spec,
            out,
            seed,
            name,
            pair,
        } => cmd_synth(spec.as_deref(), &out, seed, &name, pair),
        Command::Inspect { input } => cmd_inspect(&input),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
