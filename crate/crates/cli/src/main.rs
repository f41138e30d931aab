use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Parser, Subcommand};
use trussforge::io::{self, SvgOptions};
use trussforge::pipeline::{self, PHASE_GSM};
use trussforge::stability::check_external_stability;
use trussforge::{equilibrium_residual, gsm, Error, FunctionalSpec, OptimizationReport, Truss};

#[derive(Parser)]
#[command(name = "trussforge", version, about = "Lightweight truss layout optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline on a spec.
    Optimize {
        spec: PathBuf,
        /// Truss output file; standard output when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write an SVG drawing (2D only).
        #[arg(long)]
        svg: Option<PathBuf>,
        /// Override the number of subdivision levels.
        #[arg(long)]
        levels: Option<usize>,
        /// Start from the specified joints only, without grid joints.
        #[arg(long)]
        seedless: bool,
    },
    /// Dense ground structure and one force solve; unused bars are left out
    /// of the output.
    Gsm {
        spec: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// One subdivision level on an existing truss.
    Subdivide {
        truss: PathBuf,
        spec: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Stability and equilibrium report for a truss.
    Check { truss: PathBuf, spec: PathBuf },
    /// Run every fixture in a directory and print per-phase rows.
    Bench {
        /// Only fixtures whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        #[arg(long, default_value = "fixtures")]
        dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Json(_) | Error::Schema(_) | Error::Dimension { .. } => 2,
        _ => 1,
    }
}

fn emit(text: &str, out: Option<&Path>) -> trussforge::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn log_report(report: &OptimizationReport) {
    for p in &report.phases {
        log::info!("{:<10} bars {:>6} joints {:>5} volume {:.6} ({:.2} s)", p.label, p.bars, p.joints, p.volume, p.seconds);
    }
}

fn optimize(spec: &Path, output: Option<&Path>, svg: Option<&Path>, levels: Option<usize>, seedless: bool) -> trussforge::Result<()> {
    let mut spec = io::parse_spec(spec)?;
    if let Some(l) = levels {
        spec.params.levels = l;
    }
    if seedless {
        spec.params.grid_n = Some(1);
    }
    let (truss, report) = pipeline::run_pipeline(&spec)?;
    log_report(&report);
    let label = report.phases.last().map_or(pipeline::PHASE_FINAL, |p| p.label.as_str());
    emit(&io::truss_to_json(&truss, &spec, label), output)?;
    if let Some(path) = svg {
        std::fs::write(path, io::export_svg(&truss, &SvgOptions::default())?)?;
    }
    if let (Some(path), 3) = (output, spec.dim) {
        std::fs::write(path.with_extension("obj"), io::export_obj(&truss)?)?;
        std::fs::write(path.with_extension("bars.json"), io::export_obj_sidecar(&truss))?;
    }
    Ok(())
}

fn ground_structure(spec: &Path, output: Option<&Path>) -> trussforge::Result<()> {
    let spec = io::parse_spec(spec)?;
    let n = spec.params.grid_n.unwrap_or(spec.joints.len());
    let mut truss = pipeline::init_truss(&spec, n)?;
    let bars = truss.bars.len();
    let r = gsm::solve_alg_a(&truss, spec.sigma)?;
    gsm::apply_alg_a(&mut truss, &r);
    log::info!("ground structure: {bars} bars, volume {:.6}", r.volume);
    emit(&io::truss_to_json(&pipeline::drop_unused_bars(&truss), &spec, PHASE_GSM), output)
}

fn subdivide(truss: &Path, spec: &Path, output: Option<&Path>) -> trussforge::Result<()> {
    let spec = io::parse_spec(spec)?;
    let truss = io::read_truss(truss)?;
    let (refined, _) = pipeline::refine_level(&truss, &spec)?;
    log::info!("volume {:.6} -> {:.6}, {} bars", truss.total_volume(), refined.total_volume(), refined.bars.len());
    emit(&io::truss_to_json(&refined, &spec, &pipeline::level_label(1)), output)
}

fn check(truss: &Path, spec: &Path) -> trussforge::Result<()> {
    let spec = io::parse_spec(spec)?;
    let truss = io::read_truss(truss)?;
    let stab = check_external_stability(&truss);
    let mut out = String::new();
    out.push_str(&format!("joints {}\nbars {}\nvolume {:.9}\n", truss.joints.len(), truss.bars.len(), truss.total_volume()));
    if stab.stable {
        out.push_str("stability: stable by counting\n");
    } else {
        out.push_str(&format!("stability: unstable, {} bar(s) missing\n", stab.deficit));
    }
    for case in 0..truss.load_cases {
        out.push_str(&format!("case {case}: equilibrium residual {:.3e}\n", equilibrium_residual(&truss, case)?));
    }
    let thin = truss.bars.iter().filter(|b| b.area < spec.params.prune_factor * truss.mean_area()).count();
    out.push_str(&format!("bars below prune threshold: {thin}\n"));
    emit(&out, None)
}

fn fixture_paths(dir: &Path, filter: Option<&str>) -> trussforge::Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .filter(|p| filter.is_none_or(|f| stem(p).contains(f)))
        .collect();
    paths.sort();
    Ok(paths)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var("TRUSSFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(jobs).max(1)
}

type BenchRow = (String, trussforge::Result<(Truss, OptimizationReport, f64)>);

fn bench_one(path: &Path) -> trussforge::Result<(Truss, OptimizationReport, f64)> {
    let spec: FunctionalSpec = io::parse_spec(path)?;
    let started = Instant::now();
    let (t, r) = pipeline::run_pipeline(&spec)?;
    Ok((t, r, started.elapsed().as_secs_f64()))
}

fn bench(dir: &Path, filter: Option<&str>) -> trussforge::Result<bool> {
    let paths = fixture_paths(dir, filter)?;
    let next = AtomicUsize::new(0);
    let rows: Mutex<Vec<Option<BenchRow>>> = Mutex::new((0..paths.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..worker_count(paths.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = paths.get(i) else { break };
                let res = bench_one(path);
                rows.lock().unwrap()[i] = Some((stem(path), res));
            });
        }
    });

    let mut ok = true;
    let mut out = format!("{:<20} {:<10} {:>7} {:>7} {:>12} {:>9}\n", "fixture", "phase", "bars", "joints", "volume", "time[s]");
    for (name, res) in rows.into_inner().unwrap().into_iter().flatten() {
        match res {
            Ok((_, report, total)) => {
                for p in &report.phases {
                    out.push_str(&format!(
                        "{:<20} {:<10} {:>7} {:>7} {:>12.6} {:>9.3}\n",
                        name, p.label, p.bars, p.joints, p.volume, p.seconds
                    ));
                }
                out.push_str(&format!("{:<20} {:<10} {:>7} {:>7} {:>12} {:>9.3}\n", name, "total", "", "", "", total));
            }
            Err(e) => {
                ok = false;
                eprintln!("{name}: {e}");
                out.push_str(&format!("{name:<20} failed\n"));
            }
        }
    }
    emit(&out, None)?;
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let res = match &cli.command {
        Command::Optimize { spec, output, svg, levels, seedless } => {
            optimize(spec, output.as_deref(), svg.as_deref(), *levels, *seedless)
        }
        Command::Gsm { spec, output } => ground_structure(spec, output.as_deref()),
        Command::Subdivide { truss, spec, output } => subdivide(truss, spec, output.as_deref()),
        Command::Check { truss, spec } => check(truss, spec),
        Command::Bench { filter, dir } => match bench(dir, filter.as_deref()) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
