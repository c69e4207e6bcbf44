//! `aztec`: command-line driver for the periodically weighted Aztec diamond toolkit.
//!
//! Exit codes: 0 success, 2 usage or validation error, 3 numerical non-convergence,
//! 4 a convergence report contains FAILED rows.

mod output;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aztec_corners::config::ConfigFile;
use aztec_corners::convergence::{all_pairs, grid, kernel_convergence, limit_value, process_convergence, KernelCriteria, ProcessCriteria};
use aztec_corners::gue::{corners_sampler, k_gue};
use aztec_corners::kasteleyn::Oracle;
use aztec_corners::kernel::{rescaled_kernel, KernelEvaluator, ScaledPoint, Site};
use aztec_corners::model::{Diamond, WeightConfig};
use aztec_corners::sampler::{batch_stats, Shuffler, Window};
use aztec_corners::spectral::{closed_form_sigma2, nu, theta, SpectralData};
use aztec_corners::surface::{make_contours_with, ContourOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use output::{num, Output, RunManifest};

const GRAMMAR: &str = "\
Config files hold one `key = value` per line; `#` starts a comment.
  ell     period (optional, inferred from the weight lists)
  alphas  comma or space separated weights, decimal or p/q
  betas   same length as alphas; prod alphas must equal prod betas
  a       two-periodic shorthand (ell = 2), replaces alphas and betas
  N       size parameter; the diamond side is 2 ell N (default 1)
  seed    default seed for Monte Carlo subcommands (optional)
  size    explicit diamond side for exact checks (optional)
Points are written t:mu:j (rescaled) or col:row (lattice sites), comma separated.
Exit codes: 0 ok, 2 usage or validation error, 3 numerical non-convergence,
4 FAILED convergence rows.";

#[derive(Debug, Parser)]
#[command(name = "aztec", version, about = "Periodically weighted Aztec diamond: exact kernels, shuffling, GUE-corners limits", after_help = GRAMMAR)]
struct Cli {
    /// Worker threads; defaults to all available cores.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write artifacts (with manifests) into this directory instead of printing them.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Spectral constants: tau, sigma^2, B, theta table, roots of p.
    Spectral(SpectralArgs),
    /// Exact Kasteleyn computations on a finite diamond.
    Oracle(OracleArgs),
    /// Domino-shuffling samples, as covers or summary statistics.
    Sample(SampleArgs),
    /// Contour-integral kernel at lattice sites or rescaled points.
    Kernel(KernelArgs),
    /// GUE-corners kernel tables and marked corners samples.
    Gue(GueArgs),
    /// Convergence of kernel or process to the marked GUE-corners limit.
    Converge(ConvergeArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Weight configuration file.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TextFormat {
    Text,
    Csv,
}

#[derive(Debug, Args)]
struct SpectralArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_enum, default_value_t = TextFormat::Text)]
    format: TextFormat,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Diamond side; defaults to `size` from the config, else 2 ell N.
    #[arg(long)]
    size: Option<usize>,
    /// Print the partition function.
    #[arg(long)]
    partition: bool,
    /// One-point particle densities on every level.
    #[arg(long)]
    density: bool,
    /// Probabilities of every edge.
    #[arg(long)]
    edges: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SampleFormat {
    /// JSONL, one cover per line.
    Covers,
    /// CSV of window densities and mark statistics.
    Stats,
}

#[derive(Debug, Args)]
struct SampleArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, default_value_t = 1)]
    count: u64,
    /// Overrides the config seed; sample k uses stream k of this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = SampleFormat::Covers)]
    format: SampleFormat,
    /// Count windows `t:lo:hi` (positions lo <= u < hi on level t) for the stats format.
    #[arg(long, value_delimiter = ',')]
    window: Vec<String>,
    /// Deepest level entering mark statistics.
    #[arg(long, default_value_t = 3)]
    max_level: usize,
}

#[derive(Debug, Args)]
struct KernelArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// Lattice sites `col:row`; every ordered pair is evaluated.
    #[arg(long, value_delimiter = ',', conflicts_with = "points", required_unless_present = "points")]
    sites: Vec<String>,
    /// Rescaled points `t:mu:j`; every ordered pair is evaluated with its limit.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    points: Vec<String>,
    /// Absolute quadrature tolerance.
    #[arg(long, env = "AZTEC_KERNEL_TOL", default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Debug, Args)]
struct GueArgs {
    /// Points `t:mu`; every ordered pair of K_GUE is tabulated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    points: Vec<String>,
    /// Number of marked corners samples to dump (needs --config for the mark probabilities).
    #[arg(long, requires = "config")]
    sample: Option<u64>,
    /// Levels per sample.
    #[arg(long, default_value_t = 3)]
    levels: usize,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "AZTEC_GUE_TOL", default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ConvergeMode {
    Kernel,
    Process,
}

#[derive(Debug, Args)]
struct ConvergeArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long, value_enum, default_value_t = ConvergeMode::Kernel)]
    mode: ConvergeMode,
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    levels: Vec<usize>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-1,0.4")]
    mus: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    marks: Vec<u8>,
    /// Values of N for the kernel mode.
    #[arg(long, value_delimiter = ',', default_value = "16,64,256")]
    ns: Vec<usize>,
    #[arg(long, env = "AZTEC_CONVERGE_TOL", default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, env = "AZTEC_SLACK", default_value_t = KernelCriteria::default().slack)]
    slack: f64,
    #[arg(long, env = "AZTEC_FINAL_REL_ERR", default_value_t = KernelCriteria::default().final_rel_err)]
    final_rel_err: f64,
    #[arg(long, env = "AZTEC_FLIP_TOL", default_value_t = KernelCriteria::default().flip_tol)]
    flip_tol: f64,
    /// Samples for the process mode.
    #[arg(long, default_value_t = 10_000)]
    count: u64,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "AZTEC_KS", default_value_t = ProcessCriteria::default().ks)]
    ks: f64,
    #[arg(long, env = "AZTEC_MARK_Z", default_value_t = ProcessCriteria::default().mark_z)]
    mark_z: f64,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] aztec_corners::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Failed(_) => 4,
            _ => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            if !usage {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{GRAMMAR}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let name = match &cli.command {
        Command::Spectral(_) => "spectral",
        Command::Oracle(_) => "oracle",
        Command::Sample(_) => "sample",
        Command::Kernel(_) => "kernel",
        Command::Gue(_) => "gue",
        Command::Converge(_) => "converge",
    };
    let manifest = RunManifest::new(name, argv, rayon::current_num_threads());
    let mut out = Output::new(cli.out_dir, manifest)?;
    match cli.command {
        Command::Spectral(a) => spectral(a, &mut out),
        Command::Oracle(a) => oracle(a, &mut out),
        Command::Sample(a) => sample(a, &mut out),
        Command::Kernel(a) => kernel(a, &mut out),
        Command::Gue(a) => gue(a, &mut out),
        Command::Converge(a) => converge(a, &mut out),
    }
}

fn load(path: &Path, out: &mut Output) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg = ConfigFile::parse(&text)?;
    out.manifest.config = Some(cfg.weights.clone());
    out.manifest.config_text = Some(text);
    Ok(cfg)
}

fn spectral(a: SpectralArgs, out: &mut Output) -> Result<(), CliError> {
    let cfg = load(&a.config.config, out)?.weights;
    let sd = SpectralData::new(&cfg)?;
    let mut rows: Vec<(String, f64)> = vec![
        ("tau".into(), sd.tau),
        ("sigma2".into(), sd.sigma2),
        ("sigma2_closed_form".into(), closed_form_sigma2(&cfg)),
        ("B".into(), sd.b),
        ("genus_maximal".into(), if sd.genus_maximal { 1.0 } else { 0.0 }),
    ];
    for t in 1..=2 * cfg.ell {
        rows.push((format!("theta_{t}"), theta(&cfg, t as i64)));
    }
    for (k, r) in sd.roots.iter().enumerate() {
        rows.push((format!("root_{k}"), *r));
    }
    let mut csv = String::from("quantity,value\n");
    for (k, v) in &rows {
        writeln!(csv, "{k},{}", num(*v)).unwrap();
    }
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut text = String::new();
    for (k, v) in &rows {
        writeln!(text, "{k:<width$}  {}", num(*v)).unwrap();
    }
    if out.to_files() {
        print!("{text}");
        return out.emit("spectral.csv", &csv);
    }
    match a.format {
        TextFormat::Text => print!("{text}"),
        TextFormat::Csv => print!("{csv}"),
    }
    Ok(())
}

fn oracle(a: OracleArgs, out: &mut Output) -> Result<(), CliError> {
    let file = load(&a.config.config, out)?;
    let cfg = file.weights;
    let size = a.size.or(file.size).unwrap_or_else(|| cfg.size());
    let mut oracle = Oracle::new(&cfg, size)?;
    if !(a.partition || a.density || a.edges) {
        return Err(CliError::Usage("oracle needs at least one of --partition, --density, --edges".into()));
    }
    if a.partition {
        let log_z = oracle.log_partition_function();
        println!("size = {size}\nlog Z = {}\nZ = {}", num(log_z), num(log_z.exp()));
    }
    if a.density {
        let grid = oracle.density_grid()?;
        let mut csv = String::from("column,level,row,rho1\n");
        for (c, col) in grid.iter().enumerate().take(size) {
            for (r, p) in col.iter().enumerate() {
                writeln!(csv, "{c},{},{r},{}", size - c, num(*p)).unwrap();
            }
        }
        out.emit("density.csv", &csv)?;
    }
    if a.edges {
        let d = Diamond::with_size(&cfg, size)?;
        let edges = d.enumerate_edges();
        let probs = oracle.edge_probabilities(&edges)?;
        let mut csv = String::from("black_i,black_j,kind,weight,probability\n");
        for (e, p) in edges.iter().zip(&probs) {
            let (bi, bj) = e.black.lattice();
            writeln!(csv, "{bi},{bj},{},{},{}", e.kind.letter(), num(d.edge_weight(e)?), num(*p)).unwrap();
        }
        out.emit("edges.csv", &csv)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CoverLine<'a> {
    seed: u64,
    index: u64,
    size: usize,
    kinds: &'a str,
}

fn sample(a: SampleArgs, out: &mut Output) -> Result<(), CliError> {
    let file = load(&a.config.config, out)?;
    let cfg = file.weights;
    let seed = a.seed.or(file.seed).unwrap_or(0);
    out.manifest.seeds = vec![seed];
    match a.format {
        SampleFormat::Covers => {
            let sh = Shuffler::new(&cfg, cfg.size())?;
            let lines: Vec<String> = (0..a.count)
                .into_par_iter()
                .map(|idx| {
                    let cover = sh.sample(seed, idx);
                    let kinds = cover.letters();
                    serde_json::to_string(&CoverLine { seed, index: idx, size: cover.size, kinds: &kinds }).expect("cover serializes")
                })
                .collect();
            out.emit("covers.jsonl", &(lines.join("\n") + "\n"))
        }
        SampleFormat::Stats => {
            let windows = a.window.iter().map(|w| parse_window(w)).collect::<Result<Vec<_>, _>>()?;
            let sd = SpectralData::new(&cfg)?;
            let acc = batch_stats(&cfg, sd.tau, sd.sigma(), seed, a.count, &windows, a.max_level)?;
            let rep = acc.report();
            let mut csv = String::from("quantity,level,lo,hi,value,stderr,prediction\n");
            for (w, e) in &rep.window_density {
                writeln!(csv, "window_count,{},{},{},{},{},", w.t, w.lo, w.hi, num(e.value), num(e.stderr)).unwrap();
            }
            for (k, e) in rep.mark_frequency.iter().enumerate() {
                let t = k + 1;
                writeln!(csv, "mark_frequency,{t},,,{},{},{}", num(e.value), num(e.stderr), num(theta(&cfg, t as i64))).unwrap();
            }
            let j = &rep.joint_mark;
            writeln!(csv, "joint_mark_11,1-2,,,{},{},{}", num(j.joint11.value), num(j.joint11.stderr), num(j.first.value * j.second.value))
                .unwrap();
            out.emit("stats.csv", &csv)
        }
    }
}

fn parse_window(s: &str) -> Result<Window, CliError> {
    let bad = || CliError::Usage(format!("window {s:?} is not t:lo:hi"));
    let f: Vec<&str> = s.split(':').collect();
    let [t, lo, hi] = f[..] else { return Err(bad()) };
    Ok(Window { t: t.parse().map_err(|_| bad())?, lo: lo.parse().map_err(|_| bad())?, hi: hi.parse().map_err(|_| bad())? })
}

fn parse_site(s: &str) -> Result<Site, CliError> {
    let bad = || CliError::Usage(format!("site {s:?} is not col:row"));
    let (c, r) = s.split_once(':').ok_or_else(bad)?;
    Ok(Site::new(c.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?))
}

fn parse_point(s: &str) -> Result<ScaledPoint, CliError> {
    let bad = || CliError::Usage(format!("point {s:?} is not t:mu:j"));
    let f: Vec<&str> = s.split(':').collect();
    let [t, mu, j] = f[..] else { return Err(bad()) };
    let j: u8 = j.trim().parse().map_err(|_| bad())?;
    if j > 1 {
        return Err(bad());
    }
    Ok(ScaledPoint { t: t.trim().parse().map_err(|_| bad())?, mu: mu.trim().parse().map_err(|_| bad())?, j })
}

fn kernel(a: KernelArgs, out: &mut Output) -> Result<(), CliError> {
    let cfg = load(&a.config.config, out)?.weights;
    let sd = SpectralData::new(&cfg)?;
    out.manifest.tolerances.insert("quadrature".into(), a.tol);
    if !a.sites.is_empty() {
        let sites = a.sites.iter().map(|s| parse_site(s)).collect::<Result<Vec<_>, _>>()?;
        let ev = KernelEvaluator::new(&cfg, &sd, make_contours_with(&cfg, &sd, &ContourOptions::default())?)?;
        let pairs: Vec<(Site, Site)> = sites.iter().flat_map(|&p| sites.iter().map(move |&q| (p, q))).collect();
        let values = pairs.par_iter().map(|&(p, q)| ev.k_int(p, q, a.tol)).collect::<Result<Vec<_>, _>>()?;
        let mut csv = String::from("col1,row1,col2,row2,re,im,quad_error,node_count\n");
        for ((p, q), kv) in pairs.iter().zip(&values) {
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{}",
                p.col,
                p.row,
                q.col,
                q.row,
                num(kv.value.re),
                num(kv.value.im),
                num(kv.quad_error),
                kv.node_count
            )
            .unwrap();
        }
        return out.emit("kernel.csv", &csv);
    }
    let points = a.points.iter().map(|s| parse_point(s)).collect::<Result<Vec<_>, _>>()?;
    let ev = KernelEvaluator::new(&cfg, &sd, make_contours_with(&cfg, &sd, &ContourOptions::saddle(cfg.n_param))?)?;
    let pairs = all_pairs(&points);
    let sigma = sd.sigma();
    let rows = pairs
        .par_iter()
        .map(|&(p, q)| Ok((rescaled_kernel(&ev, &sd, p, q, a.tol)?, limit_value(&cfg, sigma, p, q, 0.1 * a.tol)?)))
        .collect::<Result<Vec<_>, aztec_corners::Error>>()?;
    let mut csv = String::from("t1,mu1,j1,t2,mu2,j2,re,im,quad_error,limit,nu2\n");
    for ((p, q), (kv, limit)) in pairs.iter().zip(&rows) {
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.t,
            num(p.mu),
            p.j,
            q.t,
            num(q.mu),
            q.j,
            num(kv.value.re),
            num(kv.value.im),
            num(kv.quad_error),
            num(*limit),
            num(nu(&cfg, q.t as i64, q.j))
        )
        .unwrap();
    }
    out.emit("rescaled_kernel.csv", &csv)
}

#[derive(Serialize)]
struct CornersLine<'a> {
    index: u64,
    levels: &'a [Vec<f64>],
    marks: &'a [Vec<u8>],
}

fn gue(a: GueArgs, out: &mut Output) -> Result<(), CliError> {
    out.manifest.tolerances.insert("quadrature".into(), a.tol);
    if a.points.is_empty() && a.sample.is_none() {
        return Err(CliError::Usage("gue needs --points or --sample".into()));
    }
    if !a.points.is_empty() {
        let pts = a
            .points
            .iter()
            .map(|s| {
                let bad = || CliError::Usage(format!("point {s:?} is not t:mu"));
                let (t, mu) = s.split_once(':').ok_or_else(bad)?;
                Ok((t.trim().parse::<usize>().map_err(|_| bad())?, mu.trim().parse::<f64>().map_err(|_| bad())?))
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        let mut csv = String::from("t1,mu1,t2,mu2,re,im,quad_error\n");
        for &(t1, m1) in &pts {
            for &(t2, m2) in &pts {
                let kv = k_gue(t1, m1, t2, m2, a.tol)?;
                writeln!(csv, "{t1},{},{t2},{},{},{},{}", num(m1), num(m2), num(kv.value.re), num(kv.value.im), num(kv.quad_error))
                    .unwrap();
            }
        }
        out.emit("gue_kernel.csv", &csv)?;
    }
    if let (Some(count), Some(path)) = (a.sample, &a.config) {
        let file = load(path, out)?;
        let cfg = file.weights;
        let seed = a.seed.or(file.seed).unwrap_or(0);
        out.manifest.seeds = vec![seed];
        let th = |t: usize, _: f64| theta(&cfg, t as i64);
        let mut jsonl = String::new();
        for (index, s) in corners_sampler(a.levels, &th, seed, count).enumerate() {
            let line = CornersLine { index: index as u64, levels: &s.levels, marks: &s.marks };
            jsonl.push_str(&serde_json::to_string(&line).expect("sample serializes"));
            jsonl.push('\n');
        }
        out.emit("corners.jsonl", &jsonl)?;
    }
    Ok(())
}

fn converge(a: ConvergeArgs, out: &mut Output) -> Result<(), CliError> {
    let file = load(&a.config.config, out)?;
    let cfg: WeightConfig = file.weights;
    let report = match a.mode {
        ConvergeMode::Kernel => {
            let criteria = KernelCriteria { slack: a.slack, final_rel_err: a.final_rel_err, flip_tol: a.flip_tol, ..Default::default() };
            let points = grid(&a.levels, &a.mus, &a.marks);
            kernel_convergence(&cfg, &all_pairs(&points), &a.ns, a.tol, criteria)?
        }
        ConvergeMode::Process => {
            let seed = a.seed.or(file.seed).unwrap_or(0);
            let criteria = ProcessCriteria { ks: a.ks, mark_z: a.mark_z, ..Default::default() };
            process_convergence(&cfg, a.count, seed, criteria)?
        }
    };
    out.manifest.seeds = report.provenance.seeds.clone();
    out.manifest.tolerances = report.provenance.tolerances.clone();
    let (name, csv) = match a.mode {
        ConvergeMode::Kernel => ("kernel_convergence.csv", report.kernel_csv()),
        ConvergeMode::Process => ("process_convergence.csv", report.process_csv()),
    };
    let summary = report.summary();
    if out.to_files() {
        out.emit(name, &csv)?;
        out.emit("summary.txt", &summary)?;
    } else {
        print!("{csv}\n{summary}");
    }
    if report.failed() {
        return Err(CliError::Failed("convergence report contains FAILED rows".into()));
    }
    Ok(())
}
