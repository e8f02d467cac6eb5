//! Command-line driver: evaluates partition functions from JSON parameter and
//! label files, runs the verification suites, enumerates labels, and times
//! contraction against the closed forms.
//!
//! Exit codes: 0 on success / all checks passed, 1 on identity failure, 2 on
//! conditioning or evaluation-domain failure, 3 on usage errors.

use clap::{Args, Parser, Subcommand};
use elliptic_partitions::closed::{eval_e_bar, eval_e_base, eval_e_fm};
use elliptic_partitions::labels::{enumerate_base_labels, enumerate_labels, BaseLabel, FmLabel};
use elliptic_partitions::lattice::{brute_force_base, brute_force_fm, BaseLattice, FmLattice};
use elliptic_partitions::rmatrix::{DynParams, RContext};
use elliptic_partitions::theta::{ThetaContext, DEFAULT_TAIL_TOLERANCE};
use elliptic_partitions::verify::{
    case_seed_rng, rel_err, run_suite, sample_parameters, DrawSizes, SuiteConfig, SuiteName,
    SuiteReport,
};
use elliptic_partitions::weights::{correspondence_map, normalized_weight, ThetaMode};
use num_complex::Complex64 as C64;
use serde::Deserialize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

const EXIT_OK: u8 = 0;
const EXIT_IDENTITY: u8 = 1;
const EXIT_CONDITIONING: u8 = 2;
const EXIT_USAGE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "epf",
    about = "Elliptic lattice partition functions: evaluation and verification",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a partition function from parameter and label files
    Eval {
        #[command(subcommand)]
        target: EvalTarget,
    },
    /// Run a verification suite (or `all`)
    Verify(VerifyArgs),
    /// List every valid label of a given size
    EnumerateLabels(EnumerateArgs),
    /// Time exact contraction against the closed forms
    Bench,
}

#[derive(Subcommand)]
enum EvalTarget {
    /// Base partition function (rank-2 lattice), both routes
    Base(EvalArgs),
    /// Nested partition function (rank-3 lattice), both routes
    Fm(EvalArgs),
    /// Rescaled closed form at L1 = 0
    Ebar(EvalArgs),
    /// Normalized elliptic weight function at the corresponding data
    Weight(WeightArgs),
}

#[derive(Args)]
struct EvalArgs {
    /// JSON file with tau_re, tau_im, gamma, lambda and spectral arrays
    #[arg(long)]
    params: PathBuf,
    /// JSON label file
    #[arg(long)]
    label: PathBuf,
    /// Emit a JSON object instead of plain text
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct WeightArgs {
    #[command(flatten)]
    common: EvalArgs,
    /// Theta backend: additive or multiplicative
    #[arg(long, default_value = "additive")]
    mode: String,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name: theta, labels, rmatrix, thm42, thm53, qp, recursion, weights, all
    suite: String,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Cap on the nested column count L2
    #[arg(long)]
    max_l2: Option<usize>,
    /// Cap on the row counts k, k1, k2
    #[arg(long)]
    max_k: Option<usize>,
    /// Override the per-check identity tolerances
    #[arg(long)]
    tolerance: Option<f64>,
    /// Seeded draws per case
    #[arg(long)]
    draws: Option<usize>,
    /// Write the JSON report here
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the flat CSV projection here
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct EnumerateArgs {
    /// Size quadruple k1,k2,L1,L2
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Deserialize)]
struct ParamsFile {
    tau_re: f64,
    tau_im: f64,
    #[serde(default)]
    tail_tolerance: Option<f64>,
    gamma: [f64; 2],
    lambda: Vec<[f64; 2]>,
    #[serde(default)]
    z: Vec<[f64; 2]>,
    #[serde(default)]
    w: Vec<[f64; 2]>,
    #[serde(default)]
    z1: Vec<[f64; 2]>,
    #[serde(default)]
    z2: Vec<[f64; 2]>,
    #[serde(default)]
    w1: Vec<[f64; 2]>,
    #[serde(default)]
    w2: Vec<[f64; 2]>,
}

fn to_c64(pair: [f64; 2]) -> C64 {
    C64::new(pair[0], pair[1])
}

fn to_vec(pairs: &[[f64; 2]]) -> Vec<C64> {
    pairs.iter().copied().map(to_c64).collect()
}

struct LoadedParams {
    theta: ThetaContext,
    params: DynParams,
    file: ParamsFile,
}

fn load_params(path: &PathBuf) -> Result<LoadedParams, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let file: ParamsFile =
        serde_json::from_str(&text).map_err(|e| format!("bad params file: {e}"))?;
    let tau = C64::new(file.tau_re, file.tau_im);
    let theta = ThetaContext::new(tau, file.tail_tolerance.unwrap_or(DEFAULT_TAIL_TOLERANCE))
        .map_err(|e| e.to_string())?;
    if file.lambda.len() < 2 {
        return Err("lambda needs at least two components".into());
    }
    let params = DynParams::new(to_vec(&file.lambda), to_c64(file.gamma));
    Ok(LoadedParams {
        theta,
        params,
        file,
    })
}

fn load_label<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("bad label file: {e}"))
}

fn print_value(json: bool, closed: C64, contraction: Option<C64>) {
    if json {
        let mut obj = serde_json::json!({ "closed": [closed.re, closed.im] });
        if let Some(c) = contraction {
            obj["contraction"] = serde_json::json!([c.re, c.im]);
            obj["rel_err"] = serde_json::json!(rel_err(closed, c));
        }
        println!("{}", serde_json::to_string(&obj).unwrap());
    } else {
        println!("closed      = {:+.15e} {:+.15e}i", closed.re, closed.im);
        if let Some(c) = contraction {
            println!("contraction = {:+.15e} {:+.15e}i", c.re, c.im);
            println!("rel_err     = {:.3e}", rel_err(closed, c));
        }
    }
}

/// Tags evaluation-domain failures so main can map them to exit code 2.
fn domain(msg: String) -> String {
    format!("domain: {msg}")
}

fn eval_base(args: &EvalArgs) -> Result<u8, String> {
    let loaded = load_params(&args.params)?;
    let label: BaseLabel = load_label(&args.label)?;
    let lat = BaseLattice {
        z: to_vec(&loaded.file.z),
        w: to_vec(&loaded.file.w),
        params: loaded.params.clone(),
        label,
    };
    let ctx = RContext::new(2, loaded.theta.clone()).map_err(|e| e.to_string())?;
    let closed = eval_e_base(&loaded.theta, &lat).map_err(|e| domain(e.to_string()))?;
    let contraction = brute_force_base(&ctx, &lat).map_err(|e| domain(e.to_string()))?;
    print_value(args.json, closed, Some(contraction));
    Ok(EXIT_OK)
}

fn fm_lattice(loaded: &LoadedParams, label: FmLabel) -> Result<FmLattice, String> {
    if loaded.params.lambda.len() != 3 {
        return Err("nested evaluation needs three lambda components".into());
    }
    Ok(FmLattice {
        z1: to_vec(&loaded.file.z1),
        z2: to_vec(&loaded.file.z2),
        w1: to_vec(&loaded.file.w1),
        w2: to_vec(&loaded.file.w2),
        params: loaded.params.clone(),
        label,
    })
}

fn eval_fm(args: &EvalArgs) -> Result<u8, String> {
    let loaded = load_params(&args.params)?;
    let label: FmLabel = load_label(&args.label)?;
    let lat = fm_lattice(&loaded, label)?;
    let ctx = RContext::new(3, loaded.theta.clone()).map_err(|e| e.to_string())?;
    let closed = eval_e_fm(&loaded.theta, &lat).map_err(|e| domain(e.to_string()))?;
    let contraction = brute_force_fm(&ctx, &lat).map_err(|e| domain(e.to_string()))?;
    print_value(args.json, closed, Some(contraction));
    Ok(EXIT_OK)
}

fn eval_ebar(args: &EvalArgs) -> Result<u8, String> {
    let loaded = load_params(&args.params)?;
    let label: FmLabel = load_label(&args.label)?;
    let lat = fm_lattice(&loaded, label)?;
    let value = eval_e_bar(&loaded.theta, &lat).map_err(|e| domain(e.to_string()))?;
    print_value(args.json, value, None);
    Ok(EXIT_OK)
}

fn eval_weight(args: &WeightArgs) -> Result<u8, String> {
    let mode = match args.mode.as_str() {
        "additive" => ThetaMode::Additive,
        "multiplicative" => ThetaMode::Multiplicative,
        other => return Err(format!("unknown mode '{other}'")),
    };
    let loaded = load_params(&args.common.params)?;
    let label: FmLabel = load_label(&args.common.label)?;
    if loaded.params.lambda.len() != 3 {
        return Err("weight evaluation needs three lambda components".into());
    }
    let cfg = correspondence_map(
        &label,
        &to_vec(&loaded.file.z1),
        &to_vec(&loaded.file.z2),
        &to_vec(&loaded.file.w2),
        &loaded.params,
    )
    .map_err(|e| domain(e.to_string()))?;
    let value = normalized_weight(&loaded.theta, &cfg, mode).map_err(|e| domain(e.to_string()))?;
    if args.common.json {
        println!(
            "{}",
            serde_json::json!({ "value": [value.re, value.im], "mode": args.mode })
        );
    } else {
        println!(
            "value = {:+.15e} {:+.15e}i  ({})",
            value.re, value.im, args.mode
        );
    }
    Ok(EXIT_OK)
}

fn verify(args: &VerifyArgs) -> Result<u8, String> {
    let suites: Vec<SuiteName> = if args.suite == "all" {
        SuiteName::ALL.to_vec()
    } else {
        vec![SuiteName::from_str(&args.suite)?]
    };
    let mut reports: Vec<SuiteReport> = Vec::new();
    for suite in suites {
        let mut cfg = SuiteConfig::new(suite);
        cfg.seed = args.seed;
        cfg.tolerance = args.tolerance;
        if let Some(l2) = args.max_l2 {
            cfg.max_l2 = l2;
        }
        if let Some(k) = args.max_k {
            cfg.max_k = k;
            cfg.max_k1 = k;
            cfg.max_k2 = k;
        }
        if let Some(d) = args.draws {
            cfg.draws = d;
        }
        let report = run_suite(&cfg);
        println!(
            "suite {:<10} {} ({} cases, worst {:.3e}, {} conditioning failures, {} ms)",
            report.suite,
            if report.passed { "PASS" } else { "FAIL" },
            report.cases.len(),
            report.aggregate_worst,
            report.conditioning_failures,
            report.wall_time_ms
        );
        for case in report.cases.iter().filter(|c| !c.pass) {
            println!(
                "  FAIL {} ({}) err {:.3e}",
                case.id, case.label, case.max_rel_err
            );
        }
        reports.push(report);
    }
    if let Some(path) = &args.report {
        let payload = if reports.len() == 1 {
            serde_json::to_string_pretty(&reports[0]).unwrap()
        } else {
            serde_json::to_string_pretty(&reports).unwrap()
        };
        std::fs::write(path, payload).map_err(|e| format!("cannot write report: {e}"))?;
    }
    if let Some(path) = &args.csv {
        let mut csv = String::new();
        for report in &reports {
            if csv.is_empty() {
                csv.push_str(&report.to_csv());
            } else {
                for line in report.to_csv().lines().skip(1) {
                    csv.push_str(line);
                    csv.push('\n');
                }
            }
        }
        std::fs::write(path, csv).map_err(|e| format!("cannot write csv: {e}"))?;
    }
    let identity_failure = reports.iter().any(|r| {
        r.cases
            .iter()
            .any(|c| !c.pass && !c.params_digest.is_empty())
    });
    let conditioning_failure = reports.iter().any(|r| r.conditioning_failures > 0);
    Ok(if identity_failure {
        EXIT_IDENTITY
    } else if conditioning_failure {
        EXIT_CONDITIONING
    } else {
        EXIT_OK
    })
}

fn enumerate(args: &EnumerateArgs) -> Result<u8, String> {
    if args.sizes.len() != 4 {
        return Err("--sizes needs exactly k1,k2,L1,L2".into());
    }
    let labels = enumerate_labels(args.sizes[0], args.sizes[1], args.sizes[2], args.sizes[3]);
    if args.json {
        println!("{}", serde_json::to_string(&labels).unwrap());
    } else {
        for label in &labels {
            println!(
                "I1={:?} I2={:?} upper={:?} lower={:?}",
                label.set_i1,
                label.set_i2,
                label.upper_colors(),
                label.lower_colors()
            );
        }
        println!("{} labels", labels.len());
    }
    Ok(EXIT_OK)
}

fn bench() -> Result<u8, String> {
    println!(
        "{:<22} {:>8} {:>14} {:>14}",
        "case", "labels", "contraction", "closed form"
    );
    let base_rows = [
        ("base L=3 k=2", DrawSizes { k: 2, l: 3, ..DrawSizes::default() }),
        ("base L=4 k=2", DrawSizes { k: 2, l: 4, ..DrawSizes::default() }),
    ];
    for (name, sizes) in base_rows {
        let mut rng = case_seed_rng(42, name);
        let (draw, _) =
            sample_parameters(&mut rng, sizes).map_err(|_| "conditioning failure".to_string())?;
        let ctx = RContext::new(2, draw.theta.clone()).unwrap();
        let labels = enumerate_base_labels(sizes.l, sizes.k);
        let start = Instant::now();
        for label in &labels {
            let lat = BaseLattice {
                z: draw.z.clone(),
                w: draw.w.clone(),
                params: draw.params.rank2(),
                label: label.clone(),
            };
            brute_force_base(&ctx, &lat).map_err(|e| e.to_string())?;
        }
        let contraction = start.elapsed();
        let start = Instant::now();
        for label in &labels {
            let lat = BaseLattice {
                z: draw.z.clone(),
                w: draw.w.clone(),
                params: draw.params.rank2(),
                label: label.clone(),
            };
            eval_e_base(&draw.theta, &lat).map_err(|e| e.to_string())?;
        }
        let closed = start.elapsed();
        println!(
            "{:<22} {:>8} {:>14} {:>14}",
            name,
            labels.len(),
            format!("{contraction:.2?}"),
            format!("{closed:.2?}")
        );
    }
    let fm_rows = [
        ("nested {1,1,1,2}", (1usize, 1usize, 1usize, 2usize)),
        ("nested {2,2,2,3}", (2, 2, 2, 3)),
    ];
    for (name, (k1, k2, l1, l2)) in fm_rows {
        let sizes = DrawSizes { k1, k2, l1, l2, ..DrawSizes::default() };
        let mut rng = case_seed_rng(42, name);
        let (draw, _) =
            sample_parameters(&mut rng, sizes).map_err(|_| "conditioning failure".to_string())?;
        let ctx = RContext::new(3, draw.theta.clone()).unwrap();
        let labels = enumerate_labels(k1, k2, l1, l2);
        let start = Instant::now();
        for label in &labels {
            let lat = FmLattice {
                z1: draw.z1.clone(),
                z2: draw.z2.clone(),
                w1: draw.w1.clone(),
                w2: draw.w2.clone(),
                params: draw.params.clone(),
                label: label.clone(),
            };
            brute_force_fm(&ctx, &lat).map_err(|e| e.to_string())?;
        }
        let contraction = start.elapsed();
        let start = Instant::now();
        for label in &labels {
            let lat = FmLattice {
                z1: draw.z1.clone(),
                z2: draw.z2.clone(),
                w1: draw.w1.clone(),
                w2: draw.w2.clone(),
                params: draw.params.clone(),
                label: label.clone(),
            };
            eval_e_fm(&draw.theta, &lat).map_err(|e| e.to_string())?;
        }
        let closed = start.elapsed();
        println!(
            "{:<22} {:>8} {:>14} {:>14}",
            name,
            labels.len(),
            format!("{contraction:.2?}"),
            format!("{closed:.2?}")
        );
    }
    Ok(EXIT_OK)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::from(EXIT_OK),
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };
    let outcome = match &cli.command {
        Command::Eval { target } => match target {
            EvalTarget::Base(args) => eval_base(args),
            EvalTarget::Fm(args) => eval_fm(args),
            EvalTarget::Ebar(args) => eval_ebar(args),
            EvalTarget::Weight(args) => eval_weight(args),
        },
        Command::Verify(args) => verify(args),
        Command::EnumerateLabels(args) => enumerate(args),
        Command::Bench => bench(),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            if msg.starts_with("domain: ") {
                ExitCode::from(EXIT_CONDITIONING)
            } else {
                ExitCode::from(EXIT_USAGE)
            }
        }
    }
}
