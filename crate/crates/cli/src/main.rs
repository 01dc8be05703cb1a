use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use locc_forge::catalog::{self, CatalogParams};
use locc_forge::engine::{self, Certificate, SearchOptions, Verdict};
use locc_forge::io::{self, IoError, MeasurementRef, ProtocolFile};
use locc_forge::tree::ProtocolNode;
use locc_forge::verifier::{self, VerificationReport};
use locc_forge::{SeparableMeasurement, Tolerances};

const EXIT_OK: u8 = 0;
const EXIT_IMPOSSIBLE: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;
const EXIT_INVALID: u8 = 4;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "locc-forge", version, about = "Synthesize or refute LOCC protocols for separable measurements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Relative rank factor in max(rows, cols) · σ_max · tol.
    #[arg(long, global = true, value_name = "TOL")]
    tol_rank: Option<f64>,
    /// Residual tolerance for reconstructions, node sums and completeness.
    #[arg(long, global = true, value_name = "TOL")]
    tol_residual: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Root nullspace dimensions and extreme rays for every party.
    Check { measurement: PathBuf },
    /// Search for a protocol tree.
    Synth(SynthArgs),
    /// Verify a protocol tree against a measurement.
    Verify {
        tree: PathBuf,
        /// Measurement file; defaults to the tree's measurement_ref.
        #[arg(long)]
        measurement: Option<PathBuf>,
    },
    /// Outcome probabilities of a protocol tree on a state.
    Simulate(SimulateArgs),
    /// Write a reference measurement; lists the entries when no name is given.
    Catalog(CatalogArgs),
}

#[derive(Args)]
struct SynthArgs {
    measurement: PathBuf,
    #[arg(long, default_value_t = engine::DEFAULT_MAX_ROUNDS)]
    max_rounds: usize,
    #[arg(long, default_value_t = engine::DEFAULT_MAX_SUPPORT)]
    max_support: usize,
    /// Worker threads (overrides LOCC_FORGE_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Write the protocol tree here when one is found.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    tree: PathBuf,
    #[arg(long)]
    measurement: Option<PathBuf>,
    /// `maximally-mixed`, `random` (seeded), or a JSON matrix file.
    #[arg(long, default_value = "maximally-mixed")]
    state: String,
    #[arg(long, default_value_t = 0)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct CatalogArgs {
    name: Option<String>,
    /// Four angles θ2,θ4,θ6,θ8 for rotated_dominoes.
    #[arg(long, value_delimiter = ',')]
    theta: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
struct Failure(u8, String);

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure(EXIT_INVALID, e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn tolerances(cli: &Cli) -> Result<Tolerances, Failure> {
    let mut tol = Tolerances::default();
    for (name, value, slot) in [
        ("--tol-rank", cli.tol_rank, &mut tol.rank_rel),
        ("--tol-residual", cli.tol_residual, &mut tol.residual),
    ] {
        if let Some(v) = value {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Failure(EXIT_USAGE, format!("{name} must be a positive number")));
            }
            *slot = v;
        }
    }
    Ok(tol)
}

fn run(cli: &Cli) -> Outcome {
    let tol = tolerances(cli)?;
    match &cli.command {
        Command::Check { measurement } => check(cli, measurement, &tol),
        Command::Synth(args) => synth(cli, args, &tol),
        Command::Verify { tree, measurement } => verify(cli, tree, measurement.as_deref(), &tol),
        Command::Simulate(args) => simulate(cli, args, &tol),
        Command::Catalog(args) => catalog_cmd(cli, args),
    }
}

fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" || s.is_empty() {
        format!("{x:.3e}")
    } else {
        s.to_string()
    }
}

fn fmt_vec(v: &[f64]) -> String {
    format!("({})", v.iter().map(|&x| fmt_num(x)).collect::<Vec<_>>().join(", "))
}

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn dims_line(m: &SeparableMeasurement, dims: &[usize]) -> String {
    m.parties().iter().zip(dims).map(|(p, d)| format!("{}:{d}", p.name)).collect::<Vec<_>>().join(" ")
}

fn check(cli: &Cli, path: &Path, tol: &Tolerances) -> Outcome {
    let m = io::load_measurement(path, tol)?;
    let cones = engine::check_root(&m, tol).map_err(|e| Failure(EXIT_INVALID, e.to_string()))?;
    let dims: Vec<usize> = cones.iter().map(|c| c.nullspace_dim).collect();
    if cli.json {
        let parties: Vec<serde_json::Value> = cones
            .iter()
            .map(|c| {
                serde_json::json!({
                    "party": m.parties()[c.party].name,
                    "nullspace_dim": c.nullspace_dim,
                    "extreme_rays": c.extreme_rays,
                    "singular_values": c.singular_values,
                    "rank_threshold": c.threshold,
                    "marginal": c.marginal,
                })
            })
            .collect();
        print_json(&serde_json::json!({
            "root_dims": m.parties().iter().zip(&dims).map(|(p, d)| (p.name.clone(), serde_json::json!(d))).collect::<serde_json::Map<_, _>>(),
            "impossible_at_root": dims.iter().all(|&d| d == 1),
            "parties": parties,
            "tolerances": tol,
        }));
    } else {
        for c in &cones {
            let name = &m.parties()[c.party].name;
            let marginal = if c.marginal { " (marginal rank decision)" } else { "" };
            println!("party {name}: nullspace dim {}{marginal}", c.nullspace_dim);
            for r in &c.extreme_rays {
                println!("  ray {}", fmt_vec(r));
            }
        }
        println!("dims {}", dims_line(&m, &dims));
        if dims.iter().all(|&d| d == 1) {
            println!("no party can measure first: {}", Verdict::ImpossibleAtRoot);
        }
    }
    Ok(EXIT_OK)
}

fn print_node(m: &SeparableMeasurement, node: &ProtocolNode, depth: usize) {
    let pad = "  ".repeat(depth);
    let who = node.party.map(|p| m.parties()[p].name.clone()).unwrap_or_else(|| "root".into());
    match &node.leaf {
        Some(l) => println!("{pad}{who} -> outcome {} x {}", m.outcomes()[l.outcome].label, fmt_num(l.scale)),
        None => println!("{pad}{who} {}", fmt_vec(&node.coeffs)),
    }
    for c in &node.children {
        print_node(m, c, depth + 1);
    }
}

/// Path to `target` as stored inside a file written to `out`.
fn reference_from(out: &Path, target: &Path) -> String {
    let abs = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let target = abs(target);
    let out_dir = out.parent().map(|d| if d.as_os_str().is_empty() { Path::new(".") } else { d }).map(abs);
    match (out_dir, target.parent(), target.file_name()) {
        (Some(d), Some(tp), Some(name)) if d == tp => name.to_string_lossy().into_owned(),
        _ => target.to_string_lossy().into_owned(),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure(EXIT_INVALID, format!("{}: {e}", path.display())))
}

fn synth(cli: &Cli, args: &SynthArgs, tol: &Tolerances) -> Outcome {
    if args.max_rounds == 0 || args.max_support < 2 {
        return Err(Failure(EXIT_USAGE, "--max-rounds must be ≥ 1 and --max-support ≥ 2".into()));
    }
    let m = io::load_measurement(&args.measurement, tol)?;
    let opts = SearchOptions { max_rounds: args.max_rounds, max_support: args.max_support, tolerances: *tol, threads: args.threads };
    let cert = engine::synthesize(&m, &opts).map_err(|e| Failure(EXIT_INVALID, e.to_string()))?;

    if let (Some(out), Some(tree)) = (&args.out, &cert.tree) {
        let file = ProtocolFile::new(tree, &m, MeasurementRef::Path(reference_from(out, &args.measurement)));
        write_file(out, &serde_json::to_string_pretty(&file).expect("serializable"))?;
    }
    if cli.json {
        print_json(&io::certificate_json(&cert, &m));
    } else {
        print_certificate(&m, &cert);
    }
    Ok(match cert.verdict {
        Verdict::ProtocolFound => EXIT_OK,
        Verdict::ImpossibleAtRoot => EXIT_IMPOSSIBLE,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

fn print_certificate(m: &SeparableMeasurement, cert: &Certificate) {
    println!("{}", cert.verdict);
    println!("root dims {}", dims_line(m, &cert.root_dims()));
    if let Some(tree) = &cert.tree {
        println!("rounds {}", tree.rounds());
        print_node(m, &tree.root, 0);
    }
    let s = &cert.stats;
    println!(
        "nodes expanded {}, cones {}, dead ends {}, memo hits {}, round-limit cuts {}, {:.1} ms",
        s.nodes_expanded, s.cones_evaluated, s.dead_ends, s.memo_hits, s.round_limit_hits, s.wall_time_ms
    );
    for w in &cert.warnings {
        println!("warning: {w}");
    }
}

fn load_tree_and_measurement(
    tree: &Path,
    measurement: Option<&Path>,
    tol: &Tolerances,
) -> Result<(SeparableMeasurement, locc_forge::ProtocolTree), Failure> {
    let file = io::load_protocol_file(tree)?;
    let m = match measurement {
        Some(p) => io::load_measurement(p, tol)?,
        None => file.measurement(tree.parent().unwrap_or(Path::new(".")), tol)?,
    };
    let t = file.tree(&m)?;
    Ok((m, t))
}

fn print_report(rep: &VerificationReport) {
    for (name, c) in rep.checks() {
        let status = if c.passed { "pass" } else { "FAIL" };
        println!("{name:<20} {status}  worst residual {:.3e}", c.worst_residual);
        for f in &c.failures {
            println!("    at {f}");
        }
    }
    println!("{}", if rep.passed() { "tree verified" } else { "tree rejected" });
}

fn verify(cli: &Cli, tree: &Path, measurement: Option<&Path>, tol: &Tolerances) -> Outcome {
    let (m, t) = load_tree_and_measurement(tree, measurement, tol)?;
    let rep = verifier::verify_tree(&t, &m, tol).map_err(|e| Failure(EXIT_INVALID, e.to_string()))?;
    if cli.json {
        print_json(&serde_json::json!({ "passed": rep.passed(), "report": rep }));
    } else {
        print_report(&rep);
    }
    Ok(if rep.passed() { EXIT_OK } else { EXIT_INVALID })
}

fn simulate(cli: &Cli, args: &SimulateArgs, tol: &Tolerances) -> Outcome {
    let (m, t) = load_tree_and_measurement(&args.tree, args.measurement.as_deref(), tol)?;
    let d = m.total_dim();
    let rho = match args.state.as_str() {
        "maximally-mixed" => verifier::maximally_mixed(d),
        "random" => verifier::seeded_density_matrix(d, args.seed),
        path => {
            let text = fs::read_to_string(path).map_err(|e| Failure(EXIT_INVALID, format!("{path}: {e}")))?;
            io::parse_state(&text)?
        }
    };
    let rep = verifier::simulate(&t, &m, &rho, args.trials, args.seed).map_err(|e| Failure(EXIT_INVALID, e.to_string()))?;
    if cli.json {
        print_json(&serde_json::to_value(&rep).expect("serializable"));
        return Ok(EXIT_OK);
    }
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "leaf probabilities");
    for (i, l) in rep.leaves.iter().enumerate() {
        let count = if rep.trials > 0 { format!("  sampled {}", rep.counts[i]) } else { String::new() };
        let _ = writeln!(out, "  {:<16} outcome {:<6} p = {:.12}{count}", l.path, m.outcomes()[l.outcome].label, l.probability);
    }
    let _ = writeln!(out, "by outcome (leaves vs direct)");
    for o in &rep.outcomes {
        let _ = writeln!(out, "  {:<6} {:.12}  {:.12}", m.outcomes()[o.outcome].label, o.from_leaves, o.direct);
    }
    let _ = writeln!(out, "total {:.12}, max difference {:.3e}", rep.total, rep.max_difference);
    Ok(EXIT_OK)
}

fn catalog_cmd(cli: &Cli, args: &CatalogArgs) -> Outcome {
    let Some(name) = &args.name else {
        if cli.json {
            let list: Vec<serde_json::Value> = catalog::ENTRIES
                .iter()
                .map(|e| serde_json::json!({"name": e.name, "summary": e.summary, "params": e.params}))
                .collect();
            print_json(&serde_json::Value::Array(list));
        } else {
            for e in catalog::ENTRIES {
                println!("{:<18} {}  [params: {}]", e.name, e.summary, e.params);
            }
        }
        return Ok(EXIT_OK);
    };
    let thetas = match args.theta.as_deref() {
        None => None,
        Some(&[a, b, c, d]) => Some([a, b, c, d]),
        Some(v) => return Err(Failure(EXIT_USAGE, format!("--theta takes four angles, got {}", v.len()))),
    };
    let m = catalog::generate(name, &CatalogParams { thetas, seed: args.seed })
        .map_err(|e| Failure(EXIT_USAGE, e.to_string()))?;
    let text = io::measurement_to_string(&m);
    match &args.out {
        Some(p) => write_file(p, &text)?,
        None => println!("{text}"),
    }
    Ok(EXIT_OK)
}
