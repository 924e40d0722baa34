use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thin2graph::config::{parse_config, Overrides, RunConfig};
use thin2graph::fem2d::{assemble, eval_phi_eps, solve_gevp};
use thin2graph::geometry::Point;
use thin2graph::graph_spectra::{secular_eigenvalues, SecularSolveConfig};
use thin2graph::harness::{recovery_kinetic_target, recovery_sequence, run_convergence};
use thin2graph::mesh2d::triangulate;
use thin2graph::star_graph::{GraphPoint, MetricStarGraph, DEFAULT_SAMPLES};
use thin2graph::thin_domain::project_f_eps;
use thin2graph::{Error, Result};

/// Thin star-shaped domains and their quantum-graph limit.
#[derive(Parser, Debug)]
#[command(name = "thin2graph", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Eigenvalues of the limit graph operator from the secular equation.
    GraphSpectrum(GraphSpectrumArgs),
    /// Finite-element eigenvalues of the thin domain at one width.
    ThinSpectrum(ThinArgs),
    /// Full convergence sweep over the configured widths.
    Converge(ConvergeArgs),
    /// Recovery-sequence energy identities at one width.
    RecoveryCheck(ThinArgs),
    /// Graph point assigned to a point of the thin domain.
    Project(ProjectArgs),
    /// Triangulation of the thin domain in plain text.
    MeshExport(ThinArgs),
}

#[derive(Args, Debug)]
struct GraphSpectrumArgs {
    /// Edge lengths, comma separated.
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    lengths: Vec<f64>,
    /// Edge direction angles in radians; equally spaced when omitted.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    angles: Option<Vec<f64>>,
    /// Junction coupling constant.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    cv: f64,
    /// Number of eigenvalues, counted with multiplicity.
    #[arg(long, default_value_t = 6)]
    modes: usize,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ThinArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    h: Option<f64>,
    #[arg(long)]
    modes: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConvergeArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory for `report.csv` and `report.json`.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Also write one two-column file per diagnostic series.
    #[arg(long)]
    plot_data: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Debug)]
struct ProjectArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    x: f64,
    #[arg(long, allow_hyphen_values = true)]
    y: f64,
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<f64>,
}

enum Failure {
    Validation(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Solver(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> std::result::Result<(), Failure> {
    match command {
        Command::GraphSpectrum(a) => graph_spectrum(a),
        Command::ThinSpectrum(a) => {
            let cfg = load(&a)?;
            emit(a.out.as_deref(), &thin_spectrum(&cfg)?)
        }
        Command::Converge(a) => converge(a),
        Command::RecoveryCheck(a) => {
            let cfg = load(&a)?;
            emit(a.out.as_deref(), &recovery_check(&cfg)?)
        }
        Command::Project(a) => project(a),
        Command::MeshExport(a) => {
            let cfg = load(&a)?;
            let mesh = triangulate(&cfg.spec()?, cfg.mesh_size(), cfg.layers)?;
            emit(a.out.as_deref(), &mesh.to_text())
        }
    }
}

fn load(a: &ThinArgs) -> Result<RunConfig> {
    let ov = Overrides { eps: a.eps, h: a.h, modes: a.modes, tol: a.tol, threads: None };
    parse_config(&a.config, &ov)
}

fn graph_spectrum(a: GraphSpectrumArgs) -> std::result::Result<(), Failure> {
    let n = a.lengths.len();
    let angles = a.angles.unwrap_or_else(|| (0..n).map(|j| TAU * j as f64 / n as f64).collect());
    let graph = MetricStarGraph::new(&a.lengths, &angles)?;
    if a.modes == 0 {
        return Err(Failure::Validation("--modes must be at least 1".into()));
    }
    let pairs = secular_eigenvalues(&graph, a.cv, &SecularSolveConfig::for_count(a.modes, &graph))?;
    let mut out = String::from("index,lambda,multiplicity,k\n");
    let mut index = 0;
    'outer: for p in &pairs {
        for _ in 0..p.multiplicity {
            if index == a.modes {
                break 'outer;
            }
            writeln!(out, "{index},{:e},{},{:e}", p.lambda, p.multiplicity, p.k).unwrap();
            index += 1;
        }
    }
    if index < a.modes {
        return Err(Failure::Solver(format!("secular solver found only {index} of {} eigenvalues", a.modes)));
    }
    emit(a.out.as_deref(), &out)
}

fn thin_spectrum(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.spec()?;
    let mesh = triangulate(&spec, cfg.mesh_size(), cfg.layers)?;
    let sys = assemble(&mesh, &spec, &cfg.potential)?;
    let res = solve_gevp(&sys, cfg.modes, cfg.tol)?;
    let mut out = String::from("index,lambda,residual\n");
    for (i, (l, r)) in res.eigenvalues.iter().zip(&res.residuals).enumerate() {
        writeln!(out, "{i},{l:e},{r:e}").unwrap();
    }
    Ok(out)
}

fn recovery_check(cfg: &RunConfig) -> Result<String> {
    let spec = cfg.spec()?;
    let h = cfg.mesh_size();
    let mesh = triangulate(&spec, h, cfg.layers)?;
    let sys = assemble(&mesh, &spec, &cfg.potential)?;
    let psi = cfg.recovery_test.function(&cfg.graph, DEFAULT_SAMPLES);
    let u = recovery_sequence(&psi, &spec, &mesh)?;
    let phi = eval_phi_eps(&u, &sys)?;
    let k_target = recovery_kinetic_target(&psi, &spec);
    let v_target = cfg.c_v * psi.vertex_value().norm_sqr();
    let mut out = String::from("eps,h,quantity,value,target,error\n");
    for (name, v, t) in [("phi_k", phi.phi_k, k_target), ("phi_v", phi.phi_v, v_target)] {
        writeln!(out, "{:e},{h:e},{name},{v:e},{t:e},{:e}", cfg.eps, (v - t).abs()).unwrap();
    }
    Ok(out)
}

fn project(a: ProjectArgs) -> std::result::Result<(), Failure> {
    let ov = Overrides { eps: a.eps, ..Overrides::default() };
    let cfg = parse_config(&a.config, &ov)?;
    let spec = cfg.spec()?;
    let line = match project_f_eps(&Point::new(a.x, a.y), &spec)? {
        GraphPoint::Vertex => "vertex\n".to_string(),
        GraphPoint::Edge { edge, s } => format!("edge {edge} s {s}\n"),
    };
    emit(None, &line)
}

fn converge(a: ConvergeArgs) -> std::result::Result<(), Failure> {
    let ov = Overrides { threads: a.threads, ..Overrides::default() };
    let cfg = parse_config(&a.config, &ov)?;
    let conv = cfg.convergence();
    conv.validate()?;
    let report = run_convergence(&conv)?;
    std::fs::create_dir_all(&a.out).map_err(Error::from)?;
    write_atomic(&a.out.join("report.csv"), &report.to_csv())?;
    write_atomic(&a.out.join("report.json"), &report.to_json()?)?;
    if a.plot_data {
        for (name, body) in report.plot_data() {
            write_atomic(&a.out.join(name), &body)?;
        }
    }
    let failed: Vec<String> = report
        .rows
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("eps = {}: {e}", r.eps)))
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Solver(format!("{} row(s) failed; {}", failed.len(), failed.join("; "))))
    }
}

fn emit(path: Option<&Path>, text: &str) -> std::result::Result<(), Failure> {
    match path {
        Some(p) => Ok(write_atomic(p, text)?),
        None => {
            std::io::stdout().write_all(text.as_bytes()).map_err(Error::from)?;
            Ok(())
        }
    }
}

/// Writes through a sibling temporary file so readers never see a partial file.
fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(text.as_bytes())?;
    tmp.persist(path).map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}
