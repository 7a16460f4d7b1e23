//! Command-line front end: loads model files, runs symmetry checks,
//! transformations, reductions and simulations, and executes the bundled
//! example pipelines.
//!
//! Exit codes: 0 success, 1 check failed, 2 usage or name error,
//! 3 validation error.

use clap::{Parser, Subcommand, ValueEnum};
use sdesym::model::{
    validate_finite, validate_infinitesimal, validate_sde, FiniteTransformation,
    InfinitesimalTransformation, ModelError, ModelFile, Sde, SymmetrySpec,
};
use sdesym::simulate::{
    process_transform, simulate_path, two_sample_check, BrownianAccumulator, Initial, SimConfig,
    StatReport,
};
use sdesym::symmetry::{
    closure_check, determining_residuals, is_strong_symmetry, is_weak_symmetry,
    strong_reduction_solve, strong_reduction_verify, ReductionGrid, ReductionOptions,
    ResidualReport, REDUCTION_VERIFY_TOL,
};
use sdesym::transform::{pushforward, transform_sde};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_OK: u8 = 0;
const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

const EX51_JSON: &str = include_str!("../../../fixtures/ex51.json");
const BM2D_JSON: &str = include_str!("../../../fixtures/bm2d.json");

#[derive(Parser)]
#[command(
    name = "sdesym",
    version,
    about = "Stochastic transformations and symmetries of SDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Check candidate symmetries against the determining equations
    Check {
        #[arg(long)]
        sde: PathBuf,
        /// Symmetry names from the model file
        #[arg(long = "sym", num_args = 1.., required = true)]
        syms: Vec<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Apply a finite transformation to the SDE and print the result
    Transform {
        #[arg(long)]
        sde: PathBuf,
        /// Transformation name in the model file, or a path to a file
        /// holding exactly one transformation
        #[arg(long)]
        transform: String,
        /// Directory for the transformed model file
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Lie bracket of two infinitesimal transformations
    Bracket {
        #[arg(long)]
        sde: PathBuf,
        #[arg(long = "sym", num_args = 2..=2, required = true)]
        syms: Vec<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Push forward symmetries along a finite transformation
    Pushforward {
        #[arg(long)]
        sde: PathBuf,
        #[arg(long)]
        transform: String,
        #[arg(long = "sym", num_args = 1.., required = true)]
        syms: Vec<String>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Reconstruct the strong-reduction fields for a commuting basis
    Reduce {
        #[arg(long)]
        sde: PathBuf,
        #[arg(long = "sym", num_args = 1.., required = true)]
        syms: Vec<String>,
        /// Anchor point, comma separated (e.g. "1,0")
        #[arg(long)]
        anchor: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Simulate paths, optionally transforming them, and run diagnostics
    Simulate {
        #[arg(long)]
        sde: PathBuf,
        #[arg(long)]
        transform: Option<String>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 0.2)]
        horizon: f64,
        /// Start point, comma separated; omitted = uniform in the domain
        #[arg(long)]
        start: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
    /// Run a bundled end-to-end example pipeline (ex51 or bm2d)
    Example {
        id: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 10000)]
        paths: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, value_enum, default_value_t)]
        format: Format,
    },
}

enum CliError {
    Usage(String),
    Validation(String),
    Run(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Run(_) => EXIT_CHECK_FAILED,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Run(m) => m,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> CliError {
        match e {
            ModelError::UnknownName(_) => CliError::Usage(e.to_string()),
            ModelError::File(_) | ModelError::Parse { .. } | ModelError::Dimension(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Run(other.to_string()),
        }
    }
}

struct Workspace {
    file: ModelFile,
    sde: Sde,
}

/// Loads a model file and validates every object it carries.
fn load_workspace(path: &Path) -> Result<Workspace, CliError> {
    let file = ModelFile::load(path)?;
    let sde = file.sde()?;
    let report = validate_sde(&sde).map_err(CliError::from)?;
    if !report.passed() {
        return Err(CliError::Validation(format!("{report}")));
    }
    for name in file.transformations.keys() {
        let t = file.transformation(name)?;
        let report = validate_finite(&t).map_err(CliError::from)?;
        if !report.passed() {
            return Err(CliError::Validation(format!("transformation `{name}`:\n{report}")));
        }
    }
    for name in file.symmetries.keys() {
        let v = file.symmetry(name)?;
        let report = validate_infinitesimal(&v, &sde.domain).map_err(CliError::from)?;
        if !report.passed() {
            return Err(CliError::Validation(format!("symmetry `{name}`:\n{report}")));
        }
    }
    Ok(Workspace { file, sde })
}

impl Workspace {
    fn symmetry(&self, name: &str) -> Result<InfinitesimalTransformation, CliError> {
        Ok(self.file.symmetry(name)?)
    }

    /// A transformation name from the file, or a path to a file holding
    /// exactly one transformation.
    fn transformation(&self, spec: &str) -> Result<FiniteTransformation, CliError> {
        if self.file.transformations.contains_key(spec) {
            return Ok(self.file.transformation(spec)?);
        }
        let path = Path::new(spec);
        if path.exists() {
            let external = ModelFile::load(path)?;
            let mut names = external.transformations.keys();
            match (names.next(), names.next()) {
                (Some(name), None) => return Ok(external.transformation(name)?),
                _ => {
                    return Err(CliError::Usage(format!(
                        "{spec}: expected exactly one transformation in the file"
                    )))
                }
            }
        }
        Err(CliError::Usage(format!("unknown transformation `{spec}`")))
    }
}

fn parse_point(text: &str, n: usize) -> Result<Vec<f64>, CliError> {
    let parts: Result<Vec<f64>, _> = text.split(',').map(|p| p.trim().parse::<f64>()).collect();
    match parts {
        Ok(v) if v.len() == n => Ok(v),
        _ => Err(CliError::Usage(format!("cannot parse `{text}` as a {n}-dimensional point"))),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Check { sde, syms, format } => cmd_check(&sde, &syms, format),
        Command::Transform { sde, transform, out, format } => {
            cmd_transform(&sde, &transform, out.as_deref(), format)
        }
        Command::Bracket { sde, syms, format } => cmd_bracket(&sde, &syms, format),
        Command::Pushforward { sde, transform, syms, format } => {
            cmd_pushforward(&sde, &transform, &syms, format)
        }
        Command::Reduce { sde, syms, anchor, out, format } => {
            cmd_reduce(&sde, &syms, &anchor, out.as_deref(), format)
        }
        Command::Simulate { sde, transform, seed, paths, dt, horizon, start, out, format } => {
            cmd_simulate(&sde, transform.as_deref(), seed, paths, dt, horizon, start.as_deref(), out.as_deref(), format)
        }
        Command::Example { id, seed, paths, dt, format } => cmd_example(&id, seed, paths, dt, format),
    };
    match outcome {
        Ok(true) => ExitCode::from(EXIT_OK),
        Ok(false) => ExitCode::from(EXIT_CHECK_FAILED),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn residual_json(name: &str, report: &ResidualReport, weak: bool) -> serde_json::Value {
    serde_json::json!({
        "symmetry": name,
        "weak_symmetry": weak,
        "report": report,
    })
}

fn cmd_check(sde_path: &Path, syms: &[String], format: Format) -> Result<bool, CliError> {
    let ws = load_workspace(sde_path)?;
    let mut all = true;
    let mut entries = Vec::new();
    for name in syms {
        let v = ws.symmetry(name)?;
        let report = determining_residuals(&ws.sde, &v)?;
        let weak = report.weak_pass();
        all &= weak;
        match format {
            Format::Text => {
                println!("symmetry {name}: {}", if weak { "PASS" } else { "FAIL" });
                print!("{report}");
            }
            Format::Json => entries.push(residual_json(name, &report, weak)),
        }
    }
    if format == Format::Json {
        println!("{}", serde_json::json!({ "checks": entries, "pass": all }));
    }
    Ok(all)
}

fn cmd_transform(
    sde_path: &Path,
    transform: &str,
    out: Option<&Path>,
    format: Format,
) -> Result<bool, CliError> {
    let ws = load_workspace(sde_path)?;
    let t = ws.transformation(transform)?;
    let transformed = transform_sde(&t, &ws.sde)?;
    let file = ModelFile::from_sde(&transformed);
    match format {
        Format::Text => {
            println!("transformed drift:");
            for (i, e) in transformed.mu.iter().enumerate() {
                println!("  mu[{i}] = {e}");
            }
            println!("transformed diffusion:");
            for (i, row) in transformed.sigma.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    println!("  sigma[{i}][{j}] = {e}");
                }
            }
        }
        Format::Json => println!("{}", file.to_json()),
    }
    if let Some(dir) = out {
        ensure_out_dir(dir)?;
        let path = dir.join("transformed.json");
        file.save(&path)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(true)
}

fn symmetry_json(name: &str, v: &InfinitesimalTransformation) -> serde_json::Value {
    serde_json::json!({ "name": name, "triad": SymmetrySpec::from_symmetry(v) })
}

fn print_symmetry(label: &str, v: &InfinitesimalTransformation) {
    println!("{label}:");
    for (i, e) in v.y.iter().enumerate() {
        println!("  Y[{i}] = {e}");
    }
    for (i, row) in v.c.iter().enumerate() {
        for (j, e) in row.iter().enumerate() {
            println!("  C[{i}][{j}] = {e}");
        }
    }
    println!("  tau = {}", v.tau);
}

fn cmd_bracket(sde_path: &Path, syms: &[String], format: Format) -> Result<bool, CliError> {
    let ws = load_workspace(sde_path)?;
    let v1 = ws.symmetry(&syms[0])?;
    let v2 = ws.symmetry(&syms[1])?;
    let br = sdesym::symmetry::bracket(&v1, &v2)?;
    match format {
        Format::Text => print_symmetry(&format!("[{}, {}]", syms[0], syms[1]), &br),
        Format::Json => println!("{}", symmetry_json(&format!("[{},{}]", syms[0], syms[1]), &br)),
    }
    Ok(true)
}

fn cmd_pushforward(
    sde_path: &Path,
    transform: &str,
    syms: &[String],
    format: Format,
) -> Result<bool, CliError> {
    let ws = load_workspace(sde_path)?;
    let t = ws.transformation(transform)?;
    let mut out = Vec::new();
    for name in syms {
        let v = ws.symmetry(name)?;
        let pushed = pushforward(&t, &v)?;
        match format {
            Format::Text => print_symmetry(&format!("pushforward of {name}"), &pushed),
            Format::Json => out.push(symmetry_json(name, &pushed)),
        }
    }
    if format == Format::Json {
        println!("{}", serde_json::json!({ "pushforwards": out }));
    }
    Ok(true)
}

fn reduction_json(grid: &ReductionGrid) -> serde_json::Value {
    serde_json::json!({
        "anchor": grid.anchor,
        "basis_size": grid.basis_size,
        "nodes": grid.node_count(),
        "spacing": grid.spacing,
        "verify_max_residual": grid.verify_max_residual,
        "verify_tolerance": REDUCTION_VERIFY_TOL,
        "pass": grid.verify_max_residual <= REDUCTION_VERIFY_TOL,
    })
}

fn cmd_reduce(
    sde_path: &Path,
    syms: &[String],
    anchor: &str,
    out: Option<&Path>,
    format: Format,
) -> Result<bool, CliError> {
    let ws = load_workspace(sde_path)?;
    let mut basis = Vec::new();
    for name in syms {
        let v = ws.symmetry(name)?;
        if !is_weak_symmetry(&ws.sde, &v)? {
            return Err(CliError::Run(format!("`{name}` is not a weak symmetry of the SDE")));
        }
        basis.push(v);
    }
    let anchor = parse_point(anchor, ws.sde.n())?;
    let grid = strong_reduction_solve(&basis, &ws.sde.domain, &anchor, ReductionOptions::default())
        .map_err(|e| CliError::Run(e.to_string()))?;
    let pass = grid.verify_max_residual <= REDUCTION_VERIFY_TOL;
    match format {
        Format::Text => {
            println!(
                "reduction grid: {} nodes, spacing {:.4}, verify residual {:.3e} ({})",
                grid.node_count(),
                grid.spacing,
                grid.verify_max_residual,
                if pass { "PASS" } else { "FAIL" }
            );
        }
        Format::Json => println!("{}", reduction_json(&grid)),
    }
    if let Some(dir) = out {
        ensure_out_dir(dir)?;
        let path = dir.join("reduction.csv");
        std::fs::write(&path, grid.to_csv())
            .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))?;
        eprintln!("wrote {}", path.display());
    }
    Ok(pass)
}

fn report_json(name: &str, r: &StatReport) -> serde_json::Value {
    serde_json::json!({ "name": name, "report": r })
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    sde_path: &Path,
    transform: Option<&str>,
    seed: u64,
    paths: usize,
    dt: f64,
    horizon: f64,
    start: Option<&str>,
    out: Option<&Path>,
    format: Format,
) -> Result<bool, CliError> {
    let ws = load_workspace(sde_path)?;
    let triad = transform.map(|spec| ws.transformation(spec)).transpose()?;
    let initial = match start {
        Some(text) => Initial::Point(parse_point(text, ws.sde.n())?),
        None => Initial::UniformInDomain,
    };
    let cfg = SimConfig { dt, horizon, paths, seed, initial };

    let mut csv: Option<std::io::BufWriter<std::fs::File>> = match out {
        Some(dir) => {
            ensure_out_dir(dir)?;
            let path = dir.join("ensemble.csv");
            let file = std::fs::File::create(&path)
                .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))?;
            eprintln!("writing {}", path.display());
            Some(std::io::BufWriter::new(file))
        }
        None => None,
    };

    let mut horizons = Vec::with_capacity(paths);
    let mut bundles_meta = 0usize;
    let mut header_written = false;
    let mut finished: Vec<sdesym::simulate::PathBundle> = Vec::new();
    for p in 0..paths {
        let bundle = simulate_path(&ws.sde, &cfg, p).map_err(|e| CliError::Run(e.to_string()))?;
        let bundle = match &triad {
            Some(t) => process_transform(t, &bundle).map_err(|e| CliError::Run(e.to_string()))?,
            None => bundle,
        };
        horizons.push(bundle.time_at(bundle.stop));
        if let Some(w) = csv.as_mut() {
            if !header_written {
                write_csv_header(w, bundle.n(), bundle.m())?;
                header_written = true;
            }
            write_csv_rows(w, p, &bundle)?;
        }
        bundles_meta += bundle.node_count();
        finished.push(bundle);
    }
    if let Some(mut w) = csv {
        w.flush().map_err(|e| CliError::Run(e.to_string()))?;
    }

    horizons.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    let t_test = horizons[horizons.len() / 2];
    let mut acc = BrownianAccumulator::new(ws.sde.m(), t_test);
    for b in &finished {
        acc.add_path(b);
    }
    let report = acc.finish().map_err(|e| CliError::Run(e.to_string()))?;
    match format {
        Format::Text => {
            println!(
                "{} paths, {} nodes total, diagnostics at t = {t_test:.4}",
                paths, bundles_meta
            );
            print!("{report}");
        }
        Format::Json => println!("{}", report_json("brownian", &report)),
    }
    Ok(report.pass)
}

fn write_csv_header<W: Write>(w: &mut W, n: usize, m: usize) -> Result<(), CliError> {
    let mut header = String::from("path,k,t");
    for i in 0..n {
        header.push_str(&format!(",x{}", i + 1));
    }
    for a in 0..m {
        header.push_str(&format!(",w{}", a + 1));
    }
    writeln!(w, "{header}").map_err(|e| CliError::Run(e.to_string()))
}

fn write_csv_rows<W: Write>(
    w: &mut W,
    index: usize,
    bundle: &sdesym::simulate::PathBundle,
) -> Result<(), CliError> {
    for k in 0..bundle.node_count() {
        let mut row = format!("{index},{k},{}", bundle.time_at(k));
        for v in bundle.x_at(k) {
            row.push_str(&format!(",{v}"));
        }
        for v in bundle.w_at(k) {
            row.push_str(&format!(",{v}"));
        }
        writeln!(w, "{row}").map_err(|e| CliError::Run(e.to_string()))?;
    }
    Ok(())
}

// -- example pipelines -------------------------------------------------------

struct StageLog {
    format: Format,
    stages: Vec<serde_json::Value>,
}

impl StageLog {
    fn new(format: Format) -> StageLog {
        StageLog { format, stages: Vec::new() }
    }

    fn stage(&mut self, name: &str, pass: bool, detail: serde_json::Value) -> Result<(), CliError> {
        match self.format {
            Format::Text => println!("stage {name}: {}", if pass { "PASS" } else { "FAIL" }),
            Format::Json => self.stages.push(serde_json::json!({
                "stage": name, "pass": pass, "detail": detail,
            })),
        }
        if pass {
            Ok(())
        } else {
            if self.format == Format::Json {
                self.flush(false);
            }
            Err(CliError::Run(format!("stage {name} failed")))
        }
    }

    fn flush(&self, pass: bool) {
        if self.format == Format::Json {
            println!("{}", serde_json::json!({ "stages": self.stages, "pass": pass }));
        }
    }
}

fn load_fixture(id: &str) -> Result<ModelFile, CliError> {
    match id {
        "ex51" => Ok(ModelFile::from_json(EX51_JSON)?),
        "bm2d" => Ok(ModelFile::from_json(BM2D_JSON)?),
        other => Err(CliError::Usage(format!("unknown example `{other}` (try ex51 or bm2d)"))),
    }
}

fn cmd_example(id: &str, seed: u64, paths: usize, dt: f64, format: Format) -> Result<bool, CliError> {
    let file = load_fixture(id)?;
    let mut log = StageLog::new(format);

    // stage: validate
    let sde = file.sde()?;
    let mut valid = validate_sde(&sde).map_err(CliError::from)?.passed();
    for name in file.transformations.keys() {
        valid &= validate_finite(&file.transformation(name)?).map_err(CliError::from)?.passed();
    }
    for name in file.symmetries.keys() {
        valid &= validate_infinitesimal(&file.symmetry(name)?, &sde.domain)
            .map_err(CliError::from)?
            .passed();
    }
    if !valid {
        match format {
            Format::Text => println!("stage validate: FAIL"),
            Format::Json => log.flush(false),
        }
        return Err(CliError::Validation("fixture objects failed validation".into()));
    }
    log.stage("validate", true, serde_json::json!({}))?;

    match id {
        "ex51" => example_ex51(&file, &sde, seed, paths, dt, &mut log)?,
        "bm2d" => example_bm2d(&file, &sde, &mut log)?,
        _ => unreachable!(),
    }
    log.flush(true);
    Ok(true)
}

fn example_ex51(
    file: &ModelFile,
    sde: &Sde,
    seed: u64,
    paths: usize,
    dt: f64,
    log: &mut StageLog,
) -> Result<(), CliError> {
    let v1 = file.symmetry("V1")?;
    let v2 = file.symmetry("V2")?;
    let t = file.transformation("T")?;

    // determining equations
    let mut pass = true;
    for v in [&v1, &v2] {
        pass &= is_weak_symmetry(sde, v)?;
    }
    log.stage("check-symmetries", pass, serde_json::json!({}))?;

    // symbolic reduction fields verify, then numeric reconstruction
    let basis = vec![v1.clone(), v2.clone()];
    let verified = strong_reduction_verify(&basis, &t.b, &t.eta, &sde.domain)?;
    log.stage("reduction-verify", verified, serde_json::json!({}))?;
    let grid = strong_reduction_solve(&basis, &sde.domain, &[1.0, 0.0], ReductionOptions::default())
        .map_err(|e| CliError::Run(e.to_string()))?;
    let mut worst = grid.verify_max_residual;
    let mut closed_form_dev = 0.0f64;
    for idx in 0..grid.node_count() {
        let p = &grid.points[idx];
        for i in 0..2 {
            for j in 0..2 {
                let want = t.b[i][j]
                    .evaluate(p)
                    .map_err(|e| CliError::Run(e.to_string()))?;
                closed_form_dev = closed_form_dev.max((grid.b[idx][i][j] - want).abs());
            }
        }
        let want = t.eta.evaluate(p).map_err(|e| CliError::Run(e.to_string()))?;
        closed_form_dev = closed_form_dev.max((grid.eta[idx] - want).abs());
    }
    worst = worst.max(closed_form_dev);
    log.stage(
        "reduction-solve",
        grid.verify_max_residual <= REDUCTION_VERIFY_TOL && closed_form_dev < 1e-5,
        serde_json::json!({
            "verify_residual": grid.verify_max_residual,
            "closed_form_deviation": closed_form_dev,
            "worst": worst,
        }),
    )?;

    // transformed SDE and strong symmetries
    let straightened = transform_sde(&t, sde)?;
    let mut strong = true;
    for v in [&v1, &v2] {
        let pushed = pushforward(&t, v)?;
        strong &= is_strong_symmetry(&straightened, &pushed)?;
    }
    log.stage("strong-symmetries-of-transformed", strong, serde_json::json!({}))?;

    // Monte Carlo comparison at transformed time 0.2
    let horizon = 1.2;
    let t_test = 0.2;
    let cfg = SimConfig {
        dt,
        horizon,
        paths,
        seed,
        initial: Initial::Point(vec![1.0, 0.0]),
    };
    let mut transformed_states = Vec::new();
    let mut acc = BrownianAccumulator::new(2, t_test);
    for p in 0..paths {
        let bundle = simulate_path(sde, &cfg, p).map_err(|e| CliError::Run(e.to_string()))?;
        let moved = process_transform(&t, &bundle).map_err(|e| CliError::Run(e.to_string()))?;
        if let Some(k) = moved.node_at_time(t_test) {
            transformed_states.push(moved.x_at(k).to_vec());
        }
        acc.add_path(&moved);
    }
    let brownian = acc.finish().map_err(|e| CliError::Run(e.to_string()))?;

    let direct_cfg = SimConfig {
        dt,
        horizon: t_test,
        paths,
        seed: seed ^ 0x9e37_79b9,
        initial: Initial::Point(vec![1.0, 0.0]),
    };
    let mut direct_states = Vec::new();
    for p in 0..paths {
        let bundle =
            simulate_path(&straightened, &direct_cfg, p).map_err(|e| CliError::Run(e.to_string()))?;
        if let Some(k) = bundle.node_at_time(t_test) {
            direct_states.push(bundle.x_at(k).to_vec());
        }
    }
    let two_sample = two_sample_check(&transformed_states, &direct_states)
        .map_err(|e| CliError::Run(e.to_string()))?;
    if log.format == Format::Text {
        print!("{two_sample}");
        print!("{brownian}");
    }
    log.stage(
        "monte-carlo",
        two_sample.pass && brownian.pass,
        serde_json::json!({ "two_sample": two_sample, "brownian": brownian }),
    )?;
    Ok(())
}

fn example_bm2d(file: &ModelFile, sde: &Sde, log: &mut StageLog) -> Result<(), CliError> {
    let names = ["V1", "V2", "V3", "V4"];
    let mut basis = Vec::new();
    let mut pass = true;
    for name in names {
        let v = file.symmetry(name)?;
        pass &= is_weak_symmetry(sde, &v)?;
        basis.push(v);
    }
    // the stripped rotation must fail
    let no_c = file.symmetry("V4_noC")?;
    pass &= !is_weak_symmetry(sde, &no_c)?;
    log.stage("check-symmetries", pass, serde_json::json!({}))?;

    let sc = closure_check(sde, &basis)?;
    log.stage(
        "closure",
        sc.is_closed() && sc.brackets_are_symmetries,
        serde_json::json!({ "fit_residual": sc.fit_residual }),
    )?;

    // V1, V2 are already strong; reduce the dilation/rotation pair, whose
    // directions are independent away from the origin
    let mut strong_skip = true;
    for v in &basis[..2] {
        strong_skip &= is_strong_symmetry(sde, v)?;
    }
    log.stage("strong-already", strong_skip, serde_json::json!({}))?;
    let grid = strong_reduction_solve(
        &[basis[2].clone(), basis[3].clone()],
        &sde.domain,
        &[1.0, 0.0],
        ReductionOptions::default(),
    )
    .map_err(|e| CliError::Run(e.to_string()))?;
    log.stage(
        "reduction-solve",
        grid.verify_max_residual <= REDUCTION_VERIFY_TOL,
        serde_json::json!({ "verify_residual": grid.verify_max_residual }),
    )?;
    Ok(())
}
