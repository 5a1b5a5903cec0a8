//! Command-line front end.
//!
//! Exit codes are a stable contract: 0 when every requested property
//! holds, 1 when a hypothesis or asserted check fails, 2 for usage,
//! parse, configuration, and I/O problems.

use clap::{Args, Parser, Subcommand};
use kdv_carleman::hypotheses::hormander_rank_f64;
use kdv_carleman::{
    catalog, catalog_entry, check_hypotheses, emit_report, gen_test_functions, kdv_1d,
    parse_expr, read_system_file, render_system_file, run_sweep, solvability_ratio,
    summary_path_for, verify_all, AliasTable, Error, Grid, HypothesisReport, Involutivity,
    Region, Result, ScalarExpr, SweepConfig, SystemSpec, Target, WeightSpec,
};
use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

#[derive(Parser)]
#[command(
    name = "kdv-carleman",
    version,
    about = "Hypothesis checks, operator-identity verification, and weighted-estimate sweeps for KdV-type operators"
)]
struct Cli {
    /// Directory receiving CSV and summary files
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Check involutivity, nondegeneracy, and bracket rank on a region
    Check(CheckArgs),
    /// Verify the operator identities symbolically
    Verify(VerifyArgs),
    /// Run a weighted-estimate sweep described by a TOML config
    Sweep(SweepArgs),
    /// Estimate the lower solvability constant over the seeded family
    Solvability(SolvArgs),
    /// List or render the built-in systems
    Catalog(CatalogArgs),
}

#[derive(Args)]
struct SourceArgs {
    /// Built-in system id (see `catalog list`)
    #[arg(long, conflicts_with = "file")]
    catalog: Option<String>,
    /// System definition file
    #[arg(long)]
    file: Option<PathBuf>,
    /// Override the speed a(x) of the kdv entries, e.g. --a 1+x^2
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    /// Same override spelled as an assignment: --field a=1+x^2
    #[arg(long, value_name = "a=EXPR", allow_hyphen_values = true)]
    field: Option<String>,
    /// Region bounds, comma-separated lo,hi per axis, rationals
    #[arg(long = "box", value_name = "LO1,HI1,…", allow_hyphen_values = true)]
    box_bounds: Option<String>,
    /// Sample density per axis for region-based checks
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Longest bracket length probed for the rank report
    #[arg(long, default_value_t = 3)]
    rank_len: u32,
    /// Also print the report as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Weight expression; defaults to the source's weight when it has one
    #[arg(long, allow_hyphen_values = true)]
    weight: Option<String>,
    /// Print residuals without failing: findings, not errors
    #[arg(long)]
    report_only: bool,
    /// Also print the reports as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML sweep description
    #[arg(long)]
    config: PathBuf,
    /// Report results without failing on asserted checks
    #[arg(long)]
    report_only: bool,
}

#[derive(Args)]
struct SolvArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Sobolev index s of the H^{-s} norm in the denominator
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    /// Grid shape, comma-separated; defaults to 256/64/32 per axis for
    /// dimensions 2/3/4
    #[arg(long)]
    shape: Option<String>,
    /// Number of seeded test functions
    #[arg(long, default_value_t = 50)]
    count: usize,
    #[arg(long, default_value_t = 11)]
    seed: u64,
    /// Operator whose image is measured: p1 or p1*
    #[arg(long, default_value = "p1*")]
    target: String,
}

#[derive(Args)]
struct CatalogArgs {
    #[command(subcommand)]
    which: CatalogCmd,
}

#[derive(Subcommand)]
enum CatalogCmd {
    /// One line per built-in system
    List,
    /// Render a built-in system in the definition-file format
    Show { id: String },
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::HypothesisFailure(_) => 1,
                _ => 2,
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Check(args) => cmd_check(args),
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Sweep(args) => cmd_sweep(&cli.out, args),
        Cmd::Solvability(args) => cmd_solvability(args),
        Cmd::Catalog(args) => cmd_catalog(args),
    }
}

struct Loaded {
    label: String,
    system: SystemSpec,
    region: Region,
    weight: Option<ScalarExpr>,
    c0: f64,
}

fn weight_aliases(dim: usize) -> AliasTable {
    let mut t = AliasTable::for_dim(dim).with("t", 0);
    if dim == 2 {
        t = t.with("x", 1);
    }
    t
}

fn parse_speed(src: &str) -> Result<ScalarExpr> {
    let aliases = AliasTable::for_dim(2).with("t", 0).with("x", 1);
    parse_expr(src, 2, &aliases)
}

fn parse_rational(tok: &str) -> Result<BigRational> {
    let t = tok.trim();
    BigRational::from_str(t)
        .ok()
        .or_else(|| BigInt::from_str(t).ok().map(BigRational::from_integer))
        .ok_or_else(|| Error::InvalidConfig(format!("expected an integer or p/q rational, found {t:?}")))
}

fn load_source(args: &SourceArgs) -> Result<Loaded> {
    let mut loaded = match (&args.catalog, &args.file) {
        (Some(id), None) => {
            let e = catalog_entry(id)?;
            Loaded {
                label: e.id.to_string(),
                system: e.system,
                region: e.region,
                weight: Some(e.weight),
                c0: e.c0,
            }
        }
        (None, Some(path)) => {
            let sf = read_system_file(path)?;
            let dim = sf.system.dim();
            Loaded {
                label: path.display().to_string(),
                system: sf.system,
                region: match sf.region {
                    Some(r) => r,
                    None => Region::centered_box(dim, 1, 3)?,
                },
                weight: sf.weight,
                c0: sf.c0.unwrap_or(1.0),
            }
        }
        _ => {
            return Err(Error::InvalidConfig(
                "pass exactly one of --catalog <id> or --file <path>".into(),
            ))
        }
    };

    let speed = match (&args.a, &args.field) {
        (Some(a), None) => Some(a.clone()),
        (None, Some(f)) => match f.split_once('=') {
            Some(("a", rest)) => Some(rest.trim().to_string()),
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "--field expects the form a=<expr>, found {f:?}"
                )))
            }
        },
        (None, None) => None,
        (Some(_), Some(_)) => {
            return Err(Error::InvalidConfig("pass --a or --field a=…, not both".into()))
        }
    };
    if let Some(a) = speed {
        let on_kdv = matches!(args.catalog.as_deref(), Some("kdv" | "kdv-var"));
        if !on_kdv {
            return Err(Error::InvalidConfig(
                "the speed override only applies to --catalog kdv or kdv-var".into(),
            ));
        }
        loaded.system = kdv_1d(parse_speed(&a)?)?;
        loaded.label = format!("{} with a = {a}", loaded.label);
    }

    if let Some(spec) = &args.box_bounds {
        let dim = loaded.system.dim();
        let vals: Vec<BigRational> =
            spec.split(',').map(parse_rational).collect::<Result<_>>()?;
        if vals.len() != 2 * dim {
            return Err(Error::InvalidConfig(format!(
                "--box needs {} values (lo,hi per axis), got {}",
                2 * dim,
                vals.len()
            )));
        }
        let lo = vals.iter().step_by(2).cloned().collect();
        let hi = vals.iter().skip(1).step_by(2).cloned().collect();
        loaded.region = Region::new(lo, hi, args.samples.unwrap_or(loaded.region.sample_density()))?;
    } else if let Some(s) = args.samples {
        loaded.region = Region::new(loaded.region.lo().to_vec(), loaded.region.hi().to_vec(), s)?;
    }
    Ok(loaded)
}

fn echo(label: &str, extra: &[(&str, String)]) {
    println!("kdv-carleman {}", env!("CARGO_PKG_VERSION"));
    println!("system: {label}");
    for (k, v) in extra {
        println!("{k}: {v}");
    }
}

fn involutivity_line(v: &Involutivity) -> String {
    match v {
        Involutivity::VerifiedExact => "verified-exact".into(),
        Involutivity::VerifiedNumeric { max_residual } => {
            format!("verified-numeric (max residual {max_residual:.3e})")
        }
        Involutivity::Failed { witness, residual } => {
            let pt: Vec<String> = witness.iter().map(|x| format!("{x:.4}")).collect();
            format!("FAILED at ({}) with residual {residual:.3e}", pt.join(", "))
        }
    }
}

fn report_json(rep: &HypothesisReport) -> serde_json::Value {
    let involutivity = match &rep.involutive {
        Involutivity::VerifiedExact => serde_json::json!({"status": "verified-exact"}),
        Involutivity::VerifiedNumeric { max_residual } => {
            serde_json::json!({"status": "verified-numeric", "max_residual": max_residual})
        }
        Involutivity::Failed { witness, residual } => {
            serde_json::json!({"status": "failed", "witness": witness, "residual": residual})
        }
    };
    serde_json::json!({
        "tool_version": env!("CARGO_PKG_VERSION"),
        "involutivity": involutivity,
        "nondegeneracy": {
            "min_norm": rep.nondegenerate.min_norm,
            "threshold": rep.nondegenerate.threshold,
            "margin": rep.nondegenerate.margin,
            "exact": rep.nondegenerate.exact,
            "verdict": rep.nondegenerate.nondegenerate,
        },
        "hormander_rank": rep.hormander_rank,
    })
}

fn cmd_check(args: CheckArgs) -> Result<i32> {
    let loaded = load_source(&args.source)?;
    echo(
        &loaded.label,
        &[
            ("region", format!("{:?} .. {:?}, {} samples per axis",
                loaded.region.lo_f64(), loaded.region.hi_f64(), loaded.region.sample_density())),
            ("rank probe length", args.rank_len.to_string()),
        ],
    );
    let rep = check_hypotheses(&loaded.system, &loaded.region, args.rank_len)?;
    println!("involutivity: {}", involutivity_line(&rep.involutive));
    let nd = &rep.nondegenerate;
    println!(
        "nondegeneracy: min |coefficients| = {:.6e} (threshold {:.1e}, margin {:.1e}{}) -> {}",
        nd.min_norm,
        nd.threshold,
        nd.margin,
        if nd.exact { ", exact" } else { "" },
        if nd.nondegenerate { "pass" } else { "FAIL" }
    );
    match rep.hormander_rank {
        Some(r) => println!("bracket rank: spans at length {r}"),
        None => println!("bracket rank: no spanning length up to {}", args.rank_len),
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report_json(&rep)).expect("serializes"));
    }
    Ok(if rep.all_pass() { 0 } else { 1 })
}

fn cmd_verify(args: VerifyArgs) -> Result<i32> {
    let loaded = load_source(&args.source)?;
    if !loaded.system.has_structure_coeffs() {
        return Err(Error::MissingStructureCoeffs);
    }
    let dim = loaded.system.dim();
    let f = match &args.weight {
        Some(src) => parse_expr(src, dim, &weight_aliases(dim))?,
        None => loaded.weight.clone().ok_or_else(|| {
            Error::InvalidConfig("no weight available; pass --weight <expr>".into())
        })?,
    };
    echo(&loaded.label, &[("weight", f.to_string())]);
    let reports = verify_all(&loaded.system, &f)?;
    let mut all_exact = true;
    for r in &reports {
        println!("{r}");
        all_exact &= r.is_exact();
    }
    if args.json {
        let vals: Vec<serde_json::Value> = reports.iter().map(|r| r.to_json()).collect();
        println!("{}", serde_json::to_string_pretty(&vals).expect("serializes"));
    }
    Ok(if all_exact || args.report_only { 0 } else { 1 })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    system: SystemSection,
    weight: Option<WeightSection>,
    region: Option<RegionSection>,
    grid: GridSection,
    sweep: SweepSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemSection {
    catalog: Option<String>,
    file: Option<String>,
    a: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightSection {
    f: Option<String>,
    c0: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionSection {
    #[serde(rename = "box")]
    bounds: Option<Vec<String>>,
    samples: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    shape: Vec<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    lambdas: Vec<f64>,
    count: usize,
    seed: u64,
    s: Option<f64>,
    target: Option<String>,
    name: Option<String>,
}

fn cmd_sweep(out_dir: &Path, args: SweepArgs) -> Result<i32> {
    let text = std::fs::read_to_string(&args.config)?;
    let file: SweepFile = toml::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", args.config.display())))?;

    let source = SourceArgs {
        catalog: file.system.catalog.clone(),
        file: file.system.file.as_ref().map(|f| {
            let p = PathBuf::from(f);
            if p.is_relative() {
                args.config.parent().unwrap_or(Path::new(".")).join(p)
            } else {
                p
            }
        }),
        a: file.system.a.clone(),
        field: None,
        box_bounds: file
            .region
            .as_ref()
            .and_then(|r| r.bounds.as_ref())
            .map(|b| b.join(",")),
        samples: file.region.as_ref().and_then(|r| r.samples),
    };
    let loaded = load_source(&source)?;
    let dim = loaded.system.dim();

    let f = match file.weight.as_ref().and_then(|w| w.f.as_ref()) {
        Some(src) => parse_expr(src, dim, &weight_aliases(dim))?,
        None => loaded.weight.clone().ok_or_else(|| {
            Error::InvalidConfig("config has no [weight] f and the system carries none".into())
        })?,
    };
    let c0 = file.weight.as_ref().and_then(|w| w.c0).unwrap_or(loaded.c0);

    let grid = Grid::padded(&file.grid.shape, &loaded.region)?;
    let target = match file.sweep.target.as_deref() {
        Some(t) => Target::from_str(t)?,
        None => Target::P1,
    };
    let cfg = SweepConfig {
        system: loaded.system.clone(),
        weight: WeightSpec::new(f, loaded.region.clone(), c0)?,
        grid,
        lambdas: file.sweep.lambdas.clone(),
        num_test_functions: file.sweep.count,
        seed: file.sweep.seed,
        sobolev_s: file.sweep.s.unwrap_or(0.0),
        target,
    };

    let name = file.sweep.name.clone().unwrap_or_else(|| {
        file.system.catalog.clone().unwrap_or_else(|| {
            source
                .file
                .as_ref()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "sweep".into())
        })
    });

    echo(
        &loaded.label,
        &[
            ("target", target.to_string()),
            ("grid", format!("{:?}", file.grid.shape)),
            ("lambdas", format!("{:?}", file.sweep.lambdas)),
            ("family", format!("{} functions, seed {}", file.sweep.count, file.sweep.seed)),
        ],
    );

    let report = run_sweep(&cfg)?;

    std::fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{name}.csv"));
    emit_report(&report, &csv_path)?;
    println!("wrote {}", csv_path.display());
    println!("wrote {}", summary_path_for(&csv_path).display());

    println!("lambda    inf-ratio      median-ratio");
    for (i, l) in report.lambdas.iter().enumerate() {
        println!(
            "{:<9} {:<14.6e} {:<14.6e}",
            l, report.inf_ratios[i], report.median_ratios[i]
        );
    }
    println!(
        "slope {:.4} over the upper half, C = {:.6e} from lambda0 = {}",
        report.slope, report.c_fit, report.lambda0
    );

    let failures = report.failed_checks();
    for f in &failures {
        println!("failed check: {f}");
    }
    if failures.is_empty() {
        println!("all asserted checks passed");
    }
    Ok(if failures.is_empty() || args.report_only { 0 } else { 1 })
}

fn default_shape(dim: usize) -> Result<Vec<usize>> {
    let per_axis = match dim {
        2 => 256,
        3 => 64,
        4 => 32,
        _ => {
            return Err(Error::InvalidConfig(format!(
                "no default grid for dimension {dim}; pass --shape"
            )))
        }
    };
    Ok(vec![per_axis; dim])
}

fn cmd_solvability(args: SolvArgs) -> Result<i32> {
    let loaded = load_source(&args.source)?;
    let dim = loaded.system.dim();
    let target = Target::from_str(&args.target)?;
    let shape = match &args.shape {
        Some(s) => s
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::InvalidConfig(format!("bad shape entry {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?,
        None => default_shape(dim)?,
    };

    // same gate the sweep applies: the estimate's hypotheses, plus the
    // bracket-rank condition when a fractional index is requested
    let rep = check_hypotheses(&loaded.system, &loaded.region, 3)?;
    if !rep.involutive.verified() {
        return Err(Error::HypothesisFailure(format!(
            "involutivity: {}",
            involutivity_line(&rep.involutive)
        )));
    }
    if !rep.nondegenerate.nondegenerate {
        return Err(Error::HypothesisFailure(format!(
            "leading field degenerates: min norm {:.3e}",
            rep.nondegenerate.min_norm
        )));
    }
    if args.s > 0.0 {
        let r = (1.0 / args.s).round();
        if ((1.0 / args.s) - r).abs() > 1e-9 || r < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "s must be the reciprocal of a positive integer, got {}",
                args.s
            )));
        }
        let r = r as u32;
        for p in loaded.region.sample_points() {
            if hormander_rank_f64(&loaded.system, &p, r)? != Some(r) {
                return Err(Error::HypothesisFailure(format!(
                    "bracket rank {r} fails at {p:?}"
                )));
            }
        }
    }

    echo(
        &loaded.label,
        &[
            ("target", target.to_string()),
            ("s", format!("{}", args.s)),
            ("grid", format!("{shape:?}")),
            ("family", format!("{} functions, seed {}", args.count, args.seed)),
        ],
    );

    let grid: Arc<Grid> = Grid::padded(&shape, &loaded.region)?;
    let family = gen_test_functions(&loaded.region, &grid, args.count, args.seed)?;
    let mut ratios = Vec::with_capacity(family.len());
    for u in &family {
        ratios.push(solvability_ratio(&loaded.system, u, args.s, target)?);
    }
    let inf = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    println!("inf ratio    {inf:.6e}");
    println!("median ratio {median:.6e}");
    println!(
        "empirical lower constant over a finite seeded family; it can \
         falsify the estimate, never prove it"
    );
    Ok(if inf > 0.0 { 0 } else { 1 })
}

fn cmd_catalog(args: CatalogArgs) -> Result<i32> {
    match args.which {
        CatalogCmd::List => {
            for e in catalog() {
                println!(
                    "{:<20} dim {}  fields {}  {}",
                    e.id,
                    e.system.dim(),
                    e.system.num_fields(),
                    e.summary
                );
            }
        }
        CatalogCmd::Show { id } => {
            let e = catalog_entry(&id)?;
            print!(
                "{}",
                render_system_file(&e.system, Some(&e.region), Some(&e.weight), Some(e.c0))
            );
        }
    }
    Ok(0)
}
