use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use fiberforce::logic::{parse_formula, Formula};
use fiberforce::{
    force, horizontal_extension, parallel_forced, positive_lemma_trials, prop46_check, pullback_theorem_trials,
    run_suite, spatial_extension, vertical_extension, AxisBox, Connection, ExtensionSet, FamilySpec, Model,
    NeighborhoodPolicy, PathFamily, Prop46Options, Section, StructureBundle, SuiteOptions, TrialSummary,
};

#[derive(Parser)]
#[command(
    name = "fiberforce",
    version,
    about = "Forcing and parallel forcing over bundles of structures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pointwise forcing of a formula over named sections.
    Force(ForceArgs),
    /// Forcing along every path of a generated family, from transported fiber points.
    Parallel(ParallelArgs),
    /// Extension sets over a grid.
    #[command(subcommand)]
    Extension(ExtensionCommand),
    /// Randomized property checks and the equality-extension check.
    #[command(subcommand)]
    Check(CheckCommand),
    /// Every worked example and property batch against the shipped models.
    Suite(SuiteArgs),
}

#[derive(Subcommand)]
enum ExtensionCommand {
    /// Base points reachable along transports that keep the formula forced.
    Horizontal(ParallelArgs),
    /// Fiber tuples reachable at a fixed base point.
    Vertical(VerticalArgs),
    /// Base points where the formula is forced.
    Spatial(SpatialArgs),
}

#[derive(Subcommand)]
enum CheckCommand {
    /// Random instances: parallel forcing commutes with pullback
    PullbackTheorem(TrialArgs),
    /// Random positive formulas: classical truth implies forcing
    PositiveLemma(TrialArgs),
    /// Vertical extension of `x = y` is the diagonal, horizontal is the whole region
    Prop46(Prop46Args),
}

#[derive(Args, Clone)]
struct PolicyArgs {
    #[arg(long, default_value_t = 0.5)]
    eps0: f64,
    #[arg(long = "eps-halvings", default_value_t = 8)]
    eps_halvings: usize,
    #[arg(long, default_value_t = 64)]
    samples: usize,
    #[arg(long, default_value_t = 3)]
    depth: usize,
    #[arg(long, default_value_t = 1e-3)]
    step: f64,
    #[arg(long = "tol-eq", default_value_t = 1e-9)]
    tol_eq: f64,
    #[arg(long = "witness-points", default_value_t = 5)]
    witness_points: usize,
    /// Quantify `exists` over a neighborhood as well.
    #[arg(long = "exists-neighborhood")]
    exists_neighborhood: bool,
}

impl PolicyArgs {
    fn policy(&self, grid: Option<f64>) -> NeighborhoodPolicy {
        let d = NeighborhoodPolicy::default();
        NeighborhoodPolicy {
            eps0: self.eps0,
            halvings: self.eps_halvings,
            samples: self.samples,
            max_depth: self.depth,
            tol_eq: self.tol_eq,
            step: self.step,
            grid: grid.unwrap_or(d.grid),
            witness_points: self.witness_points,
            witness_box: None,
            exists_neighborhood: self.exists_neighborhood,
        }
    }
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Exit with 1 when the verdict is NotForced or the check is false.
    #[arg(long = "assert")]
    assert_forced: bool,
    /// Machine-readable JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct FamilyArgs {
    /// Random cubic paths in the family.
    #[arg(long, default_value_t = 16)]
    paths: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl FamilyArgs {
    fn spec(&self) -> FamilySpec {
        FamilySpec {
            random: self.paths,
            seed: self.seed,
            ..FamilySpec::default()
        }
    }
}

#[derive(Args)]
struct ForceArgs {
    model: PathBuf,
    /// Base point, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    at: String,
    #[arg(long)]
    formula: String,
    /// Sections bound to the formula's free variables, by name; all model
    /// sections in declaration order when omitted.
    #[arg(long, value_delimiter = ',')]
    section: Vec<String>,
    /// Pull the bundle and the sections back along this map first.
    #[arg(long)]
    pullback: Option<String>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Clone)]
struct ParallelArgs {
    model: PathBuf,
    /// Connection name; the flat connection when omitted.
    #[arg(long)]
    conn: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    at: String,
    /// Fiber point of the tuple, comma-separated; repeat for each free variable.
    #[arg(long, allow_hyphen_values = true, required = true)]
    fiber: Vec<String>,
    #[arg(long)]
    formula: String,
    /// Names of the formula's free variables; `x1, x2, ..` when omitted.
    #[arg(long, value_delimiter = ',')]
    vars: Vec<String>,
    #[arg(long)]
    grid: Option<f64>,
    /// Region as `lo1,..;hi1,..`; the whole box when omitted.
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct VerticalArgs {
    #[command(flatten)]
    inner: ParallelArgs,
}

#[derive(Args)]
struct SpatialArgs {
    model: PathBuf,
    #[arg(long)]
    formula: String,
    #[arg(long, value_delimiter = ',')]
    section: Vec<String>,
    #[arg(long)]
    grid: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    region: Option<String>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    svg: Option<PathBuf>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct TrialArgs {
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Random cubic paths per family.
    #[arg(long, default_value_t = 16)]
    paths: usize,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct Prop46Args {
    model: PathBuf,
    #[arg(long)]
    conn: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    at: String,
    /// The fiber point `a` of the pair `(a, a)`.
    #[arg(long, allow_hyphen_values = true)]
    fiber: String,
    /// Base lattice spacing.
    #[arg(long, default_value_t = 0.25)]
    grid: f64,
    /// Fiber lattice spacing; the model's `grid` or 0.25 when omitted.
    #[arg(long = "fiber-grid")]
    fiber_grid: Option<f64>,
    /// Half-width of the fiber-pair region around `(a, a)`.
    #[arg(long = "fiber-radius", default_value_t = 1.0)]
    fiber_radius: f64,
    #[command(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args)]
struct SuiteArgs {
    /// Only rows whose location or name starts with this, e.g. `sec4`.
    #[arg(long)]
    only: Option<String>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Directory of model files overriding the embedded copies.
    #[arg(long = "models")]
    models: Option<PathBuf>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[command(flatten)]
    out: OutputArgs,
}

/// What a command computed: a printable summary, the verdict fields of the
/// report, and whether the verdict is positive.
struct Outcome {
    summary: String,
    verdict: Value,
    positive: bool,
}

fn numbers(src: &str, what: &str) -> Result<Vec<f64>> {
    src.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad number `{s}` in {what}"))
        })
        .collect()
}

fn region(src: Option<&str>, default: &AxisBox) -> Result<AxisBox> {
    match src {
        None => Ok(default.clone()),
        Some(s) => {
            let (lo, hi) = s
                .split_once(';')
                .ok_or_else(|| anyhow!("region must look like `lo1,..;hi1,..`"))?;
            Ok(AxisBox::new(numbers(lo, "region")?, numbers(hi, "region")?)?)
        }
    }
}

fn load(path: &Path) -> Result<Model> {
    Model::load(path).with_context(|| format!("loading {}", path.display()))
}

fn connection(model: &Model, name: Option<&str>) -> Result<Connection> {
    Ok(match name {
        Some(n) => model.connection(n)?.clone(),
        None => model.flat_connection(),
    })
}

fn formula(sb: &StructureBundle, src: &str, free: &[String]) -> Result<Formula> {
    parse_formula(src, sb.signature(), free).with_context(|| format!("parsing formula `{src}`"))
}

fn named_sections(model: &Model, names: &[String]) -> Result<(Vec<String>, Vec<Section>)> {
    let names = if names.is_empty() {
        model.section_names()
    } else {
        names.to_vec()
    };
    let sections = names
        .iter()
        .map(|n| model.section(n).cloned())
        .collect::<fiberforce::Result<Vec<_>>>()?;
    Ok((names, sections))
}

fn cmd_force(a: &ForceArgs) -> Result<Outcome> {
    let model = load(&a.model)?;
    let pol = a.policy.policy(None);
    let at = numbers(&a.at, "--at")?;
    let (names, mut sections) = named_sections(&model, &a.section)?;
    let mut sb = model.bundle.clone();
    if let Some(map_name) = &a.pullback {
        let m = model.map(map_name)?;
        sb = sb.pullback(&m.map, &m.source)?;
        sections = sections
            .iter()
            .map(|s| s.pullback(&m.map, &m.source))
            .collect::<fiberforce::Result<Vec<_>>>()?;
    }
    let phi = formula(&sb, &a.formula, &names)?;
    let v = force(&sb, &at, &phi, &sections, &pol)?;
    Ok(Outcome {
        summary: format!(
            "{:?}{}",
            v.decision,
            v.witness_eps
                .map(|e| format!(" (witness radius {e})"))
                .unwrap_or_default()
        ),
        positive: v.decision.is_forced(),
        verdict: serde_json::to_value(&v)?,
    })
}

struct TupleSetup {
    model: Model,
    conn: Connection,
    at: Vec<f64>,
    tuple: Vec<Vec<f64>>,
    phi: Formula,
    pol: NeighborhoodPolicy,
}

fn tuple_setup(a: &ParallelArgs) -> Result<TupleSetup> {
    let model = load(&a.model)?;
    let conn = connection(&model, a.conn.as_deref())?;
    let at = numbers(&a.at, "--at")?;
    let tuple = a
        .fiber
        .iter()
        .map(|f| numbers(f, "--fiber"))
        .collect::<Result<Vec<_>>>()?;
    let vars = if a.vars.is_empty() {
        (1..=tuple.len()).map(|i| format!("x{i}")).collect()
    } else {
        a.vars.clone()
    };
    if vars.len() != tuple.len() {
        bail!("{} variable name(s) for {} fiber point(s)", vars.len(), tuple.len());
    }
    let phi = formula(&model.bundle, &a.formula, &vars)?;
    let pol = a.policy.policy(a.grid);
    Ok(TupleSetup {
        model,
        conn,
        at,
        tuple,
        phi,
        pol,
    })
}

fn cmd_parallel(a: &ParallelArgs) -> Result<Outcome> {
    let s = tuple_setup(a)?;
    let fam = PathFamily::generate(s.model.bundle.base(), &s.at, &a.family.spec())?;
    let v = parallel_forced(&s.model.bundle, &s.conn, &s.tuple, &s.phi, &fam, &s.pol)?;
    Ok(Outcome {
        summary: format!(
            "{:?} over {} path(s){}",
            v.decision,
            v.paths_checked,
            v.counterexample
                .as_ref()
                .map(|p| format!(", fails along {p}"))
                .unwrap_or_default()
        ),
        positive: v.decision.is_forced(),
        verdict: serde_json::to_value(&v)?,
    })
}

fn write_set(
    set_csv: Option<String>,
    set_svg: Option<String>,
    csv: &Option<PathBuf>,
    svg: &Option<PathBuf>,
) -> Result<()> {
    if let (Some(path), Some(body)) = (csv, set_csv) {
        std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = svg {
        let body = set_svg.ok_or_else(|| anyhow!("SVG output needs a one- or two-dimensional set"))?;
        std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn extension_outcome(set: &ExtensionSet, a: &ParallelArgs) -> Result<Outcome> {
    write_set(Some(set.to_csv()), set.to_svg(), &a.csv, &a.svg)?;
    let ranges: Vec<String> = (0..set.axis_names.len())
        .map(|i| match set.member_range(i) {
            Some((lo, hi)) => format!("{} in [{lo}, {hi}]", set.axis_names[i]),
            None => format!("{} empty", set.axis_names[i]),
        })
        .collect();
    Ok(Outcome {
        summary: format!(
            "{} of {} grid point(s) are members; {}",
            set.member_count(),
            set.points.len(),
            ranges.join(", ")
        ),
        positive: set.member_count() > 0,
        verdict: json!({
            "members": set.member_count(),
            "points": set.points.len(),
            "ranges": (0..set.axis_names.len()).map(|i| set.member_range(i)).collect::<Vec<_>>(),
            "set": serde_json::to_value(set)?,
        }),
    })
}

fn cmd_horizontal(a: &ParallelArgs) -> Result<Outcome> {
    let s = tuple_setup(a)?;
    let reg = region(a.region.as_deref(), s.model.bundle.base())?;
    let set = horizontal_extension(
        &s.model.bundle,
        &s.conn,
        &s.at,
        &s.tuple,
        &s.phi,
        &reg,
        s.pol.grid,
        &a.family.spec(),
        &s.pol,
    )?;
    extension_outcome(&set, a)
}

fn cmd_vertical(a: &ParallelArgs) -> Result<Outcome> {
    let s = tuple_setup(a)?;
    let mut whole = s.model.bundle.fiber_box().clone();
    for _ in 1..s.tuple.len() {
        whole = whole.product(s.model.bundle.fiber_box());
    }
    let reg = region(a.region.as_deref(), &whole)?;
    let grid = a.grid.or(s.model.fiber_grid).unwrap_or(0.25);
    let set = vertical_extension(
        &s.model.bundle,
        &s.conn,
        &s.at,
        &s.tuple,
        &s.phi,
        &reg,
        grid,
        &a.family.spec(),
        &s.pol,
    )?;
    extension_outcome(&set, a)
}

fn cmd_spatial(a: &SpatialArgs) -> Result<Outcome> {
    let model = load(&a.model)?;
    let pol = a.policy.policy(a.grid);
    let (names, sections) = named_sections(&model, &a.section)?;
    let phi = formula(&model.bundle, &a.formula, &names)?;
    let reg = region(a.region.as_deref(), model.bundle.base())?;
    let set = spatial_extension(&model.bundle, &phi, &sections, &reg, pol.grid, &pol)?;
    let as_ext = ExtensionSet {
        axis_names: (1..=reg.dim()).map(|i| format!("x{i}")).collect(),
        lo: reg.lo().to_vec(),
        hi: reg.hi().to_vec(),
        member: set.member.clone(),
        parent: vec![None; set.points.len()],
        seed: 0,
        tuples: vec![None; set.points.len()],
        points: set.points,
    };
    write_set(Some(as_ext.to_csv()), as_ext.to_svg(), &a.csv, &a.svg)?;
    Ok(Outcome {
        summary: format!(
            "{} of {} grid point(s) force the formula",
            as_ext.member_count(),
            as_ext.points.len()
        ),
        positive: as_ext.member_count() > 0,
        verdict: json!({
            "members": as_ext.member_count(),
            "points": as_ext.points.len(),
            "member": as_ext.member,
        }),
    })
}

fn trial_outcome(s: TrialSummary) -> Result<Outcome> {
    let mut summary = format!("{}/{} trials pass", s.passed, s.trials);
    for f in &s.failures {
        summary.push_str(&format!("\n  failure #{}: {}", f.index, f.detail));
    }
    Ok(Outcome {
        summary,
        positive: s.all_passed(),
        verdict: serde_json::to_value(&s)?,
    })
}

fn cmd_prop46(a: &Prop46Args) -> Result<Outcome> {
    let model = load(&a.model)?;
    let conn = connection(&model, a.conn.as_deref())?;
    let at = numbers(&a.at, "--at")?;
    let fiber = numbers(&a.fiber, "--fiber")?;
    let center: Vec<f64> = fiber.iter().chain(&fiber).copied().collect();
    let opts = Prop46Options {
        fiber_region: AxisBox::new(
            center.iter().map(|c| c - a.fiber_radius).collect(),
            center.iter().map(|c| c + a.fiber_radius).collect(),
        )?,
        base_region: model.bundle.base().clone(),
        fiber_grid: a.fiber_grid.or(model.fiber_grid).unwrap_or(0.25),
        base_grid: a.grid,
        family: a.family.spec(),
        policy: a.policy.policy(Some(a.grid)),
    };
    let rep = prop46_check(&model.bundle, &conn, &at, &fiber, &opts)?;
    Ok(Outcome {
        summary: format!(
            "{}: vertical {}/{} diagonal points, horizontal {}/{} base points{}",
            if rep.holds { "holds" } else { "fails" },
            rep.vertical_members,
            rep.diagonal_points,
            rep.horizontal_members,
            rep.base_points,
            rep.diagnostic.as_ref().map(|d| format!(" ({d})")).unwrap_or_default()
        ),
        positive: rep.holds,
        verdict: serde_json::to_value(&rep)?,
    })
}

fn cmd_suite(a: &SuiteArgs) -> Result<Outcome> {
    let mut opts = SuiteOptions {
        seed: a.seed,
        trials: a.trials,
        only: a.only.clone(),
        policy: a.policy.policy(None),
        ..SuiteOptions::default()
    };
    if let Some(dir) = &a.models {
        for (name, src) in &mut opts.models {
            let path = dir.join(&*name);
            match std::fs::read_to_string(&path) {
                Ok(s) => *src = s,
                // a missing file fails only the rows that need it
                Err(e) => *src = format!("# unreadable: {e}\n[missing"),
            }
        }
    }
    let rep = run_suite(&opts);
    Ok(Outcome {
        summary: rep.table().trim_end().to_string(),
        positive: rep.all_passed(),
        verdict: serde_json::from_str(&rep.verdict_json())?,
    })
}

fn run(cli: &Cli) -> Result<(Outcome, &OutputArgs, Value)> {
    let echo = |p: &PolicyArgs, grid: Option<f64>| serde_json::to_value(p.policy(grid)).unwrap_or(Value::Null);
    Ok(match &cli.command {
        Command::Force(a) => (cmd_force(a)?, &a.out, echo(&a.policy, None)),
        Command::Parallel(a) => (cmd_parallel(a)?, &a.out, echo(&a.policy, a.grid)),
        Command::Extension(ExtensionCommand::Horizontal(a)) => (cmd_horizontal(a)?, &a.out, echo(&a.policy, a.grid)),
        Command::Extension(ExtensionCommand::Vertical(v)) => (
            cmd_vertical(&v.inner)?,
            &v.inner.out,
            echo(&v.inner.policy, v.inner.grid),
        ),
        Command::Extension(ExtensionCommand::Spatial(a)) => (cmd_spatial(a)?, &a.out, echo(&a.policy, a.grid)),
        Command::Check(CheckCommand::PullbackTheorem(a)) => {
            let pol = a.policy.policy(None);
            (
                trial_outcome(pullback_theorem_trials(a.trials, a.seed, a.paths, &pol)?)?,
                &a.out,
                echo(&a.policy, None),
            )
        }
        Command::Check(CheckCommand::PositiveLemma(a)) => {
            let pol = a.policy.policy(None);
            (
                trial_outcome(positive_lemma_trials(a.trials, a.seed, &pol)?)?,
                &a.out,
                echo(&a.policy, None),
            )
        }
        Command::Check(CheckCommand::Prop46(a)) => (cmd_prop46(a)?, &a.out, echo(&a.policy, Some(a.grid))),
        Command::Suite(a) => (cmd_suite(a)?, &a.out, echo(&a.policy, None)),
    })
}

fn seed_of(cli: &Cli) -> Option<u64> {
    match &cli.command {
        Command::Parallel(a) | Command::Extension(ExtensionCommand::Horizontal(a)) => Some(a.family.seed),
        Command::Extension(ExtensionCommand::Vertical(v)) => Some(v.inner.family.seed),
        Command::Check(CheckCommand::PullbackTheorem(a)) | Command::Check(CheckCommand::PositiveLemma(a)) => {
            Some(a.seed)
        }
        Command::Check(CheckCommand::Prop46(a)) => Some(a.family.seed),
        Command::Suite(a) => Some(a.seed),
        _ => None,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let (outcome, out, policy) = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    println!("{}", outcome.summary);
    if let Some(path) = &out.report {
        let report = json!({
            "command": std::env::args().collect::<Vec<_>>(),
            "engine": env!("CARGO_PKG_VERSION"),
            "seed": seed_of(&cli),
            "policy": policy,
            "verdict": outcome.verdict,
            "timings": { "total_ms": start.elapsed().as_millis() as u64 },
        });
        let body = serde_json::to_string_pretty(&report).expect("report serializes");
        if let Err(e) = std::fs::write(path, body + "\n") {
            eprintln!("error: writing {}: {e}", path.display());
            return ExitCode::from(2);
        }
    }
    if out.assert_forced && !outcome.positive {
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}
