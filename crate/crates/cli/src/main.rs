mod report;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use absorb_mdp::fixtures::{self, FixtureSpec};
use absorb_mdp::io::{self as mdpio, LoadOptions};
use absorb_mdp::montecarlo::{estimate_occupation, DEFAULT_HORIZON};
use absorb_mdp::{
    characteristic_residual, classify_with_tolerance, decompose, escaping_mass, expected_hitting_time,
    find_phantom_direction, occupation_marginal, occupation_measure, reference_measure, singular_overlap,
    solve_constrained, survival_curve, uniform_absorption_profile, DecomposeOptions, Error, Model, OccupationOptions,
    PlanningProblem, ReferenceMeasureConfig, StateSet, StationaryPolicy,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

use report::*;

#[derive(Parser)]
#[command(
    name = "absorb-mdp",
    version,
    about = "Occupation measures and absorption diagnostics for absorbing MDPs"
)]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, global = true, default_value_t = Format::Csv)]
    format: Format,
    /// Numerical tolerance (series cut-off, solution residual or λ^β
    /// truncation, depending on the command).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Master seed for simulation.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ModelArgs {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Rewrite the rows of absorbing states as self-loops before validating.
    #[arg(long)]
    close_absorbing: bool,
}

#[derive(Args)]
struct PolicyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Policy file; uniform over each action set when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,
}

#[derive(Args)]
struct FamilyArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Policy file, repeated once per family member.
    #[arg(long = "policy", required = true)]
    policies: Vec<PathBuf>,
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Measure file (array of {state, action, mass}).
    #[arg(long)]
    measure: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model file and summarize it.
    Validate(ModelArgs),
    /// Occupation measure of a stationary policy.
    Occupation {
        #[command(flatten)]
        args: PolicyArgs,
        /// Report the state marginal instead of the pair measure.
        #[arg(long)]
        marginal: bool,
    },
    /// Expected hitting time of the absorbing set.
    HittingTime(PolicyArgs),
    /// P{T > t} for t = 0..=t_max.
    Survival {
        #[command(flatten)]
        args: PolicyArgs,
        #[arg(long, default_value_t = 50)]
        t_max: usize,
    },
    /// Σ_{t≥n} P{T > t} for n = 0..=n_max.
    Tailsum {
        #[command(flatten)]
        args: PolicyArgs,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
    },
    /// Largest tail sum over a policy family, n = 0..=n_max.
    Profile {
        #[command(flatten)]
        args: FamilyArgs,
        #[arg(long, default_value_t = 50)]
        n_max: usize,
    },
    /// Largest occupation mass of each set in a decreasing sequence.
    Escaping {
        #[command(flatten)]
        args: FamilyArgs,
        /// File holding a list of state-name lists.
        #[arg(long)]
        gammas: PathBuf,
    },
    /// The reference measure λ^β.
    Refmeasure {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.5)]
        lambda_beta: f64,
    },
    /// Characteristic residual of a measure.
    Residual(MeasureArgs),
    /// Split a solution into occupation and invariant parts.
    Decompose(MeasureArgs),
    /// Search for a normalized invariant (phantom) direction.
    Phantom(ModelArgs),
    /// Decide whether a measure is an occupation measure.
    Classify {
        #[command(flatten)]
        args: MeasureArgs,
        #[arg(long, default_value_t = 0.5)]
        lambda_beta: f64,
    },
    /// Check that two measures have disjoint state supports.
    Singular {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        occupation: PathBuf,
        #[arg(long)]
        invariant: PathBuf,
    },
    /// Minimize expected total cost subject to linear constraints.
    Plan {
        #[command(flatten)]
        model: ModelArgs,
        /// Cost file (state → action → cost).
        #[arg(long)]
        cost: PathBuf,
        /// Constraint file; may be repeated.
        #[arg(long = "constraint")]
        constraints: Vec<PathBuf>,
    },
    /// Monte Carlo estimate of the occupation measure.
    Simulate {
        #[command(flatten)]
        args: PolicyArgs,
        #[arg(long, default_value_t = 10_000)]
        traj: usize,
        #[arg(long, default_value_t = DEFAULT_HORIZON)]
        horizon: usize,
    },
    /// Write a built-in model, policy or set list as JSON.
    Fixture {
        #[command(subcommand)]
        which: FixtureCommand,
    },
}

#[derive(Subcommand)]
enum FixtureCommand {
    /// Truncated phantom example with a two-state invariant cycle.
    Phantom {
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
    },
    /// Truncated tree example.
    Tree {
        #[arg(long, default_value_t = 4)]
        levels: u32,
    },
    /// Policy γ_t on the tree: continue down the spine for the first t levels.
    TreePolicy {
        #[arg(long, default_value_t = 4)]
        levels: u32,
        #[arg(long)]
        t: u32,
    },
    /// The sets Γ_n = {(i,j): i ≥ n, 1 ≤ j < 2^i} for n = 1..=levels.
    TreeGammas {
        #[arg(long, default_value_t = 4)]
        levels: u32,
    },
    /// One transient state absorbed with probability p per step.
    Geo {
        #[arg(long, default_value_t = 0.5)]
        p: f64,
    },
    /// One transient state absorbed in one step.
    Trivial,
}

enum Failure {
    Lib(Error),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidModel { .. }
        | Error::Parse { .. }
        | Error::PolicyMismatch(_)
        | Error::BadParameter(_)
        | Error::InvalidArgument(_)
        | Error::EmptyFamily
        | Error::NotDecreasing { .. } => 2,
        Error::NonAbsorbing(_)
        | Error::Infeasible
        | Error::Unbounded
        | Error::NotASolution { .. }
        | Error::SupportViolation(_)
        | Error::AllCensored => 3,
        Error::SingularSystem(_) | Error::NoConvergence { .. } | Error::Lp(_) => 4,
    }
}

fn load(args: &ModelArgs) -> Result<Model, Error> {
    mdpio::load_model(
        &args.model,
        LoadOptions {
            close_absorbing: args.close_absorbing,
        },
    )
}

fn with_path<T>(path: &Path, r: Result<T, Error>) -> Result<T, Error> {
    r.map_err(|e| match e {
        Error::Parse { location, message } => Error::Parse {
            location: format!("{}: {location}", path.display()),
            message,
        },
        other => other,
    })
}

fn load_policy(model: &Model, path: &Path) -> Result<StationaryPolicy, Error> {
    with_path(path, mdpio::parse_policy(model, &mdpio::read_to_string(path)?))
}

fn load_measure(model: &Model, path: &Path) -> Result<absorb_mdp::StateActionMeasure, Error> {
    with_path(path, mdpio::parse_measure(model, &mdpio::read_to_string(path)?))
}

fn model_and_policy(args: &PolicyArgs) -> Result<(Model, StationaryPolicy), Error> {
    let model = load(&args.model)?;
    let policy = match &args.policy {
        Some(p) => load_policy(&model, p)?,
        None => StationaryPolicy::uniform(&model),
    };
    Ok((model, policy))
}

fn model_and_family(args: &FamilyArgs) -> Result<(Model, Vec<StationaryPolicy>), Error> {
    let model = load(&args.model)?;
    let family = args
        .policies
        .iter()
        .map(|p| load_policy(&model, p))
        .collect::<Result<_, _>>()?;
    Ok((model, family))
}

fn occupation_opts(tol: Option<f64>) -> OccupationOptions {
    let mut o = OccupationOptions::default();
    if let Some(t) = tol {
        o.tol = t;
    }
    o
}

/// A document written verbatim regardless of `--format`.
enum Output {
    Report(Report),
    Document(String),
}

fn run(cli: &Cli) -> Result<Output, Error> {
    let tol = cli.tol;
    let report = match &cli.command {
        Command::Validate(args) => {
            let m = load(args)?;
            let doc = ValidateDoc {
                valid: true,
                n_states: m.n_states(),
                n_actions: m.n_actions(),
                n_pairs: m.n_pairs(),
                absorbing: m.absorbing_set().names(&m),
                initial_support: m.initial_support().names(&m),
            };
            let mut t = Table::new(&[
                "valid",
                "n_states",
                "n_actions",
                "n_pairs",
                "absorbing",
                "initial_support",
            ]);
            t.push(vec![
                "true".into(),
                doc.n_states.to_string(),
                doc.n_actions.to_string(),
                doc.n_pairs.to_string(),
                doc.absorbing.join(" "),
                doc.initial_support.join(" "),
            ]);
            Report::new(&doc, t)
        }
        Command::Occupation { args, marginal } => {
            let (m, p) = model_and_policy(args)?;
            if *marginal {
                let (doc, t) = state_table(&m, &occupation_marginal(&m, &p, occupation_opts(tol))?);
                Report::new(&doc, t)
            } else {
                let (doc, t) = measure_table(&m, &occupation_measure(&m, &p, occupation_opts(tol))?);
                Report::new(&doc, t)
            }
        }
        Command::HittingTime(args) => {
            let (m, p) = model_and_policy(args)?;
            let v = expected_hitting_time(&m, &p)?;
            let mut t = Table::new(&["expected_hitting_time"]);
            t.push(vec![num(v)]);
            Report::new(
                &HittingTimeDoc {
                    expected_hitting_time: v,
                },
                t,
            )
        }
        Command::Survival { args, t_max } => {
            let (m, p) = model_and_policy(args)?;
            let s = survival_curve(&m, &p, *t_max)?;
            let mut t = Table::new(&["t", "survival"]);
            let doc: Vec<SurvivalPoint> = s
                .into_iter()
                .enumerate()
                .map(|(i, v)| {
                    t.push(vec![i.to_string(), num(v)]);
                    SurvivalPoint { t: i, survival: v }
                })
                .collect();
            Report::new(&doc, t)
        }
        Command::Tailsum { args, n_max } => {
            let (m, p) = model_and_policy(args)?;
            let tails = absorb_mdp::absorption_report(&m, &p, *n_max)?.tail;
            let mut t = Table::new(&["n", "tail"]);
            let doc: Vec<TailPoint> = tails
                .into_iter()
                .enumerate()
                .map(|(n, v)| {
                    t.push(vec![n.to_string(), num(v)]);
                    TailPoint { n, tail: v }
                })
                .collect();
            Report::new(&doc, t)
        }
        Command::Profile { args, n_max } => {
            let (m, fam) = model_and_family(args)?;
            let prof = uniform_absorption_profile(&m, &fam, *n_max)?;
            let mut t = Table::new(&["n", "profile"]);
            let doc: Vec<ProfilePoint> = prof
                .into_iter()
                .enumerate()
                .map(|(n, v)| {
                    t.push(vec![n.to_string(), num(v)]);
                    ProfilePoint { n, profile: v }
                })
                .collect();
            Report::new(&doc, t)
        }
        Command::Escaping { args, gammas } => {
            let (m, fam) = model_and_family(args)?;
            let sets = with_path(gammas, mdpio::parse_state_sets(&m, &mdpio::read_to_string(gammas)?))?;
            let e = escaping_mass(&m, &fam, &sets)?;
            let mut t = Table::new(&["index", "policy", "mass"]);
            for (n, v) in e.sup.iter().enumerate() {
                t.push(vec![n.to_string(), "max".into(), num(*v)]);
            }
            for (k, row) in e.per_policy.iter().enumerate() {
                for (n, v) in row.iter().enumerate() {
                    t.push(vec![n.to_string(), k.to_string(), num(*v)]);
                }
            }
            Report::new(
                &EscapingDoc {
                    sup: e.sup,
                    per_policy: e.per_policy,
                },
                t,
            )
        }
        Command::Refmeasure { model, lambda_beta } => {
            let m = load(model)?;
            let mut cfg = ReferenceMeasureConfig {
                lambda_beta: *lambda_beta,
                ..Default::default()
            };
            if let Some(t) = tol {
                cfg.tol = t;
            }
            let (doc, t) = state_table(&m, &reference_measure(&m, cfg)?);
            Report::new(&doc, t)
        }
        Command::Residual(args) => {
            let m = load(&args.model)?;
            let mu = load_measure(&m, &args.measure)?;
            let r = characteristic_residual(&m, &mu);
            let mut t = Table::new(&["residual"]);
            t.push(vec![num(r)]);
            Report::new(&ResidualDoc { residual: r }, t)
        }
        Command::Decompose(args) => {
            let m = load(&args.model)?;
            let mu = load_measure(&m, &args.measure)?;
            let mut opts = DecomposeOptions::default();
            if let Some(t) = tol {
                opts.residual_tol = t;
            }
            let d = decompose(&m, &mu, opts)?;
            let mut t = Table::new(&["state", "action", "occupation", "invariant"]);
            for (x, _, a) in m.pairs() {
                let (o, i) = (d.occupation_part.get(x, a), d.invariant_part.get(x, a));
                if o != 0.0 || i != 0.0 {
                    t.push(vec![m.state_name(x).into(), m.action_name(a).into(), num(o), num(i)]);
                }
            }
            let r = &d.residuals;
            let doc = DecomposeDoc {
                occupation_part: mdpio::measure_records(&m, &d.occupation_part),
                invariant_part: mdpio::measure_records(&m, &d.invariant_part),
                invariant_mass: d.invariant_part.total(),
                policy: d.policy.to_named(&m),
                residuals: ResidualsDoc {
                    input: r.input,
                    invariance: r.invariance,
                    occupation: r.occupation,
                    reconstruction: r.reconstruction,
                    iterations: r.iterations,
                    period: r.period,
                },
            };
            Report::new(&doc, t)
        }
        Command::Phantom(args) => {
            let m = load(args)?;
            match find_phantom_direction(&m)? {
                Some(theta) => {
                    let (records, t) = measure_table(&m, &theta);
                    Report::new(
                        &PhantomDoc {
                            feasible: true,
                            theta: Some(records),
                        },
                        t,
                    )
                }
                None => {
                    log::info!("no invariant direction: the model has no phantom measures");
                    Report::new(
                        &PhantomDoc {
                            feasible: false,
                            theta: None,
                        },
                        Table::new(&["state", "action", "mass"]),
                    )
                }
            }
        }
        Command::Classify { args, lambda_beta } => {
            let m = load(&args.model)?;
            let mu = load_measure(&m, &args.measure)?;
            let cfg = ReferenceMeasureConfig {
                lambda_beta: *lambda_beta,
                ..Default::default()
            };
            let lam = reference_measure(&m, cfg)?;
            let c = classify_with_tolerance(
                &m,
                &mu,
                &lam,
                tol.unwrap_or(absorb_mdp::characteristic::DEFAULT_RESIDUAL_TOL),
            );
            let doc = ClassifyDoc {
                verdict: c.verdict.to_string(),
                residual: c.residual,
                evidence: c.evidence.names(&m),
            };
            let mut t = Table::new(&["verdict", "residual", "evidence"]);
            t.push(vec![doc.verdict.clone(), num(doc.residual), doc.evidence.join(" ")]);
            Report::new(&doc, t)
        }
        Command::Singular {
            model,
            occupation,
            invariant,
        } => {
            let m = load(model)?;
            let occ = load_measure(&m, occupation)?;
            let inv = load_measure(&m, invariant)?;
            let overlap: StateSet = singular_overlap(&m, &occ, &inv);
            let doc = SingularDoc {
                singular: overlap.is_empty(),
                overlap: overlap.names(&m),
            };
            let mut t = Table::new(&["singular", "overlap"]);
            t.push(vec![doc.singular.to_string(), doc.overlap.join(" ")]);
            Report::new(&doc, t)
        }
        Command::Plan {
            model,
            cost,
            constraints,
        } => {
            let m = load(model)?;
            let cost = with_path(cost, mdpio::parse_cost(&m, &mdpio::read_to_string(cost)?))?;
            let mut rows = Vec::new();
            for path in constraints {
                rows.extend(with_path(
                    path,
                    mdpio::parse_constraints(&m, &mdpio::read_to_string(path)?),
                )?);
            }
            let plan = solve_constrained(&PlanningProblem {
                model: m.clone(),
                cost,
                constraints: rows,
            })?;
            let mut t = Table::new(&["state", "action", "mass", "probability"]);
            for (x, k, a) in m.pairs() {
                let v = plan.occupation.get(x, a);
                if v != 0.0 {
                    t.push(vec![
                        m.state_name(x).into(),
                        m.action_name(a).into(),
                        num(v),
                        num(plan.policy.prob(x, k)),
                    ]);
                }
            }
            let doc = PlanDoc {
                value: plan.value,
                occupation: mdpio::measure_records(&m, &plan.occupation),
                policy: plan.policy.to_named(&m),
            };
            Report::new(&doc, t)
        }
        Command::Simulate { args, traj, horizon } => {
            let (m, p) = model_and_policy(args)?;
            let est = estimate_occupation(&m, &p, *traj, cli.seed, *horizon)?;
            log::info!(
                "hitting time {} ± {}, {} censored",
                est.total.point,
                est.total.stderr,
                est.censored
            );
            let mut t = Table::new(&["state", "action", "estimate", "stderr"]);
            let cells = est
                .cells
                .iter()
                .map(|c| {
                    let cell = CellDoc {
                        state: m.state_name(c.state).into(),
                        action: m.action_name(c.action).into(),
                        estimate: c.estimate.point,
                        stderr: c.estimate.stderr,
                    };
                    t.push(vec![
                        cell.state.clone(),
                        cell.action.clone(),
                        num(cell.estimate),
                        num(cell.stderr),
                    ]);
                    cell
                })
                .collect();
            let doc = SimulateDoc {
                n_samples: est.total.n_samples,
                cells,
                hitting_time: EstimateDoc {
                    estimate: est.total.point,
                    stderr: est.total.stderr,
                },
                censored: est.censored,
                censored_fraction: est.censored_fraction,
            };
            Report::new(&doc, t)
        }
        Command::Fixture { which } => return fixture(which).map(Output::Document),
    };
    Ok(Output::Report(report))
}

fn fixture(which: &FixtureCommand) -> Result<String, Error> {
    let spec = match *which {
        FixtureCommand::Phantom { n, beta } => FixtureSpec::Phantom { n, beta_model: beta },
        FixtureCommand::Tree { levels } => FixtureSpec::Tree { levels },
        FixtureCommand::Geo { p } => FixtureSpec::Geometric { p },
        FixtureCommand::Trivial => FixtureSpec::Trivial,
        FixtureCommand::TreePolicy { levels, t } => {
            let m = fixtures::tree(levels)?;
            return Ok(mdpio::policy_to_json(&m, &fixtures::tree_policy(&m, t)));
        }
        FixtureCommand::TreeGammas { levels } => {
            let m = fixtures::tree(levels)?;
            let sets: Vec<Vec<String>> = (1..=levels)
                .map(|n| {
                    m.states()
                        .filter(|&x| {
                            matches!(fixtures::tree_cell(m.state_name(x)),
                                Some((i, j)) if i >= n && j >= 1 && j < (1u64 << i))
                        })
                        .map(|x| m.state_name(x).to_string())
                        .collect()
                })
                .collect();
            return Ok(serde_json::to_string_pretty(&sets).expect("set lists serialize"));
        }
    };
    Ok(mdpio::model_to_json(&fixtures::generate_fixture(spec)?))
}

fn emit(cli: &Cli, output: &Output) -> io::Result<()> {
    let mut out: Box<dyn Write> = match &cli.output {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    match output {
        Output::Document(text) => writeln!(out, "{text}")?,
        Output::Report(r) => match cli.format {
            Format::Json => r.write_json(&mut out)?,
            Format::Csv => r.write_csv(&mut out)?,
        },
    }
    out.flush()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ABSORB_MDP_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = run(&cli)
        .map_err(Failure::from)
        .and_then(|o| emit(&cli, &o).map_err(Failure::from));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Io(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
