mod files;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use qrlab::collimation::{heisenberg_check, is_eps_sharp, is_strictly_eps_sharp};
use qrlab::dynamics::{
    coherent_state, compare_evolutions, heisenberg_average_evolve, qr_hamilton_evolve, Hamiltonian, ModelSpec,
    TimeGrid, LINEAR_TOL, MAX_STEP, TRUNCATION_WARNING,
};
use qrlab::experiments::{
    bell_bohm, chsh, dichotomic_ensemble, double_slit_location, gaussian_superposition, grid_position,
    lueders_experiment, singlet, xz_direction, EnsembleSpec,
};
use qrlab::interval::Interval;
use qrlab::logic::{check_laws, double_negation_counterexample, lem_counterexample, locate_proposition, TruthValue};
use qrlab::qr::{Budget, QrNumber};
use qrlab::state::{Ball, Condition, DensityState, BOUNDARY_MARGIN};
use qrlab::QrError;

use files::{InputError, Loaded};

const EXIT_VALIDATION: u8 = 2;
const EXIT_VIOLATION: u8 = 3;
const EXIT_NUMERIC: u8 = 4;

#[derive(Parser)]
#[command(name = "qrlab", version, about = "Quantum real numbers laboratory")]
struct Cli {
    /// Report format; csv is available for dynamics, bell and dichotomic.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Write the report here instead of standard output.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Value of a qr-number at a state.
    Eval(EvalArgs),
    /// Range of a qr-number over its extent.
    Range(RangeArgs),
    /// Sharp, located and strict collimation verdicts.
    Collimate(CollimateArgs),
    /// Truth value of "a in I" in the ball-basis Heyting algebra.
    Locate(LocateArgs),
    /// Heisenberg inequality for two operators.
    Heisenberg(HeisenbergArgs),
    /// Heyting-algebra checks on a finite poset.
    Logic(LogicArgs),
    /// Hamilton flow of qr-values against quantum averages.
    Dynamics(DynamicsArgs),
    /// Bell-Bohm correlation experiment.
    Bell(BellArgs),
    /// CHSH combination of four Bell-Bohm runs.
    Chsh(ChshArgs),
    /// Born-rule frequencies for a projection.
    Dichotomic(DichotomicArgs),
    /// Lueders collapse accuracy.
    Lueders(LuedersArgs),
    /// Double-slit location of a grid position operator.
    Slit(SlitArgs),
}

#[derive(Args, Serialize)]
struct Sampling {
    /// Number of sampled states.
    #[arg(long, short = 'n', default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    samples: u64,
    /// Seed of the deterministic sampler; required.
    #[arg(long, required = true)]
    seed: u64,
}

impl Sampling {
    fn budget(&self) -> Budget {
        Budget::new(self.samples as usize, self.seed)
    }
}

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Qr-number expression file.
    #[arg(long)]
    qr: PathBuf,
    /// State file.
    #[arg(long)]
    state: PathBuf,
}

#[derive(Args, Serialize)]
#[command(group = clap::ArgGroup::new("number").required(true).args(["op", "qr"]))]
struct RangeArgs {
    /// Operator file; the qr-number is `rho -> Tr(rho A)` on --condition.
    #[arg(long, requires = "condition")]
    op: Option<PathBuf>,
    /// Condition file for --op.
    #[arg(long)]
    condition: Option<PathBuf>,
    /// Qr-number expression file.
    #[arg(long, conflicts_with = "op")]
    qr: Option<PathBuf>,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args, Serialize)]
struct CollimateArgs {
    #[arg(long)]
    op: PathBuf,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    interval: Vec<f64>,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    condition: PathBuf,
    /// Also test strict collimation.
    #[arg(long)]
    strict: bool,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args, Serialize)]
struct LocateArgs {
    #[arg(long)]
    op: PathBuf,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    interval: Vec<f64>,
    /// Ball-basis poset file.
    #[arg(long)]
    poset: PathBuf,
}

#[derive(Args, Serialize)]
struct HeisenbergArgs {
    #[arg(long)]
    op_a: PathBuf,
    #[arg(long)]
    op_b: PathBuf,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    interval_a: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    interval_b: Vec<f64>,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    condition: PathBuf,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum LogicCheck {
    /// Excluded middle `U or not U`.
    Lem,
    /// Double negation `not not U = U`.
    Dne,
    /// Adjunction, distributivity and non-contradiction over all triples.
    Laws,
}

#[derive(Args, Serialize)]
struct LogicArgs {
    /// Poset file: `{"elements": n, "leq": [[i, j], ..]}` or a ball basis.
    #[arg(long)]
    poset: PathBuf,
    #[arg(long, value_enum)]
    check: LogicCheck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModelKind {
    Free,
    Harmonic,
    Quartic,
}

#[derive(Args, Serialize)]
struct DynamicsArgs {
    #[arg(long, value_enum)]
    model: ModelKind,
    /// Quartic coupling.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Truncation dimension.
    #[arg(long, default_value_t = 60)]
    dim: usize,
    /// Condition file; otherwise a ball around a coherent state.
    #[arg(long, conflicts_with = "coherent")]
    condition: Option<PathBuf>,
    /// Coherent-state center `q0 p0` of the default ball.
    #[arg(long, num_args = 2, value_names = ["Q0", "P0"], allow_negative_numbers = true, default_values_t = [1.0, 0.0])]
    coherent: Vec<f64>,
    /// Radius of the default ball.
    #[arg(long, default_value_t = 0.01)]
    radius: f64,
    #[arg(long)]
    t_end: f64,
    /// Time steps; defaults to the smallest count with step <= 1e-2.
    #[arg(long)]
    steps: Option<usize>,
    /// Allowed deviation of the two readings for linear forces.
    #[arg(long, default_value_t = LINEAR_TOL)]
    linear_tol: f64,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args, Serialize)]
struct EnsembleArgs {
    /// Epistemic radius.
    #[arg(long)]
    eps: f64,
    /// Ontic radius as a fraction of --eps.
    #[arg(long, default_value_t = 0.1)]
    ontic_fraction: f64,
    /// Seed of the deterministic sampler; required.
    #[arg(long, required = true)]
    seed: u64,
}

#[derive(Args, Serialize)]
struct BellArgs {
    #[arg(long = "uL", num_args = 3, allow_negative_numbers = true)]
    u_l: Vec<f64>,
    #[arg(long = "uR", num_args = 3, allow_negative_numbers = true)]
    u_r: Vec<f64>,
    /// Number of pairs.
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pairs: u64,
    /// Two-qubit state file; defaults to the singlet.
    #[arg(long)]
    state: Option<PathBuf>,
    #[command(flatten)]
    ensemble: EnsembleArgs,
}

#[derive(Args, Serialize)]
struct ChshArgs {
    /// Setting angles a, a', b, b' in degrees from z toward x.
    #[arg(long, num_args = 4, allow_negative_numbers = true, default_values_t = [0.0, 90.0, 45.0, 135.0])]
    angles: Vec<f64>,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pairs: u64,
    #[arg(long)]
    state: Option<PathBuf>,
    #[command(flatten)]
    ensemble: EnsembleArgs,
}

#[derive(Args, Serialize)]
struct DichotomicArgs {
    /// Projection operator file.
    #[arg(long)]
    projection: PathBuf,
    #[arg(long)]
    state: PathBuf,
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    runs: u64,
    #[command(flatten)]
    ensemble: EnsembleArgs,
}

#[derive(Args, Serialize)]
struct LuedersArgs {
    #[arg(long)]
    op_a: PathBuf,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true)]
    interval_a: Vec<f64>,
    #[arg(long)]
    op_b: PathBuf,
    /// Prepared state rho0.
    #[arg(long)]
    state: PathBuf,
    /// Radius of W around rho0.
    #[arg(long)]
    delta: f64,
    /// Condition U on which A is strictly collimated.
    #[arg(long)]
    condition: PathBuf,
    #[arg(long)]
    eps: f64,
    /// Accuracy constant K.
    #[arg(long, default_value_t = 1.0)]
    k: f64,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args, Serialize)]
struct SlitArgs {
    #[arg(long, default_value_t = 200)]
    dim: usize,
    /// Grid bounds.
    #[arg(long, num_args = 2, allow_negative_numbers = true, default_values_t = [-10.0, 10.0])]
    grid: Vec<f64>,
    /// Gaussian peak positions of the prepared state.
    #[arg(long, num_args = 1.., allow_negative_numbers = true, default_values_t = [3.0, -3.0])]
    peaks: Vec<f64>,
    /// Gaussian amplitude width.
    #[arg(long, default_value_t = 0.5)]
    width: f64,
    #[arg(long, default_value_t = 0.01)]
    radius: f64,
    #[arg(long, num_args = 2, allow_negative_numbers = true, default_values_t = [2.0, 4.0])]
    plus: Vec<f64>,
    #[arg(long, num_args = 2, allow_negative_numbers = true, default_values_t = [-4.0, -2.0])]
    minus: Vec<f64>,
    #[arg(long, default_value_t = 0.05)]
    eps: f64,
    #[command(flatten)]
    sampling: Sampling,
}

enum CliError {
    Input(InputError),
    Qr(QrError),
    Usage(String),
}

impl From<InputError> for CliError {
    fn from(e: InputError) -> Self {
        CliError::Input(e)
    }
}

impl From<QrError> for CliError {
    fn from(e: QrError) -> Self {
        CliError::Qr(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Qr(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Input(InputError::Invalid { error, .. }) if error.is_numeric() => EXIT_NUMERIC,
            _ => EXIT_VALIDATION,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Input(e) => e.to_string(),
            CliError::Qr(e) => e.to_string(),
            CliError::Usage(m) => m.clone(),
        }
    }
}

/// What a command produced, before it is wrapped in the report envelope.
struct Outcome {
    inputs: Map<String, Value>,
    results: Value,
    tolerances: Value,
    violation: bool,
    csv: Option<String>,
}

impl Outcome {
    fn new(results: Value) -> Self {
        Self {
            inputs: Map::new(),
            results,
            tolerances: json!({ "boundary_margin": BOUNDARY_MARGIN }),
            violation: false,
            csv: None,
        }
    }

    fn input<T>(&mut self, name: &str, loaded: &Loaded<T>) -> &mut Self {
        self.inputs.insert(name.into(), loaded.echo.clone());
        self
    }
}

fn interval(v: &[f64]) -> Result<Interval, CliError> {
    Ok(Interval::new(v[0], v[1])?)
}

fn vector3(v: &[f64]) -> [f64; 3] {
    [v[0], v[1], v[2]]
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("reports serialize")
}

fn truth_labels(u: &TruthValue) -> Vec<String> {
    u.indices().iter().map(|i| format!("b{}", i + 1)).collect()
}

fn run_eval(a: &EvalArgs) -> Result<Outcome, CliError> {
    let q = files::qr_number(&a.qr)?;
    let rho = files::state(&a.state)?;
    let value = q.value.eval_at(&rho.value)?;
    let mut o = Outcome::new(json!({ "value": value }));
    o.input("qr", &q).input("state", &rho);
    Ok(o)
}

fn run_range(a: &RangeArgs) -> Result<Outcome, CliError> {
    let mut inputs = Map::new();
    let q = if let Some(qr) = &a.qr {
        let q = files::qr_number(qr)?;
        inputs.insert("qr".into(), q.echo.clone());
        q.value
    } else {
        let op = files::operator(a.op.as_ref().expect("clap group"))?;
        let w = files::condition(a.condition.as_ref().expect("clap requires"))?;
        inputs.insert("op".into(), op.echo.clone());
        inputs.insert("condition".into(), w.echo.clone());
        QrNumber::linear(op.value, w.value)?
    };
    let range = q.eval_range(&a.sampling.budget())?;
    let enclosure = q.enclosure()?;
    let mut o = Outcome::new(to_value(&range));
    if let Value::Object(m) = &mut o.results {
        m.insert("enclosure".into(), to_value(&enclosure));
    }
    o.inputs = inputs;
    Ok(o)
}

fn run_collimate(a: &CollimateArgs) -> Result<Outcome, CliError> {
    let op = files::operator(&a.op)?;
    let w = files::condition(&a.condition)?;
    let i = interval(&a.interval)?;
    let budget = a.sampling.budget();
    let rep = if a.strict {
        is_strictly_eps_sharp(&op.value, &i, a.eps, &w.value, &budget)?
    } else {
        is_eps_sharp(&op.value, &i, a.eps, &w.value, &budget)?
    };
    let mut o = Outcome::new(to_value(&rep));
    o.violation = rep.verdicts.sharp && !rep.verdicts.located;
    o.input("op", &op).input("condition", &w);
    Ok(o)
}

fn run_locate(a: &LocateArgs) -> Result<Outcome, CliError> {
    let op = files::operator(&a.op)?;
    let basis = files::basis_poset(&a.poset)?;
    let i = interval(&a.interval)?;
    let extent = Condition::new(basis.value.balls().to_vec())?;
    let q = QrNumber::linear(op.value.clone(), extent)?;
    let u = locate_proposition(&q, &i, &basis.value)?;
    let mut o = Outcome::new(json!({
        "truth_value": u.indices(),
        "balls": truth_labels(&u),
        "is_full": u.is_full(),
        "is_empty": u.is_empty(),
        "basis_size": basis.value.len(),
    }));
    o.input("op", &op).input("poset", &basis);
    Ok(o)
}

fn run_heisenberg(a: &HeisenbergArgs) -> Result<Outcome, CliError> {
    let (opa, opb) = (files::operator(&a.op_a)?, files::operator(&a.op_b)?);
    let w = files::condition(&a.condition)?;
    let rep = heisenberg_check(
        &opa.value,
        &opb.value,
        &interval(&a.interval_a)?,
        &interval(&a.interval_b)?,
        a.eps,
        &w.value,
        &a.sampling.budget(),
    )?;
    let mut o = Outcome::new(to_value(&rep));
    o.violation = rep.both_sharp && !rep.satisfied;
    o.input("op_a", &opa).input("op_b", &opb).input("condition", &w);
    Ok(o)
}

fn run_logic(a: &LogicArgs) -> Result<Outcome, CliError> {
    let file = files::any_poset(&a.poset)?;
    let p = file.value.poset();
    let mut o = match a.check {
        LogicCheck::Lem => {
            let w = lem_counterexample(&p);
            Outcome::new(json!({
                "lem_holds": w.is_none(),
                "witness": w.map(|u| format!("U={{{}}}", truth_labels(&u).join(","))),
            }))
        }
        LogicCheck::Dne => {
            let w = double_negation_counterexample(&p);
            Outcome::new(json!({
                "double_negation_holds": w.is_none(),
                "witness": w.map(|u| format!("U={{{}}}", truth_labels(&u).join(","))),
            }))
        }
        LogicCheck::Laws => {
            if p.len() > 12 {
                return Err(CliError::Usage(format!(
                    "exhaustive law check is limited to 12 elements, the poset has {}",
                    p.len()
                )));
            }
            let r = check_laws(&p);
            let mut o = Outcome::new(to_value(&r));
            o.violation = !r.holds();
            o
        }
    };
    o.input("poset", &file);
    Ok(o)
}

fn run_dynamics(a: &DynamicsArgs, csv: bool) -> Result<Outcome, CliError> {
    let hamiltonian = match a.model {
        ModelKind::Free => Hamiltonian::Free,
        ModelKind::Harmonic => Hamiltonian::Harmonic,
        ModelKind::Quartic => Hamiltonian::Quartic { lambda: a.lambda },
    };
    let model = ModelSpec::new(a.dim, hamiltonian)?;
    let mut inputs = Map::new();
    let w = match &a.condition {
        Some(path) => {
            let w = files::condition(path)?;
            inputs.insert("condition".into(), w.echo.clone());
            w.value
        }
        None => Condition::ball(coherent_state(a.dim, a.coherent[0], a.coherent[1])?, a.radius)?,
    };
    let grid = match a.steps {
        Some(n) => TimeGrid::new(a.t_end, n)?,
        None => TimeGrid::with_max_step(a.t_end)?,
    };
    let budget = a.sampling.budget();
    let hamilton = qr_hamilton_evolve(&model, &w, &grid, &budget)?;
    let heisenberg = heisenberg_average_evolve(&model, &w, &grid, &budget)?;
    let cmp = compare_evolutions(&hamilton, &heisenberg)?;
    let allowance = a.linear_tol + heisenberg.max_truncation();
    let linear = !matches!(model.hamiltonian, Hamiltonian::Quartic { .. });
    let mut o = Outcome::new(json!({
        "sup_dev": cmp.sup_dev,
        "linear_equal": cmp.sup_dev <= a.linear_tol,
        "allowance": allowance,
        "dev_curve": cmp.dev_curve,
        "max_truncation": heisenberg.max_truncation(),
        "truncation_warning": heisenberg.truncation_warning,
        "times": hamilton.times,
        "hamilton": hamilton.trajectories,
        "heisenberg": heisenberg.trajectories,
        "truncation": heisenberg.truncation,
    }));
    o.tolerances = json!({
        "linear_tol": a.linear_tol,
        "truncation_warning": TRUNCATION_WARNING,
        "max_step": MAX_STEP,
        "boundary_margin": BOUNDARY_MARGIN,
    });
    // linear forces must give the same trajectory unless truncation interferes
    o.violation = linear && !heisenberg.truncation_warning && cmp.sup_dev > allowance;
    o.inputs = inputs;
    if csv {
        let mut out = String::from("sample_id,t,q_hamilton,p_hamilton,q_heisenberg,p_heisenberg\n");
        for (id, (h, q)) in hamilton.trajectories.iter().zip(&heisenberg.trajectories).enumerate() {
            for (k, t) in hamilton.times.iter().enumerate() {
                out.push_str(&format!("{id},{t},{},{},{},{}\n", h.q[k], h.p[k], q.q[k], q.p[k]));
            }
        }
        o.csv = Some(out);
    }
    Ok(o)
}

fn ensemble(center: DensityState, args: &EnsembleArgs, runs: u64) -> EnsembleSpec {
    let mut spec = EnsembleSpec::new(center, args.eps, runs as usize, args.seed);
    spec.ontic_fraction = args.ontic_fraction;
    spec
}

fn two_qubit_state(path: &Option<PathBuf>, inputs: &mut Map<String, Value>) -> Result<DensityState, CliError> {
    Ok(match path {
        Some(p) => {
            let s = files::state(p)?;
            inputs.insert("state".into(), s.echo.clone());
            s.value
        }
        None => singlet(),
    })
}

fn values_csv(header: &str, values: &[f64]) -> String {
    let mut out = format!("run,{header}\n");
    for (k, v) in values.iter().enumerate() {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

fn run_bell(a: &BellArgs, csv: bool) -> Result<Outcome, CliError> {
    let mut inputs = Map::new();
    let center = two_qubit_state(&a.state, &mut inputs)?;
    let rep = bell_bohm(vector3(&a.u_l), vector3(&a.u_r), &ensemble(center, &a.ensemble, a.pairs))?;
    let mut o = Outcome::new(to_value(&rep));
    o.violation = !rep.report.pass || rep.pair_violations > 0;
    o.tolerances = json!({ "unit_vector": 1e-10, "mean_bound": rep.report.bound, "ontic_radius": rep.ontic_radius });
    o.inputs = inputs;
    if csv {
        o.csv = Some(values_csv("c", &rep.report.values));
    }
    Ok(o)
}

fn run_chsh(a: &ChshArgs) -> Result<Outcome, CliError> {
    let mut inputs = Map::new();
    let center = two_qubit_state(&a.state, &mut inputs)?;
    let [x, x2, y, y2] = [a.angles[0], a.angles[1], a.angles[2], a.angles[3]].map(xz_direction);
    let rep = chsh(x, x2, y, y2, &ensemble(center, &a.ensemble, a.pairs))?;
    let mut o = Outcome::new(json!({
        "S": rep.s,
        "correlations": rep.correlations,
        "classical_bound": rep.classical_bound,
        "tsirelson_bound": rep.tsirelson_bound,
        "settings": [x, x2, y, y2],
        "runs": rep.runs.iter().map(|r| json!({
            "mean": r.report.mean,
            "target": r.report.target,
            "bound": r.report.bound,
            "pass": r.report.pass,
            "pair_violations": r.pair_violations,
        })).collect::<Vec<_>>(),
    }));
    o.violation = rep.runs.iter().any(|r| !r.report.pass || r.pair_violations > 0);
    o.inputs = inputs;
    Ok(o)
}

fn run_dichotomic(a: &DichotomicArgs, csv: bool) -> Result<Outcome, CliError> {
    let p = files::operator(&a.projection)?;
    let rho = files::state(&a.state)?;
    let rep = dichotomic_ensemble(&p.value, &ensemble(rho.value.clone(), &a.ensemble, a.runs))?;
    let mut o = Outcome::new(json!({
        "frequency": rep.report.mean,
        "target": rep.report.target,
        "bound": rep.report.bound,
        "pass": rep.report.pass,
        "runs": rep.report.values.len(),
    }));
    o.violation = !rep.report.pass;
    o.tolerances = json!({ "projection": 1e-10, "probability_snap": 1e-12, "frequency_bound": rep.report.bound });
    o.input("projection", &p).input("state", &rho);
    if csv {
        o.csv = Some(values_csv("outcome", &rep.report.values));
    }
    Ok(o)
}

fn run_lueders(a: &LuedersArgs) -> Result<Outcome, CliError> {
    let (opa, opb) = (files::operator(&a.op_a)?, files::operator(&a.op_b)?);
    let rho = files::state(&a.state)?;
    let u = files::condition(&a.condition)?;
    let w = Ball::new(rho.value.clone(), a.delta)?;
    let rep = lueders_experiment(
        &opa.value,
        &interval(&a.interval_a)?,
        &opb.value,
        &w,
        &u.value,
        a.eps,
        a.k,
        &a.sampling.budget(),
    )?;
    let mut o = Outcome::new(to_value(&rep));
    o.violation = !rep.pass;
    o.tolerances = json!({ "collapse_probability": 1e-9, "accuracy_bound": rep.bound, "boundary_margin": BOUNDARY_MARGIN });
    o.input("op_a", &opa).input("op_b", &opb).input("state", &rho).input("condition", &u);
    Ok(o)
}

fn run_slit(a: &SlitArgs) -> Result<Outcome, CliError> {
    let z = grid_position(a.dim, a.grid[0], a.grid[1])?;
    let psi = gaussian_superposition(&z, &a.peaks, a.width)?;
    let w = Condition::ball(psi, a.radius)?;
    let rep = double_slit_location(&z, &interval(&a.plus)?, &interval(&a.minus)?, &w, a.eps, &a.sampling.budget())?;
    Ok(Outcome::new(to_value(&rep)))
}

fn configure_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("QRLAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| CliError::Usage(format!("QRLAB_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<(&'static str, Value, Outcome), CliError> {
    let csv = cli.format == Format::Csv;
    let csv_ok = matches!(cli.command, Command::Dynamics(_) | Command::Bell(_) | Command::Dichotomic(_));
    if csv && !csv_ok {
        return Err(CliError::Usage("csv output is available for dynamics, bell and dichotomic".into()));
    }
    Ok(match &cli.command {
        Command::Eval(a) => ("eval", to_value(a), run_eval(a)?),
        Command::Range(a) => ("range", to_value(a), run_range(a)?),
        Command::Collimate(a) => ("collimate", to_value(a), run_collimate(a)?),
        Command::Locate(a) => ("locate", to_value(a), run_locate(a)?),
        Command::Heisenberg(a) => ("heisenberg", to_value(a), run_heisenberg(a)?),
        Command::Logic(a) => ("logic", to_value(a), run_logic(a)?),
        Command::Dynamics(a) => ("dynamics", to_value(a), run_dynamics(a, csv)?),
        Command::Bell(a) => ("bell", to_value(a), run_bell(a, csv)?),
        Command::Chsh(a) => ("chsh", to_value(a), run_chsh(a)?),
        Command::Dichotomic(a) => ("dichotomic", to_value(a), run_dichotomic(a, csv)?),
        Command::Lueders(a) => ("lueders", to_value(a), run_lueders(a)?),
        Command::Slit(a) => ("slit", to_value(a), run_slit(a)?),
    })
}

#[derive(Serialize)]
struct Report {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    parameters: Value,
    inputs: Value,
    results: Value,
    tolerances: Value,
    wall_clock_seconds: f64,
}

fn emit(cli: &Cli, text: &str) -> Result<(), String> {
    match &cli.output {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn main() -> ExitCode {
    let start = Instant::now();
    let cli = Cli::parse();
    let run = configure_threads().and_then(|_| dispatch(&cli));
    let (command, mut parameters, outcome) = match run {
        Ok(r) => r,
        Err(e) => {
            eprintln!("qrlab: error: {}", e.message());
            return ExitCode::from(e.exit_code());
        }
    };
    if let Value::Object(m) = &mut parameters {
        m.insert("format".into(), to_value(&cli.format));
    }
    let text = match &outcome.csv {
        Some(csv) => csv.clone(),
        None => {
            let report = Report {
                tool: "qrlab",
                version: env!("CARGO_PKG_VERSION"),
                command,
                parameters,
                inputs: Value::Object(outcome.inputs),
                results: outcome.results,
                tolerances: outcome.tolerances,
                wall_clock_seconds: start.elapsed().as_secs_f64(),
            };
            serde_json::to_string_pretty(&report).expect("reports serialize") + "\n"
        }
    };
    if let Err(e) = emit(&cli, &text) {
        eprintln!("qrlab: error: {e}");
        return ExitCode::from(EXIT_VALIDATION);
    }
    if outcome.violation {
        ExitCode::from(EXIT_VIOLATION)
    } else {
        ExitCode::SUCCESS
    }
}
