use std::path::{Path, PathBuf};

use adapted_ot::acceptance::{run_criterion, Scale, CRITERIA};
use adapted_ot::estimate::{
    closed_form_cost, closed_form_rho_cost, convergence_study, counterexample_nonmarkov, offset_table, preset,
    rho_scan, sqrt_vol_table, stability_study, Dynamics, LatticeSettings, SimSettings, Simulator, TABLE_RANGE,
};
use adapted_ot::lattice::{build_lattice, check_fosd, LatticeConfig};
use adapted_ot::model::{CoefficientSpec, DiscretePathMeasure, MarkovLattice, TimeGrid};
use adapted_ot::noise::sample_brownian;
use adapted_ot::sde::Scheme;
use adapted_ot::transport::{bicausal_dp, coupled_cost, kr_coupling, metric_suite, StateChain};
use clap::{Args, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// An error with the process exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }
}

impl From<adapted_ot::Error> for Failure {
    fn from(e: adapted_ot::Error) -> Self {
        Failure {
            code: if e.is_divergence() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::config(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::config(format!("json: {e}"))
    }
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Command {
    /// Sample paths of one SDE; CSV columns replicate,t,value.
    Simulate(SimulateArgs),
    /// Build a finite Markov lattice and write it as JSON.
    Lattice(LatticeArgs),
    /// Bi-causal distance between two lattice files.
    AwDistance(AwDistanceArgs),
    /// Classical, causal and bi-causal values between two path trees.
    Metrics(MetricsArgs),
    /// Coupled cost for a list of constant correlations.
    RhoScan(RhoScanArgs),
    /// Scaled lattice DP, KR cost and synchronous Monte Carlo per step count.
    Convergence(ConvergenceArgs),
    /// Synchronous cost along a sequence of coefficient approximations.
    Stability(StabilityArgs),
    /// Synchronous vs asynchronous coupling for a path-dependent drift.
    Counterexample(CounterexampleArgs),
    /// Run the acceptance suite.
    Selftest(SelftestArgs),
}

impl Command {
    pub fn out_path(&self) -> Option<&Path> {
        Some(match self {
            Command::Simulate(a) => &a.out,
            Command::Lattice(a) => &a.out,
            Command::AwDistance(a) => &a.out,
            Command::Metrics(a) => &a.out,
            Command::RhoScan(a) => &a.out,
            Command::Convergence(a) => &a.out,
            Command::Stability(a) => &a.out,
            Command::Counterexample(a) => &a.out,
            Command::Selftest(_) => return None,
        })
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Simulate(a) => Some(a.seed),
            Command::RhoScan(a) => Some(a.seed),
            Command::Convergence(a) => Some(a.seed),
            Command::Stability(a) => Some(a.seed),
            Command::Counterexample(a) => Some(a.seed),
            _ => None,
        }
    }
}

/// Scheme settings shared by the simulation commands.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SchemeArgs {
    #[arg(long, default_value = "monotone-em")]
    pub scheme: Scheme,
    /// Fine steps per coarse step.
    #[arg(long, default_value_t = 16)]
    pub substeps: usize,
    /// Truncation multiplier of the monotone scheme.
    #[arg(long, default_value_t = 4.0)]
    pub trunc_k: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x0: f64,
}

impl SchemeArgs {
    fn settings(&self) -> SimSettings {
        SimSettings {
            scheme: self.scheme,
            substeps: self.substeps,
            trunc_k: self.trunc_k,
            x0: self.x0,
            ..SimSettings::default()
        }
    }
}

/// Either a named preset or explicit coefficients for both SDEs.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PairArgs {
    /// drift-gap, vol-gap, ou-vol, ou-vs-const, mixed-table, abs-drift or sqrt-vol.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub drift_x: Option<CoefficientSpec>,
    #[arg(long, allow_hyphen_values = true)]
    pub vol_x: Option<CoefficientSpec>,
    #[arg(long, allow_hyphen_values = true)]
    pub drift_y: Option<CoefficientSpec>,
    #[arg(long, allow_hyphen_values = true)]
    pub vol_y: Option<CoefficientSpec>,
}

impl PairArgs {
    fn resolve(&self) -> Result<(Dynamics, Dynamics), Failure> {
        let explicit = [&self.drift_x, &self.vol_x, &self.drift_y, &self.vol_y];
        match &self.preset {
            Some(name) => {
                if explicit.iter().any(|c| c.is_some()) {
                    return Err(Failure::config("--preset cannot be combined with explicit coefficients"));
                }
                let p = preset(name)?;
                Ok((p.x, p.y))
            }
            None => match (&self.drift_x, &self.vol_x, &self.drift_y, &self.vol_y) {
                (Some(bx), Some(sx), Some(by), Some(sy)) => {
                    Ok((Dynamics::new(bx.clone(), sx.clone()), Dynamics::new(by.clone(), sy.clone())))
                }
                _ => Err(Failure::config(
                    "give --preset or all of --drift-x, --vol-x, --drift-y, --vol-y",
                )),
            },
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    /// Drift, e.g. `kind=ou,theta=1` or a bare constant.
    #[arg(long, allow_hyphen_values = true)]
    pub drift: CoefficientSpec,
    #[arg(long, allow_hyphen_values = true)]
    pub vol: CoefficientSpec,
    #[arg(long, default_value_t = 64)]
    pub n_steps: usize,
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value = "paths.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LatticeArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub drift: CoefficientSpec,
    #[arg(long, allow_hyphen_values = true)]
    pub vol: CoefficientSpec,
    #[arg(long, default_value_t = 8)]
    pub n_steps: usize,
    /// Atoms per increment.
    #[arg(long, default_value_t = 5)]
    pub atoms: usize,
    /// Largest support size per stage.
    #[arg(long, default_value_t = 40)]
    pub max_support: usize,
    #[arg(long, default_value_t = 4.0)]
    pub trunc_k: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub x0: f64,
    #[arg(long, default_value = "lattice.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AwDistanceArgs {
    #[arg(long)]
    pub lattice_x: PathBuf,
    #[arg(long)]
    pub lattice_y: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    /// Weight each stage by the step size.
    #[arg(long)]
    pub scaled: bool,
    #[arg(long, default_value = "result.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct MetricsArgs {
    /// JSON object with `paths` and `weights`.
    #[arg(long)]
    pub tree_mu: PathBuf,
    #[arg(long)]
    pub tree_nu: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value = "metrics.json")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RhoScanArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub pair: PairArgs,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 32)]
    pub n_steps: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,-0.5,0,0.5,0.9,1")]
    pub rhos: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value = "rho_scan.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub pair: PairArgs,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    pub n_list: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub atoms: usize,
    #[arg(long, default_value_t = 40)]
    pub max_support: usize,
    /// Monte Carlo replicates per step count; 0 skips the simulation.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value = "convergence.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StabilityFamily {
    /// `|x|` drift approximated by offset tables.
    AbsDrift,
    /// `sqrt(0.1 + |x|)` diffusion approximated by offset tables.
    SqrtVol,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct StabilityArgs {
    #[arg(long, value_enum, default_value = "abs-drift")]
    pub family: StabilityFamily,
    /// Table refinement levels; knots are spaced 2^-level apart.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
    pub levels: Vec<u32>,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 64)]
    pub n_steps: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    pub scheme: SchemeArgs,
    #[arg(long, default_value = "stability.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CounterexampleArgs {
    /// Drift magnitude after the switch.
    #[arg(long, default_value_t = 5.0)]
    pub c: f64,
    /// Switch time.
    #[arg(long, default_value_t = 0.1)]
    pub h_sw: f64,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 100)]
    pub n_steps: usize,
    #[arg(long, default_value_t = 16)]
    pub substeps: usize,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "counterexample.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SelftestArgs {
    /// Reduced sample counts.
    #[arg(long)]
    pub quick: bool,
    /// Criterion numbers to run (default: all).
    #[arg(long, value_delimiter = ',')]
    pub only: Vec<usize>,
}

/// The artifact of one run, before it is written.
pub struct RunOutput {
    pub bytes: Vec<u8>,
    /// Input files the result depends on.
    pub inputs: Vec<PathBuf>,
    /// Fully resolved parameters not visible in the command line echo.
    pub resolved: Value,
    pub summary: String,
}

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| Failure::config(format!("csv: {e}")))
}

fn json_bytes(v: &impl Serialize) -> Result<Vec<u8>, Failure> {
    let mut b = serde_json::to_vec_pretty(v)?;
    b.push(b'\n');
    Ok(b)
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn pair_json(x: &Dynamics, y: &Dynamics) -> Value {
    json!({ "x": x, "y": y })
}

pub fn execute(command: &Command) -> Result<RunOutput, Failure> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Lattice(a) => lattice(a),
        Command::AwDistance(a) => aw_distance(a),
        Command::Metrics(a) => metrics(a),
        Command::RhoScan(a) => rho_scan_cmd(a),
        Command::Convergence(a) => convergence(a),
        Command::Stability(a) => stability(a),
        Command::Counterexample(a) => counterexample(a),
        Command::Selftest(_) => Err(Failure::config("selftest produces no artifact")),
    }
}

fn simulate(a: &SimulateArgs) -> Result<RunOutput, Failure> {
    let grid = TimeGrid::new(a.n_steps)?;
    let settings = a.scheme.settings();
    let dynamics = Dynamics::new(a.drift.clone(), a.vol.clone());
    let sim = Simulator::new(&dynamics, &settings, grid)?;
    let paths = (0..a.samples as u64)
        .into_par_iter()
        .map(|i| {
            let dw = sample_brownian(grid, settings.substeps, a.seed, i);
            Ok(sim.run(&dw)?.coarse().values)
        })
        .collect::<Result<Vec<_>, adapted_ot::Error>>()?;
    let rows = paths.iter().enumerate().flat_map(|(r, v)| {
        v.iter()
            .enumerate()
            .map(move |(k, x)| vec![r.to_string(), fmt_f64(grid.time(k)), fmt_f64(*x)])
    });
    Ok(RunOutput {
        bytes: csv_bytes(&["replicate", "t", "value"], rows)?,
        inputs: vec![],
        resolved: json!({ "settings": settings }),
        summary: format!("{} paths on {} steps", a.samples, a.n_steps),
    })
}

fn lattice(a: &LatticeArgs) -> Result<RunOutput, Failure> {
    let cfg = LatticeConfig {
        x0: a.x0,
        n_steps: a.n_steps,
        atoms: a.atoms,
        max_support: a.max_support,
        trunc_k: a.trunc_k,
    };
    let build = build_lattice(&a.drift, &a.vol, &cfg)?;
    let fosd = check_fosd(&build.lattice);
    let mut bytes = build.lattice.to_json()?.into_bytes();
    bytes.push(b'\n');
    Ok(RunOutput {
        bytes,
        inputs: vec![],
        resolved: json!({ "quantization": build.quantization, "merged": build.merged, "fosd": fosd }),
        summary: format!(
            "{} stages, largest support {}, FOSD {}",
            a.n_steps,
            (0..=a.n_steps).map(|k| build.lattice.support(k).len()).max().unwrap_or(1),
            if fosd.is_certified() { "certified" } else { "violated" }
        ),
    })
}

fn aw_distance(a: &AwDistanceArgs) -> Result<RunOutput, Failure> {
    let lx = MarkovLattice::from_json(&read_file(&a.lattice_x)?)?;
    let ly = MarkovLattice::from_json(&read_file(&a.lattice_y)?)?;
    let (cx, cy) = (StateChain::from(&lx), StateChain::from(&ly));
    let sol = bicausal_dp(&cx, &cy, a.p, a.scaled)?;
    let kr = coupled_cost(&kr_coupling(&cx, &cy)?, a.p, a.scaled);
    let result = json!({
        "value": sol.value,
        "p": a.p,
        "scaled": a.scaled,
        "units": "power",
        "policy_size": sol.policy_size(),
        "kr_cost": kr,
        "fosd_x": check_fosd(&lx),
        "fosd_y": check_fosd(&ly),
    });
    Ok(RunOutput {
        bytes: json_bytes(&result)?,
        inputs: vec![a.lattice_x.clone(), a.lattice_y.clone()],
        resolved: Value::Null,
        summary: format!("value {}", fmt_f64(sol.value)),
    })
}

fn metrics(a: &MetricsArgs) -> Result<RunOutput, Failure> {
    let mu: DiscretePathMeasure = serde_json::from_str(&read_file(&a.tree_mu)?)?;
    let nu: DiscretePathMeasure = serde_json::from_str(&read_file(&a.tree_nu)?)?;
    let suite = metric_suite(&mu, &nu, a.p)?;
    Ok(RunOutput {
        bytes: json_bytes(&json!({ "p": a.p, "units": "power", "metrics": suite }))?,
        inputs: vec![a.tree_mu.clone(), a.tree_nu.clone()],
        resolved: Value::Null,
        summary: format!(
            "W {} | causal {} | reverse {} | adapted {}",
            fmt_f64(suite.wasserstein),
            fmt_f64(suite.causal),
            fmt_f64(suite.causal_reverse),
            fmt_f64(suite.adapted)
        ),
    })
}

/// Constants `(c₁, s₁, c₂, s₂)` when both SDEs have constant coefficients.
fn constant_pair(x: &Dynamics, y: &Dynamics) -> Option<(f64, f64, f64, f64)> {
    match (&x.drift, &x.vol, &y.drift, &y.vol) {
        (
            CoefficientSpec::Constant { c: c1 },
            CoefficientSpec::Constant { c: s1 },
            CoefficientSpec::Constant { c: c2 },
            CoefficientSpec::Constant { c: s2 },
        ) => Some((*c1, *s1, *c2, *s2)),
        _ => None,
    }
}

fn rho_scan_cmd(a: &RhoScanArgs) -> Result<RunOutput, Failure> {
    let (x, y) = a.pair.resolve()?;
    let grid = TimeGrid::new(a.n_steps)?;
    let rows = rho_scan(&x, &y, grid, a.p, &a.rhos, a.samples, &a.scheme.settings(), a.seed)?;
    let constants = if a.p == 2.0 { constant_pair(&x, &y) } else { None };
    let closed = |rho: f64| constants.map_or(f64::NAN, |(c1, s1, c2, s2)| closed_form_rho_cost(c1, s1, c2, s2, rho));
    let best = rows
        .iter()
        .min_by(|l, r| l.estimate.total_cmp(&r.estimate))
        .map(|r| r.rho)
        .unwrap_or(f64::NAN);
    Ok(RunOutput {
        bytes: csv_bytes(
            &["rho", "estimate", "stderr", "closed_form"],
            rows.iter()
                .map(|r| vec![fmt_f64(r.rho), fmt_f64(r.estimate), fmt_f64(r.stderr), fmt_f64(closed(r.rho))]),
        )?,
        inputs: vec![],
        resolved: pair_json(&x, &y),
        summary: format!("minimum at rho = {best}"),
    })
}

fn convergence(a: &ConvergenceArgs) -> Result<RunOutput, Failure> {
    let (x, y) = a.pair.resolve()?;
    let lattice = LatticeSettings {
        atoms: a.atoms,
        max_support: a.max_support,
        trunc_k: a.scheme.trunc_k,
    };
    let rows = convergence_study(&x, &y, a.p, &a.n_list, &lattice, a.samples, &a.scheme.settings(), a.seed)?;
    let target = closed_form_cost(&x, &y, a.p);
    Ok(RunOutput {
        bytes: csv_bytes(
            &["N", "h", "dp_scaled", "kr_cost", "mc_sync", "mc_stderr"],
            rows.iter().map(|r| {
                vec![
                    r.n.to_string(),
                    fmt_f64(r.h),
                    fmt_f64(r.dp_scaled),
                    fmt_f64(r.kr_cost),
                    fmt_f64(r.mc_sync),
                    fmt_f64(r.mc_stderr),
                ]
            }),
        )?,
        inputs: vec![],
        resolved: json!({
            "pair": pair_json(&x, &y),
            "closed_form": target,
            "fosd_certified": rows.iter().map(|r| r.fosd_certified).collect::<Vec<_>>(),
        }),
        summary: match target {
            Some(t) => format!("closed form {}", fmt_f64(t)),
            None => String::new(),
        },
    })
}

fn stability(a: &StabilityArgs) -> Result<RunOutput, Failure> {
    let (target, sequence, y) = match a.family {
        StabilityFamily::AbsDrift => {
            let p = preset("abs-drift")?;
            let seq = a
                .levels
                .iter()
                .map(|&j| Ok(Dynamics::new(offset_table(j, TABLE_RANGE, f64::abs)?, p.x.vol.clone())))
                .collect::<Result<Vec<_>, adapted_ot::Error>>()?;
            (p.x, seq, p.y)
        }
        StabilityFamily::SqrtVol => {
            let p = preset("sqrt-vol")?;
            let seq = a
                .levels
                .iter()
                .map(|&j| Ok(Dynamics::new(p.x.drift.clone(), sqrt_vol_table(j)?)))
                .collect::<Result<Vec<_>, adapted_ot::Error>>()?;
            (p.x, seq, p.y)
        }
    };
    let grid = TimeGrid::new(a.n_steps)?;
    let study = stability_study(&target, &sequence, &y, grid, a.p, a.samples, &a.scheme.settings(), a.seed)?;
    Ok(RunOutput {
        bytes: csv_bytes(
            &["level", "cost", "cost_stderr", "gap", "gap_stderr"],
            study.rows.iter().zip(&a.levels).map(|(r, level)| {
                vec![
                    level.to_string(),
                    fmt_f64(r.cost),
                    fmt_f64(r.cost_stderr),
                    fmt_f64(r.gap),
                    fmt_f64(r.gap_stderr),
                ]
            }),
        )?,
        inputs: vec![],
        resolved: json!({ "target_cost": study.target }),
        summary: format!("target cost {} ± {}", fmt_f64(study.target.estimate), fmt_f64(study.target.stderr)),
    })
}

fn counterexample(a: &CounterexampleArgs) -> Result<RunOutput, Failure> {
    let grid = TimeGrid::new(a.n_steps)?;
    let r = counterexample_nonmarkov(a.c, a.h_sw, a.p, grid, a.substeps, a.samples, a.seed)?;
    Ok(RunOutput {
        bytes: csv_bytes(
            &["coupling", "estimate", "stderr", "closed_form"],
            [
                vec!["sync".into(), fmt_f64(r.sync.estimate), fmt_f64(r.sync.stderr), fmt_f64(r.sync_closed_form)],
                vec!["async".into(), fmt_f64(r.async_.estimate), fmt_f64(r.async_.stderr), fmt_f64(r.async_closed_form)],
            ],
        )?,
        inputs: vec![],
        resolved: json!({ "difference_stderr": r.diff_stderr }),
        summary: format!("sync {} vs async {}", fmt_f64(r.sync.estimate), fmt_f64(r.async_.estimate)),
    })
}

pub fn selftest(a: &SelftestArgs) -> Result<u8, Failure> {
    let ids: Vec<usize> = if a.only.is_empty() { (1..=CRITERIA.len()).collect() } else { a.only.clone() };
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > CRITERIA.len()) {
        return Err(Failure::config(format!("no criterion {bad}; valid ids are 1..={}", CRITERIA.len())));
    }
    let scale = if a.quick { Scale::Quick } else { Scale::Full };
    let mut failed = 0;
    for id in &ids {
        let r = run_criterion(*id, scale);
        println!("{r}");
        failed += usize::from(!r.passed);
    }
    println!("{} of {} criteria passed", ids.len() - failed, ids.len());
    Ok(if failed == 0 { 0 } else { 4 })
}
