//! Batch front end: scenario generation, validation, single runs and
//! baseline sweeps.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analogy::{Criticality, DeadlinePolicy, EmergencyRequest, Mode, TaskConfig, VehicleKind};
use crate::kernel::{
    load_scenario, run, BackgroundModel, FleetEntry, KernelError, NetworkSource, PolicySource, Scenario,
    ScenarioDocument, ScenarioError, Trace, Variant, SCENARIO_FORMAT,
};
use crate::metrics::{compliance, summary_line, to_csv, ComplianceReport};
use crate::network::{Edge, EdgeDelta, NetworkDocument, Node, SignalPlan, NETWORK_FORMAT};
use crate::preemption::PreemptionConfig;
use crate::scheduler::SchedulerConfig;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
}

impl HarnessError {
    /// 1 for invalid input, 2 for I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Invalid(_) => 1,
            HarnessError::Io(_) => 2,
        }
    }
}

impl From<ScenarioError> for HarnessError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Invalid { .. } => HarnessError::Invalid(e.to_string()),
            ScenarioError::Io { .. } => HarnessError::Io(e.to_string()),
        }
    }
}

impl From<KernelError> for HarnessError {
    fn from(e: KernelError) -> Self {
        HarnessError::Invalid(format!("simulation failed: {e}"))
    }
}

fn io_err(path: &Path, e: std::io::Error) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(format!("unknown format `{s}` (expected json or csv)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: PathBuf,
    pub seed: u64,
    pub out: PathBuf,
    pub variant: Variant,
    /// Preset key or path to a policy file, replacing the scenario's.
    pub policy: Option<String>,
    pub formats: Vec<ReportFormat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub summary: String,
    pub files: Vec<PathBuf>,
    pub trace_digest: String,
    pub report: ComplianceReport,
}

/// Resolves `--policy`: a preset key, else a JSON policy file.
pub fn resolve_policy(spec: &str) -> Result<DeadlinePolicy, HarnessError> {
    if let Some(p) = DeadlinePolicy::preset(spec) {
        return Ok(p);
    }
    let path = Path::new(spec);
    let text = std::fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            HarnessError::Invalid(format!("policy: `{spec}` is neither a preset nor an existing file"))
        } else {
            io_err(path, e)
        }
    })?;
    let policy: DeadlinePolicy =
        serde_json::from_str(&text).map_err(|e| HarnessError::Invalid(format!("policy ({spec}): {e}")))?;
    policy.validate().map_err(|e| HarnessError::Invalid(format!("policy ({spec}): {e}")))?;
    Ok(policy)
}

/// Loads a scenario and applies a policy override.
pub fn prepare(scenario: &Path, policy: Option<&str>) -> Result<Scenario, HarnessError> {
    let mut sc = load_scenario(scenario)?;
    if let Some(spec) = policy {
        let p = resolve_policy(spec)?;
        sc.document.policy = PolicySource::Custom(p.clone());
        sc.policy = p;
    }
    Ok(sc)
}

/// Runs once and writes the trace plus the requested reports.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunResult, HarnessError> {
    let sc = prepare(&cfg.scenario, cfg.policy.as_deref())?;
    let trace = run(&sc, cfg.seed, cfg.variant)?;
    let report = compliance(&trace, &sc.policy);
    let summary = summary_line(&trace, &sc.policy, &report);

    std::fs::create_dir_all(&cfg.out).map_err(|e| io_err(&cfg.out, e))?;
    let mut files = Vec::new();
    let mut write = |name: &str, body: String| -> Result<(), HarnessError> {
        let path = cfg.out.join(name);
        std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        files.push(path);
        Ok(())
    };
    write("trace.ndjson", trace.to_ndjson())?;
    let formats = if cfg.formats.is_empty() { vec![ReportFormat::Json, ReportFormat::Csv] } else { cfg.formats.clone() };
    if formats.contains(&ReportFormat::Json) {
        write("report.json", serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    }
    if formats.contains(&ReportFormat::Csv) {
        write("report.csv", to_csv(&report))?;
    }
    Ok(RunResult { summary, files, trace_digest: trace.digest(), report })
}

/// Checks a scenario and returns a one-line description.
pub fn cmd_validate(scenario: &Path) -> Result<String, HarnessError> {
    let sc = load_scenario(scenario)?;
    Ok(format!(
        "ok: {} nodes, {} edges, {} vehicles, {} requests, {} updates, horizon {}s",
        sc.net.node_count(),
        sc.net.edge_count(),
        sc.document.fleet.len(),
        sc.document.requests.len(),
        sc.document.updates.len(),
        sc.document.horizon_s
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadProfile {
    Light,
    Default,
    Heavy,
}

impl FromStr for LoadProfile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "light" => Ok(LoadProfile::Light),
            "default" => Ok(LoadProfile::Default),
            "heavy" => Ok(LoadProfile::Heavy),
            _ => Err(format!("unknown load profile `{s}` (expected light, default or heavy)")),
        }
    }
}

impl fmt::Display for LoadProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LoadProfile::Light => "light",
            LoadProfile::Default => "default",
            LoadProfile::Heavy => "heavy",
        })
    }
}

struct LoadParams {
    congestion: (f64, f64),
    requests_per_hour: f64,
}

impl LoadProfile {
    fn params(self) -> LoadParams {
        match self {
            LoadProfile::Light => LoadParams { congestion: (0.05, 0.35), requests_per_hour: 6.0 },
            LoadProfile::Default => LoadParams { congestion: (0.3, 0.7), requests_per_hour: 10.0 },
            LoadProfile::Heavy => LoadParams { congestion: (0.75, 0.95), requests_per_hour: 16.0 },
        }
    }
}

pub const GRID_EDGE_M: f64 = 400.0;
pub const GRID_SPEED_MPS: f64 = 13.9;
pub const GRID_CYCLE_S: f64 = 60.0;
pub const GRID_GREEN_S: f64 = 30.0;
pub const REQUEST_WINDOW_S: f64 = 3600.0;
pub const DRAIN_S: f64 = 1800.0;

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn node_id(r: usize, c: usize) -> String {
    format!("n{r}_{c}")
}

/// Grid scenario fully determined by (`grid_n`, `seed`, `load`).
pub fn generate(grid_n: usize, seed: u64, load: LoadProfile) -> Result<ScenarioDocument, HarnessError> {
    if grid_n < 2 {
        return Err(HarnessError::Invalid(format!("grid_n: must be at least 2, got {grid_n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = load.params();
    let interior = |r: usize, c: usize| r > 0 && c > 0 && r + 1 < grid_n && c + 1 < grid_n;

    let mut nodes = Vec::with_capacity(grid_n * grid_n);
    for r in 0..grid_n {
        for c in 0..grid_n {
            let signal = interior(r, c).then(|| SignalPlan {
                cycle_s: GRID_CYCLE_S,
                green_window: [0.0, GRID_GREEN_S],
                offset_s: f64::from(rng.random_range(0..60u32)),
            });
            nodes.push(Node { id: node_id(r, c), signalized: signal.is_some(), signal });
        }
    }

    let mut edges = Vec::new();
    let mut initial = Vec::new();
    let mut link = |a: (usize, usize), b: (usize, usize), rng: &mut ChaCha8Rng| {
        let (from, to) = (node_id(a.0, a.1), node_id(b.0, b.1));
        let id = format!("{from}-{to}");
        let twin = format!("{to}-{from}");
        let congestion = round3(rng.random_range(params.congestion.0..params.congestion.1));
        let pedestrians = if interior(b.0, b.1) { round3(rng.random_range(0.0..60.0)) } else { 0.0 };
        initial.push(EdgeDelta {
            edge: id.clone(),
            congestion: Some(congestion),
            pedestrian_flow: Some(pedestrians),
            queued_vehicles: Some((congestion * 12.0).round() as i64),
            halted: None,
        });
        edges.push(Edge {
            id,
            from_node: from,
            to_node: to,
            length_m: GRID_EDGE_M,
            lanes: 2,
            speed_limit_mps: GRID_SPEED_MPS,
            slope_factor: 1.0,
            reverse_twin: Some(twin),
        });
    };
    for r in 0..grid_n {
        for c in 0..grid_n {
            if c + 1 < grid_n {
                link((r, c), (r, c + 1), &mut rng);
                link((r, c + 1), (r, c), &mut rng);
            }
            if r + 1 < grid_n {
                link((r, c), (r + 1, c), &mut rng);
                link((r + 1, c), (r, c), &mut rng);
            }
        }
    }

    let cells = grid_n * grid_n;
    let ambulances = (cells / 25).max(2);
    let normal = (cells / 50).max(1);
    let mut fleet = Vec::new();
    for i in 0..ambulances + normal {
        let n = rng.random_range(0..cells);
        let kind = if i < ambulances { VehicleKind::Ambulance } else { VehicleKind::NormalAv };
        let prefix = if i < ambulances { "amb" } else { "av" };
        let idx = if i < ambulances { i } else { i - ambulances };
        fleet.push(FleetEntry { id: format!("{prefix}{idx}"), kind, node: node_id(n / grid_n, n % grid_n) });
    }

    let gap = Exp::new(params.requests_per_hour / 3600.0).expect("positive rate");
    let mut requests = Vec::new();
    let mut t = 0.0;
    loop {
        t += gap.sample(&mut rng);
        if t >= REQUEST_WINDOW_S {
            break;
        }
        let roll: f64 = rng.random();
        let criticality = match roll {
            x if x < 0.35 => Criticality::C3,
            x if x < 0.70 => Criticality::C2,
            x if x < 0.90 => Criticality::C1,
            _ => Criticality::C0,
        };
        let n = rng.random_range(0..cells);
        requests.push(EmergencyRequest {
            id: format!("r{:03}", requests.len()),
            release_time_s: round3(t),
            mode: if criticality == Criticality::C0 { Mode::E0 } else { Mode::E1 },
            criticality,
            pickup_node: node_id(n / grid_n, n % grid_n),
            destination_node: None,
            requested_vehicle_kind: None,
        });
    }

    Ok(ScenarioDocument {
        format: SCENARIO_FORMAT.into(),
        network: NetworkSource::Inline(NetworkDocument { format: NETWORK_FORMAT.into(), nodes, edges }),
        fleet,
        requests,
        initial_state: initial,
        updates: Vec::new(),
        background: Some(BackgroundModel { step: 0.02, reversion: 0.1 }),
        policy: PolicySource::Preset("nz".into()),
        preemption: PreemptionConfig::default(),
        task: TaskConfig::default(),
        scheduler: SchedulerConfig { reserved_vehicles: 1, aging_after_s: None },
        service_time_s: 300.0,
        horizon_s: REQUEST_WINDOW_S + DRAIN_S,
        tick_s: 10.0,
    })
}

/// Generated scenario as pretty JSON (newline terminated).
pub fn cmd_gen(grid_n: usize, seed: u64, load: LoadProfile) -> Result<String, HarnessError> {
    let doc = generate(grid_n, seed, load)?;
    Ok(serde_json::to_string_pretty(&doc).expect("scenario serializes") + "\n")
}

/// One (seed, variant) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub seed: u64,
    pub variant: Variant,
    pub ok: bool,
    /// C2+C3 requests.
    pub count: usize,
    /// Achieved fraction per C3 target, in policy order.
    pub achieved: Vec<f64>,
    pub mean_response_s: Option<f64>,
    pub mortality_delta: f64,
    pub disturbance_veh_s: f64,
    pub trace_digest: String,
    pub error: Option<String>,
}

fn compare_cell(sc: &Scenario, seed: u64, variant: Variant) -> CompareRow {
    let failed = |e: String| CompareRow {
        seed,
        variant,
        ok: false,
        count: 0,
        achieved: Vec::new(),
        mean_response_s: None,
        mortality_delta: 0.0,
        disturbance_veh_s: 0.0,
        trace_digest: String::new(),
        error: Some(e),
    };
    let trace: Trace = match run(sc, seed, variant) {
        Ok(t) => t,
        Err(e) => return failed(e.to_string()),
    };
    let report = compliance(&trace, &sc.policy);
    let group = report.class("C2+C3").expect("combined class present");
    let served: Vec<f64> = trace
        .outcomes
        .iter()
        .filter(|o| o.criticality.is_life_threatening())
        .filter_map(|o| o.response_time_s)
        .collect();
    let mean = (!served.is_empty()).then(|| served.iter().fold(0.0, |a, b| a + b) / served.len() as f64);
    let achieved = if group.applicable {
        group.targets.iter().map(|t| t.achieved).collect()
    } else {
        vec![0.0; sc.policy.targets(Criticality::C3).len()]
    };
    CompareRow {
        seed,
        variant,
        ok: true,
        count: group.count,
        achieved,
        mean_response_s: mean,
        mortality_delta: report.mortality_delta,
        disturbance_veh_s: report.disturbance_veh_s,
        trace_digest: trace.digest(),
        error: None,
    }
}

/// Runs every (seed, variant) pair in parallel. Rows come back ordered by
/// seed, then by the variant's position in `variants`.
pub fn cmd_compare(
    scenario: &Path,
    seeds: &[u64],
    variants: &[Variant],
    policy: Option<&str>,
) -> Result<(Vec<CompareRow>, DeadlinePolicy), HarnessError> {
    if seeds.is_empty() {
        return Err(HarnessError::Invalid("seeds: at least one seed is required".into()));
    }
    if variants.len() < 2 {
        return Err(HarnessError::Invalid("variants: at least two variants are required".into()));
    }
    let sc = prepare(scenario, policy)?;
    let cells: Vec<(usize, u64, usize, Variant)> = seeds
        .iter()
        .enumerate()
        .flat_map(|(si, &s)| variants.iter().enumerate().map(move |(vi, &v)| (si, s, vi, v)))
        .collect();
    let mut rows: Vec<((usize, usize), CompareRow)> =
        cells.par_iter().map(|&(si, s, vi, v)| ((si, vi), compare_cell(&sc, s, v))).collect();
    rows.sort_by_key(|(k, _)| *k);
    Ok((rows.into_iter().map(|(_, r)| r).collect(), sc.policy))
}

/// Columns: seed, variant, status, count, one `achieved_<T>s` per C3
/// target, mean_response_s, mortality_delta, disturbance_veh_s.
pub fn compare_csv(rows: &[CompareRow], policy: &DeadlinePolicy) -> String {
    let mut header: Vec<String> = ["seed", "variant", "status", "count"].iter().map(|s| s.to_string()).collect();
    header.extend(policy.targets(Criticality::C3).iter().map(|t| format!("achieved_{}s", t.seconds)));
    header.extend(["mean_response_s", "mortality_delta", "disturbance_veh_s"].iter().map(|s| s.to_string()));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![
            r.seed.to_string(),
            r.variant.to_string(),
            if r.ok { "ok".into() } else { format!("failed: {}", r.error.as_deref().unwrap_or("")) },
            r.count.to_string(),
        ];
        let n = policy.targets(Criticality::C3).len();
        rec.extend((0..n).map(|i| r.achieved.get(i).map_or(String::new(), |a| format!("{a:.4}"))));
        rec.push(r.mean_response_s.map_or(String::new(), |m| format!("{m:.1}")));
        rec.push(format!("{:.4}", r.mortality_delta));
        rec.push(format!("{:.0}", r.disturbance_veh_s));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
