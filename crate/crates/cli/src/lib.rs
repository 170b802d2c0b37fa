//! Scenario-driven front-end: loads scenario documents, runs reach-law,
//! occupancy, keep-out set and Monte-Carlo computations, and emits JSON
//! records, CSV grids and SVG plots.

pub mod scenario;
pub mod svg;

use keepout::fsr::GaussianState;
use keepout::geometry::{planar_directions, VPolytope};
use keepout::occupancy::{ObstacleDynamics, ObstacleInstance};
use keepout::occupyset::{
    default_directions, dmsp_cover, occupyset_minkowski, occupyset_projection, CoverMethod, DMSPCover, OccupySetApprox,
    Region,
};
use keepout::oracle::{contour_and_containment, ContainmentReport, GridSpec, MonteCarloOccupancy, OccupancyGrid, Target};
use nalgebra::DVector;
use scenario::{Algorithm, LoadedScenario, ModelSpec, OracleSpec, Scenario, UnicycleSpec};
use serde::Serialize;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;
use svg::{ccw, Plot};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_CONTAINMENT: i32 = 4;

/// Confidence level of the plotted reach-law regions.
const CONFIDENCE: f64 = 0.99;
/// Violations kept in a record; the counts are always complete.
const MAX_LISTED: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] keepout::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

/// Command-line values that replace scenario fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub tau: Option<usize>,
    pub k: Option<usize>,
    pub r: Option<f64>,
    pub ndes: Option<usize>,
    pub tol: Option<f64>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub ns: Option<usize>,
    pub seed: Option<u64>,
    pub grid: Option<usize>,
    /// Replace the model by the switched unicycle with this transition
    /// matrix name, keeping the scenario's initial position when planar.
    pub unicycle: Option<String>,
}

impl Overrides {
    pub fn apply(&self, loaded: &LoadedScenario) -> Result<LoadedScenario, CliError> {
        let mut s = loaded.scenario.clone();
        let q = &mut s.query;
        if let Some(v) = self.alpha {
            q.alpha = v;
        }
        if let Some(v) = self.tau {
            q.tau = v;
        }
        if let Some(v) = self.k {
            q.k = v;
        }
        if let Some(v) = self.r {
            q.r = Some(v);
        }
        if let Some(v) = self.ndes {
            q.ndes = v;
        }
        if let Some(v) = self.tol {
            q.tol = v;
        }
        if let Some(v) = &self.algorithms {
            q.algorithms = v.clone();
        }
        if self.ns.is_some() || self.seed.is_some() || self.grid.is_some() {
            let mut o = s.oracle.clone().unwrap_or_default();
            if let Some(v) = self.ns {
                o.ns = v;
            }
            if let Some(v) = self.seed {
                o.seed = Some(v);
            }
            if let Some(v) = self.grid {
                o.grid = v;
            }
            s.oracle = Some(o);
        }
        if let Some(name) = &self.unicycle {
            let x0 = match &s.model {
                ModelSpec::Gaussian { mean, .. } if mean.len() == 2 => mean.clone(),
                ModelSpec::Constant { x0, .. } if x0.len() == 2 => x0.clone(),
                ModelSpec::Unicycle(u) => u.x0.clone(),
                _ => vec![10.0, 10.0],
            };
            let mut u = UnicycleSpec::with_x0(x0);
            u.transition = scenario::TransitionSpec::Named(name.clone());
            s.model = ModelSpec::Unicycle(u);
        }
        s.validate()?;
        let changed = serde_json::to_string(&s).map_err(|e| CliError::Parse(e.to_string()))?;
        let sha256 = if changed == serde_json::to_string(&loaded.scenario).unwrap_or_default() {
            loaded.sha256.clone()
        } else {
            // overridden runs are tagged with the digest of the effective scenario
            use sha2::{Digest, Sha256};
            hex::encode(Sha256::digest(format!("{}\n{changed}", loaded.sha256).as_bytes()))
        };
        Ok(LoadedScenario { scenario: s, sha256 })
    }
}

/// One result line. `timing_ms` is the only field allowed to differ
/// between repeated runs.
#[derive(Debug, Clone, Serialize)]
pub struct Record {
    pub command: String,
    pub scenario: String,
    pub scenario_sha256: String,
    pub version: String,
    pub result: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ms: Option<Value>,
}

impl Record {
    fn new(command: &str, s: &LoadedScenario, result: Value, timing_ms: Option<Value>) -> Self {
        Record {
            command: command.into(),
            scenario: s.scenario.name.clone(),
            scenario_sha256: s.sha256.clone(),
            version: keepout::VERSION.into(),
            result,
            timing_ms,
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("records serialize")
    }
}

/// Everything a command produced.
#[derive(Debug, Default)]
pub struct Outcome {
    pub records: Vec<Record>,
    /// Extra text for standard output (CSV, timing lines).
    pub text: Vec<String>,
    /// Files to write, relative to the output directory.
    pub files: Vec<(PathBuf, String)>,
    /// `Some(false)` when a containment check failed.
    pub verdict: Option<bool>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.verdict == Some(false) {
            EXIT_CONTAINMENT
        } else {
            EXIT_OK
        }
    }

    fn merge_verdict(&mut self, pass: bool) {
        self.verdict = Some(self.verdict.unwrap_or(true) && pass);
    }

    pub fn write_files(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, body) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }
}

fn ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Area of the planar part of an approximation, `None` when unbounded,
/// trivial or not planar.
fn outer_area(a: &OccupySetApprox) -> Option<f64> {
    let h = a.outer.as_set()?;
    if h.dim() != 2 || !h.is_bounded() {
        return None;
    }
    VPolytope::new(h.vertices()).ok().map(|v| v.area())
}

fn inner_area(a: &OccupySetApprox) -> Option<f64> {
    match &a.inner {
        Some(Region::Set(v)) if v.dim() == 2 => Some(v.area()),
        _ => None,
    }
}

fn approx_value(a: &OccupySetApprox) -> Value {
    let mut v = serde_json::to_value(a).expect("approximations serialize");
    v["inner_area"] = json!(inner_area(a));
    v["outer_area"] = json!(outer_area(a));
    v
}

/// Keep-out sets for a parameter-varying obstacle, with wall times.
pub struct AlgorithmRun {
    pub algorithm: Algorithm,
    pub approx: OccupySetApprox,
    pub ms: f64,
}

/// Cover of a switched obstacle, with wall time.
pub struct CoverRun {
    pub algorithm: Algorithm,
    pub cover: DMSPCover,
    pub ms: f64,
}

pub fn run_algorithms(s: &LoadedScenario, obs: &ObstacleInstance) -> Result<Vec<AlgorithmRun>, CliError> {
    let q = &s.scenario.query;
    let mut out = Vec::new();
    for &alg in &q.algorithms {
        let start = Instant::now();
        let mut approx = match alg {
            Algorithm::Projection => occupyset_projection(obs, q.alpha, q.tau, q.k, q.r, q.tol)?,
            Algorithm::Minkowski => occupyset_minkowski(obs, q.alpha, q.tau, &directions(obs.dim(), q.ndes)?, q.tol)?,
        };
        let elapsed = ms(start);
        approx.provenance = Some(s.sha256.clone());
        out.push(AlgorithmRun {
            algorithm: alg,
            approx,
            ms: elapsed,
        });
    }
    Ok(out)
}

pub fn run_covers(s: &LoadedScenario, obs: &ObstacleInstance) -> Result<Vec<CoverRun>, CliError> {
    let q = &s.scenario.query;
    let mut out = Vec::new();
    for &alg in &q.algorithms {
        let method = match alg {
            Algorithm::Projection => CoverMethod::Projection { k: q.k, r: q.r },
            Algorithm::Minkowski => CoverMethod::Minkowski {
                directions: directions(obs.dim(), q.ndes)?,
            },
        };
        let start = Instant::now();
        let mut cover = dmsp_cover(obs, q.alpha, q.tau, &method, q.tol)?;
        let elapsed = ms(start);
        for p in &mut cover.pieces {
            p.approx.provenance = Some(s.sha256.clone());
        }
        out.push(CoverRun {
            algorithm: alg,
            cover,
            ms: elapsed,
        });
    }
    Ok(out)
}

fn directions(n: usize, ndes: usize) -> Result<Vec<DVector<f64>>, CliError> {
    if n == 2 {
        if ndes < 3 {
            return Err(CliError::Parse(format!("query.ndes: need at least 3 directions, got {ndes}")));
        }
        Ok(planar_directions(ndes))
    } else {
        Ok(default_directions(n)?)
    }
}

/// Sampled occupancy on the default window.
pub struct OracleRun {
    pub mc: MonteCarloOccupancy,
    pub grid: OccupancyGrid,
    pub seed: u64,
    pub ms: f64,
}

pub fn run_oracle(s: &LoadedScenario, obs: &ObstacleInstance) -> Result<OracleRun, CliError> {
    let spec: OracleSpec = s.scenario.oracle.clone().unwrap_or_default();
    let seed = s.scenario.seed()?;
    let tau = s.scenario.query.tau;
    let start = Instant::now();
    let mc = MonteCarloOccupancy::simulate(obs, tau, spec.ns, seed)?;
    let window = match obs.dynamics() {
        ObstacleDynamics::Dpv { .. } => GridSpec::around_gaussian(obs.occupancy(tau)?.state(), obs.shape(), spec.grid, spec.grid)?,
        ObstacleDynamics::Dmsp(_) => GridSpec::around_samples(mc.samples(), obs.shape(), spec.grid, spec.grid)?,
    };
    let grid = mc.grid(&window)?;
    Ok(OracleRun {
        mc,
        grid,
        seed,
        ms: ms(start),
    })
}

fn report_value(r: &ContainmentReport) -> Value {
    json!({
        "pass": r.pass,
        "alpha": r.alpha,
        "ns": r.ns,
        "nodes_above": r.nodes_above,
        "vertices_checked": r.vertices_checked,
        "inner_violation_count": r.inner_violations.len(),
        "outer_violation_count": r.outer_violations.len(),
        "inner_violations": r.inner_violations.iter().take(MAX_LISTED).collect::<Vec<_>>(),
        "outer_violations": r.outer_violations.iter().take(MAX_LISTED).collect::<Vec<_>>(),
    })
}

fn fsr_times(s: &Scenario) -> Vec<usize> {
    let mut t = s.query.fsr_times.clone();
    if !t.contains(&s.query.tau) {
        t.push(s.query.tau);
    }
    t
}

/// Reach-law records: one per time for a parameter-varying obstacle, one
/// per mode sequence for a switched one.
pub fn cmd_fsr(s: &LoadedScenario) -> Result<Outcome, CliError> {
    let obs = s.scenario.obstacle()?;
    let mut out = Outcome::default();
    match obs.dynamics() {
        ObstacleDynamics::Dpv { .. } => {
            for t in fsr_times(&s.scenario) {
                let start = Instant::now();
                let occ = obs.occupancy(t)?;
                let elapsed = ms(start);
                let st = occ.state();
                let result = json!({"tau": t, "state": st, "rank": st.rank(), "nodist": vec_of(occ.nodist())});
                out.records.push(Record::new("fsr", s, result, Some(json!(elapsed))));
            }
        }
        ObstacleDynamics::Dmsp(_) => {
            let tau = s.scenario.query.tau;
            let start = Instant::now();
            let occ = obs.dmsp_occupancy(tau)?;
            let elapsed = ms(start);
            let pieces: Vec<Value> = occ
                .pieces
                .iter()
                .map(|(seq, o)| {
                    json!({"sequence": seq.states, "probability": seq.probability,
                           "mean": vec_of(o.state().mean()), "cov": o.state(), "rank": o.state().rank()})
                })
                .collect();
            let result = json!({"tau": tau, "sequences": pieces.len(), "pieces": pieces});
            out.records.push(Record::new("fsr", s, result, Some(json!(elapsed))));
        }
    }
    Ok(out)
}

/// `φ` at one point.
pub fn cmd_occupancy_at(s: &LoadedScenario, y: &[f64]) -> Result<Outcome, CliError> {
    let obs = s.scenario.obstacle()?;
    let q = &s.scenario.query;
    if y.len() != obs.dim() {
        return Err(CliError::Parse(format!("--at: expected {} coordinates, got {}", obs.dim(), y.len())));
    }
    let y = DVector::from_column_slice(y);
    let start = Instant::now();
    let est = match obs.dynamics() {
        ObstacleDynamics::Dpv { .. } => obs.occupancy(q.tau)?.phi(&y, q.tol / 2.0)?,
        ObstacleDynamics::Dmsp(_) => obs.dmsp_occupancy(q.tau)?.phi(&y, q.tol / 2.0)?,
    };
    let elapsed = ms(start);
    let result = json!({"tau": q.tau, "y": vec_of(&y), "phi": est.value, "error": est.error, "converged": est.converged});
    Ok(Outcome {
        records: vec![Record::new("occupancy", s, result, Some(json!(elapsed)))],
        ..Default::default()
    })
}

/// Parse `xmin:xmax:nx,ymin:ymax:ny`.
pub fn parse_grid(text: &str) -> Result<GridSpec, CliError> {
    let bad = || CliError::Parse(format!("--grid: expected xmin:xmax:nx,ymin:ymax:ny, got {text:?}"));
    let axes: Vec<&str> = text.split(',').collect();
    if axes.len() != 2 {
        return Err(bad());
    }
    let mut parsed = Vec::new();
    for a in axes {
        let parts: Vec<&str> = a.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        parsed.push((lo, hi, n));
    }
    GridSpec::new([parsed[0].0, parsed[1].0], [parsed[0].1, parsed[1].1], parsed[0].2, parsed[1].2)
        .map_err(|e| CliError::Parse(format!("--grid: {e}")))
}

/// `φ` on a grid as CSV `x,y,phi`.
pub fn cmd_occupancy_grid(s: &LoadedScenario, grid: &GridSpec) -> Result<Outcome, CliError> {
    let obs = s.scenario.obstacle()?;
    let q = &s.scenario.query;
    if obs.dim() != 2 {
        return Err(CliError::Parse("--grid needs a planar obstacle".into()));
    }
    let start = Instant::now();
    let eval: Box<dyn Fn(&DVector<f64>) -> keepout::Result<f64>> = match obs.dynamics() {
        ObstacleDynamics::Dpv { .. } => {
            let occ = obs.occupancy(q.tau)?;
            let tol = q.tol / 2.0;
            Box::new(move |y| Ok(occ.phi(y, tol)?.value))
        }
        ObstacleDynamics::Dmsp(_) => {
            let occ = obs.dmsp_occupancy(q.tau)?;
            let tol = q.tol / 2.0;
            Box::new(move |y| Ok(occ.phi(y, tol)?.value))
        }
    };
    let mut csv = String::from("x,y,phi\n");
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let [x, y] = grid.node(i, j);
            let p = eval(&DVector::from_vec(vec![x, y]))?;
            csv.push_str(&format!("{x},{y},{p}\n"));
        }
    }
    let elapsed = ms(start);
    let result = json!({"tau": q.tau, "grid": grid});
    Ok(Outcome {
        records: vec![Record::new("occupancy", s, result, Some(json!(elapsed)))],
        text: vec![csv],
        ..Default::default()
    })
}

/// Keep-out sets of a parameter-varying obstacle.
pub fn cmd_occupyset(s: &LoadedScenario) -> Result<Outcome, CliError> {
    let obs = s.scenario.obstacle()?;
    if s.scenario.is_switched() {
        return Err(CliError::Parse("model: switched obstacles need the cover command".into()));
    }
    let mut out = Outcome::default();
    for run in run_algorithms(s, &obs)? {
        out.records.push(Record::new("occupyset", s, approx_value(&run.approx), Some(json!(run.ms))));
    }
    Ok(out)
}

fn cover_records(s: &LoadedScenario, run: &CoverRun) -> Vec<Record> {
    let mut recs: Vec<Record> = run
        .cover
        .pieces
        .iter()
        .map(|p| {
            let result = json!({
                "algorithm": run.algorithm,
                "sequence": p.sequence.states,
                "probability": p.sequence.probability,
                "alpha_s": p.alpha_s,
                "approx": approx_value(&p.approx),
            });
            Record::new("cover", s, result, None)
        })
        .collect();
    let summary = json!({
        "algorithm": run.algorithm,
        "alpha": run.cover.alpha,
        "tau": run.cover.tau,
        "pieces": run.cover.pieces.len(),
        "empty_pieces": run.cover.empty_pieces(),
    });
    recs.push(Record::new("cover-summary", s, summary, Some(json!(run.ms))));
    recs
}

fn cover_plot(s: &LoadedScenario, run: &CoverRun, oracle: Option<&OracleRun>) -> Plot {
    let mut plot = Plot::new(&format!("{}: cover at alpha={} tau={}", s.scenario.name, run.cover.alpha, run.cover.tau));
    if let Some(o) = oracle {
        add_oracle_cells(&mut plot, &o.grid, run.cover.alpha);
    }
    for p in &run.cover.pieces {
        if let Some(h) = p.approx.outer.as_set() {
            if h.is_bounded() {
                let pts: Vec<[f64; 2]> = h.vertices().iter().map(|v| [v[0], v[1]]).collect();
                plot.polygon(ccw(&pts), "#d62728", "#d62728", false, "cover piece (outer)");
            }
        }
        if let Some(y) = &p.approx.y_max {
            plot.point([y[0], y[1]], "#333333", "sequence mean");
        }
    }
    plot
}

/// Cover of a switched obstacle: one record per sequence, a summary and
/// a merged plot.
pub fn cmd_cover(s: &LoadedScenario) -> Result<Outcome, CliError> {
    let obs = s.scenario.obstacle()?;
    if !s.scenario.is_switched() {
        return Err(CliError::Parse("model: the cover command needs a switched obstacle".into()));
    }
    let mut out = Outcome::default();
    for run in run_covers(s, &obs)? {
        out.records.extend(cover_records(s, &run));
        if obs.dim() == 2 && s.scenario.outputs.plot {
            let name = format!("{}.cover-{}.svg", s.scenario.name, alg_name(run.algorithm));
            out.files.push((name.into(), cover_plot(s, &run, None).render()));
        }
    }
    Ok(out)
}

fn alg_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Projection => "projection",
        Algorithm::Minkowski => "minkowski",
    }
}

fn add_oracle_cells(plot: &mut Plot, grid: &OccupancyGrid, alpha: f64) {
    let mut cells = Vec::new();
    for j in 0..grid.spec.ny {
        for i in 0..grid.spec.nx {
            if alpha > 0.0 && grid.at(i, j).0 >= alpha {
                cells.push(grid.spec.node(i, j));
            }
        }
    }
    plot.cells(cells, grid.spec.dx(), grid.spec.dy(), "#9ecae1", "Monte-Carlo cells with phi >= alpha");
}

fn add_confidence(plot: &mut Plot, st: &GaussianState, t: usize) {
    if let Ok(line) = st.confidence_polyline(CONFIDENCE, 96) {
        let pts: Vec<[f64; 2]> = line.iter().map(|p| [p[0], p[1]]).collect();
        let label = format!("99% region, t={t} (rank {})", st.rank());
        if pts.len() == 1 {
            plot.point(pts[0], "#2ca02c", &label);
        } else {
            plot.polyline(pts, "#2ca02c", &label);
        }
    }
}

fn dpv_plot(s: &LoadedScenario, obs: &ObstacleInstance, runs: &[AlgorithmRun], oracle: Option<&OracleRun>) -> Result<Plot, CliError> {
    let q = &s.scenario.query;
    let mut plot = Plot::new(&format!("{}: alpha={} tau={}", s.scenario.name, q.alpha, q.tau));
    if let Some(o) = oracle {
        add_oracle_cells(&mut plot, &o.grid, q.alpha);
    }
    for t in fsr_times(&s.scenario) {
        add_confidence(&mut plot, obs.occupancy(t)?.state(), t);
    }
    for run in runs {
        let name = alg_name(run.algorithm);
        if let Some(Region::Set(v)) = &run.approx.inner {
            let pts: Vec<[f64; 2]> = v.vertices().iter().map(|p| [p[0], p[1]]).collect();
            plot.polygon(ccw(&pts), "#1f77b4", "none", false, &format!("{name} inner"));
        }
        if let Some(h) = run.approx.outer.as_set() {
            if h.is_bounded() {
                let pts: Vec<[f64; 2]> = h.vertices().iter().map(|p| [p[0], p[1]]).collect();
                let color = if run.algorithm == Algorithm::Projection { "#ff7f0e" } else { "#d62728" };
                plot.polygon(ccw(&pts), color, "none", run.algorithm == Algorithm::Minkowski, &format!("{name} outer"));
            }
        }
    }
    Ok(plot)
}

fn verdict_records(s: &LoadedScenario, out: &mut Outcome, oracle: &OracleRun, runs: &[AlgorithmRun], covers: &[CoverRun]) {
    let alpha = s.scenario.query.alpha;
    let mut verdicts = Vec::new();
    for run in runs {
        let rep = contour_and_containment(&oracle.mc, &oracle.grid, alpha, Target::Single(&run.approx));
        out.merge_verdict(rep.pass);
        verdicts.push(json!({"algorithm": run.algorithm, "report": report_value(&rep)}));
    }
    for run in covers {
        let rep = contour_and_containment(&oracle.mc, &oracle.grid, alpha, Target::Cover(&run.cover));
        out.merge_verdict(rep.pass);
        verdicts.push(json!({"algorithm": run.algorithm, "cover": true, "report": report_value(&rep)}));
    }
    let result = json!({
        "ns": oracle.mc.ns(),
        "seed": oracle.seed,
        "grid": oracle.grid.spec,
        "max_phi_hat": oracle.grid.phi.iter().copied().fold(0.0, f64::max),
        "verdicts": verdicts,
    });
    out.records.push(Record::new("oracle", s, result, Some(json!(oracle.ms))));
}

/// Sampled grid (CSV) and containment verdicts of the configured algorithms.
pub fn cmd_oracle(s: &LoadedScenario) -> Result<Outcome, CliError> {
    let obs = s.scenario.obstacle()?;
    let (runs, covers) = if s.scenario.is_switched() {
        (Vec::new(), run_covers(s, &obs)?)
    } else {
        (run_algorithms(s, &obs)?, Vec::new())
    };
    let oracle = run_oracle(s, &obs)?;
    let mut out = Outcome::default();
    verdict_records(s, &mut out, &oracle, &runs, &covers);
    out.files.push((format!("{}.grid.csv", s.scenario.name).into(), oracle.grid.to_csv()));
    Ok(out)
}

/// One timing line per scenario: algorithm and oracle wall times plus the
/// verdict.
pub fn cmd_compare(s: &LoadedScenario) -> Result<Outcome, CliError> {
    let obs = s.scenario.obstacle()?;
    let (runs, covers) = if s.scenario.is_switched() {
        (Vec::new(), run_covers(s, &obs)?)
    } else {
        (run_algorithms(s, &obs)?, Vec::new())
    };
    let oracle = run_oracle(s, &obs)?;
    let mut out = Outcome::default();
    verdict_records(s, &mut out, &oracle, &runs, &covers);
    let mut cols: Vec<String> = Vec::new();
    let mut timing = serde_json::Map::new();
    for r in &runs {
        cols.push(format!("{} {:.3} ms", alg_name(r.algorithm), r.ms));
        timing.insert(alg_name(r.algorithm).into(), json!(r.ms));
    }
    for r in &covers {
        cols.push(format!("{} cover {:.3} ms ({} pieces, {} empty)", alg_name(r.algorithm), r.ms, r.cover.pieces.len(), r.cover.empty_pieces()));
        timing.insert(format!("{}_cover", alg_name(r.algorithm)), json!(r.ms));
    }
    cols.push(format!("oracle {:.1} ms (Ns={})", oracle.ms, oracle.mc.ns()));
    timing.insert("oracle".into(), json!(oracle.ms));
    let verdict = if out.verdict.unwrap_or(true) { "PASS" } else { "FAIL" };
    out.text.push(format!("{} | {} | {verdict}", s.scenario.name, cols.join(" | ")));
    out.records.push(Record::new("compare", s, json!({"verdict": verdict}), Some(Value::Object(timing))));
    Ok(out)
}

/// Full scenario run: reach laws, keep-out sets or cover, oracle verdicts
/// when configured, and the plot.
pub fn cmd_run(s: &LoadedScenario) -> Result<Outcome, CliError> {
    let obs = s.scenario.obstacle()?;
    let q = &s.scenario.query;
    let mut out = cmd_fsr(s)?;
    let oracle = match &s.scenario.oracle {
        Some(_) => Some(run_oracle(s, &obs)?),
        None => None,
    };
    let name = &s.scenario.name;
    if s.scenario.is_switched() {
        let covers = run_covers(s, &obs)?;
        for run in &covers {
            out.records.extend(cover_records(s, run));
            if obs.dim() == 2 && s.scenario.outputs.plot {
                let file = format!("{name}.cover-{}.svg", alg_name(run.algorithm));
                out.files.push((file.into(), cover_plot(s, run, oracle.as_ref()).render()));
            }
        }
        if let Some(o) = &oracle {
            verdict_records(s, &mut out, o, &[], &covers);
        }
    } else {
        let occ = obs.occupancy(q.tau)?;
        let start = Instant::now();
        let (y, peak) = occ.y_max()?;
        let elapsed = ms(start);
        let at_nodist = occ.phi(occ.nodist(), q.tol / 2.0)?;
        out.records.push(Record::new(
            "occupancy",
            s,
            json!({"tau": q.tau, "y_max": vec_of(&y), "phi_max": peak.value,
                   "nodist": vec_of(occ.nodist()), "phi_at_nodist": at_nodist.value, "error": at_nodist.error}),
            Some(json!(elapsed)),
        ));
        let runs = run_algorithms(s, &obs)?;
        for run in &runs {
            out.records.push(Record::new("occupyset", s, approx_value(&run.approx), Some(json!(run.ms))));
        }
        if let Some(o) = &oracle {
            verdict_records(s, &mut out, o, &runs, &[]);
        }
        if obs.dim() == 2 && s.scenario.outputs.plot {
            out.files.push((format!("{name}.svg").into(), dpv_plot(s, &obs, &runs, oracle.as_ref())?.render()));
        }
    }
    if let Some(o) = &oracle {
        out.files.push((format!("{name}.grid.csv").into(), o.grid.to_csv()));
    }
    let lines: Vec<String> = out.records.iter().map(Record::to_line).collect();
    out.files.push((format!("{name}.results.jsonl").into(), lines.join("\n") + "\n"));
    Ok(out)
}
