//! Experiment driver: greedy build, estimator sweep at a chosen precision,
//! EIM diagnostics and online timing benchmarks.
//!
//! CSV columns are fixed and documented on each writer. Numbers are written
//! as `{:.16e}` (17 significant digits) so round-off floors survive the round
//! trip. Empty cells mark estimators that were not requested.

use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::eim::{eim_offline, EimConfig, EimStop, EimVariant};
use crate::error::{RbError, Result};
use crate::estimators::{self, build_e3, build_e4, e1, e2, e3, e4_at, sigma_of, xtable, E3State, E4State, Method};
use crate::problem::{ParameterGrid, ProblemView, TruthProblem};
use crate::rb::{greedy_build, perturb_snapshots, GreedyConfig, GreedyTrace, ReducedBasis};
use crate::scalar::{DoubleWord, Precision, Real};
use crate::truth::{solve_truth, ProblemSpec};

/// Version of the `meta.json` / CSV layout.
pub const OUTPUT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub precision: Precision,
    pub greedy: GreedyConfig,
    pub estimators: Vec<Method>,
    pub sigma_hat: usize,
    pub eim_variant: EimVariant,
    pub e3_seed: u64,
    /// Normalized truth-residual level of perturbed snapshots.
    pub xi: Option<f64>,
    pub perturb_seed: u64,
    /// Compute `||u - u_hat||_V` per trial point (one truth solve each).
    pub true_error: bool,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemSpec::Diffusion1d(Default::default()),
            precision: Precision::Double,
            greedy: GreedyConfig::default(),
            estimators: Method::ALL.to_vec(),
            sigma_hat: 23,
            eim_variant: EimVariant::Stabilized,
            e3_seed: 0,
            xi: None,
            perturb_seed: 0,
            true_error: true,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }

    /// Seeds of every random stream the run consumes.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.e3_seed = seed;
        self.perturb_seed = seed;
        if let ProblemSpec::Synthetic(s) = &mut self.problem {
            s.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.greedy.validate()?;
        if self.estimators.is_empty() {
            return Err(RbError::InvalidConfig("no estimator requested".into()));
        }
        if self.estimators.contains(&Method::E4) && self.sigma_hat == 0 {
            return Err(RbError::InvalidConfig("E4 needs sigma_hat >= 1".into()));
        }
        if let Some(xi) = self.xi {
            if !(xi > 0.0 && xi < 1.0) {
                return Err(RbError::InvalidConfig(format!("xi must lie in (0, 1), got {xi}")));
            }
        }
        Ok(())
    }

    fn wants(&self, m: Method) -> bool {
        self.estimators.contains(&m)
    }
}

/// One row of `sweep.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mu: f64,
    pub e1: Option<f64>,
    pub e2: Option<f64>,
    pub e3: Option<f64>,
    pub e4: Option<f64>,
    pub true_error: Option<f64>,
    pub raw_radicand_e2: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub meta: serde_json::Value,
    pub sweep_csv: PathBuf,
    pub meta_json: PathBuf,
    pub eim_diag_csv: PathBuf,
}

impl SweepOutcome {
    /// Row of a selected parameter.
    pub fn row_at(&self, mu: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.mu == mu)
    }
}

/// Offline output shared by the sweep and the benchmark.
struct Offline<T> {
    rb: ReducedBasis<T>,
    trace: GreedyTrace,
    e3: Option<E3State<T>>,
    e4: Option<E4State<T>>,
}

fn offline<T: Real>(config: &ExperimentConfig, problem: &TruthProblem, grid: &ParameterGrid) -> Result<Offline<T>> {
    let (rb64, trace) = greedy_build(problem, grid, &config.greedy)?;
    let rb = match config.xi {
        Some(xi) => perturb_snapshots::<f64, T>(&rb64, problem, xi, config.perturb_seed)?,
        None => rb64.rebuild::<T>(problem)?,
    };
    let view = ProblemView::<T>::new(problem)?;
    let sigma = sigma_of(rb.m());
    let e3 = if config.wants(Method::E3) {
        if grid.len() < sigma {
            return Err(RbError::InvalidConfig(format!("E3 needs at least sigma = {sigma} trial points, grid has {}", grid.len())));
        }
        Some(build_e3(&rb, &view, grid, config.e3_seed)?)
    } else {
        None
    };
    let e4 = if config.wants(Method::E4) {
        Some(build_e4(&rb, &view, grid, config.sigma_hat, config.eim_variant)?)
    } else {
        None
    };
    Ok(Offline { rb, trace, e3, e4 })
}

fn fmt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.16e}"))
}

/// Columns: `mu, e1, e2, e3, e4, true_error, raw_radicand_e2`.
pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["mu", "e1", "e2", "e3", "e4", "true_error", "raw_radicand_e2"])?;
    for r in rows {
        w.write_record([
            format!("{:.16e}", r.mu),
            fmt(r.e1),
            fmt(r.e2),
            fmt(r.e3),
            fmt(r.e4),
            fmt(r.true_error),
            fmt(r.raw_radicand_e2),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn sweep_rows<T: Real>(config: &ExperimentConfig, problem: &TruthProblem, grid: &ParameterGrid, off: &Offline<T>) -> Result<Vec<SweepRow>> {
    let view = ProblemView::<T>::new(problem)?;
    let view64 = ProblemView::<f64>::new(problem)?;
    let rb = &off.rb;
    grid.points()
        .par_iter()
        .enumerate()
        .map(|(m, &mu)| {
            let r2 = if config.wants(Method::E2) { Some(e2(rb, mu)?) } else { None };
            let e1v = if config.wants(Method::E1) { Some(e1(rb, &view, mu)?.value) } else { None };
            let e3v = match &off.e3 {
                Some(st) => Some(e3(st, rb, mu)?.value),
                None => None,
            };
            let e4v = match &off.e4 {
                Some(st) => Some(e4_at(st, rb, m)?.value),
                None => None,
            };
            let true_error = if config.true_error {
                let u = solve_truth(problem, mu)?;
                let uh = rb.lift(&rb.reduced_solve(mu)?);
                let diff: Vec<_> = u.iter().zip(&uh).map(|(&a, &b)| a - b).collect();
                Some(view64.v_norm(&diff)?)
            } else {
                None
            };
            Ok(SweepRow {
                mu,
                e1: e1v,
                e2: r2.map(|r| r.value),
                e3: e3v,
                e4: e4v,
                true_error,
                raw_radicand_e2: r2.map(|r| r.raw_radicand),
            })
        })
        .collect()
}

fn problem_seed(spec: &ProblemSpec) -> Option<u64> {
    match spec {
        ProblemSpec::Synthetic(s) => Some(s.seed),
        ProblemSpec::Diffusion1d(_) => None,
    }
}

fn run_sweep_in<T: Real>(config: &ExperimentConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let t0 = Instant::now();
    let (problem, grid) = config.problem.build()?;
    let off = offline::<T>(config, &problem, &grid)?;
    info!("offline done in {:?}, n_hat = {}", t0.elapsed(), off.rb.n_hat());
    let rows = sweep_rows(config, &problem, &grid, &off)?;

    std::fs::create_dir_all(&config.out_dir)?;
    let sweep_csv = config.out_dir.join("sweep.csv");
    let meta_json = config.out_dir.join("meta.json");
    let eim_diag_csv = config.out_dir.join("eim_diag.csv");
    write_sweep_csv(&sweep_csv, &rows)?;
    match &off.e4 {
        Some(st) => st.eim.write_diagnostics(&eim_diag_csv)?,
        None => {
            let mut w = csv::Writer::from_path(&eim_diag_csv)?;
            w.write_record(["k", "det", "det_im", "cond", "residual", "levels"])?;
            w.flush()?;
        }
    }

    let rb = &off.rb;
    let beta_min = rb.beta_lb.min_over(grid.points());
    let meta = json!({
        "version": OUTPUT_VERSION,
        "problem": problem.name,
        "truth_dim": problem.dim(),
        "d": problem.d(),
        "n_hat": rb.n_hat(),
        "sigma": sigma_of(rb.m()),
        "sigma_hat": off.e4.as_ref().map(|st| st.eim.sigma_hat()),
        "delta": rb.delta.to_f64(),
        "beta_min": beta_min,
        "precision": T::PRECISION,
        "estimators": config.estimators,
        "selected": rb.selected,
        "greedy": off.trace,
        "eim_variant": config.eim_variant,
        "eim_stop": off.e4.as_ref().map(|st| st.eim.stop),
        "breakdown_steps": off.e4.as_ref().and_then(|st| match st.eim.stop {
            EimStop::Breakdown { step } => Some(vec![step]),
            _ => None,
        }).unwrap_or_default(),
        "cond_norm": "spectral",
        "e3_rank": off.e3.as_ref().map(|st| st.rank),
        "e3_cond": off.e3.as_ref().map(|st| st.cond_estimate),
        "xi": config.xi,
        "inexact_plateau": config.xi.map(|xi| xi * rb.delta.to_f64() / beta_min),
        "seeds": {
            "problem": problem_seed(&config.problem),
            "e3": config.e3_seed,
            "perturb": config.perturb_seed,
        },
        "config": config,
    });
    let f = std::io::BufWriter::new(std::fs::File::create(&meta_json)?);
    serde_json::to_writer_pretty(f, &meta)?;
    info!("sweep written to {} in {:?}", config.out_dir.display(), t0.elapsed());
    Ok(SweepOutcome { rows, meta, sweep_csv, meta_json, eim_diag_csv })
}

/// Greedy + estimator sweep over the trial grid; writes `sweep.csv`,
/// `meta.json` and `eim_diag.csv` into `config.out_dir`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutcome> {
    match config.precision {
        Precision::Single => run_sweep_in::<f32>(config),
        Precision::Double => run_sweep_in::<f64>(config),
        Precision::Extended => run_sweep_in::<DoubleWord>(config),
    }
}

/// Sweep with perturbed snapshots; `xi` defaults to `1e-6`.
pub fn run_perturb(config: &ExperimentConfig) -> Result<SweepOutcome> {
    let mut c = config.clone();
    c.xi.get_or_insert(1e-6);
    run_sweep(&c)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EimDiagOutcome {
    pub variant: EimVariant,
    pub stop: EimStop,
    pub sigma_hat: usize,
    pub csv: PathBuf,
}

/// EIM of the sampled `X` function for every variant; one
/// `eim_diag_<variant>.csv` each plus `eim_meta.json`. Double precision.
pub fn run_eim_diag(config: &ExperimentConfig) -> Result<Vec<EimDiagOutcome>> {
    config.validate()?;
    let (problem, grid) = config.problem.build()?;
    let (rb, _) = greedy_build(&problem, &grid, &config.greedy)?;
    let table = xtable(&rb, &grid)?;
    let sigma_hat = config.sigma_hat.min(table.sigma()).min(grid.len());
    std::fs::create_dir_all(&config.out_dir)?;
    let mut out = vec![];
    for v in EimVariant::ALL {
        let st = eim_offline(&table, &EimConfig { variant: v, sigma_hat, residual_tol: None })?;
        let csv = config.out_dir.join(format!("eim_diag_{}.csv", v.name()));
        st.write_diagnostics(&csv)?;
        out.push(EimDiagOutcome { variant: v, stop: st.stop, sigma_hat: st.sigma_hat(), csv });
    }
    let meta = json!({
        "version": OUTPUT_VERSION,
        "problem": problem.name,
        "n_hat": rb.n_hat(),
        "sigma": table.sigma(),
        "sigma_hat_requested": sigma_hat,
        "cond_norm": "spectral",
        "runs": out,
    });
    let f = std::io::BufWriter::new(std::fs::File::create(config.out_dir.join("eim_meta.json"))?);
    serde_json::to_writer_pretty(f, &meta)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub method: Method,
    pub calls: usize,
    pub median_ns: f64,
}

/// Same problem family with truth dimension `n`.
pub fn resize(spec: &ProblemSpec, n: usize) -> Result<ProblemSpec> {
    Ok(match spec {
        ProblemSpec::Diffusion1d(s) => {
            let mut s = s.clone();
            // interior nodes = elements - 1
            s.mesh_h = 1.0 / (n + 1) as f64;
            ProblemSpec::Diffusion1d(s)
        }
        ProblemSpec::Synthetic(s) => {
            let mut s = s.clone();
            s.n = n;
            ProblemSpec::Synthetic(s)
        }
    })
}

fn median_ns(mut f: impl FnMut(usize) -> Result<()>, calls: usize) -> Result<f64> {
    let mut samples = Vec::with_capacity(calls);
    for i in 0..calls {
        let t = Instant::now();
        f(i)?;
        samples.push(t.elapsed().as_nanos() as f64);
    }
    samples.sort_by(f64::total_cmp);
    let h = calls / 2;
    Ok(if calls % 2 == 1 { samples[h] } else { 0.5 * (samples[h - 1] + samples[h]) })
}

/// Median online time per requested estimator for each truth size, double
/// precision, cycling over the trial grid. E3 is skipped when the grid is
/// smaller than `sigma`.
pub fn bench_online(config: &ExperimentConfig, n_values: &[usize], calls: usize) -> Result<Vec<BenchRow>> {
    config.validate()?;
    if n_values.len() < 2 {
        return Err(RbError::InvalidConfig("bench needs at least two truth sizes".into()));
    }
    if calls == 0 {
        return Err(RbError::InvalidConfig("bench needs at least one call".into()));
    }
    let mut rows = vec![];
    for &n in n_values {
        let mut c = config.clone();
        c.problem = resize(&config.problem, n)?;
        c.xi = None;
        let (problem, grid) = c.problem.build()?;
        let (rb, _) = greedy_build(&problem, &grid, &c.greedy)?;
        if c.wants(Method::E3) && grid.len() < sigma_of(rb.m()) {
            c.estimators.retain(|&m| m != Method::E3);
        }
        let view = ProblemView::<f64>::new(&problem)?;
        let e3s = if c.wants(Method::E3) { Some(build_e3(&rb, &view, &grid, c.e3_seed)?) } else { None };
        let e4s = if c.wants(Method::E4) { Some(build_e4(&rb, &view, &grid, c.sigma_hat, c.eim_variant)?) } else { None };
        let rb = &rb;
        let pts = grid.points();
        let at = |i: usize| pts[i % pts.len()];
        for &m in &c.estimators {
            let t = match m {
                Method::E1 => median_ns(|i| estimators::e1(rb, &view, at(i)).map(drop), calls)?,
                Method::E2 => median_ns(|i| estimators::e2(rb, at(i)).map(drop), calls)?,
                Method::E3 => {
                    let st = e3s.as_ref().expect("built above");
                    median_ns(|i| estimators::e3(st, rb, at(i)).map(drop), calls)?
                }
                Method::E4 => {
                    let st = e4s.as_ref().expect("built above");
                    median_ns(|i| e4_at(st, rb, i % pts.len()).map(drop), calls)?
                }
            };
            info!("n = {n}, {}: median {t:.0} ns", m.name());
            rows.push(BenchRow { n: problem.dim(), method: m, calls, median_ns: t });
        }
    }
    Ok(rows)
}

/// Columns: `n, method, calls, median_ns`.
pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["n", "method", "calls", "median_ns"])?;
    for r in rows {
        w.write_record([r.n.to_string(), r.method.name().to_string(), r.calls.to_string(), format!("{:.16e}", r.median_ns)])?;
    }
    w.flush()?;
    Ok(())
}

/// `median(n_hi) / median(n_lo)` for one estimator.
pub fn bench_ratio(rows: &[BenchRow], method: Method, n_lo: usize, n_hi: usize) -> Option<f64> {
    let find = |n: usize| rows.iter().find(|r| r.method == method && r.n == n).map(|r| r.median_ns);
    Some(find(n_hi)? / find(n_lo)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::truth::Diffusion1DSpec;

    fn small(out: &Path) -> ExperimentConfig {
        ExperimentConfig {
            problem: ProblemSpec::Diffusion1d(Diffusion1DSpec { mesh_h: 0.05, param_box: [1.0, 100.0], trial_points: 40 }),
            greedy: GreedyConfig { nmax: 2, ..Default::default() },
            sigma_hat: 5,
            out_dir: out.to_path_buf(),
            ..Default::default()
        }
    }

    #[test]
    fn sweep_writes_all_files_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(dir.path());
        let a = run_sweep(&c).unwrap();
        let first = std::fs::read(&a.sweep_csv).unwrap();
        assert_eq!(a.rows.len(), 40);
        assert!(a.eim_diag_csv.exists() && a.meta_json.exists());
        let b = run_sweep(&c).unwrap();
        assert_eq!(first, std::fs::read(&b.sweep_csv).unwrap());
        let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(&a.meta_json).unwrap()).unwrap();
        assert_eq!(meta["sigma"], 25);
        assert_eq!(meta["n_hat"], 2);
    }

    #[test]
    fn e3_on_too_small_grid_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(dir.path());
        c.greedy.nmax = 4;
        c.estimators = vec![Method::E3];
        assert!(matches!(run_sweep(&c), Err(RbError::InvalidConfig(_))));
    }

    #[test]
    fn unrequested_columns_stay_empty() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(dir.path());
        c.estimators = vec![Method::E2];
        c.true_error = false;
        let out = run_sweep(&c).unwrap();
        let text = std::fs::read_to_string(&out.sweep_csv).unwrap();
        let line = text.lines().nth(1).unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 7);
        assert!(cells[1].is_empty() && !cells[2].is_empty() && cells[5].is_empty());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = small(Path::new("x"));
        let s = serde_json::to_string(&c).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
        let partial: ExperimentConfig = serde_json::from_str(r#"{"problem": {"problem": "synthetic", "n": 12}}"#).unwrap();
        assert!(matches!(partial.problem, ProblemSpec::Synthetic(ref s) if s.n == 12 && s.seed == 7));
    }

    #[test]
    fn resize_targets_interior_dimension() {
        let spec = resize(&ProblemSpec::Diffusion1d(Diffusion1DSpec::default()), 200).unwrap();
        let (p, _) = spec.build().unwrap();
        assert_eq!(p.dim(), 200);
    }
}
