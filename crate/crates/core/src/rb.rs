//! Reduced basis: greedy offline construction, Galerkin reduced solves and
//! the residual data `delta`, `s`, `S` consumed by the error bounds.
//!
//! Snapshots are truth solutions in double precision, V-orthonormalized by
//! two-pass Gram-Schmidt. All data derived from them (reduced blocks, Riesz
//! representers, `delta`, `s`, `S`) is computed in the working format `T`.
//!
//! Index convention: the residual of `u_hat = sum_i gamma_i u_i` has Riesz
//! representer `g00 + sum_I x_I g_I` with `g00 = -G^-1 B`,
//! `g_I = G^-1 A_k u_i`, `x_I = alpha_k gamma_i`, `I = i + n_hat * k`.

use std::path::Path;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eim::EimVariant;
use crate::error::{RbError, Result};
use crate::estimators::{self, Method};
use crate::linalg::{dotc, Lu, Mat};
use crate::problem::{BetaBound, Coefficient, ParameterGrid, ProblemView, TruthProblem};
use crate::scalar::{Cplx, Precision, Real, C64};
use crate::truth::solve_truth;

/// Offline state of a reduced basis with bound data in format `T`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReducedBasis<T> {
    pub alphas: Vec<Coefficient>,
    pub beta_lb: BetaBound,
    /// V-orthonormal snapshots, double precision.
    pub snapshots: Vec<Vec<C64>>,
    /// Selected parameters in selection order.
    pub selected: Vec<f64>,
    /// `a_red[k][(j, i)] = u_j^H A_k u_i`.
    pub a_red: Vec<Mat<T>>,
    /// `b_red[j] = u_j^H B`.
    pub b_red: Vec<Cplx<T>>,
    pub g00: Vec<Cplx<T>>,
    /// `gk_ui[k][i] = G^-1 A_k u_i`.
    pub gk_ui: Vec<Vec<Vec<Cplx<T>>>>,
    /// `ak_ui[k][i] = A_k u_i`.
    ak_ui: Vec<Vec<Vec<Cplx<T>>>>,
    /// `ggk_ui[k][i] = G g_I`, recomputed so `s`, `S` and `delta` are Gram
    /// products of the same stored vectors.
    ggk_ui: Vec<Vec<Vec<Cplx<T>>>>,
    pub delta: T,
    /// Flattened `s_I = (g00, g_I)_V`.
    s_flat: Vec<Cplx<T>>,
    /// Flattened `S_IJ = (g_I, g_J)_V`, Hermitian.
    s_mat: Mat<T>,
    /// `q^T u_i` when the problem has an output.
    pub q_ui: Option<Vec<Cplx<T>>>,
}

impl<T: Real> ReducedBasis<T> {
    /// Empty basis carrying `g00` and `delta`.
    pub fn empty(view: &ProblemView<'_, T>) -> Result<Self> {
        let p = view.problem;
        let minus_b: Vec<Cplx<T>> = view.rhs().into_iter().map(|z| -z).collect();
        let g00 = view.riesz(&minus_b)?;
        let delta = view.v_norm(&g00)?;
        Ok(ReducedBasis {
            alphas: p.op.alphas().to_vec(),
            beta_lb: p.beta_lb,
            snapshots: vec![],
            selected: vec![],
            a_red: vec![Mat::zeros(0, 0); p.d()],
            b_red: vec![],
            g00,
            gk_ui: vec![vec![]; p.d()],
            ak_ui: vec![vec![]; p.d()],
            ggk_ui: vec![vec![]; p.d()],
            delta,
            s_flat: vec![],
            s_mat: Mat::zeros(0, 0),
            q_ui: p.output.as_ref().map(|_| vec![]),
        })
    }

    /// Rebuilds all derived data in format `T` from given orthonormal snapshots.
    pub fn from_snapshots(view: &ProblemView<'_, T>, snapshots: &[Vec<C64>], selected: &[f64]) -> Result<Self> {
        let mut rb = Self::empty(view)?;
        for (u, &mu) in snapshots.iter().zip(selected) {
            rb.extend(view, u.clone(), mu)?;
        }
        Ok(rb)
    }

    /// Same snapshots, derived data recomputed in another format.
    pub fn rebuild<U: Real>(&self, problem: &TruthProblem) -> Result<ReducedBasis<U>> {
        let view = ProblemView::<U>::new(problem)?;
        ReducedBasis::from_snapshots(&view, &self.snapshots, &self.selected)
    }

    pub fn n_hat(&self) -> usize {
        self.snapshots.len()
    }

    pub fn d(&self) -> usize {
        self.alphas.len()
    }

    /// `d * n_hat`, the length of `x`.
    pub fn m(&self) -> usize {
        self.d() * self.n_hat()
    }

    pub fn s_vec(&self) -> &[Cplx<T>] {
        &self.s_flat
    }

    pub fn s_mat(&self) -> &Mat<T> {
        &self.s_mat
    }

    /// Appends an already V-orthonormalized snapshot and extends all blocks.
    pub fn extend(&mut self, view: &ProblemView<'_, T>, u: Vec<C64>, mu: f64) -> Result<()> {
        let d = self.d();
        let n_old = self.n_hat();
        let u_t: Vec<Cplx<T>> = u.iter().map(|&z| Cplx::from_c64(z)).collect();
        let au: Vec<Vec<Cplx<T>>> = (0..d).map(|k| view.apply_term(k, &u_t)).collect();
        let g: Vec<Vec<Cplx<T>>> = au.iter().map(|v| view.riesz(v)).collect::<Result<_>>()?;

        let old_t: Vec<Vec<Cplx<T>>> = self.snapshots.iter().map(|s| s.iter().map(|&z| Cplx::from_c64(z)).collect()).collect();
        for k in 0..d {
            let mut m = Mat::zeros(n_old + 1, n_old + 1);
            for j in 0..n_old {
                for i in 0..n_old {
                    m[(j, i)] = self.a_red[k][(j, i)];
                }
            }
            for (j, uj) in old_t.iter().enumerate() {
                m[(j, n_old)] = dotc(uj, &au[k]);
                m[(n_old, j)] = dotc(&u_t, &self.ak_ui[k][j]);
            }
            m[(n_old, n_old)] = dotc(&u_t, &au[k]);
            self.a_red[k] = m;
        }
        self.b_red.push(dotc(&u_t, &view.rhs()));
        if let (Some(q_ui), Some(q)) = (self.q_ui.as_mut(), view.problem.output.as_ref()) {
            q_ui.push(q.iter().zip(&u_t).map(|(&a, &b)| Cplx::<T>::from_c64(a) * b).sum());
        }
        for k in 0..d {
            self.ggk_ui[k].push(view.problem.gram.mul_vec_as(&g[k]));
            self.gk_ui[k].push(g[k].clone());
            self.ak_ui[k].push(au[k].clone());
        }
        self.snapshots.push(u);
        self.selected.push(mu);
        self.refresh_flat();
        Ok(())
    }

    /// Recomputes flattened `s` and `S`; `S` filled on the upper triangle
    /// and mirrored.
    fn refresh_flat(&mut self) {
        let n = self.n_hat();
        let m = self.m();
        let idx = |flat: usize| (flat / n, flat % n);
        self.s_flat = (0..m)
            .map(|i_flat| {
                let (k, i) = idx(i_flat);
                dotc(&self.g00, &self.ggk_ui[k][i])
            })
            .collect();
        let mut s = Mat::zeros(m, m);
        for a in 0..m {
            let (k, i) = idx(a);
            for b in a..m {
                let (l, j) = idx(b);
                let v = dotc(&self.gk_ui[k][i], &self.ggk_ui[l][j]);
                if a == b {
                    s[(a, a)] = Cplx::real(v.re);
                } else {
                    s[(a, b)] = v;
                    s[(b, a)] = v.conj();
                }
            }
        }
        self.s_mat = s;
    }

    /// Galerkin coefficients `gamma(mu)`.
    pub fn reduced_solve(&self, mu: f64) -> Result<Vec<Cplx<T>>> {
        let n = self.n_hat();
        if n == 0 {
            return Ok(vec![]);
        }
        let mut a = Mat::zeros(n, n);
        for (alpha, ak) in self.alphas.iter().zip(&self.a_red) {
            a.axpy(alpha.eval(mu), ak);
        }
        Ok(Lu::new(&a)?.solve(&self.b_red))
    }

    /// `x_I = alpha_k(mu) gamma_i(mu)`.
    pub fn x_vector(&self, mu: f64, gamma: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let mut x = Vec::with_capacity(self.m());
        for alpha in &self.alphas {
            let a: Cplx<T> = alpha.eval(mu);
            x.extend(gamma.iter().map(|&g| a * g));
        }
        x
    }

    /// Lifted reduced solution `sum_i gamma_i u_i` in double precision.
    pub fn lift(&self, gamma: &[Cplx<T>]) -> Vec<C64> {
        let n = self.snapshots.first().map_or(0, Vec::len);
        let mut out = vec![C64::zero(); n];
        for (g, u) in gamma.iter().zip(&self.snapshots) {
            crate::linalg::axpy(&mut out, g.to_c64(), u);
        }
        out
    }

    /// Riesz representer of the residual at `gamma`, length `N`.
    pub fn residual_riesz(&self, mu: f64, gamma: &[Cplx<T>]) -> Vec<Cplx<T>> {
        let mut r = self.g00.clone();
        let n = self.n_hat();
        for (k, alpha) in self.alphas.iter().enumerate() {
            let a: Cplx<T> = alpha.eval(mu);
            for i in 0..n {
                crate::linalg::axpy(&mut r, a * gamma[i], &self.gk_ui[k][i]);
            }
        }
        r
    }

    pub fn save_json(&self, path: &Path, precision: Precision) -> Result<()>
    where
        T: Serialize,
    {
        let bundle = Bundle { version: BUNDLE_VERSION, precision, state: self };
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, &bundle)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self>
    where
        T: for<'de> Deserialize<'de>,
    {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let bundle: OwnedBundle<T> = serde_json::from_reader(f)?;
        if bundle.version != BUNDLE_VERSION {
            return Err(RbError::InvalidConfig(format!("bundle version {} (expected {BUNDLE_VERSION})", bundle.version)));
        }
        if bundle.precision != T::PRECISION {
            return Err(RbError::InvalidConfig(format!(
                "bundle stored in {} precision, requested {}",
                bundle.precision.name(),
                T::PRECISION.name()
            )));
        }
        Ok(bundle.state)
    }
}

pub const BUNDLE_VERSION: u32 = 1;

#[derive(Serialize)]
struct Bundle<'a, T> {
    version: u32,
    precision: Precision,
    state: &'a ReducedBasis<T>,
}

#[derive(Deserialize)]
struct OwnedBundle<T> {
    version: u32,
    precision: Precision,
    state: ReducedBasis<T>,
}

/// Orthonormalizes `u` against `basis` in the V inner product, two passes.
/// Returns `None` when the remainder falls below `1e-12` of the input norm.
pub fn orthonormalize(view: &ProblemView<'_, f64>, basis: &[Vec<C64>], mut u: Vec<C64>) -> Result<Option<Vec<C64>>> {
    let norm0 = view.v_norm(&u)?;
    if norm0 == 0.0 {
        return Ok(None);
    }
    for _ in 0..2 {
        let gu = view.problem.gram.mul_vec_as(&u);
        let coeffs: Vec<C64> = basis.iter().map(|q| dotc(q, &gu)).collect();
        for (c, q) in coeffs.iter().zip(basis) {
            crate::linalg::axpy(&mut u, -*c, q);
        }
    }
    let nrm = view.v_norm(&u)?;
    if nrm < 1e-12 * norm0 {
        return Ok(None);
    }
    Ok(Some(u.into_iter().map(|z| z.scale(1.0 / nrm)).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    pub tol_rb: f64,
    pub nmax: usize,
    pub estimator: Method,
    /// Defaults to the grid point nearest the box centre.
    pub start_mu: Option<f64>,
    /// EIM size when the greedy is driven by E4.
    pub sigma_hat: usize,
    pub eim_variant: EimVariant,
    /// Node seed when the greedy is driven by E3.
    pub e3_seed: u64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            tol_rb: 1e-14,
            nmax: 7,
            estimator: Method::E1,
            start_mu: None,
            sigma_hat: 23,
            eim_variant: EimVariant::Stabilized,
            e3_seed: 0,
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_rb > 0.0) {
            return Err(RbError::InvalidConfig(format!("tol_rb must be positive, got {}", self.tol_rb)));
        }
        if self.nmax == 0 {
            return Err(RbError::InvalidConfig("nmax must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Tolerance,
    MaxSize,
    DependentSnapshot,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GreedyTrace {
    /// Max over the grid of the driving estimator after each basis size.
    pub max_estimates: Vec<f64>,
    pub selected_indices: Vec<usize>,
    pub stop: StopReason,
}

fn start_index(grid: &ParameterGrid, start_mu: Option<f64>) -> usize {
    match start_mu {
        None => grid.centre_index(),
        Some(mu) => grid.index_of(mu).unwrap_or_else(|| {
            let mut best = 0;
            for (i, &p) in grid.points().iter().enumerate() {
                if (p - mu).abs() < (grid.points()[best] - mu).abs() {
                    best = i;
                }
            }
            best
        }),
    }
}

/// Driving-estimator values over the whole grid.
pub fn estimator_sweep(
    rb: &ReducedBasis<f64>,
    view: &ProblemView<'_, f64>,
    grid: &ParameterGrid,
    config: &GreedyConfig,
) -> Result<Vec<f64>> {
    let values: Vec<Result<f64>> = match config.estimator {
        Method::E1 => grid.points().par_iter().map(|&mu| Ok(estimators::e1(rb, view, mu)?.value)).collect(),
        Method::E2 => grid.points().par_iter().map(|&mu| Ok(estimators::e2(rb, mu)?.value)).collect(),
        Method::E3 => {
            let e3s = estimators::build_e3(rb, view, grid, config.e3_seed)?;
            grid.points().par_iter().map(|&mu| Ok(estimators::e3(&e3s, rb, mu)?.value)).collect()
        }
        Method::E4 => {
            let e4s = estimators::build_e4(rb, view, grid, config.sigma_hat, config.eim_variant)?;
            (0..grid.len()).into_par_iter().map(|m| Ok(estimators::e4_at(&e4s, rb, m)?.value)).collect()
        }
    };
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(RbError::NonFinite(format!("estimator at mu = {}", grid.points()[i])));
    }
    Ok(values)
}

/// Greedy selection over `grid` driven by the configured estimator.
pub fn greedy_build(problem: &TruthProblem, grid: &ParameterGrid, config: &GreedyConfig) -> Result<(ReducedBasis<f64>, GreedyTrace)> {
    config.validate()?;
    let view = ProblemView::<f64>::new(problem)?;
    let mut rb = ReducedBasis::empty(&view)?;
    let mut next = start_index(grid, config.start_mu);
    let mut trace = GreedyTrace { max_estimates: vec![], selected_indices: vec![], stop: StopReason::MaxSize };
    loop {
        let mu = grid.points()[next];
        let u = solve_truth(problem, mu)?;
        let Some(q) = orthonormalize(&view, &rb.snapshots, u)? else {
            warn!("snapshot at mu = {mu} is linearly dependent on the basis; stopping at n_hat = {}", rb.n_hat());
            trace.stop = StopReason::DependentSnapshot;
            break;
        };
        rb.extend(&view, q, mu)?;
        trace.selected_indices.push(next);
        let values = estimator_sweep(&rb, &view, grid, config)?;
        let (arg, max) = values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        trace.max_estimates.push(max);
        info!("n_hat = {}, mu = {mu:.6}, max {:?} = {max:e}", rb.n_hat(), config.estimator);
        if max < config.tol_rb {
            trace.stop = StopReason::Tolerance;
            break;
        }
        if rb.n_hat() >= config.nmax {
            trace.stop = StopReason::MaxSize;
            break;
        }
        next = arg;
    }
    Ok((rb, trace))
}

/// Greedy for the dual problem `A(mu)^H Z = conj(q)`.
pub fn dual_greedy_build(problem: &TruthProblem, grid: &ParameterGrid, config: &GreedyConfig) -> Result<(ReducedBasis<f64>, GreedyTrace)> {
    greedy_build(&problem.dual()?, grid, config)
}

/// Replaces each snapshot by an approximate truth solution whose normalized
/// dual residual `||A U - B||_* / ||B||_*` equals `xi`, then
/// re-orthonormalizes and recomputes the bound data.
pub fn perturb_snapshots<S, T: Real>(rb: &ReducedBasis<S>, problem: &TruthProblem, xi: f64, seed: u64) -> Result<ReducedBasis<T>> {
    if !(xi > 0.0 && xi < 1.0) {
        return Err(RbError::InvalidConfig(format!("xi must lie in (0, 1), got {xi}")));
    }
    let view64 = ProblemView::<f64>::new(problem)?;
    let b_dual = view64.dual_norm(&problem.rhs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut basis: Vec<Vec<C64>> = vec![];
    let mut selected = vec![];
    for &mu in &rb.selected {
        let u = solve_truth(problem, mu)?;
        let e: Vec<C64> = (0..u.len())
            .map(|_| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = if problem.op.terms().iter().all(|t| t.as_slice().iter().all(|z| z.im == 0.0)) {
                    0.0
                } else {
                    StandardNormal.sample(&mut rng)
                };
                C64::new(re, im)
            })
            .collect();
        let ae = problem.op.assemble::<f64>(mu).mul_vec(&e);
        let scale = xi * b_dual / view64.dual_norm(&ae)?;
        let perturbed: Vec<C64> = u.iter().zip(&e).map(|(&a, &b)| a + b.scale(scale)).collect();
        match orthonormalize(&view64, &basis, perturbed)? {
            Some(q) => {
                basis.push(q);
                selected.push(mu);
            }
            None => warn!("perturbed snapshot at mu = {mu} is dependent; dropped"),
        }
    }
    let view = ProblemView::<T>::new(problem)?;
    ReducedBasis::from_snapshots(&view, &basis, &selected)
}
