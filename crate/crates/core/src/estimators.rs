//! Four evaluations of the residual-based bound
//! `beta_lb(mu)^-1 ||A(mu) u_hat - B||_{V'}`:
//!
//! * E1 assembles the Riesz representer of the residual (length `N`);
//! * E2 expands its squared norm into `delta^2 + 2 Re(s^T x) + x^H S x`;
//! * E3 rewrites that quadratic form as a linear form in
//!   `X(mu) = (1, x, conj x, conj(x_I) x_J)` and solves a `sigma x sigma`
//!   system against `sigma` nodal values;
//! * E4 interpolates the same linear form with the EIM.
//!
//! Every route clamps a negative radicand to zero and keeps the raw value.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::eim::{eim_offline, EimConfig, EimState, EimVariant, XTable};
use crate::error::{RbError, Result};
use crate::linalg::{cond2, Mat, RankRevealingLu};
use crate::problem::{ParameterGrid, ProblemView};
use crate::rb::ReducedBasis;
use crate::scalar::{Cplx, Precision, Real, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    E1,
    E2,
    E3,
    E4,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::E1, Method::E2, Method::E3, Method::E4];

    pub fn name(self) -> &'static str {
        match self {
            Method::E1 => "e1",
            Method::E2 => "e2",
            Method::E3 => "e3",
            Method::E4 => "e4",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_uppercase().as_str() {
            "E1" => Ok(Method::E1),
            "E2" => Ok(Method::E2),
            "E3" => Ok(Method::E3),
            "E4" => Ok(Method::E4),
            _ => Err(format!("unknown estimator '{s}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub mu: f64,
    /// `beta_lb^-1 sqrt(max(raw_radicand, 0))`.
    pub value: f64,
    pub method: Method,
    pub raw_radicand: f64,
    pub precision: Precision,
}

fn report<T: Real>(mu: f64, method: Method, radicand: T, beta: f64) -> BoundReport {
    let clamped = if radicand > T::zero() { radicand } else { T::zero() };
    BoundReport {
        mu,
        value: (clamped.sqrt() / T::from_f64(beta)).to_f64(),
        method,
        raw_radicand: radicand.to_f64(),
        precision: T::PRECISION,
    }
}

/// `sigma = 1 + 2m + m^2` with `m = d n_hat`.
pub fn sigma_of(m: usize) -> usize {
    1 + 2 * m + m * m
}

/// `(1, x_I, conj x_I, conj(x_I) x_J)`, the quadratic block row-major in `(I, J)`.
#[derive(Clone, Debug, PartialEq)]
pub struct XVector<T> {
    pub m: usize,
    pub entries: Vec<Cplx<T>>,
}

impl<T: Real> XVector<T> {
    pub fn from_x(x: &[Cplx<T>]) -> Self {
        let m = x.len();
        let mut e = Vec::with_capacity(sigma_of(m));
        e.push(Cplx::one());
        e.extend_from_slice(x);
        e.extend(x.iter().map(|z| z.conj()));
        for xi in x {
            let c = xi.conj();
            e.extend(x.iter().map(|&xj| c * xj));
        }
        XVector { m, entries: e }
    }

    pub fn sigma(&self) -> usize {
        self.entries.len()
    }
}

pub fn build_xvector<T: Real>(rb: &ReducedBasis<T>, mu: f64) -> Result<XVector<T>> {
    let gamma = rb.reduced_solve(mu)?;
    Ok(XVector::from_x(&rb.x_vector(mu, &gamma)))
}

/// Coefficients `t` with `sum_p t_p X_p = delta^2 + 2 Re(s^T x) + x^H S x`.
pub fn linear_form<T: Real>(rb: &ReducedBasis<T>) -> Vec<Cplx<T>> {
    let s = rb.s_vec();
    let sm = rb.s_mat();
    let mut t = Vec::with_capacity(sigma_of(s.len()));
    t.push(Cplx::real(rb.delta * rb.delta));
    t.extend_from_slice(s);
    t.extend(s.iter().map(|z| z.conj()));
    t.extend_from_slice(sm.as_slice());
    t
}

/// `||G(mu) u_hat||_V^2` through the assembled residual representer.
pub fn e1_radicand<T: Real>(rb: &ReducedBasis<T>, view: &ProblemView<'_, T>, mu: f64) -> Result<T> {
    let gamma = rb.reduced_solve(mu)?;
    let r = rb.residual_riesz(mu, &gamma);
    Ok(view.inner(&r, &r).re)
}

pub fn e1<T: Real>(rb: &ReducedBasis<T>, view: &ProblemView<'_, T>, mu: f64) -> Result<BoundReport> {
    Ok(report(mu, Method::E1, e1_radicand(rb, view, mu)?, rb.beta_lb.eval(mu)))
}

/// `delta^2 + 2 Re(s^T x) + x^H S x` for a given `x`.
pub fn quadratic_form<T: Real>(rb: &ReducedBasis<T>, x: &[Cplx<T>]) -> T {
    let s = rb.s_vec();
    let sm = rb.s_mat();
    let lin: Cplx<T> = s.iter().zip(x).map(|(&a, &b)| a * b).sum();
    let mut quad = Cplx::zero();
    for (i, xi) in x.iter().enumerate() {
        let row: Cplx<T> = sm.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum();
        quad += xi.conj() * row;
    }
    rb.delta * rb.delta + (T::one() + T::one()) * lin.re + quad.re
}

pub fn e2<T: Real>(rb: &ReducedBasis<T>, mu: f64) -> Result<BoundReport> {
    let gamma = rb.reduced_solve(mu)?;
    let x = rb.x_vector(mu, &gamma);
    Ok(report(mu, Method::E2, quadratic_form(rb, &x), rb.beta_lb.eval(mu)))
}

/// Nodal system of E3.
#[derive(Clone, Debug)]
pub struct E3State<T> {
    /// Grid positions of the nodes, in draw order.
    pub nodes: Vec<usize>,
    pub mus: Vec<f64>,
    pub t: Mat<T>,
    t_lu: RankRevealingLu<T>,
    /// `V_r = ||G(mu_r) u_hat||_V^2`.
    pub v: Vec<T>,
    /// Spectral condition number of `T` (infinite when singular).
    pub cond_estimate: f64,
    /// Numerical rank kept by the factorization.
    pub rank: usize,
    pub seed: u64,
}

/// Pivot threshold relative to `max |T_pr|`. Pivots below it end the
/// factorization; E3 is disabled when none survives.
///
/// For real data `x_I = conj(x_I)` and `conj(x_I) x_J = conj(x_J) x_I`, so
/// `T` has exactly repeated rows. The system `T lambda = X(mu)` stays
/// consistent and the basic solution still satisfies
/// `sum_r lambda_r V_r = t . X(mu)` because `V = T^T t`.
pub const E3_PIVOT_RATIO: f64 = 1e-30;

pub fn build_e3<T: Real>(rb: &ReducedBasis<T>, view: &ProblemView<'_, T>, grid: &ParameterGrid, seed: u64) -> Result<E3State<T>> {
    let sigma = sigma_of(rb.m());
    if grid.len() < sigma {
        return Err(RbError::InvalidConfig(format!("E3 needs at least sigma = {sigma} trial points, grid has {}", grid.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = sample(&mut rng, grid.len(), sigma).into_vec();
    let mus: Vec<f64> = nodes.iter().map(|&i| grid.points()[i]).collect();
    let cols: Vec<Vec<Cplx<T>>> = mus.iter().map(|&mu| Ok(build_xvector(rb, mu)?.entries)).collect::<Result<_>>()?;
    let t = Mat::from_columns(&cols);
    let t_lu = RankRevealingLu::new(&t, E3_PIVOT_RATIO)?;
    if t_lu.rank() == 0 {
        return Err(RbError::Disabled("E3 node matrix has no pivot above threshold".into()));
    }
    let v = mus.par_iter().map(|&mu| e1_radicand(rb, view, mu)).collect::<Result<Vec<T>>>()?;
    let cond_estimate = cond2(&t.cast::<f64>());
    let rank = t_lu.rank();
    Ok(E3State { nodes, mus, t, t_lu, v, cond_estimate, rank, seed })
}

fn nodal_sum<T: Real>(lambda: &[Cplx<T>], v: &[T]) -> T {
    lambda.iter().zip(v).map(|(l, &vr)| l.re * vr).sum()
}

pub fn e3<T: Real>(st: &E3State<T>, rb: &ReducedBasis<T>, mu: f64) -> Result<BoundReport> {
    let x = build_xvector(rb, mu)?;
    if x.sigma() != st.t.rows() {
        return Err(RbError::Dimension(format!("E3 state built for sigma = {}, basis has {}", st.t.rows(), x.sigma())));
    }
    let lambda = st.t_lu.solve(&x.entries);
    Ok(report(mu, Method::E3, nodal_sum(&lambda, &st.v), rb.beta_lb.eval(mu)))
}

/// `X(mu)` sampled on every grid point.
pub fn xtable<T: Real>(rb: &ReducedBasis<T>, grid: &ParameterGrid) -> Result<XTable<T>> {
    let cols = grid.points().par_iter().map(|&mu| Ok(build_xvector(rb, mu)?.entries)).collect::<Result<Vec<_>>>()?;
    XTable::from_columns(cols)
}

/// EIM of `X` over the grid plus nodal values `V_r` at the interpolation points.
#[derive(Clone, Debug)]
pub struct E4State<T> {
    pub eim: EimState<T>,
    pub table: XTable<T>,
    pub v: Vec<T>,
    pub grid: ParameterGrid,
}

pub fn build_e4<T: Real>(
    rb: &ReducedBasis<T>,
    view: &ProblemView<'_, T>,
    grid: &ParameterGrid,
    sigma_hat: usize,
    variant: EimVariant,
) -> Result<E4State<T>> {
    let table = xtable(rb, grid)?;
    let sigma_hat = sigma_hat.min(table.sigma()).min(grid.len());
    let eim = eim_offline(&table, &EimConfig { variant, sigma_hat, residual_tol: None })?;
    let v = eim
        .mu_indices
        .par_iter()
        .map(|&m| e1_radicand(rb, view, grid.points()[m]))
        .collect::<Result<Vec<T>>>()?;
    Ok(E4State { eim, table, v, grid: grid.clone() })
}

/// E4 at grid position `m`.
pub fn e4_at<T: Real>(st: &E4State<T>, rb: &ReducedBasis<T>, m: usize) -> Result<BoundReport> {
    let mu = *st.grid.points().get(m).ok_or_else(|| RbError::Dimension(format!("grid index {m}")))?;
    let lambda = st.eim.online(m)?;
    Ok(report(mu, Method::E4, nodal_sum(&lambda, &st.v), rb.beta_lb.eval(mu)))
}

/// E4 at a parameter; only trial-grid parameters are supported.
pub fn e4<T: Real>(st: &E4State<T>, rb: &ReducedBasis<T>, mu: f64) -> Result<BoundReport> {
    let m = st.grid.index_of(mu).ok_or(RbError::OffGrid { mu })?;
    e4_at(st, rb, m)
}

/// Primal/dual coupling terms for the corrected output.
#[derive(Clone, Debug)]
pub struct GoalOriented<T> {
    /// `cross_a[k][(j, i)] = w_j^H A_k u_i`.
    cross_a: Vec<Mat<T>>,
    /// `cross_b[j] = w_j^H B`.
    cross_b: Vec<Cplx<T>>,
}

impl<T: Real> GoalOriented<T> {
    pub fn new(primal: &ReducedBasis<T>, dual: &ReducedBasis<T>, view: &ProblemView<'_, T>) -> Result<Self> {
        if view.problem.output.is_none() || primal.q_ui.is_none() {
            return Err(RbError::MissingOutput);
        }
        let w: Vec<Vec<Cplx<T>>> = dual.snapshots.iter().map(|s| crate::linalg::cast_vec(s)).collect();
        let u: Vec<Vec<Cplx<T>>> = primal.snapshots.iter().map(|s| crate::linalg::cast_vec(s)).collect();
        let cross_a = (0..primal.d())
            .map(|k| {
                let au: Vec<Vec<Cplx<T>>> = u.iter().map(|ui| view.apply_term(k, ui)).collect();
                Mat::from_fn(w.len(), u.len(), |j, i| crate::linalg::dotc(&w[j], &au[i]))
            })
            .collect();
        let b = view.rhs();
        let cross_b = w.iter().map(|wj| crate::linalg::dotc(wj, &b)).collect();
        Ok(GoalOriented { cross_a, cross_b })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalReport {
    pub mu: f64,
    /// `beta_dual^-1 ||primal residual||_{V'} ||dual residual||_{V'}`.
    pub value: f64,
    pub route: Method,
    /// `Q(u_hat) + z_hat^H (B - A u_hat)`.
    pub corrected_output: C64,
    pub primal_radicand: f64,
    pub dual_radicand: f64,
}

/// Goal-oriented bound and corrected output through route E1 or E2.
pub fn goal_oriented<T: Real>(
    primal: &ReducedBasis<T>,
    dual: &ReducedBasis<T>,
    coupling: &GoalOriented<T>,
    view: &ProblemView<'_, T>,
    mu: f64,
    route: Method,
) -> Result<GoalReport> {
    let gamma = primal.reduced_solve(mu)?;
    let zeta = dual.reduced_solve(mu)?;
    let (rp, rd) = match route {
        Method::E1 => {
            let rp = primal.residual_riesz(mu, &gamma);
            let rd = dual.residual_riesz(mu, &zeta);
            (view.inner(&rp, &rp).re, view.inner(&rd, &rd).re)
        }
        Method::E2 => (
            quadratic_form(primal, &primal.x_vector(mu, &gamma)),
            quadratic_form(dual, &dual.x_vector(mu, &zeta)),
        ),
        other => {
            return Err(RbError::InvalidConfig(format!("goal-oriented bound supports E1 and E2, not {other:?}")));
        }
    };
    let clamp = |v: T| if v > T::zero() { v } else { T::zero() };
    let beta_d = T::from_f64(dual.beta_lb.eval(mu));
    let value = (clamp(rp).sqrt() * clamp(rd).sqrt() / beta_d).to_f64();

    let q_ui = primal.q_ui.as_ref().ok_or(RbError::MissingOutput)?;
    let q_uhat: Cplx<T> = q_ui.iter().zip(&gamma).map(|(&a, &b)| a * b).sum();
    let alphas = primal.x_vector(mu, &[Cplx::one()]);
    let mut correction = Cplx::zero();
    for (j, z) in zeta.iter().enumerate() {
        let mut r = coupling.cross_b[j];
        for (k, a) in alphas.iter().enumerate() {
            let row: Cplx<T> = coupling.cross_a[k].row(j).iter().zip(&gamma).map(|(&c, &g)| c * g).sum();
            r -= *a * row;
        }
        correction += z.conj() * r;
    }
    Ok(GoalReport {
        mu,
        value,
        route,
        corrected_output: (q_uhat + correction).to_c64(),
        primal_radicand: rp.to_f64(),
        dual_radicand: rd.to_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rb::{greedy_build, GreedyConfig};
    use crate::truth::{build_diffusion1d, Diffusion1DSpec};

    #[test]
    fn xvector_layout() {
        let x = XVector::from_x(&[C64::one()]);
        assert_eq!(x.entries, vec![C64::one(); 4]);
        let x = XVector::from_x(&[C64::new(1.0, 2.0), C64::new(0.0, -1.0)]);
        assert_eq!(x.sigma(), 9);
        assert_eq!(x.entries[0], C64::one());
        assert_eq!(x.entries[3], C64::new(1.0, -2.0));
        assert_eq!(x.entries[5 + 1], C64::new(1.0, -2.0) * C64::new(0.0, -1.0));
        assert_eq!(sigma_of(14), 225);
    }

    #[test]
    fn empty_basis_gives_delta() {
        let p = build_diffusion1d(&Diffusion1DSpec { mesh_h: 0.05, ..Default::default() }).unwrap();
        let view = p.view::<f64>().unwrap();
        let rb = ReducedBasis::empty(&view).unwrap();
        let r = e2(&rb, 3.0).unwrap();
        assert!((r.value - rb.delta).abs() <= 1e-15 * rb.delta);
        assert_eq!(r.method, Method::E2);
    }

    #[test]
    fn report_clamps_negative_radicand() {
        let r = report(1.0, Method::E2, -1e-20f64, 2.0);
        assert_eq!(r.value, 0.0);
        assert_eq!(r.raw_radicand, -1e-20);
    }

    #[test]
    fn e4_rejects_off_grid_parameter() {
        let p = build_diffusion1d(&Diffusion1DSpec { mesh_h: 0.05, ..Default::default() }).unwrap();
        let g = ParameterGrid::uniform(1.0, 100.0, 30).unwrap();
        let (rb, _) = greedy_build(&p, &g, &GreedyConfig { nmax: 1, ..Default::default() }).unwrap();
        let view = p.view::<f64>().unwrap();
        let st = build_e4(&rb, &view, &g, 3, EimVariant::Stabilized).unwrap();
        assert!(matches!(e4(&st, &rb, 2.5), Err(RbError::OffGrid { .. })));
        assert!(e4(&st, &rb, g.points()[4]).is_ok());
    }

    #[test]
    fn e3_at_node_reproduces_nodal_value() {
        let p = build_diffusion1d(&Diffusion1DSpec { mesh_h: 0.05, ..Default::default() }).unwrap();
        let g = ParameterGrid::uniform(1.0, 100.0, 30).unwrap();
        let view = p.view::<f64>().unwrap();
        let mut rb = ReducedBasis::empty(&view).unwrap();
        let u = crate::truth::solve_truth(&p, 50.0).unwrap();
        let q = crate::rb::orthonormalize(&view, &[], u).unwrap().unwrap();
        // d = 2 gives sigma = 9 with one snapshot
        rb.extend(&view, q, 50.0).unwrap();
        let st = build_e3(&rb, &view, &g, 3).unwrap();
        assert_eq!(st.nodes.len(), 9);
        assert!(st.v.iter().all(|&v| v >= 0.0));
        for (r, &mu) in st.mus.iter().enumerate() {
            let rep = e3(&st, &rb, mu).unwrap();
            assert!((rep.raw_radicand - st.v[r]).abs() <= 1e-6 * st.v[r].abs().max(1e-20), "node {r}");
        }
    }
}
