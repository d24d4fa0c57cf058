//! Discrete empirical interpolation of a vector-valued function of the
//! parameter, `mu -> X(mu) in C^sigma`, sampled on the trial grid.
//!
//! After `k` steps the interpolant is `I^k X(mu) = sum_r lambda_r(mu) X(mu_r)`
//! with `B^k lambda(mu) = q^k(mu)` and `B_ij = q_i(mu_j)`. Each `q_k` is the
//! row `p_k` of the current residual, normalized so that `q_k(mu_k) = 1`.
//!
//! The classical residual is `X - I^k X`. The stabilized residual applies
//! the rank-one corrections one level at a time,
//! `w <- w - I^i w` for `i = 1..k`, in the way reorthogonalized
//! Gram-Schmidt re-projects against each previous vector. Since the cascade
//! levels do not depend on `k`, the offline stage updates the residual table
//! with a single level per step.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{RbError, Result};
use crate::linalg::{cond2, Lu, Mat};
use crate::scalar::{Cplx, Real, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EimVariant {
    Classical,
    /// Classical residual, but parameters already in the node set are skipped.
    UniqueChoice,
    Stabilized,
    /// Classical residual refined by as many trailing cascade levels as
    /// needed to keep `|det B - 1| <= 1e-6`.
    Hybrid,
}

impl EimVariant {
    pub const ALL: [EimVariant; 4] = [EimVariant::Classical, EimVariant::UniqueChoice, EimVariant::Stabilized, EimVariant::Hybrid];

    pub fn name(self) -> &'static str {
        match self {
            EimVariant::Classical => "classical",
            EimVariant::UniqueChoice => "unique_choice",
            EimVariant::Stabilized => "stabilized",
            EimVariant::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for EimVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classical" => Ok(EimVariant::Classical),
            "unique_choice" => Ok(EimVariant::UniqueChoice),
            "stabilized" => Ok(EimVariant::Stabilized),
            "hybrid" => Ok(EimVariant::Hybrid),
            other => Err(format!("unknown EIM variant '{other}'")),
        }
    }
}

/// Pivot magnitude below which `B^k` is declared singular.
pub const BREAKDOWN_PIVOT: f64 = 1e-14;
/// Determinant tolerance of the hybrid variant.
pub const HYBRID_DET_TOL: f64 = 1e-6;

/// Values `X_p(mu_m)`, `sigma` rows by `M` grid columns, column-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XTable<T> {
    sigma: usize,
    cols: Vec<Vec<Cplx<T>>>,
}

impl<T: Real> XTable<T> {
    pub fn from_columns(cols: Vec<Vec<Cplx<T>>>) -> Result<Self> {
        let sigma = cols.first().map_or(0, Vec::len);
        if sigma == 0 || cols.iter().any(|c| c.len() != sigma) {
            return Err(RbError::Dimension("ragged or empty interpolation table".into()));
        }
        Ok(XTable { sigma, cols })
    }

    pub fn sigma(&self) -> usize {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn column(&self, m: usize) -> &[Cplx<T>] {
        &self.cols[m]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EimConfig {
    pub variant: EimVariant,
    /// Maximum number of interpolation points.
    pub sigma_hat: usize,
    /// Stop once the greedy residual falls below this fraction of the first one.
    pub residual_tol: Option<f64>,
}

impl Default for EimConfig {
    fn default() -> Self {
        EimConfig { variant: EimVariant::Stabilized, sigma_hat: 23, residual_tol: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EimStep {
    pub k: usize,
    pub det: C64,
    /// Spectral condition number of `B^k`.
    pub cond: f64,
    /// `|residual|` at the point that produced `q_k`.
    pub residual: f64,
    /// Cascade levels used (hybrid variant; `k - 1` for stabilized, 1 otherwise).
    pub levels: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EimStop {
    Size,
    ResidualTolerance,
    ZeroResidual,
    /// Adding the point at this step made `B` singular; it was dropped.
    Breakdown { step: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EimState<T> {
    pub variant: EimVariant,
    pub p_indices: Vec<usize>,
    /// Grid positions of the interpolation parameters.
    pub mu_indices: Vec<usize>,
    /// `q_table[k][m] = q_{k+1}(mu_m)`.
    pub q_table: Vec<Vec<Cplx<T>>>,
    pub b: Mat<T>,
    /// `inverses[k - 1] = (B^k)^{-1}`, applied online as a matvec.
    inverses: Vec<Mat<T>>,
    pub history: Vec<EimStep>,
    pub stop: EimStop,
}

fn argmax<T: Real>(table: &[Vec<Cplx<T>>], skip: &[usize]) -> Option<(usize, usize, T)> {
    let sigma = table.first().map_or(0, Vec::len);
    let mut best: Option<(usize, usize, T)> = None;
    for p in 0..sigma {
        for (m, col) in table.iter().enumerate() {
            if skip.contains(&m) {
                continue;
            }
            let v = col[p].norm_sqr();
            if best.map_or(true, |(_, _, b)| v > b) {
                best = Some((p, m, v));
            }
        }
    }
    best
}

impl<T: Real> EimState<T> {
    pub fn sigma_hat(&self) -> usize {
        self.p_indices.len()
    }

    pub fn grid_len(&self) -> usize {
        self.q_table.first().map_or(0, Vec::len)
    }

    /// `lambda^k(mu_m)` from the leading `k x k` block.
    pub fn lambda(&self, k: usize, m: usize) -> Vec<Cplx<T>> {
        let q: Vec<Cplx<T>> = (0..k).map(|i| self.q_table[i][m]).collect();
        self.inverses[k - 1].mul_vec(&q)
    }

    /// `lambda^sigma_hat(mu_m)`, the online system.
    pub fn online(&self, m: usize) -> Result<Vec<Cplx<T>>> {
        if m >= self.grid_len() {
            return Err(RbError::Dimension(format!("grid index {m} out of range")));
        }
        if self.sigma_hat() == 0 {
            return Ok(vec![]);
        }
        Ok(self.lambda(self.sigma_hat(), m))
    }

    /// `I^k X(mu_m)`.
    pub fn interpolate(&self, table: &XTable<T>, k: usize, m: usize) -> Vec<Cplx<T>> {
        let lam = self.lambda(k, m);
        let mut out = vec![Cplx::zero(); table.sigma()];
        for (r, l) in lam.iter().enumerate() {
            crate::linalg::axpy(&mut out, *l, table.column(self.mu_indices[r]));
        }
        out
    }

    /// `X(mu_m) - I^k X(mu_m)`.
    pub fn classical_residual(&self, table: &XTable<T>, k: usize, m: usize) -> Vec<Cplx<T>> {
        let i = self.interpolate(table, k, m);
        table.column(m).iter().zip(&i).map(|(&a, &b)| a - b).collect()
    }

    /// Cascade `w <- w - I^i w`, `i = 1..k`, evaluated on the nodes and `mu_m`.
    pub fn stabilized_residual(&self, table: &XTable<T>, k: usize, m: usize) -> Vec<Cplx<T>> {
        let mut cols: Vec<usize> = self.mu_indices[..k].to_vec();
        cols.push(m);
        let mut cur: Vec<Vec<Cplx<T>>> = cols.iter().map(|&c| table.column(c).to_vec()).collect();
        for i in 1..=k {
            cur = self.apply_level(&cur, &cols, i);
        }
        cur.pop().expect("point column")
    }

    /// One cascade level on columns whose first `i` entries are the nodes.
    fn apply_level(&self, cur: &[Vec<Cplx<T>>], cols: &[usize], i: usize) -> Vec<Vec<Cplx<T>>> {
        cur.iter()
            .zip(cols)
            .map(|(w, &c)| {
                let lam = self.lambda(i, c);
                let mut out = w.clone();
                for (r, l) in lam.iter().enumerate() {
                    crate::linalg::axpy(&mut out, -*l, &cur[r]);
                }
                out
            })
            .collect()
    }

    /// Per-step diagnostics as CSV: `k, det, det_im, cond, residual, levels`.
    pub fn write_diagnostics(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "det", "det_im", "cond", "residual", "levels"])?;
        for s in &self.history {
            w.write_record([
                s.k.to_string(),
                format!("{:.16e}", s.det.re),
                format!("{:.16e}", s.det.im),
                format!("{:.16e}", s.cond),
                format!("{:.16e}", s.residual),
                s.levels.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Residual `w - I^i w` on every grid column, given `lambda^i` for every column.
fn level_on_table<T: Real>(w: &[Vec<Cplx<T>>], nodes: &[usize], lambdas: &[Vec<Cplx<T>>]) -> Vec<Vec<Cplx<T>>> {
    let node_cols: Vec<&Vec<Cplx<T>>> = nodes.iter().map(|&n| &w[n]).collect();
    w.iter()
        .zip(lambdas)
        .map(|(col, lam)| {
            let mut out = col.clone();
            for (l, nc) in lam.iter().zip(&node_cols) {
                if !l.is_zero() {
                    crate::linalg::axpy(&mut out, -*l, nc);
                }
            }
            out
        })
        .collect()
}

struct Builder<'a, T> {
    table: &'a XTable<T>,
    state: EimState<T>,
    /// `lambda_tables[i - 1][m] = lambda^i(mu_m)`.
    lambda_tables: Vec<Vec<Vec<Cplx<T>>>>,
}

impl<'a, T: Real> Builder<'a, T> {
    fn k(&self) -> usize {
        self.state.p_indices.len()
    }

    fn classical(&self, upto: usize) -> Vec<Vec<Cplx<T>>> {
        if upto == 0 {
            return self.table.cols.clone();
        }
        level_on_table(&self.table.cols, &self.state.mu_indices[..upto], &self.lambda_tables[upto - 1])
    }

    /// Classical residual of rank `a`, then cascade levels `a+1..k`.
    fn hybrid(&self, a: usize) -> Vec<Vec<Cplx<T>>> {
        let mut w = self.classical(a);
        for i in a + 1..=self.k() {
            w = level_on_table(&w, &self.state.mu_indices[..i], &self.lambda_tables[i - 1]);
        }
        w
    }

    /// Candidate `q`, extended `B` and its factorization for residual `r`.
    fn candidate(&self, r: &[Vec<Cplx<T>>], p: usize, m: usize) -> (Vec<Cplx<T>>, Mat<T>, Result<Lu<T>>) {
        let piv = r[m][p];
        let mut q: Vec<Cplx<T>> = r.iter().map(|col| col[p] / piv).collect();
        q[m] = Cplx::one();
        let k = self.k();
        let mut b = Mat::zeros(k + 1, k + 1);
        for i in 0..k {
            for j in 0..k {
                b[(i, j)] = self.state.b[(i, j)];
            }
            b[(i, k)] = self.state.q_table[i][m];
        }
        for j in 0..k {
            b[(k, j)] = q[self.state.mu_indices[j]];
        }
        b[(k, k)] = Cplx::one();
        let lu = Lu::new(&b);
        (q, b, lu)
    }
}

/// Greedy offline stage over a sampled table.
pub fn eim_offline<T: Real>(table: &XTable<T>, config: &EimConfig) -> Result<EimState<T>> {
    let sigma_hat = config.sigma_hat;
    if sigma_hat == 0 || sigma_hat > table.sigma() || sigma_hat > table.len() {
        return Err(RbError::InvalidConfig(format!(
            "sigma_hat = {sigma_hat} must lie in 1..=min(sigma = {}, |grid| = {})",
            table.sigma(),
            table.len()
        )));
    }
    let variant = config.variant;
    let mut bld = Builder {
        table,
        state: EimState {
            variant,
            p_indices: vec![],
            mu_indices: vec![],
            q_table: vec![],
            b: Mat::zeros(0, 0),
            inverses: vec![],
            history: vec![],
            stop: EimStop::Size,
        },
        lambda_tables: vec![],
    };
    // running residual for the stabilized variant
    let mut stab = table.cols.clone();
    let mut first: Option<f64> = None;
    while bld.k() < sigma_hat {
        let k = bld.k();
        let skip: Vec<usize> = if variant == EimVariant::UniqueChoice { bld.state.mu_indices.clone() } else { vec![] };

        let mut levels = 1;
        let (r, p, m, val, q, b, lu) = loop {
            let r = match variant {
                EimVariant::Classical | EimVariant::UniqueChoice => bld.classical(k),
                EimVariant::Stabilized => std::mem::take(&mut stab),
                EimVariant::Hybrid => bld.hybrid(k.saturating_sub(levels - 1).max(1).min(k)),
            };
            let Some((p, m, val)) = argmax(&r, &skip) else {
                bld.state.stop = EimStop::ZeroResidual;
                return Ok(bld.state);
            };
            let (q, b, lu) = if val > T::zero() { bld.candidate(&r, p, m) } else { (vec![], Mat::zeros(0, 0), Err(RbError::Singular("zero residual".into()))) };
            if variant == EimVariant::Hybrid && val > T::zero() && k > 1 && levels < k {
                let ok = match &lu {
                    Ok(f) => (f.det().to_c64() - C64::one()).abs() <= HYBRID_DET_TOL,
                    Err(_) => false,
                };
                if !ok {
                    levels = (levels * 2).min(k);
                    continue;
                }
            }
            break (r, p, m, val, q, b, lu);
        };
        if val == T::zero() {
            bld.state.stop = EimStop::ZeroResidual;
            break;
        }
        let magnitude = val.to_f64().sqrt();
        let first_mag = *first.get_or_insert(magnitude);
        if let Some(tol) = config.residual_tol {
            if k > 0 && magnitude <= tol * first_mag {
                bld.state.stop = EimStop::ResidualTolerance;
                break;
            }
        }
        let lu = match lu {
            Ok(lu) if lu.min_pivot().to_f64() >= BREAKDOWN_PIVOT => lu,
            _ => {
                bld.state.stop = EimStop::Breakdown { step: k + 1 };
                break;
            }
        };
        let det = lu.det().to_c64();
        let cond = cond2(&b.cast::<f64>());
        let st = &mut bld.state;
        st.p_indices.push(p);
        st.mu_indices.push(m);
        st.q_table.push(q);
        st.b = b;
        st.inverses.push(lu.inverse());
        let used_levels = match variant {
            EimVariant::Stabilized => k.max(1),
            EimVariant::Hybrid => levels.min(k.max(1)),
            _ => 1,
        };
        st.history.push(EimStep { k: k + 1, det, cond, residual: magnitude, levels: used_levels });
        let lam: Vec<Vec<Cplx<T>>> = (0..table.len()).map(|mm| bld.state.lambda(k + 1, mm)).collect();
        bld.lambda_tables.push(lam);
        if variant == EimVariant::Stabilized && bld.k() < sigma_hat {
            stab = level_on_table(&r, &bld.state.mu_indices, &bld.lambda_tables[k]);
        }
    }
    Ok(bld.state)
}
