//! The two shipped truth problems and the direct truth solver.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{RbError, Result};
use crate::linalg::{singular_values, Lu, Mat};
use crate::problem::{AffineOperator, BetaBound, Coefficient, ParameterGrid, TruthProblem};
use crate::scalar::{Cplx, Precision, Real, C64};

/// `-u'' + mu u = 1` on (0, 1), homogeneous Dirichlet, P1 elements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Diffusion1DSpec {
    pub mesh_h: f64,
    pub param_box: [f64; 2],
    pub trial_points: usize,
}

impl Default for Diffusion1DSpec {
    fn default() -> Self {
        Diffusion1DSpec { mesh_h: 0.005, param_box: [1.0, 100.0], trial_points: 1000 }
    }
}

impl Diffusion1DSpec {
    /// Number of elements `1/h`.
    pub fn elements(&self) -> Result<usize> {
        let inv = 1.0 / self.mesh_h;
        let m = inv.round();
        if !(self.mesh_h > 0.0) || m < 2.0 || (inv - m).abs() > 1e-9 * m {
            return Err(RbError::InvalidConfig(format!("mesh size {} does not divide 1", self.mesh_h)));
        }
        Ok(m as usize)
    }
}

/// Closed-form solution of the diffusion problem.
pub fn analytic_solution(mu: f64, x: f64) -> f64 {
    let r = mu.sqrt();
    -(1.0 / mu) * ((r * x).cosh() - 1.0) + ((r.cosh() - 1.0) / (mu * r.sinh())) * (r * x).sinh()
}

pub fn build_diffusion1d(spec: &Diffusion1DSpec) -> Result<TruthProblem> {
    let m = spec.elements()?;
    let h = 1.0 / m as f64;
    let n = m - 1;
    let band = |diag: f64, off: f64| {
        Mat::from_fn(n, n, |i, j| match i.abs_diff(j) {
            0 => C64::real(diag),
            1 => C64::real(off),
            _ => C64::zero(),
        })
    };
    let stiffness = band(2.0 / h, -1.0 / h);
    let mass = band(2.0 * h / 3.0, h / 6.0);
    let mut gram = stiffness.clone();
    gram.axpy(C64::one(), &mass);
    let rhs = vec![C64::real(h); n];
    let op = AffineOperator::new(vec![Coefficient::ONE, Coefficient::Mu], vec![stiffness, mass])?;
    TruthProblem::new(
        "diffusion1d",
        gram,
        op,
        rhs.clone(),
        Some(rhs),
        BetaBound::Constant { value: 1.0 },
        (spec.param_box[0], spec.param_box[1]),
    )
}

/// Dense complex problem with Euclidean inner product and a planted
/// smallest singular value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticComplexSpec {
    pub n: usize,
    /// Leading terms of the coefficient pattern `(1, 1/mu, mu)`.
    pub d: usize,
    pub planted_beta: f64,
    pub seed: u64,
    pub param_box: [f64; 2],
    pub trial_points: usize,
}

impl Default for SyntheticComplexSpec {
    fn default() -> Self {
        SyntheticComplexSpec {
            n: 80,
            d: 3,
            planted_beta: 1e-6,
            seed: 7,
            param_box: [0.9, 1.1],
            trial_points: 100,
        }
    }
}

fn complex_gaussian(rng: &mut ChaCha8Rng) -> C64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(s * re, s * im)
}

fn random_unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    let v: Vec<C64> = (0..n).map(|_| complex_gaussian(rng)).collect();
    let nrm = crate::linalg::norm2(&v);
    v.into_iter().map(|z| z.scale(1.0 / nrm)).collect()
}

/// Coordinate 0 carries the planted value `beta` through the first term
/// and is decoupled from the rest. The remaining `(n-1)`-block is a random
/// perturbation of the identity, rescaled so its smallest singular value is
/// at least 1 on every trial point; hence `beta(mu) = planted_beta`.
pub fn build_synthetic(spec: &SyntheticComplexSpec) -> Result<TruthProblem> {
    let SyntheticComplexSpec { n, d, planted_beta, seed, .. } = *spec;
    if !(1..=3).contains(&d) || n < 2 * d || n < 2 {
        return Err(RbError::InvalidConfig(format!("synthetic problem needs 1 <= d <= 3, n >= 2d (n={n}, d={d})")));
    }
    if !(planted_beta > 0.0 && planted_beta <= 1.0) {
        return Err(RbError::InvalidConfig(format!("planted beta {planted_beta} outside (0, 1]")));
    }
    let grid = ParameterGrid::uniform(spec.param_box[0], spec.param_box[1], spec.trial_points)?;
    let alphas = [Coefficient::ONE, Coefficient::InverseMu, Coefficient::Mu][..d].to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 0.25 / (2.0 * ((n - 1) as f64).sqrt());
    let mut blocks: Vec<Mat<f64>> = (0..d)
        .map(|k| {
            Mat::from_fn(n - 1, n - 1, |i, j| {
                let z = complex_gaussian(&mut rng).scale(scale);
                if k == 0 && i == j {
                    z + C64::one()
                } else {
                    z
                }
            })
        })
        .collect();
    let block_op = AffineOperator::new(alphas.clone(), blocks.clone())?;
    let smin = grid
        .points()
        .iter()
        .map(|&mu| singular_values(&block_op.assemble::<f64>(mu)).last().copied().unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min);
    if !(smin > 1e-8) {
        return Err(RbError::Singular(format!("synthetic block nearly singular on the grid (smin={smin:e})")));
    }
    if smin < 1.0 {
        for b in &mut blocks {
            *b = b.scaled(C64::real(1.0 / smin));
        }
    }
    let terms: Vec<Mat<f64>> = blocks
        .iter()
        .enumerate()
        .map(|(k, b)| {
            Mat::from_fn(n, n, |i, j| match (i, j) {
                (0, 0) if k == 0 => C64::real(planted_beta),
                (0, _) | (_, 0) => C64::zero(),
                _ => b[(i - 1, j - 1)],
            })
        })
        .collect();
    let rhs = random_unit_vector(&mut rng, n);
    let output = random_unit_vector(&mut rng, n);
    let op = AffineOperator::new(alphas, terms)?;
    let problem = TruthProblem::new(
        "synthetic",
        Mat::identity(n),
        op,
        rhs,
        Some(output),
        BetaBound::Constant { value: planted_beta },
        (spec.param_box[0], spec.param_box[1]),
    )?;
    for &mu in grid.points() {
        Lu::new(&problem.op.assemble::<f64>(mu))?;
    }
    Ok(problem)
}

/// Problem definition as read from JSON, tagged by `"problem"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum ProblemSpec {
    Diffusion1d(Diffusion1DSpec),
    Synthetic(SyntheticComplexSpec),
}

impl ProblemSpec {
    pub fn build(&self) -> Result<(TruthProblem, ParameterGrid)> {
        match self {
            ProblemSpec::Diffusion1d(s) => {
                let p = build_diffusion1d(s)?;
                let g = ParameterGrid::uniform(s.param_box[0], s.param_box[1], s.trial_points)?;
                Ok((p, g))
            }
            ProblemSpec::Synthetic(s) => {
                let p = build_synthetic(s)?;
                let g = ParameterGrid::uniform(s.param_box[0], s.param_box[1], s.trial_points)?;
                Ok((p, g))
            }
        }
    }
}

fn inf_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.abs()).fold(0.0, f64::max)
}

/// Normwise backward error `||A U - B|| / (||A|| ||U|| + ||B||)`, infinity norms.
pub fn backward_error(a: &Mat<f64>, u: &[C64], b: &[C64]) -> f64 {
    let au = a.mul_vec_as(u);
    let r: Vec<C64> = au.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let a_inf = (0..a.rows()).map(|i| a.row(i).iter().map(|z| z.abs()).sum::<f64>()).fold(0.0, f64::max);
    let denom = a_inf * inf_norm(u) + inf_norm(b);
    if denom == 0.0 {
        0.0
    } else {
        inf_norm(&r) / denom
    }
}

/// Dense LU solve of `A(mu) U = B` in double precision.
pub fn solve_truth(problem: &TruthProblem, mu: f64) -> Result<Vec<C64>> {
    solve_system(&problem.op.assemble::<f64>(mu), &problem.rhs)
}

/// Dense LU solve of `A(mu) U = B` carried out entirely in format `T`;
/// used as a reference solution when `T` is wider than double.
pub fn solve_truth_in<T: Real>(problem: &TruthProblem, mu: f64) -> Result<Vec<Cplx<T>>> {
    let rhs: Vec<Cplx<T>> = crate::linalg::cast_vec(&problem.rhs);
    let u = Lu::new(&problem.op.assemble::<T>(mu))?.solve(&rhs);
    if u.iter().any(|z| !z.is_finite()) {
        return Err(RbError::NonFinite("truth solution".into()));
    }
    Ok(u)
}

pub(crate) fn solve_system(a: &Mat<f64>, b: &[C64]) -> Result<Vec<C64>> {
    let u = Lu::new(a)?.solve(b);
    if u.iter().any(|z| !z.is_finite()) {
        return Err(RbError::NonFinite("truth solution".into()));
    }
    let eta = backward_error(a, &u, b);
    let limit = 100.0 * a.rows() as f64 * Precision::Double.eps();
    if eta > limit {
        return Err(RbError::Singular(format!("truth solve backward error {eta:e} exceeds {limit:e}")));
    }
    Ok(u)
}

/// Writes nodal values `(x, u(x))` including both boundary nodes.
pub fn write_solution_csv(path: &Path, u: &[C64]) -> Result<()> {
    let h = 1.0 / (u.len() + 1) as f64;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "u"])?;
    let mut row = |x: f64, v: f64| w.write_record([format!("{x:.16e}"), format!("{v:.16e}")]);
    row(0.0, 0.0)?;
    for (i, z) in u.iter().enumerate() {
        row((i + 1) as f64 * h, z.re)?;
    }
    row(1.0, 0.0)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_mesh_hand_assembly() {
        let p = build_diffusion1d(&Diffusion1DSpec { mesh_h: 0.5, ..Default::default() }).unwrap();
        assert_eq!(p.dim(), 1);
        assert!((p.op.terms()[0][(0, 0)].re - 4.0).abs() < 1e-15);
        assert!((p.op.terms()[1][(0, 0)].re - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.rhs[0].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn invalid_mesh_rejected() {
        assert!(build_diffusion1d(&Diffusion1DSpec { mesh_h: 0.3, ..Default::default() }).is_err());
        assert!(build_diffusion1d(&Diffusion1DSpec { mesh_h: -0.1, ..Default::default() }).is_err());
    }

    #[test]
    fn partition_of_unity_row_sums() {
        let spec = Diffusion1DSpec { mesh_h: 0.1, ..Default::default() };
        let p = build_diffusion1d(&spec).unwrap();
        let n = p.dim();
        let ones = vec![C64::one(); n];
        let k1 = p.op.terms()[0].mul_vec(&ones);
        let m1 = p.op.terms()[1].mul_vec(&ones);
        for i in 0..n {
            let boundary = i == 0 || i == n - 1;
            let expect_k = if boundary { 1.0 / 0.1 } else { 0.0 };
            assert!((k1[i].re - expect_k).abs() < 1e-12, "stiffness row {i}");
            if !boundary {
                assert!((m1[i].re - 0.1).abs() < 1e-14, "mass row {i}");
            }
        }
    }

    #[test]
    fn analytic_boundary_values() {
        for mu in [1.0, 10.0, 100.0] {
            assert!(analytic_solution(mu, 0.0).abs() < 1e-15);
            assert!(analytic_solution(mu, 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn analytic_midpoint_reference() {
        // 50-digit evaluation of the closed form at mu = 1, x = 1/2
        let reference = 0.113_181_116_029_926_09_f64;
        assert!((analytic_solution(1.0, 0.5) - reference).abs() < 1e-15);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let s = SyntheticComplexSpec { n: 12, ..Default::default() };
        let a = build_synthetic(&s).unwrap();
        let b = build_synthetic(&s).unwrap();
        assert_eq!(a.op.terms(), b.op.terms());
        assert_eq!(a.rhs, b.rhs);
    }

    #[test]
    fn synthetic_unscaled_planting() {
        let s = SyntheticComplexSpec { n: 4, d: 2, planted_beta: 1.0, ..Default::default() };
        let p = build_synthetic(&s).unwrap();
        let beta = p.beta_direct(1.0).unwrap();
        assert!((beta - 1.0).abs() <= 1e-2, "beta = {beta}");
    }

    #[test]
    fn synthetic_rejects_too_small_n() {
        let s = SyntheticComplexSpec { n: 5, d: 3, ..Default::default() };
        assert!(build_synthetic(&s).is_err());
    }

    #[test]
    fn spec_json_round_trip() {
        let json = r#"{"problem":"diffusion1d","mesh_h":0.01,"param_box":[1,10],"trial_points":20}"#;
        let spec: ProblemSpec = serde_json::from_str(json).unwrap();
        let (p, g) = spec.build().unwrap();
        assert_eq!(p.dim(), 99);
        assert_eq!(g.len(), 20);
        let s: ProblemSpec = serde_json::from_str(r#"{"problem":"synthetic","n":10}"#).unwrap();
        assert!(matches!(s, ProblemSpec::Synthetic(SyntheticComplexSpec { n: 10, d: 3, .. })));
    }
}
