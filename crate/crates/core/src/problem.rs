//! Parametrized affine problems `A(mu) U = B` and the Riesz machinery of
//! the truth inner product.
//!
//! Matrices are stored once in double precision. A [`ProblemView`] borrows
//! them and carries a Cholesky factor of the Gram matrix in the working
//! format `T`, so every Riesz solve and norm is carried out in `T`.

use serde::{Deserialize, Serialize};

use crate::error::{RbError, Result};
use crate::linalg::{dotc, singular_values, Cholesky, Mat};
use crate::scalar::{Cplx, Real, C64};

/// Scalar coefficient function `alpha_k(mu)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coefficient {
    Constant { re: f64, im: f64 },
    Mu,
    InverseMu,
}

impl Coefficient {
    pub const ONE: Coefficient = Coefficient::Constant { re: 1.0, im: 0.0 };

    /// Evaluates in the working format; `1/mu` is divided in `T`.
    pub fn eval<T: Real>(&self, mu: f64) -> Cplx<T> {
        match *self {
            Coefficient::Constant { re, im } => Cplx::new(T::from_f64(re), T::from_f64(im)),
            Coefficient::Mu => Cplx::real(T::from_f64(mu)),
            Coefficient::InverseMu => Cplx::real(T::one() / T::from_f64(mu)),
        }
    }

    pub fn conj(&self) -> Coefficient {
        match *self {
            Coefficient::Constant { re, im } => Coefficient::Constant { re, im: -im },
            other => other,
        }
    }
}

/// `A(mu) = sum_k alpha_k(mu) A_k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineOperator {
    alphas: Vec<Coefficient>,
    terms: Vec<Mat<f64>>,
}

impl AffineOperator {
    pub fn new(alphas: Vec<Coefficient>, terms: Vec<Mat<f64>>) -> Result<Self> {
        if alphas.len() != terms.len() || terms.is_empty() {
            return Err(RbError::Dimension(format!(
                "{} coefficients for {} terms",
                alphas.len(),
                terms.len()
            )));
        }
        let n = terms[0].rows();
        for (k, t) in terms.iter().enumerate() {
            if t.rows() != n || t.cols() != n {
                return Err(RbError::Dimension(format!(
                    "term {k} is {}x{}, expected {n}x{n}",
                    t.rows(),
                    t.cols()
                )));
            }
        }
        Ok(AffineOperator { alphas, terms })
    }

    /// Number of affine terms `d`.
    pub fn d(&self) -> usize {
        self.terms.len()
    }

    pub fn dim(&self) -> usize {
        self.terms[0].rows()
    }

    pub fn alphas(&self) -> &[Coefficient] {
        &self.alphas
    }

    pub fn terms(&self) -> &[Mat<f64>] {
        &self.terms
    }

    pub fn coefficients<T: Real>(&self, mu: f64) -> Vec<Cplx<T>> {
        self.alphas.iter().map(|a| a.eval(mu)).collect()
    }

    /// Term-by-term sum in the working format.
    pub fn assemble<T: Real>(&self, mu: f64) -> Mat<T> {
        let n = self.dim();
        let mut out = Mat::<T>::zeros(n, n);
        for (alpha, term) in self.alphas.iter().zip(&self.terms) {
            let a: Cplx<T> = alpha.eval(mu);
            for i in 0..n {
                for (j, z) in term.row(i).iter().enumerate() {
                    if !z.is_zero() {
                        out[(i, j)] += a * Cplx::from_c64(*z);
                    }
                }
            }
        }
        out
    }

    /// Operator of the adjoint problem: `A_k^H` with conjugated coefficients.
    pub fn adjoint(&self) -> AffineOperator {
        AffineOperator {
            alphas: self.alphas.iter().map(Coefficient::conj).collect(),
            terms: self.terms.iter().map(Mat::conj_transpose).collect(),
        }
    }
}

/// Closed-form lower bound of the inf-sup constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BetaBound {
    Constant { value: f64 },
}

impl BetaBound {
    pub fn eval(&self, _mu: f64) -> f64 {
        match *self {
            BetaBound::Constant { value } => value,
        }
    }

    /// Minimum over a set of parameters.
    pub fn min_over(&self, mus: &[f64]) -> f64 {
        mus.iter().map(|&m| self.eval(m)).fold(f64::INFINITY, f64::min)
    }
}

/// Truth problem: Gram matrix of the V inner product, affine operator,
/// load vector and optional output functional `Q(U) = sum_j q_j U_j`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TruthProblem {
    pub name: String,
    pub gram: Mat<f64>,
    pub op: AffineOperator,
    pub rhs: Vec<C64>,
    pub output: Option<Vec<C64>>,
    pub beta_lb: BetaBound,
    pub beta_lb_dual: BetaBound,
    pub param_box: (f64, f64),
}

impl TruthProblem {
    pub fn new(
        name: impl Into<String>,
        gram: Mat<f64>,
        op: AffineOperator,
        rhs: Vec<C64>,
        output: Option<Vec<C64>>,
        beta_lb: BetaBound,
        param_box: (f64, f64),
    ) -> Result<Self> {
        let n = op.dim();
        if gram.rows() != n || gram.cols() != n {
            return Err(RbError::Dimension(format!("gram is {}x{}, operator {n}", gram.rows(), gram.cols())));
        }
        if rhs.len() != n || output.as_ref().is_some_and(|q| q.len() != n) {
            return Err(RbError::Dimension("rhs/output length differs from operator".into()));
        }
        for i in 0..n {
            for j in 0..=i {
                if (gram[(i, j)] - gram[(j, i)].conj()).abs() > 1e-14 * gram[(i, i)].abs() {
                    return Err(RbError::NotPositiveDefinite(format!("gram not Hermitian at ({i},{j})")));
                }
            }
        }
        if !(param_box.0 <= param_box.1) {
            return Err(RbError::InvalidConfig(format!("empty parameter box {param_box:?}")));
        }
        Ok(TruthProblem {
            name: name.into(),
            gram,
            op,
            rhs,
            output,
            beta_lb,
            beta_lb_dual: beta_lb,
            param_box,
        })
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn d(&self) -> usize {
        self.op.d()
    }

    /// Output functional applied to a truth vector.
    pub fn output_value(&self, u: &[C64]) -> Result<C64> {
        let q = self.output.as_ref().ok_or(RbError::MissingOutput)?;
        Ok(q.iter().zip(u).map(|(&a, &b)| a * b).sum())
    }

    /// The dual problem `A(mu)^H Z = conj(q)`.
    ///
    /// With `Z` solving it, `Q(U) - Q(U_h) = Z^H (B - A U_h)` for any `U_h`.
    pub fn dual(&self) -> Result<TruthProblem> {
        let q = self.output.as_ref().ok_or(RbError::MissingOutput)?;
        Ok(TruthProblem {
            name: format!("{}-dual", self.name),
            gram: self.gram.clone(),
            op: self.op.adjoint(),
            rhs: q.iter().map(|z| z.conj()).collect(),
            output: None,
            beta_lb: self.beta_lb_dual,
            beta_lb_dual: self.beta_lb,
            param_box: self.param_box,
        })
    }

    pub fn view<T: Real>(&self) -> Result<ProblemView<'_, T>> {
        ProblemView::new(self)
    }

    /// `||Q||_{V'}`.
    pub fn output_norm(&self) -> Result<f64> {
        let q = self.output.as_ref().ok_or(RbError::MissingOutput)?;
        let conj_q: Vec<C64> = q.iter().map(|z| z.conj()).collect();
        self.view::<f64>()?.dual_norm(&conj_q)
    }

    /// Smallest singular value of `L^-1 A(mu) L^-H` with `G = L L^H`.
    pub fn beta_direct(&self, mu: f64) -> Result<f64> {
        let chol = Cholesky::new(&self.gram)?;
        let a = self.op.assemble::<f64>(mu);
        let n = self.dim();
        // X = L^-1 A, column by column
        let x_cols: Vec<Vec<C64>> = (0..n)
            .map(|j| chol.forward(&(0..n).map(|i| a[(i, j)]).collect::<Vec<_>>()))
            .collect();
        let x = Mat::from_columns(&x_cols);
        // Y^H = L^-1 X^H
        let xh = x.conj_transpose();
        let y_cols: Vec<Vec<C64>> = (0..n)
            .map(|j| chol.forward(&(0..n).map(|i| xh[(i, j)]).collect::<Vec<_>>()))
            .collect();
        let yh = Mat::from_columns(&y_cols);
        Ok(singular_values(&yh).last().copied().unwrap_or(0.0))
    }
}

/// Working-precision handle on a truth problem.
pub struct ProblemView<'a, T> {
    pub problem: &'a TruthProblem,
    chol: Cholesky<T>,
}

impl<'a, T: Real> ProblemView<'a, T> {
    pub fn new(problem: &'a TruthProblem) -> Result<Self> {
        let chol = Cholesky::new(&problem.gram.cast::<T>())?;
        Ok(ProblemView { problem, chol })
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    /// `w` with `G w = f`, i.e. `(w, v)_V = v^H f` for all `v`.
    pub fn riesz(&self, f: &[Cplx<T>]) -> Result<Vec<Cplx<T>>> {
        if f.len() != self.dim() {
            return Err(RbError::Dimension(format!("functional of length {}", f.len())));
        }
        Ok(self.chol.solve(f))
    }

    /// `(a, b)_V = a^H G b`.
    pub fn inner(&self, a: &[Cplx<T>], b: &[Cplx<T>]) -> Cplx<T> {
        dotc(a, &self.problem.gram.mul_vec_as(b))
    }

    pub fn v_norm(&self, u: &[Cplx<T>]) -> Result<T> {
        let q = self.inner(u, u);
        let tol = T::from_f64(1e-12);
        if q.im.abs() > tol * q.re.abs() && q.im.abs() > T::from_f64(f64::MIN_POSITIVE) {
            return Err(RbError::NotPositiveDefinite(format!(
                "u^H G u has imaginary part {:e} against real part {:e}",
                q.im.to_f64(),
                q.re.to_f64()
            )));
        }
        if q.re < T::zero() {
            return Err(RbError::NotPositiveDefinite(format!("u^H G u = {:e}", q.re.to_f64())));
        }
        Ok(q.re.sqrt())
    }

    /// `||f||_{V'} = sqrt(f^H G^-1 f)`.
    pub fn dual_norm(&self, f: &[Cplx<T>]) -> Result<T> {
        let w = self.riesz(f)?;
        self.v_norm(&w)
    }

    /// `A_k u` in the working format.
    pub fn apply_term(&self, k: usize, u: &[Cplx<T>]) -> Vec<Cplx<T>> {
        self.problem.op.terms()[k].mul_vec_as(u)
    }

    pub fn rhs(&self) -> Vec<Cplx<T>> {
        self.problem.rhs.iter().map(|&z| Cplx::from_c64(z)).collect()
    }
}

/// Ordered, duplicate-free set of trial parameters inside a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterGrid {
    points: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl ParameterGrid {
    pub fn new(points: Vec<f64>, lo: f64, hi: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(RbError::InvalidConfig("empty parameter grid".into()));
        }
        if points.iter().any(|&p| !(p >= lo && p <= hi)) {
            return Err(RbError::InvalidConfig(format!("grid point outside [{lo}, {hi}]")));
        }
        let mut sorted = points.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(RbError::InvalidConfig("duplicate grid point".into()));
        }
        Ok(ParameterGrid { points, lo, hi })
    }

    /// `n` equispaced points including both ends.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        let pts = match n {
            0 => vec![],
            1 => vec![0.5 * (lo + hi)],
            _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
        };
        Self::new(pts, lo, hi)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Index of the point nearest the box centre, first on ties.
    pub fn centre_index(&self) -> usize {
        let c = 0.5 * (self.lo + self.hi);
        let mut best = 0;
        for (i, &p) in self.points.iter().enumerate() {
            if (p - c).abs() < (self.points[best] - c).abs() {
                best = i;
            }
        }
        best
    }

    /// Position of `mu` in the grid; matches up to 4 ulps relative.
    pub fn index_of(&self, mu: f64) -> Option<usize> {
        self.points
            .iter()
            .position(|&p| p == mu || (p - mu).abs() <= 4.0 * f64::EPSILON * p.abs().max(mu.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::scalar::DoubleWord;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn identity_problem(n: usize) -> TruthProblem {
        let op = AffineOperator::new(vec![Coefficient::ONE], vec![Mat::identity(n)]).unwrap();
        TruthProblem::new("id", Mat::identity(n), op, vec![C64::one(); n], None, BetaBound::Constant { value: 1.0 }, (0.0, 1.0))
            .unwrap()
    }

    #[test]
    fn assemble_identity() {
        let p = identity_problem(3);
        assert_eq!(p.op.assemble::<f64>(0.3), Mat::identity(3));
    }

    #[test]
    fn assemble_drops_vanishing_coefficient() {
        let a1 = Mat::from_fn(2, 2, |i, j| c((i + 2 * j) as f64, 0.0));
        let a2 = Mat::from_fn(2, 2, |i, j| c(1.0, (i * j) as f64));
        let op = AffineOperator::new(vec![Coefficient::ONE, Coefficient::Mu], vec![a1.clone(), a2]).unwrap();
        assert_eq!(op.assemble::<f64>(0.0), a1);
    }

    #[test]
    fn mismatched_terms_rejected() {
        let r = AffineOperator::new(vec![Coefficient::ONE, Coefficient::Mu], vec![Mat::identity(2), Mat::identity(3)]);
        assert!(matches!(r, Err(RbError::Dimension(_))));
    }

    #[test]
    fn identity_gram_riesz_is_identity() {
        let p = identity_problem(4);
        let v = p.view::<f64>().unwrap();
        let f = vec![c(1.0, 2.0), c(-3.0, 0.5), c(0.0, 0.0), c(7.0, -1.0)];
        assert_eq!(v.riesz(&f).unwrap(), f);
        assert_eq!(v.riesz(&[C64::zero(); 4]).unwrap(), vec![C64::zero(); 4]);
    }

    #[test]
    fn v_norm_cases() {
        let p = identity_problem(2);
        let v = p.view::<f64>().unwrap();
        assert_eq!(v.v_norm(&[C64::zero(); 2]).unwrap(), 0.0);
        assert_eq!(v.v_norm(&[c(3.0, 0.0), c(4.0, 0.0)]).unwrap(), 5.0);
    }

    #[test]
    fn v_norm_matches_cholesky_oracle() {
        let b = Mat::from_fn(5, 5, |i, j| c(((i * 3 + j) % 7) as f64 - 3.0, ((i + j) % 3) as f64 * 0.5));
        let g = b.conj_transpose().matmul(&b);
        let mut gram = g.clone();
        for i in 0..5 {
            gram[(i, i)] += c(1.0, 0.0);
        }
        let op = AffineOperator::new(vec![Coefficient::ONE], vec![gram.clone()]).unwrap();
        let p = TruthProblem::new("g", gram.clone(), op, vec![C64::one(); 5], None, BetaBound::Constant { value: 1.0 }, (0.0, 1.0))
            .unwrap();
        let u: Vec<C64> = (0..5).map(|i| c((i as f64).cos(), (i as f64 * 0.7).sin())).collect();
        let l = Cholesky::new(&gram).unwrap();
        let lh_u = l.factor().conj_transpose().mul_vec(&u);
        let oracle = crate::linalg::norm2(&lh_u);
        let got = p.view::<f64>().unwrap().v_norm(&u).unwrap();
        assert!((got - oracle).abs() <= 1e-13 * oracle);
        let got_dw = p.view::<DoubleWord>().unwrap().v_norm(&crate::linalg::cast_vec(&u)).unwrap();
        assert!((got_dw.to_f64() - oracle).abs() <= 1e-13 * oracle);
    }

    #[test]
    fn beta_direct_of_gram_is_one() {
        let b = Mat::from_fn(4, 4, |i, j| if i == j { c(2.0 + i as f64, 0.0) } else { c(0.1, 0.2 * (i as f64 - j as f64)) });
        let gram = b.conj_transpose().matmul(&b);
        let op = AffineOperator::new(vec![Coefficient::ONE], vec![gram.clone()]).unwrap();
        let p = TruthProblem::new("g", gram, op, vec![C64::one(); 4], None, BetaBound::Constant { value: 1.0 }, (0.0, 1.0))
            .unwrap();
        assert!((p.beta_direct(0.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_mu_coefficient() {
        assert_eq!(Coefficient::InverseMu.eval::<f64>(4.0), c(0.25, 0.0));
        assert_eq!(Coefficient::Constant { re: 1.0, im: 2.0 }.conj(), Coefficient::Constant { re: 1.0, im: -2.0 });
    }

    #[test]
    fn grid_centre_and_lookup() {
        let g = ParameterGrid::uniform(1.0, 100.0, 1000).unwrap();
        assert_eq!(g.points()[0], 1.0);
        assert_eq!(g.points()[999], 100.0);
        let i = g.centre_index();
        assert!(i == 499 || i == 500);
        assert_eq!(g.index_of(g.points()[17]), Some(17));
        assert_eq!(g.index_of(50.5), None);
        assert!(ParameterGrid::new(vec![1.0, 1.0], 0.0, 2.0).is_err());
        assert!(ParameterGrid::new(vec![3.0], 0.0, 2.0).is_err());
    }

    #[test]
    fn dual_needs_output() {
        assert!(matches!(identity_problem(2).dual(), Err(RbError::MissingOutput)));
    }
}
