//! Truth-problem oracles: element-by-element assembly, analytic convergence,
//! planted inf-sup constant and an independent second factorization.

use nalgebra::{Complex, DMatrix, DVector};

use rbcert::problem::ParameterGrid;
use rbcert::scalar::C64;
use rbcert::truth::{analytic_solution, build_diffusion1d, build_synthetic, solve_truth, Diffusion1DSpec, SyntheticComplexSpec};

/// Global matrices of `-u'' + mu u` with P1 elements, assembled element by
/// element over all nodes, then restricted to the interior.
fn element_assembly(elements: usize, mu: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let h = 1.0 / elements as f64;
    let nodes = elements + 1;
    let mut a = vec![vec![0.0; nodes]; nodes];
    let mut b = vec![0.0; nodes];
    let k_loc = [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]];
    let m_loc = [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]];
    for e in 0..elements {
        let dofs = [e, e + 1];
        for (r, &i) in dofs.iter().enumerate() {
            b[i] += h / 2.0;
            for (c, &j) in dofs.iter().enumerate() {
                a[i][j] += k_loc[r][c] + mu * m_loc[r][c];
            }
        }
    }
    let interior: Vec<Vec<f64>> = (1..nodes - 1).map(|i| a[i][1..nodes - 1].to_vec()).collect();
    (interior, b[1..nodes - 1].to_vec())
}

#[test]
fn assembly_matches_element_loop_at_mu_10() {
    // N = 5 interior nodes
    let p = build_diffusion1d(&Diffusion1DSpec { mesh_h: 1.0 / 6.0, ..Default::default() }).unwrap();
    assert_eq!(p.dim(), 5);
    let a = p.op.assemble::<f64>(10.0);
    let (oracle, load) = element_assembly(6, 10.0);
    for i in 0..5 {
        for j in 0..5 {
            assert!((a[(i, j)] - C64::real(oracle[i][j])).abs() <= 1e-14, "entry ({i}, {j})");
        }
        assert!((p.rhs[i] - C64::real(load[i])).abs() <= 1e-15);
    }
}

fn max_nodal_error(elements: usize, mu: f64) -> f64 {
    let p = build_diffusion1d(&Diffusion1DSpec { mesh_h: 1.0 / elements as f64, ..Default::default() }).unwrap();
    let u = solve_truth(&p, mu).unwrap();
    let h = 1.0 / elements as f64;
    u.iter().enumerate().map(|(i, z)| (z.re - analytic_solution(mu, (i + 1) as f64 * h)).abs()).fold(0.0, f64::max)
}

#[test]
fn nodal_error_converges_at_second_order() {
    let errs: Vec<f64> = [25usize, 50, 100, 200].iter().map(|&m| max_nodal_error(m, 1.0)).collect();
    for (w, m) in errs.windows(2).zip([25usize, 50, 100]) {
        let h = 1.0 / m as f64;
        let order = (w[0] / w[1]).log2();
        assert!((1.9..=2.1).contains(&order), "observed order {order} at h = {h}");
        assert!(w[0] <= 0.1 * h * h, "error {} at h = {h}", w[0]);
    }
}

#[test]
fn fine_mesh_matches_analytic_solution() {
    assert!(max_nodal_error(200, 1.0) <= 0.1 * 0.005f64.powi(2));
}

#[test]
fn diffusion_coercivity_at_least_one() {
    let p = build_diffusion1d(&Diffusion1DSpec { mesh_h: 0.05, ..Default::default() }).unwrap();
    for &mu in ParameterGrid::uniform(1.0, 100.0, 7).unwrap().points() {
        assert!(p.beta_direct(mu).unwrap() >= 1.0 - 1e-12, "mu = {mu}");
    }
}

#[test]
fn planted_beta_recovered_within_one_percent() {
    let p = build_synthetic(&SyntheticComplexSpec::default()).unwrap();
    let beta = p.beta_direct(1.0).unwrap();
    assert!((beta / 1e-6 - 1.0).abs() <= 1e-2, "beta = {beta:e}");
}

fn to_na(m: &rbcert::linalg::Mat<f64>) -> DMatrix<Complex<f64>> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| Complex::new(m[(i, j)].re, m[(i, j)].im))
}

#[test]
fn synthetic_solution_agrees_with_second_factorization() {
    let p = build_synthetic(&SyntheticComplexSpec::default()).unwrap();
    for mu in [0.9, 1.0, 1.1] {
        let a = p.op.assemble::<f64>(mu);
        let u = solve_truth(&p, mu).unwrap();
        let na = to_na(&a);
        let b = DVector::from_iterator(p.dim(), p.rhs.iter().map(|z| Complex::new(z.re, z.im)));
        let v = na.clone().full_piv_lu().solve(&b).expect("nonsingular");
        let sv = na.singular_values();
        let cond = sv.max() / sv.min();
        let diff: f64 = u.iter().zip(v.iter()).map(|(x, y)| (Complex::new(x.re, x.im) - y).norm_sqr()).sum::<f64>().sqrt();
        let rel = diff / v.norm();
        assert!(rel <= 1e-8 * cond, "mu = {mu}: rel = {rel:e}, cond = {cond:e}");
    }
}
