mod common;

use std::sync::{Arc, OnceLock};

use approx::assert_relative_eq;
use proptest::prelude::*;

use cmflow::bodies::RandomBodies;
use cmflow::elliptic::Linearization;
use cmflow::flow::{Flow, FlowConfig};
use cmflow::geometry::{curvature_matrix, quermassintegral, radii, steiner_point, SupportField};
use cmflow::sphere::{dot, DomainGrid, GridSpec, Point, ScalarField};
use cmflow::symfunc::{
    eigenvalues, in_gamma_k, matrix_in_gamma_k, sigma, sigma_matrix, sigma_partial, sigma_without, Spectrum, SymMatrix,
};
use cmflow::xi::solve_xi;

use common::{sigma_abs_scale, sigma_brute};

fn spectrum(max_dim: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_dim).prop_flat_map(|d| prop::collection::vec(-3.0..3.0f64, d))
}

fn sym_matrix(d: usize) -> impl Strategy<Value = SymMatrix> {
    prop::collection::vec(-2.0..2.0f64, d * d).prop_map(move |v| {
        let mut m = SymMatrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                m.set(i, j, 0.5 * (v[i * d + j] + v[j * d + i]));
            }
        }
        m
    })
}

fn grids() -> &'static [Arc<DomainGrid>; 3] {
    static G: OnceLock<[Arc<DomainGrid>; 3]> = OnceLock::new();
    G.get_or_init(|| {
        [GridSpec::circle(64), GridSpec::axisym(48), GridSpec::latlong(16, 32)]
            .map(|s| Arc::new(DomainGrid::new(s).unwrap()))
    })
}

fn body(g: usize, seed: u64) -> SupportField {
    let grid = &grids()[g];
    RandomBodies::new(seed).body(grid, 0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigma_matches_subsets(lam in spectrum(6)) {
        let s = Spectrum::new(lam.clone()).unwrap();
        for k in 0..=lam.len() {
            let scale = sigma_abs_scale(&lam, k).max(1e-300);
            prop_assert!((sigma(&s, k).unwrap() - sigma_brute(&lam, k)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn removal_identity(lam in spectrum(6), i in 0usize..6) {
        let d = lam.len();
        let i = i % d;
        let s = Spectrum::new(lam.clone()).unwrap();
        for k in 0..d {
            let scale = sigma_abs_scale(&lam, k + 1).max(1.0);
            let rhs = sigma_without(&s, i, k + 1).unwrap() + lam[i] * sigma_without(&s, i, k).unwrap();
            prop_assert!((sigma(&s, k + 1).unwrap() - rhs).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn matrix_sigma_is_spectral(a in (1usize..=4).prop_flat_map(sym_matrix)) {
        let ev = eigenvalues(&a);
        for k in 0..=a.dim() {
            let scale = sigma_abs_scale(ev.values(), k).max(1.0);
            prop_assert!((sigma_matrix(&a, k).unwrap() - sigma(&ev, k).unwrap()).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn partial_contracts_to_homogeneity(a in (1usize..=4).prop_flat_map(sym_matrix)) {
        // Euler: sum_ij sigma_k^{ij} a_ij = k sigma_k
        for k in 1..=a.dim() {
            let p = sigma_partial(&a, k).unwrap();
            let scale = sigma_abs_scale(eigenvalues(&a).values(), k).max(1.0);
            prop_assert!((p.contract(&a) - k as f64 * sigma_matrix(&a, k).unwrap()).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn partial_matches_difference_quotient(a in sym_matrix(3), i in 0usize..3, j in 0usize..3) {
        let k = 2;
        let p = sigma_partial(&a, k).unwrap();
        let eps = 1e-6;
        let mut up = a;
        let mut dn = a;
        up.set(i, j, a.get(i, j) + eps);
        dn.set(i, j, a.get(i, j) - eps);
        let fd = (sigma_matrix(&up, k).unwrap() - sigma_matrix(&dn, k).unwrap()) / (2.0 * eps);
        // a symmetric perturbation of an off-diagonal entry moves both a_ij and a_ji
        let expected = if i == j { p.get(i, i) } else { 2.0 * p.get(i, j) };
        prop_assert!((fd - expected).abs() < 1e-6);
    }

    #[test]
    fn concavity_of_quotients(a in sym_matrix(3), b in sym_matrix(3), shift_a in 2.0..5.0f64, shift_b in 2.0..5.0f64) {
        let mut a = a;
        let mut b = b;
        a.add_diagonal(shift_a);
        b.add_diagonal(shift_b);
        for (k, l) in [(2usize, 0usize), (2, 1), (3, 1), (3, 2)] {
            if !(matrix_in_gamma_k(&a, k) && matrix_in_gamma_k(&b, k)) {
                continue;
            }
            let q = |m: &SymMatrix| {
                (sigma_matrix(m, k).unwrap() / sigma_matrix(m, l).unwrap()).powf(1.0 / (k - l) as f64)
            };
            let mid = a.add(&b).scale(0.5);
            prop_assert!(q(&mid) >= 0.5 * (q(&a) + q(&b)) - 1e-10);
        }
    }

    #[test]
    fn inverse_concavity(x in prop::collection::vec(0.2..5.0f64, 3), y in prop::collection::vec(0.2..5.0f64, 3)) {
        for k in 1..=3usize {
            let f = |l: &[f64]| sigma(&Spectrum::new(l.to_vec()).unwrap(), k).unwrap().powf(1.0 / k as f64);
            let f_star = |l: &[f64]| 1.0 / f(&l.iter().map(|v| 1.0 / v).collect::<Vec<_>>());
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.5 * (a + b)).collect();
            prop_assert!(f_star(&mid) >= 0.5 * (f_star(&x) + f_star(&y)) - 1e-10);
        }
    }

    #[test]
    fn gamma_cone_is_nested(lam in spectrum(6)) {
        let s = Spectrum::new(lam.clone()).unwrap();
        for k in 2..=lam.len() {
            if in_gamma_k(&s, k) {
                prop_assert!(in_gamma_k(&s, k - 1));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn radii_and_steiner_follow_translations(g in 0usize..3, seed in 0u64..1000, c in prop::array::uniform3(-0.3..0.3f64)) {
        let h = body(g, seed);
        let c: Point = h.grid().project_translation(c);
        let moved = h.translated(c);
        let (r0, r1) = (radii(&h).unwrap(), radii(&moved).unwrap());
        prop_assert!((r0.inner - r1.inner).abs() < 1e-10);
        prop_assert!((r0.outer - r1.outer).abs() < 1e-10);
        let (z0, z1) = (steiner_point(&h), steiner_point(&moved));
        for i in 0..3 {
            prop_assert!((z1[i] - z0[i] - c[i]).abs() < 1e-12);
        }
        prop_assert!(r0.inner <= r0.outer);
    }

    #[test]
    fn quermass_is_translation_invariant_and_homogeneous(g in 0usize..3, seed in 0u64..1000, s in 0.5..2.0f64) {
        let h = body(g, seed);
        let k = h.grid().dim();
        let w = quermassintegral(&h, k).unwrap();
        let moved = h.translated(h.grid().project_translation([0.2, -0.1, 0.15]));
        assert_relative_eq!(quermassintegral(&moved, k).unwrap(), w, max_relative = 1e-12);
        // (k + 1)-homogeneous
        assert_relative_eq!(quermassintegral(&h.scaled(s), k).unwrap(), s.powi(k as i32 + 1) * w, max_relative = 1e-12);
    }

    #[test]
    fn random_bodies_are_strictly_convex(g in 0usize..3, seed in 0u64..1000) {
        let h = body(g, seed);
        let (lo, hi) = curvature_matrix(&h).eigen_range();
        prop_assert!(lo > 0.0 && hi >= lo);
    }

    #[test]
    fn frame_trace_is_laplacian(g in 1usize..3, seed in 0u64..1000) {
        let h = body(g, seed);
        let grid = h.grid();
        let hess = grid.covariant_hessian(h.values()).unwrap();
        let lap = grid.laplace_beltrami(h.values()).unwrap();
        for (m, l) in hess.iter().zip(&lap) {
            prop_assert!((m.trace() - l).abs() < 1e-10 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn xi_of_exponential_density(v in prop::array::uniform3(-0.6..0.6f64)) {
        let g = &grids()[2];
        let f = ScalarField::from_fn(g, |x| (-dot(&v, x)).exp());
        let r = solve_xi(&f, g).unwrap();
        for i in 0..3 {
            prop_assert!((r.xi[i] - v[i]).abs() < 1e-9);
        }
        // Phi decreases along the iteration
        prop_assert!(r.objective.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
    }

    #[test]
    fn xi_scale_invariant(seed in 0u64..1000, c in 0.1..10.0f64) {
        let g = &grids()[2];
        let h = body(2, seed);
        let f = ScalarField::new(h.values().to_vec());
        let a = solve_xi(&f, g).unwrap();
        let b = solve_xi(&f.map(|v| c * v), g).unwrap();
        for i in 0..3 {
            prop_assert!((a.xi[i] - b.xi[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn linearization_matches_difference_quotient(g in 0usize..3, seed in 0u64..1000) {
        let h = body(g, seed);
        let grid = h.grid();
        let k = grid.dim();
        let lin = Linearization::new(&h, k).unwrap();
        let u: Vec<f64> = grid.points().iter().map(|x| (2.0 * x[0] + x[1]).sin() + 0.5 * x[2] * x[2]).collect();
        let mut lu = vec![0.0; u.len()];
        lin.apply(&u, &mut lu);
        let sig = |eps: f64| {
            let hv: Vec<f64> = h.values().iter().zip(&u).map(|(a, b)| a + eps * b).collect();
            curvature_matrix(&SupportField::new(grid.clone(), ScalarField::new(hv)).unwrap())
                .sigma(k)
                .unwrap()
        };
        let norm = lu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let best = [1e-4, 1e-5, 1e-6, 1e-7]
            .iter()
            .map(|&eps| {
                let (p, m) = (sig(eps), sig(-eps));
                p.iter()
                    .zip(&m)
                    .zip(&lu)
                    .map(|((a, b), l)| ((a - b) / (2.0 * eps) - l).abs())
                    .fold(0.0f64, f64::max)
                    / norm
            })
            .fold(f64::INFINITY, f64::min);
        prop_assert!(best < 1e-6, "relative error {best:e}");
    }

    #[test]
    fn functional_is_translation_invariant(seed in 0u64..1000) {
        let g = grids()[1].clone();
        let flow = Flow::new(g.clone(), FlowConfig::new(2, ScalarField::constant(&g, 1.0))).unwrap();
        let h = body(1, seed);
        let j0 = flow.functional(&h).unwrap();
        let j1 = flow.functional(&h.translated([0.0, 0.0, 0.25])).unwrap();
        prop_assert!((j0 - j1).abs() < 1e-9 * (1.0 + j0.abs()));
    }
}

#[test]
fn ball_functional_closed_form() {
    let g = Arc::new(DomainGrid::new(GridSpec::axisym(64)).unwrap());
    let flow = Flow::new(g.clone(), FlowConfig::new(2, ScalarField::constant(&g, 1.0))).unwrap();
    for rho in [0.5, 1.0, 1.7] {
        let j = flow.functional(&SupportField::ball(g.clone(), rho, [0.0; 3])).unwrap();
        let pi = std::f64::consts::PI;
        assert_relative_eq!(j, -4.0 * pi * rho.powi(3) / 3.0 + 4.0 * pi * rho, max_relative = 1e-12);
    }
}
