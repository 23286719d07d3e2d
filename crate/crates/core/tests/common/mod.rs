//! Independent reference computations used by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// `sigma_k` by summing products over all `k`-subsets.
pub fn sigma_brute(lambda: &[f64], k: usize) -> f64 {
    let n = lambda.len();
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let mut total = 0.0;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize == k {
            total += (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| lambda[i])
                .product::<f64>();
        }
    }
    total
}

/// Sum of `|terms|` over all `k`-subsets, the natural scale for rounding.
pub fn sigma_abs_scale(lambda: &[f64], k: usize) -> f64 {
    let abs: Vec<f64> = lambda.iter().map(|v| v.abs()).collect();
    sigma_brute(&abs, k)
}

/// Classical fourth-order Runge-Kutta for `y' = f(y)` with fixed step,
/// returning samples at every step.
pub fn rk4(f: impl Fn(f64) -> f64, y0: f64, t_end: f64, steps: usize) -> Vec<(f64, f64)> {
    let dt = t_end / steps as f64;
    let mut y = y0;
    let mut out = vec![(0.0, y0)];
    for i in 0..steps {
        let k1 = f(y);
        let k2 = f(y + 0.5 * dt * k1);
        let k3 = f(y + 0.5 * dt * k2);
        let k4 = f(y + dt * k3);
        y += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push(((i + 1) as f64 * dt, y));
    }
    out
}

/// Linear interpolation in a sampled trajectory.
pub fn interpolate(samples: &[(f64, f64)], t: f64) -> f64 {
    let i = samples.partition_point(|s| s.0 <= t).clamp(1, samples.len() - 1);
    let (t0, y0) = samples[i - 1];
    let (t1, y1) = samples[i];
    if t1 == t0 {
        return y0;
    }
    y0 + (y1 - y0) * (t - t0) / (t1 - t0)
}

/// Nelder-Mead simplex minimization.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], step: f64, tol: f64, max_iter: usize) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        simplex.push(x);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = simplex[1..]
            .iter()
            .map(|x| x.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread < tol {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let xc = if fr < values[n] { along(-0.5) } else { along(0.5) };
            let fc = f(&xc);
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                for i in 1..=n {
                    simplex[i] = (0..n).map(|j| 0.5 * (simplex[0][j] + simplex[i][j])).collect();
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    simplex[best].clone()
}

/// Minimizes `sum_j w_j a_j e^{-xi.x_j}` without derivatives. The minimizer
/// is re-centered after each pass so that the last pass starts at the
/// current estimate with a small simplex; the objective is divided by its
/// value there, which keeps the simplex comparisons well conditioned.
pub fn xi_by_simplex(weights: &[f64], inv_f: &[f64], coords: &[Vec<f64>]) -> Vec<f64> {
    let m = coords[0].len();
    let mut xi = vec![0.0; m];
    let mut step = 0.5;
    for _ in 0..8 {
        let base = xi.clone();
        let shift: Vec<f64> = coords
            .iter()
            .map(|x| x.iter().zip(&base).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let scale: f64 = weights
            .iter()
            .zip(inv_f)
            .zip(&shift)
            .map(|((w, a), s)| w * a * (-s).exp())
            .sum();
        let obj = |d: &[f64]| -> f64 {
            // Phi(base + d) / Phi(base) - 1, evaluated with expm1 so that
            // differences near the minimum are not lost
            weights
                .iter()
                .zip(inv_f)
                .zip(coords.iter().zip(&shift))
                .map(|((w, a), (x, s))| {
                    let dx: f64 = x.iter().zip(d).map(|(xi, di)| xi * di).sum();
                    w * a * (-s).exp() * (-dx).exp_m1()
                })
                .sum::<f64>()
                / scale
        };
        let d = nelder_mead(obj, &vec![0.0; m], step, 1e-13, 20_000);
        for i in 0..m {
            xi[i] += d[i];
        }
        step *= 0.05;
    }
    xi
}

/// Solution of `h'' + h = g` on `N` equispaced circle nodes by a direct
/// (quadratic-cost) Fourier sum with the continuous symbol `1 - m^2`; the
/// `m = 1` modes are dropped.
pub fn circle_christoffel_oracle(g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let phi = |j: usize| 2.0 * PI * j as f64 / n as f64;
    let mut h = vec![0.0; n];
    for m in 0..=n / 2 {
        if m == 1 {
            continue;
        }
        let (mut a, mut b) = (0.0, 0.0);
        for (j, gj) in g.iter().enumerate() {
            a += gj * (m as f64 * phi(j)).cos();
            b += gj * (m as f64 * phi(j)).sin();
        }
        let norm = if m == 0 || (n % 2 == 0 && m == n / 2) { n as f64 } else { n as f64 / 2.0 };
        let (a, b) = (a / norm, b / norm);
        let symbol = 1.0 - (m * m) as f64;
        for (j, hj) in h.iter_mut().enumerate() {
            *hj += (a * (m as f64 * phi(j)).cos() + b * (m as f64 * phi(j)).sin()) / symbol;
        }
    }
    h
}

/// Removes the best `c.x` fit (least squares over the nodes).
pub fn remove_linear(h: &[f64], points: &[[f64; 3]], dims: &[usize]) -> Vec<f64> {
    let m = dims.len();
    let mut a = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    for (v, x) in h.iter().zip(points) {
        for i in 0..m {
            rhs[i] += v * x[dims[i]];
            for j in 0..m {
                a[i][j] += x[dims[i]] * x[dims[j]];
            }
        }
    }
    let c = solve_small(a, rhs);
    h.iter()
        .zip(points)
        .map(|(v, x)| v - (0..m).map(|i| c[i] * x[dims[i]]).sum::<f64>())
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve_small(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Deterministic pseudo-random numbers in `[lo, hi)` (splitmix64), so the
/// oracles do not share a generator with the code under test.
pub struct Stream(u64);

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }
}
