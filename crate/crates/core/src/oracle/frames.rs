//! Real-frame functionals over orthonormal 4-frames:
//!
//!   F(e, λ, μ) = R1313 + λ²R1414 + μ²R2323 + λ²μ²R2424 − 2λμR1234
//!
//! with (λ, μ) = (1, 1) for isotropic curvature, μ = 1 for PIC1 and
//! λ, μ ∈ [0, 1] for PIC2. The frame is optimized on the Stiefel manifold by
//! Riemannian gradient descent with a QR retraction; the weights are
//! minimized exactly for each frame.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebra::{pair_index, CurvatureTensor};
use crate::sampling::{gaussian, rng_for};

use super::witness::FrameWitness;
use super::{OracleOptions, OracleResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMode {
    Isotropic,
    Pic1,
    Pic2,
}

/// The five curvature components entering F.
#[derive(Debug, Clone, Copy)]
struct Coeffs {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
}

impl Coeffs {
    fn value(&self, l: f64, m: f64) -> f64 {
        self.a + l * l * self.b + m * m * self.c + l * l * m * m * self.d - 2.0 * l * m * self.e
    }

    /// Best λ ∈ [0, 1] for fixed μ.
    fn best_lambda(&self, m: f64) -> f64 {
        let p = self.b + m * m * self.d;
        let q = m * self.e;
        if p > 0.0 {
            (q / p).clamp(0.0, 1.0)
        } else if self.value(0.0, m) <= self.value(1.0, m) {
            0.0
        } else {
            1.0
        }
    }

    /// Exact minimum over the weights allowed by `mode`: (value, λ, μ).
    fn minimize(&self, mode: FrameMode) -> (f64, f64, f64) {
        match mode {
            FrameMode::Isotropic => (self.value(1.0, 1.0), 1.0, 1.0),
            FrameMode::Pic1 => {
                let l = self.best_lambda(1.0);
                (self.value(l, 1.0), l, 1.0)
            }
            FrameMode::Pic2 => {
                let g = |m: f64| {
                    let l = self.best_lambda(m);
                    self.value(l, m)
                };
                // coarse grid, then golden section around the best cell
                const CELLS: usize = 32;
                let mut best_k = 0;
                let mut best_v = f64::INFINITY;
                for k in 0..=CELLS {
                    let v = g(k as f64 / CELLS as f64);
                    if v < best_v {
                        best_v = v;
                        best_k = k;
                    }
                }
                let mut lo = (best_k.saturating_sub(1)) as f64 / CELLS as f64;
                let mut hi = ((best_k + 1).min(CELLS)) as f64 / CELLS as f64;
                let phi = 0.5 * (5f64.sqrt() - 1.0);
                let mut x1 = hi - phi * (hi - lo);
                let mut x2 = lo + phi * (hi - lo);
                let (mut f1, mut f2) = (g(x1), g(x2));
                for _ in 0..60 {
                    if f1 <= f2 {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - phi * (hi - lo);
                        f1 = g(x1);
                    } else {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + phi * (hi - lo);
                        f2 = g(x2);
                    }
                }
                let mut cands = vec![best_k as f64 / CELLS as f64, x1, x2, 0.0, 1.0];
                cands.sort_by(|a, b| g(*a).total_cmp(&g(*b)));
                let m = cands[0];
                let l = self.best_lambda(m);
                (self.value(l, m), l, m)
            }
        }
    }
}

/// Curvature block wrapper with wedge-vector evaluation
/// R(a,b,c,d) = (a∧b)ᵀ Block (c∧d).
struct WedgeEval {
    n: usize,
    block: DMatrix<f64>,
}

impl WedgeEval {
    fn new(r: &CurvatureTensor) -> Self {
        Self {
            n: r.dim(),
            block: r.to_matrix(),
        }
    }

    fn wedge(&self, a: &[f64], b: &[f64]) -> DVector<f64> {
        let n = self.n;
        let mut w = DVector::zeros(n * (n - 1) / 2);
        let mut k = 0;
        for i in 0..n {
            for j in i + 1..n {
                w[k] = a[i] * b[j] - a[j] * b[i];
                k += 1;
            }
        }
        w
    }

    /// Antisymmetric Y with R(x, y, c, d) = xᵀ Y y, where Y is built from Block·(c∧d).
    fn form(&self, c: &[f64], d: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.n;
        let y = &self.block * self.wedge(c, d);
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i + 1..n {
                let v = y[pair_index(n, i, j)];
                m[(i, j)] = v;
                m[(j, i)] = -v;
            }
        }
        (y, m)
    }

    fn coeffs(&self, e: &[Vec<f64>; 4]) -> Coeffs {
        let w13 = self.wedge(&e[0], &e[2]);
        let w14 = self.wedge(&e[0], &e[3]);
        let w23 = self.wedge(&e[1], &e[2]);
        let w24 = self.wedge(&e[1], &e[3]);
        let w12 = self.wedge(&e[0], &e[1]);
        let w34 = self.wedge(&e[2], &e[3]);
        let q = |u: &DVector<f64>, v: &DVector<f64>| u.dot(&(&self.block * v));
        Coeffs {
            a: q(&w13, &w13),
            b: q(&w14, &w14),
            c: q(&w23, &w23),
            d: q(&w24, &w24),
            e: q(&w12, &w34),
        }
    }

    /// Euclidean gradient of F at fixed weights, one column per frame vector.
    fn gradient(&self, e: &[Vec<f64>; 4], l: f64, m: f64) -> [DVector<f64>; 4] {
        let v = |x: &Vec<f64>| DVector::from_column_slice(x);
        let (e1, e2, e3, e4) = (v(&e[0]), v(&e[1]), v(&e[2]), v(&e[3]));
        let (_, y13) = self.form(&e[0], &e[2]);
        let (_, y14) = self.form(&e[0], &e[3]);
        let (_, y23) = self.form(&e[1], &e[2]);
        let (_, y24) = self.form(&e[1], &e[3]);
        let (_, y12) = self.form(&e[0], &e[1]);
        let (_, y34) = self.form(&e[2], &e[3]);
        let (l2, m2, lm) = (l * l, m * m, l * m);
        let g1 = 2.0 * &y13 * &e3 + 2.0 * l2 * &y14 * &e4 - 2.0 * lm * &y34 * &e2;
        let g2 = 2.0 * m2 * &y23 * &e3 + 2.0 * l2 * m2 * &y24 * &e4 + 2.0 * lm * &y34 * &e1;
        let g3 = -2.0 * &y13 * &e1 - 2.0 * m2 * &y23 * &e2 - 2.0 * lm * &y12 * &e4;
        let g4 = -2.0 * l2 * &y14 * &e1 - 2.0 * l2 * m2 * &y24 * &e2 + 2.0 * lm * &y12 * &e3;
        [g1, g2, g3, g4]
    }
}

/// F at an explicit frame and weights.
pub fn frame_value(r: &CurvatureTensor, e: [&[f64]; 4], lambda: f64, mu: f64) -> f64 {
    let w = WedgeEval::new(r);
    let frame = [e[0].to_vec(), e[1].to_vec(), e[2].to_vec(), e[3].to_vec()];
    w.coeffs(&frame).value(lambda, mu)
}

fn to_matrix(e: &[Vec<f64>; 4]) -> DMatrix<f64> {
    let n = e[0].len();
    DMatrix::from_fn(n, 4, |i, j| e[j][i])
}

fn from_matrix(m: &DMatrix<f64>) -> [Vec<f64>; 4] {
    std::array::from_fn(|j| m.column(j).iter().copied().collect())
}

/// Modified Gram–Schmidt on the columns (QR retraction).
fn orthonormalize(m: &mut DMatrix<f64>) -> bool {
    for j in 0..m.ncols() {
        for k in 0..j {
            let d = m.column(j).dot(&m.column(k));
            let ck = m.column(k).into_owned();
            m.column_mut(j).axpy(-d, &ck, 1.0);
        }
        let norm = m.column(j).norm();
        if norm < 1e-12 {
            return false;
        }
        m.column_mut(j).scale_mut(1.0 / norm);
    }
    true
}

struct Local {
    value: f64,
    frame: [Vec<f64>; 4],
    lambda: f64,
    mu: f64,
    iterations: usize,
    converged: bool,
}

fn polish(w: &WedgeEval, start: [Vec<f64>; 4], mode: FrameMode, opts: &OracleOptions) -> Local {
    let mut frame = start;
    let (mut value, mut l, mut m) = w.coeffs(&frame).minimize(mode);
    let scale = w.block.amax().max(1e-300);
    let mut step = 0.25 / scale;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let g = w.gradient(&frame, l, m);
        let e = to_matrix(&frame);
        let gm = DMatrix::from_columns(&g);
        let sym = {
            let s = e.transpose() * &gm;
            (&s + s.transpose()) * 0.5
        };
        let rg = &gm - &e * sym;
        let gnorm2 = rg.norm_squared();
        if gnorm2.sqrt() <= 1e-11 * scale {
            converged = true;
            break;
        }
        let mut accepted = false;
        step *= 2.0;
        for _ in 0..40 {
            let mut cand = &e - step * &rg;
            if orthonormalize(&mut cand) {
                let cf = from_matrix(&cand);
                let (v, nl, nm) = w.coeffs(&cf).minimize(mode);
                if v <= value - 1e-4 * step * gnorm2 {
                    let gain = value - v;
                    frame = cf;
                    value = v;
                    l = nl;
                    m = nm;
                    accepted = true;
                    if gain <= opts.tol * scale {
                        converged = true;
                    }
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted || converged {
            converged = true;
            break;
        }
    }
    Local {
        value,
        frame,
        lambda: l,
        mu: m,
        iterations,
        converged,
    }
}

/// Every ordered 4-tuple of distinct coordinate directions, with the sign of
/// e4 chosen to make −2λμR1234 as small as possible.
fn coordinate_scan(r: &CurvatureTensor, mode: FrameMode) -> (f64, [Vec<f64>; 4], f64, f64, usize) {
    let n = r.dim();
    let mut best = (f64::INFINITY, [0usize; 4], 1.0, 1.0, 1.0);
    let mut count = 0;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    if i == j || i == k || i == l || j == k || j == l || k == l {
                        continue;
                    }
                    count += 1;
                    let e = r.get(i, j, k, l);
                    let c = Coeffs {
                        a: r.get(i, k, i, k),
                        b: r.get(i, l, i, l),
                        c: r.get(j, k, j, k),
                        d: r.get(j, l, j, l),
                        e: e.abs(),
                    };
                    let (v, lam, mu) = c.minimize(mode);
                    if v < best.0 {
                        best = (v, [i, j, k, l], lam, mu, if e < 0.0 { -1.0 } else { 1.0 });
                    }
                }
            }
        }
    }
    let (v, idx, lam, mu, sign) = best;
    let frame = std::array::from_fn(|s| {
        let mut u = vec![0.0; n];
        u[idx[s]] = if s == 3 { sign } else { 1.0 };
        u
    });
    (v, frame, lam, mu, count)
}

fn random_frame(seed: u64, stream: u64, n: usize) -> [Vec<f64>; 4] {
    let mut rng = rng_for(seed, stream);
    let mut m = DMatrix::from_fn(n, 4, |_, _| gaussian(&mut rng));
    while !orthonormalize(&mut m) {
        m = DMatrix::from_fn(n, 4, |_, _| gaussian(&mut rng));
    }
    from_matrix(&m)
}

/// Global minimum of the frame functional for `mode`.
pub fn frame_min(r: &CurvatureTensor, mode: FrameMode, opts: &OracleOptions) -> OracleResult {
    let n = r.dim();
    let w = WedgeEval::new(r);
    let mut evaluations = 0;
    let mut all_converged = true;
    // candidates are (value, tie-break index, local)
    let mut best: Option<(f64, usize, Local)> = None;
    let mut consider = |idx: usize, loc: Local, evaluations: &mut usize| {
        *evaluations += loc.iterations;
        let better = match &best {
            None => true,
            Some((v, i, _)) => loc.value < *v || (loc.value == *v && idx < *i),
        };
        if better {
            best = Some((loc.value, idx, loc));
        }
    };
    if opts.coordinate_scan {
        let (v, frame, lam, mu, count) = coordinate_scan(r, mode);
        evaluations += count;
        // the floor itself is a candidate, and its polished version another
        consider(
            0,
            Local {
                value: v,
                frame: frame.clone(),
                lambda: lam,
                mu,
                iterations: 0,
                converged: true,
            },
            &mut evaluations,
        );
        let loc = polish(&w, frame, mode, opts);
        all_converged &= loc.converged;
        consider(1, loc, &mut evaluations);
    }
    for k in 0..opts.restarts {
        let loc = polish(
            &w,
            random_frame(opts.seed, 0xf4a3_0000 + k as u64, n),
            mode,
            opts,
        );
        all_converged &= loc.converged;
        consider(2 + k, loc, &mut evaluations);
    }
    let (_, _, loc) = best.expect("at least one candidate");
    let frame = loc.frame.to_vec();
    OracleResult {
        value: loc.value,
        witness: FrameWitness::real_frame(frame, loc.lambda, loc.mu),
        evaluations,
        converged: all_converged,
    }
}

pub fn isotropic_min(r: &CurvatureTensor, opts: &OracleOptions) -> OracleResult {
    frame_min(r, FrameMode::Isotropic, opts)
}

pub fn pic1_min(r: &CurvatureTensor, opts: &OracleOptions) -> OracleResult {
    frame_min(r, FrameMode::Pic1, opts)
}

pub fn pic2_min(r: &CurvatureTensor, opts: &OracleOptions) -> OracleResult {
    frame_min(r, FrameMode::Pic2, opts)
}

/// Isotropic curvature of R ⊕ 0 on R^{n+1}: the literal PIC1 definition.
pub fn pic1_min_product(r: &CurvatureTensor, opts: &OracleOptions) -> OracleResult {
    isotropic_min(&r.product_with_flat(1), opts)
}

/// Isotropic curvature of R ⊕ 0 on R^{n+2}: the literal PIC2 definition.
pub fn pic2_min_product(r: &CurvatureTensor, opts: &OracleOptions) -> OracleResult {
    isotropic_min(&r.product_with_flat(2), opts)
}

/// Brute-force sampled minimum over random frames and weights (test oracle).
pub fn frame_min_sampled(r: &CurvatureTensor, mode: FrameMode, samples: usize, seed: u64) -> f64 {
    let w = WedgeEval::new(r);
    let mut best = f64::INFINITY;
    for k in 0..samples {
        let frame = random_frame(seed, k as u64, r.dim());
        best = best.min(w.coeffs(&frame).minimize(mode).0);
    }
    best
}
