//! Minimum of the complex sectional curvature R(z, w, z̄, w̄) over
//! Hermitian-orthonormal pairs. Nonnegativity of this minimum is PIC2.
//!
//! For fixed z the functional is a Hermitian form in w̄ whose kernel contains
//! z̄, so each half-step is an exact minimum-eigenvector solve. Alternating
//! half-steps never increase the value but crawl along curved valleys, so a
//! short alternating phase is followed by damped Newton steps on the complex
//! Grassmannian (the value only depends on the plane spanned by z and w).
//! Multi-start handles non-convexity.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::algebra::CurvatureTensor;
use crate::sampling::{gaussian, rng_for};

use super::witness::FrameWitness;
use super::{OracleOptions, OracleResult};

type C = Complex64;

/// R(z, w, z̄, w̄) for arbitrary complex vectors (no normalization applied).
pub fn complex_sectional(r: &CurvatureTensor, z: &[C], w: &[C]) -> f64 {
    let k = kernel(&r.full(), r.dim(), z);
    let mut v = C::new(0.0, 0.0);
    for j in 0..r.dim() {
        for l in 0..r.dim() {
            v += w[j] * k[(j, l)] * w[l].conj();
        }
    }
    v.re
}

/// K_jl = Σ_ik R_ijkl z_i z̄_k, so that R(z,w,z̄,w̄) = Σ_jl w_j K_jl w̄_l.
fn kernel(full: &[f64], n: usize, z: &[C]) -> DMatrix<C> {
    let mut k = DMatrix::from_element(n, n, C::new(0.0, 0.0));
    for i in 0..n {
        for kk in 0..n {
            let c = z[i] * z[kk].conj();
            if c.norm_sqr() == 0.0 {
                continue;
            }
            for j in 0..n {
                let base = ((i * n + j) * n + kk) * n;
                for l in 0..n {
                    k[(j, l)] += c * full[base + l];
                }
            }
        }
    }
    // exact Hermitian symmetry for the eigen-solver
    for j in 0..n {
        k[(j, j)] = C::new(k[(j, j)].re, 0.0);
        for l in j + 1..n {
            let avg = 0.5 * (k[(j, l)] + k[(l, j)].conj());
            k[(j, l)] = avg;
            k[(l, j)] = avg.conj();
        }
    }
    k
}

fn normalize(v: &mut [C]) {
    let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in v.iter_mut() {
        *c /= norm;
    }
}

/// Minimizes Σ w_j K_jl w̄_l over unit w Hermitian-orthogonal to `z`.
/// Returns (value, w).
fn best_partner(k: &DMatrix<C>, z: &[C]) -> (f64, Vec<C>) {
    let n = z.len();
    // u = w̄ minimizes u* K u subject to u ⊥ z̄; z̄ spans part of ker K, so
    // lifting it by a large shift removes it from the bottom of the spectrum
    let shift = 1.0 + 2.0 * k.iter().map(|c| c.norm()).fold(0.0, f64::max) * n as f64;
    let mut m = k.clone();
    for a in 0..n {
        for b in 0..n {
            m[(a, b)] += shift * z[a].conj() * z[b];
        }
    }
    let eig = SymmetricEigen::new(m);
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .unwrap();
    let mut w: Vec<C> = eig
        .eigenvectors
        .column(idx)
        .iter()
        .map(|c| c.conj())
        .collect();
    // remove any residual overlap with z, then renormalize
    let overlap: C = w.iter().zip(z).map(|(a, b)| a * b.conj()).sum();
    for (wi, zi) in w.iter_mut().zip(z) {
        *wi -= overlap * zi;
    }
    normalize(&mut w);
    (val, w)
}

struct Descent {
    value: f64,
    z: Vec<C>,
    w: Vec<C>,
    iterations: usize,
}

fn descend(full: &[f64], n: usize, start: Vec<C>, max_iter: usize, tol: f64) -> Descent {
    let mut z = start;
    normalize(&mut z);
    let (mut value, mut w) = best_partner(&kernel(full, n, &z), &z);
    let mut iterations = 1;
    let mut stall = 0;
    while iterations < ALTERNATING_STEPS.min(max_iter) {
        // the functional is symmetric under (z, w) -> (w, z)
        let (v, z_new) = best_partner(&kernel(full, n, &w), &w);
        iterations += 1;
        let gain = value - v;
        z = std::mem::replace(&mut w, z_new);
        value = value.min(v);
        if gain <= tol * (1.0 + value.abs()) {
            stall += 1;
            if stall >= 2 {
                break;
            }
        } else {
            stall = 0;
        }
    }
    let mut d = Descent {
        value: eval_pair(full, n, &z, &w),
        z,
        w,
        iterations,
    };
    newton_polish(full, n, &mut d, max_iter, tol);
    d
}

const ALTERNATING_STEPS: usize = 12;

/// Orthonormal basis of the Hermitian complement of span(z, w).
fn complement(z: &[C], w: &[C]) -> Vec<Vec<C>> {
    let n = z.len();
    let mut basis: Vec<Vec<C>> = vec![z.to_vec(), w.to_vec()];
    let mut cands: Vec<(f64, usize)> = Vec::with_capacity(n);
    for e in 0..n {
        // weight of e_e outside the plane
        let inside = z[e].norm_sqr() + w[e].norm_sqr();
        cands.push((inside, e));
    }
    cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for &(_, e) in &cands {
        if basis.len() == n {
            break;
        }
        let mut v = vec![C::new(0.0, 0.0); n];
        v[e] = C::new(1.0, 0.0);
        for _ in 0..2 {
            for b in &basis {
                let c: C = v.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
                for (vi, bi) in v.iter_mut().zip(b) {
                    *vi -= c * bi;
                }
            }
        }
        let norm = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm > 1e-6 {
            normalize(&mut v);
            basis.push(v);
        }
    }
    basis.split_off(2)
}

/// Second-order model of the plane functional in the chart
/// (z + Σ a_x u_x, w + Σ b_x u_x), real coordinates (Re a, Re b, Im a, Im b).
/// Returns (value, gradient, Hessian).
fn local_model(
    full: &[f64],
    n: usize,
    z: &[C],
    w: &[C],
    u: &[Vec<C>],
) -> (f64, Vec<f64>, DMatrix<f64>) {
    let zero = C::new(0.0, 0.0);
    let kz = kernel(full, n, z);
    let kw = kernel(full, n, w);
    // L_il = Σ_jk R_ijkl w_j z̄_k and P_ij = Σ_kl R_ijkl z̄_k w̄_l
    let mut l = DMatrix::from_element(n, n, zero);
    let mut p = DMatrix::from_element(n, n, zero);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let base = ((i * n + j) * n + k) * n;
                let wz = w[j] * z[k].conj();
                let zc = z[k].conj();
                for ll in 0..n {
                    let r = full[base + ll];
                    if r == 0.0 {
                        continue;
                    }
                    l[(i, ll)] += wz * r;
                    p[(i, j)] += zc * w[ll].conj() * r;
                }
            }
        }
    }
    let g1: Vec<C> = (0..n)
        .map(|i| (0..n).map(|ll| l[(i, ll)] * w[ll].conj()).sum())
        .collect();
    let g2: Vec<C> = (0..n)
        .map(|j| (0..n).map(|ll| kz[(j, ll)] * w[ll].conj()).sum())
        .collect();
    let phi0: f64 = w.iter().zip(&g2).map(|(a, b)| a * b).sum::<C>().re;

    let m = u.len();
    let bil = |mat: &DMatrix<C>, x: &[C], y: &[C], conj_y: bool| -> C {
        let mut s = zero;
        for i in 0..n {
            for k in 0..n {
                let yk = if conj_y { y[k].conj() } else { y[k] };
                s += x[i] * mat[(i, k)] * yk;
            }
        }
        s
    };
    // complex quadratic form cᵀ Hm c̄ + 2 Re(cᵀ Sm c) with c = (a, b)
    let mut hm = DMatrix::from_element(2 * m, 2 * m, zero);
    let mut sm = DMatrix::from_element(2 * m, 2 * m, zero);
    let mut gc = vec![zero; 2 * m];
    for x in 0..m {
        gc[x] = u[x].iter().zip(&g1).map(|(a, b)| a * b).sum();
        gc[m + x] = u[x].iter().zip(&g2).map(|(a, b)| a * b).sum();
        for y in 0..m {
            let m1 = bil(&kw, &u[x], &u[y], true);
            let m2 = bil(&kz, &u[x], &u[y], true);
            let m3 = bil(&l, &u[x], &u[y], true);
            let m4 = bil(&p, &u[x], &u[y], false);
            hm[(x, y)] = m1;
            hm[(m + x, m + y)] = m2;
            hm[(x, m + y)] = m3;
            hm[(m + y, x)] = m3.conj();
            sm[(x, m + y)] += 0.5 * m4;
            sm[(m + y, x)] += 0.5 * m4;
        }
        hm[(x, x)] -= phi0;
        hm[(m + x, m + x)] -= phi0;
    }
    // real coordinates v = (Re c, Im c):
    // cᵀHc̄ → [[Hr, Hi], [Hiᵀ, Hr]],  2Re(cᵀSc) → 2[[Sr, −Si], [−Si, −Sr]]
    let d = 2 * m;
    let mut q = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let (hr, hi) = (hm[(i, j)].re, hm[(i, j)].im);
            let (sr, si) = (sm[(i, j)].re, sm[(i, j)].im);
            q[(i, j)] = hr + 2.0 * sr;
            q[(i, d + j)] = hi - 2.0 * si;
            q[(d + i, j)] = -hi - 2.0 * si;
            q[(d + i, d + j)] = hr - 2.0 * sr;
        }
    }
    let hess = (&q + q.transpose()) * 1.0;
    let mut grad = vec![0.0; 2 * d];
    for i in 0..d {
        grad[i] = 2.0 * gc[i].re;
        grad[d + i] = -2.0 * gc[i].im;
    }
    (phi0, grad, hess)
}

/// Moves (z, w) by real chart coordinates and restores Hermitian orthonormality.
fn chart_step(z: &[C], w: &[C], u: &[Vec<C>], v: &[f64]) -> (Vec<C>, Vec<C>) {
    let m = u.len();
    let d = 2 * m;
    let mut z2 = z.to_vec();
    let mut w2 = w.to_vec();
    for x in 0..m {
        let a = C::new(v[x], v[d + x]);
        let b = C::new(v[m + x], v[d + m + x]);
        for (i, ux) in u[x].iter().enumerate() {
            z2[i] += a * ux;
            w2[i] += b * ux;
        }
    }
    normalize(&mut z2);
    let c: C = w2.iter().zip(&z2).map(|(x, y)| x * y.conj()).sum();
    for (wi, zi) in w2.iter_mut().zip(&z2) {
        *wi -= c * zi;
    }
    normalize(&mut w2);
    (z2, w2)
}

/// Damped Newton (Levenberg–Marquardt) on the Grassmannian of complex 2-planes.
const POLISH_STEPS: usize = 80;

fn newton_polish(full: &[f64], n: usize, d: &mut Descent, max_iter: usize, tol: f64) {
    if n < 3 {
        return;
    }
    let scale = full
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let mut damping = 1e-6 * scale;
    let mut quiet = 0;
    let stop = max_iter.min(d.iterations + POLISH_STEPS);
    while d.iterations < stop {
        d.iterations += 1;
        let u = complement(&d.z, &d.w);
        let (_, g, h) = local_model(full, n, &d.z, &d.w, &u);
        let gnorm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gnorm <= 1e-11 * scale {
            break;
        }
        let eig = SymmetricEigen::new(h);
        let (kmin, lmin) = eig
            .eigenvalues
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let mut accepted = false;
        let mut gain = 0.0;
        // negative curvature: a saddle (e.g. a real plane of a real tensor)
        // has no gradient along the escape direction, so probe it directly
        if lmin < -1e-9 * scale {
            let q: Vec<f64> = eig.eigenvectors.column(kmin).iter().copied().collect();
            let sign = if q.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() > 0.0 {
                -1.0
            } else {
                1.0
            };
            let mut tau = 0.5;
            for _ in 0..30 {
                let v: Vec<f64> = q.iter().map(|x| sign * tau * x).collect();
                let (z2, w2) = chart_step(&d.z, &d.w, &u, &v);
                let val = eval_pair(full, n, &z2, &w2);
                if val < d.value {
                    gain = d.value - val;
                    d.z = z2;
                    d.w = w2;
                    d.value = val;
                    accepted = true;
                    break;
                }
                tau *= 0.5;
            }
        }
        if !accepted {
            for _ in 0..40 {
                let mu = (-lmin).max(0.0) * 1.01 + damping;
                let mut v = vec![0.0; g.len()];
                for (k, lam) in eig.eigenvalues.iter().enumerate() {
                    let col = eig.eigenvectors.column(k);
                    let coef = -col.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / (lam + mu);
                    for (vi, ci) in v.iter_mut().zip(col.iter()) {
                        *vi += coef * ci;
                    }
                }
                let (z2, w2) = chart_step(&d.z, &d.w, &u, &v);
                let val = eval_pair(full, n, &z2, &w2);
                if val <= d.value {
                    gain = d.value - val;
                    d.z = z2;
                    d.w = w2;
                    d.value = val;
                    damping = (damping / 4.0).max(1e-14 * scale);
                    accepted = true;
                    break;
                }
                damping *= 8.0;
            }
        }
        if accepted {
            if gain <= tol * (1.0 + d.value.abs()) {
                quiet += 1;
            } else {
                quiet = 0;
            }
        }
        if !accepted || quiet >= 2 {
            break;
        }
    }
}

fn eval_pair(full: &[f64], n: usize, z: &[C], w: &[C]) -> f64 {
    let k = kernel(full, n, z);
    let mut v = C::new(0.0, 0.0);
    for j in 0..n {
        for l in 0..n {
            v += w[j] * k[(j, l)] * w[l].conj();
        }
    }
    v.re
}

fn coordinate_starts(n: usize) -> Vec<Vec<C>> {
    let zero = C::new(0.0, 0.0);
    let mut out = Vec::new();
    for a in 0..n {
        let mut z = vec![zero; n];
        z[a] = C::new(1.0, 0.0);
        out.push(z);
    }
    for a in 0..n {
        for b in a + 1..n {
            let mut z = vec![zero; n];
            z[a] = C::new(1.0, 0.0);
            z[b] = C::new(0.0, 1.0);
            out.push(z);
        }
    }
    out
}

fn random_start(seed: u64, stream: u64, n: usize) -> Vec<C> {
    let mut rng = rng_for(seed, stream);
    (0..n)
        .map(|_| C::new(gaussian(&mut rng), gaussian(&mut rng)))
        .collect::<Vec<_>>()
}

/// Minimum of the complex sectional curvature; `warm` seeds are tried first.
pub fn complex_sectional_min_warm(
    r: &CurvatureTensor,
    opts: &OracleOptions,
    warm: &[Vec<C>],
) -> OracleResult {
    let n = r.dim();
    let full = r.full();
    let tol = opts.tol.max(1e-15);
    let mut starts: Vec<Vec<C>> = warm.to_vec();
    if opts.coordinate_scan {
        starts.extend(coordinate_starts(n));
    }
    for k in 0..opts.restarts {
        starts.push(random_start(opts.seed, 0x5eed_0000 + k as u64, n));
    }
    let mut best: Option<(f64, usize, Descent)> = None;
    let mut evaluations = 0;
    for (idx, s) in starts.into_iter().enumerate() {
        if s.iter().all(|c| c.norm_sqr() == 0.0) {
            continue;
        }
        let d = descend(&full, n, s, opts.max_iter, tol);
        evaluations += d.iterations;
        let better = match &best {
            None => true,
            Some((v, i, _)) => d.value < *v || (d.value == *v && idx < *i),
        };
        if better {
            best = Some((d.value, idx, d));
        }
    }
    let (_, _, d) = best.expect("at least one start");
    OracleResult {
        value: d.value,
        witness: FrameWitness::complex_frame(&d.z, &d.w),
        evaluations,
        converged: true,
    }
}

pub fn complex_sectional_min(r: &CurvatureTensor, opts: &OracleOptions) -> OracleResult {
    complex_sectional_min_warm(r, opts, &[])
}

/// Brute-force sampling of random Hermitian-orthonormal pairs (test oracle).
pub fn complex_sectional_sampled(r: &CurvatureTensor, samples: usize, seed: u64) -> f64 {
    let n = r.dim();
    let full = r.full();
    let mut rng = rng_for(seed, 0xb4u64);
    let mut best = f64::INFINITY;
    for _ in 0..samples {
        let mut z: Vec<C> = (0..n)
            .map(|_| C::new(gaussian(&mut rng), gaussian(&mut rng)))
            .collect();
        normalize(&mut z);
        let mut w: Vec<C> = (0..n)
            .map(|_| C::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let overlap: C = w.iter().zip(&z).map(|(a, b)| a * b.conj()).sum();
        for (wi, zi) in w.iter_mut().zip(&z) {
            *wi -= overlap * zi;
        }
        normalize(&mut w);
        best = best.min(eval_pair(&full, n, &z, &w));
    }
    best
}
