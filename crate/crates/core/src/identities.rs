//! Randomized checks of the algebraic identities that the flow code relies on.

use serde::{Deserialize, Serialize};

use crate::algebra::{
    b_product, contract_sh, id_kn_id, kn_product, kn_with_identity, pairs, q_quadratic,
    remove_traceless_ricci, ricci, CurvatureTensor, SymmetricForm,
};
use crate::error::Result;
use crate::flow::{coupled_residual, rhs_coupled};
use crate::sampling::{random_form, random_tensor, rng_for, LabRng};

/// Default tolerance for identities checked on random data.
pub const RANDOM_TOL: f64 = 1e-10;
/// Default tolerance for identities between exact tensors.
pub const EXACT_TOL: f64 = 1e-12;
/// Default tolerance for the coupled-system residual.
pub const COUPLED_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tol: f64,
    /// Dimension and case index of the largest error; case k of dimension n
    /// uses random stream `n << 32 | k`.
    pub worst_n: usize,
    pub worst_case: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub dims: Vec<usize>,
    pub checks: Vec<IdentityCheck>,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityOptions {
    pub seed: u64,
    pub dims: Vec<usize>,
    /// Random cases per dimension for the tensor identities.
    pub cases: usize,
    /// Random states per dimension for the coupled-system residual.
    pub coupled_cases: usize,
    /// Replaces every default tolerance when set.
    pub tol: Option<f64>,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        IdentityOptions {
            seed: 0,
            dims: (4..=8).collect(),
            cases: 200,
            coupled_cases: 100,
            tol: None,
        }
    }
}

/// B(S,T) by summing over all index quadruples, independently of `b_product`.
pub fn b_product_direct(
    s: &CurvatureTensor,
    t: &CurvatureTensor,
    i: usize,
    j: usize,
    k: usize,
    l: usize,
) -> f64 {
    let n = s.dim();
    let mut v = 0.0;
    for p in 0..n {
        for q in 0..n {
            v += 0.5
                * (s.get(i, j, p, q) * t.get(k, l, p, q) + s.get(k, l, p, q) * t.get(i, j, p, q));
            v += s.get(i, p, k, q) * t.get(j, p, l, q)
                - s.get(i, p, l, q) * t.get(j, p, k, q)
                - s.get(j, p, k, q) * t.get(i, p, l, q)
                + s.get(j, p, l, q) * t.get(i, p, k, q);
        }
    }
    v
}

fn direct_error(s: &CurvatureTensor, t: &CurvatureTensor, b: &CurvatureTensor) -> f64 {
    let n = s.dim();
    let scale = b.max_abs().max(1.0);
    let mut worst: f64 = 0.0;
    for (i, j) in pairs(n) {
        for (k, l) in pairs(n) {
            worst =
                worst.max((b.get(i, j, k, l) - b_product_direct(s, t, i, j, k, l)).abs() / scale);
        }
    }
    worst
}

/// B(S, H⊼id) = Ric(S)⊼H + (S*H)⊼id.
pub fn b_with_kn_error(s: &CurvatureTensor, h: &SymmetricForm) -> Result<f64> {
    let lhs = b_product(s, &kn_with_identity(h))?;
    let rhs = kn_product(&ricci(s), h)?.add(&kn_with_identity(&contract_sh(s, h)?));
    Ok(lhs.max_rel_diff(&rhs))
}

/// Q(H⊼id) = (n−2)H⊼H + 2tr(H)H⊼id − 2H²⊼id + |H|² id⊼id.
pub fn q_of_kn_error(h: &SymmetricForm) -> Result<f64> {
    let n = h.dim();
    let rhs = kn_product(h, h)?
        .scale(n as f64 - 2.0)
        .axpy(2.0 * h.trace(), &kn_with_identity(h))
        .axpy(-2.0, &kn_with_identity(&h.square()))
        .axpy(h.norm_sq(), &id_kn_id(n));
    Ok(q_quadratic(&kn_with_identity(h)).max_rel_diff(&rhs))
}

/// Largest error of the two squared-KN identities for diag(0,1,…,1) and diag(−1,1,…,1).
pub fn kn_square_error(n: usize) -> Result<f64> {
    let diag = |first: f64| {
        let mut d = vec![1.0; n];
        d[0] = first;
        SymmetricForm::diagonal(&d)
    };
    let cylinder = kn_product(&diag(0.0), &diag(0.0))?.max_rel_diff(&kn_with_identity(&diag(-1.0)));
    let pseudo = kn_product(&diag(-1.0), &diag(-1.0))?.max_rel_diff(&kn_with_identity(&diag(-3.0)));
    Ok(cylinder.max(pseudo))
}

struct Tally {
    check: IdentityCheck,
}

impl Tally {
    fn new(name: &str, tol: f64) -> Self {
        Tally {
            check: IdentityCheck {
                name: name.to_string(),
                cases: 0,
                max_error: 0.0,
                tol,
                worst_n: 0,
                worst_case: 0,
                pass: true,
            },
        }
    }

    fn record(&mut self, n: usize, case: usize, err: f64) {
        let c = &mut self.check;
        c.cases += 1;
        if err > c.max_error || err.is_nan() {
            c.max_error = err;
            c.worst_n = n;
            c.worst_case = case;
        }
    }

    fn finish(mut self) -> IdentityCheck {
        self.check.pass = self.check.max_error <= self.check.tol;
        self.check
    }
}

fn case_rng(seed: u64, n: usize, case: usize) -> LabRng {
    rng_for(seed, (n as u64) << 32 | case as u64)
}

/// Runs every identity on random data for each requested dimension.
pub fn run_identities(opts: &IdentityOptions) -> Result<IdentityReport> {
    let tol = |default: f64| opts.tol.unwrap_or(default);
    let mut b_kn = Tally::new("b_with_kn", tol(RANDOM_TOL));
    let mut q_kn = Tally::new("q_of_kn", tol(RANDOM_TOL));
    let mut direct = Tally::new("b_product_direct", tol(RANDOM_TOL));
    let mut symmetric = Tally::new("b_product_symmetric", tol(EXACT_TOL));
    let mut ric_kn = Tally::new("ricci_of_kn", tol(EXACT_TOL));
    let mut contract = Tally::new("contract_kn_h", tol(EXACT_TOL));
    let mut squares = Tally::new("kn_squares", tol(EXACT_TOL));
    let mut coupled = Tally::new("coupled_residual", tol(COUPLED_TOL));

    for &n in &opts.dims {
        crate::algebra::check_dim(n)?;
        squares.record(n, 0, kn_square_error(n)?);
        for case in 0..opts.cases {
            let mut rng = case_rng(opts.seed, n, case);
            let s = random_tensor(&mut rng, n);
            let t = random_tensor(&mut rng, n);
            let h = random_form(&mut rng, n);
            b_kn.record(n, case, b_with_kn_error(&s, &h)?);
            q_kn.record(n, case, q_of_kn_error(&h)?);
            let st = b_product(&s, &t)?;
            symmetric.record(n, case, st.max_rel_diff(&b_product(&t, &s)?));
            // The quadruple sum is O(n⁶) per tensor; a handful of cases per dimension suffices.
            if case < 10 {
                direct.record(n, case, direct_error(&s, &t, &st));
            }
            let nf = n as f64;
            let expected = h.scale(nf - 2.0).shift(h.trace());
            ric_kn.record(
                n,
                case,
                ricci(&kn_with_identity(&h)).max_rel_diff(&expected),
            );
            let expected = h
                .scale(h.trace())
                .add(&h.square().scale(-2.0))
                .shift(h.norm_sq());
            contract.record(
                n,
                case,
                contract_sh(&kn_with_identity(&h), &h)?.max_rel_diff(&expected),
            );
        }
        if n >= 5 {
            for case in 0..opts.coupled_cases {
                let mut rng = case_rng(opts.seed ^ 0x5e95, n, case);
                let s = remove_traceless_ricci(&random_tensor(&mut rng, n));
                let h = random_form(&mut rng, n);
                let sigma = 0.05 + 1.95 * (case as f64 + 0.5) / opts.coupled_cases as f64;
                let (ds, dh) = rhs_coupled(&s, &h, sigma)?;
                coupled.record(n, case, coupled_residual(&s, &h, &ds, &dh));
            }
        }
    }

    let checks: Vec<_> = [
        b_kn, q_kn, direct, symmetric, ric_kn, contract, squares, coupled,
    ]
    .into_iter()
    .map(Tally::finish)
    .collect();
    let pass = checks.iter().all(|c| c.pass);
    Ok(IdentityReport {
        seed: opts.seed,
        dims: opts.dims.clone(),
        checks,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_suite_passes() {
        let opts = IdentityOptions {
            dims: vec![4, 5, 6],
            cases: 20,
            coupled_cases: 10,
            ..Default::default()
        };
        let report = run_identities(&opts).unwrap();
        for c in &report.checks {
            assert!(c.pass, "{c:?}");
            assert!(c.cases > 0);
        }
    }

    #[test]
    fn forced_tolerance_fails() {
        let opts = IdentityOptions {
            dims: vec![5],
            cases: 5,
            coupled_cases: 5,
            tol: Some(1e-20),
            ..Default::default()
        };
        let report = run_identities(&opts).unwrap();
        assert!(!report.pass);
        let failing = report.checks.iter().find(|c| !c.pass).unwrap();
        assert_eq!(failing.worst_n, 5);
    }

    #[test]
    fn kn_squares_are_exact() {
        for n in 4..=8 {
            assert!(kn_square_error(n).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn suite_is_deterministic() {
        let opts = IdentityOptions {
            dims: vec![5],
            cases: 5,
            coupled_cases: 5,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(
            run_identities(&opts).unwrap(),
            run_identities(&opts).unwrap()
        );
    }
}
