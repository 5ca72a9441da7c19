use proptest::prelude::*;

use curvlab::algebra::{
    b_product, bianchi_project, id_kn_id, kn_product, kn_with_identity, ricci, scalar,
    CurvatureTensor, TensorRecord,
};
use curvlab::flow::{
    reaction_pair_eigenvalue, reaction_pair_high_sigma_form, reaction_pair_low_sigma_form,
    EigenData,
};
use curvlab::generate::{random_curvature, CurvatureClass};
use curvlab::oracle::{isotropic_min, pic1_min, pic2_min, ConeGeometry, ConeSpec, OracleOptions};
use curvlab::pinching::{pinched_slack, PinchingFunction};
use curvlab::sampling::{gaussian, random_form, random_orthogonal, random_tensor, rng_for};

/// All orderings of `items` with their signs.
fn permutations(items: &[usize]) -> Vec<(Vec<usize>, f64)> {
    if items.len() <= 1 {
        return vec![(items.to_vec(), 1.0)];
    }
    let mut out = Vec::new();
    for (k, &first) in items.iter().enumerate() {
        let rest: Vec<usize> = items
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != k)
            .map(|(_, &x)| x)
            .collect();
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        for (mut tail, s) in permutations(&rest) {
            tail.insert(0, first);
            out.push((tail, sign * s));
        }
    }
    out
}

fn fast() -> OracleOptions {
    OracleOptions::with_restarts(8)
}

/// A tensor whose PIC2 status varies from case to case: c·id⊼id plus noise.
fn shifted_tensor(n: usize, seed: u64, c: f64) -> CurvatureTensor {
    let noise = random_tensor(&mut rng_for(seed, 1), n);
    noise.axpy(c, &id_kn_id(n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kn_is_symmetric_and_bilinear(n in 4usize..=8, seed in any::<u64>(), s in -3.0f64..3.0) {
        let mut rng = rng_for(seed, 0);
        let (a, b, c) = (random_form(&mut rng, n), random_form(&mut rng, n), random_form(&mut rng, n));
        let ab = kn_product(&a, &b).unwrap();
        prop_assert!(ab.max_rel_diff(&kn_product(&b, &a).unwrap()) <= 1e-12);
        let lhs = kn_product(&a.scale(s).add(&c), &b).unwrap();
        let rhs = ab.scale(s).add(&kn_product(&c, &b).unwrap());
        prop_assert!(lhs.max_rel_diff(&rhs) <= 1e-12);
        prop_assert!(ab.bianchi_defect() <= 1e-12 * ab.max_abs().max(1.0));
    }

    #[test]
    fn ricci_of_kn_with_identity(n in 4usize..=8, seed in any::<u64>()) {
        let h = random_form(&mut rng_for(seed, 0), n);
        let expected = h.scale(n as f64 - 2.0).shift(h.trace());
        prop_assert!(ricci(&kn_with_identity(&h)).max_rel_diff(&expected) <= 1e-12);
    }

    #[test]
    fn b_product_is_symmetric_and_bilinear(n in 4usize..=7, seed in any::<u64>(), s in -2.0f64..2.0) {
        let mut rng = rng_for(seed, 0);
        let (x, y, z) = (random_tensor(&mut rng, n), random_tensor(&mut rng, n), random_tensor(&mut rng, n));
        let xy = b_product(&x, &y).unwrap();
        prop_assert!(xy.max_rel_diff(&b_product(&y, &x).unwrap()) <= 1e-12);
        let lhs = b_product(&x.scale(s).add(&z), &y).unwrap();
        let rhs = xy.scale(s).add(&b_product(&z, &y).unwrap());
        prop_assert!(lhs.max_rel_diff(&rhs) <= 1e-11);
    }

    #[test]
    fn bianchi_projection_is_idempotent(n in 4usize..=8, seed in any::<u64>(), c in -5.0f64..5.0) {
        let r = random_tensor(&mut rng_for(seed, 0), n);
        // Adding a multiple of e₀∧e₁∧e₂∧e₃ keeps the pair symmetries and breaks Bianchi.
        let mut raw = r.full();
        for (p, sign) in permutations(&[0, 1, 2, 3]) {
            raw[((p[0] * n + p[1]) * n + p[2]) * n + p[3]] += c * sign;
        }
        let once = bianchi_project(n, &raw, 1e-9).unwrap();
        prop_assert!(once.bianchi_defect() <= 1e-12 * once.max_abs().max(1.0));
        prop_assert!(once.max_rel_diff(&r) <= 1e-13);
        prop_assert!(once.projected().max_rel_diff(&once) <= 1e-14);
    }

    #[test]
    fn serialization_roundtrips(n in 4usize..=8, seed in any::<u64>()) {
        let r = random_tensor(&mut rng_for(seed, 0), n);
        prop_assert_eq!(CurvatureTensor::from_record(&TensorRecord::from_bytes(&r.to_record().to_bytes()).unwrap()).unwrap(), r);
    }

    #[test]
    fn reaction_pair_eigenvalue_is_nonnegative(
        n in 5usize..=8,
        seed in any::<u64>(),
        sigma in 0.001f64..=2.0,
        pick in any::<(u8, u8)>(),
    ) {
        let mut rng = rng_for(seed, 0);
        let a: Vec<f64> = (0..n).map(|_| gaussian(&mut rng).abs() * 10f64.powf(2.0 * gaussian(&mut rng))).collect();
        let data = EigenData::new(a);
        let i = pick.0 as usize % n;
        let j = (i + 1 + pick.1 as usize % (n - 1)) % n;
        let raw = reaction_pair_eigenvalue(&data, sigma, i, j).unwrap();
        let scale = data.a.iter().map(|x| x * x).sum::<f64>().max(1e-300);
        prop_assert!(raw >= -1e-9 * scale);
        let tol = 1e-10 * scale.max(raw.abs());
        prop_assert!((reaction_pair_low_sigma_form(&data, sigma, i, j).unwrap() - raw).abs() <= tol);
        prop_assert!((reaction_pair_high_sigma_form(&data, sigma, i, j).unwrap() - raw).abs() <= tol);
    }

    #[test]
    fn pinching_function_is_concave_and_increasing(
        sigma0 in 1.05f64..1.95,
        theta in 0.0f64..0.1,
        n in 5usize..=8,
        s in 0.0f64..1e4,
        gap in 1e-3f64..1e3,
    ) {
        let f = PinchingFunction::build(sigma0, theta, n, None).unwrap();
        let (a, b, c) = (f.eval(s).unwrap(), f.eval(s + gap).unwrap(), f.eval(s + 2.0 * gap).unwrap());
        prop_assert!(b >= a);
        prop_assert!(2.0 * b - a - c >= -1e-9 * c.abs().max(1.0));
        prop_assert!(a >= s / (n as f64 - 2.0) - 1e-9 * a.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cone_slack_is_homogeneous(n in 5usize..=6, seed in any::<u64>(), c in 0.0f64..3.0, scale in 0.01f64..100.0) {
        let r = shifted_tensor(n, seed, c);
        let spec = ConeSpec::new(1.5, 0.02).unwrap();
        let g = ConeGeometry::new(&r, &fast(), &[]);
        let gs = ConeGeometry::new(&r.scale(scale), &fast(), &g.warm_start());
        let (a, b) = (g.slack(&spec) * scale, gs.slack(&spec));
        prop_assert!((a - b).abs() <= 1e-7 * gs.scale, "{a} vs {b}");
    }

    #[test]
    fn cone_slack_is_rotation_invariant(n in 5usize..=6, seed in any::<u64>(), c in 0.0f64..3.0) {
        let r = shifted_tensor(n, seed, c);
        let q = random_orthogonal(&mut rng_for(seed, 2), n);
        let spec = ConeSpec::new(1.0, 0.0).unwrap();
        let a = ConeGeometry::new(&r, &fast(), &[]).slack(&spec);
        let b = ConeGeometry::new(&r.rotated(&q), &fast(), &[]).slack(&spec);
        prop_assert!((a - b).abs() <= 1e-7 * r.max_abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn cones_are_nested(n in 5usize..=7, seed in any::<u64>(), c in 0.0f64..3.0, s1 in 0.1f64..2.0, s2 in 0.1f64..2.0, t1 in 0.0f64..0.5, t2 in 0.0f64..0.5) {
        let g = ConeGeometry::new(&shifted_tensor(n, seed, c), &fast(), &[]);
        let (lo, hi) = (s1.min(s2), s1.max(s2));
        let (weak, strict) = (t1.min(t2), t1.max(t2));
        // Larger σ and smaller θ give larger cones.
        prop_assert!(g.slack(&ConeSpec::new(hi, weak).unwrap()) >= g.slack(&ConeSpec::new(lo, weak).unwrap()));
        prop_assert!(g.slack(&ConeSpec::new(lo, weak).unwrap()) >= g.slack(&ConeSpec::new(lo, strict).unwrap()));
    }

    #[test]
    fn sphere_shift_agrees_with_fresh_oracle(n in 5usize..=6, seed in any::<u64>(), c in 0.0f64..2.0, shift in 0.0f64..2.0) {
        let r = shifted_tensor(n, seed, c);
        let spec = ConeSpec::new(1.2, 0.05).unwrap();
        let g = ConeGeometry::new(&r, &fast(), &[]);
        let shifted = g.shifted(shift);
        let fresh = ConeGeometry::new(&r.axpy(shift, &id_kn_id(n)), &fast(), &g.warm_start());
        prop_assert!(shifted.slack(&spec) >= g.slack(&spec));
        prop_assert!((shifted.slack(&spec) - fresh.slack(&spec)).abs() <= 1e-7 * fresh.scale);
    }

    #[test]
    fn positivity_conditions_are_nested(n in 4usize..=6, seed in any::<u64>(), c in 0.0f64..3.0) {
        let r = shifted_tensor(n, seed, c);
        let band = 1e-6 * r.max_abs();
        let (p2, p1, iso) = (pic2_min(&r, &fast()).value, pic1_min(&r, &fast()).value, isotropic_min(&r, &fast()).value);
        if p2 > band {
            prop_assert!(p1 > -band);
        }
        if p1 > band {
            prop_assert!(iso > -band);
        }
    }

    #[test]
    fn deeper_pinching_is_stricter(seed in any::<u64>(), c in 0.0f64..3.0, depth in 1usize..20) {
        let f = PinchingFunction::build(1.5, 0.05, 5, None).unwrap();
        let g = ConeGeometry::new(&shifted_tensor(5, seed, c), &fast(), &[]);
        prop_assert!(pinched_slack(&g, &f).0 <= pinched_slack(&g, &f.truncated(depth)).0);
    }

    #[test]
    fn pinched_slack_grows_with_sphere_shift(seed in any::<u64>(), c in 0.0f64..3.0, shift in 1e-3f64..2.0) {
        let f = PinchingFunction::build(1.5, 0.05, 5, None).unwrap();
        let g = ConeGeometry::new(&shifted_tensor(5, seed, c), &fast(), &[]);
        prop_assert!(pinched_slack(&g.shifted(shift), &f).0 > pinched_slack(&g, &f).0);
    }

    #[test]
    fn random_curvature_is_reproducible(n in 4usize..=7, seed in any::<u64>()) {
        let a = random_curvature(n, seed, CurvatureClass::Generic, &fast()).unwrap();
        let b = random_curvature(n, seed, CurvatureClass::Generic, &fast()).unwrap();
        prop_assert_eq!(a.to_record().to_bytes(), b.to_record().to_bytes());
        prop_assert!(scalar(&a).is_finite());
    }
}
