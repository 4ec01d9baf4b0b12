use orbit_core::basisgen::{captured_power, radial_basis, synthetic_volume};
use orbit_core::group::{act, so2_rule, GroupElement, SeedStream};
use orbit_core::harmonics::{cg, wigner_d, Euler};
use orbit_core::landscape::{mra_phase_objective, procrustes_s2, sin_cos_reduced};
use orbit_core::likelihood::{generate, neg_log_lik, SampleBatch};
use orbit_core::models::{make_model, ModelSpec};
use orbit_core::moments::s_closed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn randn(seed: u64, n: usize) -> Vec<f64> {
    let mut r = SeedStream::new(seed).rng();
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

fn models() -> Vec<ModelSpec> {
    vec![
        make_model("mra", 4, &[], 0).unwrap(),
        make_model("mra-projected", 3, &[], 0).unwrap(),
        make_model("sphere", 3, &[], 0).unwrap(),
        make_model("cryo", 2, &[2, 2, 2], 0).unwrap(),
        make_model("cryo-projected", 1, &[4, 4], 0).unwrap(),
        make_model("procrustes", 1, &[], 4).unwrap(),
    ]
}

fn element(m: &ModelSpec, a: f64, b: f64, c: f64, reflect: bool) -> GroupElement {
    match m.kind.name() {
        "mra" | "mra-projected" => GroupElement::So2(a / std::f64::consts::TAU),
        "procrustes" => GroupElement::O3 {
            rot: Euler::new(a, b, c),
            reflect,
        },
        _ => GroupElement::So3(Euler::new(a, b, c)),
    }
}

fn angles() -> impl Strategy<Value = (f64, f64, f64)> {
    (
        0.0..std::f64::consts::TAU,
        0.0..std::f64::consts::PI,
        0.0..std::f64::consts::TAU,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cg_sign_symmetry(l in 0i64..=6, lp in 0i64..=6, lpp in 0i64..=6, m in -6i64..=6, mp in -6i64..=6) {
        let mpp = m + mp;
        let sign = if (l + lp + lpp) % 2 == 0 { 1.0 } else { -1.0 };
        let a = cg(l, lp, lpp, m, mp, mpp);
        let b = cg(l, lp, lpp, -m, -mp, -mpp);
        prop_assert!((a - sign * b).abs() <= 1e-12);
    }

    #[test]
    fn wigner_blocks_are_unitary(l in 0usize..=6, (a, b, c) in angles()) {
        let d = wigner_d(l, Euler::new(a, b, c));
        let n = 2 * l as i64 + 1;
        for i in 0..n {
            for j in 0..n {
                let mut s = num_complex::Complex64::new(0.0, 0.0);
                for k in 0..n {
                    s += d.get(k - l as i64, i - l as i64).conj() * d.get(k - l as i64, j - l as i64);
                }
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((s.re - want).abs() < 1e-12 && s.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn series_terms_are_orbit_invariant(
        which in 0usize..6,
        seed in 0u64..1000,
        (a, b, c) in angles(),
        reflect in any::<bool>(),
    ) {
        let m = &models()[which];
        let theta = randn(seed, m.dim());
        let star = randn(seed + 5000, m.dim());
        let g = element(m, a, b, c, reflect);
        let gt = act(m, &g, &theta).unwrap();
        let gs = act(m, &g, &star).unwrap();
        for k in 1..=3 {
            let base = s_closed(m, &theta, &star, k).unwrap().value;
            let moved = s_closed(m, &gt, &star, k).unwrap().value;
            let both = s_closed(m, &gt, &gs, k).unwrap().value;
            let tol = 1e-9 * base.abs().max(1.0);
            prop_assert!(base >= -tol);
            prop_assert!((base - moved).abs() <= tol, "{} k={k}: {base} vs {moved}", m.kind);
            prop_assert!((base - both).abs() <= tol);
            prop_assert!(s_closed(m, &star, &star, k).unwrap().value.abs() <= 1e-12);
        }
    }

    #[test]
    fn phase_objective_ignores_orbit_shift(seed in 0u64..1000, c in -10.0f64..10.0, l in 3usize..12) {
        let r: Vec<f64> = randn(seed, l).iter().map(|v| v.abs() + 0.1).collect();
        let t = randn(seed + 1, l);
        let shifted: Vec<f64> = t.iter().enumerate().map(|(i, v)| v + c * (i + 1) as f64).collect();
        let (v0, g0, _) = mra_phase_objective(&r, &t).unwrap();
        let (v1, g1, _) = mra_phase_objective(&r, &shifted).unwrap();
        let scale = v0.abs().max(1.0);
        prop_assert!((v0 - v1).abs() <= 1e-9 * scale);
        for (a, b) in g0.iter().zip(&g1) {
            prop_assert!((a - b).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn reduced_sin_cos_agrees(x in -1e4f64..1e4) {
        let (s, c) = sin_cos_reduced(x);
        prop_assert!((s - x.sin()).abs() <= 1e-11 && (c - x.cos()).abs() <= 1e-11);
    }

    #[test]
    fn procrustes_is_o3_invariant(seed in 0u64..1000, (a, b, c) in angles(), reflect in any::<bool>()) {
        let m = make_model("procrustes", 1, &[], 5).unwrap();
        let theta = randn(seed, 15);
        let star = randn(seed + 1, 15);
        let gt = act(&m, &GroupElement::O3 { rot: Euler::new(a, b, c), reflect }, &theta).unwrap();
        let v0 = procrustes_s2(&theta, &star, 5).unwrap();
        let v1 = procrustes_s2(&gt, &star, 5).unwrap();
        prop_assert!((v0 - v1).abs() <= 1e-9 * v0.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn likelihood_invariant_under_rule_nodes(seed in 0u64..1000, node in 0usize..32) {
        let m = make_model("mra", 2, &[], 0).unwrap();
        let rule = so2_rule(32).unwrap();
        let star = randn(seed, m.dim());
        let batch = generate(&m, &star, 1.5, 300, &rule, seed).unwrap();
        let theta = randn(seed + 9, m.dim());
        let moved = act(&m, &rule.nodes[node], &theta).unwrap();
        let a = neg_log_lik(&m, &theta, &batch, &rule).unwrap();
        let b = neg_log_lik(&m, &moved, &batch, &rule).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn sample_batch_round_trips(seed in 0u64..1000, n in 1usize..50) {
        let m = make_model("cryo", 1, &[2, 2], 0).unwrap();
        let rule = orbit_core::group::so3_rule(4, 4, 4).unwrap();
        let star = randn(seed, m.dim());
        let batch = generate(&m, &star, 0.3, n, &rule, seed).unwrap();
        let mut buf = Vec::new();
        batch.write_binary(&mut buf).unwrap();
        let back = SampleBatch::read_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(back.obs, batch.obs);
        prop_assert_eq!(back.seed, batch.seed);
        prop_assert_eq!(back.sigma, batch.sigma);
    }

    #[test]
    fn captured_power_grows_with_basis_size(seed in 0u64..200) {
        let vol = synthetic_volume(10, 8, 10, 1.0, 2, 10, seed).unwrap();
        let total = vol.total_power();
        let mut last = 0.0;
        for s in 1..=6 {
            let p = captured_power(&vol, &radial_basis(&vol, s).unwrap()).unwrap();
            prop_assert!(p >= last - 1e-12 * total);
            prop_assert!(p <= total * (1.0 + 1e-10));
            last = p;
        }
    }
}
