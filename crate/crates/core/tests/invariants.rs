use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pmfs_core::graphgen::{pa_generate, DegreeKind, PAParams};
use pmfs_core::ldp::{build_kernels, AtomicMeasure, GammaRule, LDConfig};
use pmfs_core::presets::{mckean, random_config, RandomSpec};
use pmfs_core::rates::{compute_rates, theorem_bound};
use pmfs_core::simulate::{estimate_error, SimConfig};
use pmfs_core::{LevySpec, MatrixRole, NetworkConfig};

fn spec(n: usize, extra: usize, density: f64) -> RandomSpec {
    let mut s = RandomSpec::new(n, n + extra);
    s.density = density;
    s
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn periphery_growth_never_lowers_drift_rates(n in 2usize..9, extra in 0usize..3, density in 0.1f64..0.8, seed in 0u64..1000, k in 1.0f64..3.0) {
        let (c, noise) = random_config(&spec(n, extra, density), seed).unwrap();
        let bigger = c.map(|role, m| if role == MatrixRole::APeriphery { m.scale(k) } else { m.clone() }).unwrap();
        let r0 = compute_rates(&c, &noise, 1.0).unwrap();
        let r1 = compute_rates(&bigger, &noise, 1.0).unwrap();
        for i in [0, 2, 6, 8, 10] {
            prop_assert!(r1[i] >= r0[i] * (1.0 - 1e-12), "r{} fell from {} to {}", i + 1, r0[i], r1[i]);
        }
    }

    #[test]
    fn doubling_the_periphery_at_most_doubles_rates(n in 2usize..9, seed in 0u64..1000) {
        let (c, noise) = random_config(&spec(n, 1, 0.4), seed).unwrap();
        let doubled = c.map(|role, m| if role.is_periphery() { m.scale(2.0) } else { m.clone() }).unwrap();
        let r0 = compute_rates(&c, &noise, 1.0).unwrap();
        let r1 = compute_rates(&doubled, &noise, 1.0).unwrap();
        for i in 0..12 {
            prop_assert!(r1[i] <= 2.0 * r0[i] * (1.0 + 1e-12) + 1e-300);
        }
    }

    #[test]
    fn rates_are_relabelling_invariant(n in 2usize..10, extra in 0usize..3, seed in 0u64..1000) {
        let (c, noise) = random_config(&spec(n, extra, 0.4), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pp: Vec<usize> = (0..n).collect();
        let mut pm: Vec<usize> = (0..n + extra).collect();
        pp.shuffle(&mut rng);
        pm.shuffle(&mut rng);
        let r0 = compute_rates(&c, &noise, 1.0).unwrap();
        let r1 = compute_rates(&c.permute(&pp, &pm).unwrap(), &noise.permute(&pp, &pm).unwrap(), 1.0).unwrap();
        for i in 0..12 {
            prop_assert!(close(r0[i], r1[i]), "r{}: {} vs {}", i + 1, r0[i], r1[i]);
        }
    }

    #[test]
    fn config_text_round_trips(n in 1usize..12, extra in 0usize..4, seed in 0u64..1000) {
        let (coeffs, noise) = random_config(&spec(n, extra, 0.3), seed).unwrap();
        let cfg = NetworkConfig { coeffs, noise, layout: None };
        let back = NetworkConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn lambda_is_midpoint_convex(seed in 0u64..500, w1 in -2.0f64..2.0, w2 in -2.0f64..2.0, q1 in 0usize..=20, q2 in 0usize..=20) {
        let p = mckean::<f64>(3, 0.0, 1.0).unwrap();
        let ld = LDConfig { gamma: GammaRule::Identity, d: Some(3), dominating: LevySpec::brownian(1.0) };
        let k = build_kernels(&p.coeffs, &ld, 3, 1.0, 20).unwrap();
        let specs = vec![LevySpec::new(0.5, 1.0, vec![(0.3, 1.0)]).unwrap(); p.coeffs.m()];
        let c1 = (seed % 3) as usize;
        let t1 = AtomicMeasure::point(3, c1, q1 as f64 / 20.0, w1).unwrap();
        let t2 = AtomicMeasure::point(3, (c1 + 1) % 3, q2 as f64 / 20.0, w2).unwrap();
        let mid = t1.scale(0.5).add(&t2.scale(0.5)).unwrap();
        let (l1, l2, lm) = (k.lambda(&specs, &t1).unwrap(), k.lambda(&specs, &t2).unwrap(), k.lambda(&specs, &mid).unwrap());
        prop_assert!(lm <= 0.5 * (l1 + l2) + 1e-12);
        prop_assert!(l1 >= 0.0 && l2 >= 0.0);
    }

    #[test]
    fn pa_graph_grows_one_edge_per_step(steps in 1usize..400, seed in 0u64..1000, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (alpha, beta) = (a * (1.0 - 0.5 * b), b * 0.5);
        let params = PAParams::new(alpha, beta, 1.0 - alpha - beta, 0.5, 1.5).unwrap();
        let g = pa_generate(&params, steps, seed).unwrap();
        prop_assert_eq!(g.n_edges(), steps + 1);
        prop_assert_eq!(g.in_deg.iter().sum::<usize>(), g.n_edges());
        prop_assert_eq!(g.out_deg.iter().sum::<usize>(), g.n_edges());
        prop_assert!(g.history.windows(2).all(|w| w[1].m_in >= w[0].m_in && w[1].m_out >= w[0].m_out && w[1].n_active >= w[0].n_active));
        prop_assert_eq!(g.max_degree(DegreeKind::In), *g.in_deg.iter().max().unwrap());
    }
}

#[test]
fn mckean_first_rate_is_closed_form() {
    for n in [2usize, 5, 17, 64] {
        let p = mckean::<f64>(n, 0.0, 0.49).unwrap();
        let r = compute_rates(&p.coeffs, &p.noise, 1.0).unwrap();
        let want = 0.7 / ((n - 1) as f64).sqrt();
        assert!(close(r[0], want), "N = {n}: {} vs {want}", r[0]);
    }
}

#[test]
fn zero_periphery_gives_zero_rates_bound_and_distance() {
    let mut s = spec(6, 2, 0.5);
    s.zero_periphery = true;
    let (c, noise) = random_config(&s, 42).unwrap();
    let rep = theorem_bound(&c, &noise, 1.0).unwrap();
    assert!(rep.r.iter().all(|&r| r == 0.0));
    assert_eq!(rep.bound, 0.0);
    let est = estimate_error(&c, &noise, &SimConfig::new(1.0, 50, 40, 1)).unwrap();
    assert_eq!(est.delta_hat, 0.0);
}

#[test]
fn simulation_is_reproducible() {
    let (c, noise) = random_config(&spec(5, 1, 0.4), 8).unwrap();
    let sim = SimConfig::new(1.0, 60, 64, 99);
    let a = estimate_error(&c, &noise, &sim).unwrap();
    let b = estimate_error(&c, &noise, &sim).unwrap();
    assert_eq!(a, b);
    let other = estimate_error(&c, &noise, &SimConfig::new(1.0, 60, 64, 100)).unwrap();
    assert_ne!(a.delta_hat, other.delta_hat);
}
