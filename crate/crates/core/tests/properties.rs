use proptest::prelude::*;

use spdelab::covariance::CovarianceModel;
use spdelab::harness::{parse_config, ExperimentConfig};
use spdelab::noise::{build_sampler, GridSpec};
use spdelab::regularity::{compare_to_theory, Direction, HolderEstimate, Verdict};
use spdelab::solvability::{check_admissible, gamma0, gamma1, gamma_star, ProblemSpec};

fn estimate(direction: Direction, lower: f64) -> HolderEstimate {
    HolderEstimate {
        direction,
        exponent: lower + 0.05,
        confidence_interval: (lower, lower + 0.1),
        confidence: 0.95,
        standard_error: 0.025,
        replicates: 8,
        inconclusive: false,
    }
}

fn white_spec(lambda: f64) -> ProblemSpec {
    ProblemSpec {
        d: 1,
        lambda,
        model: CovarianceModel::white(),
        gamma: 0.1,
        p: 100.0,
    }
}

proptest! {
    #[test]
    fn gamma_thresholds_are_ordered(d in 1usize..4, lambda in 0.0f64..1.0, dl in 0.0f64..0.5) {
        prop_assert!(gamma0(d, lambda) <= gamma1(d, lambda));
        prop_assert!(gamma1(d, lambda) <= 0.5);
        prop_assert!(gamma0(d, lambda + dl) <= gamma0(d, lambda));
        prop_assert!(gamma1(d, lambda + dl) <= gamma1(d, lambda));
    }

    #[test]
    fn admissible_gamma_stays_below_supremum(lambda in 0.0f64..0.5, frac in 0.01f64..1.5, alpha in 0.05f64..0.95) {
        for model in [CovarianceModel::white(), CovarianceModel::riesz(alpha, 1).unwrap()] {
            let Some(star) = gamma_star(1, lambda, &model) else { continue };
            let gamma = frac * star;
            let spec = ProblemSpec { d: 1, lambda, model, gamma, p: 4.0 * 3.0 / gamma };
            let r = check_admissible(&spec).unwrap();
            prop_assert_eq!(r.admissible, gamma < star, "γ = {}, γ* = {}", gamma, star);
        }
    }

    #[test]
    fn admissibility_is_monotone_in_p(lambda in 0.0f64..0.5, gamma in 0.01f64..0.5, p in 2.5f64..400.0) {
        let spec = ProblemSpec { gamma, p, ..white_spec(lambda) };
        let bigger = ProblemSpec { p: 2.0 * p, ..spec.clone() };
        if check_admissible(&spec).unwrap().admissible {
            prop_assert!(check_admissible(&bigger).unwrap().admissible);
        }
    }

    #[test]
    fn verdict_is_monotone_in_lower_edge(lower in -0.5f64..1.0, raise in 0.0f64..0.5, tol in 0.0f64..0.1) {
        let spec = white_spec(0.0);
        let low = compare_to_theory(Some(&estimate(Direction::Space, lower)), None, &spec, 0.05, tol);
        let high = compare_to_theory(Some(&estimate(Direction::Space, lower + raise)), None, &spec, 0.05, tol);
        prop_assert_ne!(low.verdict, Verdict::Inconclusive);
        if low.verdict == Verdict::Meets {
            prop_assert_eq!(high.verdict, Verdict::Meets);
        }
        prop_assert_eq!(low.verdict == Verdict::Meets, lower >= low.target_space - tol);
    }

    #[test]
    fn missing_estimate_does_not_change_verdict(lower in 0.0f64..1.0) {
        let spec = white_spec(0.0);
        let e = estimate(Direction::Time, lower);
        let alone = compare_to_theory(None, Some(&e), &spec, 0.05, 0.02);
        let mut flat = estimate(Direction::Space, 0.9);
        flat.inconclusive = true;
        let with_flat = compare_to_theory(Some(&flat), Some(&e), &spec, 0.05, 0.02);
        prop_assert_ne!(alone.verdict, Verdict::Inconclusive);
        prop_assert_eq!(with_flat.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn noise_synthesis_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, c in 0.1f64..4.0) {
        let grid = GridSpec::new(1, 32, 6.0).unwrap();
        let mut s = build_sampler(&CovarianceModel::gaussian(c, 1).unwrap(), &grid, seed, 0).unwrap();
        let z1: Vec<f64> = (0..32).map(|i| ((i as u64 ^ seed) % 7) as f64 - 3.0).collect();
        let z2: Vec<f64> = (0..32).map(|i| (i as f64).sin()).collect();
        let mix: Vec<f64> = z1.iter().zip(&z2).map(|(x, y)| a * x + y).collect();
        let (w1, w2, wm) = (s.synthesize(&z1, 0.1), s.synthesize(&z2, 0.1), s.synthesize(&mix, 0.1));
        for i in 0..32 {
            prop_assert!((wm[i] - (a * w1[i] + w2[i])).abs() <= 1e-12 * (1.0 + a.abs()) * 10.0);
        }
    }

    #[test]
    fn resolved_config_round_trips(d in 1usize..3, lambda in 0.0f64..0.2, n in 4u32..7, seed in any::<u64>(), paths in 1usize..50) {
        let src = format!(
            "[problem]\nd = {d}\nlambda = {lambda:?}\ncovariance = {{ kind = \"gaussian\", c = 1.0 }}\n[grid]\nn = {}\n[run]\nseed = {seed}\npaths = {paths}\n",
            1usize << n
        );
        let config = parse_config(&src, "prop.toml").unwrap();
        let json = serde_json::to_string(&config).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), json);
        prop_assert_eq!(config.paths, paths);
    }
}
