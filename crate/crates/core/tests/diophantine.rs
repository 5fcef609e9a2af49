use proptest::prelude::*;
use revtori::diophantine::{best_gamma_estimate, diophantine_verify, resonance_scan, FrequencyData};

const GOLDEN: f64 = 1.618033988749895;

/// min over 1 <= |J|_1 <= bound of |J1 + J2 phi| |J|^tau, by plain loops.
fn golden_minimum(tau: f64, bound: i64) -> (f64, (i64, i64)) {
    let mut best = (f64::INFINITY, (0, 0));
    for a in -bound..=bound {
        for b in -bound..=bound {
            let order = a.abs() + b.abs();
            if order == 0 || order > bound {
                continue;
            }
            // negation gives the same margin, keep the canonical half
            if !(a > 0 || (a == 0 && b > 0)) {
                continue;
            }
            let m = (a as f64 + b as f64 * GOLDEN).abs() * (order as f64).powf(tau);
            if m < best.0 || (m == best.0 && (a, b) < best.1) {
                best = (m, (a, b));
            }
        }
    }
    best
}

#[test]
fn golden_pair_gamma_matches_brute_force() {
    let mut fd = FrequencyData::new(vec![], vec![1.0, GOLDEN], vec![], 1.2, 1.0, 200);
    let (oracle, arg) = golden_minimum(1.2, 200);
    let gamma = best_gamma_estimate(&fd).unwrap();
    assert!((gamma - oracle).abs() <= 1e-12 * oracle, "{gamma} vs {oracle}");
    fd.gamma = gamma;
    let rep = diophantine_verify(&fd).unwrap();
    assert!(rep.passed);
    let m = rep.minimizer.unwrap();
    assert_eq!((m.big_j[0], m.big_j[1]), arg);
    fd.gamma = gamma * (1.0 + 1e-9);
    assert!(!diophantine_verify(&fd).unwrap().passed);
    assert!(resonance_scan(&fd, 0.999 * oracle).unwrap().is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gamma_estimate_is_sharp_and_homogeneous(
        w in 0.3f64..2.0, big in 0.3f64..2.0, b in 0.2f64..2.0, c in 0.1f64..10.0,
    ) {
        let mut fd = FrequencyData::new(vec![w], vec![big], vec![b], 1.5, 1.0, 30);
        let g = best_gamma_estimate(&fd).unwrap();
        prop_assume!(g > 1e-9);
        fd.gamma = g;
        prop_assert!(diophantine_verify(&fd).unwrap().passed);
        fd.gamma = g * (1.0 + 1e-9);
        prop_assert!(!diophantine_verify(&fd).unwrap().passed);
        let scaled = FrequencyData::new(vec![c * w], vec![c * big], vec![c * b], 1.5, 1.0, 30);
        let gs = best_gamma_estimate(&scaled).unwrap();
        prop_assert!((gs - c * g).abs() <= 1e-9 * gs);
    }

    #[test]
    fn margins_are_symmetric_under_negation(w in 0.3f64..2.0, big in 0.3f64..2.0, b in 0.2f64..2.0) {
        let fd = FrequencyData::new(vec![w], vec![big], vec![b], 1.5, 1.0, 6);
        let all = resonance_scan(&fd, f64::INFINITY).unwrap();
        prop_assert_eq!(all.len(), diophantine_verify(&fd).unwrap().window_size);
        for r in &all {
            let neg = all
                .iter()
                .find(|s| {
                    s.j.iter().zip(&r.j).all(|(a, b)| *a == -b)
                        && s.big_j.iter().zip(&r.big_j).all(|(a, b)| *a == -b)
                        && s.q.iter().zip(&r.q).all(|(a, b)| *a == -b)
                })
                .unwrap();
            prop_assert_eq!(neg.margin, r.margin);
        }
        prop_assert!(all.windows(2).all(|p| p[0].margin <= p[1].margin));
    }
}

#[test]
fn resonant_scan_lists_resonance_first() {
    let fd = FrequencyData::new(vec![1.0], vec![], vec![0.5], 0.5, 0.1, 10);
    let scan = resonance_scan(&fd, 1.0).unwrap();
    assert_eq!((scan[0].j.clone(), scan[0].q.clone(), scan[0].margin), (vec![1], vec![-2], 0.0));
}
