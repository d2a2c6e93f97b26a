mod common;

use ortdrift::ort::{best_split, FitConfig};

use common::*;

#[test]
fn axis_search_matches_brute_force() {
    for seed in 1000..1400 {
        let size = 2 + (seed as usize * 7) % 63;
        let node = random_node(seed, size);
        for min_leaf in [1, 2, 5] {
            if node.len() < 2 * min_leaf {
                continue;
            }
            let cfg = FitConfig {
                min_leaf,
                ..FitConfig::axis_aligned()
            };
            let got = best_split(&node, &cfg).unwrap();
            let want = brute_force_split(&node, min_leaf);
            match (got, want) {
                (None, None) => {}
                (Some((rule, gain)), Some((axis, c, g))) => {
                    assert_eq!(rule.alpha(), axes()[axis], "seed {seed}");
                    assert_eq!(rule.threshold(), c, "seed {seed}");
                    assert!((gain - g).abs() <= 1e-12 * g.max(1.0), "seed {seed}: {gain} vs {g}");
                }
                (got, want) => panic!("seed {seed}: {got:?} vs {want:?}"),
            }
        }
    }
}

#[test]
fn noiseless_edge_is_fitted_with_two_leaves() {
    for (n, first) in [(32, 1), (32, 6), (64, 1), (64, 30)] {
        let check = jump_check(n, first, 20);
        assert!(check.sse < 1e-18, "n {n}: sse {}", check.sse);
        assert_eq!(check.leaves, 2, "n {n}");
        assert!(check.edge_error <= 1, "n {n}: edge off by {}", check.edge_error);
    }
}

#[test]
fn imputation_is_exact_on_affine_sequences() {
    for seed in 0..20 {
        let err = imputation_error(seed);
        assert!(err < 1e-12, "seed {seed}: {err}");
    }
}
