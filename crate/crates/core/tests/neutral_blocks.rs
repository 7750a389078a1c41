mod common;

use common::*;
use lyapscope_core::neutral::{decompose, neutral_blocks, pliss_suffix_times, zero_mean_residual, NeutralParams};
use num_rational::Ratio;
use proptest::prelude::*;

fn rational_seq() -> impl Strategy<Value = Vec<Ratio<i64>>> {
    prop::collection::vec((-6i64..=6, 1i64..=4).prop_map(|(n, d)| Ratio::new(n, d)), 0..80)
}

proptest! {
    #[test]
    fn rational_blocks_match_enumeration(seq in rational_seq(), a in 1i64..10, l in 1usize..8) {
        let alpha = Ratio::new(a, 10);
        let fast = neutral_blocks(&seq, &NeutralParams::new(alpha, l).unwrap());
        prop_assert_eq!(fast, neutral_blocks_by_enumeration(&seq, alpha, l));
    }

    #[test]
    fn decomposition_splits_the_mass(seq in rational_seq(), a in 1i64..10, l in 1usize..8) {
        let alpha = Ratio::new(a, 10);
        let orbit: Vec<usize> = (0..seq.len()).collect();
        let d = decompose(&orbit, &seq, &NeutralParams::new(alpha, l).unwrap()).unwrap();
        let total = d.m0.exact_mass() + d.m1.exact_mass();
        if seq.is_empty() {
            prop_assert_eq!(total, Ratio::from_integer(0));
        } else {
            prop_assert_eq!(total, Ratio::from_integer(1));
        }
        // m0's integral of phi is the block total over n
        let r = zero_mean_residual(&d, &seq).unwrap();
        let direct: Ratio<i64> = d.blocks.indices().map(|j| seq[j]).sum();
        if !seq.is_empty() {
            prop_assert_eq!(r, direct / Ratio::from_integer(seq.len() as i64));
        }
    }

    #[test]
    fn pliss_times_are_exactly_the_window_ends(seq in prop::collection::vec(-1.0f64..1.0, 1..60), k in 0usize..10) {
        let has_window = |j: usize| {
            (0..=k.min(j)).any(|back| {
                let st = j - back;
                let mut s = 0.0;
                seq[st..=j].iter().enumerate().all(|(m, x)| {
                    s += x;
                    s <= 0.2 * (m + 1) as f64
                })
            })
        };
        let expected: Vec<usize> = (0..seq.len()).filter(|&j| has_window(j)).collect();
        prop_assert_eq!(pliss_suffix_times(&seq, 0.2, k), expected);
    }
}

#[test]
fn constant_sequences() {
    let below = vec![0.05; 50];
    let b = neutral_blocks(&below, &NeutralParams::new(0.1, 5).unwrap());
    assert_eq!(b.covered(), 50);
    let above = vec![0.5; 50];
    assert_eq!(neutral_blocks(&above, &NeutralParams::new(0.1, 5).unwrap()).covered(), 0);
}
