mod common;

use common::{brute_ap, brute_auc, instance};
use proptest::prelude::*;
use tna_core::metrics::{auc, average_precision};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn auc_matches_pairwise_count((pos, neg) in instance()) {
        prop_assert!((auc(&pos, &neg).unwrap() - brute_auc(&pos, &neg)).abs() <= 1e-12);
    }

    #[test]
    fn ap_matches_rank_oracle((pos, neg) in instance()) {
        prop_assert!((average_precision(&pos, &neg).unwrap() - brute_ap(&pos, &neg)).abs() <= 1e-12);
    }

    #[test]
    fn auc_is_rank_invariant((pos, neg) in instance()) {
        let f = |v: &Vec<f64>| v.iter().map(|x| (3.0 * x).exp() - 7.0).collect::<Vec<_>>();
        prop_assert_eq!(auc(&pos, &neg).unwrap(), auc(&f(&pos), &f(&neg)).unwrap());
    }
}
