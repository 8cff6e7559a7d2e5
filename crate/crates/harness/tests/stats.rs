use inrl_harness::exec::{map_runs_with, Execution};
use inrl_harness::stats::{ranks, spearman};
use proptest::prelude::*;

proptest! {
    #[test]
    fn ranks_sum_like_a_permutation(xs in prop::collection::vec(-50i32..50, 1..40)) {
        let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
        let n = xs.len() as f64;
        let total: f64 = ranks(&xs).iter().sum();
        prop_assert!((total - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn spearman_is_bounded_and_rank_based(
        pairs in prop::collection::vec((-1000i32..1000, -1000i32..1000), 3..30),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let y: Vec<f64> = pairs.iter().map(|p| f64::from(p.1)).collect();
        if let Some(s) = spearman(&x, &y) {
            prop_assert!((-1.0..=1.0).contains(&s.rho));
            prop_assert!((0.0..=1.0).contains(&s.p_value));
            // a strictly increasing transform of x leaves the ranks alone
            let cubed: Vec<f64> = x.iter().map(|v| v * v * v + 3.0).collect();
            let t = spearman(&cubed, &y).unwrap();
            prop_assert!((t.rho - s.rho).abs() < 1e-12);
            let back = spearman(&y, &x).unwrap();
            prop_assert!((back.rho - s.rho).abs() < 1e-12);
        }
    }

    #[test]
    fn execution_modes_agree(xs in prop::collection::vec(any::<u32>(), 0..200)) {
        let f = |v: &u32| u64::from(*v).wrapping_mul(2654435761) % 1009;
        prop_assert_eq!(
            map_runs_with(Execution::Parallel, &xs, f),
            map_runs_with(Execution::Sequential, &xs, f)
        );
    }
}
