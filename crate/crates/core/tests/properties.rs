mod support;

use proptest::prelude::*;
use support::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: CASES, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn quotient_is_homogeneous(
        case in grid_case(),
        k in -30i32..30,
        negative in any::<bool>(),
        c in prop_oneof![-1e3f64..-1e-3, 1e-3f64..1e3],
    ) {
        homogeneity(case, k, negative, c)?;
    }

    #[test]
    fn descent_never_increases_the_quotient(case in grid_case()) {
        descent_monotone(case)?;
    }

    #[test]
    fn packings_are_disjoint_and_their_doubles_cover((n, pts) in point_cloud(), r in 0.01f64..0.5, wr in 0.1f64..2.0) {
        packing_sandwich(n, pts, r, wr)?;
    }

    #[test]
    fn dimension_estimates_are_ordered((n, pts) in point_cloud()) {
        dimension_chain(n, pts)?;
    }

    #[test]
    fn frostman_mass_is_conserved((n, pts) in point_cloud(), delta_inv in 3u32..6, depth in 1usize..5) {
        mass_conservation(n, pts, delta_inv, depth)?;
    }
}
