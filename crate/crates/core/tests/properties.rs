use ncprob::cumulants::{cumulants_to_moments, moments_to_cumulants, Species};
use ncprob::io::{from_json_str, to_json_string};
use ncprob::ncseries::{h_series, moments_from_h, monotone_convolve};
use ncprob::partitions::{enumerate, order_count, order_count_bruteforce};
use ncprob::random::{random_distribution, random_matrix, random_tensor, rng};
use ncprob::{MomentTensor, NCSeries, Partition, PartitionClass};
use proptest::prelude::*;

fn nc(n: usize, pick: usize) -> Partition {
    let all = enumerate(n, PartitionClass::NonCrossing).unwrap();
    all[pick % all.len()].clone()
}

fn species_for(d: usize) -> Vec<Species> {
    Species::ALL
        .into_iter()
        .filter(|&s| d == 1 || s != Species::Classical)
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn hook_formula_matches_bruteforce(n in 1usize..=9, pick in any::<usize>()) {
        let p = nc(n, pick);
        prop_assert_eq!(order_count(&p).unwrap(), order_count_bruteforce(&p).unwrap());
    }

    #[test]
    fn insert_then_restrict_recovers_parts(
        n in 1usize..=5, m in 1usize..=4, pick_u in any::<usize>(), pick_v in any::<usize>(), pos in any::<usize>()
    ) {
        let u = nc(n, pick_u);
        let v = nc(m, pick_v);
        let pos = pos % (n + 1);
        let s = u.insert(pos, &v).unwrap();
        prop_assert!(s.is_noncrossing());
        let (inner, outer): (Vec<usize>, Vec<usize>) =
            (0..s.num_blocks()).partition(|&i| (pos + 1..=pos + m).contains(&s.blocks()[i][0]));
        prop_assert_eq!(s.restrict(&inner).unwrap(), v);
        prop_assert_eq!(s.restrict(&outer).unwrap(), u);
    }

    #[test]
    fn unrelated_blocks_multiply_order_counts(
        n in 1usize..=5, m in 1usize..=4, pick_u in any::<usize>(), pick_v in any::<usize>()
    ) {
        // side by side: every block of u is unrelated to every block of v
        let u = nc(n, pick_u);
        let v = nc(m, pick_v);
        let s = u.insert(n, &v).unwrap();
        let f = |k: usize| (1..=k as u128).product::<u128>();
        let lhs = order_count(&s).unwrap() as u128 * f(u.num_blocks()) * f(v.num_blocks());
        let rhs = order_count(&u).unwrap() as u128 * order_count(&v).unwrap() as u128 * f(s.num_blocks());
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn moment_cumulant_round_trip(seed in any::<u64>(), d in 1usize..=2, order in 1usize..=5) {
        let m = random_tensor(&mut rng(seed), d, order);
        for species in species_for(d) {
            let c = moments_to_cumulants(&m, species).unwrap();
            prop_assert!(cumulants_to_moments(&c).unwrap().max_abs_diff(&m) < 1e-11);
            let again = moments_to_cumulants(&cumulants_to_moments(&c).unwrap(), species).unwrap();
            prop_assert!(again.as_tensor().max_abs_diff(c.as_tensor()) < 1e-11);
        }
    }

    #[test]
    fn first_two_cumulants_agree_across_species(seed in any::<u64>(), d in 1usize..=2) {
        let m = random_tensor(&mut rng(seed), d, 4);
        let free = moments_to_cumulants(&m, Species::Free).unwrap();
        for species in species_for(d) {
            let c = moments_to_cumulants(&m, species).unwrap();
            prop_assert!(c.map(1).max_abs_diff(free.map(1)) < 1e-14);
            prop_assert!(c.map(2).max_abs_diff(free.map(2)) < 1e-13);
        }
    }

    #[test]
    fn composition_is_associative_and_graded(seed in any::<u64>(), d in 1usize..=2) {
        let mut g = rng(seed);
        let series: Vec<NCSeries> = (0..3)
            .map(|_| h_series(&ncprob::dist::moments_of(&random_distribution(&mut g, d, 2, 1.0), 4).unwrap()))
            .collect();
        let left = NCSeries::compose(&NCSeries::compose(&series[0], &series[1]).unwrap(), &series[2]).unwrap();
        let right = NCSeries::compose(&series[0], &NCSeries::compose(&series[1], &series[2]).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
        for (m, c) in left.coeffs().iter().enumerate() {
            prop_assert_eq!(c.arity(), m);
        }
        // the identity series is a two-sided unit
        let id = NCSeries::identity(d, 5);
        prop_assert!(NCSeries::compose(&id, &series[0]).unwrap().max_abs_diff(&series[0]) < 1e-15);
        prop_assert!(NCSeries::compose(&series[0], &id).unwrap().max_abs_diff(&series[0]) < 1e-15);
    }

    #[test]
    fn h_series_round_trip(seed in any::<u64>(), d in 1usize..=2, order in 1usize..=5) {
        let m = random_tensor(&mut rng(seed), d, order);
        prop_assert_eq!(moments_from_h(&h_series(&m)).unwrap(), m);
    }

    #[test]
    fn delta_is_a_monotone_unit(seed in any::<u64>(), d in 1usize..=2) {
        let mut g = rng(seed);
        let m = ncprob::dist::moments_of(&random_distribution(&mut g, d, 2, 1.0), 4).unwrap();
        let zero = MomentTensor::delta(&ncprob::CMatrix::zeros(d), 4);
        prop_assert!(monotone_convolve(&m, &zero).unwrap().max_abs_diff(&m) < 1e-14);
        prop_assert!(monotone_convolve(&zero, &m).unwrap().max_abs_diff(&m) < 1e-14);
    }

    #[test]
    fn tensor_json_is_lossless(seed in any::<u64>(), d in 1usize..=2, order in 1usize..=4) {
        let m = random_tensor(&mut rng(seed), d, order);
        let back: MomentTensor = from_json_str(&to_json_string(&m).unwrap()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn series_evaluation_is_linear_in_coefficients(seed in any::<u64>()) {
        let mut g = rng(seed);
        let a = h_series(&random_tensor(&mut g, 2, 4));
        let b = h_series(&random_tensor(&mut g, 2, 4));
        let x = random_matrix(&mut g, 2).scale_re(0.3);
        let sum = a.add(&b).evaluate(&x).unwrap();
        let parts = &a.evaluate(&x).unwrap() + &b.evaluate(&x).unwrap();
        prop_assert!(sum.max_abs_diff(&parts) < 1e-13);
    }
}
