//! Structural properties of the test statistic that hold for every
//! instance: determinism, split-plan sanity, invariance under reordering
//! within subsamples, sign symmetry, and the stored decomposition.

mod common;

use cost_core::{
    bandwidth, cost_statistic, p_value, split_sample, un_statistic, Dataset, SplitMode, SplitSpec,
};

/// Rebuilds a dataset with the given row order.
fn reordered(data: &Dataset, order: &[usize]) -> Dataset {
    data.subset(order).expect("permutation indices are valid")
}

#[test]
fn results_are_deterministic_and_self_consistent() {
    for seed in [3, 14, 27, 58] {
        let inst = common::instance(seed);
        let a = cost_statistic(&inst.model, &inst.data, &inst.weight, &inst.split, &inst.fit)
            .unwrap();
        let b = cost_statistic(&inst.model, &inst.data, &inst.weight, &inst.split, &inst.fit)
            .unwrap();
        // Bitwise repeatability, including the fitted parameters and split.
        assert_eq!(a.statistic.to_bits(), b.statistic.to_bits());
        assert_eq!(a.theta_hat_1, b.theta_hat_1);
        assert_eq!(a.theta_hat_2, b.theta_hat_2);
        assert_eq!(a.theta_hat_full, b.theta_hat_full);
        assert_eq!(a.split, b.split);
        // The stored decomposition is the statistic, bit for bit, and the
        // p-values are the declared functions of it.
        assert_eq!(a.statistic.to_bits(), (a.numerator / a.conditional_sd).to_bits());
        assert_eq!(a.p_value_two_sided.to_bits(), p_value(a.statistic, cost_core::Sided::Two).to_bits());
        assert_eq!(a.p_value_one_sided.to_bits(), p_value(a.statistic, cost_core::Sided::One).to_bits());
        assert_eq!(a.bandwidth_used, bandwidth(inst.weight.c, inst.data.n()));
    }
}

#[test]
fn split_plan_partitions_the_sample() {
    for seed in [5, 9, 21, 40, 77] {
        let inst = common::instance(seed);
        let (d1, d2, plan) =
            split_sample(&inst.data, &inst.split, inst.model.p()).unwrap();
        let n = inst.data.n();
        assert_eq!(plan.n1 + plan.n2, n);
        assert_eq!(plan.n2, (inst.split.fraction_n2 * n as f64).round() as usize);
        assert_eq!(d1.n(), plan.n1);
        assert_eq!(d2.n(), plan.n2);
        let mut seen = vec![false; n];
        for &i in plan.indices_n1.iter().chain(&plan.indices_n2) {
            assert!(!seen[i], "index {i} assigned twice");
            seen[i] = true;
        }
        assert!(seen.iter().all(|&s| s), "some index never assigned");
        // The subsample datasets are the plan's rows, in the plan's order.
        for (k, &i) in plan.indices_n1.iter().enumerate() {
            assert_eq!(d1.row(k), inst.data.row(i));
        }
        for (k, &i) in plan.indices_n2.iter().enumerate() {
            assert_eq!(d2.row(k), inst.data.row(i));
        }
    }
}

/// Reordering rows inside N1 or inside N2 permutes sums only, so the
/// statistic moves by at most floating-point noise. The fits are run to a
/// tight step tolerance and without random restarts here, since the
/// residual order-dependence of the statistic is bounded by how precisely
/// the fits pin θ̂ (a genuine order defect would shift it by O(1)).
#[test]
fn reordering_within_subsamples_is_immaterial() {
    for seed in [2, 16, 31, 49] {
        let inst = common::instance(seed);
        let split = SplitSpec { mode: SplitMode::AsOrdered, ..inst.split };
        let fit = cost_core::FitOptions {
            step_tolerance: 1e-12,
            loss_tolerance: 1e-12,
            restarts: 0,
            ..inst.fit.clone()
        };
        let base = cost_statistic(&inst.model, &inst.data, &inst.weight, &split, &fit).unwrap();
        let (n1, n) = (base.split.n1, inst.data.n());
        let order: Vec<usize> = (0..n1).rev().chain((n1..n).rev()).collect();
        let shuffled = reordered(&inst.data, &order);
        let perm = cost_statistic(&inst.model, &shuffled, &inst.weight, &split, &fit).unwrap();
        assert!(
            (base.statistic - perm.statistic).abs() <= 1e-7,
            "seed {seed}: {} vs {}",
            base.statistic,
            perm.statistic
        );
    }
}

/// The full-sample pairwise diagnostic sums over unordered pairs, so any
/// row permutation is immaterial.
#[test]
fn pairwise_diagnostic_ignores_row_order() {
    for seed in [4, 23, 38] {
        let inst = common::instance(seed);
        let (base, _) = un_statistic(&inst.model, &inst.data, &inst.weight, &inst.fit).unwrap();
        let order: Vec<usize> = (0..inst.data.n()).rev().collect();
        let (perm, _) =
            un_statistic(&inst.model, &reordered(&inst.data, &order), &inst.weight, &inst.fit)
                .unwrap();
        assert!((base - perm).abs() <= 1e-8, "seed {seed}: {base} vs {perm}");
    }
}

/// For the linear family every fitting step is sign-equivariant (random
/// restarts excluded — their starting points do not flip with the data),
/// so negating all responses negates every residual exactly and the
/// statistic (a product of two residual sums in both numerator and
/// denominator) is unchanged bit for bit.
#[test]
fn linear_statistic_is_even_under_response_negation() {
    for seed in [0, 9, 18, 27, 36, 45] {
        // Seeds ≡ 0 mod 9 draw the linear family in the shared generator.
        let mut inst = common::instance(seed);
        inst.fit.restarts = 0;
        let base = cost_statistic(&inst.model, &inst.data, &inst.weight, &inst.split, &inst.fit)
            .unwrap();
        let rows: Vec<Vec<f64>> = (0..inst.data.n()).map(|i| inst.data.row(i).to_vec()).collect();
        let negated: Vec<f64> = inst.data.responses().iter().map(|y| -y).collect();
        let flipped = Dataset::from_rows(rows, negated).unwrap();
        let neg = cost_statistic(&inst.model, &flipped, &inst.weight, &inst.split, &inst.fit)
            .unwrap();
        assert_eq!(
            base.statistic.to_bits(),
            neg.statistic.to_bits(),
            "seed {seed}: {} vs {}",
            base.statistic,
            neg.statistic
        );
    }
}
