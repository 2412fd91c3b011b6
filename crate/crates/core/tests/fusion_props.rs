use proptest::prelude::*;
use sdfloc::fusion::{classify_conditions, fuse_arithmetic, fuse_weighted};
use sdfloc::{FusionRule, LinkClass, LocalEstimate, NodeReport, Vec3};

fn report(id: u32, power: f64, p: [f64; 3]) -> NodeReport {
    NodeReport::new(
        id,
        4.5,
        power,
        Some(LocalEstimate {
            uav_id: id,
            t: 4.5,
            position_world: Vec3::from(p),
            position_local: Vec3::zeros(),
            residual: 0.0,
            n_pairs_used: 1,
        }),
    )
}

fn reports() -> impl Strategy<Value = Vec<NodeReport>> {
    prop::collection::vec(
        (-120.0..-40.0f64, prop::array::uniform3(-1000.0..1000.0f64)),
        1..8,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (pw, p))| report(i as u32 + 1, pw, p))
            .collect()
    })
}

proptest! {
    #[test]
    fn weighted_invariant_under_permutation(mut r in reports(), rot in 0usize..8, swap in any::<bool>()) {
        classify_conditions(&mut r, 6.0).unwrap();
        let reference = fuse_weighted(&r).unwrap();
        let arith = fuse_arithmetic(&r).unwrap();
        let n = r.len();
        r.rotate_left(rot % n);
        if swap {
            r.reverse();
        }
        prop_assert_eq!(fuse_weighted(&r).unwrap(), reference);
        prop_assert_eq!(fuse_arithmetic(&r).unwrap(), arith);
    }

    #[test]
    fn adding_nlos_reports_changes_nothing(
        mut r in reports(),
        extra in prop::collection::vec(prop::array::uniform3(-5000.0..5000.0f64), 1..5),
    ) {
        classify_conditions(&mut r, 6.0).unwrap();
        let reference = fuse_weighted(&r).unwrap();
        prop_assert_eq!(reference.rule_used, FusionRule::Weighted);
        for (i, p) in extra.into_iter().enumerate() {
            let mut n = report(100 + i as u32, -200.0, p);
            n.classified_condition = LinkClass::Nlos;
            r.push(n);
        }
        prop_assert_eq!(fuse_weighted(&r).unwrap(), reference);
    }

    #[test]
    fn all_nlos_falls_back_to_arithmetic(mut r in reports()) {
        for x in &mut r {
            x.classified_condition = LinkClass::Nlos;
        }
        let w = fuse_weighted(&r).unwrap();
        let a = fuse_arithmetic(&r).unwrap();
        prop_assert_eq!(w.rule_used, FusionRule::WeightedFallbackArithmetic);
        prop_assert_eq!(w.position_world, a.position_world);
        prop_assert_eq!(w.contributing_ids, a.contributing_ids);
    }

    #[test]
    fn classification_is_scale_free(
        quarter_db in prop::collection::vec(-480i32..-160, 1..8),
        offset in -200i32..200,
    ) {
        // quarter-dB grid keeps every sum and comparison exact
        let mut a: Vec<NodeReport> = quarter_db
            .iter()
            .enumerate()
            .map(|(i, &q)| report(i as u32 + 1, q as f64 / 4.0, [0.0; 3]))
            .collect();
        let mut b: Vec<NodeReport> = a
            .iter()
            .cloned()
            .map(|mut x| {
                x.power += offset as f64;
                x
            })
            .collect();
        classify_conditions(&mut a, 6.0).unwrap();
        classify_conditions(&mut b, 6.0).unwrap();
        let ca: Vec<_> = a.iter().map(|x| x.classified_condition).collect();
        let cb: Vec<_> = b.iter().map(|x| x.classified_condition).collect();
        prop_assert_eq!(ca, cb);
    }

    #[test]
    fn weighted_contributors_are_usable(mut r in reports()) {
        classify_conditions(&mut r, 6.0).unwrap();
        let w = fuse_weighted(&r).unwrap();
        prop_assert!(!w.contributing_ids.is_empty());
        if w.rule_used == FusionRule::Weighted {
            for id in &w.contributing_ids {
                let node = r.iter().find(|x| x.uav_id == *id).unwrap();
                prop_assert_eq!(node.classified_condition, LinkClass::LosUsable);
            }
        }
    }
}
