use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use tibandit::numeric::{ks_distance, normal_cdf, EmpiricalDistribution};
use tibandit::policy_cmab::{CmabHyper, CmabPolicy, CmabPolicyKind};
use tibandit::policy_mab::{MabHyper, MabPolicy, MabPolicyKind, MabPolicyState};

fn ti_mab() -> Vec<MabPolicy> {
    let mut out = Vec::new();
    for kind in MabPolicyKind::ALL.into_iter().filter(|k| k.is_translation_invariant()) {
        out.push(MabPolicy::limit(kind, MabHyper::default(), 100).unwrap());
        out.push(MabPolicy::finite(kind, MabHyper { delta: 0.5, ..MabHyper::default() }, 400).unwrap());
    }
    out
}

proptest! {
    #[test]
    fn cdf_is_symmetric(x in -40.0f64..40.0) {
        prop_assert!((normal_cdf(x) + normal_cdf(-x) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_is_monotone(x in -10.0f64..10.0, h in 0.0f64..3.0) {
        prop_assert!(normal_cdf(x + h) >= normal_cdf(x));
    }

    #[test]
    fn ks_is_symmetric(a in prop::collection::vec(-5.0f64..5.0, 1..60), b in prop::collection::vec(-5.0f64..5.0, 1..60)) {
        let ea = EmpiricalDistribution::new(a).unwrap();
        let eb = EmpiricalDistribution::new(b).unwrap();
        let d = ks_distance(&ea, &eb);
        prop_assert_eq!(d, ks_distance(&eb, &ea));
        prop_assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn quantile_is_monotone(v in prop::collection::vec(-100.0f64..100.0, 2..80), q1 in 0.001f64..0.999, q2 in 0.001f64..0.999) {
        let e = EmpiricalDistribution::new(v).unwrap();
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(e.quantile(lo).unwrap() <= e.quantile(hi).unwrap());
    }

    #[test]
    fn mab_policies_are_translation_invariant(
        d1 in 0.005f64..0.995, share in 0.0f64..1.0,
        r1 in -5.0f64..5.0, r2 in -5.0f64..5.0, c in -200.0f64..200.0,
    ) {
        let d2 = (1.0 - d1) * share.max(0.001);
        for pol in ti_mab() {
            let a = pol.prob_arm2(&MabPolicyState::new([d1, d2], [r1, r2])).unwrap();
            let b = pol.prob_arm2(&MabPolicyState::new([d1, d2], [r1 + c * d1, r2 + c * d2])).unwrap();
            prop_assert!((a - b).abs() <= 1e-12, "{} moved by {}", pol.kind(), (a - b).abs());
        }
    }

    #[test]
    fn probabilities_sum_to_one(d1 in 0.0f64..1.0, d2 in 0.0f64..1.0, r1 in -3.0f64..3.0, r2 in -3.0f64..3.0) {
        for kind in MabPolicyKind::ALL {
            let p = MabPolicy::limit(kind, MabHyper::default(), 100).unwrap().probs(&MabPolicyState::new([d1, d2], [r1, r2])).unwrap();
            prop_assert!(p[0] > 0.0 && p[1] > 0.0);
            prop_assert!((p[0] + p[1] - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cmab_policies_are_translation_invariant(
        a in prop::collection::vec(-1.0f64..1.0, 8), c in prop::collection::vec(-2.0f64..2.0, 4),
        e in prop::collection::vec(-20.0f64..20.0, 2), z in -3.0f64..3.0,
    ) {
        let spd = |off: usize| {
            let m = DMatrix::from_row_slice(2, 2, &a[off..off + 4]);
            &m * m.transpose() + DMatrix::identity(2, 2) * 0.3
        };
        let s = [spd(0), spd(4)];
        let cv = [DVector::from_row_slice(&c[0..2]), DVector::from_row_slice(&c[2..4])];
        let e = DVector::from_row_slice(&e);
        let shifted = [&cv[0] + &s[0] * &e, &cv[1] + &s[1] * &e];
        let x = DVector::from_vec(vec![1.0, z]);
        for kind in [CmabPolicyKind::TiThompson, CmabPolicyKind::TiTemperedGreedy, CmabPolicyKind::TiTemperedLinUcb] {
            let pol = CmabPolicy::limit(kind, CmabHyper::default(), 200).unwrap();
            let p0 = pol.prepare(&s, &cv).unwrap().prob_arm2(&x);
            let p1 = pol.prepare(&s, &shifted).unwrap().prob_arm2(&x);
            prop_assert!((p0 - p1).abs() <= 1e-10);
        }
    }
}
