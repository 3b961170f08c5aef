mod common;

use cellfree::perf::{downlink_sinr_all, uplink_model, uplink_sinr_all, DownlinkPower, UplinkPower};
use cellfree::power::{build_cone_problem, target_sinr_iterate, TargetSpec};
use common::{random_downlink_eta, random_instance, rel, rng};
use proptest::prelude::*;
use rand::RngExt;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 1000, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn interference_two_sided_scalable(seed in any::<u64>(), alpha in 1.001f64..8.0, frac in prop::collection::vec(-0.999f64..0.999, 8)) {
        let inst = random_instance(seed, 10, 8);
        let model = uplink_model(&inst.ls, &inst.pilots, &inst.bank, inst.rho).unwrap();
        let k = model.num_users();
        let mut r = rng(seed ^ 1);
        let e1: Vec<f64> = (0..k).map(|_| r.random_range(1e-3..1.0)).collect();
        let e2: Vec<f64> = e1.iter().zip(&frac).map(|(v, f)| v * alpha.powf(*f)).collect();
        let (i1, i2) = (model.interference(&e1).unwrap(), model.interference(&e2).unwrap());
        for (a, b) in i1.iter().zip(&i2) {
            prop_assert!(*b < alpha * a && *b > a / alpha);
        }
    }

    #[test]
    fn interference_monotone(seed in any::<u64>(), bump in prop::collection::vec(0.0f64..1.0, 8)) {
        let inst = random_instance(seed, 10, 8);
        let model = uplink_model(&inst.ls, &inst.pilots, &inst.bank, inst.rho).unwrap();
        let k = model.num_users();
        let mut r = rng(seed ^ 2);
        let e1: Vec<f64> = (0..k).map(|_| r.random_range(1e-3..1.0)).collect();
        let e2: Vec<f64> = e1.iter().zip(&bump).map(|(v, b)| v + b).collect();
        let (i1, i2) = (model.interference(&e1).unwrap(), model.interference(&e2).unwrap());
        for (a, b) in i1.iter().zip(&i2) {
            prop_assert!(*b >= *a);
        }
    }

    #[test]
    fn target_iteration_stays_in_box(seed in any::<u64>(), level in 1e-3f64..1e3, iters in 0usize..30) {
        let inst = random_instance(seed, 8, 6);
        let model = uplink_model(&inst.ls, &inst.pilots, &inst.bank, inst.rho).unwrap();
        let spec = TargetSpec { delta: vec![level; model.num_users()], max_iters: iters, ..TargetSpec::default() };
        let out = target_sinr_iterate(&model, inst.rho, &spec).unwrap();
        prop_assert!(out.eta.iter().all(|e| (0.0..=1.0).contains(e)));
    }

    #[test]
    fn uplink_sinr_grows_with_own_power(seed in any::<u64>(), user in 0usize..8, boost in 1.01f64..4.0) {
        let inst = random_instance(seed, 8, 8);
        let k = inst.ls.num_users();
        let user = user % k;
        let mut r = rng(seed ^ 3);
        let base: Vec<f64> = (0..k).map(|_| r.random_range(0.05..0.25)).collect();
        let mut up = base.clone();
        up[user] *= boost;
        let s0 = uplink_sinr_all(&inst.ls, &inst.pilots, &inst.bank, inst.rho, &UplinkPower::new(base).unwrap()).unwrap();
        let s1 = uplink_sinr_all(&inst.ls, &inst.pilots, &inst.bank, inst.rho, &UplinkPower::new(up).unwrap()).unwrap();
        for j in 0..k {
            if j == user { prop_assert!(s1[j] > s0[j]); } else { prop_assert!(s1[j] <= s0[j] * (1.0 + 1e-12)); }
        }
    }

    #[test]
    fn uplink_sinr_increases_with_common_scaling(seed in any::<u64>(), scale in 1.01f64..4.0) {
        let inst = random_instance(seed, 8, 8);
        let k = inst.ls.num_users();
        let mut r = rng(seed ^ 4);
        let base: Vec<f64> = (0..k).map(|_| r.random_range(0.05..0.25)).collect();
        let scaled: Vec<f64> = base.iter().map(|v| v * scale).collect();
        let s0 = uplink_sinr_all(&inst.ls, &inst.pilots, &inst.bank, inst.rho, &UplinkPower::new(base).unwrap()).unwrap();
        let s1 = uplink_sinr_all(&inst.ls, &inst.pilots, &inst.bank, inst.rho, &UplinkPower::new(scaled).unwrap()).unwrap();
        for (a, b) in s0.iter().zip(&s1) {
            // Scaling every power only shrinks the relative noise.
            prop_assert!(*b >= *a && *b <= scale * a * (1.0 + 1e-12));
        }
    }

    #[test]
    fn cone_identity(seed in any::<u64>()) {
        let inst = random_instance(seed, 6, 5);
        let cone = build_cone_problem(&inst.ls, &inst.pilots, &inst.bank, inst.rho).unwrap();
        let mut r = rng(seed ^ 5);
        let eta = random_downlink_eta(&mut r, &inst.bank);
        let zeta = cone.zeta_from_eta(&eta);
        let want = downlink_sinr_all(&inst.ls, &inst.pilots, &inst.bank, inst.rho, &DownlinkPower::new(eta, &inst.bank).unwrap()).unwrap();
        for (got, w) in cone.sinr_from_zeta(&zeta).iter().zip(&want) {
            prop_assert!(rel(*got, *w) < 1e-9);
        }
    }
}
