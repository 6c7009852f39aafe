//! Rate and EE against a naive complex-arithmetic recomputation.

mod common;

use common::{instance, naive_rate, rel};
use pinchnet::model::{energy_efficiency, user_rate, AntennaPlacement, PowerAllocation, Solution, SystemConfig, UserLayout};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn rate_and_ee_match_naive_oracle_on_1000_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (cfg, layout, sol) = instance(&mut rng);
        let consts = cfg.derived().unwrap();
        let mut sum = 0.0;
        for u in &layout.positions {
            let want = naive_rate(&cfg, *u, &sol.placement.x, &sol.power.p);
            let got = user_rate(&cfg, &consts, u, &sol);
            worst = worst.max(rel(got, want));
            sum += want;
        }
        let ee_want = sum / (sol.power.p.iter().sum::<f64>() + cfg.static_power_w);
        let ee = energy_efficiency(&cfg, &layout, &sol).unwrap();
        worst = worst.max(rel(ee, ee_want));
    }
    assert!(worst <= 1e-12, "worst relative error {worst:e}");
}

#[test]
fn single_antenna_under_user_example() {
    // User directly below the antenna: distance H, so SNR = η p / (H² σ²).
    let cfg = SystemConfig::standard(1, 1);
    let sol = Solution {
        placement: AntennaPlacement { x: vec![0.0] },
        power: PowerAllocation { p: vec![1.0] },
    };
    let layout = UserLayout::from_xy(&[(0.0, 0.0)]);
    let ee = energy_efficiency(&cfg, &layout, &sol).unwrap();
    let rate = naive_rate(&cfg, [0.0, 0.0, 0.0], &[0.0], &[1.0]);
    assert!((rate - 19.2704).abs() < 1e-3, "{rate}");
    assert!(rel(ee, rate / 1.5) <= 1e-12);
}
