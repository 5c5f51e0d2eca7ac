use revshare_core::experiments::{instance_seed, sample_instance, BaseConfig};
use revshare_core::*;

#[test]
fn optimal_rho_grows_with_ai_strength() {
    let mut means = Vec::new();
    for alpha in [2.0, 5.0, 10.0] {
        let base = BaseConfig {
            alpha,
            ..Default::default()
        };
        let mut total = 0.0;
        for k in 0..30 {
            let g = sample_instance(&base, instance_seed(77, k)).unwrap();
            total += optimize_rho(&g, &OptimizerConfig::default()).unwrap().rho_hat.unwrap();
        }
        means.push(total / 30.0);
    }
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
}
