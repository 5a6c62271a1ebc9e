use e2ecomm_core::policy::{policy_sample, PolicyConfig};
use e2ecomm_core::signal::RngStream;
use e2ecomm_core::transceiver::TxModel;

const DRAWS: usize = 1_000_000;

#[test]
fn explored_symbols_keep_unit_average_energy() {
    let cfg = PolicyConfig::default();
    let mut rng = RngStream::new(2024);
    let tx = TxModel::new(16, 4, &mut rng).unwrap();
    let msgs: Vec<usize> = (0..DRAWS / 4).map(|i| i % 16).collect();
    let (x, cache) = tx.forward(&msgs).unwrap();
    for i in 0..x.batch() {
        assert!((x.row_energy(i) - 4.0).abs() <= 4.0 * 1e-12);
    }
    let s = policy_sample(x, cache, &cfg, &mut rng).unwrap();

    // Var(‖x_p‖²/N) = (2(1−σ²)σ² + σ⁴)/N, bounded here by 4σ²/N.
    let per_msg: Vec<f64> = (0..s.x_p.batch()).map(|i| s.x_p.row_energy(i) / 4.0).collect();
    let mean = per_msg.iter().sum::<f64>() / per_msg.len() as f64;
    let se = (4.0 * cfg.variance / 4.0 / per_msg.len() as f64).sqrt();
    assert!((mean - 1.0).abs() < 4.0 * se, "mean energy {mean}, se {se}");
}

#[test]
fn exploration_is_centered_on_the_scaled_output() {
    let cfg = PolicyConfig::default();
    let mut rng = RngStream::new(7);
    let tx = TxModel::new(4, 1, &mut rng).unwrap();
    let msgs = vec![2usize; DRAWS];
    let (x, cache) = tx.forward(&msgs).unwrap();
    let target = x.row(0)[0] * cfg.mean_scale();
    let s = policy_sample(x, cache, &cfg, &mut rng).unwrap();

    let n = DRAWS as f64;
    let mean = s.x_p.data().iter().sum::<num_complex::Complex64>() / n;
    let var = s.x_p.data().iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    let se = (cfg.variance / 2.0 / n).sqrt();
    assert!((mean.re - target.re).abs() < 4.0 * se);
    assert!((mean.im - target.im).abs() < 4.0 * se);
    // Sample variance of a CN(0, σ²) has relative sd ≈ 1/√n.
    assert!((var / cfg.variance - 1.0).abs() < 4.0 / n.sqrt());
}
