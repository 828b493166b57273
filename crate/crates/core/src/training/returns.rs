//! Discounted n-step returns.

/// `R_i = r_i + γ·R_{i+1}` with `R_n = bootstrap`; advantages are `R_i − V(s_i)`.
pub fn compute_returns(rewards: &[f64], values: &[f64], gamma: f64, bootstrap: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len(), "one value per reward");
    assert!((0.0..=1.0).contains(&gamma), "discount must lie in [0, 1]");
    let mut returns = vec![0.0; rewards.len()];
    let mut running = bootstrap;
    for i in (0..rewards.len()).rev() {
        running = rewards[i] + gamma * running;
        returns[i] = running;
    }
    let advantages = returns.iter().zip(values).map(|(r, v)| r - v).collect();
    (returns, advantages)
}
