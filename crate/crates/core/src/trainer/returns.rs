/// Discounted future reward after each probe: `G_k = sum_{j=k+1..N} gamma^(j-k+1) r_j`.
///
/// The exponent starts at 2 for the next reward, so `G_N = 0` and `gamma = 0`
/// gives all zeros.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|k| {
            let mut g = 0.0;
            for j in k + 1..n {
                g += gamma.powi((j - k + 1) as i32) * rewards[j];
            }
            g
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(discounted_returns(&[0.0; 5], 0.9), vec![0.0; 5]);
        assert_eq!(discounted_returns(&[1.0, 0.0, 1.0], 0.5), vec![0.125, 0.25, 0.0]);
        assert_eq!(discounted_returns(&[1.0, 1.0, 1.0], 0.0), vec![0.0; 3]);
        assert!(discounted_returns(&[], 0.9).is_empty());
        assert_eq!(discounted_returns(&[1.0], 0.9), vec![0.0]);
    }
}
