/// Largest discordant total summed with exact integer binomials; C(120, k)
/// and 2^120 both fit in a u128.
const EXACT_LIMIT: u64 = 120;

/// Two-sided exact McNemar test on discordant counts `b` and `c`:
/// `min(1, 2 * sum_{k <= min(b,c)} C(b+c, k) / 2^(b+c))`, and 1 when both are 0.
pub fn mcnemar_exact(b: u64, c: u64) -> f64 {
    let n = b + c;
    if n == 0 {
        return 1.0;
    }
    let k = b.min(c);
    let tail = if n <= EXACT_LIMIT {
        let mut term: u128 = 1;
        let mut sum: u128 = 0;
        for i in 0..=k {
            sum += term;
            term = term * (n - i) as u128 / (i + 1) as u128;
        }
        sum as f64 / (1u128 << n) as f64
    } else {
        // log-space terms, combined with log-sum-exp
        let mut log_term = -(n as f64) * std::f64::consts::LN_2;
        let mut logs = Vec::with_capacity(k as usize + 1);
        for i in 0..=k {
            logs.push(log_term);
            log_term += ((n - i) as f64).ln() - ((i + 1) as f64).ln();
        }
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln()).exp()
    };
    // the true value is positive; keep it so when f64 underflows
    (2.0 * tail).clamp(f64::MIN_POSITIVE, 1.0)
}
