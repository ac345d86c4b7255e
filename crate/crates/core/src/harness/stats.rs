//! Small summary statistics.

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// One-sided paired sign test of `a > b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// `P(X >= wins)` for `X ~ Binomial(wins + losses, 1/2)`; 1 when every
    /// pair is tied.
    pub p_value: f64,
}

pub fn sign_test(a: &[f64], b: &[f64]) -> SignTest {
    assert_eq!(a.len(), b.len());
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Greater) => wins += 1,
            Some(std::cmp::Ordering::Less) => losses += 1,
            _ => ties += 1,
        }
    }
    let n = wins + losses;
    let p_value = if n == 0 {
        1.0
    } else {
        // Σ_{j >= wins} C(n, j) / 2^n, accumulated in log space.
        let ln_half_n = -(n as f64) * std::f64::consts::LN_2;
        let mut ln_c = 0.0;
        let mut total = 0.0;
        for j in 0..=n {
            if j > 0 {
                ln_c += ((n - j + 1) as f64).ln() - (j as f64).ln();
            }
            if j >= wins {
                total += (ln_c + ln_half_n).exp();
            }
        }
        total.min(1.0)
    };
    SignTest {
        wins,
        losses,
        ties,
        p_value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_values() {
        // 15 of 20: P = 21700 / 2^20.
        let a: Vec<f64> = (0..20).map(|i| if i < 15 { 1.0 } else { 0.0 }).collect();
        let b = vec![0.5; 20];
        let t = sign_test(&a, &b);
        assert_eq!((t.wins, t.losses, t.ties), (15, 5, 0));
        assert!((t.p_value - 21_700.0 / 1_048_576.0).abs() < 1e-12);
        let all_tied = sign_test(&[1.0, 2.0], &[1.0, 2.0]);
        assert_eq!(all_tied.p_value, 1.0);
        assert!((sign_test(&[1.0; 5], &[0.0; 5]).p_value - 1.0 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn moments() {
        assert_eq!(mean(&[]), 0.0);
        assert_eq!(mean(&[1.0, 3.0]), 2.0);
        assert_eq!(std_dev(&[1.0, 3.0]), 1.0);
        assert_eq!(std_dev(&[4.0]), 0.0);
    }
}
