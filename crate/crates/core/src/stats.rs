//! Small descriptive statistics. Standard deviations use the population
//! convention (divide by n) throughout the crate.

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn pop_std(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point() {
        assert_eq!(mean(&[1.0, 3.0]), 2.0);
        assert_eq!(pop_std(&[1.0, 3.0]), 1.0);
        assert_eq!(pop_std(&[4.0; 5]), 0.0);
    }
}
