//! Exactly rounded floating-point summation (Shewchuk's partials).
//!
//! The result is the correctly rounded value of the exact sum of the inputs,
//! so it does not depend on the order in which terms are added. Reductions
//! that may be split across workers rely on this.

use alloc::vec::Vec;

#[derive(Debug, Clone, Default)]
pub struct ExactSum {
    partials: Vec<f64>,
    nonfinite: f64,
}

impl ExactSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        if !value.is_finite() {
            self.nonfinite += value;
            return;
        }
        let mut x = value;
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                core::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &p in &other.partials {
            self.add(p);
        }
        self.nonfinite += other.nonfinite;
    }

    pub fn value(&self) -> f64 {
        if self.nonfinite != 0.0 || self.nonfinite.is_nan() {
            return self.nonfinite;
        }
        let p = &self.partials;
        let mut n = p.len();
        if n == 0 {
            return 0.0;
        }
        n -= 1;
        let mut hi = p[n];
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            let yr = hi - x;
            lo = y - yr;
            if lo != 0.0 {
                break;
            }
        }
        // Half-way case: round-half-even on the top partial may need the
        // sign of the remaining tail.
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            let yr = x - hi;
            if y == yr {
                hi = x;
            }
        }
        hi
    }
}

impl FromIterator<f64> for ExactSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = ExactSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn exact_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<ExactSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn cancellation() {
        assert_eq!(exact_sum(vec![1e100, 1.0, -1e100]), 1.0);
        assert_eq!(exact_sum(vec![0.1; 10]), 1.0);
    }

    #[test]
    fn order_insensitive() {
        let mut rng = crate::rng::SplitMix64::new(5);
        let mut xs: Vec<f64> = (0..1000)
            .map(|_| rng.gaussian() * libm::pow(10.0, rng.uniform(-8.0, 8.0)))
            .collect();
        let a = exact_sum(xs.iter().copied());
        xs.reverse();
        let b = exact_sum(xs.iter().copied());
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn empty_is_zero() {
        assert_eq!(exact_sum(core::iter::empty()), 0.0);
    }
}
