//! Normalized Hermite functions `hⱼ(x) = Hⱼ(x) e^{−x²/2} / √(2ʲ j! √π)`.
//!
//! Evaluated with the three-term recurrence on the normalized functions
//! themselves. The Gaussian envelope is carried as a separate logarithmic
//! scale so large `|x|` does not underflow the seed value before the
//! recurrence has grown it back.

#[allow(unused_imports)] // shadowed by inherent f64 methods when std is linked
use num_traits::Float;
use alloc::vec::Vec;

/// π^{-1/4}
pub(crate) const PI_POW_MINUS_QUARTER: f64 = 0.751_125_544_464_942_5;

const RESCALE_ABOVE: f64 = 1e200;
const LN_RESCALE: f64 = 460.517_018_598_809_1; // ln(1e200)

/// Recurrence state `(h_{j-1}, h_j)` held with a shared scale factor
/// `exp(log_scale)`.
struct Recurrence {
    x: f64,
    j: usize,
    prev: f64,
    cur: f64,
    log_scale: f64,
}

impl Recurrence {
    fn new(x: f64) -> Self {
        let exponent = -0.5 * x * x;
        // Fold the envelope in directly when it cannot underflow.
        let (cur, log_scale) = if exponent > -600.0 {
            (PI_POW_MINUS_QUARTER * exponent.exp(), 0.0)
        } else {
            (PI_POW_MINUS_QUARTER, exponent)
        };
        Self {
            x,
            j: 0,
            prev: 0.0,
            cur,
            log_scale,
        }
    }

    fn value(&self) -> f64 {
        self.cur * self.log_scale.exp()
    }

    fn advance(&mut self) {
        let j = self.j as f64;
        let next = self.x * (2.0 / (j + 1.0)).sqrt() * self.cur - (j / (j + 1.0)).sqrt() * self.prev;
        self.prev = self.cur;
        self.cur = next;
        self.j += 1;
        if self.cur.abs() > RESCALE_ABOVE {
            self.cur /= RESCALE_ABOVE;
            self.prev /= RESCALE_ABOVE;
            self.log_scale += LN_RESCALE;
        }
    }
}

/// `h₀(x), …, h_{count−1}(x)`.
pub fn hermite_functions(x: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let mut rec = Recurrence::new(x);
    out.push(rec.value());
    for _ in 1..count {
        rec.advance();
        out.push(rec.value());
    }
    out
}

/// Single Hermite function `hⱼ(x)`; costs `O(j)`.
pub fn hermite_function(j: usize, x: f64) -> f64 {
    let mut rec = Recurrence::new(x);
    for _ in 0..j {
        rec.advance();
    }
    rec.value()
}

/// Ratio `hₙ(x) / hₙ'(x)` using `hₙ' = √(2n) h_{n−1} − x hₙ`. The common
/// scale cancels, so this works where the values themselves underflow.
pub(crate) fn newton_ratio(n: usize, x: f64) -> f64 {
    let mut rec = Recurrence::new(x);
    for _ in 0..n {
        rec.advance();
    }
    let derivative = (2.0 * n as f64).sqrt() * rec.prev - x * rec.cur;
    rec.cur / derivative
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 50-digit evaluation of Hₙ(x) e^{−x²/2}/√(2ⁿ n! √π).
    const REFERENCE: [(usize, f64, f64); 7] = [
        (1, 0.5, 0.468_717_019_889_251_7),
        (30, 1.7, -0.237_450_660_015_744_24),
        (200, -3.3, -0.176_260_028_489_800_88),
        (500, 20.5, -0.157_921_657_678_778_86),
        (1000, 0.0, 0.119_296_657_543_428_1),
        (1024, 10.25, 0.031_371_655_775_052_53),
        (1024, 40.0, 0.109_681_503_441_459_67),
    ];

    #[test]
    fn matches_high_precision_reference() {
        for &(j, x, expected) in &REFERENCE {
            let got = hermite_function(j, x);
            assert!(
                (got - expected).abs() < 1e-11,
                "h_{j}({x}) = {got}, expected {expected}"
            );
        }
    }

    #[test]
    fn ground_state_at_origin() {
        assert_eq!(hermite_function(0, 0.0), PI_POW_MINUS_QUARTER);
        assert_eq!(hermite_function(1, 0.0), 0.0);
    }

    #[test]
    fn far_tail_is_finite() {
        for j in [0, 1, 7, 64, 1024] {
            let v = hermite_function(j, -40.0);
            assert!(v.is_finite());
        }
        // Low orders far outside the oscillatory region underflow to zero.
        assert_eq!(hermite_function(3, 40.0), 0.0);
    }

    #[test]
    fn batch_agrees_with_single() {
        let row = hermite_functions(2.25, 40);
        for (j, v) in row.iter().enumerate() {
            assert_eq!(*v, hermite_function(j, 2.25));
        }
    }
}
