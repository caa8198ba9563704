//! Shared test support: an independent ascending-series Bessel oracle in
//! double-double arithmetic, and tolerance helpers.
//!
//! The oracle never calls into the library's Bessel path; it sums the
//! ascending power series J_n(x) = Σ_k (−1)ᵏ (x/2)^(n+2k) / (k!(n+k)!)
//! with ~31 significant digits so that cancellation at moderate x cannot
//! eat into the 1e-10 comparison budget.

#![allow(dead_code)]

/// Unevaluated double-double value (hi + lo).
#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let err = b - (s - a);
    Dd { hi: s, lo: err }
}

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    Dd { hi: s, lo: err }
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    let err = a.mul_add(b, -p);
    Dd { hi: p, lo: err }
}

impl Dd {
    pub fn from_f64(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    pub fn add(self, other: Dd) -> Dd {
        let s = two_sum(self.hi, other.hi);
        quick_two_sum(s.hi, s.lo + self.lo + other.lo)
    }

    pub fn mul(self, other: Dd) -> Dd {
        let p = two_prod(self.hi, other.hi);
        quick_two_sum(p.hi, p.lo + self.hi * other.lo + self.lo * other.hi)
    }

    pub fn div_f64(self, d: f64) -> Dd {
        let q = self.hi / d;
        let p = two_prod(q, d);
        let r = (self.hi - p.hi - p.lo + self.lo) / d;
        quick_two_sum(q, r)
    }

    pub fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// Ascending-series J_n(x) in double-double precision. Supports the same
/// domain the library claims (n ≤ 10, |x| ≤ 50).
pub fn bessel_series_oracle(order: u32, x: f64) -> f64 {
    let half = Dd::from_f64(x / 2.0);
    let t = half.mul(half);
    let mut term = Dd::from_f64(1.0);
    for i in 1..=order {
        term = term.div_f64(i as f64);
    }
    let mut sum = term;
    let mut k = 1.0_f64;
    loop {
        term = term.mul(t).div_f64(k * (order as f64 + k)).neg();
        sum = sum.add(term);
        if term.hi.abs() < 1e-35 * sum.hi.abs().max(1e-25) || k > 500.0 {
            break;
        }
        k += 1.0;
    }
    let mut pow = Dd::from_f64(1.0);
    for _ in 0..order {
        pow = pow.mul(half);
    }
    sum.mul(pow).to_f64()
}

/// Locate a root of `f` by bisection; `f(lo)` and `f(hi)` must bracket it.
pub fn bisect_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, iterations: usize) -> f64 {
    let f_lo = f(lo);
    assert!(
        f_lo * f(hi) < 0.0,
        "bisection bracket does not straddle a root"
    );
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if f(mid) * f_lo > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[track_caller]
pub fn assert_close(actual: f64, expected: f64, tolerance: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tolerance,
        "{what}: {actual} vs {expected} (|diff| = {} > {tolerance})",
        (actual - expected).abs()
    );
}
