//! Double-double arithmetic (about 106 bits of mantissa).
//!
//! Only what the oracle cross-checks need: the four operations, square root
//! and cosine of `2πx` for moderate `x`.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

// 2π as a double-double.
const TWO_PI: DD = DD {
    hi: std::f64::consts::TAU,
    lo: 2.4492935982947064e-16,
};

impl DD {
    pub const ZERO: DD = DD { hi: 0.0, lo: 0.0 };
    pub const ONE: DD = DD { hi: 1.0, lo: 0.0 };

    pub const fn from_f64(x: f64) -> DD {
        DD { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn abs(self) -> DD {
        if self.hi < 0.0 {
            -self
        } else {
            self
        }
    }

    pub fn sqrt(self) -> DD {
        if self.hi <= 0.0 {
            return DD::ZERO;
        }
        // One Newton step from the double approximation.
        let x = self.hi.sqrt();
        let (p, e) = two_prod(x, x);
        let r = ((self.hi - p) - e + self.lo) / (2.0 * x);
        let (hi, lo) = quick_two_sum(x, r);
        DD { hi, lo }
    }

    /// `cos(2π x)`, reducing `x` modulo 1 in double-double first.
    pub fn cos_2pi(x: DD) -> DD {
        let n = x.hi.round();
        let mut r = x - DD::from_f64(n);
        let n2 = r.hi.round();
        r = r - DD::from_f64(n2);
        let t = TWO_PI * r;
        // Taylor series of cos on |t| ≤ π, split by halving to keep terms small.
        let halvings = 4;
        let mut u = t * DD::from_f64(1.0 / 16.0);
        let u2 = u * u;
        // cos(u) = Σ (-1)^k u^{2k} / (2k)!
        let mut term = DD::ONE;
        let mut sum = DD::ONE;
        for k in 1..=14 {
            term = -(term * u2) / DD::from_f64(((2 * k - 1) * (2 * k)) as f64);
            sum = sum + term;
        }
        // Undo the halvings with cos(2u) = 2cos²u - 1.
        u = sum;
        for _ in 0..halvings {
            u = DD::from_f64(2.0) * u * u - DD::ONE;
        }
        u
    }
}

impl From<f64> for DD {
    fn from(x: f64) -> Self {
        DD::from_f64(x)
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DD {
    type Output = DD;
    fn add(self, o: DD) -> DD {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DD { hi, lo }
    }
}

impl Sub for DD {
    type Output = DD;
    fn sub(self, o: DD) -> DD {
        self + (-o)
    }
}

impl Mul for DD {
    type Output = DD;
    fn mul(self, o: DD) -> DD {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DD { hi, lo }
    }
}

impl Div for DD {
    type Output = DD;
    fn div(self, o: DD) -> DD {
        let q1 = self.hi / o.hi;
        let r = self - o * DD::from_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * DD::from_f64(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DD { hi, lo } + DD::from_f64(q3)
    }
}
