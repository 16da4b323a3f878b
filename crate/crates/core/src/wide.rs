//! Double-double arithmetic for the log-likelihood sums.
//!
//! A P-value after `n` ballots is `exp(Σ c_o · ln f_o)`. If each `ln f_o` is
//! rounded to an `f64`, the rounding is multiplied by its count, and after ten
//! thousand ballots it shows up in the twelfth significant digit. Holding the
//! logs and the running sum as unevaluated pairs `hi + lo` keeps the only
//! visible rounding at the final conversion to `f64`.

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Wide {
    pub hi: f64,
    pub lo: f64,
}

const LN2: Wide = Wide {
    hi: 6.931_471_805_599_452_862e-1,
    lo: 2.319_046_813_846_299_558e-17,
};

const SPLITTER: f64 = 134_217_729.0; // 2^27 + 1

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

fn split(a: f64) -> (f64, f64) {
    let t = SPLITTER * a;
    let hi = t - (t - a);
    (hi, a - hi)
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    (p, ((ah * bh - p) + ah * bl + al * bh) + al * bl)
}

impl Wide {
    pub const ZERO: Wide = Wide { hi: 0.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Wide { hi: x, lo: 0.0 }
    }

    fn norm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Wide { hi, lo }
    }

    /// `a / b` to double-double precision.
    pub fn ratio(a: f64, b: f64) -> Self {
        let q1 = a / b;
        let (p, e) = two_prod(q1, b);
        let q2 = ((a - p) - e) / b;
        Self::norm(q1, q2)
    }

    pub fn add(self, o: Wide) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Self::norm(s, e + f)
    }

    pub fn neg(self) -> Self {
        Wide { hi: -self.hi, lo: -self.lo }
    }

    pub fn sub(self, o: Wide) -> Self {
        self.add(o.neg())
    }

    pub fn mul(self, o: Wide) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        Self::norm(p, e + (self.hi * o.lo + self.lo * o.hi))
    }

    /// `self · c` where `c` is a count small enough to be exact in an `f64`.
    pub fn scale(self, c: u64) -> Self {
        let c = c as f64;
        let (p, e) = two_prod(self.hi, c);
        Self::norm(p, e + self.lo * c)
    }

    fn ldexp(self, k: i32) -> Self {
        Wide {
            hi: libm::scalbn(self.hi, k),
            lo: libm::scalbn(self.lo, k),
        }
    }

    pub fn exp(self) -> Self {
        let k = libm::round(self.hi / LN2.hi);
        let r = self.sub(LN2.mul(Wide::from_f64(k)));
        // e^r = (e^(r/1024))^1024, carried as expm1 to keep small values exact
        let s = r.ldexp(-10);
        let mut term = s;
        let mut t = s;
        for i in 2..=12u32 {
            term = term.mul(s).mul(Wide::ratio(1.0, i as f64));
            t = t.add(term);
        }
        for _ in 0..10 {
            t = t.ldexp(1).add(t.mul(t));
        }
        Wide::from_f64(1.0).add(t).ldexp(k as i32)
    }

    /// Natural log of a positive value, by Newton steps on `exp`.
    pub fn ln(self) -> Self {
        let mut y = Wide::from_f64(libm::log(self.hi));
        for _ in 0..2 {
            let corr = self.mul(y.neg().exp()).sub(Wide::from_f64(1.0));
            y = y.add(corr);
        }
        y
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// `Σ count · value`, rounded once.
pub(crate) fn weighted_sum(terms: impl IntoIterator<Item = (u64, Wide)>) -> f64 {
    let mut acc = Wide::ZERO;
    for (c, w) in terms {
        if c > 0 && w.hi != 0.0 {
            acc = acc.add(w.scale(c));
        }
    }
    acc.to_f64()
}
