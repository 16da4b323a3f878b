//! Direct products of per-ballot factors in double-double precision, with a
//! separate binary exponent so long products neither overflow nor underflow.
//! Shares nothing with the engine's arithmetic: no logarithms, and products
//! come from fused multiply-add.

#[derive(Debug, Clone, Copy)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    (s, (a - (s - v)) + (b - v))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl Dd {
    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = two_sum(hi, lo);
        Dd { hi, lo }
    }

    pub fn add(self, o: Dd) -> Self {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = two_sum(s, e + t);
        Self::renorm(s, e + f)
    }

    pub fn sub(self, o: Dd) -> Self {
        self.add(Dd { hi: -o.hi, lo: -o.lo })
    }

    pub fn mul(self, o: Dd) -> Self {
        let (p, e) = two_prod(self.hi, o.hi);
        Self::renorm(p, e + self.hi * o.lo + self.lo * o.hi)
    }

    pub fn div(self, o: Dd) -> Self {
        let q1 = self.hi / o.hi;
        let r = self.sub(o.mul(Dd::new(q1)));
        let q2 = r.hi / o.hi;
        let r = r.sub(o.mul(Dd::new(q2)));
        let q3 = r.hi / o.hi;
        Dd::new(q1).add(Dd::new(q2)).add(Dd::new(q3))
    }

    fn scale2(self, k: i32) -> Self {
        let f = 2f64.powi(k);
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }
}

/// `mantissa · 2^exp`.
#[derive(Debug, Clone, Copy)]
pub struct Product {
    mantissa: Dd,
    exp: i32,
}

impl Default for Product {
    fn default() -> Self {
        Self::one()
    }
}

impl Product {
    pub fn one() -> Self {
        Product {
            mantissa: Dd::new(1.0),
            exp: 0,
        }
    }

    pub fn times(&mut self, f: Dd) {
        self.mantissa = self.mantissa.mul(f);
        let e = self.mantissa.hi.abs().log2().floor() as i32;
        if e.abs() > 64 {
            self.mantissa = self.mantissa.scale2(-e);
            self.exp += e;
        }
    }

    pub fn recip(self) -> Self {
        Product {
            mantissa: Dd::new(1.0).div(self.mantissa),
            exp: -self.exp,
        }
    }

    /// log2 of the value, to a few digits.
    pub fn log2(&self) -> f64 {
        self.mantissa.hi.log2() + self.exp as f64
    }

    /// Relative difference between `value` and this product. Only for
    /// products within the normal `f64` range.
    pub fn rel_err(&self, value: f64) -> f64 {
        let mut m = self.mantissa;
        let mut e = self.exp;
        while e != 0 {
            let step = e.clamp(-500, 500);
            m = m.scale2(step);
            e -= step;
        }
        ((value - m.hi) - m.lo).abs() / m.hi.abs()
    }
}
