//! Forward-mode derivative numbers.
//!
//! [`Dual`] carries `(f, f')` and [`Jet2`] carries `(f, f', f'')`. Writing an
//! objective once against [`Scalar`] yields its value, gradient and curvature
//! by exact product and chain rules; no factor is ever divided out, so zeros
//! of individual factors are harmless.

use std::ops::{Add, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn constant(c: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn recip(self) -> Self;
    fn abs(self) -> Self;
    /// `self^p` for `self > 0`.
    fn powf(self, p: f64) -> Self;
}

impl Scalar for f64 {
    fn constant(c: f64) -> Self {
        c
    }
    fn value(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: f64,
}

impl Dual {
    pub fn variable(x: f64) -> Self {
        Dual { v: x, d: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d: f64,
    pub dd: f64,
}

impl Jet2 {
    pub fn variable(x: f64) -> Self {
        Jet2 { v: x, d: 1.0, dd: 0.0 }
    }

    /// Apply a scalar function given its value and first two derivatives at `self.v`.
    #[inline]
    fn chain(self, g: f64, g1: f64, g2: f64) -> Self {
        Jet2 {
            v: g,
            d: g1 * self.d,
            dd: g2 * self.d * self.d + g1 * self.dd,
        }
    }
}

impl Dual {
    #[inline]
    fn chain(self, g: f64, g1: f64) -> Self {
        Dual { v: g, d: g1 * self.d }
    }
}

macro_rules! scalar_ops {
    ($t:ident { $($f:ident),* }) => {
        impl Add for $t {
            type Output = $t;
            #[inline]
            fn add(self, o: $t) -> $t { $t { $($f: self.$f + o.$f),* } }
        }
        impl Sub for $t {
            type Output = $t;
            #[inline]
            fn sub(self, o: $t) -> $t { $t { $($f: self.$f - o.$f),* } }
        }
        impl Neg for $t {
            type Output = $t;
            #[inline]
            fn neg(self) -> $t { $t { $($f: -self.$f),* } }
        }
        impl Mul<f64> for $t {
            type Output = $t;
            #[inline]
            fn mul(self, c: f64) -> $t { $t { $($f: self.$f * c),* } }
        }
        impl Sub<f64> for $t {
            type Output = $t;
            #[inline]
            fn sub(self, c: f64) -> $t { self + (-c) }
        }
    };
}

scalar_ops!(Dual { v, d });
scalar_ops!(Jet2 { v, d, dd });

impl Add<f64> for Dual {
    type Output = Dual;
    #[inline]
    fn add(self, c: f64) -> Dual {
        Dual { v: self.v + c, d: self.d }
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    #[inline]
    fn add(self, c: f64) -> Jet2 {
        Jet2 { v: self.v + c, ..self }
    }
}

impl Mul for Dual {
    type Output = Dual;
    #[inline]
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    #[inline]
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            d: self.d * o.v + self.v * o.d,
            dd: self.dd * o.v + 2.0 * self.d * o.d + self.v * o.dd,
        }
    }
}

impl Scalar for Dual {
    fn constant(c: f64) -> Self {
        Dual { v: c, d: 0.0 }
    }
    fn value(self) -> f64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r)
    }
    fn abs(self) -> Self {
        let s = if self.v < 0.0 { -1.0 } else { 1.0 };
        self.chain(self.v.abs(), s)
    }
    fn powf(self, p: f64) -> Self {
        let g = self.v.powf(p);
        self.chain(g, p * g / self.v)
    }
}

impl Scalar for Jet2 {
    fn constant(c: f64) -> Self {
        Jet2 { v: c, d: 0.0, dd: 0.0 }
    }
    fn value(self) -> f64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
    fn abs(self) -> Self {
        let s = if self.v < 0.0 { -1.0 } else { 1.0 };
        self.chain(self.v.abs(), s, 0.0)
    }
    fn powf(self, p: f64) -> Self {
        let g = self.v.powf(p);
        let g1 = p * g / self.v;
        self.chain(g, g1, (p - 1.0) * g1 / self.v)
    }
}
