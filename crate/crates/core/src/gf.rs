//! Prime-field arithmetic.
//!
//! Symbols are stored as plain `u16` values in `[0, q)`; [`Field`] carries the
//! modulus and performs the arithmetic. [`FieldElement`] is a checked wrapper
//! for call sites that mix elements from different fields.

use std::fmt;

use crate::error::{Error, Result};

/// A field symbol. Always reduced modulo the owning field's order.
pub type Symbol = u16;

/// The prime field GF(q) with `2 <= q < 2^16`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Field {
    q: u16,
}

impl Field {
    /// GF(2).
    pub const BINARY: Field = Field { q: 2 };

    pub fn new(q: u32) -> Result<Self> {
        if !(2..(1 << 16)).contains(&q) {
            return Err(Error::Usage(format!("field order {q} outside [2, 65536)")));
        }
        if !is_prime(q) {
            return Err(Error::Usage(format!("field order {q} is not prime")));
        }
        Ok(Field { q: q as u16 })
    }

    #[inline]
    pub fn order(self) -> u16 {
        self.q
    }

    #[inline]
    pub fn size(self) -> usize {
        self.q as usize
    }

    #[inline]
    pub fn is_binary(self) -> bool {
        self.q == 2
    }

    /// Reduces an arbitrary integer into the field.
    #[inline]
    pub fn reduce(self, v: u64) -> Symbol {
        (v % self.q as u64) as Symbol
    }

    #[inline]
    pub fn add(self, a: Symbol, b: Symbol) -> Symbol {
        let s = a as u32 + b as u32;
        let q = self.q as u32;
        (if s >= q { s - q } else { s }) as Symbol
    }

    #[inline]
    pub fn sub(self, a: Symbol, b: Symbol) -> Symbol {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn neg(self, a: Symbol) -> Symbol {
        if a == 0 {
            0
        } else {
            self.q - a
        }
    }

    #[inline]
    pub fn mul(self, a: Symbol, b: Symbol) -> Symbol {
        ((a as u32 * b as u32) % self.q as u32) as Symbol
    }

    /// Multiplicative inverse. Fails on zero.
    pub fn inv(self, a: Symbol) -> Result<Symbol> {
        if a == 0 {
            return Err(Error::Domain("inverse of zero".into()));
        }
        Ok(self.inv_nonzero(a))
    }

    /// Inverse of a value the caller knows to be nonzero.
    #[inline]
    pub(crate) fn inv_nonzero(self, a: Symbol) -> Symbol {
        debug_assert!(a != 0);
        // Extended Euclid on (q, a).
        let (mut r0, mut r1) = (self.q as i64, a as i64);
        let (mut t0, mut t1) = (0i64, 1i64);
        while r1 != 0 {
            let k = r0 / r1;
            (r0, r1) = (r1, r0 - k * r1);
            (t0, t1) = (t1, t0 - k * t1);
        }
        t0.rem_euclid(self.q as i64) as Symbol
    }

    #[inline]
    pub fn div(self, a: Symbol, b: Symbol) -> Result<Symbol> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// `dst += k * src` elementwise.
    #[inline]
    pub fn axpy(self, dst: &mut [Symbol], k: Symbol, src: &[Symbol]) {
        if k == 0 {
            return;
        }
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = self.add(*d, self.mul(k, s));
        }
    }

    pub fn dot(self, a: &[Symbol], b: &[Symbol]) -> Symbol {
        let q = self.q as u64;
        let mut acc = 0u64;
        for (&x, &y) in a.iter().zip(b) {
            acc += x as u64 * y as u64;
            // Keep well below overflow: each term is < 2^32.
            if acc >= 1 << 62 {
                acc %= q;
            }
        }
        (acc % q) as Symbol
    }

    pub fn element(self, value: u64) -> FieldElement {
        FieldElement {
            value: self.reduce(value),
            field: self,
        }
    }

    /// Checks that every symbol of `v` is reduced.
    pub fn check_vector(self, v: &[Symbol]) -> Result<()> {
        match v.iter().position(|&s| s >= self.q) {
            Some(i) => Err(Error::Usage(format!(
                "symbol {} at index {i} is not an element of GF({})",
                v[i], self.q
            ))),
            None => Ok(()),
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.q)
    }
}

fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= q {
        if q % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// An element tagged with its field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: Symbol,
    field: Field,
}

impl FieldElement {
    pub fn new(field: Field, value: Symbol) -> Result<Self> {
        if value >= field.order() {
            return Err(Error::Usage(format!("{value} is not an element of {field}")));
        }
        Ok(FieldElement { value, field })
    }

    pub fn value(self) -> Symbol {
        self.value
    }

    pub fn field(self) -> Field {
        self.field
    }

    fn same_field(self, other: FieldElement) -> Result<Field> {
        if self.field != other.field {
            return Err(Error::Usage(format!(
                "field mismatch: {} vs {}",
                self.field, other.field
            )));
        }
        Ok(self.field)
    }

    pub fn add(self, other: FieldElement) -> Result<FieldElement> {
        let f = self.same_field(other)?;
        Ok(FieldElement {
            value: f.add(self.value, other.value),
            field: f,
        })
    }

    pub fn mul(self, other: FieldElement) -> Result<FieldElement> {
        let f = self.same_field(other)?;
        Ok(FieldElement {
            value: f.mul(self.value, other.value),
            field: f,
        })
    }

    pub fn neg(self) -> FieldElement {
        FieldElement {
            value: self.field.neg(self.value),
            field: self.field,
        }
    }

    pub fn inv(self) -> Result<FieldElement> {
        Ok(FieldElement {
            value: self.field.inv(self.value)?,
            field: self.field,
        })
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}
