//! Relations `2 = p^a q^b +- p^c q^d` that drive double-base expansions, and
//! single-modulus certificates proving `2 = |p^x - q^y|` has no solution.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::double_base::BasePair;
use crate::engine::{pow_rational, RelationTerm, UnitRelation};

/// `2 = sign * (p^x - q^y)` with `x, y >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PlainRelation {
    pub x: u32,
    pub y: u32,
    pub sign: i8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelationForm {
    /// `2 = +-(p^x - q^y)`
    Plain,
    /// `2 p^a = q^b +- 1`, i.e. `2 = p^-a q^b +- p^-a`
    PInverse,
    /// `2 q^b = p^a +- 1`, i.e. `2 = p^a q^-b +- q^-b`
    QInverse,
}

/// `2 = p^a q^b + sign * p^c q^d` over `Z[1/p, 1/q]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExtendedRelation {
    pub a: i64,
    pub b: i64,
    pub c: i64,
    pub d: i64,
    pub sign: i8,
    pub form: RelationForm,
}

impl PlainRelation {
    pub fn to_extended(self) -> ExtendedRelation {
        let (x, y) = (self.x as i64, self.y as i64);
        if self.sign > 0 {
            ExtendedRelation {
                a: x,
                b: 0,
                c: 0,
                d: y,
                sign: -1,
                form: RelationForm::Plain,
            }
        } else {
            ExtendedRelation {
                a: 0,
                b: y,
                c: x,
                d: 0,
                sign: -1,
                form: RelationForm::Plain,
            }
        }
    }

    /// The engine relation `2 = eps^(a,b) + zeta^k eps^(c,d)` over `eps = (p, q)`.
    pub fn to_unit_relation(self) -> UnitRelation {
        self.to_extended().to_unit_relation()
    }
}

impl ExtendedRelation {
    pub fn to_unit_relation(self) -> UnitRelation {
        let k = if self.sign > 0 { 0 } else { 1 };
        UnitRelation::new(
            2,
            vec![
                RelationTerm::new(0, &[self.a, self.b]),
                RelationTerm::new(k, &[self.c, self.d]),
            ],
        )
        .expect("a relation for 2 has two nontrivial terms")
    }

    /// The `(a, b)` of the defining equation of an inverse form, or `(x, y)`
    /// of a plain one.
    pub fn search_exponents(&self) -> (i64, i64) {
        match self.form {
            RelationForm::Plain => {
                if self.a != 0 {
                    (self.a, self.d)
                } else {
                    (self.c, self.b)
                }
            }
            RelationForm::PInverse => (-self.a, self.b),
            RelationForm::QInverse => (self.a, -self.b),
        }
    }

    fn rank(&self) -> (i64, RelationForm) {
        let (a, b) = self.search_exponents();
        (a.abs() + b.abs(), self.form)
    }
}

fn power(base: &BigInt, e: u32) -> BigInt {
    num_traits::pow(base.clone(), e as usize)
}

fn powers(base: &BigInt, max_exp: u32) -> Vec<BigInt> {
    let mut out = Vec::with_capacity(max_exp as usize + 1);
    let mut acc = BigInt::one();
    for _ in 0..=max_exp {
        out.push(acc.clone());
        acc *= base;
    }
    out
}

/// The solution of `2 = |p^x - q^y|` with `1 <= x, y <= max_exp` of smallest
/// `x + y`, ties to smaller `x`.
pub fn find_plain_relation(base: &BasePair, max_exp: u32) -> Option<PlainRelation> {
    let pp = powers(base.p(), max_exp);
    let qp = powers(base.q(), max_exp);
    let two = BigInt::from(2);
    for total in 2..=2 * max_exp {
        for x in 1..total.min(max_exp + 1) {
            let y = total - x;
            if y == 0 || y > max_exp {
                continue;
            }
            let diff = &pp[x as usize] - &qp[y as usize];
            if diff == two {
                return Some(PlainRelation { x, y, sign: 1 });
            }
            if -&diff == two {
                return Some(PlainRelation { x, y, sign: -1 });
            }
        }
    }
    None
}

fn find_inverse(base: &BasePair, max_exp: u32) -> Option<ExtendedRelation> {
    let pp = powers(base.p(), max_exp);
    let qp = powers(base.q(), max_exp);
    let mut best: Option<ExtendedRelation> = None;
    for a in 1..=max_exp {
        for b in 1..=max_exp {
            let (ai, bi) = (a as i64, b as i64);
            for sign in [1i8, -1] {
                let s = BigInt::from(sign);
                // 2 p^a = q^b + s
                if BigInt::from(2) * &pp[a as usize] == &qp[b as usize] + &s {
                    let cand = ExtendedRelation {
                        a: -ai,
                        b: bi,
                        c: -ai,
                        d: 0,
                        sign,
                        form: RelationForm::PInverse,
                    };
                    if best.is_none_or(|r| cand.rank() < r.rank()) {
                        best = Some(cand);
                    }
                }
                // 2 q^b = p^a + s
                if BigInt::from(2) * &qp[b as usize] == &pp[a as usize] + &s {
                    let cand = ExtendedRelation {
                        a: ai,
                        b: -bi,
                        c: 0,
                        d: -bi,
                        sign,
                        form: RelationForm::QInverse,
                    };
                    if best.is_none_or(|r| cand.rank() < r.rank()) {
                        best = Some(cand);
                    }
                }
            }
        }
    }
    best
}

/// Searches the plain form and `2 p^a = q^b +- 1` (and its mirror) with
/// exponents in `1..=max_exp`; the smallest total exponent wins, then plain
/// before the inverse forms. The forms `+-p^a q^b +- 1` and
/// `+-p^-a q^-b +- p^-a q^-b` have no solutions and are not searched.
pub fn find_extended_relation(base: &BasePair, max_exp: u32) -> Option<ExtendedRelation> {
    let plain = find_plain_relation(base, max_exp).map(PlainRelation::to_extended);
    let inverse = find_inverse(base, max_exp);
    match (plain, inverse) {
        (Some(a), Some(b)) => Some(if b.rank() < a.rank() { b } else { a }),
        (a, b) => a.or(b),
    }
}

pub fn verify_plain(base: &BasePair, rel: &PlainRelation) -> bool {
    if rel.x == 0 || rel.y == 0 || rel.sign.abs() != 1 {
        return false;
    }
    let diff = power(base.p(), rel.x) - power(base.q(), rel.y);
    diff == BigInt::from(2 * rel.sign as i64)
}

/// Exact check of `p^a q^b + sign p^c q^d = 2`.
pub fn verify_extended(base: &BasePair, rel: &ExtendedRelation) -> bool {
    if rel.sign.abs() != 1 || (rel.a, rel.b, rel.c, rel.d) == (0, 0, 0, 0) {
        return false;
    }
    let p = BigRational::from_integer(base.p().clone());
    let q = BigRational::from_integer(base.q().clone());
    let first = pow_rational(&p, rel.a) * pow_rational(&q, rel.b);
    let second = pow_rational(&p, rel.c) * pow_rational(&q, rel.d);
    let total = if rel.sign > 0 {
        first + second
    } else {
        first - second
    };
    total == BigRational::from_integer(BigInt::from(2))
}

/// A modulus `m` such that no power residue `p^x` differs from a power
/// residue `q^y` by `+-2` modulo `m` (`x, y >= 1`), so `2 = |p^x - q^y|`
/// has no solution in positive exponents.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObstructionCertificate {
    pub p: BigInt,
    pub q: BigInt,
    pub modulus: u64,
    /// Sorted residues `p^x mod m`, `x >= 1`.
    pub p_orbit: Vec<u64>,
    /// Sorted residues `q^y mod m`, `y >= 1`.
    pub q_orbit: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct CertificateDoc {
    p: String,
    q: String,
    modulus: u64,
    p_orbit: Vec<u64>,
    q_orbit: Vec<u64>,
}

fn residue(b: &BigInt, m: u64) -> u64 {
    let r = b % BigInt::from(m);
    let r = if r < BigInt::zero() { r + m } else { r };
    r.to_u64().expect("residue below the modulus")
}

fn orbit(b: &BigInt, m: u64) -> Vec<u64> {
    let step = residue(b, m) as u128;
    let m128 = m as u128;
    let mut seen = BTreeSet::new();
    let mut x = step;
    while seen.insert(x as u64) {
        x = x * step % m128;
    }
    seen.into_iter().collect()
}

fn separated(p_orbit: &[u64], q_orbit: &[u64], m: u64) -> bool {
    let plus = 2 % m;
    let minus = (m - plus) % m;
    p_orbit.iter().all(|&u| {
        q_orbit.iter().all(|&v| {
            let diff = (u + m - v) % m;
            diff != plus && diff != minus
        })
    })
}

/// The certificate at modulus `m`, if the orbits there are separated.
pub fn certificate_at(base: &BasePair, m: u64) -> Option<ObstructionCertificate> {
    if m < 2 {
        return None;
    }
    let p_orbit = orbit(base.p(), m);
    let q_orbit = orbit(base.q(), m);
    separated(&p_orbit, &q_orbit, m).then(|| ObstructionCertificate {
        p: base.p().clone(),
        q: base.q().clone(),
        modulus: m,
        p_orbit,
        q_orbit,
    })
}

/// Tries `m = p` and `m = q` first, then scans `2..=max_modulus`.
/// `None` means inconclusive.
pub fn find_obstruction(base: &BasePair, max_modulus: u64) -> Option<ObstructionCertificate> {
    let preferred = [base.p(), base.q()]
        .into_iter()
        .filter_map(|b| b.to_u64())
        .filter(|&m| m <= max_modulus);
    preferred
        .chain(2..=max_modulus)
        .find_map(|m| certificate_at(base, m))
}

impl ObstructionCertificate {
    /// Rechecks the certificate from scratch: the orbits are recomputed by
    /// modular exponentiation over a full period, must be closed under one
    /// more multiplication, and must be separated.
    pub fn verify(&self) -> bool {
        let m = self.modulus;
        if m < 2 {
            return false;
        }
        let mb = BigInt::from(m);
        let recompute = |b: &BigInt| -> Vec<u64> {
            let set: BTreeSet<u64> = (1..=m + 1)
                .map(|e| {
                    b.modpow(&BigInt::from(e), &mb)
                        .to_u64()
                        .expect("residue below the modulus")
                })
                .collect();
            set.into_iter().collect()
        };
        let closed = |orbit: &[u64], b: &BigInt| {
            let r = residue(b, m) as u128;
            orbit.iter().all(|&u| {
                orbit
                    .binary_search(&((u as u128 * r % m as u128) as u64))
                    .is_ok()
            })
        };
        recompute(&self.p) == self.p_orbit
            && recompute(&self.q) == self.q_orbit
            && closed(&self.p_orbit, &self.p)
            && closed(&self.q_orbit, &self.q)
            && separated(&self.p_orbit, &self.q_orbit, m)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&CertificateDoc {
            p: self.p.to_string(),
            q: self.q.to_string(),
            modulus: self.modulus,
            p_orbit: self.p_orbit.clone(),
            q_orbit: self.q_orbit.clone(),
        })
        .expect("certificate serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        let doc: CertificateDoc = serde_json::from_str(s)?;
        let parse = |v: &str| {
            v.parse::<BigInt>()
                .map_err(|e| serde::de::Error::custom(e.to_string()))
        };
        Ok(ObstructionCertificate {
            p: parse(&doc.p)?,
            q: parse(&doc.q)?,
            modulus: doc.modulus,
            p_orbit: doc.p_orbit,
            q_orbit: doc.q_orbit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(p: u64, q: u64) -> BasePair {
        BasePair::new(BigInt::from(p), BigInt::from(q)).unwrap()
    }

    #[test]
    fn plain_relations() {
        assert_eq!(
            find_plain_relation(&base(5, 23), 64),
            Some(PlainRelation {
                x: 2,
                y: 1,
                sign: 1
            })
        );
        for (p, q) in [(3, 5), (5, 7), (11, 13), (17, 19)] {
            assert_eq!(
                find_plain_relation(&base(p, q), 64),
                Some(PlainRelation {
                    x: 1,
                    y: 1,
                    sign: -1
                })
            );
        }
        assert_eq!(find_plain_relation(&base(5, 11), 64), None);
    }

    #[test]
    fn extended_relations() {
        let r = find_extended_relation(&base(5, 11), 64).unwrap();
        assert_eq!(
            r,
            ExtendedRelation {
                a: -1,
                b: 1,
                c: -1,
                d: 0,
                sign: -1,
                form: RelationForm::PInverse
            }
        );
        assert!(verify_extended(&base(5, 11), &r));
        let r = find_extended_relation(&base(5, 23), 64).unwrap();
        assert_eq!(r.form, RelationForm::Plain);
        assert_eq!(r.search_exponents(), (2, 1));
        assert_eq!(find_extended_relation(&base(7, 11), 64), None);
        // 2 * 3 = 5 + 1, mirrored
        let r = find_extended_relation(&base(5, 3), 8).unwrap();
        assert!(verify_extended(&base(5, 3), &r));
    }

    #[test]
    fn verification() {
        let b = base(5, 23);
        assert!(verify_plain(
            &b,
            &PlainRelation {
                x: 2,
                y: 1,
                sign: 1
            }
        ));
        assert!(!verify_plain(
            &b,
            &PlainRelation {
                x: 2,
                y: 2,
                sign: 1
            }
        ));
        assert!(!verify_plain(
            &b,
            &PlainRelation {
                x: 2,
                y: 2,
                sign: -1
            }
        ));
        assert!(verify_extended(
            &b,
            &PlainRelation {
                x: 2,
                y: 1,
                sign: 1
            }
            .to_extended()
        ));
        let twin = PlainRelation {
            x: 1,
            y: 1,
            sign: -1,
        };
        assert!(verify_extended(&base(3, 5), &twin.to_extended()));
    }

    #[test]
    fn obstructions() {
        let c = find_obstruction(&base(5, 11), 1000).unwrap();
        assert_eq!(c.modulus, 5);
        assert_eq!(c.q_orbit, vec![1]);
        assert!(c.verify());
        let c = find_obstruction(&base(7, 13), 1000).unwrap();
        assert_eq!(c.modulus, 7);
        assert!(c.verify());
        let c = find_obstruction(&base(7, 11), 1000).unwrap();
        assert!(c.modulus <= 1000);
        assert!(c.verify());
        let c24 = certificate_at(&base(7, 11), 24).unwrap();
        assert_eq!(c24.p_orbit, vec![1, 7]);
        assert_eq!(c24.q_orbit, vec![1, 11]);
        assert!(c24.verify());
        assert!(find_obstruction(&base(5, 23), 1000).is_none());
    }

    #[test]
    fn tampered_certificate_fails() {
        let mut c = certificate_at(&base(7, 11), 24).unwrap();
        c.q_orbit = vec![11];
        assert!(!c.verify());
    }

    #[test]
    fn certificate_json_round_trip() {
        let c = find_obstruction(&base(5, 11), 1000).unwrap();
        let s = c.to_json();
        assert_eq!(
            s,
            r#"{"p":"5","q":"11","modulus":5,"p_orbit":[0],"q_orbit":[1]}"#
        );
        assert_eq!(ObstructionCertificate::from_json(&s).unwrap(), c);
    }

    #[test]
    fn unit_relation_shape() {
        let rel = PlainRelation {
            x: 2,
            y: 1,
            sign: 1,
        }
        .to_unit_relation();
        assert_eq!(rel.n(), 2);
        assert_eq!(rel.terms()[0], RelationTerm::new(0, &[2, 0]));
        assert_eq!(rel.terms()[1], RelationTerm::new(1, &[0, 1]));
    }
}
