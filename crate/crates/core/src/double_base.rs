//! Signed double-base expansions `v = sum d * p^i * q^j` with digits
//! `d` in `{-1, 1}` at distinct exponent pairs.
//!
//! Plain expansions use nonnegative exponents; extended ones allow negative
//! exponents and represent elements of `Z[1/p, 1/q]`. Both are produced by
//! the claim reduction: starting from integer coefficients (the `p`-adic
//! digits of `|v|` by default), any coefficient of absolute value at least 2
//! is traded for two unit-coefficient terms via a relation for 2, sweeping
//! `q`-layers bottom-up.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{pow_rational, Evaluator, Torsion, UnitGroupBasis, UnitMagnitudes};
use crate::interval::Interval;
use crate::relations::{
    find_extended_relation, find_plain_relation, verify_plain, ExtendedRelation, PlainRelation,
    RelationForm,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DoubleBaseError {
    #[error("invalid base pair: {0}")]
    InvalidBase(String),
    #[error("relation does not hold for this base pair")]
    RelationInvalid,
    #[error("no relation for 2 with exponents up to {0}")]
    NoRelationFound(u32),
    #[error("{0} is not of the form n / (p^a q^b)")]
    NotPQRational(String),
    #[error("malformed expansion document: {0}")]
    Document(String),
}

/// Coprime integers `p, q >= 2`, `p != q`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BasePair {
    p: BigInt,
    q: BigInt,
}

impl BasePair {
    pub fn new(p: BigInt, q: BigInt) -> Result<Self, DoubleBaseError> {
        let two = BigInt::from(2);
        if p < two || q < two {
            return Err(DoubleBaseError::InvalidBase(
                "bases must be at least 2".into(),
            ));
        }
        if p == q {
            return Err(DoubleBaseError::InvalidBase("bases must differ".into()));
        }
        if !p.gcd(&q).is_one() {
            return Err(DoubleBaseError::InvalidBase(format!(
                "gcd({p}, {q}) is not 1"
            )));
        }
        Ok(BasePair { p, q })
    }

    pub fn from_u64(p: u64, q: u64) -> Result<Self, DoubleBaseError> {
        BasePair::new(BigInt::from(p), BigInt::from(q))
    }

    pub fn p(&self) -> &BigInt {
        &self.p
    }

    pub fn q(&self) -> &BigInt {
        &self.q
    }

    pub fn swapped(&self) -> BasePair {
        BasePair {
            p: self.q.clone(),
            q: self.p.clone(),
        }
    }
}

impl fmt::Display for BasePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.p, self.q)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionKind {
    Signed,
    Extended,
}

/// One nonzero digit `d * p^i * q^j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Digit {
    pub d: i8,
    pub i: i64,
    pub j: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expansion {
    kind: ExpansionKind,
    base: BasePair,
    terms: Vec<Digit>,
}

impl Expansion {
    /// Sorts the terms into canonical order (`i` descending, then `j`
    /// descending) and checks digits and distinctness.
    pub fn new(
        kind: ExpansionKind,
        base: BasePair,
        mut terms: Vec<Digit>,
    ) -> Result<Self, DoubleBaseError> {
        terms.sort_by_key(|t| std::cmp::Reverse((t.i, t.j)));
        for t in &terms {
            if t.d != 1 && t.d != -1 {
                return Err(DoubleBaseError::Document(format!(
                    "digit {} not in {{-1, 1}}",
                    t.d
                )));
            }
            if kind == ExpansionKind::Signed && (t.i < 0 || t.j < 0) {
                return Err(DoubleBaseError::Document(
                    "signed expansions need nonnegative exponents".into(),
                ));
            }
        }
        if terms
            .windows(2)
            .any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j))
        {
            return Err(DoubleBaseError::Document("repeated exponent pair".into()));
        }
        Ok(Expansion { kind, base, terms })
    }

    pub fn kind(&self) -> ExpansionKind {
        self.kind
    }

    pub fn base(&self) -> &BasePair {
        &self.base
    }

    pub fn terms(&self) -> &[Digit] {
        &self.terms
    }

    /// Flips every digit.
    pub fn negated(&self) -> Expansion {
        Expansion {
            kind: self.kind,
            base: self.base.clone(),
            terms: self.terms.iter().map(|t| Digit { d: -t.d, ..*t }).collect(),
        }
    }

    /// Adds `(di, dj)` to every exponent pair.
    fn shifted(&self, di: i64, dj: i64, kind: ExpansionKind) -> Expansion {
        Expansion {
            kind,
            base: self.base.clone(),
            terms: self
                .terms
                .iter()
                .map(|t| Digit {
                    d: t.d,
                    i: t.i + di,
                    j: t.j + dj,
                })
                .collect(),
        }
    }

    /// Swaps the roles of `p` and `q`.
    fn transposed(&self) -> Expansion {
        let terms = self
            .terms
            .iter()
            .map(|t| Digit {
                d: t.d,
                i: t.j,
                j: t.i,
            })
            .collect();
        Expansion::new(self.kind, self.base.swapped(), terms)
            .expect("transposition keeps digits valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ExpansionDoc {
            kind: self.kind,
            p: self.base.p.to_string(),
            q: self.base.q.to_string(),
            value: evaluate_expansion(self).to_string(),
            terms: self.terms.clone(),
        })
        .expect("expansion serializes")
    }

    /// Parses an expansion document together with its claimed value.
    pub fn from_json(s: &str) -> Result<(Expansion, BigRational), DoubleBaseError> {
        let doc: ExpansionDoc =
            serde_json::from_str(s).map_err(|e| DoubleBaseError::Document(e.to_string()))?;
        let int = |v: &str| {
            v.parse::<BigInt>()
                .map_err(|e| DoubleBaseError::Document(format!("{v:?}: {e}")))
        };
        let base = BasePair::new(int(&doc.p)?, int(&doc.q)?)?;
        let value = BigRational::from_str(&doc.value)
            .map_err(|e| DoubleBaseError::Document(format!("value {:?}: {e}", doc.value)))?;
        Ok((Expansion::new(doc.kind, base, doc.terms)?, value))
    }
}

impl fmt::Display for Expansion {
    /// Human-readable sum such as `- 5^3 + 5^2*23 + 23^2 - 5 + 23`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (n, t) in self.terms.iter().enumerate() {
            let sign = if t.d < 0 { "-" } else { "+" };
            if n == 0 {
                if t.d < 0 {
                    write!(f, "- ")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let mut factors = Vec::new();
            for (b, e) in [(&self.base.p, t.i), (&self.base.q, t.j)] {
                match e {
                    0 => {}
                    1 => factors.push(b.to_string()),
                    _ => factors.push(format!("{b}^{e}")),
                }
            }
            if factors.is_empty() {
                write!(f, "1")?;
            } else {
                write!(f, "{}", factors.join("*"))?;
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct ExpansionDoc {
    kind: ExpansionKind,
    p: String,
    q: String,
    value: String,
    terms: Vec<Digit>,
}

/// `num / (p^a_p q^a_q)` in lowest terms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PQRational {
    num: BigInt,
    a_p: u32,
    a_q: u32,
}

impl PQRational {
    pub fn integer(num: BigInt) -> Self {
        PQRational {
            num,
            a_p: 0,
            a_q: 0,
        }
    }

    pub fn from_rational(x: &BigRational, base: &BasePair) -> Result<Self, DoubleBaseError> {
        let mut den = x.denom().clone();
        let mut counts = [0u32; 2];
        for (b, count) in [&base.p, &base.q].into_iter().zip(counts.iter_mut()) {
            loop {
                let (quot, rem) = den.div_rem(b);
                if !rem.is_zero() {
                    break;
                }
                den = quot;
                *count += 1;
            }
        }
        if !den.is_one() {
            return Err(DoubleBaseError::NotPQRational(x.to_string()));
        }
        Ok(PQRational {
            num: x.numer().clone(),
            a_p: counts[0],
            a_q: counts[1],
        })
    }

    pub fn numerator(&self) -> &BigInt {
        &self.num
    }

    pub fn a_p(&self) -> u32 {
        self.a_p
    }

    pub fn a_q(&self) -> u32 {
        self.a_q
    }

    pub fn value(&self, base: &BasePair) -> BigRational {
        let den = num_traits::pow(base.p.clone(), self.a_p as usize)
            * num_traits::pow(base.q.clone(), self.a_q as usize);
        BigRational::new(self.num.clone(), den)
    }
}

/// Base-`p` digits of `v`, least significant first; empty for 0.
pub fn p_adic_digits(v: &BigInt, p: &BigInt) -> Vec<u64> {
    assert!(!v.is_negative(), "p-adic digits of a negative number");
    let mut out = Vec::new();
    let mut rest = v.clone();
    while !rest.is_zero() {
        let (q, r) = rest.div_rem(p);
        out.push(r.to_u64().expect("digit fits in u64"));
        rest = q;
    }
    out
}

/// Digits in `{-1, 0, 1}` with `sum d_t 3^t = v`, least significant first.
pub fn balanced_ternary(v: &BigInt) -> Vec<i8> {
    let three = BigInt::from(3);
    let mut out = Vec::new();
    let mut rest = v.clone();
    while !rest.is_zero() {
        let r = rest.mod_floor(&three).to_i8().expect("residue mod 3");
        let d = if r == 2 { -1 } else { r };
        out.push(d);
        rest = (rest - d) / &three;
    }
    out
}

/// One entry `c * p^i * q^j` of an integer-coefficient seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SeedTerm {
    pub c: i64,
    pub i: u32,
    pub j: u32,
}

/// Repeatedly subtracts the signed power `+-p^i q^j` closest to the
/// remainder (ties: smaller power, then smaller `i`, then smaller `j`).
/// Coefficients accumulate at reused exponent pairs; terms are listed in
/// order of first use.
pub fn greedy_seed(v: &BigInt, base: &BasePair) -> Vec<SeedTerm> {
    let mut rem = v.clone();
    let mut order: Vec<(u32, u32)> = Vec::new();
    let mut coeff: BTreeMap<(u32, u32), i64> = BTreeMap::new();
    while !rem.is_zero() {
        let target = rem.abs();
        let limit = &target * 2u32;
        let mut best: Option<(BigInt, BigInt, u32, u32)> = None;
        let mut pi = BigInt::one();
        let mut i = 0u32;
        while pi <= limit {
            let mut pq = pi.clone();
            let mut j = 0u32;
            while pq <= limit {
                let key = ((&target - &pq).abs(), pq.clone(), i, j);
                if best.as_ref().is_none_or(|b| key < *b) {
                    best = Some(key);
                }
                pq *= &base.q;
                j += 1;
            }
            pi *= &base.p;
            i += 1;
        }
        let (_, power, i, j) = best.expect("1 is always a candidate");
        let s: i64 = if rem.is_positive() { 1 } else { -1 };
        rem -= &power * s;
        let slot = coeff.entry((i, j)).or_insert_with(|| {
            order.push((i, j));
            0
        });
        *slot += s;
    }
    order
        .into_iter()
        .filter_map(|(i, j)| {
            let c = coeff[&(i, j)];
            (c != 0).then_some(SeedTerm { c, i, j })
        })
        .collect()
}

/// `2 * p^i q^j = same_sign * p^(i + same_di) q^j + up_sign * p^(i + up_di) q^(j + up_dj)`
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct ShiftRule {
    same_sign: i64,
    same_di: i64,
    up_sign: i64,
    up_di: i64,
    up_dj: i64,
}

impl ShiftRule {
    fn plain(rel: &PlainRelation) -> ShiftRule {
        let s = rel.sign as i64;
        ShiftRule {
            same_sign: s,
            same_di: rel.x as i64,
            up_sign: -s,
            up_di: 0,
            up_dj: rel.y as i64,
        }
    }

    /// `2 = p^-a q^b + s p^-a`
    fn p_inverse(a: i64, b: i64, s: i64) -> ShiftRule {
        ShiftRule {
            same_sign: s,
            same_di: -a,
            up_sign: 1,
            up_di: -a,
            up_dj: b,
        }
    }
}

/// A batch of `count` identical claim steps at `(i, j)`. `sign = 1` removes
/// `2 * p^i q^j` from a coefficient `>= 2`; `sign = -1` adds it to one `<= -2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ClaimStep {
    pub i: i64,
    pub j: i64,
    pub sign: i8,
    pub count: u64,
}

fn run_claim(
    seed: impl IntoIterator<Item = (i64, i64, i64)>,
    rule: ShiftRule,
    mut trace: Option<&mut Vec<ClaimStep>>,
) -> (Vec<Digit>, u64) {
    // layer j -> position i -> coefficient
    let mut layers: BTreeMap<i64, BTreeMap<i64, i64>> = BTreeMap::new();
    for (c, i, j) in seed {
        *layers.entry(j).or_default().entry(i).or_insert(0) += c;
    }
    let ascending = rule.same_di > 0;
    let mut digits = Vec::new();
    let mut steps = 0u64;
    while let Some((j, mut row)) = layers.pop_first() {
        let mut cursor = if ascending {
            row.keys().next().copied()
        } else {
            row.keys().next_back().copied()
        };
        while let Some(start) = cursor {
            let next = if ascending {
                row.range(start..).next()
            } else {
                row.range(..=start).next_back()
            };
            let Some((&i, &a)) = next else { break };
            if a.abs() >= 2 {
                let s = a.signum();
                let t = a.abs() / 2;
                row.insert(i, a - 2 * s * t);
                *row.entry(i + rule.same_di).or_insert(0) += s * rule.same_sign * t;
                *layers
                    .entry(j + rule.up_dj)
                    .or_default()
                    .entry(i + rule.up_di)
                    .or_insert(0) += s * rule.up_sign * t;
                steps += t as u64;
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(ClaimStep {
                        i,
                        j,
                        sign: s as i8,
                        count: t as u64,
                    });
                }
            }
            cursor = if ascending { Some(i + 1) } else { Some(i - 1) };
        }
        digits.extend(
            row.into_iter()
                .filter(|&(_, a)| a != 0)
                .map(|(i, a)| Digit { d: a as i8, i, j }),
        );
    }
    (digits, steps)
}

/// Outcome of a claim reduction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClaimOutcome {
    pub expansion: Expansion,
    /// Replacement steps applied.
    pub steps: u64,
    /// Sum of the absolute seed coefficients.
    pub w_init: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SeedMethod {
    #[default]
    PAdic,
    Greedy,
}

impl FromStr for SeedMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "padic" => Ok(SeedMethod::PAdic),
            "greedy" => Ok(SeedMethod::Greedy),
            other => Err(format!("unknown seed method {other:?}")),
        }
    }
}

fn seed_terms(v: &BigInt, base: &BasePair, method: SeedMethod) -> Vec<(i64, i64, i64)> {
    match method {
        SeedMethod::PAdic => p_adic_digits(v, &base.p)
            .into_iter()
            .enumerate()
            .filter(|&(_, d)| d != 0)
            .map(|(t, d)| (d as i64, t as i64, 0))
            .collect(),
        SeedMethod::Greedy => greedy_seed(v, base)
            .into_iter()
            .map(|t| (t.c, t.i as i64, t.j as i64))
            .collect(),
    }
}

/// Claim reduction of `v` with a verified plain relation, seeded by the
/// `p`-adic digits of `|v|`. The step count is at most `(w^2 - w) / 2`
/// where `w` is the digit sum.
pub fn expand_claim(
    v: &BigInt,
    base: &BasePair,
    rel: &PlainRelation,
) -> Result<ClaimOutcome, DoubleBaseError> {
    expand_claim_with(v, base, rel, SeedMethod::PAdic, None)
}

/// As [`expand_claim`], choosing the seed and optionally recording every
/// step batch in application order.
pub fn expand_claim_with(
    v: &BigInt,
    base: &BasePair,
    rel: &PlainRelation,
    method: SeedMethod,
    trace: Option<&mut Vec<ClaimStep>>,
) -> Result<ClaimOutcome, DoubleBaseError> {
    if !verify_plain(base, rel) {
        return Err(DoubleBaseError::RelationInvalid);
    }
    let seed = seed_terms(&v.abs(), base, method);
    let w_init = seed.iter().map(|t| t.0.unsigned_abs()).sum();
    let (digits, steps) = run_claim(seed, ShiftRule::plain(rel), trace);
    let expansion = Expansion::new(ExpansionKind::Signed, base.clone(), digits)
        .expect("claim output has unit digits at distinct positions");
    let expansion = if v.is_negative() {
        expansion.negated()
    } else {
        expansion
    };
    Ok(ClaimOutcome {
        expansion,
        steps,
        w_init,
    })
}

fn binary_expansion(v: &BigInt, along_p: bool) -> Vec<Digit> {
    let m = v.magnitude();
    (0..m.bits())
        .filter(|&t| m.bit(t))
        .map(|t| {
            let t = t as i64;
            let (i, j) = if along_p { (t, 0) } else { (0, t) };
            Digit { d: 1, i, j }
        })
        .collect()
}

fn ternary_expansion(v: &BigInt, along_p: bool) -> Vec<Digit> {
    balanced_ternary(&v.abs())
        .into_iter()
        .enumerate()
        .filter(|&(_, d)| d != 0)
        .map(|(t, d)| {
            let t = t as i64;
            let (i, j) = if along_p { (t, 0) } else { (0, t) };
            Digit { d, i, j }
        })
        .collect()
}

/// Single-base expansion of `|v|` when `p` or `q` is 2 or 3.
fn single_base(v: &BigInt, base: &BasePair) -> Option<Vec<Digit>> {
    let two = BigInt::from(2);
    let three = BigInt::from(3);
    if base.p == two {
        Some(binary_expansion(v, true))
    } else if base.p == three {
        Some(ternary_expansion(v, true))
    } else if base.q == two {
        Some(binary_expansion(v, false))
    } else if base.q == three {
        Some(ternary_expansion(v, false))
    } else {
        None
    }
}

/// Result of [`expand_with`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpandOutcome {
    pub expansion: Expansion,
    /// The relation used; `None` on the single-base path.
    pub relation: Option<PlainRelation>,
    pub steps: u64,
    pub w_init: u64,
}

/// Signed expansion of `v`: binary or balanced ternary when a base is 2 or
/// 3, otherwise the claim reduction with the smallest plain relation whose
/// exponents are at most `search_bound`.
pub fn expand(
    v: &BigInt,
    base: &BasePair,
    search_bound: u32,
) -> Result<Expansion, DoubleBaseError> {
    expand_with(v, base, search_bound, SeedMethod::PAdic).map(|o| o.expansion)
}

pub fn expand_with(
    v: &BigInt,
    base: &BasePair,
    search_bound: u32,
    method: SeedMethod,
) -> Result<ExpandOutcome, DoubleBaseError> {
    if let Some(digits) = single_base(v, base) {
        let e = Expansion::new(ExpansionKind::Signed, base.clone(), digits)
            .expect("single-base digits are valid");
        let weight = e.terms.len() as u64;
        return Ok(ExpandOutcome {
            expansion: if v.is_negative() { e.negated() } else { e },
            relation: None,
            steps: 0,
            w_init: weight,
        });
    }
    let rel = find_plain_relation(base, search_bound)
        .ok_or(DoubleBaseError::NoRelationFound(search_bound))?;
    let out = expand_claim_with(v, base, &rel, method, None)?;
    Ok(ExpandOutcome {
        expansion: out.expansion,
        relation: Some(rel),
        steps: out.steps,
        w_init: out.w_init,
    })
}

/// Extended expansion of `x = n / (p^a q^b)`: the numerator is expanded with
/// an extended relation (or a single-base path) and every exponent is then
/// shifted by `(-a, -b)`.
pub fn expand_extended(
    x: &PQRational,
    base: &BasePair,
    search_bound: u32,
) -> Result<Expansion, DoubleBaseError> {
    let numerator = if let Some(digits) = single_base(&x.num, base) {
        Expansion::new(ExpansionKind::Extended, base.clone(), digits)
            .expect("single-base digits are valid")
    } else {
        let rel = find_extended_relation(base, search_bound)
            .ok_or(DoubleBaseError::NoRelationFound(search_bound))?;
        expand_with_extended(&x.num.abs(), base, &rel)?
    };
    let numerator = if x.num.is_negative() {
        numerator.negated()
    } else {
        numerator
    };
    let out = numerator.shifted(-(x.a_p as i64), -(x.a_q as i64), ExpansionKind::Extended);
    Ok(Expansion::new(out.kind, out.base, out.terms).expect("shift keeps digits valid"))
}

/// Expansion of `v >= 0` driven by an extended relation.
fn expand_with_extended(
    v: &BigInt,
    base: &BasePair,
    rel: &ExtendedRelation,
) -> Result<Expansion, DoubleBaseError> {
    if !crate::relations::verify_extended(base, rel) {
        return Err(DoubleBaseError::RelationInvalid);
    }
    let (a, b) = rel.search_exponents();
    match rel.form {
        RelationForm::Plain => {
            let sign = if rel.a != 0 { 1 } else { -1 };
            let plain = PlainRelation {
                x: a as u32,
                y: b as u32,
                sign,
            };
            let out = expand_claim(v, base, &plain)?;
            Ok(Expansion {
                kind: ExpansionKind::Extended,
                ..out.expansion
            })
        }
        RelationForm::PInverse => {
            let seed = seed_terms(v, base, SeedMethod::PAdic);
            let (digits, _) = run_claim(seed, ShiftRule::p_inverse(a, b, rel.sign as i64), None);
            Expansion::new(ExpansionKind::Extended, base.clone(), digits)
        }
        RelationForm::QInverse => {
            let swapped = base.swapped();
            let mirrored = ExtendedRelation {
                a: rel.b,
                b: rel.a,
                c: rel.d,
                d: rel.c,
                sign: rel.sign,
                form: RelationForm::PInverse,
            };
            Ok(expand_with_extended(v, &swapped, &mirrored)?.transposed())
        }
    }
}

/// Exact value `sum d * p^i q^j`.
pub fn evaluate_expansion(e: &Expansion) -> BigRational {
    let p = BigRational::from_integer(e.base.p.clone());
    let q = BigRational::from_integer(e.base.q.clone());
    let mut acc = BigRational::zero();
    for t in &e.terms {
        let term = pow_rational(&p, t.i) * pow_rational(&q, t.j);
        if t.d > 0 {
            acc += term;
        } else {
            acc -= term;
        }
    }
    acc
}

/// Number of nonzero digits.
pub fn weight(e: &Expansion) -> usize {
    e.terms.len()
}

fn ln_magnitude(n: &BigInt) -> f64 {
    let m = n.magnitude();
    let shift = m.bits().saturating_sub(64);
    let top = (m >> shift).to_f64().expect("64-bit value converts");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// `max(log|n|, log|m|, 1)` for `x = n / m` in lowest terms; 1 for `x = 0`.
pub fn height(x: &BigRational) -> f64 {
    if x.is_zero() {
        return 1.0;
    }
    ln_magnitude(x.numer())
        .max(ln_magnitude(x.denom()))
        .max(1.0)
}

struct RationalMagnitudes([BigRational; 2]);

impl UnitMagnitudes for RationalMagnitudes {
    fn exact(&self, m: usize) -> Option<BigRational> {
        Some(self.0[m].clone())
    }

    fn enclosure(&self, m: usize, precision: u32) -> Interval {
        Interval::from_rational(&self.0[m], precision)
    }
}

/// Engine basis `zeta = -1`, `eta = 1`, `eps = (p, q)`.
pub fn rational_basis(base: &BasePair) -> Arc<UnitGroupBasis> {
    let mags = RationalMagnitudes([
        BigRational::from_integer(base.p.clone()),
        BigRational::from_integer(base.q.clone()),
    ]);
    Arc::new(
        UnitGroupBasis::new(
            Torsion::MinusOne,
            vec!["1".into()],
            vec![base.p.to_string(), base.q.to_string()],
            Arc::new(mags),
        )
        .expect("two units and one generator"),
    )
}

/// Exact evaluation of engine representations over `Q`.
pub struct RationalEvaluator {
    p: BigRational,
    q: BigRational,
}

impl RationalEvaluator {
    pub fn new(base: &BasePair) -> Self {
        RationalEvaluator {
            p: BigRational::from_integer(base.p.clone()),
            q: BigRational::from_integer(base.q.clone()),
        }
    }
}

impl Evaluator for RationalEvaluator {
    type Value = BigRational;

    fn zero(&self) -> BigRational {
        BigRational::zero()
    }

    fn integer(&self, n: u64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn unit(&self, k: usize, exponent: &[i64]) -> BigRational {
        let v = pow_rational(&self.p, exponent[0]) * pow_rational(&self.q, exponent[1]);
        if k % 2 == 1 {
            -v
        } else {
            v
        }
    }

    fn generator(&self, _: usize) -> BigRational {
        BigRational::one()
    }

    fn add(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a + b
    }

    fn mul(&self, a: &BigRational, b: &BigRational) -> BigRational {
        a * b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{evaluate, reduce, ReductionPolicy, Representation, TermIndex};

    fn int(v: i64) -> BigInt {
        BigInt::from(v)
    }

    fn b523() -> BasePair {
        BasePair::from_u64(5, 23).unwrap()
    }

    fn digit(d: i8, i: i64, j: i64) -> Digit {
        Digit { d, i, j }
    }

    #[test]
    fn base_pair_validation() {
        assert!(BasePair::from_u64(5, 23).is_ok());
        assert!(BasePair::from_u64(6, 9).is_err());
        assert!(BasePair::from_u64(1, 9).is_err());
        assert!(BasePair::from_u64(7, 7).is_err());
    }

    #[test]
    fn digit_conversions() {
        assert!(p_adic_digits(&int(0), &int(5)).is_empty());
        assert_eq!(p_adic_digits(&int(997), &int(5)), vec![2, 4, 4, 2, 1]);
        assert_eq!(p_adic_digits(&int(7), &int(5)), vec![2, 1]);
        assert!(balanced_ternary(&int(0)).is_empty());
        assert_eq!(balanced_ternary(&int(5)), vec![-1, -1, 1]);
        assert_eq!(balanced_ternary(&int(-5)), vec![1, 1, -1]);
    }

    #[test]
    fn greedy_traces() {
        assert!(greedy_seed(&int(0), &b523()).is_empty());
        assert_eq!(
            greedy_seed(&int(2), &b523()),
            vec![SeedTerm { c: 2, i: 0, j: 0 }]
        );
        let seed: Vec<(i64, u32, u32)> = greedy_seed(&int(995), &b523())
            .into_iter()
            .map(|t| (t.c, t.i, t.j))
            .collect();
        assert_eq!(
            seed,
            vec![
                (1, 4, 0),
                (1, 0, 2),
                (-1, 3, 0),
                (-1, 2, 0),
                (-2, 1, 0),
                (1, 0, 0)
            ]
        );
    }

    #[test]
    fn claim_small_values() {
        let rel = PlainRelation {
            x: 2,
            y: 1,
            sign: 1,
        };
        let out = expand_claim(&int(1), &b523(), &rel).unwrap();
        assert_eq!(out.expansion.terms(), &[digit(1, 0, 0)]);
        assert_eq!(out.steps, 0);
        let out = expand_claim(&int(2), &b523(), &rel).unwrap();
        assert_eq!(out.expansion.terms(), &[digit(1, 2, 0), digit(-1, 0, 1)]);
        assert_eq!(out.steps, 1);
        let out = expand_claim(&int(4), &b523(), &rel).unwrap();
        assert_eq!(
            out.expansion.terms(),
            &[
                digit(-1, 4, 1),
                digit(1, 4, 0),
                digit(1, 2, 2),
                digit(1, 0, 2)
            ]
        );
        assert_eq!(out.steps, 5);
        assert!(out.steps <= (out.w_init * out.w_init - out.w_init) / 2);
        let bad = PlainRelation {
            x: 2,
            y: 2,
            sign: 1,
        };
        assert_eq!(
            expand_claim(&int(4), &b523(), &bad),
            Err(DoubleBaseError::RelationInvalid)
        );
    }

    #[test]
    fn claim_agrees_with_engine() {
        let base = b523();
        let rel = PlainRelation {
            x: 2,
            y: 1,
            sign: 1,
        };
        let basis = rational_basis(&base);
        let seed = Representation::from_terms(basis, [(TermIndex::new(0, 0, &[0, 0]), 4)]).unwrap();
        let r = reduce(&seed, &rel.to_unit_relation(), &ReductionPolicy::default()).unwrap();
        let claim = expand_claim(&int(4), &base, &rel).unwrap();
        assert_eq!(r.steps, claim.steps);
        assert_eq!(
            evaluate(&r.representation, &RationalEvaluator::new(&base)),
            evaluate_expansion(&claim.expansion)
        );
    }

    #[test]
    fn expand_dispatch() {
        let b27 = BasePair::from_u64(2, 7).unwrap();
        assert_eq!(
            expand(&int(5), &b27, 64).unwrap().terms(),
            &[digit(1, 2, 0), digit(1, 0, 0)]
        );
        let b73 = BasePair::from_u64(7, 3).unwrap();
        assert_eq!(
            expand(&int(5), &b73, 64).unwrap().terms(),
            &[digit(1, 0, 2), digit(-1, 0, 1), digit(-1, 0, 0)]
        );
        let e = expand(&int(997), &b523(), 64).unwrap();
        assert_eq!(evaluate_expansion(&e), BigRational::from_integer(int(997)));
        assert_eq!(
            expand(&int(2), &BasePair::from_u64(5, 11).unwrap(), 64),
            Err(DoubleBaseError::NoRelationFound(64))
        );
        assert!(expand(&int(0), &b523(), 64).unwrap().terms().is_empty());
    }

    #[test]
    fn negation_symmetry() {
        for v in [1, 2, 17, 998, 12345] {
            let pos = expand(&int(v), &b523(), 64).unwrap();
            let neg = expand(&int(-v), &b523(), 64).unwrap();
            assert_eq!(neg, pos.negated());
        }
    }

    #[test]
    fn greedy_seeded_expansion() {
        let out = expand_with(&int(995), &b523(), 64, SeedMethod::Greedy).unwrap();
        assert_eq!(
            evaluate_expansion(&out.expansion),
            BigRational::from_integer(int(995))
        );
        assert_eq!(out.w_init, 7);
    }

    fn rat(n: i64, d: i64) -> BigRational {
        BigRational::new(int(n), int(d))
    }

    #[test]
    fn extended_expansions() {
        let b511 = BasePair::from_u64(5, 11).unwrap();
        let two = PQRational::from_rational(&rat(2, 1), &b511).unwrap();
        let e = expand_extended(&two, &b511, 64).unwrap();
        assert_eq!(e.terms(), &[digit(1, -1, 1), digit(-1, -1, 0)]);
        let fifth = PQRational::from_rational(&rat(1, 5), &b511).unwrap();
        assert_eq!(
            expand_extended(&fifth, &b511, 64).unwrap().terms(),
            &[digit(1, -1, 0)]
        );
        for x in [
            rat(7, 25),
            rat(-7, 25),
            rat(997, 1),
            rat(3, 55),
            rat(-1000, 121),
        ] {
            let pq = PQRational::from_rational(&x, &b511).unwrap();
            let e = expand_extended(&pq, &b511, 64).unwrap();
            assert_eq!(evaluate_expansion(&e), x);
        }
        assert!(PQRational::from_rational(&rat(1, 3), &b511).is_err());
    }

    #[test]
    fn extended_mirror_form() {
        // only 2 * 11 = 23 - 1 links these bases
        let base = BasePair::from_u64(23, 11).unwrap();
        let rel = find_extended_relation(&base, 16).unwrap();
        assert_eq!(rel.form, RelationForm::QInverse);
        for x in [rat(2, 1), rat(100, 1), rat(-45, 11), rat(9, 23)] {
            let pq = PQRational::from_rational(&x, &base).unwrap();
            let e = expand_extended(&pq, &base, 16).unwrap();
            assert_eq!(evaluate_expansion(&e), x);
        }
    }

    #[test]
    fn reference_rows_evaluate() {
        let e = Expansion::new(
            ExpansionKind::Signed,
            b523(),
            vec![
                digit(-1, 5, 0),
                digit(1, 4, 0),
                digit(1, 3, 1),
                digit(-1, 2, 0),
                digit(1, 1, 1),
                digit(1, 0, 2),
                digit(1, 0, 0),
            ],
        )
        .unwrap();
        assert_eq!(evaluate_expansion(&e), BigRational::from_integer(int(995)));
        assert_eq!(weight(&e), 7);
        assert_eq!(
            e.to_string(),
            "- 5^5 + 5^4 + 5^3*23 - 5^2 + 5*23 + 23^2 + 1"
        );
    }

    #[test]
    fn heights() {
        assert_eq!(height(&rat(1, 1)), 1.0);
        assert_eq!(height(&rat(0, 1)), 1.0);
        assert!((height(&rat(997, 1)) - 6.904750769961838).abs() < 1e-12);
        assert!((height(&rat(7, 25)) - 3.218875824868201).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let e = expand(&int(997), &b523(), 64).unwrap();
        let s = e.to_json();
        assert!(s.starts_with(r#"{"kind":"signed","p":"5","q":"23","value":"997","terms":[{"d":"#));
        let (back, value) = Expansion::from_json(&s).unwrap();
        assert_eq!(back, e);
        assert_eq!(value, BigRational::from_integer(int(997)));
        let b511 = BasePair::from_u64(5, 11).unwrap();
        let x = PQRational::from_rational(&rat(7, 25), &b511).unwrap();
        let e = expand_extended(&x, &b511, 64).unwrap();
        let (back, value) = Expansion::from_json(&e.to_json()).unwrap();
        assert_eq!(back, e);
        assert_eq!(value, rat(7, 25));
        assert!(Expansion::from_json(
            r#"{"kind":"signed","p":"5","q":"23","value":"1","terms":[{"d":2,"i":0,"j":0}]}"#
        )
        .is_err());
    }
}
