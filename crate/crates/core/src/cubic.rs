//! Simplest cubic fields: `Z[alpha]` with `alpha` a root of
//! `X^3 - (a-1) X^2 - (a+2) X - 1`.
//!
//! `alpha_1 = alpha` and `alpha_2 = -1 - 1/alpha` generate the units modulo
//! `-1`, and `alpha_1 alpha_2^2 + alpha_1^-2 alpha_2^-1 + alpha_1 alpha_2^-1 = 3`
//! for every `a`. Feeding that relation to the engine writes any element as
//! a sum of units with every coefficient at most 2.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{
    evaluate, reduce_observed, EngineError, Evaluator, ReductionPolicy, RelationTerm,
    Representation, StepObserver, TermIndex, Torsion, UnitGroupBasis, UnitMagnitudes, UnitRelation,
};
use crate::interval::Interval;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CubicError {
    #[error("elements belong to different fields (a = {0} and a = {1})")]
    ParamsMismatch(BigInt, BigInt),
    #[error("the three-unit relation fails for a = {0}")]
    RelationBroken(BigInt),
    #[error("coordinate {0} is too large to seed a representation")]
    CoordinateTooLarge(BigInt),
    #[error("malformed element document: {0}")]
    Document(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// The family parameter `a`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CubicParams {
    a: BigInt,
}

impl CubicParams {
    pub fn new(a: BigInt) -> Self {
        CubicParams { a }
    }

    pub fn from_i64(a: i64) -> Self {
        CubicParams::new(BigInt::from(a))
    }

    pub fn a(&self) -> &BigInt {
        &self.a
    }

    /// `(a - 1, a + 2, 1)`: `alpha^3 = (a-1) alpha^2 + (a+2) alpha + 1`.
    fn cube_rule(&self) -> [BigInt; 3] {
        [&self.a - 1, &self.a + 2, BigInt::one()]
    }

    /// Sign of `P(m / 2^k)`.
    fn sign_at(&self, m: &BigInt, k: u64) -> i8 {
        let [s2, s1, _] = self.cube_rule();
        let one = BigInt::one() << k;
        let v = m * m * m - s2 * m * m * &one - s1 * m * &one * &one - &one * &one * &one;
        if v.is_positive() {
            1
        } else if v.is_negative() {
            -1
        } else {
            0
        }
    }
}

/// `c0 + c1 alpha + c2 alpha^2`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CubicElement {
    params: CubicParams,
    coords: [BigInt; 3],
}

impl CubicElement {
    pub fn new(params: CubicParams, coords: [BigInt; 3]) -> Self {
        CubicElement { params, coords }
    }

    pub fn from_i64s(params: &CubicParams, c: [i64; 3]) -> Self {
        CubicElement::new(params.clone(), c.map(BigInt::from))
    }

    pub fn integer(params: &CubicParams, n: BigInt) -> Self {
        CubicElement::new(params.clone(), [n, BigInt::zero(), BigInt::zero()])
    }

    pub fn one(params: &CubicParams) -> Self {
        CubicElement::integer(params, BigInt::one())
    }

    pub fn alpha(params: &CubicParams) -> Self {
        CubicElement::from_i64s(params, [0, 1, 0])
    }

    pub fn params(&self) -> &CubicParams {
        &self.params
    }

    pub fn coords(&self) -> &[BigInt; 3] {
        &self.coords
    }

    pub fn is_one(&self) -> bool {
        self.coords[0].is_one() && self.coords[1].is_zero() && self.coords[2].is_zero()
    }

    fn check(&self, other: &CubicElement) -> Result<(), CubicError> {
        if self.params != other.params {
            return Err(CubicError::ParamsMismatch(
                self.params.a.clone(),
                other.params.a.clone(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &CubicElement) -> Result<CubicElement, CubicError> {
        self.check(other)?;
        Ok(self.add_unchecked(other))
    }

    fn add_unchecked(&self, other: &CubicElement) -> CubicElement {
        CubicElement {
            params: self.params.clone(),
            coords: [0, 1, 2].map(|t| &self.coords[t] + &other.coords[t]),
        }
    }

    pub fn neg(&self) -> CubicElement {
        CubicElement {
            params: self.params.clone(),
            coords: [0, 1, 2].map(|t| -&self.coords[t]),
        }
    }

    pub fn scale(&self, k: &BigInt) -> CubicElement {
        CubicElement {
            params: self.params.clone(),
            coords: [0, 1, 2].map(|t| &self.coords[t] * k),
        }
    }

    pub fn mul(&self, other: &CubicElement) -> Result<CubicElement, CubicError> {
        self.check(other)?;
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &CubicElement) -> CubicElement {
        let mut d: [BigInt; 5] = Default::default();
        for s in 0..3 {
            if self.coords[s].is_zero() {
                continue;
            }
            for t in 0..3 {
                d[s + t] += &self.coords[s] * &other.coords[t];
            }
        }
        let [r2, r1, r0] = self.params.cube_rule();
        for top in [4usize, 3] {
            let c = std::mem::take(&mut d[top]);
            if c.is_zero() {
                continue;
            }
            d[top - 1] += &r2 * &c;
            d[top - 2] += &r1 * &c;
            d[top - 3] += &r0 * &c;
        }
        let [d0, d1, d2, _, _] = d;
        CubicElement {
            params: self.params.clone(),
            coords: [d0, d1, d2],
        }
    }

    /// Matrix of multiplication by `self` on the basis `1, alpha, alpha^2`
    /// (columns are the images of the basis vectors).
    fn matrix(&self) -> [[BigInt; 3]; 3] {
        let mut cols: Vec<[BigInt; 3]> = Vec::with_capacity(3);
        let mut basis = CubicElement::one(&self.params);
        let alpha = CubicElement::alpha(&self.params);
        for _ in 0..3 {
            cols.push(self.mul_unchecked(&basis).coords);
            basis = basis.mul_unchecked(&alpha);
        }
        let mut m: [[BigInt; 3]; 3] = Default::default();
        for (c, col) in cols.into_iter().enumerate() {
            for (r, v) in col.into_iter().enumerate() {
                m[r][c] = v;
            }
        }
        m
    }

    pub fn norm(&self) -> BigInt {
        let m = self.matrix();
        det3(&m)
    }

    /// The inverse when it lies in `Z[alpha]`, i.e. when `self` is a unit.
    pub fn try_inverse(&self) -> Option<CubicElement> {
        let m = self.matrix();
        let det = det3(&m);
        if det.is_zero() {
            return None;
        }
        // first column of adj(m) / det solves m * x = e_0
        let cof = |r0: usize, r1: usize, c0: usize, c1: usize| {
            &m[r0][c0] * &m[r1][c1] - &m[r0][c1] * &m[r1][c0]
        };
        let adj_col = [cof(1, 2, 1, 2), -cof(1, 2, 0, 2), cof(1, 2, 0, 1)];
        let mut coords: [BigInt; 3] = Default::default();
        for (t, v) in adj_col.into_iter().enumerate() {
            if !(&v % &det).is_zero() {
                return None;
            }
            coords[t] = v / &det;
        }
        Some(CubicElement {
            params: self.params.clone(),
            coords,
        })
    }

    /// `self^e`; `None` for a negative power of a non-unit.
    pub fn pow(&self, e: i64) -> Option<CubicElement> {
        let base = if e < 0 {
            self.try_inverse()?
        } else {
            self.clone()
        };
        let mut n = e.unsigned_abs();
        let mut acc = CubicElement::one(&self.params);
        let mut sq = base;
        while n > 0 {
            if n & 1 == 1 {
                acc = acc.mul_unchecked(&sq);
            }
            n >>= 1;
            if n > 0 {
                sq = sq.mul_unchecked(&sq);
            }
        }
        Some(acc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ElementDoc {
            a: self.params.a.to_string(),
            coords: self.coords.iter().map(|c| c.to_string()).collect(),
        })
        .expect("element serializes")
    }

    pub fn from_json(s: &str) -> Result<CubicElement, CubicError> {
        let doc: ElementDoc =
            serde_json::from_str(s).map_err(|e| CubicError::Document(e.to_string()))?;
        let int = |v: &str| {
            v.parse::<BigInt>()
                .map_err(|e| CubicError::Document(format!("{v:?}: {e}")))
        };
        if doc.coords.len() != 3 {
            return Err(CubicError::Document("expected three coordinates".into()));
        }
        Ok(CubicElement::new(
            CubicParams::new(int(&doc.a)?),
            [
                int(&doc.coords[0])?,
                int(&doc.coords[1])?,
                int(&doc.coords[2])?,
            ],
        ))
    }
}

impl fmt::Display for CubicElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [c0, c1, c2] = &self.coords;
        write!(f, "{c0} + {c1}*alpha + {c2}*alpha^2")
    }
}

#[derive(Serialize, Deserialize)]
struct ElementDoc {
    a: String,
    coords: Vec<String>,
}

fn det3(m: &[[BigInt; 3]; 3]) -> BigInt {
    &m[0][0] * (&m[1][1] * &m[2][2] - &m[1][2] * &m[2][1])
        - &m[0][1] * (&m[1][0] * &m[2][2] - &m[1][2] * &m[2][0])
        + &m[0][2] * (&m[1][0] * &m[2][1] - &m[1][1] * &m[2][0])
}

/// `alpha_2 = -1 - alpha^-1 = (a+1) + (a-1) alpha - alpha^2`.
pub fn alpha2(params: &CubicParams) -> CubicElement {
    CubicElement::new(
        params.clone(),
        [&params.a + 1, &params.a - 1, BigInt::from(-1)],
    )
}

/// `alpha^-1 = alpha^2 - (a-1) alpha - (a+2)`.
pub fn alpha_inverse(params: &CubicParams) -> CubicElement {
    CubicElement::new(
        params.clone(),
        [-(&params.a + 2i64), -(&params.a - 1i64), BigInt::one()],
    )
}

/// `alpha_1^i alpha_2^j`.
pub fn unit_monomial(i: i64, j: i64, params: &CubicParams) -> CubicElement {
    let a1 = if i < 0 {
        alpha_inverse(params).pow(-i)
    } else {
        CubicElement::alpha(params).pow(i)
    }
    .expect("nonnegative power");
    let a2 = alpha2(params).pow(j).expect("alpha_2 is a unit");
    a1.mul_unchecked(&a2)
}

/// The units `u_1, u_2, u_3` in closed form.
pub fn relation_units(params: &CubicParams) -> [CubicElement; 3] {
    let a = &params.a;
    [
        CubicElement::new(params.clone(), [-a.clone(), 2i64 - a, BigInt::one()]),
        CubicElement::new(
            params.clone(),
            [a + 4i64, 2i64 * a - 1i64, BigInt::from(-2)],
        ),
        CubicElement::new(
            params.clone(),
            [BigInt::from(-1), -(a + 1i64), BigInt::one()],
        ),
    ]
}

/// Exponents of `u_1, u_2, u_3` in `(alpha_1, alpha_2)`.
pub const RELATION_EXPONENTS: [[i64; 2]; 3] = [[1, 2], [-2, -1], [1, -1]];

/// `u_1 + u_2 + u_3 = 3` as an engine relation, after checking the closed
/// forms against the monomials and the sum exactly.
pub fn three_relation(params: &CubicParams) -> Result<UnitRelation, CubicError> {
    let units = relation_units(params);
    let mut sum = CubicElement::integer(params, BigInt::zero());
    for (u, [i, j]) in units.iter().zip(RELATION_EXPONENTS) {
        if unit_monomial(i, j, params) != *u {
            return Err(CubicError::RelationBroken(params.a.clone()));
        }
        sum = sum.add_unchecked(u);
    }
    if sum != CubicElement::integer(params, BigInt::from(3)) {
        return Err(CubicError::RelationBroken(params.a.clone()));
    }
    Ok(UnitRelation::new(
        3,
        RELATION_EXPONENTS
            .iter()
            .map(|x| RelationTerm::new(0, x))
            .collect(),
    )?)
}

/// Enclosures of the three real roots, largest first.
///
/// `P(-1) = 1` and `P(0) = -1`, so the roots are separated by `-1` and `0`
/// and each is found by bisection with exact sign evaluation.
pub fn real_roots(params: &CubicParams, precision: u32) -> [Interval; 3] {
    let a = &params.a;
    let bound = (a - 1i64).abs().max((a + 2i64).abs()).max(BigInt::one()) + 1i64;
    let k = precision as u64 + bound.bits() + 2;
    let scale = BigInt::one() << k;
    let b = &bound * &scale;
    let brackets = [
        (BigInt::zero(), b.clone()),
        (-scale.clone(), BigInt::zero()),
        (-b, -scale),
    ];
    brackets.map(|(mut lo, mut hi)| {
        let s_lo = params.sign_at(&lo, k);
        loop {
            let width: BigInt = &hi - &lo;
            if width <= BigInt::one() {
                break;
            }
            let mid: BigInt = (&lo + &hi) >> 1;
            let s = params.sign_at(&mid, k);
            if s == 0 {
                lo = mid.clone();
                hi = mid;
                break;
            }
            if s == s_lo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Interval::from_dyadic(lo, hi, -(k as i64))
    })
}

/// `|alpha_1|` and `|alpha_2|` from the root enclosures; `alpha_1` is the
/// largest root and `alpha_2 = -1 - 1/alpha_1` the smallest.
pub struct CubicMagnitudes {
    params: CubicParams,
    cache: Mutex<HashMap<u32, [Interval; 2]>>,
}

impl CubicMagnitudes {
    pub fn new(params: CubicParams) -> Self {
        CubicMagnitudes {
            params,
            cache: Mutex::new(HashMap::new()),
        }
    }
}

impl UnitMagnitudes for CubicMagnitudes {
    fn exact(&self, _: usize) -> Option<BigRational> {
        None
    }

    fn enclosure(&self, m: usize, precision: u32) -> Interval {
        let mut cache = self.cache.lock().expect("magnitude cache poisoned");
        cache.entry(precision).or_insert_with(|| {
            let [largest, _, smallest] = real_roots(&self.params, precision);
            [largest.abs(), smallest.abs()]
        })[m]
            .clone()
    }
}

/// Engine basis `zeta = -1`, `eta = 1`, `eps = (alpha_1, alpha_2)`.
pub fn cubic_basis(params: &CubicParams) -> Arc<UnitGroupBasis> {
    Arc::new(
        UnitGroupBasis::new(
            Torsion::MinusOne,
            vec!["1".into()],
            vec!["alpha1".into(), "alpha2".into()],
            Arc::new(CubicMagnitudes::new(params.clone())),
        )
        .expect("two units and one generator"),
    )
}

/// Exact evaluation in `Z[alpha]`, caching unit monomials.
pub struct CubicEvaluator {
    params: CubicParams,
    cache: RefCell<HashMap<(i64, i64), CubicElement>>,
}

impl CubicEvaluator {
    pub fn new(params: &CubicParams) -> Self {
        CubicEvaluator {
            params: params.clone(),
            cache: RefCell::new(HashMap::new()),
        }
    }
}

impl Evaluator for CubicEvaluator {
    type Value = CubicElement;

    fn zero(&self) -> CubicElement {
        CubicElement::integer(&self.params, BigInt::zero())
    }

    fn integer(&self, n: u64) -> CubicElement {
        CubicElement::integer(&self.params, BigInt::from(n))
    }

    fn unit(&self, k: usize, exponent: &[i64]) -> CubicElement {
        let key = (exponent[0], exponent[1]);
        let u = self
            .cache
            .borrow_mut()
            .entry(key)
            .or_insert_with(|| unit_monomial(key.0, key.1, &self.params))
            .clone();
        if k % 2 == 1 {
            u.neg()
        } else {
            u
        }
    }

    fn generator(&self, _: usize) -> CubicElement {
        CubicElement::one(&self.params)
    }

    fn add(&self, a: &CubicElement, b: &CubicElement) -> CubicElement {
        a.add_unchecked(b)
    }

    fn mul(&self, a: &CubicElement, b: &CubicElement) -> CubicElement {
        a.mul_unchecked(b)
    }

    fn scale(&self, a: &CubicElement, c: u64) -> CubicElement {
        a.scale(&BigInt::from(c))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CubicRepresentation {
    pub representation: Representation,
    pub steps: u64,
}

/// The seed `|c_t| * (+-alpha^t)` for `t = 0, 1, 2`.
pub fn seed_representation(beta: &CubicElement) -> Result<Representation, CubicError> {
    let basis = cubic_basis(beta.params());
    let mut terms = Vec::new();
    for (t, c) in beta.coords.iter().enumerate() {
        if c.is_zero() {
            continue;
        }
        let mag = c
            .abs()
            .to_u64()
            .ok_or_else(|| CubicError::CoordinateTooLarge(c.clone()))?;
        let k = usize::from(c.is_negative());
        terms.push((TermIndex::new(k, 0, &[t as i64, 0]), mag));
    }
    Ok(Representation::from_terms(basis, terms)?)
}

/// Writes `beta` as a sum of `+-alpha_1^i alpha_2^j` with every coefficient
/// at most 2.
pub fn represent_unit_sums(
    beta: &CubicElement,
    policy: &ReductionPolicy,
) -> Result<CubicRepresentation, CubicError> {
    represent_unit_sums_observed(beta, policy, &mut |_: &Representation, _: &TermIndex| {})
}

pub fn represent_unit_sums_observed<O: StepObserver>(
    beta: &CubicElement,
    policy: &ReductionPolicy,
    observer: &mut O,
) -> Result<CubicRepresentation, CubicError> {
    let rel = three_relation(beta.params())?;
    let seed = seed_representation(beta)?;
    let r = reduce_observed(&seed, &rel, policy, observer)?;
    Ok(CubicRepresentation {
        representation: r.representation,
        steps: r.steps,
    })
}

/// Exact value of a representation over this field.
pub fn evaluate_representation(rep: &Representation, params: &CubicParams) -> CubicElement {
    evaluate(rep, &CubicEvaluator::new(params))
}
