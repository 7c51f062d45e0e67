//! Nonnegative unit-sum representations and the replacement step.
//!
//! A [`Representation`] writes a ring element as
//! `sum a[k, l, x] * zeta^k * eta_l * eps^x` with positive integer
//! coefficients `a`, where `zeta` is a root of unity of order `K`, the
//! `eta_l` are `L` fixed generators and `eps^x = eps_1^x_1 ... eps_M^x_M`
//! ranges over a rank-`M` group of units. A [`UnitRelation`]
//! `u_1 + ... + u_I = n` between units drives the replacement step: `n`
//! copies of one monomial are traded for the `I` shifted monomials of the
//! relation. [`reduce`] iterates that step until every coefficient is below
//! `n`, splitting representations whose support has a wide empty band and
//! merging the reduced halves.
//!
//! The engine is generic over the ring: exact values come from an
//! [`Evaluator`] supplied by the instantiation, and absolute values of the
//! units (for the [`monotone_quantity`]) come from the [`UnitMagnitudes`]
//! hook stored in the [`UnitGroupBasis`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use smallvec::SmallVec;
use thiserror::Error;

use crate::interval::Interval;

/// A point of the exponent lattice `Z^M`.
pub type Exponent = SmallVec<[i64; 4]>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error(
        "coefficient {found} at the target is smaller than the relation's right-hand side {needed}"
    )]
    TargetTooSmall { found: u64, needed: u64 },
    #[error("reduction exceeded the cap of {cap} replacement steps")]
    IterationCapExceeded { cap: u64 },
    #[error("split would leave one side empty")]
    EmptySide,
    #[error("support meets the band ({cut}, {cut} + {width}] in coordinate {coord}")]
    NotAGap { coord: usize, cut: i64, width: u64 },
    #[error("representations live over different bases")]
    BasisMismatch,
    #[error("invalid unit relation: {0}")]
    InvalidRelation(String),
    #[error("invalid basis: {0}")]
    InvalidBasis(String),
    #[error("index does not fit the basis: {0}")]
    DimensionMismatch(String),
    #[error("coefficient overflow")]
    CoefficientOverflow,
    #[error("units are multiplicatively dependent: |eps^{0:?}| = 1")]
    DependentUnits(Vec<i64>),
}

/// The torsion part `zeta` of the unit group used by a basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Torsion {
    /// `zeta = -1`, `K = 2`; layer `k = 1` carries the negative coefficients.
    MinusOne,
}

impl Torsion {
    pub fn order(self) -> usize {
        match self {
            Torsion::MinusOne => 2,
        }
    }
}

/// Absolute values `|eps_m|` of the basis units.
pub trait UnitMagnitudes: Send + Sync {
    /// The exact magnitude when it is rational.
    fn exact(&self, m: usize) -> Option<BigRational>;
    /// A certified enclosure of `|eps_m|` whose width is about `2^-precision`.
    fn enclosure(&self, m: usize, precision: u32) -> Interval;
}

/// `zeta`, the generators `eta_1..eta_L` and the units `eps_1..eps_M`.
#[derive(Clone)]
pub struct UnitGroupBasis {
    torsion: Torsion,
    generators: Vec<String>,
    units: Vec<String>,
    magnitudes: Arc<dyn UnitMagnitudes>,
}

impl fmt::Debug for UnitGroupBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnitGroupBasis")
            .field("torsion", &self.torsion)
            .field("generators", &self.generators)
            .field("units", &self.units)
            .finish()
    }
}

impl PartialEq for UnitGroupBasis {
    fn eq(&self, other: &Self) -> bool {
        self.torsion == other.torsion
            && self.generators == other.generators
            && self.units == other.units
    }
}

impl UnitGroupBasis {
    pub fn new(
        torsion: Torsion,
        generators: Vec<String>,
        units: Vec<String>,
        magnitudes: Arc<dyn UnitMagnitudes>,
    ) -> Result<Self, EngineError> {
        if generators.is_empty() {
            return Err(EngineError::InvalidBasis(
                "need at least one generator".into(),
            ));
        }
        if units.is_empty() {
            return Err(EngineError::InvalidBasis("need at least one unit".into()));
        }
        Ok(UnitGroupBasis {
            torsion,
            generators,
            units,
            magnitudes,
        })
    }

    pub fn torsion(&self) -> Torsion {
        self.torsion
    }

    /// `K`
    pub fn torsion_order(&self) -> usize {
        self.torsion.order()
    }

    /// `L`
    pub fn generator_count(&self) -> usize {
        self.generators.len()
    }

    /// `M`
    pub fn rank(&self) -> usize {
        self.units.len()
    }

    pub fn generator_labels(&self) -> &[String] {
        &self.generators
    }

    pub fn unit_labels(&self) -> &[String] {
        &self.units
    }

    pub fn exact_magnitude(&self, m: usize) -> Option<BigRational> {
        self.magnitudes.exact(m).map(|x| x.abs())
    }

    pub fn magnitude(&self, m: usize, precision: u32) -> Interval {
        match self.magnitudes.exact(m) {
            Some(x) => Interval::from_rational(&x.abs(), precision),
            None => self.magnitudes.enclosure(m, precision).abs(),
        }
    }

    /// Checks that no `eps^x` with `0 < max|x_m| <= bound` has absolute
    /// value 1. Exact when all magnitudes are rational; otherwise decided on
    /// enclosures, raising precision up to `max_precision` bits.
    pub fn check_independence(&self, bound: i64, max_precision: u32) -> Result<(), EngineError> {
        let m = self.rank();
        let mut x = vec![-bound; m];
        let exact: Option<Vec<BigRational>> = (0..m).map(|i| self.exact_magnitude(i)).collect();
        loop {
            let first_nonzero = x.iter().find(|&&v| v != 0);
            if matches!(first_nonzero, Some(&v) if v > 0) {
                let is_one = match &exact {
                    Some(mags) => {
                        let mut acc = BigRational::one();
                        for (mag, &e) in mags.iter().zip(&x) {
                            acc *= pow_rational(mag, e);
                        }
                        acc.is_one()
                    }
                    None => {
                        let mut precision = 64;
                        loop {
                            let mut acc = Interval::one();
                            for (i, &e) in x.iter().enumerate() {
                                let p = self
                                    .magnitude(i, precision)
                                    .powi(e, precision)
                                    .expect("unit magnitudes are nonzero");
                                acc = acc.mul(&p, precision);
                            }
                            if !acc.contains_rational(&BigRational::one()) {
                                break false;
                            }
                            if precision >= max_precision {
                                break true;
                            }
                            precision *= 2;
                        }
                    }
                };
                if is_one {
                    return Err(EngineError::DependentUnits(x));
                }
            }
            // odometer over [-bound, bound]^m
            let mut i = 0;
            loop {
                if i == m {
                    return Ok(());
                }
                if x[i] < bound {
                    x[i] += 1;
                    break;
                }
                x[i] = -bound;
                i += 1;
            }
        }
    }
}

pub(crate) fn pow_rational(x: &BigRational, e: i64) -> BigRational {
    let p = num_traits::pow(x.clone(), e.unsigned_abs() as usize);
    if e < 0 {
        p.recip()
    } else {
        p
    }
}

/// Position `(k, l, x)` of a coefficient. The derived order is the
/// lexicographic order used to pick reduction targets.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TermIndex {
    pub k: usize,
    pub generator: usize,
    pub exponent: Exponent,
}

impl TermIndex {
    pub fn new(k: usize, generator: usize, exponent: &[i64]) -> Self {
        TermIndex {
            k,
            generator,
            exponent: Exponent::from_slice(exponent),
        }
    }
}

/// The minimal integer box `[lower_m, upper_m]` covering the support.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundingBox {
    pub lower: Exponent,
    pub upper: Exponent,
}

#[derive(Clone, Debug)]
pub struct Representation {
    basis: Arc<UnitGroupBasis>,
    coeffs: BTreeMap<TermIndex, u64>,
}

impl PartialEq for Representation {
    fn eq(&self, other: &Self) -> bool {
        self.basis == other.basis && self.coeffs == other.coeffs
    }
}

impl Representation {
    /// The empty representation, which encodes 0.
    pub fn empty(basis: Arc<UnitGroupBasis>) -> Self {
        Representation {
            basis,
            coeffs: BTreeMap::new(),
        }
    }

    /// Builds a representation, summing repeated indices and dropping zeros.
    pub fn from_terms<I>(basis: Arc<UnitGroupBasis>, terms: I) -> Result<Self, EngineError>
    where
        I: IntoIterator<Item = (TermIndex, u64)>,
    {
        let mut rep = Representation::empty(basis);
        for (idx, c) in terms {
            rep.check_index(&idx)?;
            if c == 0 {
                continue;
            }
            let slot = rep.coeffs.entry(idx).or_insert(0);
            *slot = slot
                .checked_add(c)
                .ok_or(EngineError::CoefficientOverflow)?;
        }
        Ok(rep)
    }

    fn check_index(&self, idx: &TermIndex) -> Result<(), EngineError> {
        if idx.k >= self.basis.torsion_order() {
            return Err(EngineError::DimensionMismatch(format!(
                "k = {} >= K",
                idx.k
            )));
        }
        if idx.generator >= self.basis.generator_count() {
            return Err(EngineError::DimensionMismatch(format!(
                "generator {} >= L",
                idx.generator
            )));
        }
        if idx.exponent.len() != self.basis.rank() {
            return Err(EngineError::DimensionMismatch(format!(
                "exponent has {} entries, basis rank is {}",
                idx.exponent.len(),
                self.basis.rank()
            )));
        }
        Ok(())
    }

    pub fn basis(&self) -> &Arc<UnitGroupBasis> {
        &self.basis
    }

    pub fn coefficient(&self, idx: &TermIndex) -> u64 {
        self.coeffs.get(idx).copied().unwrap_or(0)
    }

    /// Nonzero coefficients in lexicographic index order.
    pub fn iter(&self) -> impl Iterator<Item = (&TermIndex, u64)> + '_ {
        self.coeffs.iter().map(|(k, &v)| (k, v))
    }

    /// Number of nonzero coefficients.
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_coefficient(&self) -> u64 {
        self.coeffs.values().copied().max().unwrap_or(0)
    }

    /// `None` for the empty representation.
    pub fn bbox(&self) -> Option<BoundingBox> {
        let mut it = self.coeffs.keys();
        let first = it.next()?;
        let mut lower = first.exponent.clone();
        let mut upper = first.exponent.clone();
        for idx in it {
            for (m, &v) in idx.exponent.iter().enumerate() {
                lower[m] = lower[m].min(v);
                upper[m] = upper[m].max(v);
            }
        }
        Some(BoundingBox { lower, upper })
    }

    /// Cancels opposite-sign mass at equal `(l, x)`: with `zeta = -1`,
    /// `a * eta * eps^x + b * (-eta * eps^x)` keeps only `|a - b|` on one layer.
    pub fn normalized(&self) -> Representation {
        match self.basis.torsion {
            Torsion::MinusOne => {
                let mut coeffs = self.coeffs.clone();
                for (idx, &c) in self.coeffs.iter().filter(|(i, _)| i.k == 0) {
                    let partner = TermIndex {
                        k: 1,
                        generator: idx.generator,
                        exponent: idx.exponent.clone(),
                    };
                    if let Some(&d) = self.coeffs.get(&partner) {
                        let common = c.min(d);
                        for (i, v) in [(idx.clone(), c), (partner, d)] {
                            if v == common {
                                coeffs.remove(&i);
                            } else {
                                coeffs.insert(i, v - common);
                            }
                        }
                    }
                }
                Representation {
                    basis: self.basis.clone(),
                    coeffs,
                }
            }
        }
    }

    /// Adds `delta` at `idx`, returning the new coefficient.
    fn bump(&mut self, idx: TermIndex, delta: u64) -> Result<u64, EngineError> {
        let slot = self.coeffs.entry(idx).or_insert(0);
        *slot = slot
            .checked_add(delta)
            .ok_or(EngineError::CoefficientOverflow)?;
        Ok(*slot)
    }
}

/// One unit `zeta^k * eps^r` of a relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelationTerm {
    pub k: usize,
    pub exponent: Exponent,
}

impl RelationTerm {
    pub fn new(k: usize, exponent: &[i64]) -> Self {
        RelationTerm {
            k,
            exponent: Exponent::from_slice(exponent),
        }
    }
}

/// A non-trivial relation `u_1 + ... + u_I = n` with `n >= I >= 2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnitRelation {
    n: u64,
    terms: Vec<RelationTerm>,
    r_max: u64,
}

impl UnitRelation {
    pub fn new(n: u64, terms: Vec<RelationTerm>) -> Result<Self, EngineError> {
        let count = terms.len() as u64;
        if count < 2 {
            return Err(EngineError::InvalidRelation(
                "need at least two terms".into(),
            ));
        }
        if n < count {
            return Err(EngineError::InvalidRelation(format!(
                "right-hand side {n} is smaller than the term count {count}"
            )));
        }
        let dim = terms[0].exponent.len();
        if terms.iter().any(|t| t.exponent.len() != dim) {
            return Err(EngineError::InvalidRelation(
                "terms have exponents of different lengths".into(),
            ));
        }
        if terms
            .iter()
            .all(|t| t.k == 0 && t.exponent.iter().all(|&e| e == 0))
        {
            return Err(EngineError::InvalidRelation(
                "trivial relation 1 + ... + 1".into(),
            ));
        }
        let r_max = terms
            .iter()
            .flat_map(|t| t.exponent.iter())
            .map(|e| e.unsigned_abs())
            .max()
            .unwrap_or(0);
        Ok(UnitRelation { n, terms, r_max })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// `I`
    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> &[RelationTerm] {
        &self.terms
    }

    /// Largest absolute exponent entry over all terms.
    pub fn r_max(&self) -> u64 {
        self.r_max
    }

    pub fn check_basis(&self, basis: &UnitGroupBasis) -> Result<(), EngineError> {
        for t in &self.terms {
            if t.k >= basis.torsion_order() || t.exponent.len() != basis.rank() {
                return Err(EngineError::DimensionMismatch(
                    "relation does not fit the basis".into(),
                ));
            }
        }
        Ok(())
    }

    /// Exact check `sum zeta^k_i eps^r_i = n` in the instantiation's ring.
    pub fn holds<E: Evaluator>(&self, ev: &E) -> bool {
        let mut acc = ev.zero();
        for t in &self.terms {
            acc = ev.add(&acc, &ev.unit(t.k, &t.exponent));
        }
        acc == ev.integer(self.n)
    }
}

/// Exact arithmetic of an instantiation, used to evaluate representations.
pub trait Evaluator {
    type Value: Clone + PartialEq + fmt::Debug;

    fn zero(&self) -> Self::Value;
    fn integer(&self, n: u64) -> Self::Value;
    /// `zeta^k * eps^x`
    fn unit(&self, k: usize, exponent: &[i64]) -> Self::Value;
    /// `eta_l`
    fn generator(&self, l: usize) -> Self::Value;
    fn add(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;
    fn mul(&self, a: &Self::Value, b: &Self::Value) -> Self::Value;

    fn scale(&self, a: &Self::Value, c: u64) -> Self::Value {
        self.mul(a, &self.integer(c))
    }
}

/// Sum of all coefficients.
pub fn total_weight(rep: &Representation) -> u64 {
    rep.coeffs.values().sum()
}

/// `sum a * zeta^k * eta_l * eps^x`, exactly.
pub fn evaluate<E: Evaluator>(rep: &Representation, ev: &E) -> E::Value {
    let mut acc = ev.zero();
    for (idx, &c) in &rep.coeffs {
        let unit = ev.unit(idx.k, &idx.exponent);
        let term = ev.mul(&unit, &ev.generator(idx.generator));
        acc = ev.add(&acc, &ev.scale(&term, c));
    }
    acc
}

fn shifted(idx: &TermIndex, t: &RelationTerm, k_order: usize) -> TermIndex {
    let mut exponent = idx.exponent.clone();
    for (e, r) in exponent.iter_mut().zip(&t.exponent) {
        *e += r;
    }
    TermIndex {
        k: (idx.k + t.k) % k_order,
        generator: idx.generator,
        exponent,
    }
}

fn apply_step(
    rep: &mut Representation,
    rel: &UnitRelation,
    target: &TermIndex,
) -> Result<(), EngineError> {
    let found = rep.coefficient(target);
    if found < rel.n {
        return Err(EngineError::TargetTooSmall {
            found,
            needed: rel.n,
        });
    }
    if found == rel.n {
        rep.coeffs.remove(target);
    } else {
        rep.coeffs.insert(target.clone(), found - rel.n);
    }
    let k_order = rep.basis.torsion_order();
    for t in &rel.terms {
        rep.bump(shifted(target, t, k_order), 1)?;
    }
    Ok(())
}

/// One replacement step at `target`: its coefficient drops by `n` and each
/// relation term adds 1 at the correspondingly shifted index.
pub fn replacement_step(
    rep: &Representation,
    rel: &UnitRelation,
    target: &TermIndex,
) -> Result<Representation, EngineError> {
    rel.check_basis(&rep.basis)?;
    rep.check_index(target)?;
    let mut out = rep.clone();
    apply_step(&mut out, rel, target)?;
    Ok(out)
}

/// Certified bounds on a real quantity; `lower == upper` when exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantityEnclosure {
    pub lower: BigRational,
    pub upper: BigRational,
}

impl QuantityEnclosure {
    pub fn exact(x: BigRational) -> Self {
        QuantityEnclosure {
            lower: x.clone(),
            upper: x,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }

    pub fn width(&self) -> BigRational {
        &self.upper - &self.lower
    }

    pub fn strictly_below(&self, other: &QuantityEnclosure) -> bool {
        self.upper < other.lower
    }

    pub fn is_positive(&self) -> bool {
        self.lower.is_positive()
    }

    pub fn contains(&self, x: &BigRational) -> bool {
        &self.lower <= x && x <= &self.upper
    }
}

impl From<&Interval> for QuantityEnclosure {
    fn from(iv: &Interval) -> Self {
        QuantityEnclosure {
            lower: iv.lower(),
            upper: iv.upper(),
        }
    }
}

#[derive(Clone, Debug)]
enum Weight {
    Exact(BigRational),
    Approx(Interval),
}

/// Evaluates the monotone quantity `sum a * |eps^x|^2` with a cache of the
/// squared magnitudes `|eps^x|^2`, at one fixed precision.
pub struct QuantityMeter {
    basis: Arc<UnitGroupBasis>,
    precision: u32,
    exact_sq: Option<Vec<BigRational>>,
    approx_sq: Vec<Interval>,
    cache: HashMap<Exponent, Weight>,
}

impl QuantityMeter {
    pub fn new(basis: Arc<UnitGroupBasis>, precision: u32) -> Self {
        let m = basis.rank();
        let exact_sq: Option<Vec<BigRational>> = (0..m)
            .map(|i| basis.exact_magnitude(i).map(|x| &x * &x))
            .collect();
        let work = precision + 32;
        let approx_sq = if exact_sq.is_some() {
            Vec::new()
        } else {
            (0..m)
                .map(|i| {
                    let e = basis.magnitude(i, work);
                    e.mul(&e, work)
                })
                .collect()
        };
        QuantityMeter {
            basis,
            precision,
            exact_sq,
            approx_sq,
            cache: HashMap::new(),
        }
    }

    pub fn precision(&self) -> u32 {
        self.precision
    }

    fn work(&self) -> u32 {
        self.precision + 32
    }

    fn weight(&mut self, x: &Exponent) -> &Weight {
        if !self.cache.contains_key(x) {
            let w = self.compute_weight(x);
            self.cache.insert(x.clone(), w);
        }
        &self.cache[x]
    }

    fn compute_weight(&self, x: &Exponent) -> Weight {
        match &self.exact_sq {
            Some(sq) => {
                let mut acc = BigRational::one();
                for (s, &e) in sq.iter().zip(x.iter()) {
                    if e != 0 {
                        acc *= pow_rational(s, e);
                    }
                }
                Weight::Exact(acc)
            }
            None => {
                let work = self.work();
                let mut acc = Interval::one();
                for (s, &e) in self.approx_sq.iter().zip(x.iter()) {
                    if e != 0 {
                        let p = s.powi(e, work).expect("unit magnitudes are nonzero");
                        acc = acc.mul(&p, work);
                    }
                }
                Weight::Approx(acc)
            }
        }
    }

    /// Enclosure of `|eps^x|^2`.
    pub fn squared_magnitude(&mut self, x: &[i64]) -> QuantityEnclosure {
        match self.weight(&Exponent::from_slice(x)) {
            Weight::Exact(v) => QuantityEnclosure::exact(v.clone()),
            Weight::Approx(iv) => QuantityEnclosure::from(iv),
        }
    }

    fn signed_sum<'a, I>(&mut self, terms: I) -> QuantityEnclosure
    where
        I: IntoIterator<Item = (&'a Exponent, u64, bool)>,
    {
        let work = self.work();
        let mut exact = BigRational::zero();
        let mut approx = Interval::zero();
        for (x, c, negate) in terms {
            match self.weight(x) {
                Weight::Exact(v) => {
                    let t = v * BigInt::from(c);
                    if negate {
                        exact -= t;
                    } else {
                        exact += t;
                    }
                }
                Weight::Approx(iv) => {
                    let scaled;
                    let t = if c == 1 {
                        iv
                    } else {
                        scaled = iv.scale(c, work);
                        &scaled
                    };
                    approx = if negate {
                        approx.sub(t, work)
                    } else {
                        approx.add(t, work)
                    };
                }
            }
        }
        if self.exact_sq.is_some() {
            QuantityEnclosure::exact(exact)
        } else {
            QuantityEnclosure::from(&approx)
        }
    }

    /// The monotone quantity of `rep`.
    pub fn quantity(&mut self, rep: &Representation) -> QuantityEnclosure {
        let terms: Vec<(Exponent, u64)> = rep
            .coeffs
            .iter()
            .map(|(i, &c)| (i.exponent.clone(), c))
            .collect();
        self.signed_sum(terms.iter().map(|(x, c)| (x, *c, false)))
    }

    /// Change of the quantity caused by one replacement step at `target`:
    /// `sum_i |eps^(x + r_i)|^2 - n |eps^x|^2`.
    pub fn step_gain(&mut self, rel: &UnitRelation, target: &TermIndex) -> QuantityEnclosure {
        let mut xs: Vec<(Exponent, u64, bool)> = rel
            .terms
            .iter()
            .map(|t| {
                let mut y = target.exponent.clone();
                for (e, r) in y.iter_mut().zip(&t.exponent) {
                    *e += r;
                }
                (y, 1, false)
            })
            .collect();
        xs.push((target.exponent.clone(), rel.n, true));
        self.signed_sum(xs.iter().map(|(x, c, neg)| (x, *c, *neg)))
    }

    pub fn basis(&self) -> &Arc<UnitGroupBasis> {
        &self.basis
    }
}

/// `sum a * (|eps_1|^x_1 ... |eps_M|^x_M)^2`, exact when the unit
/// magnitudes are rational and otherwise enclosed to about `precision_bits`.
pub fn monotone_quantity(rep: &Representation, precision_bits: u32) -> QuantityEnclosure {
    QuantityMeter::new(rep.basis.clone(), precision_bits).quantity(rep)
}

/// Splits `rep` into the part with `x_coord <= cut` and the rest.
///
/// Requires an empty band `(cut, cut + gap_width]` in that coordinate.
pub fn split_at_gap(
    rep: &Representation,
    coord: usize,
    cut: i64,
    gap_width: u64,
) -> Result<(Representation, Representation), EngineError> {
    if coord >= rep.basis.rank() {
        return Err(EngineError::DimensionMismatch(format!(
            "coordinate {coord}"
        )));
    }
    let top = cut.saturating_add(gap_width as i64);
    if rep
        .coeffs
        .keys()
        .any(|i| i.exponent[coord] > cut && i.exponent[coord] <= top)
    {
        return Err(EngineError::NotAGap {
            coord,
            cut,
            width: gap_width,
        });
    }
    let (low, high): (BTreeMap<_, _>, BTreeMap<_, _>) = rep
        .coeffs
        .iter()
        .map(|(i, &c)| (i.clone(), c))
        .partition(|(i, _)| i.exponent[coord] <= cut);
    if low.is_empty() || high.is_empty() {
        return Err(EngineError::EmptySide);
    }
    Ok((
        Representation {
            basis: rep.basis.clone(),
            coeffs: low,
        },
        Representation {
            basis: rep.basis.clone(),
            coeffs: high,
        },
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Merged {
    pub representation: Representation,
    /// Some index carried a coefficient in both inputs.
    pub overlapped: bool,
}

/// Coefficientwise sum.
pub fn merge(a: &Representation, b: &Representation) -> Result<Merged, EngineError> {
    if a.basis != b.basis {
        return Err(EngineError::BasisMismatch);
    }
    let mut out = a.clone();
    let mut overlapped = false;
    for (idx, &c) in &b.coeffs {
        overlapped |= a.coeffs.contains_key(idx);
        out.bump(idx.clone(), c)?;
    }
    Ok(Merged {
        representation: out,
        overlapped,
    })
}

/// First coordinate and cut value at which consecutive support values are
/// more than `threshold` apart.
pub fn find_gap(rep: &Representation, threshold: u64) -> Option<(usize, i64)> {
    for m in 0..rep.basis.rank() {
        let values: BTreeSet<i64> = rep.coeffs.keys().map(|i| i.exponent[m]).collect();
        let mut it = values.iter();
        let mut prev = *it.next()?;
        for &v in it {
            if (v - prev) as u64 > threshold {
                return Some((m, prev));
            }
            prev = v;
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReductionPolicy {
    /// Hard cap on replacement steps per [`reduce`] call.
    pub max_steps: u64,
    /// Gaps wider than `gap_factor * r_max * w` are split.
    pub gap_factor: u64,
    /// Minimum number of steps between support gap scans.
    pub gap_check_interval: u64,
}

impl Default for ReductionPolicy {
    fn default() -> Self {
        ReductionPolicy {
            max_steps: 1_000_000,
            gap_factor: 4,
            gap_check_interval: 64,
        }
    }
}

impl ReductionPolicy {
    pub fn gap_threshold(&self, r_max: u64, weight: u64) -> u64 {
        self.gap_factor.saturating_mul(r_max).saturating_mul(weight)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reduction {
    pub representation: Representation,
    /// Replacement steps applied, across all split parts.
    pub steps: u64,
    /// Number of gap splits performed.
    pub splits: u64,
}

/// Called before every replacement step with the representation the step
/// is applied to (a split part while reducing across a gap).
pub trait StepObserver {
    fn before_step(&mut self, rep: &Representation, target: &TermIndex);
}

impl<F: FnMut(&Representation, &TermIndex)> StepObserver for F {
    fn before_step(&mut self, rep: &Representation, target: &TermIndex) {
        self(rep, target)
    }
}

struct NoObserver;

impl StepObserver for NoObserver {
    fn before_step(&mut self, _: &Representation, _: &TermIndex) {}
}

/// Rewrites `rep` until every coefficient is at most `n - 1`.
///
/// Targets are taken in lexicographic `(k, l, x)` order. Opposite-sign mass
/// is cancelled before reducing and after every merge. No partial result is
/// returned when the step cap is hit.
pub fn reduce(
    rep: &Representation,
    rel: &UnitRelation,
    policy: &ReductionPolicy,
) -> Result<Reduction, EngineError> {
    reduce_observed(rep, rel, policy, &mut NoObserver)
}

pub fn reduce_observed<O: StepObserver>(
    rep: &Representation,
    rel: &UnitRelation,
    policy: &ReductionPolicy,
    observer: &mut O,
) -> Result<Reduction, EngineError> {
    rel.check_basis(&rep.basis)?;
    let mut reducer = Reducer {
        rel,
        policy,
        steps: 0,
        splits: 0,
        observer,
    };
    let representation = reducer.run(rep.normalized())?.normalized();
    Ok(Reduction {
        representation,
        steps: reducer.steps,
        splits: reducer.splits,
    })
}

struct Reducer<'a, O> {
    rel: &'a UnitRelation,
    policy: &'a ReductionPolicy,
    steps: u64,
    splits: u64,
    observer: &'a mut O,
}

impl<O: StepObserver> Reducer<'_, O> {
    fn hot_set(&self, rep: &Representation) -> BTreeSet<TermIndex> {
        rep.coeffs
            .iter()
            .filter(|(_, &c)| c >= self.rel.n)
            .map(|(i, _)| i.clone())
            .collect()
    }

    fn run(&mut self, mut rep: Representation) -> Result<Representation, EngineError> {
        let n = self.rel.n;
        let k_order = rep.basis.torsion_order();
        let mut hot = self.hot_set(&rep);
        let mut since_scan = u64::MAX;
        loop {
            if hot.is_empty() {
                return Ok(rep);
            }
            let interval = self.policy.gap_check_interval.max(rep.len() as u64);
            if since_scan >= interval {
                since_scan = 0;
                let threshold = self
                    .policy
                    .gap_threshold(self.rel.r_max, total_weight(&rep));
                if let Some((coord, cut)) = find_gap(&rep, threshold) {
                    let (low, high) = split_at_gap(&rep, coord, cut, threshold)?;
                    self.splits += 1;
                    let low = self.run(low)?;
                    let high = self.run(high)?;
                    rep = merge(&low, &high)?.representation.normalized();
                    hot = self.hot_set(&rep);
                    continue;
                }
            }
            let target = hot.pop_first().expect("hot set is nonempty");
            if self.steps >= self.policy.max_steps {
                return Err(EngineError::IterationCapExceeded {
                    cap: self.policy.max_steps,
                });
            }
            self.observer.before_step(&rep, &target);
            apply_step(&mut rep, self.rel, &target)?;
            self.steps += 1;
            since_scan = since_scan.saturating_add(1);
            if rep.coefficient(&target) >= n {
                hot.insert(target.clone());
            }
            for t in &self.rel.terms {
                let idx = shifted(&target, t, k_order);
                if rep.coefficient(&idx) >= n {
                    hot.insert(idx);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundParams {
    /// `M`
    pub rank: u32,
    /// `K`
    pub torsion_order: u32,
    /// `L`
    pub generators: u32,
    pub r: u64,
    /// Total weight `w`.
    pub weight: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoundValues {
    pub f: BigUint,
    pub t: BigUint,
}

/// The bounds `f(w)` and `T(w)` of the reduction argument:
/// `f(1) = 0`, `T(w) = (w + 2(w-1) f(w-1))^(M w) K^w L^w` and
/// `f(w) = T(w) r + f(w-1)`. The numbers grow doubly exponentially; `w` past
/// 4 or 5 is impractical.
pub fn bounds_f_t(params: &BoundParams) -> Result<BoundValues, EngineError> {
    if params.rank == 0 || params.torsion_order == 0 || params.generators == 0 || params.weight == 0
    {
        return Err(EngineError::InvalidBasis(
            "M, K, L and w must be positive".into(),
        ));
    }
    Ok(bounds_table(params).pop().expect("w >= 1"))
}

/// `(f(w), T(w))` for `w = 1..=params.weight`.
pub fn bounds_table(params: &BoundParams) -> Vec<BoundValues> {
    let k = BigUint::from(params.torsion_order);
    let l = BigUint::from(params.generators);
    let r = BigUint::from(params.r);
    let mut out: Vec<BoundValues> = Vec::with_capacity(params.weight as usize);
    for w in 1..=params.weight {
        let kl = num_traits::pow(&k * &l, w as usize);
        let values = match out.last() {
            None => BoundValues {
                f: BigUint::zero(),
                t: kl,
            },
            Some(prev) => {
                let base = BigUint::from(w) + BigUint::from(2 * (w - 1)) * &prev.f;
                let t = num_traits::pow(base, (params.rank * w) as usize) * kl;
                let f = &t * &r + &prev.f;
                BoundValues { f, t }
            }
        };
        out.push(values);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(Vec<i64>);

    impl UnitMagnitudes for Fixed {
        fn exact(&self, m: usize) -> Option<BigRational> {
            Some(BigRational::from_integer(BigInt::from(self.0[m])))
        }
        fn enclosure(&self, m: usize, _: u32) -> Interval {
            Interval::from_integer(BigInt::from(self.0[m]))
        }
    }

    fn basis(units: &[i64]) -> Arc<UnitGroupBasis> {
        Arc::new(
            UnitGroupBasis::new(
                Torsion::MinusOne,
                vec!["1".into()],
                units.iter().map(|u| u.to_string()).collect(),
                Arc::new(Fixed(units.to_vec())),
            )
            .unwrap(),
        )
    }

    fn idx(k: usize, x: &[i64]) -> TermIndex {
        TermIndex::new(k, 0, x)
    }

    fn rep(b: &Arc<UnitGroupBasis>, terms: &[(usize, &[i64], u64)]) -> Representation {
        Representation::from_terms(b.clone(), terms.iter().map(|&(k, x, c)| (idx(k, x), c)))
            .unwrap()
    }

    fn five_23() -> (Arc<UnitGroupBasis>, UnitRelation) {
        let b = basis(&[5, 23]);
        let rel = UnitRelation::new(
            2,
            vec![RelationTerm::new(0, &[2, 0]), RelationTerm::new(1, &[0, 1])],
        )
        .unwrap();
        (b, rel)
    }

    #[test]
    fn weights() {
        let (b, _) = five_23();
        assert_eq!(total_weight(&Representation::empty(b.clone())), 0);
        assert_eq!(total_weight(&rep(&b, &[(0, &[0, 0], 2)])), 2);
        assert_eq!(
            total_weight(&rep(&b, &[(0, &[0, 0], 2), (1, &[1, 0], 1)])),
            3
        );
    }

    #[test]
    fn step_on_two() {
        let (b, rel) = five_23();
        let out = replacement_step(&rep(&b, &[(0, &[0, 0], 2)]), &rel, &idx(0, &[0, 0])).unwrap();
        assert_eq!(out, rep(&b, &[(0, &[2, 0], 1), (1, &[0, 1], 1)]));
        let out = replacement_step(&rep(&b, &[(0, &[0, 0], 3)]), &rel, &idx(0, &[0, 0])).unwrap();
        assert_eq!(
            out,
            rep(&b, &[(0, &[0, 0], 1), (0, &[2, 0], 1), (1, &[0, 1], 1)])
        );
        assert_eq!(total_weight(&out), 3);
    }

    #[test]
    fn step_needs_enough_mass() {
        let (b, rel) = five_23();
        let err = replacement_step(&rep(&b, &[(0, &[0, 0], 1)]), &rel, &idx(0, &[0, 0]));
        assert_eq!(
            err,
            Err(EngineError::TargetTooSmall {
                found: 1,
                needed: 2
            })
        );
    }

    #[test]
    fn relation_validation() {
        assert!(UnitRelation::new(2, vec![RelationTerm::new(0, &[0, 0])]).is_err());
        assert!(UnitRelation::new(
            2,
            vec![RelationTerm::new(0, &[0, 0]), RelationTerm::new(0, &[0, 0])]
        )
        .is_err());
        assert!(UnitRelation::new(
            1,
            vec![RelationTerm::new(0, &[1, 0]), RelationTerm::new(1, &[0, 0])]
        )
        .is_err());
        let rel = UnitRelation::new(
            3,
            vec![
                RelationTerm::new(0, &[1, 2]),
                RelationTerm::new(0, &[-2, -1]),
                RelationTerm::new(0, &[1, -1]),
            ],
        )
        .unwrap();
        assert_eq!(rel.r_max(), 2);
    }

    #[test]
    fn quantity_exact_in_rational_case() {
        let (b, _) = five_23();
        let two = BigRational::from_integer(BigInt::from(2));
        assert_eq!(
            monotone_quantity(&rep(&b, &[(0, &[0, 0], 2)]), 64),
            QuantityEnclosure::exact(two)
        );
        let q = monotone_quantity(&rep(&b, &[(0, &[2, 0], 1), (1, &[0, 1], 1)]), 64);
        assert_eq!(
            q,
            QuantityEnclosure::exact(BigRational::from_integer(BigInt::from(1154)))
        );
    }

    #[test]
    fn reduce_small_cases() {
        let (b, rel) = five_23();
        let policy = ReductionPolicy::default();
        let r = reduce(&rep(&b, &[(0, &[0, 0], 2)]), &rel, &policy).unwrap();
        assert_eq!(
            r.representation,
            rep(&b, &[(0, &[2, 0], 1), (1, &[0, 1], 1)])
        );
        assert_eq!(r.steps, 1);

        let one = rep(&b, &[(0, &[0, 0], 1)]);
        let r = reduce(&one, &rel, &policy).unwrap();
        assert_eq!(r.representation, one);
        assert_eq!(r.steps, 0);

        // hand trace with lexicographic targets
        let r = reduce(&rep(&b, &[(0, &[0, 0], 4)]), &rel, &policy).unwrap();
        assert_eq!(r.steps, 5);
        assert_eq!(
            r.representation,
            rep(
                &b,
                &[
                    (0, &[4, 0], 1),
                    (1, &[4, 1], 1),
                    (0, &[2, 2], 1),
                    (0, &[0, 2], 1)
                ]
            )
        );
    }

    #[test]
    fn reduce_hits_cap() {
        let (b, rel) = five_23();
        let policy = ReductionPolicy {
            max_steps: 3,
            ..Default::default()
        };
        let err = reduce(&rep(&b, &[(0, &[0, 0], 40)]), &rel, &policy).unwrap_err();
        assert_eq!(err, EngineError::IterationCapExceeded { cap: 3 });
    }

    #[test]
    fn reduce_splits_wide_gaps() {
        let (b, rel) = five_23();
        let start = rep(&b, &[(0, &[0, 0], 3), (0, &[500, 0], 3)]);
        let r = reduce(&start, &rel, &ReductionPolicy::default()).unwrap();
        assert!(r.splits >= 1);
        assert!(r.representation.max_coefficient() <= 1);
        assert_eq!(r.steps, 2);
    }

    #[test]
    fn normalization_cancels_layers() {
        let (b, _) = five_23();
        let r = rep(&b, &[(0, &[1, 0], 3), (1, &[1, 0], 1), (1, &[0, 0], 2)]).normalized();
        assert_eq!(r, rep(&b, &[(0, &[1, 0], 2), (1, &[0, 0], 2)]));
    }

    #[test]
    fn split_and_merge() {
        let (b, _) = five_23();
        let r = rep(&b, &[(0, &[0, 0], 1), (1, &[100, 3], 2)]);
        let (lo, hi) = split_at_gap(&r, 0, 0, 50).unwrap();
        assert_eq!(lo, rep(&b, &[(0, &[0, 0], 1)]));
        assert_eq!(hi, rep(&b, &[(1, &[100, 3], 2)]));
        let m = merge(&lo, &hi).unwrap();
        assert_eq!(m.representation, r);
        assert!(!m.overlapped);

        assert_eq!(
            split_at_gap(&rep(&b, &[(0, &[0, 0], 1)]), 0, 0, 10),
            Err(EngineError::EmptySide)
        );
        assert!(matches!(
            split_at_gap(&r, 0, 0, 100),
            Err(EngineError::NotAGap { .. })
        ));

        let one = rep(&b, &[(0, &[0, 0], 1)]);
        let twice = merge(&one, &one).unwrap();
        assert_eq!(twice.representation, rep(&b, &[(0, &[0, 0], 2)]));
        assert!(twice.overlapped);
        assert_eq!(
            merge(&one, &Representation::empty(b.clone()))
                .unwrap()
                .representation,
            one
        );
        let other = Representation::empty(basis(&[5, 7]));
        assert_eq!(merge(&one, &other), Err(EngineError::BasisMismatch));
    }

    #[test]
    fn bound_recurrences() {
        let p = BoundParams {
            rank: 2,
            torsion_order: 2,
            generators: 1,
            r: 2,
            weight: 1,
        };
        let v = bounds_f_t(&p).unwrap();
        assert_eq!(v.f, BigUint::zero());
        assert_eq!(v.t, BigUint::from(2u32));
        let v = bounds_f_t(&BoundParams { weight: 2, ..p }).unwrap();
        assert_eq!(v.t, BigUint::from(64u32));
        assert_eq!(v.f, BigUint::from(128u32));
        let v = bounds_f_t(&BoundParams { weight: 3, ..p }).unwrap();
        assert_eq!(v.t, "149256537066125000".parse::<BigUint>().unwrap());
        assert_eq!(v.f, "298513074132250128".parse::<BigUint>().unwrap());
    }

    #[test]
    fn independence() {
        assert!(basis(&[5, 23]).check_independence(6, 256).is_ok());
        assert_eq!(
            basis(&[4, 2]).check_independence(3, 256),
            Err(EngineError::DependentUnits(vec![1, -2]))
        );
    }

    #[test]
    fn bbox_tracks_support() {
        let (b, _) = five_23();
        assert_eq!(Representation::empty(b.clone()).bbox(), None);
        let r = rep(&b, &[(0, &[3, -1], 1), (1, &[-2, 4], 1)]);
        assert_eq!(
            r.bbox(),
            Some(BoundingBox {
                lower: Exponent::from_slice(&[-2, -1]),
                upper: Exponent::from_slice(&[3, 4]),
            })
        );
    }
}
