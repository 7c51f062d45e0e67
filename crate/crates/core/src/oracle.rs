//! Exhaustive ground truth at desk scale: minimal-weight signed double-base
//! expansions inside an exponent box, and bulk verification sweeps.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive};
use thiserror::Error;

use crate::double_base::{
    evaluate_expansion, expand_with, weight, BasePair, Digit, DoubleBaseError, Expansion,
    ExpansionKind, SeedMethod,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("search space of about {estimate} candidates exceeds the budget of {budget}")]
    BudgetExceeded { estimate: u128, budget: u128 },
    #[error("exponent box too large: {0}")]
    BoxTooLarge(String),
}

/// A minimal expansion within the searched box.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightWitness {
    pub weight: usize,
    pub expansion: Expansion,
}

/// Exponents `0..=i_max` for `p` and `0..=j_max` for `q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExponentBox {
    pub i_max: u32,
    pub j_max: u32,
}

fn ceil_log(v: &BigInt, b: &BigInt) -> u32 {
    let mut e = 0;
    let mut acc = BigInt::one();
    while acc < *v {
        acc *= b;
        e += 1;
    }
    e
}

impl ExponentBox {
    /// `(ceil(log_p |v|) + 2, ceil(log_q |v|) + 2)`.
    pub fn default_for(v: &BigInt, base: &BasePair) -> Self {
        let m = v.abs();
        ExponentBox {
            i_max: ceil_log(&m, base.p()) + 2,
            j_max: ceil_log(&m, base.q()) + 2,
        }
    }

    /// Smallest box containing both `self` and the exponents of `e`.
    pub fn covering(self, e: &Expansion) -> Self {
        e.terms().iter().fold(self, |b, t| ExponentBox {
            i_max: b.i_max.max(t.i.max(0) as u32),
            j_max: b.j_max.max(t.j.max(0) as u32),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleOptions {
    pub max_weight: usize,
    /// Upper bound on enumerated candidates per search.
    pub budget: u128,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            max_weight: 6,
            budget: 200_000_000,
        }
    }
}

struct Atom {
    value: i128,
    i: i64,
    j: i64,
}

fn atoms(base: &BasePair, bx: ExponentBox) -> Result<Vec<Atom>, OracleError> {
    let count = (bx.i_max as usize + 1) * (bx.j_max as usize + 1);
    if count > 128 {
        return Err(OracleError::BoxTooLarge(format!(
            "{count} exponent pairs (max 128)"
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut pi = BigInt::one();
    for i in 0..=bx.i_max {
        let mut pq = pi.clone();
        for j in 0..=bx.j_max {
            let value = pq
                .to_i128()
                .filter(|x| x.unsigned_abs() < 1u128 << 100)
                .ok_or_else(|| OracleError::BoxTooLarge(format!("p^{i} q^{j} overflows")))?;
            out.push(Atom {
                value,
                i: i as i64,
                j: j as i64,
            });
            pq *= base.q();
        }
        pi *= base.p();
    }
    // descending by value keeps the suffix bound tight
    out.sort_by_key(|a| std::cmp::Reverse(a.value));
    Ok(out)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, t| acc.saturating_mul(n - t) / (t + 1))
}

/// Signed `t`-subsets: `C(n, t) * 2^t`.
fn level_size(n: usize, t: usize) -> u128 {
    binomial(n as u128, t as u128).saturating_mul(1u128 << t.min(100))
}

fn level_cost(n: usize, t: usize) -> u128 {
    if t <= 4 {
        level_size(n, t)
    } else {
        let t1 = t / 2;
        level_size(n, t1).saturating_add(level_size(n, t - t1))
    }
}

/// Signed choice of atoms as `(atom index, sign)`.
type Pick = Vec<(usize, i8)>;

/// Depth-first search for `t` distinct atoms with signs summing to `target`.
fn dfs(
    atoms: &[Atom],
    suffix: &[i128],
    target: i128,
    t: usize,
    start: usize,
    acc: &mut Pick,
) -> bool {
    if t == 0 {
        return target == 0;
    }
    for idx in start..atoms.len() {
        if atoms.len() - idx < t {
            break;
        }
        // the t largest remaining atoms bound what is still reachable
        let reach = suffix[idx] - suffix[idx + t];
        if target.abs() > reach {
            break;
        }
        for s in [1i8, -1] {
            acc.push((idx, s));
            if dfs(
                atoms,
                suffix,
                target - s as i128 * atoms[idx].value,
                t - 1,
                idx + 1,
                acc,
            ) {
                return true;
            }
            acc.pop();
        }
    }
    false
}

fn each_subset(atoms: &[Atom], t: usize, f: &mut dyn FnMut(i128, u128, &Pick) -> bool) -> bool {
    fn rec(
        atoms: &[Atom],
        t: usize,
        start: usize,
        sum: i128,
        mask: u128,
        acc: &mut Pick,
        f: &mut dyn FnMut(i128, u128, &Pick) -> bool,
    ) -> bool {
        if t == 0 {
            return f(sum, mask, acc);
        }
        for idx in start..atoms.len() {
            if atoms.len() - idx < t {
                break;
            }
            for s in [1i8, -1] {
                acc.push((idx, s));
                let stop = rec(
                    atoms,
                    t - 1,
                    idx + 1,
                    sum + s as i128 * atoms[idx].value,
                    mask | 1u128 << idx,
                    acc,
                    f,
                );
                acc.pop();
                if stop {
                    return true;
                }
            }
        }
        false
    }
    rec(atoms, t, 0, 0, 0, &mut Vec::new(), f)
}

/// Meet in the middle: halves of sizes `t/2` and `t - t/2` with disjoint atoms.
fn meet_in_middle(atoms: &[Atom], target: i128, t: usize) -> Option<Pick> {
    let t1 = t / 2;
    let mut table: HashMap<i128, Vec<(u128, Pick)>> = HashMap::new();
    each_subset(atoms, t1, &mut |sum, mask, pick| {
        table.entry(sum).or_default().push((mask, pick.clone()));
        false
    });
    let mut found = None;
    each_subset(atoms, t - t1, &mut |sum, mask, pick| {
        if let Some(cands) = table.get(&(target - sum)) {
            if let Some((_, first)) = cands.iter().find(|(m, _)| m & mask == 0) {
                let mut all = first.clone();
                all.extend_from_slice(pick);
                found = Some(all);
                return true;
            }
        }
        false
    });
    found
}

/// Smallest-weight expansion of `v` using exponents inside `bx`, by iterative
/// deepening over the weight. `Ok(None)` when nothing of weight at most
/// `max_weight` exists in the box. The budget bounds the candidates
/// enumerated over all levels reached.
pub fn min_weight_bruteforce(
    v: &BigInt,
    base: &BasePair,
    bx: ExponentBox,
    options: &OracleOptions,
) -> Result<Option<WeightWitness>, OracleError> {
    let atoms = atoms(base, bx)?;
    let Some(target) = v.to_i128().filter(|x| x.unsigned_abs() < 1u128 << 100) else {
        return Ok(None);
    };
    let mut suffix = vec![0i128; atoms.len() + 1];
    for idx in (0..atoms.len()).rev() {
        suffix[idx] = suffix[idx + 1] + atoms[idx].value;
    }
    let mut spent = 0u128;
    for t in 0..=options.max_weight.min(atoms.len()) {
        spent = spent.saturating_add(level_cost(atoms.len(), t));
        if spent > options.budget {
            return Err(OracleError::BudgetExceeded {
                estimate: spent,
                budget: options.budget,
            });
        }
        let pick = if t <= 4 {
            let mut acc = Vec::new();
            dfs(&atoms, &suffix, target, t, 0, &mut acc).then_some(acc)
        } else {
            meet_in_middle(&atoms, target, t)
        };
        if let Some(pick) = pick {
            let digits = pick
                .into_iter()
                .map(|(idx, d)| Digit {
                    d,
                    i: atoms[idx].i,
                    j: atoms[idx].j,
                })
                .collect();
            let expansion = Expansion::new(ExpansionKind::Signed, base.clone(), digits)
                .expect("oracle picks distinct atoms");
            return Ok(Some(WeightWitness {
                weight: t,
                expansion,
            }));
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepRow {
    pub v: BigInt,
    pub status: &'static str,
    pub weight_algo: usize,
    pub weight_oracle: Option<usize>,
    pub steps: u64,
    pub w_init: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SweepReport {
    pub checked: usize,
    pub passed: usize,
    pub max_steps: u64,
    pub max_weight: usize,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SweepError {
    #[error("v = {v}: {source}")]
    Expansion {
        v: BigInt,
        #[source]
        source: DoubleBaseError,
    },
    #[error("v = {v}: {reason}")]
    Violation { v: BigInt, reason: String },
    #[error("v = {v}: {source}")]
    Oracle {
        v: BigInt,
        #[source]
        source: OracleError,
    },
}

/// Expands every `v` in `lo..=hi` and checks the exact round trip and the
/// step bound `(w^2 - w) / 2`. With `oracle` set, also runs the brute-force
/// search in a box covering the expansion, up to the expansion's weight
/// (`max_weight` of the options is ignored), and checks its witness.
pub fn sweep_verify(
    lo: &BigInt,
    hi: &BigInt,
    base: &BasePair,
    search_bound: u32,
    oracle: Option<&OracleOptions>,
) -> Result<SweepReport, SweepError> {
    let mut report = SweepReport::default();
    let mut v = lo.clone();
    while v <= *hi {
        let out = expand_with(&v, base, search_bound, SeedMethod::PAdic).map_err(|source| {
            SweepError::Expansion {
                v: v.clone(),
                source,
            }
        })?;
        let fail = |reason: String| SweepError::Violation {
            v: v.clone(),
            reason,
        };
        if evaluate_expansion(&out.expansion) != BigRational::from_integer(v.clone()) {
            return Err(fail("expansion does not evaluate to v".into()));
        }
        let bound = (out.w_init * out.w_init).saturating_sub(out.w_init) / 2;
        if out.relation.is_some() && out.steps > bound {
            return Err(fail(format!(
                "{} steps exceed the bound {bound}",
                out.steps
            )));
        }
        let weight_algo = weight(&out.expansion);
        let weight_oracle = match oracle {
            None => None,
            Some(opts) => {
                let bx = ExponentBox::default_for(&v, base).covering(&out.expansion);
                let opts = OracleOptions {
                    max_weight: weight_algo,
                    ..*opts
                };
                let found = min_weight_bruteforce(&v, base, bx, &opts).map_err(|source| {
                    SweepError::Oracle {
                        v: v.clone(),
                        source,
                    }
                })?;
                if let Some(w) = &found {
                    if evaluate_expansion(&w.expansion) != BigRational::from_integer(v.clone()) {
                        return Err(fail("oracle witness does not evaluate to v".into()));
                    }
                }
                found.map(|w| w.weight)
            }
        };
        report.checked += 1;
        report.passed += 1;
        report.max_steps = report.max_steps.max(out.steps);
        report.max_weight = report.max_weight.max(weight_algo);
        report.rows.push(SweepRow {
            v: v.clone(),
            status: "ok",
            weight_algo,
            weight_oracle,
            steps: out.steps,
            w_init: out.w_init,
        });
        v += 1;
    }
    Ok(report)
}
