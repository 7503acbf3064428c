//! Local property A witnesses and the finite-scale bridges between witness
//! functions and groupoid function families: witness checking, the
//! ball-indicator constructor, the witness ↔ function dictionary, flattening
//! to coarser levels, and the ε-schedule inequalities.
//!
//! Witness values are exact radicals, so unit norms and the 1/n bounds are
//! decided by rational comparisons wherever a single radicand is involved —
//! which covers every built-in constructor.

use std::collections::BTreeMap;

use num::{BigInt, One, Zero};
use serde::{Deserialize, Serialize};

use crate::ball::LevelSystem;
use crate::error::{Result, UrsError};
use crate::exact::{parse_radical, radical_to_string, Radical, Ratio};
#[cfg(test)]
use crate::exact::ratio_int;
use crate::report::Outcome;

type Table = BTreeMap<(u32, u32), Radical>;

/// Local functions ρ_x supported in the R_n-ball of x and determined by its
/// R_n-ball type: one real value per (class, ball vertex).
#[derive(Clone, Debug)]
pub struct PropAWitness {
    pub level_ref: String,
    /// the index n of the witness in its sequence
    pub index: usize,
    /// the locality radius R_n
    pub locality: usize,
    pub values: Table,
}

/// One index of a groupoid-function family f_n, with optional mollification
/// data (vanishing radius T_n and achieved sup-error ε_n).
#[derive(Clone, Debug)]
pub struct AmenEntry {
    pub index: usize,
    pub locality: usize,
    pub table: Table,
    pub vanish_radius: Option<usize>,
    pub epsilon: Option<Ratio>,
}

#[derive(Clone, Debug, Default)]
pub struct AmenabilityFunctions {
    pub level_ref: String,
    pub entries: Vec<AmenEntry>,
}

impl AmenabilityFunctions {
    pub fn new(level_ref: String) -> Self {
        AmenabilityFunctions { level_ref, entries: Vec::new() }
    }

    pub fn push(&mut self, entry: AmenEntry) {
        self.entries.push(entry);
    }

    /// Schedule rows for `epsilon_schedule_check`: T_n from the stored
    /// vanishing radii, ε_n from the mollification data (zero when the entry
    /// was never mollified), and a rational upper bound on ‖f_n‖_∞, which is
    /// the conservative side for both inequalities.
    pub fn schedule_items(&self) -> Vec<ScheduleItem> {
        self.entries
            .iter()
            .map(|e| {
                let sup = e.table.values().map(|v| v.to_f64().abs()).fold(0.0, f64::max);
                let sup_f = Ratio::from_float(sup * (1.0 + 1e-9) + f64::MIN_POSITIVE)
                    .unwrap_or_else(Ratio::one);
                ScheduleItem {
                    n: e.index,
                    vanish_radius: e.vanish_radius.unwrap_or(e.locality),
                    sup_f,
                    epsilon: e.epsilon.clone().unwrap_or_else(Ratio::zero),
                }
            })
            .collect()
    }
}

fn max_support_depth(ls: &LevelSystem, level: usize, table: &Table) -> usize {
    let mut d = 0;
    for ((c, v), val) in table {
        if !val.is_zero() {
            d = d.max(ls.class_ball(level, *c as usize).depth(*v) as usize);
        }
    }
    d
}

// ---------------------------------------------------------------------------
// Witness checking
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessReport {
    pub index: usize,
    pub locality: usize,
    /// classes whose fiber norm misses 1 beyond the tolerance
    pub norm_failures: Vec<usize>,
    /// (class, ball vertex) pairs violating the 1/n bound
    pub bound_failures: Vec<(usize, u32)>,
    pub pairs_checked: usize,
    pub max_diff_sq: f64,
    pub outcome: Outcome,
}

/// Checks ‖ρ_x‖ = 1 and ‖ρ_x − ρ_y‖ ≤ 1/n for d(x, y) ≤ n, per class of
/// E_{R_n + n}. Every distance-≤ n pair of the infinite graph sits inside
/// some class at that level, so a pass certifies the condition everywhere.
pub fn check_witness(
    ls: &LevelSystem,
    witness: &PropAWitness,
    n: usize,
    tol: &Ratio,
) -> Result<WitnessReport> {
    let r = witness.locality;
    let deep = r + n;
    ls.require_saturated(deep)?;
    let one = Ratio::one();
    let lo = (&one - tol) * (&one - tol);
    let hi = (&one + tol) * (&one + tol);
    let bound = {
        let b = Ratio::new(BigInt::one(), BigInt::from(n as i64)) + tol;
        &b * &b
    };
    let mut norm_failures = Vec::new();
    let mut bound_failures = Vec::new();
    let mut pairs_checked = 0;
    let mut max_diff_sq = 0.0f64;
    for c in 0..ls.class_count(deep) {
        let ball = ls.class_ball(deep, c);
        let chain_r = ls.e_chain(deep, c, r) as u32;
        let root_value = |z: u32| -> Radical {
            match ball.rank_at(z, r as u32) {
                Some(rank) => witness
                    .values
                    .get(&(chain_r, rank))
                    .cloned()
                    .unwrap_or_else(Radical::zero),
                None => Radical::zero(),
            }
        };
        // ‖ρ_root‖² = 1 within tolerance
        let mut norm_sq = Radical::zero();
        for z in 0..ball.vertex_count() as u32 {
            let v = root_value(z);
            if !v.is_zero() {
                norm_sq = norm_sq.add(&v.square());
            }
        }
        if norm_sq.cmp_ratio(&lo) == std::cmp::Ordering::Less
            || norm_sq.cmp_ratio(&hi) == std::cmp::Ordering::Greater
        {
            norm_failures.push(c);
        }
        // pairs at distance ≤ n from the root
        for y in 1..ball.vertex_count() as u32 {
            if ball.depth(y) > n as u32 {
                continue;
            }
            pairs_checked += 1;
            let (yty, ymap) = ball.interior(y, r as u32);
            let yc = ls
                .class_id(r, &yty)
                .ok_or(UrsError::UnknownClass { level: r })? as u32;
            let mut diff_sq = Radical::zero();
            for z in 0..ball.vertex_count() as u32 {
                let a = root_value(z);
                let b = match ymap[z as usize] {
                    Some(rank) => witness
                        .values
                        .get(&(yc, rank))
                        .cloned()
                        .unwrap_or_else(Radical::zero),
                    None => Radical::zero(),
                };
                if a.is_zero() && b.is_zero() {
                    continue;
                }
                let d = a.sub(&b);
                diff_sq = diff_sq.add(&d.square());
            }
            max_diff_sq = max_diff_sq.max(diff_sq.to_f64());
            if diff_sq.cmp_ratio(&bound) == std::cmp::Ordering::Greater {
                bound_failures.push((c, y));
            }
        }
    }
    let ok = norm_failures.is_empty() && bound_failures.is_empty();
    Ok(WitnessReport {
        index: n,
        locality: r,
        norm_failures,
        bound_failures,
        pairs_checked,
        max_diff_sq,
        outcome: Outcome::from_bool(ok),
    })
}

/// Normalized indicator of the k-ball: ρ_x = |B_k(x)|^{-1/2}·1_{B_k(x)}.
pub fn ball_indicator_witness(ls: &LevelSystem, n: usize, k: usize) -> Result<PropAWitness> {
    ls.require_saturated(k)?;
    let mut values = Table::new();
    for c in 0..ls.class_count(k) {
        let size = ls.class_ball(k, c).vertex_count() as i64;
        let val = Radical::sqrt_ratio(&Ratio::new(BigInt::one(), BigInt::from(size)))?;
        for v in 0..size as u32 {
            values.insert((c as u32, v), val.clone());
        }
    }
    Ok(PropAWitness { level_ref: ls.oracle_hash.clone(), index: n, locality: k, values })
}

// ---------------------------------------------------------------------------
// Witness ↔ function bridges
// ---------------------------------------------------------------------------

/// f_n(x, γ) = ρ_x(γ·x), keyed by (class, ball vertex): the table transfers
/// unchanged, which is exactly the content of the dictionary at this scale.
pub fn witness_to_functions(ls: &LevelSystem, witness: &PropAWitness) -> AmenEntry {
    AmenEntry {
        index: witness.index,
        locality: witness.locality,
        vanish_radius: Some(max_support_depth(ls, witness.locality, &witness.values)),
        epsilon: None,
        table: witness.values.clone(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalizationCheck {
    pub pairs: usize,
    pub holds: bool,
    pub max_violation: f64,
}

/// Recovers a witness from a function table; the normalized variant divides
/// each fiber by its ℓ² norm, and the normalization inequality
/// ‖ρ̂_u − ρ̂_v‖ ≤ (‖ρ_u − ρ_v‖ + |‖ρ_u‖ − ‖ρ_v‖|)/‖ρ_u‖ is verified on all
/// unit-class pairs (rank-aligned, zero-padded) as a consistency check.
pub fn functions_to_witness(
    ls: &LevelSystem,
    entry: &AmenEntry,
) -> Result<(PropAWitness, PropAWitness, NormalizationCheck)> {
    let r = entry.locality;
    ls.level(r)?;
    let witness = PropAWitness {
        level_ref: ls.oracle_hash.clone(),
        index: entry.index,
        locality: r,
        values: entry.table.clone(),
    };
    // per-class fiber norms
    let mut norms: Vec<Radical> = Vec::new();
    for c in 0..ls.class_count(r) {
        let mut s = Radical::zero();
        for v in 0..ls.class_ball(r, c).vertex_count() as u32 {
            if let Some(val) = entry.table.get(&(c as u32, v)) {
                s = s.add(&val.square());
            }
        }
        let s = s.as_ratio().ok_or(UrsError::IrrationalNorm)?;
        if s.is_zero() {
            return Err(UrsError::ZeroNormFiber { class: c });
        }
        norms.push(Radical::sqrt_ratio(&s)?);
    }
    let mut normalized_values = Table::new();
    for ((c, v), val) in &entry.table {
        normalized_values.insert((*c, *v), val.div_single(&norms[*c as usize])?);
    }
    let normalized = PropAWitness {
        level_ref: ls.oracle_hash.clone(),
        index: entry.index,
        locality: r,
        values: normalized_values,
    };
    // consistency of the normalization inequality, in floating point
    let fiber = |values: &Table, c: usize, dim: usize| -> Vec<f64> {
        (0..dim as u32)
            .map(|v| values.get(&(c as u32, v)).map(|x| x.to_f64()).unwrap_or(0.0))
            .collect()
    };
    let dim = (0..ls.class_count(r))
        .map(|c| ls.class_ball(r, c).vertex_count())
        .max()
        .unwrap_or(0);
    let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let mut pairs = 0;
    let mut max_violation = 0.0f64;
    for cu in 0..ls.class_count(r) {
        for cv in 0..ls.class_count(r) {
            if cu == cv {
                continue;
            }
            pairs += 1;
            let (u, v) = (fiber(&witness.values, cu, dim), fiber(&witness.values, cv, dim));
            let (hu, hv) =
                (fiber(&normalized.values, cu, dim), fiber(&normalized.values, cv, dim));
            let lhs = norm(&hu.iter().zip(&hv).map(|(a, b)| a - b).collect::<Vec<_>>());
            let nu = norm(&u);
            let rhs = (norm(&u.iter().zip(&v).map(|(a, b)| a - b).collect::<Vec<_>>())
                + (nu - norm(&v)).abs())
                / nu;
            max_violation = max_violation.max(lhs - rhs);
        }
    }
    let check = NormalizationCheck { pairs, holds: max_violation <= 1e-9, max_violation };
    Ok((witness, normalized, check))
}

// ---------------------------------------------------------------------------
// Amenability check
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AmenReport {
    pub index: usize,
    pub locality: usize,
    pub budget: usize,
    /// per unit class: |Σ_γ |f(u,γ)|² − 1|
    pub unit_devs: Vec<f64>,
    pub unit_sums_exactly_one: bool,
    pub max_dev_within_n: f64,
    pub max_dev_within_budget: f64,
    pub arrows_checked: usize,
    pub outcome: Outcome,
}

/// Per unit class, Σ|f|² against 1; per arrow of depth ≤ L, |1 − f*f^*|.
/// Passes at index n when the deviation stays ≤ 1/n on arrows of depth ≤ n.
pub fn amenability_check(ls: &LevelSystem, entry: &AmenEntry, budget: usize) -> Result<AmenReport> {
    let s = entry.locality;
    let n = entry.index;
    let deep = s + budget;
    ls.require_saturated(deep)?;
    let one = Radical::one();
    let inv_n = Ratio::new(BigInt::one(), BigInt::from(n.max(1) as i64));
    // unit sums at the locality level
    let mut unit_devs = Vec::new();
    let mut unit_sums_exactly_one = true;
    for c in 0..ls.class_count(s) {
        let mut sum = Radical::zero();
        for v in 0..ls.class_ball(s, c).vertex_count() as u32 {
            if let Some(val) = entry.table.get(&(c as u32, v)) {
                sum = sum.add(&val.square());
            }
        }
        if sum.sub(&one).cmp_ratio(&Ratio::zero()) != std::cmp::Ordering::Equal {
            unit_sums_exactly_one = false;
        }
        unit_devs.push((sum.to_f64() - 1.0).abs());
    }
    // f * f^* on arrows of depth ≤ L
    let mut max_dev_within_n = 0.0f64;
    let mut max_dev_within_budget = 0.0f64;
    let mut arrows_checked = 0;
    let mut pass = true;
    for c in 0..ls.class_count(deep) {
        let ball = ls.class_ball(deep, c);
        let chain_s = ls.e_chain(deep, c, s) as u32;
        for v in 0..ball.vertex_count() as u32 {
            let d = ball.depth(v) as usize;
            if d > budget {
                continue;
            }
            arrows_checked += 1;
            let (vty, vmap) = ball.interior(v, s as u32);
            let vc = ls.class_id(s, &vty).ok_or(UrsError::UnknownClass { level: s })? as u32;
            let mut prod = Radical::zero();
            for z in 0..ball.vertex_count() as u32 {
                let a = match ball.rank_at(z, s as u32) {
                    Some(rank) => entry.table.get(&(chain_s, rank)),
                    None => None,
                };
                let Some(a) = a else { continue };
                let b = match vmap[z as usize] {
                    Some(rank) => entry.table.get(&(vc, rank)),
                    None => None,
                };
                let Some(b) = b else { continue };
                prod = prod.add(&a.mul(b));
            }
            let dev = one.sub(&prod).abs();
            let dev_f = dev.to_f64();
            max_dev_within_budget = max_dev_within_budget.max(dev_f);
            if d <= n {
                max_dev_within_n = max_dev_within_n.max(dev_f);
                if dev.cmp_ratio(&inv_n) == std::cmp::Ordering::Greater {
                    pass = false;
                }
            }
        }
    }
    Ok(AmenReport {
        index: n,
        locality: s,
        budget,
        unit_devs,
        unit_sums_exactly_one,
        max_dev_within_n,
        max_dev_within_budget,
        arrows_checked,
        outcome: Outcome::from_bool(pass),
    })
}

// ---------------------------------------------------------------------------
// Flattening and the ε-schedule
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct FlattenResult {
    pub entry: AmenEntry,
    pub epsilon: Radical,
}

/// Approximates a level-M table by a level-N one: each level-N arrow takes
/// the value of its least refinement; the infinity point keeps zero, so
/// arrows deeper than N contribute their full value to the sup-error ε.
pub fn flatten(ls: &LevelSystem, entry: &AmenEntry, target: usize) -> Result<FlattenResult> {
    let m = entry.locality;
    if target > m {
        return Err(UrsError::Invalid("flatten target above the stored level".into()));
    }
    ls.level(m)?;
    let mut table = Table::new();
    for cn in 0..ls.class_count(target) {
        let dim = ls.class_ball(target, cn).vertex_count() as u32;
        for vn in 0..dim {
            // least refinement in canonical (class, vertex) order
            'search: for cm in 0..ls.class_count(m) {
                if ls.e_chain(m, cm, target) != cn {
                    continue;
                }
                let ball = ls.class_ball(m, cm);
                for vm in 0..ball.vertex_count() as u32 {
                    if ball.rank_at(vm, target as u32) == Some(vn) {
                        if let Some(val) = entry.table.get(&(cm as u32, vm)) {
                            if !val.is_zero() {
                                table.insert((cn as u32, vn), val.clone());
                            }
                        }
                        break 'search;
                    }
                }
            }
        }
    }
    // sup over fibers of |f − f'∘projection|, including the fiber over ∞
    let mut epsilon = Radical::zero();
    for cm in 0..ls.class_count(m) {
        let ball = ls.class_ball(m, cm);
        let chain = ls.e_chain(m, cm, target) as u32;
        for vm in 0..ball.vertex_count() as u32 {
            let val = entry.table.get(&(cm as u32, vm)).cloned().unwrap_or_else(Radical::zero);
            let flat = match ball.rank_at(vm, target as u32) {
                Some(rank) => table.get(&(chain, rank)).cloned().unwrap_or_else(Radical::zero),
                None => Radical::zero(),
            };
            let gap = val.sub(&flat).abs();
            if gap.sub(&epsilon).cmp_ratio(&Ratio::zero()) == std::cmp::Ordering::Greater {
                epsilon = gap;
            }
        }
    }
    let vanish = max_support_depth(ls, target, &table)
        .max(max_support_depth(ls, m, &entry.table));
    Ok(FlattenResult {
        entry: AmenEntry {
            index: entry.index,
            locality: target,
            table,
            vanish_radius: Some(vanish),
            epsilon: epsilon.as_ratio(),
        },
        epsilon,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleItem {
    pub n: usize,
    pub vanish_radius: usize,
    #[serde(with = "crate::exact::ratio_serde")]
    pub sup_f: Ratio,
    #[serde(with = "crate::exact::ratio_serde")]
    pub epsilon: Ratio,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScheduleOutcome {
    pub n: usize,
    pub first_holds: bool,
    pub second_holds: bool,
}

/// Verifies 1/n ≥ (|Q|+1)^{T_n}(2‖f‖_∞ + ε)ε and
/// 1/n ≥ (4ε² + 8ε‖f‖_∞)(|Q|+1)^{T_n}, exactly in rational arithmetic.
pub fn epsilon_schedule_check(generator_count: usize, items: &[ScheduleItem]) -> Vec<ScheduleOutcome> {
    items
        .iter()
        .map(|item| {
            let inv_n = Ratio::new(BigInt::one(), BigInt::from(item.n.max(1) as i64));
            let growth = Ratio::from(
                BigInt::from(generator_count as i64 + 1).pow(item.vanish_radius as u32),
            );
            let eps = &item.epsilon;
            let sup = &item.sup_f;
            let first = &growth * (Ratio::from(BigInt::from(2)) * sup + eps) * eps;
            let second = (Ratio::from(BigInt::from(4)) * eps * eps
                + Ratio::from(BigInt::from(8)) * eps * sup)
                * &growth;
            ScheduleOutcome {
                n: item.n,
                first_holds: first <= inv_n,
                second_holds: second <= inv_n,
            }
        })
        .collect()
}

/// A schedule value small enough for both inequalities at index n, mirroring
/// the constructive choice in the converse direction.
pub fn derive_epsilon(generator_count: usize, vanish_radius: usize, sup_f: &Ratio, n: usize) -> Ratio {
    let growth =
        Ratio::from(BigInt::from(generator_count as i64 + 1).pow(vanish_radius as u32));
    let two_sup_plus = Ratio::from(BigInt::from(2)) * sup_f + Ratio::one();
    let eight = Ratio::from(BigInt::from(4)) + Ratio::from(BigInt::from(8)) * sup_f;
    let denom = if two_sup_plus > eight { two_sup_plus } else { eight };
    Ratio::new(BigInt::one(), BigInt::from(n.max(1) as i64)) / (growth * denom)
}

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessValueDoc {
    pub class: u32,
    pub vertex: u32,
    pub value: serde_json::Value,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessDoc {
    pub level_system: String,
    pub n: usize,
    #[serde(rename = "R")]
    pub locality: usize,
    pub values: Vec<WitnessValueDoc>,
}

impl PropAWitness {
    pub fn to_doc(&self) -> WitnessDoc {
        WitnessDoc {
            level_system: self.level_ref.clone(),
            n: self.index,
            locality: self.locality,
            values: self
                .values
                .iter()
                .map(|((c, v), val)| WitnessValueDoc {
                    class: *c,
                    vertex: *v,
                    value: match val.as_ratio() {
                        Some(_) => serde_json::Value::String(radical_to_string(val)),
                        None => serde_json::Value::String(radical_to_string(val)),
                    },
                })
                .collect(),
        }
    }

    pub fn from_doc(ls: &LevelSystem, doc: &WitnessDoc) -> Result<Self> {
        if ls.oracle_hash != doc.level_system {
            return Err(UrsError::LevelSystemMismatch {
                expected: ls.oracle_hash.clone(),
                got: doc.level_system.clone(),
            });
        }
        ls.level(doc.locality)?;
        let mut values = Table::new();
        for v in &doc.values {
            let val = match &v.value {
                serde_json::Value::String(s) => parse_radical(s)?,
                serde_json::Value::Number(x) => {
                    let f = x.as_f64().ok_or_else(|| UrsError::Invalid("bad number".into()))?;
                    Radical::from_ratio(
                        Ratio::from_float(f)
                            .ok_or_else(|| UrsError::Invalid("non-finite value".into()))?,
                    )
                }
                other => return Err(UrsError::Invalid(format!("bad witness value {other}"))),
            };
            if !val.is_zero() {
                values.insert((v.class, v.vertex), val);
            }
        }
        Ok(PropAWitness {
            level_ref: doc.level_system.clone(),
            index: doc.n,
            locality: doc.locality,
            values,
        })
    }
}
