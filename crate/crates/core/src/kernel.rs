//! The local-kernel *-algebra: finite-width kernels stored as sparse tables
//! on the non-infinity arrows of F_N, with addition, convolution, involution,
//! width reduction, and the dictionary to locally constant groupoid
//! functions.
//!
//! Values are exact Gaussian rationals so the algebra identities hold
//! bit-exactly. Absent entries are zero. The involution is stored at level
//! 2N: its cutoff radius is N but its locality radius can genuinely reach 2N,
//! and `reduce_width` recovers the true minimum.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::action::{ActionOracle, Vertex};
use crate::ball::{ball_type, LevelSystem};
use crate::error::{Result, UrsError};
use crate::exact::{parse_ratio, ratio_to_string, Gaussian};
use crate::groupoid::{invert_arrow, project_arrow, ArrowClass};

type Entries = BTreeMap<(u32, u32), Gaussian>;

/// A local kernel of width N: a table over (class at level N, ball vertex).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalKernel {
    pub level_ref: String,
    pub width: usize,
    pub entries: Entries,
}

/// A locally constant groupoid function table on F_level, vanishing at the
/// infinity point by construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroupoidFunction {
    pub level_ref: String,
    pub level: usize,
    pub entries: Entries,
}

fn insert_nonzero(entries: &mut Entries, key: (u32, u32), val: Gaussian) {
    if !val.is_zero() {
        entries.insert(key, val);
    }
}

fn accumulate(entries: &mut Entries, key: (u32, u32), val: Gaussian) {
    if val.is_zero() {
        return;
    }
    let slot = entries.entry(key).or_insert_with(Gaussian::zero);
    *slot = slot.add(&val);
    if slot.is_zero() {
        entries.remove(&key);
    }
}

impl LocalKernel {
    pub fn zero(ls: &LevelSystem, width: usize) -> Self {
        LocalKernel { level_ref: ls.oracle_hash.clone(), width, entries: Entries::new() }
    }

    /// The identity kernel δ.
    pub fn delta(ls: &LevelSystem) -> Self {
        let mut entries = Entries::new();
        for c in 0..ls.class_count(0) {
            entries.insert((c as u32, 0), Gaussian::one());
        }
        LocalKernel { level_ref: ls.oracle_hash.clone(), width: 0, entries }
    }

    /// The labeled adjacency kernel: A(x, y) counts the generators moving x
    /// to y (loops included).
    pub fn adjacency(ls: &LevelSystem) -> Result<Self> {
        ls.require_saturated(1)?;
        let mut entries = Entries::new();
        for c in 0..ls.class_count(1) {
            let ball = ls.class_ball(1, c);
            for q in 0..ball.degree() {
                if let Some(t) = ball.target(0, q) {
                    accumulate(&mut entries, (c as u32, t), Gaussian::one());
                }
            }
        }
        Ok(LocalKernel { level_ref: ls.oracle_hash.clone(), width: 1, entries })
    }

    /// Deterministic pseudo-random kernel with small rational entries.
    pub fn random(ls: &LevelSystem, width: usize, seed: u64, complex: bool) -> Result<Self> {
        ls.require_saturated(width)?;
        let mut rng = crate::exact::SplitMix(seed);
        let small = |rng: &mut crate::exact::SplitMix| {
            let re = crate::exact::ratio((rng.next() % 5) as i64 - 2, (rng.next() % 2) as i64 + 1);
            let im = if complex {
                crate::exact::ratio((rng.next() % 5) as i64 - 2, (rng.next() % 2) as i64 + 1)
            } else {
                crate::exact::ratio_int(0)
            };
            Gaussian::new(re, im)
        };
        let mut entries = Entries::new();
        for c in 0..ls.class_count(width) {
            let ball = ls.class_ball(width, c);
            for v in 0..ball.vertex_count() as u32 {
                if rng.next().is_multiple_of(2) {
                    let val = small(&mut rng);
                    insert_nonzero(&mut entries, (c as u32, v), val);
                }
            }
        }
        Ok(LocalKernel { level_ref: ls.oracle_hash.clone(), width, entries })
    }

    pub fn get(&self, class: u32, target: u32) -> Gaussian {
        self.entries.get(&(class, target)).cloned().unwrap_or_else(Gaussian::zero)
    }

    pub fn sup_abs(&self) -> f64 {
        self.entries.values().map(|v| v.abs_f64()).fold(0.0, f64::max)
    }
}

fn check_same_system(a: &str, b: &str) -> Result<()> {
    if a != b {
        return Err(UrsError::LevelSystemMismatch { expected: a.into(), got: b.into() });
    }
    Ok(())
}

/// K(u, v) on concrete vertices: zero beyond the width, otherwise the entry
/// of u's ball type at v's position.
pub fn eval_kernel(
    ls: &LevelSystem,
    oracle: &ActionOracle,
    kernel: &LocalKernel,
    u: &Vertex,
    v: &Vertex,
) -> Result<Gaussian> {
    check_same_system(&ls.oracle_hash, &kernel.level_ref)?;
    let ball = ball_type(oracle, u, kernel.width);
    let class = ls
        .class_id(kernel.width, &ball.ty)
        .ok_or(UrsError::UnknownClass { level: kernel.width })?;
    Ok(match ball.index_of(v) {
        Some(idx) => kernel.get(class as u32, idx),
        None => Gaussian::zero(),
    })
}

/// Re-keys a kernel at a coarser cutoff M ≥ width; the kernel is unchanged
/// as a function.
pub fn lift(ls: &LevelSystem, k: &LocalKernel, m: usize) -> Result<LocalKernel> {
    if m < k.width {
        return Err(UrsError::Invalid("lift target below the kernel width".into()));
    }
    if m == k.width {
        return Ok(k.clone());
    }
    ls.require_saturated(m)?;
    let mut entries = Entries::new();
    for c in 0..ls.class_count(m) {
        let ball = ls.class_ball(m, c);
        let chain = ls.e_chain(m, c, k.width) as u32;
        for v in 0..ball.vertex_count() as u32 {
            if let Some(rank) = ball.rank_at(v, k.width as u32) {
                insert_nonzero(&mut entries, (c as u32, v), k.get(chain, rank));
            }
        }
    }
    Ok(LocalKernel { level_ref: k.level_ref.clone(), width: m, entries })
}

pub fn add(ls: &LevelSystem, k: &LocalKernel, l: &LocalKernel) -> Result<LocalKernel> {
    check_same_system(&k.level_ref, &l.level_ref)?;
    let w = k.width.max(l.width);
    let (k, l) = (lift(ls, k, w)?, lift(ls, l, w)?);
    let mut entries = k.entries;
    for (key, val) in l.entries {
        accumulate(&mut entries, key, val);
    }
    Ok(LocalKernel { level_ref: k.level_ref, width: w, entries })
}

pub fn scale(lambda: &Gaussian, k: &LocalKernel) -> LocalKernel {
    let mut entries = Entries::new();
    for (key, val) in &k.entries {
        insert_nonzero(&mut entries, *key, lambda.mul(val));
    }
    LocalKernel { level_ref: k.level_ref.clone(), width: k.width, entries }
}

/// Convolution (K·L)(x, y) = Σ_z K(x, z) L(z, y), computed per class of
/// E_{N+M}: the inner factor is evaluated from the radius-M type of z inside
/// the class ball. Exact.
pub fn convolve(ls: &LevelSystem, k: &LocalKernel, l: &LocalKernel) -> Result<LocalKernel> {
    check_same_system(&k.level_ref, &l.level_ref)?;
    let w = k.width + l.width;
    ls.require_saturated(w)?;
    let mut entries = Entries::new();
    for c in 0..ls.class_count(w) {
        let ball = ls.class_ball(w, c);
        let chain_k = ls.e_chain(w, c, k.width) as u32;
        for z in 0..ball.vertex_count() as u32 {
            let Some(rank_z) = ball.rank_at(z, k.width as u32) else { continue };
            let kval = k.get(chain_k, rank_z);
            if kval.is_zero() {
                continue;
            }
            let (zty, map) = ball.interior(z, l.width as u32);
            let zc = ls
                .class_id(l.width, &zty)
                .ok_or(UrsError::UnknownClass { level: l.width })? as u32;
            for (y, slot) in map.iter().enumerate() {
                if let Some(yr) = slot {
                    let lval = l.get(zc, *yr);
                    if !lval.is_zero() {
                        accumulate(&mut entries, (c as u32, y as u32), kval.mul(&lval));
                    }
                }
            }
        }
    }
    Ok(LocalKernel { level_ref: k.level_ref.clone(), width: w, entries })
}

/// Involution K*(x, y) = conj K(y, x), stored at level 2N.
pub fn adjoint(ls: &LevelSystem, k: &LocalKernel) -> Result<LocalKernel> {
    check_same_system(&ls.oracle_hash, &k.level_ref)?;
    let w = 2 * k.width;
    ls.require_saturated(w)?;
    let mut entries = Entries::new();
    for c in 0..ls.class_count(w) {
        let ball = ls.class_ball(w, c);
        for y in 0..ball.vertex_count() as u32 {
            if ball.depth(y) > k.width as u32 {
                continue;
            }
            let (yty, map) = ball.interior(y, k.width as u32);
            let yc = ls
                .class_id(k.width, &yty)
                .ok_or(UrsError::UnknownClass { level: k.width })? as u32;
            let back = map[0].expect("the root lies within the width of the target");
            let val = k.get(yc, back);
            insert_nonzero(&mut entries, (c as u32, y), val.conj());
        }
    }
    Ok(LocalKernel { level_ref: k.level_ref.clone(), width: w, entries })
}

/// The minimal width: the smallest N with entries supported at depth ≤ N and
/// values constant on the connecting-map fibers down to level N.
pub fn reduce_width(ls: &LevelSystem, k: &LocalKernel) -> Result<LocalKernel> {
    check_same_system(&ls.oracle_hash, &k.level_ref)?;
    let m = k.width;
    let mut min_depth = 0u32;
    for ((c, v), val) in &k.entries {
        if !val.is_zero() {
            min_depth = min_depth.max(ls.class_ball(m, *c as usize).depth(*v));
        }
    }
    'candidate: for n in (min_depth as usize)..=m {
        let mut groups: Entries = Entries::new();
        let mut seen: BTreeMap<(u32, u32), ()> = BTreeMap::new();
        for c in 0..ls.class_count(m) {
            let ball = ls.class_ball(m, c);
            let chain = ls.e_chain(m, c, n) as u32;
            for v in 0..ball.vertex_count() as u32 {
                let val = k.get(c as u32, v);
                let Some(rank) = ball.rank_at(v, n as u32) else { continue };
                let key = (chain, rank);
                if seen.insert(key, ()).is_some() {
                    let prev = groups.get(&key).cloned().unwrap_or_else(Gaussian::zero);
                    if prev != val {
                        continue 'candidate;
                    }
                } else {
                    insert_nonzero(&mut groups, key, val);
                }
            }
        }
        return Ok(LocalKernel { level_ref: k.level_ref.clone(), width: n, entries: groups });
    }
    Ok(k.clone())
}

/// Kernel equality as functions: compare at a common cutoff.
pub fn kernels_equal(ls: &LevelSystem, k: &LocalKernel, l: &LocalKernel) -> Result<bool> {
    let w = k.width.max(l.width);
    Ok(lift(ls, k, w)?.entries == lift(ls, l, w)?.entries)
}

/// The function f_K on F_M: pull the kernel back through the connecting
/// maps; arrows projecting to infinity at level N get zero.
pub fn to_groupoid_function(
    ls: &LevelSystem,
    k: &LocalKernel,
    m: usize,
) -> Result<GroupoidFunction> {
    let lifted = lift(ls, k, m)?;
    Ok(GroupoidFunction { level_ref: lifted.level_ref, level: m, entries: lifted.entries })
}

/// The kernel K_f of a locally constant function table.
pub fn from_groupoid_function(f: &GroupoidFunction) -> LocalKernel {
    LocalKernel { level_ref: f.level_ref.clone(), width: f.level, entries: f.entries.clone() }
}

/// Groupoid convolution (f * g)(α) = Σ_β f(β) g(β⁻¹α) over arrows β with the
/// range of α, rendered on F_{N+M} by transporting the second factor to the
/// source fiber of β.
pub fn fn_convolve(
    ls: &LevelSystem,
    f: &GroupoidFunction,
    g: &GroupoidFunction,
) -> Result<GroupoidFunction> {
    check_same_system(&f.level_ref, &g.level_ref)?;
    let w = f.level + g.level;
    ls.require_saturated(w)?;
    let mut entries = Entries::new();
    for c in 0..ls.class_count(w) {
        let ball = ls.class_ball(w, c);
        let chain_f = ls.e_chain(w, c, f.level) as u32;
        // β runs over the fiber of arrows with range c and f-support depth
        for z in 0..ball.vertex_count() as u32 {
            let Some(rank_z) = ball.rank_at(z, f.level as u32) else { continue };
            let Some(fval) = f.entries.get(&(chain_f, rank_z)) else { continue };
            // β⁻¹α has range type_g(z) and targets seen from z
            let (zty, map) = ball.interior(z, g.level as u32);
            let zc = ls
                .class_id(g.level, &zty)
                .ok_or(UrsError::UnknownClass { level: g.level })? as u32;
            for (y, slot) in map.iter().enumerate() {
                if let Some(yr) = slot {
                    if let Some(gval) = g.entries.get(&(zc, *yr)) {
                        accumulate(&mut entries, (c as u32, y as u32), fval.mul(gval));
                    }
                }
            }
        }
    }
    Ok(GroupoidFunction { level_ref: f.level_ref.clone(), level: w, entries })
}

/// Groupoid involution f*(α) = conj f(α⁻¹), on F_{2N} via arrow inversion
/// and projection.
pub fn fn_adjoint(ls: &LevelSystem, f: &GroupoidFunction) -> Result<GroupoidFunction> {
    let w = 2 * f.level;
    ls.require_saturated(w)?;
    let mut entries = Entries::new();
    for c in 0..ls.class_count(w) {
        let ball = ls.class_ball(w, c);
        for v in 0..ball.vertex_count() as u32 {
            if ball.depth(v) > f.level as u32 {
                continue; // the inverse arrow is beyond the support of f
            }
            let arrow = ArrowClass::Arrow { level: w, class: c, target: v };
            let inv = invert_arrow(ls, &arrow)?;
            match project_arrow(ls, &inv, f.level) {
                ArrowClass::Arrow { class, target, .. } => {
                    if let Some(val) = f.entries.get(&(class as u32, target)) {
                        insert_nonzero(&mut entries, (c as u32, v), val.conj());
                    }
                }
                ArrowClass::Infinity { .. } => {}
            }
        }
    }
    Ok(GroupoidFunction { level_ref: f.level_ref.clone(), level: w, entries })
}

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelEntryDoc {
    pub class: u32,
    pub target: u32,
    pub re: String,
    pub im: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelDoc {
    pub level_system: String,
    pub width: usize,
    pub entries: Vec<KernelEntryDoc>,
}

impl LocalKernel {
    pub fn to_doc(&self) -> KernelDoc {
        KernelDoc {
            level_system: self.level_ref.clone(),
            width: self.width,
            entries: self
                .entries
                .iter()
                .map(|((c, t), v)| KernelEntryDoc {
                    class: *c,
                    target: *t,
                    re: ratio_to_string(&v.re),
                    im: ratio_to_string(&v.im),
                })
                .collect(),
        }
    }

    pub fn from_doc(ls: &LevelSystem, doc: &KernelDoc) -> Result<Self> {
        check_same_system(&ls.oracle_hash, &doc.level_system)?;
        ls.level(doc.width)?;
        let mut entries = Entries::new();
        for e in &doc.entries {
            if e.class as usize >= ls.class_count(doc.width)
                || e.target as usize >= ls.class_ball(doc.width, e.class as usize).vertex_count()
            {
                return Err(UrsError::Invalid(format!(
                    "kernel entry ({}, {}) out of range at width {}",
                    e.class, e.target, doc.width
                )));
            }
            let val = Gaussian::new(parse_ratio(&e.re)?, parse_ratio(&e.im)?);
            insert_nonzero(&mut entries, (e.class, e.target), val);
        }
        Ok(LocalKernel { level_ref: doc.level_system.clone(), width: doc.width, entries })
    }
}
