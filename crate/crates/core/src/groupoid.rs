//! The groupoid at finite precision: the finite arrow sets F_n with their
//! connecting maps, composition, inversion, the 2-adic arrow metric, and the
//! quotient map from the transformation groupoid with its finite-scale
//! checks.
//!
//! An arrow is stored as (class, target vertex) rather than a word, which
//! resolves the identification of words reaching the same vertex and makes
//! equality plain data comparison. Every operation reports its output level
//! explicitly; finite truncations lose one level per unit of word length, so
//! callers must thread precision budgets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::action::{word_enumerate, GeneratorSystem, Word};
use crate::ball::LevelSystem;
use crate::error::{Result, UrsError};
use crate::report::Outcome;

/// An element of F_n: either the point at infinity or a (class, ball-vertex)
/// pair. The target is an index into the canonical numbering of the class
/// ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArrowClass {
    Arrow { level: usize, class: usize, target: u32 },
    Infinity { level: usize },
}

impl ArrowClass {
    pub fn level(&self) -> usize {
        match self {
            ArrowClass::Arrow { level, .. } | ArrowClass::Infinity { level } => *level,
        }
    }

    pub fn is_infinity(&self) -> bool {
        matches!(self, ArrowClass::Infinity { .. })
    }

    pub fn is_unit(&self) -> bool {
        matches!(self, ArrowClass::Arrow { target: 0, .. })
    }
}

/// The unit of a class: the arrow targeting the root.
pub fn unit_of(level: usize, class: usize) -> ArrowClass {
    ArrowClass::Arrow { level, class, target: 0 }
}

/// A class id at a definite level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassId {
    pub level: usize,
    pub id: usize,
}

/// Projects an arrow down the connecting maps to the given level.
pub fn project_arrow(ls: &LevelSystem, a: &ArrowClass, to_level: usize) -> ArrowClass {
    assert!(to_level <= a.level(), "cannot project upward");
    match *a {
        ArrowClass::Infinity { .. } => ArrowClass::Infinity { level: to_level },
        ArrowClass::Arrow { level, class, target } => {
            let ball = ls.class_ball(level, class);
            match ball.rank_at(target, to_level as u32) {
                Some(rank) => ArrowClass::Arrow {
                    level: to_level,
                    class: ls.e_chain(level, class, to_level),
                    target: rank,
                },
                None => ArrowClass::Infinity { level: to_level },
            }
        }
    }
}

pub fn range_of(a: &ArrowClass) -> Result<ClassId> {
    match *a {
        ArrowClass::Infinity { .. } => Err(UrsError::InfinityArrow),
        ArrowClass::Arrow { level, class, .. } => Ok(ClassId { level, id: class }),
    }
}

/// The source class, known only at reduced precision: an arrow at level n
/// with target at depth d has its source determined at level n − d.
pub fn source_of(ls: &LevelSystem, a: &ArrowClass) -> Result<ClassId> {
    match *a {
        ArrowClass::Infinity { .. } => Err(UrsError::InfinityArrow),
        ArrowClass::Arrow { level, class, target } => {
            let ball = ls.class_ball(level, class);
            let d = ball.depth(target) as usize;
            let (ty, _) = ball.interior(target, (level - d) as u32);
            let id = ls
                .class_id(level - d, &ty)
                .ok_or(UrsError::UnknownClass { level: level - d })?;
            Ok(ClassId { level: level - d, id })
        }
    }
}

/// Composition: `first` is applied first, `second` second, mirroring
/// (y, γ')(x, γ) = (y, γγ'). The result is rooted at `first`'s class and
/// comes out at level n − l(u) where n is `first`'s level and l(u) the depth
/// of its target.
pub fn compose(ls: &LevelSystem, first: &ArrowClass, second: &ArrowClass) -> Result<ArrowClass> {
    let ArrowClass::Arrow { level: bl, class: bc, target: bt } = *first else {
        return Err(UrsError::NotComposable("the infinity point never composes".into()));
    };
    let ArrowClass::Arrow { level: al, class: ac, target: at } = *second else {
        return Err(UrsError::NotComposable("the infinity point never composes".into()));
    };
    let ball_b = ls.class_ball(bl, bc);
    let d_b = ball_b.depth(bt) as usize;
    let out_level = bl - d_b;
    let ball_a = ls.class_ball(al, ac);
    let d_a = ball_a.depth(at) as usize;
    if d_b + d_a > bl {
        return Err(UrsError::PrecisionExhausted(format!(
            "word lengths {d_b}+{d_a} exceed level {bl}"
        )));
    }
    if al < out_level {
        return Err(UrsError::PrecisionExhausted(format!(
            "second arrow lives at level {al}, need {out_level}"
        )));
    }
    let src = source_of(ls, first)?;
    if ls.e_chain(al, ac, out_level) != src.id {
        return Err(UrsError::NotComposable(format!(
            "source of the first arrow is class {} at level {out_level}, range of the second projects to {}",
            src.id,
            ls.e_chain(al, ac, out_level)
        )));
    }
    let parents = ball_a.parents();
    let w = ball_a.word_for(at, &parents);
    let y = ball_b
        .trace(bt, &w)
        .expect("composite path stays inside the level ball");
    let out_class = ls.e_chain(bl, bc, out_level);
    match ball_b.rank_at(y, out_level as u32) {
        Some(rank) => Ok(ArrowClass::Arrow { level: out_level, class: out_class, target: rank }),
        None => Ok(ArrowClass::Infinity { level: out_level }),
    }
}

/// Inverse: the arrow rooted at the source class whose target is the path
/// back to the old root; output level n − d for target depth d.
pub fn invert_arrow(ls: &LevelSystem, a: &ArrowClass) -> Result<ArrowClass> {
    let ArrowClass::Arrow { level, class, target } = *a else {
        return Err(UrsError::InfinityArrow);
    };
    let ball = ls.class_ball(level, class);
    let d = ball.depth(target) as usize;
    let out_level = level - d;
    let (ty, map) = ball.interior(target, out_level as u32);
    let id = ls
        .class_id(out_level, &ty)
        .ok_or(UrsError::UnknownClass { level: out_level })?;
    match map[0] {
        Some(root_idx) => {
            Ok(ArrowClass::Arrow { level: out_level, class: id, target: root_idx })
        }
        // the old root is deeper than n − d from the target
        None => Ok(ArrowClass::Infinity { level: out_level }),
    }
}

/// Dyadic distance 2^{-N} for N the largest level at which the projections
/// coincide; `exact == false` means the arrows agree at every level both are
/// known at, so the distance is only bounded above.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrowDistance {
    pub exponent: usize,
    pub exact: bool,
}

impl ArrowDistance {
    pub fn value(&self) -> f64 {
        0.5f64.powi(self.exponent as i32)
    }
}

impl std::fmt::Display for ArrowDistance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.exact {
            write!(f, "2^-{}", self.exponent)
        } else {
            write!(f, "<=2^-{}", self.exponent)
        }
    }
}

pub fn arrow_distance(ls: &LevelSystem, a: &ArrowClass, b: &ArrowClass) -> ArrowDistance {
    let common = a.level().min(b.level());
    let mut coincide: Option<usize> = None;
    for m in (0..=common).rev() {
        if project_arrow(ls, a, m) == project_arrow(ls, b, m) {
            coincide = Some(m);
            break;
        }
    }
    match coincide {
        Some(m) if m == common => ArrowDistance { exponent: common, exact: false },
        Some(m) => ArrowDistance { exponent: m, exact: true },
        // distinct already at level 0
        None => ArrowDistance { exponent: 0, exact: true },
    }
}

// ---------------------------------------------------------------------------
// F-levels
// ---------------------------------------------------------------------------

/// All arrows of F_n in canonical order: the (class, target) pairs sorted,
/// then the infinity point. `f_map[i]` is the index in F_{n-1} of the image
/// of the i-th arrow of this level, when level n−1 exists.
#[derive(Clone, Debug)]
pub struct FLevel {
    pub level: usize,
    pub arrows: Vec<ArrowClass>,
    pub f_map: Option<Vec<usize>>,
}

/// Index of an arrow inside the canonical enumeration of its level.
pub fn arrow_index(ls: &LevelSystem, a: &ArrowClass) -> usize {
    let n = a.level();
    match *a {
        ArrowClass::Infinity { .. } => {
            (0..ls.class_count(n)).map(|c| ls.class_ball(n, c).vertex_count()).sum()
        }
        ArrowClass::Arrow { class, target, .. } => {
            let before: usize =
                (0..class).map(|c| ls.class_ball(n, c).vertex_count()).sum();
            before + target as usize
        }
    }
}

pub fn build_f_level(ls: &LevelSystem, n: usize) -> Result<FLevel> {
    ls.require_saturated(n)?;
    let mut arrows = Vec::new();
    for c in 0..ls.class_count(n) {
        for v in 0..ls.class_ball(n, c).vertex_count() {
            arrows.push(ArrowClass::Arrow { level: n, class: c, target: v as u32 });
        }
    }
    arrows.push(ArrowClass::Infinity { level: n });
    let f_map = if n > 0 && ls.level(n).is_ok() && ls.level(n - 1).is_ok() {
        // map from this level down to n−1, indexed like F_n
        Some(
            arrows
                .iter()
                .map(|a| arrow_index(ls, &project_arrow(ls, a, n - 1)))
                .collect(),
        )
    } else {
        None
    };
    Ok(FLevel { level: n, arrows, f_map })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ArrowDoc {
    Arrow { class: usize, target: u32 },
    Inf { inf: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FLevelDoc {
    pub level: usize,
    pub arrows: Vec<ArrowDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub f_map: Option<Vec<usize>>,
}

impl FLevel {
    pub fn to_doc(&self) -> FLevelDoc {
        FLevelDoc {
            level: self.level,
            arrows: self
                .arrows
                .iter()
                .map(|a| match *a {
                    ArrowClass::Arrow { class, target, .. } => ArrowDoc::Arrow { class, target },
                    ArrowClass::Infinity { level } => ArrowDoc::Inf { inf: level },
                })
                .collect(),
            f_map: self.f_map.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// Transformation groupoid and the quotient map
// ---------------------------------------------------------------------------

/// An arrow of the transformation groupoid at finite precision: a class and
/// an unreduced word. Deliberately not quotiented by the stabilizer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformationArrow {
    pub level: usize,
    pub class: usize,
    pub word: Word,
}

/// The quotient map: traces the word from the class root. Words longer than
/// the level map to the infinity point, which is reported as such rather
/// than silently absorbed.
pub fn q_map(ls: &LevelSystem, t: &TransformationArrow) -> ArrowClass {
    if t.word.len() > t.level {
        return ArrowClass::Infinity { level: t.level };
    }
    let ball = ls.class_ball(t.level, t.class);
    let target = ball
        .trace(0, &t.word)
        .expect("words of length ≤ level trace inside the ball");
    ArrowClass::Arrow { level: t.level, class: t.class, target }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckBlock {
    pub passed: bool,
    pub checked: usize,
    pub skipped: usize,
    pub violations: Vec<String>,
}

impl CheckBlock {
    fn new() -> Self {
        CheckBlock { passed: true, checked: 0, skipped: 0, violations: Vec::new() }
    }

    fn violation(&mut self, msg: String) {
        self.passed = false;
        if self.violations.len() < 16 {
            self.violations.push(msg);
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QuotientReport {
    pub level: usize,
    pub word_budget: usize,
    pub homomorphism: CheckBlock,
    pub surjectivity: CheckBlock,
    pub openness: CheckBlock,
    pub preimage: CheckBlock,
    pub outcome: Outcome,
}

/// Finite-scale checks that the quotient map is a continuous open surjective
/// groupoid homomorphism: (i) q(t·t') = compose(q(t'), q(t)) for word pairs
/// within the precision budget, (ii) surjectivity onto F_n minus infinity,
/// (iii) images of basis sets are unions of basis sets, (iv) preimages of
/// basis sets are unions of basis sets.
pub fn quotient_checks(
    ls: &LevelSystem,
    gens: &GeneratorSystem,
    n: usize,
    word_budget: usize,
) -> Result<QuotientReport> {
    let working = n.max(word_budget);
    for m in 0..=working {
        ls.require_saturated(m)?;
    }
    let words = word_enumerate(gens, word_budget);

    // (i) homomorphism under concatenation
    let mut homomorphism = CheckBlock::new();
    for c in 0..ls.class_count(n) {
        for eta in &words {
            for gamma in &words {
                if eta.len() + gamma.len() > n {
                    homomorphism.skipped += 1;
                    continue;
                }
                homomorphism.checked += 1;
                let b = q_map(ls, &TransformationArrow { level: n, class: c, word: eta.clone() });
                let src = source_of(ls, &b)?;
                let a = q_map(
                    ls,
                    &TransformationArrow { level: src.level, class: src.id, word: gamma.clone() },
                );
                let lhs = compose(ls, &b, &a)?;
                let rhs_full = q_map(
                    ls,
                    &TransformationArrow { level: n, class: c, word: gamma.concat(eta) },
                );
                let rhs = project_arrow(ls, &rhs_full, src.level);
                if lhs != rhs {
                    homomorphism.violation(format!(
                        "class {c}, eta={}, gamma={}: {lhs:?} != {rhs:?}",
                        eta.display(gens),
                        gamma.display(gens)
                    ));
                }
            }
        }
    }

    // (ii) surjectivity onto F_n ∖ {∞}
    let mut surjectivity = CheckBlock::new();
    for c in 0..ls.class_count(n) {
        let ball = ls.class_ball(n, c);
        let parents = ball.parents();
        for v in 0..ball.vertex_count() as u32 {
            surjectivity.checked += 1;
            let w = ball.word_for(v, &parents);
            let hit = q_map(ls, &TransformationArrow { level: n, class: c, word: w });
            if hit != (ArrowClass::Arrow { level: n, class: c, target: v }) {
                surjectivity.violation(format!("class {c} target {v} not reached"));
            }
        }
    }

    // (iii) openness: the image of each basis set V is closed under
    // same-level-M data, M = max(n, l(γ))
    let mut openness = CheckBlock::new();
    let all_arrows: Vec<ArrowClass> = {
        let mut v = Vec::new();
        for c in 0..ls.class_count(working) {
            for t in 0..ls.class_ball(working, c).vertex_count() {
                v.push(ArrowClass::Arrow { level: working, class: c, target: t as u32 });
            }
        }
        v
    };
    for c_n in 0..ls.class_count(n) {
        let members: Vec<usize> = (0..ls.class_count(working))
            .filter(|&cw| ls.e_chain(working, cw, n) == c_n)
            .collect();
        for gamma in &words {
            openness.checked += 1;
            let image: BTreeSet<ArrowClass> = members
                .iter()
                .map(|&cw| {
                    q_map(ls, &TransformationArrow { level: working, class: cw, word: gamma.clone() })
                })
                .collect();
            let m = n.max(gamma.len());
            let image_proj: BTreeSet<ArrowClass> =
                image.iter().map(|a| project_arrow(ls, a, m)).collect();
            for beta in &all_arrows {
                if image_proj.contains(&project_arrow(ls, beta, m)) && !image.contains(beta) {
                    openness.violation(format!(
                        "class {c_n}, gamma={}: {beta:?} shares level-{m} data with the image but is missing",
                        gamma.display(gens)
                    ));
                }
            }
        }
    }

    // (iv) preimages of basis sets U are unions of basis sets V
    let mut preimage = CheckBlock::new();
    for c_n in 0..ls.class_count(n) {
        let members: Vec<usize> = (0..ls.class_count(working))
            .filter(|&cw| ls.e_chain(working, cw, n) == c_n)
            .collect();
        for gamma in words.iter().filter(|g| g.len() <= n) {
            preimage.checked += 1;
            let u_set: BTreeSet<ArrowClass> = members
                .iter()
                .map(|&cw| {
                    q_map(ls, &TransformationArrow { level: working, class: cw, word: gamma.clone() })
                })
                .collect();
            // all transformation arrows mapping into U
            let mut fiber: Vec<(usize, &Word)> = Vec::new();
            for &cw in &members {
                for w in &words {
                    let hit =
                        q_map(ls, &TransformationArrow { level: working, class: cw, word: w.clone() });
                    if u_set.contains(&hit) {
                        fiber.push((cw, w));
                    }
                }
            }
            for &(cw, w) in &fiber {
                let m = n.max(w.len());
                let chain = ls.e_chain(working, cw, m);
                for &cw2 in &members {
                    if ls.e_chain(working, cw2, m) != chain {
                        continue;
                    }
                    if !fiber.contains(&(cw2, w)) {
                        preimage.violation(format!(
                            "class {c_n}, gamma={}, word={}: V-neighbor class {cw2} escapes the preimage",
                            gamma.display(gens),
                            w.display(gens)
                        ));
                    }
                }
            }
        }
    }

    let passed = homomorphism.passed && surjectivity.passed && openness.passed && preimage.passed;
    Ok(QuotientReport {
        level: n,
        word_budget,
        homomorphism,
        surjectivity,
        openness,
        preimage,
        outcome: Outcome::from_bool(passed),
    })
}
