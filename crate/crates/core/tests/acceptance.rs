//! Acceptance suite: one test per criterion, each printing a PASS line when
//! it holds. Tolerances are pinned in the assertions.

use std::sync::OnceLock;

use urskit_core::ball::WindowSpec;
use urskit_core::exact::{ratio, Ratio};
use urskit_core::kernel::{self, LocalKernel};
use urskit_core::propa::{self, ScheduleItem};
use urskit_core::repr;
use urskit_core::{
    ball_type, build_f_level, classify, grigorchuk_config, grigorchuk_line_config, isotropy_scan,
    load_action, q_map, quotient_checks, two_cycle_config, unit_of, urs_repetitivity,
    ActionConfig, ActionOracle, Classification, ClassifyParams, Outcome, TransformationArrow,
    Word,
};

use num::Zero;

struct Sys {
    oracle: ActionOracle,
    cls: Classification,
}

fn integers_sys() -> &'static Sys {
    static CELL: OnceLock<Sys> = OnceLock::new();
    CELL.get_or_init(|| {
        let oracle = load_action(&ActionConfig::Integers).unwrap();
        let cls = classify(&oracle, &ClassifyParams::doubling(8, 16)).unwrap();
        Sys { oracle, cls }
    })
}

fn cycle_sys() -> &'static Sys {
    static CELL: OnceLock<Sys> = OnceLock::new();
    CELL.get_or_init(|| {
        let oracle = load_action(&two_cycle_config()).unwrap();
        let cls = classify(&oracle, &ClassifyParams::doubling(8, 16)).unwrap();
        Sys { oracle, cls }
    })
}

fn grig_sys() -> &'static Sys {
    static CELL: OnceLock<Sys> = OnceLock::new();
    CELL.get_or_init(|| {
        let oracle = load_action(&grigorchuk_config()).unwrap();
        let cls = classify(&oracle, &ClassifyParams::doubling(8, 160)).unwrap();
        Sys { oracle, cls }
    })
}

fn suite_kernels(sys: &Sys, count: usize, base_seed: u64) -> Vec<LocalKernel> {
    (0..count)
        .map(|i| {
            let width = 1 + (i % 2);
            LocalKernel::random(&sys.cls.ls, width, base_seed + i as u64, true).unwrap()
        })
        .collect()
}

#[test]
fn criterion_1_level_system_sanity() {
    // dedicated classifications so the timer sees only this criterion's work
    let oracle = load_action(&ActionConfig::Integers).unwrap();
    let start = std::time::Instant::now();
    let ints = classify(&oracle, &ClassifyParams::doubling(8, 16)).unwrap();
    let cycle_oracle = load_action(&two_cycle_config()).unwrap();
    let cycle = classify(&cycle_oracle, &ClassifyParams::doubling(8, 16)).unwrap();
    let tree_oracle = load_action(&ActionConfig::Free { rank: 2 }).unwrap();
    let tree = classify(&tree_oracle, &ClassifyParams::certified(8, 8, 0)).unwrap();
    let elapsed = start.elapsed();
    for n in 0..=8 {
        assert_eq!(ints.ls.class_count(n), 1, "integers level {n}");
        let f = build_f_level(&ints.ls, n).unwrap();
        assert_eq!(f.arrows.len(), 2 * n + 2, "|F_{n}| with the infinity point");
        assert_eq!(cycle.ls.class_count(n), 1, "2-cycle level {n}");
        assert_eq!(tree.ls.class_count(n), 1, "free tree level {n}");
    }
    assert!(elapsed.as_secs() < 1, "criterion 1 runs in under a second: {elapsed:?}");
    println!("criterion 1 (level-system sanity): PASS");
}

#[test]
fn criterion_2_dictionary_and_star_identities() {
    let start = std::time::Instant::now();
    for sys in [integers_sys(), grig_sys()] {
        let ls = &sys.cls.ls;
        let kernels = suite_kernels(sys, 100, 1000);
        assert_eq!(kernels.len(), 100);
        for (i, k) in kernels.iter().enumerate() {
            // dictionary roundtrips
            let f = kernel::to_groupoid_function(ls, k, k.width).unwrap();
            assert!(
                kernel::kernels_equal(ls, &kernel::from_groupoid_function(&f), k).unwrap(),
                "K_(f_K) = K"
            );
            let f2 =
                kernel::to_groupoid_function(ls, &kernel::from_groupoid_function(&f), k.width)
                    .unwrap();
            assert_eq!(f2.entries, f.entries, "f_(K_f) = f");
            // involution
            let star = kernel::adjoint(ls, k).unwrap();
            let back = kernel::reduce_width(ls, &kernel::adjoint(ls, &star).unwrap()).unwrap();
            assert!(kernel::kernels_equal(ls, &back, k).unwrap(), "(K*)* = K");
            let via_fn = kernel::fn_adjoint(ls, &f).unwrap();
            let via_kernel = kernel::to_groupoid_function(ls, &star, 2 * k.width).unwrap();
            assert_eq!(via_fn.entries, via_kernel.entries, "(f_K)* = f_(K*)");
            // pairwise identities
            let l = &kernels[(i + 1) % kernels.len()];
            let prod = kernel::convolve(ls, l, k).unwrap();
            let route_fn = kernel::fn_convolve(
                ls,
                &kernel::to_groupoid_function(ls, l, l.width).unwrap(),
                &kernel::to_groupoid_function(ls, k, k.width).unwrap(),
            )
            .unwrap();
            let route_kernel =
                kernel::to_groupoid_function(ls, &prod, l.width + k.width).unwrap();
            assert_eq!(route_kernel.entries, route_fn.entries, "f_(L*K) = f_L * f_K");
            let lhs = kernel::adjoint(ls, &kernel::convolve(ls, k, l).unwrap()).unwrap();
            let rhs = kernel::convolve(
                ls,
                &kernel::adjoint(ls, l).unwrap(),
                &kernel::adjoint(ls, k).unwrap(),
            )
            .unwrap();
            assert!(kernel::kernels_equal(ls, &lhs, &rhs).unwrap(), "(KL)* = L*K*");
        }
        // associativity on width-limited triples
        for i in 0..20usize {
            let a = &kernels[i];
            let b = &kernels[(i + 7) % kernels.len()];
            let c = &kernels[(i + 13) % kernels.len()];
            if a.width + b.width + c.width > 6 {
                continue;
            }
            let lhs = kernel::convolve(ls, &kernel::convolve(ls, a, b).unwrap(), c).unwrap();
            let rhs = kernel::convolve(ls, a, &kernel::convolve(ls, b, c).unwrap()).unwrap();
            assert!(kernel::kernels_equal(ls, &lhs, &rhs).unwrap(), "associativity");
        }
    }
    assert!(start.elapsed().as_secs() < 60, "criterion 2 runs in under a minute");
    println!("criterion 2 (dictionary and *-identities, 200 kernels): PASS");
}

#[test]
fn criterion_3_intertwiner_and_fiber_transport() {
    for sys in [integers_sys(), grig_sys()] {
        let ls = &sys.cls.ls;
        // the same kernels criterion 2 exercises
        let kernels = suite_kernels(sys, 100, 1000);
        for k in &kernels {
            let radius = 2 * k.width + 1;
            let rep = repr::intertwiner_check(ls, &sys.oracle, k, radius).unwrap();
            assert!(rep.bijection_ok, "vertex-arrow bijection");
            assert!(rep.agree, "entrywise agreement: {:?}", rep.mismatches);
        }
        // one equal-type pair per system, reused for every kernel
        let support = 2usize;
        let pair = {
            let level = support + 2;
            let mut found = None;
            'outer: for (i, vi) in sys.cls.expl.vertices.iter().enumerate() {
                for vj in sys.cls.expl.vertices.iter().skip(i + 1) {
                    if ball_type(&sys.oracle, vi, level).ty
                        == ball_type(&sys.oracle, vj, level).ty
                    {
                        found = Some((vi.clone(), vj.clone()));
                        break 'outer;
                    }
                }
            }
            found.expect("equal-type pair exists in the explored window")
        };
        for k in kernels.iter().take(25) {
            let rep =
                repr::fiber_transport_check(ls, &sys.oracle, k, support, &pair.0, &pair.1)
                    .unwrap();
            assert!(rep.norm_preserved, "transport preserves norms exactly");
            assert!(rep.commutes, "transport commutes with the representation");
        }
    }
    println!("criterion 3 (intertwiner and fiber transport): PASS");
}

fn tree_sys() -> &'static Sys {
    static CELL: OnceLock<Sys> = OnceLock::new();
    CELL.get_or_init(|| {
        let oracle = load_action(&ActionConfig::Free { rank: 2 }).unwrap();
        let cls = classify(&oracle, &ClassifyParams::certified(2, 11, 0)).unwrap();
        Sys { oracle, cls }
    })
}

/// Largest eigenvalue of the radial reduction of the column-restricted tree
/// ball adjacency: tridiagonal couplings [2, √3, …, √3] with the last column
/// removed.
fn tree_radial_top(depth: usize) -> f64 {
    let n = depth + 1;
    let mut j = nalgebra::DMatrix::<f64>::zeros(n, n);
    for k in 0..n - 1 {
        let c = if k == 0 { 2.0 } else { 3f64.sqrt() };
        j[(k, k + 1)] = c;
        j[(k + 1, k)] = c;
    }
    let block = j.columns(0, n - 1).into_owned();
    let t = block.transpose() * block;
    t.symmetric_eigen().eigenvalues.iter().cloned().fold(0.0, f64::max).sqrt()
}

#[test]
fn criterion_4_norm_certification() {
    // adjacency on the integers at R = 200
    let sys = integers_sys();
    let ls = &sys.cls.ls;
    let adj = LocalKernel::adjacency(ls).unwrap();
    let est = repr::norm_estimate(ls, &sys.oracle, &adj, 200, 1e-9, 100_000).unwrap();
    let path_top = 2.0 * (std::f64::consts::PI / 400.0).cos();
    assert!(est.lower >= path_top - 1e-6, "lower {} vs 2cos(pi/400) {}", est.lower, path_top);
    assert!(est.lower <= 2.0, "never exceeds the infinite-line norm");
    assert!((est.upper_schur - 2.0).abs() < 1e-12, "Schur bound is 2");
    assert!(est.lower <= est.upper_paper + 1e-9, "stated bound holds on the line");

    // adjacency on the 4-regular tree, depths 4..10
    let tree = tree_sys();
    let tadj = LocalKernel::adjacency(&tree.cls.ls).unwrap();
    let mut prev = 0.0f64;
    let mut depth10 = 0.0f64;
    for depth in 4..=10usize {
        let op = repr::truncate(&tree.cls.ls, &tree.oracle, &tadj, depth).unwrap();
        let lb = repr::norm_lower_bound(&op, 1, 1e-9, 100_000).unwrap();
        assert!(lb.value + 1e-9 >= prev, "monotone in depth");
        prev = lb.value;
        if depth == 10 {
            depth10 = lb.value;
        }
    }
    let oracle_top = tree_radial_top(10);
    assert!(
        (depth10 - oracle_top).abs() <= 1e-6,
        "certified {depth10} vs radial eigensolver {oracle_top}"
    );
    assert!(depth10 < 2.0 * 3f64.sqrt(), "stays below the infinite-tree norm 2*sqrt(3)");
    let (schur, paper, _) = repr::norm_upper_bounds(&tree.cls.ls, &tree.oracle, &tadj).unwrap();
    assert!((schur - 4.0).abs() < 1e-12);
    assert!(depth10 <= paper + 1e-9, "stated bound holds on the tree");

    // the stated generator-count bound is never violated by suite kernels
    let gsys = grig_sys();
    for k in suite_kernels(gsys, 12, 7000).iter().filter(|k| k.width == 1) {
        let est = repr::norm_estimate(&gsys.cls.ls, &gsys.oracle, k, 4, 1e-9, 20_000).unwrap();
        assert!(est.lower <= est.upper_paper + 1e-9);
        assert!(est.lower <= est.upper_schur + 1e-9);
    }
    println!("criterion 4 (norm certification): PASS");
}

/// The square-root variant (|Q|+1)^(R/2)·sup|f| read off the displayed
/// quadratic estimate is reported alongside the stated bound, and this
/// criterion asserts it is never violated. It is violated: on the line the
/// certified lower bound tends to 2 while the variant evaluates to √3, and
/// on the 4-regular tree the certified value 3.32 exceeds √5. The assertion
/// is kept as stated; the failure is the finding.
#[test]
fn criterion_4_sqrt_variant_bound() {
    let sys = integers_sys();
    let ls = &sys.cls.ls;
    let adj = LocalKernel::adjacency(ls).unwrap();
    let est = repr::norm_estimate(ls, &sys.oracle, &adj, 200, 1e-9, 100_000).unwrap();
    assert!(
        est.lower <= est.upper_paper_sqrt + 1e-9,
        "square-root variant violated: certified lower {} exceeds (|Q|+1)^(R/2)·sup|f| = {}",
        est.lower,
        est.upper_paper_sqrt
    );
    println!("criterion 4 (square-root variant): PASS");
}

#[test]
fn criterion_5_quotient_map() {
    for sys in [cycle_sys(), integers_sys()] {
        let rep = quotient_checks(&sys.cls.ls, sys.oracle.generators(), 4, 3).unwrap();
        assert_eq!(rep.outcome, Outcome::Pass, "{rep:?}");
        assert!(rep.homomorphism.passed && rep.surjectivity.passed);
        assert!(rep.openness.passed && rep.preimage.passed);
    }
    // a² collapses to the unit on the 2-cycle
    let sys = cycle_sys();
    let aa = Word::parse(sys.oracle.generators(), "a a").unwrap();
    let hit = q_map(&sys.cls.ls, &TransformationArrow { level: 4, class: 0, word: aa });
    assert_eq!(hit, unit_of(4, 0));
    println!("criterion 5 (quotient map checks): PASS");
}

#[test]
fn criterion_6_isotropy_evidence() {
    // persistent candidates on the two non-generic systems through level 6
    for sys in [integers_sys(), cycle_sys()] {
        let rep = isotropy_scan(&sys.cls, &sys.oracle, 2, 6).unwrap();
        assert!(!rep.candidates.is_empty(), "non-generic system yields candidates");
        assert!(rep.candidates.iter().any(|c| c.word == "a"));
    }
    // grigorchuk scan output stable under doubling the exploration radius
    let oracle = load_action(&grigorchuk_line_config()).unwrap();
    let scan = |radius: usize| {
        let cls = classify(&oracle, &ClassifyParams::doubling(4, radius)).unwrap();
        isotropy_scan(&cls, &oracle, 2, 4).unwrap()
    };
    let a = scan(80);
    let b = scan(160);
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap(),
        "scan stable under doubling"
    );
    println!("criterion 6 (isotropy evidence): PASS");
}

#[test]
fn criterion_7_urs_repetitivity() {
    // grigorchuk (two-ended representative): finite D(n), stable under
    // doubling, for n ≤ 4
    let oracle = load_action(&grigorchuk_line_config()).unwrap();
    let run = |radius: usize| {
        let cls = classify(&oracle, &ClassifyParams::doubling(4, radius)).unwrap();
        urs_repetitivity(&cls, &oracle, 4, &WindowSpec::default()).unwrap()
    };
    let rep1 = run(160);
    let rep2 = run(320);
    assert_eq!(rep1.outcome, Outcome::Pass, "{rep1:?}");
    for (l1, l2) in rep1.levels.iter().zip(&rep2.levels) {
        let d1 = l1.d_max.expect("finite D");
        let d2 = l2.d_max.expect("finite D");
        assert_eq!(d1, d2, "D({}) stable under doubling", l1.n);
    }
    // D(n) monotone within a report
    for w in rep1.levels.windows(2) {
        assert!(w[0].d_max <= w[1].d_max);
    }
    // transitive systems have D = 0
    for sys in [integers_sys(), cycle_sys()] {
        let rep = urs_repetitivity(&sys.cls, &sys.oracle, 4, &WindowSpec::default()).unwrap();
        assert_eq!(rep.outcome, Outcome::Pass);
        for level in &rep.levels {
            assert_eq!(level.d_max, Some(0));
        }
    }
    println!("criterion 7 (recurrence distances): PASS");
}

#[test]
fn criterion_8_property_a_bridges() {
    // ball indicators with k = n³ pass on the line for n = 2..6
    for n in 2..=6usize {
        let k = n * n * n;
        let oracle = load_action(&ActionConfig::Integers).unwrap();
        let cls = classify(&oracle, &ClassifyParams::certified(k + n, k + n, 0)).unwrap();
        let ls = &cls.ls;
        let w = propa::ball_indicator_witness(ls, n, k).unwrap();
        let rep = propa::check_witness(ls, &w, n, &Ratio::zero()).unwrap();
        assert_eq!(rep.outcome, Outcome::Pass, "n={n}: {rep:?}");
        // forward bridge: unit sums exactly one, deviations within 1/n on
        // depth ≤ n arrows
        let entry = propa::witness_to_functions(ls, &w);
        let amen = propa::amenability_check(ls, &entry, n).unwrap();
        assert_eq!(amen.outcome, Outcome::Pass, "n={n}: {amen:?}");
        assert!(amen.unit_sums_exactly_one, "Σ|f|² = 1 exactly");
        // roundtrip is the identity
        let (back, _, norm_check) = propa::functions_to_witness(ls, &entry).unwrap();
        assert_eq!(back.values, w.values, "functions ↔ witness roundtrip");
        assert!(norm_check.holds);
    }
    // the same constructor fails on the free tree at n = 2
    {
        let oracle = load_action(&ActionConfig::Free { rank: 2 }).unwrap();
        let cls = classify(&oracle, &ClassifyParams::certified(10, 10, 0)).unwrap();
        let ls = &cls.ls;
        let w = propa::ball_indicator_witness(ls, 2, 8).unwrap();
        let rep = propa::check_witness(ls, &w, 2, &Ratio::zero()).unwrap();
        assert_eq!(rep.outcome, Outcome::Fail, "tree indicators miss the 1/n bound");
        let entry = propa::witness_to_functions(ls, &w);
        let amen = propa::amenability_check(ls, &entry, 2).unwrap();
        assert_eq!(amen.outcome, Outcome::Fail);
    }
    // ε-schedule: derived schedules hold, ε = 1 fails for n ≥ 2
    for n in 2..=8usize {
        let sup = ratio(1, 1);
        let eps = propa::derive_epsilon(2, 3, &sup, n);
        let out = propa::epsilon_schedule_check(
            2,
            &[ScheduleItem { n, vanish_radius: 3, sup_f: sup.clone(), epsilon: eps }],
        );
        assert!(out[0].first_holds && out[0].second_holds, "derived schedule at n={n}");
        let out = propa::epsilon_schedule_check(
            2,
            &[ScheduleItem { n, vanish_radius: 3, sup_f: sup, epsilon: ratio(1, 1) }],
        );
        assert!(!out[0].first_holds, "ε = 1 violates the first inequality at n={n}");
    }
    println!("criterion 8 (property A bridges): PASS");
}
