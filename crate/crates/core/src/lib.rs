//! Finite-precision machinery for group actions on Schreier graphs: canonical
//! ball classification, the level sets of the associated groupoid, the
//! local-kernel *-algebra with its groupoid-function dictionary, truncated
//! regular representations with certified norm bounds, and local property A
//! witness checking.
//!
//! ```
//! use urskit_core::{classify, load_action, ActionConfig, ClassifyParams};
//! use urskit_core::kernel::LocalKernel;
//! use urskit_core::repr;
//!
//! let oracle = load_action(&ActionConfig::Integers)?;
//! let cls = classify(&oracle, &ClassifyParams::doubling(2, 6))?;
//! assert_eq!(cls.ls.class_count(2), 1); // the line is vertex transitive
//!
//! let adjacency = LocalKernel::adjacency(&cls.ls)?;
//! let est = repr::norm_estimate(&cls.ls, &oracle, &adjacency, 30, 1e-9, 50_000)?;
//! assert!(est.lower <= 2.0 && est.upper_schur == 2.0);
//! # Ok::<(), urskit_core::UrsError>(())
//! ```

pub mod action;
pub mod ball;
pub mod dot;
pub mod error;
pub mod exact;
pub mod groupoid;
pub mod kernel;
pub mod propa;
pub mod report;
pub mod repr;

pub use action::{
    grigorchuk_config, grigorchuk_line_config, invert_word, load_action, two_cycle_config,
    word_enumerate, ActionConfig, ActionOracle, GeneratorSystem, Vertex, Word,
};
pub use ball::{
    ball_type, base_independence_check, classify, isotropy_scan, restrict_type, urs_repetitivity,
    BallType, Classification, ClassifyParams, ConcreteBall, Level, LevelSystem, SaturationPolicy,
    WindowSpec,
};
pub use error::{Result, UrsError};
pub use exact::{Gaussian, Radical, Ratio};
pub use groupoid::{
    arrow_distance, build_f_level, compose, invert_arrow, project_arrow, q_map, quotient_checks,
    range_of, source_of, unit_of, ArrowClass, ClassId, FLevel, TransformationArrow,
};
pub use kernel::{GroupoidFunction, LocalKernel};
pub use propa::{AmenabilityFunctions, PropAWitness};
pub use report::Outcome;
pub use repr::{NormEstimate, TruncatedOperator};
