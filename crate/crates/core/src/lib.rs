//! Non-neural part-affinity-field pipeline for multi-person pose parsing.
//!
//! Ground-truth confidence maps and affinity fields are rendered from a
//! [`Scene`]; parsing detects part candidates, scores candidate limbs with a
//! line integral over the fields, solves one bipartite matching per limb and
//! merges the accepted connections into persons.

pub mod assembly;
pub mod association;
pub mod bench;
pub mod compare;
pub mod detection;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod grid;
pub mod groundtruth;
pub mod io;
pub mod matching;
pub mod scene;
pub mod synth;
pub mod topology;

pub use assembly::{assemble, parse, parse_timed, AssemblyParams, ParseParams, ParseResult, PersonPose};
pub use association::{line_integral, score_connections, ConnectionScore, IntegralParams, Interpolation};
pub use detection::{detect_all, nms_peaks, CandidateSet, NmsParams, PartCandidate};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalConfig, EvalReport};
pub use geometry::{LimbSegment, Point};
pub use grid::{MaskGrid, ScalarGrid, VectorGrid};
pub use groundtruth::{render_all, render_confidence, render_paf, RenderParams};
pub use matching::{MatchResult, Solver};
pub use scene::Scene;
pub use synth::{generate_scene, perturb, NoiseConfig, SceneConfig};
pub use topology::{Preset, Topology, TopologyKind};
