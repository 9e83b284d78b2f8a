use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report.
///
/// Variant names double as the machine-readable error categories printed by
/// the command-line frontend, see [`Error::category`].
#[derive(Debug, Error)]
pub enum Error {
    // implicit surfaces
    #[error("faithful denominator vanishes ({value:e})")]
    DegenerateDenominator { value: f64 },
    #[error("side {side}: {kind} ribbons cannot be offset exactly")]
    UnsupportedOffset { side: usize, kind: &'static str },
    #[error("gradient magnitude {norm:e} is too small for curvature evaluation")]
    SingularGradient { norm: f64 },
    #[error("invalid I-patch definition: {0}")]
    InvalidPatch(String),
    #[error("bounding surfaces {first} and {second} coincide")]
    CoincidentBoundings { first: usize, second: usize },

    // meshes
    #[error("{path}: {message}")]
    ParseError { path: PathBuf, message: String },
    #[error("mesh has no triangles")]
    EmptyMesh,
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("vertex {0} has no incident triangle")]
    IsolatedVertex(usize),
    #[error("surface does not intersect the mesh between the given points")]
    NoIntersection,
    #[error("{count} intersection chains are equally close to the endpoints")]
    AmbiguousChain { count: usize },
    #[error("no mesh vertex lies inside the bounding surfaces")]
    EmptySelection,
    #[error("point is {distance:e} away from the open mesh boundary")]
    NotOnBoundary { distance: f64 },
    #[error("mesh has no open boundary")]
    ClosedMesh,
    #[error("polyline span between identical points")]
    DegenerateSpan,

    // curve network
    #[error("network schema: {0}")]
    SchemaError(String),
    #[error("face {face}: loop does not close at position {position}")]
    OpenLoop { face: i64, position: usize },
    #[error("edge {edge} is used by {count} faces")]
    NonManifoldEdge { edge: i64, count: usize },
    #[error("edge {0} is already split")]
    AlreadySplit(usize),
    #[error("center point is {distance:e} away from the mesh")]
    CenterOffMesh { distance: f64 },
    #[error("inconsistent loop: {0}")]
    InconsistentLoop(String),

    // ribbons
    #[error("averaged corner normal is parallel to the chord")]
    DegenerateNormal,
    #[error("prescribed point lies on the chord line")]
    CollinearThrough,
    #[error("boundary tangent is parallel to the surface normal at corner {0}")]
    DegenerateTangent(usize),
    #[error("no Liming surface fits the target (rms {liming_rms:e} vs I-loft {iloft_rms:e})")]
    InfeasibleLiming { liming_rms: f64, iloft_rms: f64 },
    #[error("ribbon fit diverged: {0}")]
    FitDiverged(String),

    // patch fitting
    #[error("center point lies on bounding surface {side}")]
    CenterOnBounding { side: usize },
    #[error("objective is not finite at the starting point")]
    NonFiniteObjective,
    #[error("default weights violate the ratio bound (ratio {ratio:.3} > {omega})")]
    AllCandidatesInfeasible { ratio: f64, omega: f64 },

    // refinement
    #[error("refinement stalled: {0}")]
    RefinementStalled(String),

    // tessellation and files
    #[error("field has no zero crossing on the grid")]
    EmptyIsosurface,
    #[error("{count} vertices did not converge onto the surface")]
    PolishFailed { count: usize },
    #[error("{path}: {source}")]
    IoError {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Category name used in CLI error output.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DegenerateDenominator { .. } => "DegenerateDenominator",
            Error::UnsupportedOffset { .. } => "UnsupportedOffset",
            Error::SingularGradient { .. } => "SingularGradient",
            Error::InvalidPatch(_) => "InvalidPatch",
            Error::CoincidentBoundings { .. } => "CoincidentBoundings",
            Error::ParseError { .. } => "ParseError",
            Error::EmptyMesh => "EmptyMesh",
            Error::InvalidMesh(_) => "InvalidMesh",
            Error::IsolatedVertex(_) => "IsolatedVertex",
            Error::NoIntersection => "NoIntersection",
            Error::AmbiguousChain { .. } => "AmbiguousChain",
            Error::EmptySelection => "EmptySelection",
            Error::NotOnBoundary { .. } => "NotOnBoundary",
            Error::ClosedMesh => "ClosedMesh",
            Error::DegenerateSpan => "DegenerateSpan",
            Error::SchemaError(_) => "SchemaError",
            Error::OpenLoop { .. } => "OpenLoop",
            Error::NonManifoldEdge { .. } => "NonManifoldEdge",
            Error::AlreadySplit(_) => "AlreadySplit",
            Error::CenterOffMesh { .. } => "CenterOffMesh",
            Error::InconsistentLoop(_) => "InconsistentLoop",
            Error::DegenerateNormal => "DegenerateNormal",
            Error::CollinearThrough => "CollinearThrough",
            Error::DegenerateTangent(_) => "DegenerateTangent",
            Error::InfeasibleLiming { .. } => "InfeasibleLiming",
            Error::FitDiverged(_) => "FitDiverged",
            Error::CenterOnBounding { .. } => "CenterOnBounding",
            Error::NonFiniteObjective => "NonFiniteObjective",
            Error::AllCandidatesInfeasible { .. } => "AllCandidatesInfeasible",
            Error::RefinementStalled(_) => "RefinementStalled",
            Error::EmptyIsosurface => "EmptyIsosurface",
            Error::PolishFailed { .. } => "PolishFailed",
            Error::IoError { .. } => "IoError",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoError {
            path: path.into(),
            source,
        }
    }
}
