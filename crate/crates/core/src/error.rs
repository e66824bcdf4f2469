use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("pole at lambda = 0: family has a coefficient at k = {k_min}")]
    Pole { k_min: i32 },

    #[error("singular gauge at grid point ({i}, {j}): |det| = {det:e}")]
    SingularGauge { i: usize, j: usize, det: f64 },

    #[error("winding number indeterminate: |det g| = {0:e} on the unit circle")]
    IndeterminateWinding(f64),

    #[error("winding number varies over the grid: {0} vs {1}")]
    NonConstantWinding(i64, i64),

    #[error("no constant solution exists for target {0}")]
    NoConstantSolution(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("solution blew up at x = {achieved} before reaching x = {requested}")]
    PartialSolution { achieved: f64, requested: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("Higgs field vanishes at grid point ({i}, {j}) (branch point)")]
    ZeroLocus { i: usize, j: usize },

    #[error("family is not twistable: coefficient k = {k} has sup-norm {norm:e}")]
    NotTwistable { k: i32, norm: f64 },

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("invalid section lift: {0}")]
    InvalidLift(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("flatness violated: transport mismatch {0:e}")]
    FlatnessViolation(f64),

    #[error("ill-conditioned frame (condition number {0:e})")]
    IllConditioned(f64),

    #[error("degenerate surface: {0}")]
    DegenerateSurface(String),

    #[error("mean curvature sphere drops rank at grid point ({i}, {j})")]
    Rank { i: usize, j: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
