use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rate table is empty")]
    EmptyRateTable,
    #[error("rate table holds invalid value {value} at k = {index}")]
    InvalidRate { index: usize, value: f64 },
    #[error("degenerate rate: g({0}) = 0 for a nonempty site")]
    DegenerateRate(usize),
    #[error("validation window {window} exceeds table length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("series diverges at fugacity {fugacity}: no convergence within {cap} terms")]
    Divergence { fugacity: f64, cap: usize },
    #[error("density {0} is unreachable for this rate function")]
    DensityUnreachable(f64),
    #[error("invalid jump kernel: {0}")]
    InvalidKernel(String),
    #[error("kernel drift component {0} is not a representable rational")]
    UnsupportedKernel(f64),
    #[error("cannot move a particle from empty site {0}")]
    EmptySource(usize),
    #[error("block of radius {radius} does not fit in a torus of side {side}")]
    BlockExceedsTorus { radius: usize, side: usize },
    #[error("torus mismatch: expected {expected}, found {found}")]
    TorusMismatch { expected: String, found: String },
    #[error("absorbing state: total jump rate is zero")]
    Absorbing,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("profile gives nonpositive density {density} at site {site}")]
    NegativeDensity { site: usize, density: f64 },
    #[error("profile is not constant along the drift: modes {0:?} fail")]
    NotDriftOrthogonal(Vec<usize>),
    #[error("CFL violated: time step {dt} exceeds limit {limit}")]
    Cfl { dt: f64, limit: f64 },
    #[error("negative density {value} at grid point {index} after {steps} steps")]
    BlowUp { index: usize, value: f64, steps: usize },
    #[error("state space has {count} states, above the cap {cap}")]
    TooLarge { count: u128, cap: usize },
    #[error("state graph of the block generator is disconnected")]
    Disconnected,
    #[error("cutoff inconsistent: j = {j} exceeds M * sites = {limit}")]
    CutoffInconsistent { j: usize, limit: f64 },
    #[error("threshold {threshold} is not above the mean density {mean}")]
    NotATail { threshold: f64, mean: f64 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
