use crate::lattice::Site;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty window [{lo}, {hi}]")]
    EmptyWindow { lo: Site, hi: Site },

    #[error("window mismatch: [{0}, {1}] vs [{2}, {3}]")]
    WindowMismatch(Site, Site, Site, Site),

    #[error("site {0} lies outside the window")]
    OutsideWindow(Site),

    #[error("rate {0} outside (0, 1]")]
    RateOutOfRange(f64),

    #[error("defect rate {rate} at site {site} is below the infimum c = {c}")]
    RateBelowInfimum { site: Site, rate: f64, c: f64 },

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid rate function: {0}")]
    InvalidRateFunction(String),

    #[error("fugacity {beta} must be below {limit}")]
    FugacityTooLarge { beta: f64, limit: f64 },

    #[error("critical fugacity c must be positive (got {0})")]
    NonPositiveCritical(f64),

    #[error("critical density is infinite")]
    InfiniteCriticalDensity,

    #[error("density {rho} is not below the critical density {rho_c}")]
    SupercriticalDensity { rho: f64, rho_c: f64 },

    #[error("density {rho} outside the tabulated range [0, {max}]")]
    DensityOutOfRange { rho: f64, max: f64 },

    #[error("no typical site: {0}")]
    NoTypicalSite(String),

    #[error("jump from {from} to {to} leaves the window under frozen boundaries")]
    BoundaryViolation { from: Site, to: Site },

    #[error("configuration has infinite occupancy at site {0}")]
    InfiniteOccupancy(Site),

    #[error("window too small: need [{need_lo}, {need_hi}], have [{have_lo}, {have_hi}]")]
    WindowTooSmall {
        need_lo: Site,
        need_hi: Site,
        have_lo: Site,
        have_hi: Site,
    },

    #[error("profile not locally flat at u = {u}: oscillation {oscillation}")]
    NotLocallyFlat { u: f64, oscillation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed record: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
