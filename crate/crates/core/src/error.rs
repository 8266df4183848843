use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("fields live on different grids")]
    GridMismatch,

    /// The caustic monitor `min(1 + t * lambda_min(D^2 phi))` dropped below its threshold.
    #[error("caustic monitor {monitor:.4} below threshold; characteristics cross near t = {critical_time:.6}")]
    Horizon { monitor: f64, critical_time: f64 },

    #[error("reference certificate {certificate:.3e} above tolerance {tolerance:.3e} after {substeps} substeps")]
    ReferenceQuality {
        certificate: f64,
        tolerance: f64,
        substeps: usize,
    },

    #[error("phase field has imaginary residue {0:.3e}")]
    ComplexPhase(f64),

    #[error("analytic weight exponent {0:.1} exceeds the double precision ceiling")]
    NormOverflow(f64),

    #[error("trajectory mismatch: {0}")]
    Trajectory(String),

    #[error("empty trace")]
    EmptyTrace,
}
