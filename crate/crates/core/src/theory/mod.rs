//! Extended-state analysis: transition matrices, second-moment matrix `Q`,
//! noise moments and the steady-state mean-square error.

pub mod kron;
pub mod noise;
pub mod qmatrix;
pub mod spectral;
pub mod steady;
pub mod surrogate;
pub mod transition;

pub use kron::{block_kronecker, bvec, bvec_inv};
pub use noise::{noise_moments, NoiseMoments, NoiseScales};
pub use qmatrix::{build_q_closed_form, build_q_monte_carlo, participation_moments, QConstruction, QMatrix};
pub use spectral::{block_row_sum_residual, check_spectral_properties, SpectralReport};
pub use steady::{
    initial_deviation, steady_state_mse, InitialDeviation, SteadyStateAnalysis, TheoryOptions, TheoryReport,
};
pub use surrogate::{surrogate_mse, SurrogateEstimate};
pub use transition::{extended_optimum, extended_state, mean_limit, mean_transition, sample_transition, MeanLimit, MeanTransition};
