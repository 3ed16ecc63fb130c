//! Gap-eigenvalue counting: effective operators built from the band-edge
//! data, diagonal bounds, a direct Birman–Schwinger oracle, and the
//! Gaussian-law fit.

pub mod fit;
pub mod gram;
pub mod model;
pub mod nu;
pub mod nystrom;
pub mod oracle;
pub mod perturbation;
pub mod report;

pub use fit::{gaussian_fit, log_grid, GaussianFit};
pub use gram::{adaptive_g2, count_g2, gram_g2, G2Gram};
pub use model::{EdgePoint, EffectiveModel};
pub use nu::{capacity, ent, gaussian_rate, lattice_step, NuBounds};
pub use nystrom::{count_m1, default_y_nodes, m1_kernel, m1_matrix, M1Count};
pub use oracle::{bs_oracle, BsOracle, OracleCount, OracleQuadrature};
pub use perturbation::{Envelope, PerturbationV, Rectangle};
pub use report::{run_counting, CountRow, CountingOptions, CountingReport, DEFAULT_K_O1};
