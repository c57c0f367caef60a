//! Exact ground truth: tabular occupancies, transport plans, tabular ICVF
//! values and least-squares fits.

mod fit;
mod tabular;
mod transport;

pub use fit::{theorem1_fit, LinearFit};
pub use tabular::{
    goal_value_iteration, icvf_exact, monte_carlo_icvf, monte_carlo_occupancy, state_occupancy,
    state_pair_occupancy, total_variation, OccupancyResult, TabularMdp, TabularPolicy,
};
pub use transport::{abs_cost_1d, cdf_area_1d, euclidean_cost, wasserstein_lp, TransportPlan, MAX_SUPPORT};
