//! Rényi differential privacy accounting.

mod data_dependent;
mod normal;
mod rdp;
mod sampled;

pub use data_dependent::{
    data_dependent_rdp, data_dependent_rdp_orders, likely_outcome, outcome_probability,
    DataDependentRdp, MuSearch,
};
pub use normal::std_normal_cdf;
pub use rdp::{
    budget_schedule, epsilon_after, gaussian_rdp, rdp_to_dp, LedgerEvent, LedgerRecord,
    Mechanism, OrderGrid, PrivacyLedger, Track,
};
pub use sampled::sampled_gaussian_rdp;
