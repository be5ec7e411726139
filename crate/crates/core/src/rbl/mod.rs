//! Recursive Bayesian identification of each unmetered customer's pattern
//! class from the head-of-feeder residuals of the state estimator.

mod identify;
mod posterior;

pub use identify::{
    build_candidates, CandidateSeries, CustomerCandidates, CustomerIdentification, HeadSample, IdentificationFailure,
    IdentificationReport, Identifier, RblConfig, REPORT_SCHEMA_VERSION,
};
pub use posterior::{estimate_phi, update_posterior, Phi, PosteriorState};
