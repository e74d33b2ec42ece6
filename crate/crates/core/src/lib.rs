//! Certificates and falsification for annular short-time stability of
//! generalized Persidskii systems and continuous-time recurrent networks.

pub mod linalg;
pub mod lmi;
pub mod lyapunov;
pub mod model;
pub mod certify;
pub mod cli;
pub mod rnn;
pub mod simulate;
