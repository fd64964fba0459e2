pub mod integrator;
pub mod norms;
pub mod random_measure;
pub mod regimes;
pub mod montecarlo;
pub mod oracle;
pub mod cli;
