//! Seizure-forecasting pipeline stages: ingest → preprocess → GAN
//! augmentation → classifier protocol → evaluation statistics.

pub mod cesp;
pub mod dcgan;
pub mod evalstat;
pub mod ingest;
pub mod preprocess;
pub mod sieve;
pub mod toycorpus;
pub mod types;
pub mod wire;
