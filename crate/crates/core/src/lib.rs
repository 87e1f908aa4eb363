pub mod rng;
pub mod spectral;
pub mod bayes_linear;
pub mod nn;
pub mod measures;
pub mod experiments;
pub mod cli;
