pub mod acoustics;
pub mod cli;
pub mod geometry;
pub mod registration;
pub mod ssm;
