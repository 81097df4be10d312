//! Discrete rotation-equivariant point-cloud recognition.

pub mod rotgroup;
pub mod pointcloud;
pub mod nn;
pub mod backbones;
pub mod equivariance;
pub mod pipeline;
pub mod cli;
