//! Post-processing toolkit for retinal OCT B-scan stacks: registration,
//! shadow suppression and layer thickness measurement.

pub mod imaging;
pub mod metrics;
pub mod par;
pub mod registration;
pub mod layers;
pub mod phantom;
pub mod pipeline;
pub mod shadow;
