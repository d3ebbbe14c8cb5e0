//! Soft-body head simulation with a tendon-rigged jaw and a spoon
//! bite-transfer evaluation harness.

pub mod bite;
pub mod contact;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod numfmt;
pub mod par;
pub mod skeleton;
pub mod skinning;
pub mod harness;
