//! Run-time norm synthesis on a traffic junction.
//!
//! A seeded gridworld with two crossing roads produces collisions; a central
//! normative engine turns them into prohibitions of `Go` over vehicles' local
//! views ([`synthesis`]), arbitrates between norms that would deadlock each
//! other using a utility built from system objectives ([`reasoning`]), scores
//! norms by necessity and effectiveness and refines the norm graph
//! ([`evaluation`]). The [`harness`] runs the fair utility-based strategy
//! against the single-random-agent baseline and writes CSV, text and SVG
//! outputs.

pub mod detection;
pub mod evaluation;
pub mod gridworld;
pub mod harness;
pub mod norms;
pub mod reasoning;
pub mod synthesis;
