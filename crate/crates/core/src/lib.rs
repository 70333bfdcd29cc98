//! Desk-scale laboratory for energy-latency ("sponge") attacks on neural
//! inference.
//!
//! The crate bundles everything needed to study worst-case inference cost on
//! a desk: instrumented toy NLP and vision pipelines whose forward passes
//! emit an [`energy::ActivationTrace`], a deterministic accelerator energy
//! simulator ([`energy::simulate_energy`]), sponge-input search by genetic
//! algorithm and L-BFGS ([`attacks`]), rank statistics and a measurement
//! harness ([`stats`], [`measure`]), and a cutoff-threshold guard
//! ([`defense`]).
//!
//! Everything here is pure computation over `alloc` containers; the crate is
//! `no_std`-compatible so the search and simulation kernels can run anywhere.
//! File formats, the mock translation service, and the CLI live in the
//! companion `sponge-lab` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attacks;
pub mod corpus;
pub mod defense;
pub mod energy;
pub mod linalg;
pub mod measure;
pub mod nlp;
pub mod stats;
pub mod vision;
pub mod zoo;

mod math;

/// Deterministic RNG used across the crate; every stochastic routine takes
/// one of these (or a seed) so runs reproduce bit-for-bit.
pub type SpongeRng = rand_chacha::ChaCha8Rng;

/// Build the crate-wide RNG from a bare seed.
pub fn rng_from_seed(seed: u64) -> SpongeRng {
    use rand::SeedableRng;
    SpongeRng::seed_from_u64(seed)
}
