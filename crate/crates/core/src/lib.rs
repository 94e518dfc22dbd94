//! Generalized Mallows model for top-k lists.
//!
//! A top-k list strictly orders k items out of a universe and leaves the rest
//! incomparable. The model places mass `exp(-beta * K(tau, center))` on each
//! list, where `K` is a weighted, p-parametrized disagreement count against a
//! center list. This crate provides:
//!
//! - the distance, inversion-vector, and exact-enumeration primitives
//!   ([`types`], [`distance`], [`enumerate`]);
//! - exact sampling via the profile decomposition ([`profile`], [`prim`]);
//! - exact choice probabilities for assortments, with a brute-force
//!   cross-check and an MNL baseline ([`choice`], [`mnl`]);
//! - active learning of the center from observed choices ([`learn`]);
//! - dataset ingestion, evaluation, grid search, and clustering ([`harness`]).
//!
//! All sampling takes a caller-owned RNG; every stochastic entry point is
//! reproducible from a 64-bit seed.

pub mod choice;
pub mod distance;
pub mod enumerate;
mod error;
pub mod harness;
pub mod learn;
pub mod mnl;
pub mod prim;
pub mod profile;
pub mod types;

pub use choice::{
    choice, choice_prob_bruteforce, dypchip, dypchip_precomputed, mixture_choice_prob, pi_bar,
    Assortment, ChoiceDistribution, ChoiceObservation, MixtureModel,
};
pub use distance::kendall_p_distance;
pub use enumerate::{enumerate_all, exact_pmf, ExactPmf, DEFAULT_ENUMERATION_CAP};
pub use error::{Error, Result};
pub use mnl::{mnl_choice_prob, mnl_fit, MnlModel};
pub use prim::{prim_insert_position, prim_sample, sample_fillers, SamplerState};
pub use profile::{
    profile_distribution, profile_f, profile_of, profile_z, sample_profile, Profile,
    ProfileDistribution, DEFAULT_PROFILE_CAP,
};
pub use types::{
    inversion_vectors, unnormalized_mass, validate_topk_list, weighted_displacement,
    InversionVectors, ItemId, TopKGmm, TopKList, Universe,
};
