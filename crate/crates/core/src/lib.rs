//! Exact sampling from fixed-size determinantal point processes.
//!
//! The k-DPP sampler combines three pieces:
//!
//! * [`bless`] builds a weighted Nyström dictionary by doubling the scale
//!   `alpha`, and brackets the scale at which `k` is the most likely DPP size;
//! * [`alpha_sampler`] draws exact `DPP(alpha L)` samples by rejection from a
//!   uniform intermediate sample, computing marginals only for the items it
//!   touches;
//! * [`driver`] binary-searches `alpha` and then rejects samples until one
//!   has exactly `k` items.
//!
//! Everything numerical is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the common `f64` case.

pub mod alpha_sampler;
pub mod benchmark;
pub mod bless;
pub mod data;
pub mod dictionary;
pub mod dpp_exact;
pub mod error;
pub mod driver;
pub mod kernel;
pub mod linalg;
pub mod oracle;
pub mod poisson_binomial;
pub mod rng;
pub mod scalar;
pub mod synthetic;
pub mod validation;

pub use alpha_sampler::{AlphaSampler, AlphaSamplerConfig, Backend, IntermediateSample, SampleTrace};
pub use data::Points;
pub use dictionary::{Dictionary, DictionaryCore, MarginalCache};
pub use error::{KdppError, Result};
pub use kernel::{KernelFunction, KernelSource};
pub use linalg::Matrix;
pub use poisson_binomial::SizeDistribution;
pub use rng::RandomStream;
pub use scalar::Scalar;
pub use bless::{BlessConfig, FinalOversampling, SearchInterval};
pub use driver::{sample_kdpp, BinarySearchConfig, KdppConfig, KdppResult, KdppSampler, RChoice};

pub type KernelSourceF64 = KernelSource<f64>;
pub type KernelSourceF32 = KernelSource<f32>;
pub type PointsF64 = Points<f64>;
pub type PointsF32 = Points<f32>;
pub type MatrixF64 = Matrix<f64>;
pub type MatrixF32 = Matrix<f32>;
pub type DictionaryF64 = Dictionary<f64>;
pub type DictionaryF32 = Dictionary<f32>;
pub type AlphaSamplerConfigF64 = AlphaSamplerConfig<f64>;
pub type AlphaSamplerConfigF32 = AlphaSamplerConfig<f32>;
pub type KdppSamplerF64<'a> = KdppSampler<'a, f64>;
pub type KdppSamplerF32<'a> = KdppSampler<'a, f32>;
