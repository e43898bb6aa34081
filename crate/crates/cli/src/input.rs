use std::path::Path;

use clap::ValueEnum;
use kdpp::data::{read_csv, read_f32bin};
use kdpp::synthetic::{gaussian_mixture, MixtureSpec};
use kdpp::{KernelFunction, KernelSource, Points, Scalar};
use serde::Serialize;

use crate::CliError;

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    Csv,
    F32bin,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Rbf,
    Linear,
    Cosine,
}

pub fn load_file<T: Scalar>(path: &Path, format: DataFormat, header: bool) -> Result<Points<T>, CliError> {
    match format {
        DataFormat::Csv => read_csv(path, header),
        DataFormat::F32bin => read_f32bin(path),
    }
    .map_err(CliError::Ingestion)
}

pub fn synthetic<T: Scalar>(n: usize, seed: u64) -> Result<Points<T>, CliError> {
    if n == 0 {
        return Err(CliError::Usage("--synthetic needs at least one point".into()));
    }
    gaussian_mixture(&MixtureSpec::default(), n, seed).map_err(CliError::Ingestion)
}

pub fn kernel_function<T: Scalar>(kind: KernelKind, sigma: f64) -> Result<KernelFunction<T>, CliError> {
    Ok(match kind {
        KernelKind::Rbf => {
            if !(sigma.is_finite() && sigma > 0.0) {
                return Err(CliError::Usage(format!("--sigma must be positive, got {sigma}")));
            }
            KernelFunction::Rbf { sigma: T::of(sigma) }
        }
        KernelKind::Linear => KernelFunction::Linear,
        KernelKind::Cosine => KernelFunction::Cosine,
    })
}

pub fn kernel_source<T: Scalar>(points: Points<T>, kind: KernelKind, sigma: f64) -> Result<KernelSource<T>, CliError> {
    let f = kernel_function(kind, sigma)?;
    KernelSource::from_features(points, f).map_err(CliError::Ingestion)
}
