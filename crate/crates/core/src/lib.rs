pub mod association;
pub mod data;
pub mod error;
pub mod linalg;
pub mod lr;
pub mod optimize;
pub mod pca;
pub mod pipeline;
pub mod polychoric;
pub mod quadrature;
pub mod recode;
pub mod scalar;
pub mod special;
pub mod synth;
pub mod validation;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PcaModelF64 = pca::PcaModel<f64>;
pub type PcaModelF32 = pca::PcaModel<f32>;
pub type ScoreMatrixF64 = pca::ScoreMatrix<f64>;
pub type ScoreMatrixF32 = pca::ScoreMatrix<f32>;
pub type LrModelF64 = lr::LrModel<f64>;
pub type LrModelF32 = lr::LrModel<f32>;
pub type LrResultF64 = lr::LrResult<f64>;
pub type LrResultF32 = lr::LrResult<f32>;
pub type KernelDensityF64 = lr::KernelDensity<f64>;
pub type KernelDensityF32 = lr::KernelDensity<f32>;
pub type PolychoricMatrixF64 = polychoric::PolychoricMatrix<f64>;
pub type PolychoricMatrixF32 = polychoric::PolychoricMatrix<f32>;
