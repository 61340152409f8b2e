//! Numerical core for frequency-biased state space model analysis.
//!
//! The crate has three layers:
//!
//! - `spectral`, `ssm`: continuous-time transfer functions of diagonal SSMs
//!   (total variation, high-frequency bounds, magnitude response) and the
//!   discrete-time scan kernels (ZOH discretization, sequential / chunked
//!   parallel / selective / bidirectional scans, reverse-mode gradients).
//! - `mixers`, `backbone`: the block families of the isotropic hybrid
//!   backbone (MV / ViM / Hydra / attention sequence mixers, EinFFT / MLP
//!   channel mixers) with forward and reverse passes, plus variant assembly
//!   and embedding extraction.
//! - `probe`, `eval`: a least-squares frequency-bias probe and the
//!   biomarker-prediction evaluation protocol (gene panels, split plans,
//!   ridge regression, PCC/MAE/MSE metrics, robustness deltas, synthetic
//!   batch-effect data).
//!
//! File formats (`MVW1` weight container, `EMB1` embedding container,
//! dataset CSVs) live in `io`.

pub mod act;
pub mod backbone;
pub mod linalg;
pub mod mixers;
pub mod probe;
pub mod rng;
pub mod spectral;
pub mod ssm;
pub mod tensor;

pub use tensor::Tensor3;
