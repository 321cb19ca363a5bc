//! Fine-grained text-to-motion generation at desk scale.
//!
//! The pipeline: a prompt is dependency-parsed into a text tree, split
//! into fine-grained per-body-part and per-word-class descriptions, the
//! tree is encoded through hyperbolic graph convolution, both text
//! streams are fused with the motion sequence inside a conditional
//! denoising diffusion model, and generated motions are scored with a
//! retrieval/FID metric suite over a jointly trained evaluator.

pub mod hyperbolic;
pub mod numerics;
