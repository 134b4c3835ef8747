//! Differentiable array substrate and optimization schedule.

pub mod gradcheck;
mod optim;
mod real;
mod schedule;
mod tape;
pub mod tensor;

pub use optim::{AdamaxConfig, AdamaxState};
pub use real::{DType, Real};
pub use schedule::{lr_schedule, warmup_steps, WARMUP_FRACTION};
pub use tape::{AllowMask, Gradients, Graph, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
