//! The chapters of `book/` compiled as documentation, so `cargo test`
//! runs every snippet in the guide.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}

#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses {}

#[doc = include_str!("../../../book/src/proximal.md")]
pub mod proximal {}

#[doc = include_str!("../../../book/src/dfw.md")]
pub mod dfw {}

#[doc = include_str!("../../../book/src/benchmarks.md")]
pub mod benchmarks {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
