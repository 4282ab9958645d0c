//! Deep Frank-Wolfe training for piecewise-linear losses.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: a matrix-valued reverse-mode tape with a forward-mode
//!   (Jacobian-vector product) sweep and a finite-difference oracle.
//! - [`models`]: linear and ReLU MLP score functions over a flat
//!   [`ParamVector`].
//! - [`losses`]: hinge and cross-entropy losses, augmented scores and the
//!   dual search directions on the label simplex.
//! - [`proximal`]: the proximal Frank-Wolfe machinery (dual objective,
//!   optimal step-size, multi-step solver).
//! - [`optim`]: the DFW optimizer and the SGD / Adagrad / Adam / AMSGrad
//!   baselines.
//!
//! ```
//! use dfw::{models::{ModelSpec, Sample}, optim::{DfwConfig, DfwState, Optimizer}, losses::DirectionMode};
//!
//! // f(w, x) = (w x, 0): one parameter, two classes.
//! let spec = ModelSpec::binary_margin(1);
//! let w = dfw::ParamVector::new(vec![0.5]).unwrap();
//! let config = DfwConfig { eta: 1.0, momentum: 0.0, l2: 0.0, mode: DirectionMode::Conditional };
//! let mut state = DfwState::new(w, config).unwrap();
//! let batch = [Sample::new(vec![1.0], 0)];
//! let diag = state.step(&batch, &spec).unwrap();
//! assert_eq!(diag.gamma, Some(0.5));
//! assert_eq!(state.params().as_slice(), &[1.0]);
//! ```

pub mod autodiff;
pub mod error;
pub mod losses;
pub mod models;
pub mod objective;
pub mod optim;
pub mod proximal;

pub use autodiff::{Gradient, ParamVector, Tape, Var};
pub use error::{Error, Result};
