//! Reset/step environment bindings. The [`env`] module is plain Rust; the
//! Python extension wraps it when built with the `extension-module` feature.

pub mod env;

#[cfg(feature = "python")]
mod python;
