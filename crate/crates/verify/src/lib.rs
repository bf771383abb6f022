//! Acceptance criteria for `noisemix`; the checks live in `tests/acceptance.rs`.
//!
//! Run with `cargo test -p noisemix-verify --test acceptance`.
