//! Acceptance checks for the whole workspace live in `tests/acceptance.rs`;
//! run them with `cargo test -p qdpc-validation --test acceptance`.
