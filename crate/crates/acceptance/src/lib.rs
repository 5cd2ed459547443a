//! Acceptance checks for the `refcal` crate live in `tests/acceptance.rs`;
//! run them with `cargo test -p refcal-acceptance`.
