//! End-to-end acceptance checks for the workspace; see
//! `tests/acceptance.rs`.
