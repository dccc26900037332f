//! Acceptance checks for `tibandit`. Run with
//! `cargo test -p tibandit-validation --test acceptance`; pass a substring of
//! a criterion name after `--` to run a subset.
