//! Holds the acceptance suite in `tests/acceptance.rs`; run it with
//! `cargo test -p vslam-validation --test acceptance`. It prints one PASS/FAIL
//! line per criterion and exits nonzero if any criterion fails.
