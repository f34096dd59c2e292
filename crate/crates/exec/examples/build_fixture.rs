//! Regenerates `fixtures/mro.sqlite` from `fixtures/mro.sql`.

use std::path::PathBuf;

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/mro.sqlite"));
    softsql_exec::build_fixture_db(&out).expect("building fixture database");
    println!("wrote {}", out.display());
}
