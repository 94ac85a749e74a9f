//! Runs a TOML experiment file through the same pipeline as the binary.
//!
//! `cargo run --example run_config -- configs/snell.toml [out-dir]`

use std::path::PathBuf;

use rbdsdep::config::load_config;
use rbdsdep::runner::run_with_threads;

fn main() -> rbdsdep::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/snell.toml"));
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("rbdsdep-example"));
    let cfg = load_config(&path)?;
    cfg.validate()?;
    println!("config hash {}", cfg.hash());
    let outcome = run_with_threads(&cfg, &out, None)?;
    println!("passed: {}", outcome.passed);
    for f in &outcome.files {
        println!("  {}", f.display());
    }
    println!("{}", serde_json::to_string_pretty(&outcome.report["summary"]).unwrap_or_default());
    Ok(())
}
