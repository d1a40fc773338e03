//! Run a scaled-down experiment matrix end to end and print both tables.
//!
//! ```text
//! CTXSWITCH_OUT=/tmp/ctx cargo run --release --example run_matrix
//! ```
//! A second invocation with the same output root reuses every finished run.

use ctxswitch::harness::{emit_report, parse_config, run_matrix};

const CONFIG: &str = r#"
output_root = "results/example"
families = ["L", "I", "M16"]
seeds = [0, 1, 2]

[train]
total_env_steps = 5000
eval_interval = 1000

[probe]
n = 300
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = parse_config(CONFIG, &[], std::path::Path::new("."))?;
    let root = cfg.output_root();
    let out = run_matrix(&cfg, &root, true)?;
    println!("{} runs ({} executed, {} reused) under {}", out.records.len(), out.executed, out.skipped, root.display());
    let report = emit_report(&cfg, &root)?;
    for name in ["success_table.txt", "mi_table.txt"] {
        println!("\n{}", std::fs::read_to_string(report.dir.join(name))?);
    }
    Ok(())
}
