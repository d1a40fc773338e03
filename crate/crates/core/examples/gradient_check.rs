//! Check reverse-mode gradients against central differences, first on a
//! hand-built loss and then on the whole benchmark suite.
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use ctxswitch::autodiff::{grad_check, ParamStore};
use ctxswitch::oracles::{gradient_suite, GRAD_EPS, GRAD_TOLERANCE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // log-sum-exp of W x with both W and x trainable
    let mut store = ParamStore::new();
    store.add("w", 3, 4, (0..12).map(|k| (k as f64 * 0.37).sin()).collect())?;
    store.add("x", 4, 1, vec![0.5, -1.0, 0.25, 2.0])?;
    let report = grad_check(&store, GRAD_EPS, 100, 0, |tape, b| {
        let y = tape.matvec(b.vars()[0], b.vars()[1]);
        let ls = tape.log_softmax(y);
        tape.pick(ls, 0)
    });
    println!("log-softmax of Wx: {} coords, max rel err {:.2e}", report.coords_checked, report.max_rel_error);

    let mut worst: f64 = 0.0;
    for case in gradient_suite(1) {
        worst = worst.max(case.report.max_rel_error);
        println!("{:<22} {:.2e}", case.name, case.report.max_rel_error);
    }
    println!("worst {worst:.2e} (tolerance {GRAD_TOLERANCE:.0e})");
    Ok(())
}
