//! The mixture form of the counterfactual estimator equals the mutual
//! information of the explicit joint table. Print both for a few cases.
//!
//! ```text
//! cargo run --example information_oracle
//! ```

use ctxswitch::infoprobe::js_mixture_mi;
use ctxswitch::oracles::joint_table_mi;

fn main() {
    let cases: [(&[f64], &[f64], f64); 5] = [
        (&[0.5, 0.5], &[0.5, 0.5], 0.5),
        (&[1.0, 0.0], &[0.0, 1.0], 0.5),
        (&[0.75, 0.25], &[0.25, 0.75], 0.5),
        (&[0.1, 0.8, 0.1], &[0.1, 0.1, 0.8], 0.5),
        (&[0.9, 0.1], &[0.1, 0.9], 0.2),
    ];
    for (p0, p1, w0) in cases {
        let mixture = js_mixture_mi(p0, p1, w0, 1.0 - w0).expect("same alphabet");
        let joint = joint_table_mi(p0, p1, w0, 1.0 - w0);
        println!("{p0:?} vs {p1:?} (w_A = {w0}): {mixture:.12} bits, joint table {joint:.12}, diff {:.1e}", (mixture - joint).abs());
    }
}
