//! Toy-problem traces for the command line.

use std::io::Write;

use anyhow::Result;
use mtlrank_core::toy::{distance_to_front, run_toy, ToyTrace};
use mtlrank_core::{BalancerKind, Preference};

/// Runs the two-quadratics problem and writes `step,l1,l2` rows.
pub fn toy_trace<W: Write>(kind: &BalancerKind, ray: &[f64], steps: usize, lr: f64, seed: u64, out: W) -> Result<ToyTrace> {
    let pref = Preference::new(ray.to_vec())?;
    let trace = run_toy(kind, &pref, steps, lr, seed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "l1", "l2"])?;
    for (i, l) in trace.losses.iter().enumerate() {
        w.write_record([i.to_string(), l[0].to_string(), l[1].to_string()])?;
    }
    w.flush()?;
    Ok(trace)
}

/// One-line summary of a finished trace.
pub fn summary(trace: &ToyTrace) -> String {
    let l = trace.final_losses();
    format!(
        "theta = ({:.6}, {:.6})  losses = ({:.6}, {:.6})  front distance = {:.3e}  stationarity = {:.3e}",
        trace.theta[0],
        trace.theta[1],
        l[0],
        l[1],
        distance_to_front(l),
        trace.stationarity()
    )
}
