use crate::data::ParityTask;
use crate::error::Result;
use crate::network::Network;
use crate::oracle;

/// Exact fraction of inputs where `f(W, x) / ((m / 2^(k+1)) f(W*, x))` lies in
/// `[0.5, 1.5]`, with `W*` the constructed good network on the task support.
pub fn approximation_ratio(trained: &Network, task: &ParityTask) -> Result<f64> {
    let good = Network::good_network_for(task)?;
    let scale = trained.m() as f64 / 2f64.powi(task.k() as i32 + 1);
    let mut reference = Vec::with_capacity(1 << task.d());
    oracle::for_each_output(&good, task, |_, _, f| reference.push(scale * f))?;
    let mut hits = 0u64;
    let mut index = 0usize;
    oracle::for_each_output(trained, task, |_, _, f| {
        let ratio = f / reference[index];
        hits += (0.5..=1.5).contains(&ratio) as u64;
        index += 1;
    })?;
    Ok(hits as f64 / reference.len() as f64)
}
