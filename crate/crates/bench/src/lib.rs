//! Benchmark fixtures.

use nomamec_core::env::equal_split_shares;
use nomamec_core::{DecisionVector, Placement, Result, Scenario, SystemConfig};

/// Default scenario with a mixed decision for slot 0.
pub fn mixed_decision() -> Result<(Scenario, DecisionVector)> {
    let scenario = Scenario::new(SystemConfig::default())?;
    let n = scenario.cfg.n_users;
    let x: Vec<Placement> = (0..n).map(|i| if i % 2 == 0 { Placement::Offload } else { Placement::Local }).collect();
    let gains = scenario.channels[0].gains.clone();
    let y = equal_split_shares(&x, &gains, scenario.cfg.n_freq_slices);
    let d = scenario.complete(0, x, y)?;
    Ok((scenario, d))
}
