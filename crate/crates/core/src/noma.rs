//! NOMA uplink: SIC decoding order, achievable rates, offloading time and energy.
//!
//! All offloading users superpose in one resource block. The AP decodes the
//! strongest user first; every user still undecoded when user `i` is decoded
//! (the weaker ones) appears as interference to it.

use crate::sysmodel::{ChannelState, DecisionVector, SystemConfig, TaskSpec};
use crate::{Error, Result};

/// The offloading users of one slot in SIC decoding order.
#[derive(Debug, Clone, PartialEq)]
pub struct UplinkSet {
    /// User indices, strongest channel first.
    pub members: Vec<usize>,
    pub gains: Vec<f64>,
    pub tx_powers: Vec<f64>,
}

impl UplinkSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Rank of `user` in the decoding order, if it offloads.
    pub fn position_of(&self, user: usize) -> Option<usize> {
        self.members.iter().position(|&m| m == user)
    }

    /// Rates of every member, in decoding order, via one suffix sum.
    pub fn rates(&self, cfg: &SystemConfig) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let mut interference = 0.0;
        for k in (0..self.len()).rev() {
            let rx = self.tx_powers[k] * self.gains[k];
            out[k] = cfg.bandwidth_hz * (1.0 + rx / (interference + cfg.noise_power_w)).log2();
            interference += rx;
        }
        out
    }

    /// Copy with one member removed (used to check the SIC monotonicity property).
    pub fn without(&self, position: usize) -> Self {
        let mut s = self.clone();
        s.members.remove(position);
        s.gains.remove(position);
        s.tx_powers.remove(position);
        s
    }
}

/// Collects the offloading users sorted by non-increasing gain, ties by index.
pub fn build_uplink_set(decision: &DecisionVector, chan: &ChannelState, cfg: &SystemConfig) -> UplinkSet {
    let mut members: Vec<usize> = decision
        .x
        .iter()
        .enumerate()
        .filter(|(_, p)| p.is_offload())
        .map(|(i, _)| i)
        .collect();
    members.sort_by(|&a, &b| chan.gains[b].total_cmp(&chan.gains[a]).then(a.cmp(&b)));
    let gains = members.iter().map(|&i| chan.gains[i]).collect();
    let tx_powers = vec![cfg.user_tx_power_w; members.len()];
    UplinkSet { members, gains, tx_powers }
}

/// Achievable rate (bits/s) of the member at `position` in decoding order.
pub fn noma_rate(set: &UplinkSet, position: usize, cfg: &SystemConfig) -> Result<f64> {
    if position >= set.len() {
        return Err(Error::Domain(format!(
            "position {position} outside uplink set of size {}",
            set.len()
        )));
    }
    let interference: f64 = (position + 1..set.len()).map(|l| set.tx_powers[l] * set.gains[l]).sum();
    let sinr = set.tx_powers[position] * set.gains[position] / (interference + cfg.noise_power_w);
    Ok(cfg.bandwidth_hz * (1.0 + sinr).log2())
}

/// Upload time `pi_j / R_i`.
pub fn offload_time(task: &TaskSpec, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::Domain(format!("uplink rate must be > 0, got {rate}")));
    }
    Ok(task.input_bits / rate)
}

/// Upload energy `rho_i * pi_j / R_i`.
pub fn offload_energy(task: &TaskSpec, rate: f64, tx_power: f64) -> Result<f64> {
    if !(tx_power > 0.0) {
        return Err(Error::Domain(format!("transmit power must be > 0, got {tx_power}")));
    }
    Ok(tx_power * offload_time(task, rate)?)
}
