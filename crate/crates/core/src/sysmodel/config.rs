//! `SystemConfig` and its flat `key = value` file format.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// Bits in one kilobyte as used for task sizes (1 KB = 1000 bytes).
pub const BITS_PER_KB: f64 = 8_000.0;

/// Physical and network constants of one simulated cell.
///
/// Units: Hz, W, s, m, bits. Per-user quantities (`local_cpu_hz`, `p_local_w`,
/// `user_tx_power_w`) are shared by every user.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SystemConfig {
    pub n_users: usize,
    pub n_tasks: usize,
    pub bandwidth_hz: f64,
    pub noise_power_w: f64,
    pub c_mec_hz: f64,
    pub c_cache_slots: usize,
    pub local_cpu_hz: f64,
    pub p_local_w: f64,
    pub p_mec_w: f64,
    pub user_tx_power_w: f64,
    pub latency_limit_s: f64,
    pub n_freq_slices: usize,
    pub area_side_m: f64,
    pub pathloss_exponent: f64,
    pub horizon_slots: usize,
    pub rng_seed: u64,
    pub task_input_min_bits: f64,
    pub task_input_max_bits: f64,
    pub cycles_per_bit_min: f64,
    pub cycles_per_bit_max: f64,
    pub result_ratio: f64,
}

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            n_users: 3,
            n_tasks: 5,
            bandwidth_hz: 20e6,
            noise_power_w: dbm_to_watts(-95.0),
            c_mec_hz: 10e9,
            c_cache_slots: 2,
            local_cpu_hz: 1e9,
            p_local_w: 0.5,
            p_mec_w: 5.0,
            user_tx_power_w: dbm_to_watts(20.0),
            latency_limit_s: 10.0,
            n_freq_slices: 4,
            area_side_m: 300.0,
            pathloss_exponent: 3.0,
            horizon_slots: 200,
            rng_seed: 1,
            task_input_min_bits: 300.0 * BITS_PER_KB,
            task_input_max_bits: 800.0 * BITS_PER_KB,
            cycles_per_bit_min: 1000.0,
            cycles_per_bit_max: 1500.0,
            result_ratio: 0.1,
        }
    }
}

/// Keys accepted in configuration files, in canonical output order.
pub const CONFIG_KEYS: &[&str] = &[
    "n_users",
    "n_tasks",
    "bandwidth_hz",
    "noise_power_w",
    "c_mec_hz",
    "c_cache_slots",
    "local_cpu_hz",
    "p_local_w",
    "p_mec_w",
    "user_tx_power_w",
    "latency_limit_s",
    "n_freq_slices",
    "area_side_m",
    "pathloss_exponent",
    "horizon_slots",
    "rng_seed",
    "task_input_min_bits",
    "task_input_max_bits",
    "cycles_per_bit_min",
    "cycles_per_bit_max",
    "result_ratio",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse::<T>()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_count(key: &str, value: &str) -> Result<usize> {
    // Accept `4`, `4.0` and `4e0` but not fractional counts.
    if let Ok(n) = value.parse::<usize>() {
        return Ok(n);
    }
    let f: f64 = parse_num(key, value)?;
    if f.fract() != 0.0 || f < 0.0 || !f.is_finite() {
        return Err(Error::Config(format!("{key}: {value:?} is not a count")));
    }
    Ok(f as usize)
}

impl SystemConfig {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "n_users" => self.n_users = parse_count(key, value)?,
            "n_tasks" => self.n_tasks = parse_count(key, value)?,
            "bandwidth_hz" => self.bandwidth_hz = parse_num(key, value)?,
            "noise_power_w" => self.noise_power_w = parse_num(key, value)?,
            "c_mec_hz" => self.c_mec_hz = parse_num(key, value)?,
            "c_cache_slots" => self.c_cache_slots = parse_count(key, value)?,
            "local_cpu_hz" => self.local_cpu_hz = parse_num(key, value)?,
            "p_local_w" => self.p_local_w = parse_num(key, value)?,
            "p_mec_w" => self.p_mec_w = parse_num(key, value)?,
            "user_tx_power_w" => self.user_tx_power_w = parse_num(key, value)?,
            "latency_limit_s" => self.latency_limit_s = parse_num(key, value)?,
            "n_freq_slices" => self.n_freq_slices = parse_count(key, value)?,
            "area_side_m" => self.area_side_m = parse_num(key, value)?,
            "pathloss_exponent" => self.pathloss_exponent = parse_num(key, value)?,
            "horizon_slots" => self.horizon_slots = parse_count(key, value)?,
            "rng_seed" => self.rng_seed = parse_num(key, value)?,
            "task_input_min_bits" => self.task_input_min_bits = parse_num(key, value)?,
            "task_input_max_bits" => self.task_input_max_bits = parse_num(key, value)?,
            "cycles_per_bit_min" => self.cycles_per_bit_min = parse_num(key, value)?,
            "cycles_per_bit_max" => self.cycles_per_bit_max = parse_num(key, value)?,
            "result_ratio" => self.result_ratio = parse_num(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses a `key = value` document on top of the defaults and validates it.
    ///
    /// Blank lines and everything after `#` are ignored. Unknown keys are rejected.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.set(key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_kv_str(&text)
    }

    /// Applies `PREFIX<KEY>` environment overrides (key upper-cased), then re-validates.
    pub fn apply_env_overrides<I>(&mut self, prefix: &str, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(prefix) else {
                continue;
            };
            let key = rest.to_ascii_lowercase();
            if CONFIG_KEYS.contains(&key.as_str()) {
                self.set(&key, &value)
                    .map_err(|e| Error::Config(format!("{name}: {e}")))?;
            }
        }
        self.validate()
    }

    /// Renders every field as a `key = value` line.
    pub fn to_kv_string(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let s = match key {
            "n_users" => self.n_users.to_string(),
            "n_tasks" => self.n_tasks.to_string(),
            "bandwidth_hz" => format!("{:e}", self.bandwidth_hz),
            "noise_power_w" => format!("{:e}", self.noise_power_w),
            "c_mec_hz" => format!("{:e}", self.c_mec_hz),
            "c_cache_slots" => self.c_cache_slots.to_string(),
            "local_cpu_hz" => format!("{:e}", self.local_cpu_hz),
            "p_local_w" => format!("{:e}", self.p_local_w),
            "p_mec_w" => format!("{:e}", self.p_mec_w),
            "user_tx_power_w" => format!("{:e}", self.user_tx_power_w),
            "latency_limit_s" => format!("{:e}", self.latency_limit_s),
            "n_freq_slices" => self.n_freq_slices.to_string(),
            "area_side_m" => format!("{:e}", self.area_side_m),
            "pathloss_exponent" => format!("{:e}", self.pathloss_exponent),
            "horizon_slots" => self.horizon_slots.to_string(),
            "rng_seed" => self.rng_seed.to_string(),
            "task_input_min_bits" => format!("{:e}", self.task_input_min_bits),
            "task_input_max_bits" => format!("{:e}", self.task_input_max_bits),
            "cycles_per_bit_min" => format!("{:e}", self.cycles_per_bit_min),
            "cycles_per_bit_max" => format!("{:e}", self.cycles_per_bit_max),
            "result_ratio" => format!("{:e}", self.result_ratio),
            _ => return None,
        };
        Some(s)
    }

    /// Checks the type invariants.
    ///
    /// `c_cache_slots` may be zero (a cache-less AP); every other count must be positive.
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_users", self.n_users),
            ("n_tasks", self.n_tasks),
            ("n_freq_slices", self.n_freq_slices),
            ("horizon_slots", self.horizon_slots),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        let positives = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_power_w", self.noise_power_w),
            ("c_mec_hz", self.c_mec_hz),
            ("local_cpu_hz", self.local_cpu_hz),
            ("p_local_w", self.p_local_w),
            ("p_mec_w", self.p_mec_w),
            ("user_tx_power_w", self.user_tx_power_w),
            ("latency_limit_s", self.latency_limit_s),
            ("area_side_m", self.area_side_m),
            ("pathloss_exponent", self.pathloss_exponent),
            ("task_input_min_bits", self.task_input_min_bits),
            ("task_input_max_bits", self.task_input_max_bits),
            ("cycles_per_bit_min", self.cycles_per_bit_min),
            ("cycles_per_bit_max", self.cycles_per_bit_max),
            ("result_ratio", self.result_ratio),
        ];
        for (name, v) in positives {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.c_cache_slots > self.n_tasks {
            return Err(Error::Config(format!(
                "c_cache_slots ({}) exceeds n_tasks ({})",
                self.c_cache_slots, self.n_tasks
            )));
        }
        if self.task_input_min_bits > self.task_input_max_bits {
            return Err(Error::Config("task_input_min_bits > task_input_max_bits".into()));
        }
        if self.cycles_per_bit_min > self.cycles_per_bit_max {
            return Err(Error::Config("cycles_per_bit_min > cycles_per_bit_max".into()));
        }
        if self.result_ratio > 1.0 {
            return Err(Error::Config("result_ratio must be <= 1".into()));
        }
        Ok(())
    }
}
