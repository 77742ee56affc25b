//! Experiment plans: sweeps over one configuration variable, repeated over
//! seeds, for each allocation algorithm, with CSV output.

mod baselines;

use std::fmt;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use baselines::{baseline_conventional_mec, baseline_full_local, baseline_full_offload, without_cache, BaselineTrace};

use crate::bla::{maq_rollout, run_bla_maq, MaqHyper};
use crate::energy::PopularityMatrix;
use crate::env::{stream_rng, Scenario, ScenarioOptions};
use crate::lstm::{self, forward_step, LossCurve, LstmState, SeriesDataset, TrainHyper, TrainMode};
use crate::saq::{self, SaqHyper};
use crate::stats::{episodes_to_converge, mean, std_dev};
use crate::sysmodel::SystemConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Saq,
    BlaMaq,
    FullLocal,
    FullOffload,
    ConventionalMec,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Saq, Algorithm::BlaMaq, Algorithm::FullLocal, Algorithm::FullOffload, Algorithm::ConventionalMec];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Saq => "saq",
            Algorithm::BlaMaq => "bla-maq",
            Algorithm::FullLocal => "full-local",
            Algorithm::FullOffload => "full-offload",
            Algorithm::ConventionalMec => "conventional-mec",
        }
    }

    pub fn is_learning(self) -> bool {
        matches!(self, Algorithm::Saq | Algorithm::BlaMaq | Algorithm::ConventionalMec)
    }

    fn stream(self) -> u64 {
        16 + self as u64
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepVar {
    TaskInputBits,
    CMecHz,
    CCacheSlots,
    LearningRate,
    None,
}

impl SweepVar {
    pub const ALL: [SweepVar; 5] =
        [SweepVar::TaskInputBits, SweepVar::CMecHz, SweepVar::CCacheSlots, SweepVar::LearningRate, SweepVar::None];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::TaskInputBits => "task_input_bits",
            SweepVar::CMecHz => "c_mec_hz",
            SweepVar::CCacheSlots => "c_cache_slots",
            SweepVar::LearningRate => "learning_rate",
            SweepVar::None => "none",
        }
    }

    /// Aggregate file written for this sweep, if any.
    pub fn figure_file(self) -> Option<&'static str> {
        match self {
            SweepVar::TaskInputBits => Some("fig_energy_vs_tasksize.csv"),
            SweepVar::CMecHz => Some("fig_energy_vs_cmec.csv"),
            SweepVar::CCacheSlots => Some("fig_energy_vs_cache.csv"),
            SweepVar::LearningRate | SweepVar::None => None,
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepVar::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep variable `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<f64>,
}

impl Sweep {
    pub fn none() -> Self {
        Self { var: SweepVar::None, values: Vec::new() }
    }

    /// Parses `var=v1,v2,...` or `none`.
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(Self::none());
        }
        let (var, vals) = s.split_once('=').ok_or_else(|| Error::Config(format!("sweep `{s}` is not var=v1,v2,...")))?;
        let var: SweepVar = var.trim().parse()?;
        let values = vals
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("sweep value `{v}` is not a number"))))
            .collect::<Result<_>>()?;
        Ok(Self { var, values })
    }

    /// The sweep points, or a single unnamed point for `none`.
    fn points(&self) -> Vec<Option<f64>> {
        if self.var == SweepVar::None {
            vec![None]
        } else {
            self.values.iter().copied().map(Some).collect()
        }
    }
}

/// Sets `value` of the sweep variable on a configuration and LSTM settings.
/// Task sizes keep the base configuration's relative spread around the new mean.
pub fn apply_sweep(var: SweepVar, value: f64, cfg: &mut SystemConfig, lstm: &mut TrainHyper) -> Result<()> {
    match var {
        SweepVar::TaskInputBits => {
            let mid = 0.5 * (cfg.task_input_min_bits + cfg.task_input_max_bits);
            let (lo, hi) = (cfg.task_input_min_bits / mid, cfg.task_input_max_bits / mid);
            cfg.task_input_min_bits = lo * value;
            cfg.task_input_max_bits = hi * value;
        }
        SweepVar::CMecHz => cfg.c_mec_hz = value,
        SweepVar::CCacheSlots => {
            if value < 0.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("cache slots must be a nonnegative integer, got {value}")));
            }
            cfg.c_cache_slots = value as usize;
        }
        SweepVar::LearningRate => lstm.learning_rate = value,
        SweepVar::None => {}
    }
    cfg.validate()
}

#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub scenario: String,
    pub base: SystemConfig,
    pub options: ScenarioOptions,
    pub algorithms: Vec<Algorithm>,
    pub sweep: Sweep,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub saq: SaqHyper,
    pub maq: MaqHyper,
    /// When set, decisions use one-step LSTM forecasts of popularity.
    pub lstm: Option<TrainHyper>,
    /// Record measured wall time; otherwise the column is zero and reruns are byte-identical.
    pub record_wall_time: bool,
}

/// LSTM settings used by plans that enable forecasting.
pub fn default_forecast_hyper() -> TrainHyper {
    TrainHyper { hidden_size: 8, epochs: 200, mode: TrainMode::Bptt, ..TrainHyper::default() }
}

impl ExperimentPlan {
    /// The canonical desk instance with default learners.
    pub fn new(scenario: impl Into<String>, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            scenario: scenario.into(),
            base: SystemConfig::default(),
            options: ScenarioOptions::default(),
            algorithms: vec![Algorithm::Saq],
            sweep: Sweep::none(),
            seeds: vec![0],
            out_dir: out_dir.into(),
            saq: SaqHyper::default(),
            maq: MaqHyper::default(),
            lstm: None,
            record_wall_time: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.algorithms.is_empty() {
            return Err(Error::Config("no algorithms".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.sweep.var != SweepVar::None {
            let v = &self.sweep.values;
            if v.is_empty() {
                return Err(Error::Config(format!("sweep over {} has no values", self.sweep.var)));
            }
            if v.iter().any(|x| !x.is_finite()) || v.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config("sweep values must be finite and strictly increasing".into()));
            }
            for &x in v {
                let mut cfg = self.base.clone();
                apply_sweep(self.sweep.var, x, &mut cfg, &mut default_forecast_hyper())?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub scenario: String,
    pub algorithm: String,
    pub sweep_var: String,
    pub sweep_value: Option<f64>,
    pub seed: u64,
    /// Mean total energy per slot under the final policy, infeasible slots penalized.
    pub mean_energy_j: f64,
    pub episodes_to_converge: Option<usize>,
    pub infeasible_slots: usize,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn validate(&self) -> Result<()> {
        if !(self.mean_energy_j.is_finite() && self.mean_energy_j >= 0.0) {
            return Err(Error::Format(format!("energy {} is not a finite nonnegative value", self.mean_energy_j)));
        }
        if !(self.wall_time_s.is_finite() && self.wall_time_s >= 0.0) {
            return Err(Error::Format(format!("wall time {} is invalid", self.wall_time_s)));
        }
        self.algorithm.parse::<Algorithm>().map_err(|_| Error::Format(format!("algorithm `{}`", self.algorithm)))?;
        self.sweep_var.parse::<SweepVar>().map_err(|_| Error::Format(format!("sweep variable `{}`", self.sweep_var)))?;
        Ok(())
    }
}

pub fn write_results_csv<W: Write>(out: W, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads result rows, validating each one.
pub fn read_results_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for r in rd.deserialize() {
        let row: ResultRow = r?;
        row.validate()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Outcome of one algorithm in one (sweep value, seed) cell.
#[derive(Debug, Clone)]
pub struct AlgorithmRun {
    pub row: ResultRow,
    /// Mean energy per slot of every training episode, for learners.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub sweep_value: Option<f64>,
    pub seed: u64,
    pub runs: Vec<AlgorithmRun>,
    pub lstm_curve: Option<LossCurve>,
}

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub cells: Vec<CellResult>,
    pub files: Vec<PathBuf>,
}

impl PlanOutput {
    pub fn rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.cells.iter().flat_map(|c| c.runs.iter().map(|r| &r.row))
    }
}

const STREAM_LSTM: u64 = 32;
const CONVERGENCE_WINDOW: usize = 10;
const CONVERGENCE_TOL: f64 = 0.05;

/// One-step forecasts: slot 0 gets the uniform vector, slot t the prediction
/// after observing slots before it.
pub fn one_step_forecasts(params: &lstm::LstmParams, series: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = series.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(series.len());
    if series.is_empty() {
        return Ok(out);
    }
    out.push(vec![1.0 / n as f64; n]);
    let mut state = LstmState::zeros(params.hidden_size);
    for x in &series[..series.len() - 1] {
        state = forward_step(params, &state, x)?;
        out.push(lstm::predict(params, &state).projected);
    }
    Ok(out)
}

/// Trains a forecaster on the mean request vector of the scenario and installs
/// its one-step forecasts as decision popularity.
pub fn attach_forecasts(scenario: &mut Scenario, hyper: &TrainHyper, seed: u64) -> Result<LossCurve> {
    let n_users = scenario.cfg.n_users;
    let series: Vec<Vec<f64>> = scenario
        .popularity
        .iter()
        .map(|p| p.task_demand().into_iter().map(|d| d / n_users as f64).collect())
        .collect();
    let data = SeriesDataset::with_default_split(series.clone())?;
    let (params, curve) = lstm::train(&data, hyper, &mut stream_rng(seed, STREAM_LSTM))?;
    let preds = one_step_forecasts(&params, &series)?;
    let pop: Vec<PopularityMatrix> =
        preds.iter().enumerate().map(|(t, row)| PopularityMatrix::shared(row, n_users, t)).collect::<Result<_>>()?;
    scenario.set_predicted(pop)?;
    Ok(curve)
}

fn run_algorithm(plan: &ExperimentPlan, alg: Algorithm, scenario: &Scenario, seed: u64) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    let mut rng = stream_rng(seed, alg.stream());
    Ok(match alg {
        Algorithm::FullLocal => {
            let tr = baseline_full_local(scenario)?;
            let n = tr.infeasible_slots();
            (tr.penalized, Vec::new(), n)
        }
        Algorithm::FullOffload => {
            let tr = baseline_full_offload(scenario)?;
            let n = tr.infeasible_slots();
            (tr.penalized, Vec::new(), n)
        }
        Algorithm::Saq => {
            let out = saq::train(scenario, &plan.saq, &mut rng)?;
            let (e, d) = saq::greedy_rollout(&out.space, &out.q, scenario)?;
            let n = count_infeasible(scenario, &d)?;
            (e, out.trace, n)
        }
        Algorithm::ConventionalMec => {
            let (e, out) = baseline_conventional_mec(scenario, &plan.saq, &mut rng)?;
            (e, out.trace, 0)
        }
        Algorithm::BlaMaq => {
            let out = run_bla_maq(scenario, &plan.maq, &mut rng)?;
            let e = maq_rollout(scenario, &out)?;
            (e, out.trace, 0)
        }
    })
}

fn count_infeasible(scenario: &Scenario, d: &[crate::sysmodel::DecisionVector]) -> Result<usize> {
    let mut n = 0;
    for (t, d) in d.iter().enumerate() {
        n += usize::from(!scenario.evaluate(t, d)?.feasible);
    }
    Ok(n)
}

/// Runs every algorithm of the plan on one (sweep value, seed) cell.
pub fn run_cell(plan: &ExperimentPlan, value: Option<f64>, seed: u64) -> Result<CellResult> {
    let mut cfg = plan.base.clone();
    cfg.rng_seed = seed;
    let mut forecast = plan.lstm.clone();
    if plan.sweep.var == SweepVar::LearningRate && forecast.is_none() {
        forecast = Some(default_forecast_hyper());
    }
    let mut lstm_hyper = forecast.clone().unwrap_or_else(default_forecast_hyper);
    if let Some(v) = value {
        apply_sweep(plan.sweep.var, v, &mut cfg, &mut lstm_hyper)?;
    }
    let mut scenario = Scenario::with_options(cfg, plan.options.clone())?;
    let lstm_curve = match forecast {
        Some(_) => Some(attach_forecasts(&mut scenario, &lstm_hyper, seed)?),
        None => None,
    };
    let mut runs = Vec::with_capacity(plan.algorithms.len());
    for &alg in &plan.algorithms {
        let start = Instant::now();
        let (energies, trace, infeasible) = run_algorithm(plan, alg, &scenario, seed)?;
        let wall = if plan.record_wall_time { start.elapsed().as_secs_f64() } else { 0.0 };
        let row = ResultRow {
            scenario: plan.scenario.clone(),
            algorithm: alg.to_string(),
            sweep_var: plan.sweep.var.to_string(),
            sweep_value: value,
            seed,
            mean_energy_j: mean(&energies),
            episodes_to_converge: alg
                .is_learning()
                .then(|| episodes_to_converge(&trace, CONVERGENCE_WINDOW, CONVERGENCE_TOL)),
            infeasible_slots: infeasible,
            wall_time_s: wall,
        };
        row.validate()?;
        runs.push(AlgorithmRun { row, trace });
    }
    Ok(CellResult { sweep_value: value, seed, runs, lstm_curve })
}

fn value_label(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Executes the plan; cells run in parallel and all files are written afterwards.
pub fn run_plan(plan: &ExperimentPlan) -> Result<PlanOutput> {
    plan.validate()?;
    fs::create_dir_all(&plan.out_dir)
        .map_err(|e| Error::from(e).context(format!("creating output directory {}", plan.out_dir.display())))?;
    let jobs: Vec<(Option<f64>, u64)> =
        plan.sweep.points().into_iter().flat_map(|v| plan.seeds.iter().map(move |&s| (v, s))).collect();
    let cells: Vec<CellResult> = jobs
        .par_iter()
        .map(|&(v, s)| {
            run_cell(plan, v, s).map_err(|e| {
                e.context(format!("scenario {} {}={} seed {}", plan.scenario, plan.sweep.var, value_label(v), s))
            })
        })
        .collect::<Result<_>>()?;
    let files = write_outputs(plan, &cells)?;
    Ok(PlanOutput { cells, files })
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, fs::File)> {
    let p = dir.join(name);
    let f = fs::File::create(&p).map_err(|e| Error::from(e).context(format!("writing {}", p.display())))?;
    Ok((p, f))
}

fn write_outputs(plan: &ExperimentPlan, cells: &[CellResult]) -> Result<Vec<PathBuf>> {
    let dir = &plan.out_dir;
    let mut files = Vec::new();
    let rows: Vec<ResultRow> = cells.iter().flat_map(|c| c.runs.iter().map(|r| r.row.clone())).collect();
    let (p, f) = create(dir, "results.csv")?;
    write_results_csv(f, &rows)?;
    files.push(p);

    let points = plan.sweep.points();
    if let Some(name) = plan.sweep.var.figure_file() {
        let (p, f) = create(dir, name)?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["algorithm", "sweep_value", "n_seeds", "mean_energy_j", "std_energy_j"])?;
        for &alg in &plan.algorithms {
            for &v in &points {
                let e: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.algorithm == alg.as_str() && r.sweep_value == v)
                    .map(|r| r.mean_energy_j)
                    .collect();
                w.write_record([
                    alg.to_string(),
                    value_label(v),
                    e.len().to_string(),
                    mean(&e).to_string(),
                    std_dev(&e).to_string(),
                ])?;
            }
        }
        w.flush()?;
        files.push(p);
    }

    if plan.algorithms.iter().any(|a| a.is_learning()) {
        let (p, f) = create(dir, "fig_convergence.csv")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["algorithm", "sweep_value", "episode", "mean_energy_j", "std_energy_j"])?;
        for (k, &alg) in plan.algorithms.iter().enumerate() {
            if !alg.is_learning() {
                continue;
            }
            for &v in &points {
                let traces: Vec<&Vec<f64>> =
                    cells.iter().filter(|c| c.sweep_value == v).map(|c| &c.runs[k].trace).collect();
                let len = traces.iter().map(|t| t.len()).min().unwrap_or(0);
                for ep in 0..len {
                    let e: Vec<f64> = traces.iter().map(|t| t[ep]).collect();
                    w.write_record([
                        alg.to_string(),
                        value_label(v),
                        (ep + 1).to_string(),
                        mean(&e).to_string(),
                        std_dev(&e).to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        files.push(p);
    }

    if cells.iter().any(|c| c.lstm_curve.is_some()) {
        let (p, f) = create(dir, "fig_lstm_loss.csv")?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["sweep_value", "epoch", "train_loss_mean", "train_loss_std", "test_loss_mean", "test_loss_std"])?;
        for &v in &points {
            let curves: Vec<&LossCurve> =
                cells.iter().filter(|c| c.sweep_value == v).filter_map(|c| c.lstm_curve.as_ref()).collect();
            let len = curves.iter().map(|c| c.train.len()).min().unwrap_or(0);
            for ep in 0..len {
                let tr: Vec<f64> = curves.iter().map(|c| c.train[ep]).collect();
                let te: Vec<f64> = curves.iter().map(|c| c.test[ep]).collect();
                w.write_record([
                    value_label(v),
                    (ep + 1).to_string(),
                    mean(&tr).to_string(),
                    std_dev(&tr).to_string(),
                    mean(&te).to_string(),
                    std_dev(&te).to_string(),
                ])?;
            }
        }
        w.flush()?;
        files.push(p);
    }
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_plan(dir: &Path) -> ExperimentPlan {
        let mut p = ExperimentPlan::new("unit", dir);
        p.base = SystemConfig { n_tasks: 3, c_cache_slots: 1, horizon_slots: 20, ..Default::default() };
        p.saq.episodes = 20;
        p.maq.episodes = 5;
        p
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
        }
        for v in SweepVar::ALL {
            assert_eq!(v.as_str().parse::<SweepVar>().unwrap(), v);
        }
        assert!("qlearn".parse::<Algorithm>().unwrap_err().is_config());
    }

    #[test]
    fn sweep_parsing() {
        let s = Sweep::parse("c_mec_hz=1e10, 2e10,4e10").unwrap();
        assert_eq!(s.var, SweepVar::CMecHz);
        assert_eq!(s.values, vec![1e10, 2e10, 4e10]);
        assert_eq!(Sweep::parse("none").unwrap(), Sweep::none());
        assert!(Sweep::parse("c_mec_hz").is_err());
        assert!(Sweep::parse("c_mec_hz=fast").is_err());
    }

    #[test]
    fn plan_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = small_plan(dir.path());
        p.validate().unwrap();
        p.seeds = vec![1, 2, 1];
        assert!(p.validate().unwrap_err().is_config());
        p.seeds = vec![1];
        p.sweep = Sweep { var: SweepVar::CMecHz, values: vec![2e10, 1e10] };
        assert!(p.validate().is_err());
        p.sweep = Sweep { var: SweepVar::CMecHz, values: vec![] };
        assert!(p.validate().is_err());
        p.sweep = Sweep { var: SweepVar::CCacheSlots, values: vec![0.0, 4.0] };
        assert!(p.validate().is_err());
        p.sweep = Sweep { var: SweepVar::CCacheSlots, values: vec![0.0, 1.5] };
        assert!(p.validate().is_err());
        p.sweep = Sweep { var: SweepVar::CCacheSlots, values: vec![0.0, 1.0, 3.0] };
        p.validate().unwrap();
    }

    #[test]
    fn task_size_sweep_keeps_spread() {
        let mut cfg = SystemConfig::default();
        let ratio = cfg.task_input_max_bits / cfg.task_input_min_bits;
        apply_sweep(SweepVar::TaskInputBits, 1e6, &mut cfg, &mut default_forecast_hyper()).unwrap();
        assert!((0.5 * (cfg.task_input_min_bits + cfg.task_input_max_bits) - 1e6).abs() < 1e-6);
        assert!((cfg.task_input_max_bits / cfg.task_input_min_bits - ratio).abs() < 1e-12);
    }

    #[test]
    fn one_row_per_algorithm_without_sweep() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = small_plan(dir.path());
        p.algorithms = Algorithm::ALL.to_vec();
        let out = run_plan(&p).unwrap();
        assert_eq!(out.rows().count(), 5);
        let text = fs::read_to_string(dir.path().join("results.csv")).unwrap();
        let back = read_results_csv(text.as_bytes()).unwrap();
        assert_eq!(back, out.rows().cloned().collect::<Vec<_>>());
        assert!(back.iter().all(|r| r.sweep_value.is_none()));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut p = small_plan(a.path());
        p.algorithms = vec![Algorithm::Saq, Algorithm::FullLocal, Algorithm::BlaMaq];
        p.sweep = Sweep { var: SweepVar::CCacheSlots, values: vec![0.0, 1.0, 2.0] };
        p.seeds = vec![3, 4];
        p.record_wall_time = false;
        let out = run_plan(&p).unwrap();
        p.out_dir = b.path().to_path_buf();
        run_plan(&p).unwrap();
        for f in &out.files {
            let name = f.file_name().unwrap();
            assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
        }
        let names: Vec<_> = out.files.iter().map(|f| f.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, ["results.csv", "fig_energy_vs_cache.csv", "fig_convergence.csv"]);
    }

    #[test]
    fn cache_sweep_does_not_raise_saq_energy_much() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = small_plan(dir.path());
        p.sweep = Sweep { var: SweepVar::CCacheSlots, values: vec![0.0, 1.0, 2.0, 3.0] };
        p.seeds = vec![0, 1, 2];
        let out = run_plan(&p).unwrap();
        let means: Vec<f64> = p
            .sweep
            .values
            .iter()
            .map(|&v| mean(&out.rows().filter(|r| r.sweep_value == Some(v)).map(|r| r.mean_energy_j).collect::<Vec<_>>()))
            .collect();
        assert!(means.windows(2).all(|w| w[1] <= w[0] * 1.0001), "{means:?}");
    }

    #[test]
    fn learning_rate_sweep_writes_loss_curves() {
        let dir = tempfile::tempdir().unwrap();
        let mut p = small_plan(dir.path());
        p.base.horizon_slots = 30;
        p.algorithms = vec![Algorithm::FullLocal];
        p.lstm = Some(TrainHyper { epochs: 5, ..default_forecast_hyper() });
        p.sweep = Sweep { var: SweepVar::LearningRate, values: vec![0.001, 0.01] };
        let out = run_plan(&p).unwrap();
        let text = fs::read_to_string(dir.path().join("fig_lstm_loss.csv")).unwrap();
        assert_eq!(text.lines().count(), 1 + 2 * 5);
        assert!(out.cells.iter().all(|c| c.lstm_curve.is_some()));
    }

    #[test]
    fn forecasts_are_distributions() {
        let mut sc = Scenario::new(SystemConfig { horizon_slots: 30, ..Default::default() }).unwrap();
        attach_forecasts(&mut sc, &TrainHyper { epochs: 3, ..default_forecast_hyper() }, 0).unwrap();
        let pred = sc.predicted.as_ref().unwrap();
        assert_eq!(pred.len(), 30);
        for p in pred {
            assert!((p.probs[0].iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unwritable_output_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        fs::write(&file, b"x").unwrap();
        let p = small_plan(&file.join("sub"));
        assert!(matches!(run_plan(&p).unwrap_err().root(), Error::Io(_)));
    }

    #[test]
    fn rows_reject_bad_values() {
        let row = ResultRow {
            scenario: "s".into(),
            algorithm: "saq".into(),
            sweep_var: "none".into(),
            sweep_value: None,
            seed: 0,
            mean_energy_j: -1.0,
            episodes_to_converge: None,
            infeasible_slots: 0,
            wall_time_s: 0.0,
        };
        assert!(row.validate().is_err());
        let mut buf = Vec::new();
        write_results_csv(&mut buf, &[row]).unwrap();
        assert!(read_results_csv(buf.as_slice()).is_err());
    }
}
