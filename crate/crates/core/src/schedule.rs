//! Sampling instants `t_k` and the communication delay bounds derived from
//! them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedGraph;

/// How a schedule is declared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScheduleSpec {
    /// `t_k = k·step` for every `t_k ≤ horizon`.
    Uniform { step: f64, horizon: f64 },
    /// Explicit instants; the horizon defaults to the last instant.
    Explicit {
        times: Vec<f64>,
        horizon: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule {
    times: Vec<f64>,
    horizon: f64,
    uniform_step: Option<f64>,
}

// Absorbs rounding in `horizon / step`.
const SLACK: f64 = 1e-9;

impl SamplingSchedule {
    pub fn new(spec: &ScheduleSpec) -> Result<Self> {
        match spec {
            ScheduleSpec::Uniform { step, horizon } => Self::uniform(*step, *horizon),
            ScheduleSpec::Explicit { times, horizon } => Self::explicit(times.clone(), *horizon),
        }
    }

    pub fn uniform(step: f64, horizon: f64) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(Error::Schedule(format!(
                "uniform step must be positive, got {step}"
            )));
        }
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::Schedule(format!(
                "horizon must be nonnegative, got {horizon}"
            )));
        }
        let count = (horizon / step + SLACK).floor() as usize;
        let times = (0..=count).map(|k| k as f64 * step).collect();
        Ok(Self {
            times,
            horizon,
            uniform_step: Some(step),
        })
    }

    pub fn explicit(times: Vec<f64>, horizon: Option<f64>) -> Result<Self> {
        let first = *times
            .first()
            .ok_or_else(|| Error::Schedule("empty time list".into()))?;
        if first != 0.0 {
            return Err(Error::Schedule(format!("t_0 must be 0, got {first}")));
        }
        if let Some(w) = times
            .windows(2)
            .find(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::Schedule(format!(
                "times must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        let last = *times.last().unwrap();
        let horizon = horizon.unwrap_or(last);
        if horizon < last {
            return Err(Error::Schedule(format!(
                "horizon {horizon} precedes last instant {last}"
            )));
        }
        Ok(Self {
            times,
            horizon,
            uniform_step: None,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn uniform_step(&self) -> Option<f64> {
        self.uniform_step
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// The `k` with `t_k ≤ t < t_{k+1}`; the last interval runs to the horizon.
    pub fn interval_index(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t <= self.horizon) {
            return Err(Error::TimeOutOfRange {
                t,
                horizon: self.horizon,
            });
        }
        Ok(self.times.partition_point(|&tk| tk <= t) - 1)
    }

    /// `τ_i = max_k (t_{k+1} − t_{k−p_i+1})` over `k ≥ p_i − 1`.
    ///
    /// Uniform schedules return the closed form `p_i·h`.
    pub fn node_max_delay(&self, in_degree: usize) -> Result<f64> {
        if in_degree == 0 {
            return Ok(0.0);
        }
        if self.times.len() < in_degree + 1 {
            return Err(Error::Schedule(format!(
                "{} instants cannot hold a polling cycle of length {}",
                self.times.len(),
                in_degree
            )));
        }
        if let Some(h) = self.uniform_step {
            return Ok(in_degree as f64 * h);
        }
        Ok(self
            .times
            .windows(in_degree + 1)
            .map(|w| w[in_degree] - w[0])
            .fold(0.0, f64::max))
    }

    /// Enumerates `t_{k+1} − t_{k−p+1}` directly, ignoring the uniform
    /// closed form.
    pub fn enumerated_max_delay(&self, in_degree: usize) -> Result<f64> {
        if in_degree == 0 {
            return Ok(0.0);
        }
        if self.times.len() < in_degree + 1 {
            return Err(Error::Schedule("schedule too short".into()));
        }
        let mut best = 0.0_f64;
        for k in (in_degree - 1)..(self.times.len() - 1) {
            best = best.max(self.times[k + 1] - self.times[k + 1 - in_degree]);
        }
        Ok(best)
    }

    /// `τ_i` for every node.
    pub fn delay_bounds(&self, graph: &DirectedGraph) -> Result<Vec<f64>> {
        (0..graph.node_count())
            .map(|i| self.node_max_delay(graph.in_degree(i)))
            .collect()
    }

    /// Per-node bounds with optional user overrides, each required to be at
    /// least the exact `τ_i`. The LMIs are then evaluated at the override.
    pub fn delay_bounds_with_overrides(
        &self,
        graph: &DirectedGraph,
        overrides: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let exact = self.delay_bounds(graph)?;
        let Some(bounds) = overrides else {
            return Ok(exact);
        };
        if bounds.len() != exact.len() {
            return Err(Error::Schedule(format!(
                "{} delay overrides for {} nodes",
                bounds.len(),
                exact.len()
            )));
        }
        for (i, (&b, &e)) in bounds.iter().zip(&exact).enumerate() {
            if b < e * (1.0 - SLACK) {
                return Err(Error::Schedule(format!(
                    "override {b} for node {} is below the exact bound {e}",
                    i + 1
                )));
            }
        }
        Ok(bounds.to_vec())
    }

    /// `τ = max_i τ_i`, cross-checked against `max_k (t_{k+1} − t_{k−p̄+1})`.
    pub fn network_max_delay(&self, graph: &DirectedGraph) -> Result<f64> {
        let per_node = self.delay_bounds(graph)?;
        let tau = per_node.into_iter().fold(0.0, f64::max);
        let via_pbar = self.node_max_delay(graph.max_in_degree())?;
        if (tau - via_pbar).abs() > SLACK * tau.max(1.0) {
            return Err(Error::Schedule(format!(
                "delay bounds disagree: max τ_i = {tau}, p̄ formula = {via_pbar}"
            )));
        }
        Ok(tau)
    }
}
