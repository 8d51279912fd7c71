use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetworkModel;
use crate::error::{arg_err, dim_err, Result};
use crate::linalg::{serde_vector, Vector};

/// Square-integrable signal shapes. Every kind is identically zero outside a
/// finite support window starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalKind {
    Zero,
    /// `amplitude[c]·sin(2π·frequency·t + phase)` on `[0, window)`.
    WindowedSinusoid {
        amplitude: Vec<f64>,
        frequency: f64,
        phase: f64,
        window: f64,
    },
    /// Constant over consecutive `hold`-long pieces on `[0, window)`.
    PiecewiseConstant {
        hold: f64,
        window: f64,
        values: Vec<Vec<f64>>,
    },
    /// Linear interpolation between samples, zero outside `[times[0], times[last])`.
    Samples {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSignal {
    pub dim: usize,
    #[serde(default = "unit_gain")]
    pub gain: f64,
    #[serde(flatten)]
    pub kind: SignalKind,
}

fn unit_gain() -> f64 {
    1.0
}

impl DisturbanceSignal {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            gain: 1.0,
            kind: SignalKind::Zero,
        }
    }

    pub fn sinusoid(amplitude: Vec<f64>, frequency: f64, phase: f64, window: f64) -> Result<Self> {
        if !(window >= 0.0) || !window.is_finite() {
            return arg_err(format!(
                "window must be finite and nonnegative, got {window}"
            ));
        }
        Ok(Self {
            dim: amplitude.len(),
            gain: 1.0,
            kind: SignalKind::WindowedSinusoid {
                amplitude,
                frequency,
                phase,
                window,
            },
        })
    }

    /// Pieces drawn uniformly from `[-amplitude, amplitude]`, expanded from
    /// `seed` at construction.
    pub fn random_piecewise(
        dim: usize,
        amplitude: f64,
        hold: f64,
        window: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(hold > 0.0) || !(window >= 0.0) || !window.is_finite() {
            return arg_err(format!(
                "need hold > 0 and finite window >= 0, got {hold}, {window}"
            ));
        }
        let pieces = (window / hold - 1e-9).ceil().max(0.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..pieces)
            .map(|_| {
                (0..dim)
                    .map(|_| rng.random_range(-1.0..=1.0) * amplitude)
                    .collect()
            })
            .collect();
        Ok(Self {
            dim,
            gain: 1.0,
            kind: SignalKind::PiecewiseConstant {
                hold,
                window,
                values,
            },
        })
    }

    pub fn samples(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return arg_err("samples need at least two (time, value) pairs");
        }
        if times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
            return arg_err("sample times must be nonnegative and strictly increasing");
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return dim_err("sample values differ in length");
        }
        Ok(Self {
            dim,
            gain: 1.0,
            kind: SignalKind::Samples { times, values },
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            gain: self.gain * c,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match &self.kind {
            SignalKind::Zero => true,
            SignalKind::WindowedSinusoid {
                amplitude, window, ..
            } => amplitude.len() == self.dim && *window >= 0.0,
            SignalKind::PiecewiseConstant { hold, values, .. } => {
                *hold > 0.0 && values.iter().all(|v| v.len() == self.dim)
            }
            SignalKind::Samples { times, values } => {
                times.len() >= 2
                    && times.len() == values.len()
                    && values.iter().all(|v| v.len() == self.dim)
            }
        };
        if ok {
            Ok(())
        } else {
            dim_err(format!(
                "malformed disturbance signal of dimension {}",
                self.dim
            ))
        }
    }

    /// End of the support window; the signal vanishes from here on.
    pub fn support_end(&self) -> f64 {
        match &self.kind {
            SignalKind::Zero => 0.0,
            SignalKind::WindowedSinusoid { window, .. } => *window,
            SignalKind::PiecewiseConstant { window, .. } => *window,
            SignalKind::Samples { times, .. } => *times.last().unwrap(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.gain == 0.0 || matches!(self.kind, SignalKind::Zero) || self.support_end() <= 0.0
    }

    pub fn value(&self, t: f64) -> Vector {
        self.value_anchored(t, t)
    }

    /// Value at `t`, with the active piece (and the window test) decided at
    /// `anchor`. Integrators pass the midpoint of the current step so every
    /// stage of a step sees the same smooth branch.
    pub fn value_anchored(&self, t: f64, anchor: f64) -> Vector {
        let mut out = Vector::zeros(self.dim);
        if self.gain == 0.0 || anchor < 0.0 || anchor >= self.support_end() {
            return out;
        }
        match &self.kind {
            SignalKind::Zero => {}
            SignalKind::WindowedSinusoid {
                amplitude,
                frequency,
                phase,
                ..
            } => {
                let s = (2.0 * std::f64::consts::PI * frequency * t + phase).sin();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o = a * s;
                }
            }
            SignalKind::PiecewiseConstant { hold, values, .. } => {
                if values.is_empty() {
                    return out;
                }
                let idx = ((anchor / hold).floor() as usize).min(values.len() - 1);
                for (o, v) in out.iter_mut().zip(&values[idx]) {
                    *o = *v;
                }
            }
            SignalKind::Samples { times, values } => {
                if anchor < times[0] {
                    return out;
                }
                let seg = (times.partition_point(|&s| s <= anchor) - 1).min(times.len() - 2);
                let (t0, t1) = (times[seg], times[seg + 1]);
                let lam = (t - t0) / (t1 - t0);
                for (c, o) in out.iter_mut().enumerate() {
                    *o = values[seg][c] * (1.0 - lam) + values[seg + 1][c] * lam;
                }
            }
        }
        out * self.gain
    }
}

/// `∫‖z‖² dt` by the composite trapezoid rule over the support window.
pub fn l2_norm_squared(signal: &DisturbanceSignal, step: f64) -> Result<f64> {
    if !(step > 0.0) {
        return arg_err(format!("quadrature step must be positive, got {step}"));
    }
    let end = signal.support_end();
    if signal.is_zero() {
        return Ok(0.0);
    }
    let steps = (end / step - 1e-9).ceil().max(1.0) as usize;
    let mut total = 0.0;
    for s in 0..steps {
        let a = s as f64 * step;
        let b = ((s + 1) as f64 * step).min(end);
        let mid = 0.5 * (a + b);
        let fa = signal.value_anchored(a, mid).norm_squared();
        let fb = signal.value_anchored(b, mid).norm_squared();
        total += 0.5 * (b - a) * (fa + fb);
    }
    Ok(total)
}

/// Trapezoid rule over a sampled trace.
pub fn l2_norm_squared_samples(times: &[f64], values: &[Vector]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0].norm_squared() + v[1].norm_squared()))
        .sum()
}

/// One disturbance experiment: initial plant state plus `w` and every `v_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    #[serde(with = "serde_vector")]
    pub x0: Vector,
    pub w: DisturbanceSignal,
    pub v: Vec<DisturbanceSignal>,
}

impl Scenario {
    pub fn unperturbed(name: impl Into<String>, x0: Vector, model: &NetworkModel) -> Self {
        Self {
            name: name.into(),
            x0,
            w: DisturbanceSignal::zero(model.plant().disturbance_dim()),
            v: model
                .nodes()
                .iter()
                .map(|n| DisturbanceSignal::zero(n.noise_dim()))
                .collect(),
        }
    }

    pub fn validate(&self, model: &NetworkModel) -> Result<()> {
        if self.x0.len() != model.plant().state_dim() {
            return dim_err(format!("scenario `{}`: x0 has wrong length", self.name));
        }
        if self.w.dim != model.plant().disturbance_dim() {
            return dim_err(format!(
                "scenario `{}`: w has dimension {}",
                self.name, self.w.dim
            ));
        }
        if self.v.len() != model.node_count() {
            return dim_err(format!(
                "scenario `{}`: {} noise signals for {} nodes",
                self.name,
                self.v.len(),
                model.node_count()
            ));
        }
        for (i, v) in self.v.iter().enumerate() {
            if v.dim != model.node(i).noise_dim() {
                return dim_err(format!(
                    "scenario `{}`: v{} has dimension {}",
                    self.name,
                    i + 1,
                    v.dim
                ));
            }
            v.validate()?;
        }
        self.w.validate()
    }

    /// `ξ_i = [w; v_i]`.
    pub fn xi(&self, i: usize, t: f64, anchor: f64) -> Vector {
        let w = self.w.value_anchored(t, anchor);
        let v = self.v[i].value_anchored(t, anchor);
        Vector::from_iterator(w.len() + v.len(), w.iter().chain(v.iter()).copied())
    }

    /// Disturbances multiplied by `c`; the initial state is kept.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            name: format!("{}*{c}", self.name),
            x0: self.x0.clone(),
            w: self.w.scaled(c),
            v: self.v.iter().map(|s| s.scaled(c)).collect(),
        }
    }

    pub fn is_unperturbed(&self) -> bool {
        self.w.is_zero() && self.v.iter().all(DisturbanceSignal::is_zero)
    }

    /// Latest instant at which any component is nonzero.
    pub fn support_end(&self) -> f64 {
        self.v
            .iter()
            .map(DisturbanceSignal::support_end)
            .fold(self.w.support_end(), f64::max)
    }

    /// Seeded battery of disturbed scenarios. Piece boundaries and windows are
    /// multiples of `align` (normally the sampling step) so they fall on
    /// integration grid points.
    pub fn battery(model: &NetworkModel, count: usize, seed: u64, align: f64) -> Result<Vec<Self>> {
        if !(align > 0.0) {
            return arg_err("battery alignment step must be positive");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let plant = model.plant();
        let snap = |t: f64| (t / align).round().max(1.0) * align;
        let mut out = Vec::with_capacity(count);
        for s in 0..count {
            let window = snap([4.0, 8.0, 12.0][s % 3]);
            let hold = snap(align * [1.0, 2.0, 5.0][rng.random_range(0..3usize)]);
            let sinusoid = |rng: &mut ChaCha8Rng, dim: usize, scale: f64| {
                let amp = (0..dim)
                    .map(|_| rng.random_range(0.2..1.0) * scale)
                    .collect();
                DisturbanceSignal::sinusoid(
                    amp,
                    rng.random_range(0.05..1.5),
                    rng.random_range(0.0..std::f64::consts::TAU),
                    window,
                )
            };
            let (w, v) = if s % 2 == 0 {
                let w = sinusoid(&mut rng, plant.disturbance_dim(), 1.0)?;
                let v = model
                    .nodes()
                    .iter()
                    .map(|n| {
                        DisturbanceSignal::random_piecewise(
                            n.noise_dim(),
                            0.5,
                            hold,
                            window,
                            rng.random(),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                (w, v)
            } else {
                let w = DisturbanceSignal::random_piecewise(
                    plant.disturbance_dim(),
                    1.0,
                    hold,
                    window,
                    rng.random(),
                )?;
                let v = model
                    .nodes()
                    .iter()
                    .map(|n| sinusoid(&mut rng, n.noise_dim(), 0.5))
                    .collect::<Result<Vec<_>>>()?;
                (w, v)
            };
            let x0 = if s % 4 == 3 {
                Vector::zeros(plant.state_dim())
            } else {
                plant.x0() * rng.random_range(-1.0..1.0)
            };
            out.push(Self {
                name: format!("battery-{:02}", s + 1),
                x0,
                w,
                v,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_signal_has_zero_energy() {
        assert_eq!(
            l2_norm_squared(&DisturbanceSignal::zero(2), 0.01).unwrap(),
            0.0
        );
    }

    #[test]
    fn sinusoid_energy_closed_form() {
        // ∫_0^1 sin²(2πt) dt = 1/2
        let s = DisturbanceSignal::sinusoid(vec![1.0], 1.0, 0.0, 1.0).unwrap();
        assert!((l2_norm_squared(&s, 1e-3).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn constant_energy() {
        let s =
            DisturbanceSignal::sinusoid(vec![1.0], 0.0, std::f64::consts::FRAC_PI_2, 2.0).unwrap();
        assert!((l2_norm_squared(&s, 0.01).unwrap() - 2.0).abs() < 1e-12);
        assert!(l2_norm_squared(&s, -0.1).is_err());
    }

    #[test]
    fn generated_signals_vanish_after_window() {
        let r = DisturbanceSignal::random_piecewise(3, 2.0, 0.1, 1.0, 9).unwrap();
        assert_eq!(r.value(1.0).norm(), 0.0);
        assert_eq!(r.value(7.3).norm(), 0.0);
        assert!(l2_norm_squared(&r, 0.01).unwrap().is_finite());
        // same seed, same pieces
        assert_eq!(
            r,
            DisturbanceSignal::random_piecewise(3, 2.0, 0.1, 1.0, 9).unwrap()
        );
    }

    #[test]
    fn piecewise_energy_exact_at_aligned_step() {
        let r = DisturbanceSignal::random_piecewise(1, 1.0, 0.5, 2.0, 1).unwrap();
        let SignalKind::PiecewiseConstant { values, .. } = &r.kind else {
            unreachable!()
        };
        let exact: f64 = values.iter().map(|v| 0.5 * v[0] * v[0]).sum();
        assert!((l2_norm_squared(&r, 0.1).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn samples_interpolate() {
        let s =
            DisturbanceSignal::samples(vec![0.0, 1.0, 2.0], vec![vec![0.0], vec![2.0], vec![0.0]])
                .unwrap();
        assert!((s.value(0.5)[0] - 1.0).abs() < 1e-15);
        assert!((s.value(1.5)[0] - 1.0).abs() < 1e-15);
        assert_eq!(s.value(2.5)[0], 0.0);
        // ∫ of the hat squared = 2·∫_0^1 (2t)² dt = 8/3
        assert!((l2_norm_squared(&s, 1e-3).unwrap() - 8.0 / 3.0).abs() < 1e-5);
    }
}
