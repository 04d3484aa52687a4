//! Platform trajectory: time-stamped positions with arclength lookups.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// One trajectory record: platform position at a GPS time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectorySample {
    pub gps_time: f64,
    pub position: Vector3<f64>,
}

/// Samples with strictly increasing time and their cumulative arclength.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
    arclength: Vec<f64>,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self> {
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].gps_time > w[0].gps_time) {
                return Err(Error::Trajectory(format!(
                    "time does not increase at sample {} ({} -> {})",
                    i + 1,
                    w[0].gps_time,
                    w[1].gps_time
                )));
            }
        }
        let mut arclength = Vec::with_capacity(samples.len());
        let mut acc = 0.0;
        for (i, s) in samples.iter().enumerate() {
            if i > 0 {
                acc += (s.position - samples[i - 1].position).norm();
            }
            arclength.push(acc);
        }
        Ok(Self { samples, arclength })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.arclength.last().copied().unwrap_or(0.0)
    }

    pub fn time_range(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.gps_time, self.samples.last()?.gps_time))
    }

    /// Segment index `i` with `t ∈ [tᵢ, tᵢ₊₁]` and the fraction within it;
    /// `t` is clamped to the covered time range.
    fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let n = self.samples.len();
        if n == 0 {
            return None;
        }
        if n == 1 || t <= self.samples[0].gps_time {
            return Some((0, 0.0));
        }
        if t >= self.samples[n - 1].gps_time {
            return Some((n - 2, 1.0));
        }
        let upper = self.samples.partition_point(|s| s.gps_time <= t);
        let i = upper - 1;
        let (t0, t1) = (self.samples[i].gps_time, self.samples[i + 1].gps_time);
        Some((i, (t - t0) / (t1 - t0)))
    }

    /// Linearly interpolated position at `t` (clamped to the covered range).
    pub fn position_at(&self, t: f64) -> Option<Vector3<f64>> {
        let (i, f) = self.locate(t)?;
        if self.samples.len() == 1 {
            return Some(self.samples[0].position);
        }
        let a = self.samples[i].position;
        let b = self.samples[i + 1].position;
        Some(a + (b - a) * f)
    }

    /// Distance travelled from the first sample up to time `t`.
    pub fn arclength_at(&self, t: f64) -> f64 {
        match self.locate(t) {
            None => 0.0,
            Some(_) if self.samples.len() == 1 => 0.0,
            Some((i, f)) => {
                self.arclength[i] + (self.arclength[i + 1] - self.arclength[i]) * f
            }
        }
    }

    /// Polyline length travelled within `[t0, t1]`.
    pub fn length_between(&self, t0: f64, t1: f64) -> f64 {
        (self.arclength_at(t1) - self.arclength_at(t0)).max(0.0)
    }

    /// GPS time at which arclength `s` is reached (clamped).
    pub fn time_at_arclength(&self, s: f64) -> Option<f64> {
        let n = self.samples.len();
        if n == 0 {
            return None;
        }
        if n == 1 || s <= 0.0 {
            return Some(self.samples[0].gps_time);
        }
        if s >= self.total_length() {
            return Some(self.samples[n - 1].gps_time);
        }
        let upper = self.arclength.partition_point(|&a| a <= s);
        let i = upper - 1;
        let (s0, s1) = (self.arclength[i], self.arclength[i + 1]);
        let (t0, t1) = (self.samples[i].gps_time, self.samples[i + 1].gps_time);
        let f = if s1 > s0 { (s - s0) / (s1 - s0) } else { 0.0 };
        Some(t0 + (t1 - t0) * f)
    }

    /// Arclength of the trajectory location closest to `p`
    /// (projection onto the nearest polyline segment).
    pub fn project_arclength(&self, p: &Vector3<f64>) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..self.samples.len().saturating_sub(1) {
            let a = self.samples[i].position;
            let b = self.samples[i + 1].position;
            let ab = b - a;
            let len_sq = ab.norm_squared();
            let f = if len_sq > 0.0 {
                ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = (a + ab * f - p).norm_squared();
            if d < best.0 {
                best = (d, self.arclength[i] + (self.arclength[i + 1] - self.arclength[i]) * f);
            }
        }
        best.1
    }
}
