use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::TraceRow;
use crate::trajectory::RefSample;
use crate::vec3::Vec3;

/// Largest shift searched when estimating tracking lag (s).
pub const DEFAULT_MAX_LAG_S: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("trace has no rows")]
    EmptyTrace,
    #[error("reference has no samples")]
    EmptyReference,
    #[error("trace names drone {drone} but only {offsets} offsets were given")]
    MissingOffset { drone: usize, offsets: usize },
    #[error("trace tick {tick} at t = {trace_t} does not match reference t = {ref_t}")]
    TimeBase { tick: u64, trace_t: f64, ref_t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub mean_error_x: f64,
    pub mean_error_y: f64,
    pub max_error_x: f64,
    pub max_error_y: f64,
    /// Root mean square of the planar error over all drones and ticks.
    pub rmse: f64,
    pub max_speed: f64,
    pub mean_speed: f64,
    /// Shift of the swarm centroid's x series behind the reference's (s).
    pub lag_s: f64,
}

impl Metrics {
    /// Field-wise mean.
    pub fn average(all: &[Metrics]) -> Metrics {
        if all.is_empty() {
            return Metrics::default();
        }
        let n = all.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
        Metrics {
            mean_error_x: avg(|m| m.mean_error_x),
            mean_error_y: avg(|m| m.mean_error_y),
            max_error_x: avg(|m| m.max_error_x),
            max_error_y: avg(|m| m.max_error_y),
            rmse: avg(|m| m.rmse),
            max_speed: avg(|m| m.max_speed),
            mean_speed: avg(|m| m.mean_speed),
            lag_s: avg(|m| m.lag_s),
        }
    }
}

/// Compares each drone against `reference[tick] + offsets[drone]`.
///
/// Trace row ticks index the reference directly; the last sample is held
/// past its end.
pub fn compute_metrics(rows: &[TraceRow], reference: &[RefSample], offsets: &[Vec3]) -> Result<Metrics, MetricsError> {
    compute_metrics_with(rows, reference, offsets, DEFAULT_MAX_LAG_S)
}

pub fn compute_metrics_with(
    rows: &[TraceRow],
    reference: &[RefSample],
    offsets: &[Vec3],
    max_lag_s: f64,
) -> Result<Metrics, MetricsError> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let dt = if reference.len() > 1 { reference[1].t - reference[0].t } else { 0.0 };

    let mut m = Metrics::default();
    let mut sq = 0.0;
    let mut centroid: Vec<(u64, f64, usize)> = Vec::new();
    for r in rows {
        let offset = *offsets
            .get(r.drone_id)
            .ok_or(MetricsError::MissingOffset { drone: r.drone_id, offsets: offsets.len() })?;
        let s = &reference[(r.tick as usize).min(reference.len() - 1)];
        if (r.tick as usize) < reference.len() && (s.t - r.t).abs() > 0.5 * dt.max(1e-9) {
            return Err(MetricsError::TimeBase { tick: r.tick, trace_t: r.t, ref_t: s.t });
        }
        let err = r.position - (s.position + offset);
        let (ex, ey) = (err.x.abs(), err.y.abs());
        m.mean_error_x += ex;
        m.mean_error_y += ey;
        m.max_error_x = m.max_error_x.max(ex);
        m.max_error_y = m.max_error_y.max(ey);
        sq += ex * ex + ey * ey;
        let speed = r.velocity.norm_xy();
        m.max_speed = m.max_speed.max(speed);
        m.mean_speed += speed;
        match centroid.last_mut() {
            Some((tick, x, count)) if *tick == r.tick => {
                *x += r.position.x - offset.x;
                *count += 1;
            }
            _ => centroid.push((r.tick, r.position.x - offset.x, 1)),
        }
    }
    let n = rows.len() as f64;
    m.mean_error_x /= n;
    m.mean_error_y /= n;
    m.mean_speed /= n;
    m.rmse = (sq / n).sqrt();

    let follower: Vec<f64> = centroid.iter().map(|(_, x, c)| x / *c as f64).collect();
    let leader: Vec<f64> =
        centroid.iter().map(|(tick, _, _)| reference[(*tick as usize).min(reference.len() - 1)].position.x).collect();
    let max_lag = if dt > 0.0 { (max_lag_s / dt).round() as usize } else { 0 };
    m.lag_s = best_lag(&leader, &follower, max_lag) as f64 * dt;
    Ok(m)
}

/// Shift `k` (follower behind leader for `k > 0`) maximising the Pearson
/// correlation of `leader[i]` with `follower[i + k]`. Ties keep the
/// smallest |k|.
pub fn best_lag(leader: &[f64], follower: &[f64], max_lag: usize) -> i64 {
    let n = leader.len().min(follower.len());
    let max_lag = max_lag.min(n.saturating_sub(2) / 2) as i64;
    let mut best = (f64::NEG_INFINITY, 0i64);
    for step in 0..=2 * max_lag {
        // 0, 1, -1, 2, -2, ...
        let k = if step % 2 == 1 { (step + 1) / 2 } else { -(step / 2) };
        let (a, b) = if k >= 0 {
            (&leader[..n - k as usize], &follower[k as usize..n])
        } else {
            (&leader[(-k) as usize..n], &follower[..n - (-k) as usize])
        };
        let r = pearson(a, b);
        if r > best.0 + 1e-12 {
            best = (r, k);
        }
    }
    best.1
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if n < 2.0 {
        return f64::NEG_INFINITY;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return f64::NEG_INFINITY;
    }
    cov / (va * vb).sqrt()
}
