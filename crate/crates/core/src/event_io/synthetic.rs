//! Seeded synthetic event streams used as test and benchmark stimulus.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Event, EventError, EventStream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Independent uniform draws of position, polarity and time.
    UniformRandom,
    /// Events sampled uniformly inside a disk whose center moves at constant
    /// velocity. Pixels on the leading half of the disk fire ON (p = 1),
    /// the trailing half OFF.
    MovingDot {
        /// Pixels per millisecond along x and y.
        velocity: (f64, f64),
        radius: f64,
        /// Disk center at t = 0. Defaults to the position that centers the
        /// whole trajectory on the sensor.
        #[serde(default)]
        start: Option<(f64, f64)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub width: u16,
    pub height: u16,
    pub count: usize,
    /// Timestamps are drawn from `[0, span_us]`.
    pub span_us: u32,
}

pub fn gen_synthetic(
    kind: SyntheticKind,
    params: SyntheticParams,
    seed: u64,
) -> Result<EventStream, EventError> {
    if params.width == 0 || params.height == 0 {
        return Err(EventError::InvalidParams("sensor dimensions must be positive".into()));
    }
    if params.count > u32::MAX as usize {
        return Err(EventError::InvalidParams("too many events for 32-bit indices".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times: Vec<u32> = (0..params.count)
        .map(|_| rng.gen_range(0..=params.span_us))
        .collect();
    times.sort_unstable();

    let mut stream = EventStream::new(params.width, params.height);
    stream.events.reserve(params.count);
    match kind {
        SyntheticKind::UniformRandom => {
            for (n, t) in times.into_iter().enumerate() {
                let x = rng.gen_range(0..params.width);
                let y = rng.gen_range(0..params.height);
                let p = rng.gen_range(0..=1u8);
                stream.events.push(Event::new(x, y, t, p, n as u32));
            }
        }
        SyntheticKind::MovingDot {
            velocity,
            radius,
            start,
        } => {
            let (vx, vy) = velocity;
            if !(vx.is_finite() && vy.is_finite() && radius.is_finite() && radius >= 0.0) {
                return Err(EventError::InvalidParams(
                    "velocity and radius must be finite, radius non-negative".into(),
                ));
            }
            let span_ms = f64::from(params.span_us) / 1000.0;
            let (x0, y0) = start.unwrap_or((
                (f64::from(params.width) - 1.0) / 2.0 - vx * span_ms / 2.0,
                (f64::from(params.height) - 1.0) / 2.0 - vy * span_ms / 2.0,
            ));
            let center = |t: u32| {
                let ms = f64::from(t) / 1000.0;
                (x0 + vx * ms, y0 + vy * ms)
            };
            // The trajectory is linear, so checking both ends covers it.
            let max_x = f64::from(params.width) - 1.0;
            let max_y = f64::from(params.height) - 1.0;
            for (cx, cy) in [center(0), center(params.span_us)] {
                if cx - radius < -0.5
                    || cy - radius < -0.5
                    || cx + radius > max_x + 0.5
                    || cy + radius > max_y + 0.5
                {
                    return Err(EventError::InvalidParams(
                        "moving dot leaves the sensor during the time span".into(),
                    ));
                }
            }
            for (n, t) in times.into_iter().enumerate() {
                let (cx, cy) = center(t);
                let r = radius * rng.gen::<f64>().sqrt();
                let theta = rng.gen::<f64>() * std::f64::consts::TAU;
                let (ox, oy) = (r * theta.cos(), r * theta.sin());
                let x = (cx + ox).round().clamp(0.0, max_x) as u16;
                let y = (cy + oy).round().clamp(0.0, max_y) as u16;
                let p = u8::from(ox * vx + oy * vy >= 0.0);
                stream.events.push(Event::new(x, y, t, p, n as u32));
            }
        }
    }
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(count: usize) -> SyntheticParams {
        SyntheticParams {
            width: 120,
            height: 100,
            count,
            span_us: 100_000,
        }
    }

    #[test]
    fn zero_count_is_empty() {
        let s = gen_synthetic(SyntheticKind::UniformRandom, params(0), 7).unwrap();
        assert!(s.is_empty());
        assert_eq!((s.width, s.height), (120, 100));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let a = gen_synthetic(SyntheticKind::UniformRandom, params(10_000), 1).unwrap();
        let b = gen_synthetic(SyntheticKind::UniformRandom, params(10_000), 1).unwrap();
        let c = gen_synthetic(SyntheticKind::UniformRandom, params(10_000), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.validate().unwrap();
    }

    #[test]
    fn moving_dot_centroid_tracks_velocity() {
        let kind = SyntheticKind::MovingDot {
            velocity: (1.0, 0.0),
            radius: 4.0,
            start: None,
        };
        let s = gen_synthetic(kind, params(20_000), 3).unwrap();
        s.validate().unwrap();

        // Per-millisecond centroids, then a least-squares slope.
        let mut sums = vec![(0.0f64, 0usize); 100];
        for ev in &s.events {
            let w = ((ev.t / 1000) as usize).min(99);
            sums[w].0 += f64::from(ev.x);
            sums[w].1 += 1;
        }
        let pts: Vec<(f64, f64)> = sums
            .iter()
            .enumerate()
            .filter(|(_, (_, c))| *c > 0)
            .map(|(w, (sx, c))| (w as f64 + 0.5, sx / *c as f64))
            .collect();
        let k = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let mx = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let cov: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mx)).sum();
        let var: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
        let slope = cov / var;
        assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn invalid_params_are_rejected() {
        let fast = SyntheticKind::MovingDot {
            velocity: (5.0, 0.0),
            radius: 3.0,
            start: None,
        };
        assert!(matches!(
            gen_synthetic(fast, params(10), 0),
            Err(EventError::InvalidParams(_))
        ));
        let mut p = params(10);
        p.width = 0;
        assert!(gen_synthetic(SyntheticKind::UniformRandom, p, 0).is_err());
        let nan = SyntheticKind::MovingDot {
            velocity: (f64::NAN, 0.0),
            radius: 3.0,
            start: None,
        };
        assert!(gen_synthetic(nan, params(10), 0).is_err());
    }
}
