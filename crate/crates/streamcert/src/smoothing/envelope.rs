//! Concave upper envelopes of sampled total-variation curves.
//!
//! Given noisy samples `(distance, tv estimate)` of how total variation grows
//! with perturbation distance, the envelope is the least concave nondecreasing
//! piecewise-linear function through the origin that dominates every sample.
//! A valid envelope is exactly what the performance bound needs, so the
//! construction turns empirical TV measurements into a usable `psi`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A concave, nondecreasing piecewise-linear function on `[0, inf)`.
///
/// Knots have strictly increasing distances, start at `(0, 0)`, carry values
/// in `[0, 1]`, and the function holds its last value constant past the final
/// knot. Instances can only be built through [`concave_upper_envelope`] or
/// [`PsiEnvelope::from_knots`], both of which check the invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvelope", into = "RawEnvelope")]
pub struct PsiEnvelope {
    knots: Vec<(f64, f64)>,
    clamped_inputs: bool,
}

#[derive(Serialize, Deserialize)]
struct RawEnvelope {
    knots: Vec<(f64, f64)>,
    #[serde(default)]
    clamped_inputs: bool,
}

impl TryFrom<RawEnvelope> for PsiEnvelope {
    type Error = Error;
    fn try_from(raw: RawEnvelope) -> Result<Self> {
        let env = PsiEnvelope::from_knots(raw.knots)?;
        Ok(PsiEnvelope {
            clamped_inputs: raw.clamped_inputs,
            ..env
        })
    }
}

impl From<PsiEnvelope> for RawEnvelope {
    fn from(env: PsiEnvelope) -> Self {
        RawEnvelope {
            knots: env.knots,
            clamped_inputs: env.clamped_inputs,
        }
    }
}

impl PsiEnvelope {
    /// Builds an envelope directly from knots, validating every invariant:
    /// origin anchor, strictly increasing distances, values in `[0, 1]`,
    /// nondecreasing, and concave (nonincreasing chord slopes).
    pub fn from_knots(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::domain("envelope needs at least one knot"));
        }
        if knots[0] != (0.0, 0.0) {
            return Err(Error::domain("envelope must start at the origin"));
        }
        let mut prev_slope = f64::INFINITY;
        for i in 1..knots.len() {
            let (d0, v0) = knots[i - 1];
            let (d1, v1) = knots[i];
            if !(d1.is_finite() && v1.is_finite()) || d1 <= d0 {
                return Err(Error::domain(
                    "envelope knots must have finite, strictly increasing distances",
                ));
            }
            if !(0.0..=1.0).contains(&v1) || v1 < v0 {
                return Err(Error::domain(
                    "envelope values must be nondecreasing and within [0, 1]",
                ));
            }
            let slope = (v1 - v0) / (d1 - d0);
            if slope > prev_slope + 1e-12 {
                return Err(Error::domain("envelope must be concave"));
            }
            prev_slope = slope;
        }
        Ok(PsiEnvelope {
            knots,
            clamped_inputs: false,
        })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    /// True when the construction had to clamp input estimates above 1.
    pub fn clamped_inputs(&self) -> bool {
        self.clamped_inputs
    }

    /// Evaluates the envelope at distance `d >= 0`; constant past the last knot.
    pub fn value_at(&self, d: f64) -> Result<f64> {
        if !(d >= 0.0) {
            return Err(Error::domain(format!(
                "envelope distance must be nonnegative, got {d}"
            )));
        }
        let last = *self.knots.last().expect("envelope has knots");
        if d >= last.0 {
            return Ok(last.1);
        }
        // knots are sorted by distance; find the bracketing segment
        let hi = self.knots.partition_point(|&(kd, _)| kd <= d);
        let (d0, v0) = self.knots[hi - 1];
        let (d1, v1) = self.knots[hi];
        let t = (d - d0) / (d1 - d0);
        Ok(v0 + t * (v1 - v0))
    }
}

/// Builds the least concave nondecreasing majorant of TV samples.
///
/// The origin `(0, 0)` is inserted if absent; estimates above 1 are clamped
/// (TV cannot exceed 1) and the result is flagged. Duplicate distances keep
/// their largest estimate. The upper hull is the standard monotone-chain
/// construction; any trailing hull segments with negative slope are replaced
/// by the constant extension past the peak, which preserves domination.
pub fn concave_upper_envelope(samples: &[(f64, f64)]) -> Result<PsiEnvelope> {
    if samples.is_empty() {
        return Err(Error::domain("envelope construction needs samples"));
    }
    let mut clamped = false;
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(samples.len() + 1);
    for &(d, v) in samples {
        if !(d.is_finite() && d >= 0.0) {
            return Err(Error::domain(format!("sample distance must be >= 0, got {d}")));
        }
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::domain(format!(
                "sample estimate must be in [0, 1], got {v}"
            )));
        }
        let v = if v > 1.0 {
            clamped = true;
            1.0
        } else {
            v
        };
        if d == 0.0 && v > 0.0 {
            // No concave function with psi(0) = 0 can dominate such a sample.
            return Err(Error::domain(
                "a sample with positive TV at distance 0 cannot be dominated",
            ));
        }
        pts.push((d, v));
    }
    pts.push((0.0, 0.0));
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    // Collapse duplicate distances onto the largest estimate.
    let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (d, v) in pts {
        match dedup.last_mut() {
            Some(last) if last.0 == d => last.1 = last.1.max(v),
            _ => dedup.push((d, v)),
        }
    }
    if dedup.len() < 2 {
        // Single distinct sample at the origin.
        return Ok(PsiEnvelope {
            knots: vec![(0.0, 0.0)],
            clamped_inputs: clamped,
        });
    }

    // Upper hull, left to right: keep turning clockwise.
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(dedup.len());
    for p in dedup {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }

    // Drop any descending tail: past the peak the envelope stays constant,
    // which still dominates every sample (values are <= the peak there).
    let peak = hull
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.1.partial_cmp(&b.1).expect("finite"))
        .map(|(i, _)| i)
        .expect("hull not empty");
    hull.truncate(peak + 1);

    Ok(PsiEnvelope {
        knots: hull,
        clamped_inputs: clamped,
    })
}
