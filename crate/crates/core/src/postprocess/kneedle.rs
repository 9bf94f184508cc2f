//! Offline Kneedle knee/elbow detection.
//!
//! Follows the behavior of the `kneed` reference package (offline mode, no
//! smoothing): normalize both axes, fold the curve into a concave increasing
//! shape, and walk the difference curve from its first local maximum until it
//! drops below that maximum's threshold.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurveShape {
    #[default]
    Concave,
    Convex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CurveDirection {
    #[default]
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KneedleParams {
    pub shape: CurveShape,
    pub direction: CurveDirection,
    pub sensitivity: f64,
}

impl Default for KneedleParams {
    fn default() -> Self {
        Self {
            shape: CurveShape::Concave,
            direction: CurveDirection::Increasing,
            sensitivity: 1.0,
        }
    }
}

impl KneedleParams {
    /// Orientation for an ascending k-distance curve (flat, then a sharp rise).
    pub fn ascending_kdist() -> Self {
        Self {
            shape: CurveShape::Convex,
            ..Self::default()
        }
    }
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        return None;
    }
    Some(v.iter().map(|&x| (x - lo) / range).collect())
}

/// Indices `i` with `cmp(d[i], d[i-1]) && cmp(d[i], d[i+1])`, neighbors clipped at the ends.
fn extrema(d: &[f64], cmp: impl Fn(f64, f64) -> bool) -> Vec<usize> {
    let n = d.len();
    (0..n)
        .filter(|&i| {
            let prev = d[i.saturating_sub(1)];
            let next = d[(i + 1).min(n - 1)];
            cmp(d[i], prev) && cmp(d[i], next)
        })
        .collect()
}

/// Position of the knee in `(x, y)`; `x` must be strictly increasing.
pub fn knee_index(x: &[f64], y: &[f64], params: KneedleParams) -> Option<usize> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return None;
    }
    let xn = normalize(x)?;
    let mut yn = normalize(y)?;
    match (params.direction, params.shape) {
        (CurveDirection::Decreasing, CurveShape::Concave) => yn.reverse(),
        (CurveDirection::Decreasing, CurveShape::Convex) => yn.iter_mut().for_each(|v| *v = 1.0 - *v),
        (CurveDirection::Increasing, CurveShape::Convex) => {
            yn.iter_mut().for_each(|v| *v = 1.0 - *v);
            yn.reverse();
        }
        (CurveDirection::Increasing, CurveShape::Concave) => {}
    }
    let diff: Vec<f64> = yn.iter().zip(&xn).map(|(y, x)| y - x).collect();
    let maxima = extrema(&diff, |a, b| a >= b);
    let minima = extrema(&diff, |a, b| a <= b);
    let first_max = *maxima.first()?;

    let mean_step = ((xn[n - 1] - xn[0]) / (n - 1) as f64).abs();
    let thresholds: Vec<f64> = maxima
        .iter()
        .map(|&i| diff[i] - params.sensitivity * mean_step)
        .collect();

    let mut next_max = 0;
    let mut threshold = f64::NEG_INFINITY;
    let mut threshold_index = first_max;
    let mut active = true;
    for i in first_max..n - 1 {
        if maxima.binary_search(&i).is_ok() {
            threshold = thresholds[next_max];
            threshold_index = i;
            next_max += 1;
            active = true;
        }
        if minima.binary_search(&i).is_ok() {
            threshold = 0.0;
            active = false;
        }
        if active && diff[i + 1] < threshold {
            let flipped = matches!(
                (params.shape, params.direction),
                (CurveShape::Convex, CurveDirection::Increasing)
                    | (CurveShape::Concave, CurveDirection::Decreasing)
            );
            return Some(if flipped { n - 1 - threshold_index } else { threshold_index });
        }
    }
    None
}

/// Knee of a curve sampled at unit spacing; returns the curve value there.
pub fn kneedle_elbow(curve: &[f64], params: KneedleParams) -> Option<f64> {
    let x: Vec<f64> = (0..curve.len()).map(|i| i as f64).collect();
    knee_index(&x, curve, params).map(|i| curve[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_curve_has_no_knee() {
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        assert_eq!(kneedle_elbow(&y, KneedleParams::default()), None);
        assert_eq!(kneedle_elbow(&y, KneedleParams::ascending_kdist()), None);
    }

    #[test]
    fn flat_curve_has_no_knee() {
        assert_eq!(kneedle_elbow(&[1.0; 8], KneedleParams::default()), None);
    }

    #[test]
    fn too_short() {
        assert_eq!(kneedle_elbow(&[0.0, 1.0], KneedleParams::default()), None);
    }
}
