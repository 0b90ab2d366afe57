use nalgebra::{Matrix5, Vector5};
use serde::{Deserialize, Serialize};

use crate::metrics::{check_pair, mean, MetricsError};

pub const MAX_FIT_ITERATIONS: usize = 200;
const REL_TOL: f64 = 1e-10;

/// `f(x) = b1 (0.5 - 1 / (1 + exp(b2 (x - b3)))) + b4 x + b5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Logistic5Params {
    pub beta: [f64; 5],
}

impl Logistic5Params {
    pub fn apply(&self, x: f64) -> f64 {
        let [b1, b2, b3, b4, b5] = self.beta;
        // 0.5 - sigmoid(-z) = 0.5 tanh(z / 2), stable for large |z|
        b1 * 0.5 * (0.5 * b2 * (x - b3)).tanh() + b4 * x + b5
    }

    pub fn apply_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|x| self.apply(*x)).collect()
    }

    pub fn sse(&self, xs: &[f64], ys: &[f64]) -> f64 {
        xs.iter().zip(ys).map(|(x, y)| (self.apply(*x) - y).powi(2)).sum()
    }

    /// Parameters for raw `x` given a fit on `(x - shift) / scale`.
    fn unstandardize(&self, shift: f64, scale: f64) -> Self {
        let [b1, b2, b3, b4, b5] = self.beta;
        Self {
            beta: [b1, b2 / scale, shift + scale * b3, b4 / scale, b5 - b4 * shift / scale],
        }
    }

    fn gradient(&self, x: f64) -> Vector5<f64> {
        let [b1, b2, b3, _, _] = self.beta;
        let t = (0.5 * b2 * (x - b3)).tanh();
        let ds = 0.25 * (1.0 - t * t);
        Vector5::new(0.5 * t, b1 * ds * (x - b3), -b1 * ds * b2, x, 1.0)
    }
}

/// Least squares of `ys` on `xs`: returns (slope, intercept).
fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(xs), mean(ys));
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Levenberg–Marquardt from one start; never returns a worse SSE than the start.
fn refine(start: Logistic5Params, xs: &[f64], ys: &[f64]) -> Option<(Logistic5Params, f64)> {
    let mut p = start;
    let mut sse = p.sse(xs, ys);
    if !sse.is_finite() {
        return None;
    }
    let mut lambda = 1e-3;
    for _ in 0..MAX_FIT_ITERATIONS {
        let mut jtj = Matrix5::<f64>::zeros();
        let mut jtr = Vector5::<f64>::zeros();
        for (x, y) in xs.iter().zip(ys) {
            let g = p.gradient(*x);
            let r = p.apply(*x) - y;
            jtj += g * g.transpose();
            jtr += g * r;
        }
        let mut improved = false;
        while lambda < 1e16 {
            let mut a = jtj;
            for i in 0..5 {
                a[(i, i)] += lambda * (jtj[(i, i)] + 1e-12);
            }
            if let Some(step) = a.lu().solve(&(-jtr)) {
                let cand = Logistic5Params {
                    beta: std::array::from_fn(|i| p.beta[i] + step[i]),
                };
                let cand_sse = cand.sse(xs, ys);
                if cand_sse.is_finite() && cand_sse < sse {
                    let rel = (sse - cand_sse) / sse.max(f64::MIN_POSITIVE);
                    p = cand;
                    sse = cand_sse;
                    lambda = (lambda / 10.0).max(1e-12);
                    improved = rel >= REL_TOL;
                    if !improved {
                        return Some((p, sse));
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved || sse == 0.0 {
            break;
        }
    }
    Some((p, sse))
}

/// Deterministic multi-start least-squares fit of the logistic mapping.
///
/// Inputs are standardised internally; starts cover both signs of the slope
/// parameter and the pure affine map, so the result is never worse than the
/// ordinary least-squares line.
pub fn fit_logistic5(preds: &[f64], labels: &[f64]) -> Result<Logistic5Params, MetricsError> {
    check_pair(preds, labels, crate::metrics::MIN_FIT_POINTS)?;
    let shift = mean(preds);
    let scale = (preds.iter().map(|x| (x - shift).powi(2)).sum::<f64>() / preds.len() as f64).sqrt();
    if scale == 0.0 {
        return Err(MetricsError::Degenerate("predictions are constant"));
    }
    let xs: Vec<f64> = preds.iter().map(|x| (x - shift) / scale).collect();
    let (slope, intercept) = ols(&xs, labels);
    let range =
        labels.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - labels.iter().cloned().fold(f64::INFINITY, f64::min);
    let mid = median(&xs);
    let my = mean(labels);

    let mut starts = vec![Logistic5Params {
        beta: [0.0, 1.0, mid, slope, intercept],
    }];
    for sign in [1.0, -1.0] {
        for b2 in [1.0, 4.0] {
            starts.push(Logistic5Params {
                beta: [range, sign * b2, mid, slope, intercept],
            });
            starts.push(Logistic5Params {
                beta: [range, sign * b2, mid, 0.0, my],
            });
        }
    }
    starts
        .into_iter()
        .filter_map(|s| refine(s, &xs, labels))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(p, _)| p.unstandardize(shift, scale))
        .ok_or(MetricsError::FitFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn affine_sse(xs: &[f64], ys: &[f64]) -> f64 {
        let (a, b) = ols(xs, ys);
        xs.iter().zip(ys).map(|(x, y)| (a * x + b - y).powi(2)).sum()
    }

    #[test]
    fn evaluates_standard_form() {
        let p = Logistic5Params {
            beta: [2.0, 3.0, 0.5, 0.1, 1.0],
        };
        for x in [-1.0f64, 0.0, 0.5, 2.0] {
            let direct = 2.0 * (0.5 - 1.0 / (1.0 + (3.0 * (x - 0.5)).exp())) + 0.1 * x + 1.0;
            assert!((p.apply(x) - direct).abs() < 1e-14);
        }
        assert!(p.apply(1e6).is_finite() && p.apply(-1e6).is_finite());
    }

    #[test]
    fn recovers_known_parameters() {
        let truth = Logistic5Params {
            beta: [4.0, 1.2, 5.0, 0.1, 2.0],
        };
        let xs: Vec<f64> = (0..40).map(|i| i as f64 * 0.25).collect();
        let ys = truth.apply_all(&xs);
        let fit = fit_logistic5(&xs, &ys).unwrap();
        assert!(fit.sse(&xs, &ys) < 1e-10, "sse {}", fit.sse(&xs, &ys));
        let range = ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min);
        let rmse = (fit.sse(&xs, &ys) / xs.len() as f64).sqrt();
        assert!(rmse < 1e-6 * range);
    }

    #[test]
    fn recovers_decreasing_curve() {
        let truth = Logistic5Params {
            beta: [-3.0, 2.0, 0.3, 0.0, 2.5],
        };
        let xs: Vec<f64> = (0..25).map(|i| -1.0 + i as f64 / 12.0).collect();
        let ys = truth.apply_all(&xs);
        let fit = fit_logistic5(&xs, &ys).unwrap();
        assert!(fit.sse(&xs, &ys) < 1e-10);
    }

    #[test]
    fn never_worse_than_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let n = rng.gen_range(5..30);
            let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
            let fit = fit_logistic5(&xs, &ys).unwrap();
            assert!(fit.sse(&xs, &ys) <= affine_sse(&xs, &ys) * (1.0 + 1e-12) + 1e-12);
        }
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.0, 3.0, 5.0, 7.0, 9.0];
        assert!(fit_logistic5(&xs, &ys).unwrap().sse(&xs, &ys) < 1e-18);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            fit_logistic5(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]),
            Err(MetricsError::TooFew { .. })
        ));
        assert!(matches!(
            fit_logistic5(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]),
            Err(MetricsError::Degenerate(_))
        ));
    }
}
