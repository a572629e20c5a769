use rand::Rng as _;
use statrs::function::erf::{erf, erfc, erfc_inv};

use super::space::{ParamDomain, ParamKind, ParamValue};
use crate::rng::Rng;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Standard normal CDF.
fn phi(t: f64) -> f64 {
    0.5 * erfc(-t / SQRT_2)
}

/// Standard normal mass on `[a, b]`, computed on the side of zero where it
/// does not cancel.
fn mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        0.5 * (erfc(a / SQRT_2) - erfc(b / SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b / SQRT_2) - erfc(-a / SQRT_2))
    } else {
        0.5 * (erf(b / SQRT_2) - erf(a / SQRT_2))
    }
}

/// Density model for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParzenEstimator {
    /// Mixture of Gaussians truncated to `[low, high]` in internal
    /// coordinates (log for log kinds). The last component is the prior.
    Continuous {
        centers: Vec<f64>,
        bandwidths: Vec<f64>,
        weights: Vec<f64>,
        low: f64,
        high: f64,
    },
    Categorical {
        weights: Vec<f64>,
    },
}

/// Fits the estimator for `domain` from observed values.
///
/// Values of the wrong kind or outside the domain are ignored.
pub fn parzen_fit(values: &[&ParamValue], domain: &ParamDomain) -> ParzenEstimator {
    if let ParamKind::Categorical { choices } = &domain.kind {
        let mut weights = vec![1.0; choices.len()];
        for v in values {
            if let Some(i) = domain.to_internal(v) {
                weights[i as usize] += 1.0;
            }
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        return ParzenEstimator::Categorical { weights };
    }

    let (low, high) = domain.internal_bounds().expect("numeric domain");
    let width = high - low;
    let mut centers: Vec<f64> = values
        .iter()
        .filter(|v| domain.contains(v))
        .filter_map(|v| domain.to_internal(v))
        .collect();
    centers.sort_by(f64::total_cmp);

    // Farther sorted neighbour, with the domain bounds standing in at the
    // ends. The floor shrinks from w/2 towards w/100 as observations accrue;
    // a fixed w/100 lets a tight early cluster creep along in tiny steps.
    let floor = width / 100f64.min(centers.len() as f64 + 1.0);
    let mut bandwidths: Vec<f64> = (0..centers.len())
        .map(|i| {
            let left = if i == 0 { low } else { centers[i - 1] };
            let right = if i + 1 == centers.len() { high } else { centers[i + 1] };
            (centers[i] - left).max(right - centers[i]).clamp(floor, width)
        })
        .collect();
    centers.push(0.5 * (low + high));
    bandwidths.push(width);

    let n = centers.len();
    ParzenEstimator::Continuous {
        centers,
        bandwidths,
        weights: vec![1.0 / n as f64; n],
        low,
        high,
    }
}

impl ParzenEstimator {
    /// Log-density at internal coordinate `x` (category index for
    /// categorical estimators).
    pub fn log_pdf(&self, x: f64) -> f64 {
        match self {
            ParzenEstimator::Categorical { weights } => {
                let i = x.round();
                if i < 0.0 || i as usize >= weights.len() {
                    f64::NEG_INFINITY
                } else {
                    weights[i as usize].ln()
                }
            }
            ParzenEstimator::Continuous {
                centers,
                bandwidths,
                weights,
                low,
                high,
            } => {
                if x < *low || x > *high {
                    return f64::NEG_INFINITY;
                }
                let terms: Vec<f64> = centers
                    .iter()
                    .zip(bandwidths)
                    .zip(weights)
                    .map(|((&mu, &sigma), &w)| {
                        let z = (x - mu) / sigma;
                        let norm = mass((low - mu) / sigma, (high - mu) / sigma);
                        w.ln() - 0.5 * z * z - sigma.ln() - LN_SQRT_2PI - norm.ln()
                    })
                    .collect();
                let m = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// Draws one internal coordinate.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match self {
            ParzenEstimator::Categorical { weights } => pick(weights, rng.random::<f64>()) as f64,
            ParzenEstimator::Continuous {
                centers,
                bandwidths,
                weights,
                low,
                high,
            } => {
                let k = pick(weights, rng.random::<f64>());
                let (mu, sigma) = (centers[k], bandwidths[k]);
                let pa = phi((low - mu) / sigma);
                let pb = phi((high - mu) / sigma);
                let u = pa + (pb - pa) * rng.random::<f64>();
                let u = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                let x = mu - SQRT_2 * sigma * erfc_inv(2.0 * u);
                x.clamp(*low, *high)
            }
        }
    }
}

fn pick(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Snaps an internal coordinate onto the values `domain` can actually take.
pub(crate) fn snap(domain: &ParamDomain, x: f64) -> (ParamValue, f64) {
    let v = domain.from_internal(x);
    let x = match domain.kind {
        ParamKind::Uniform { .. } | ParamKind::LogUniform { .. } => x,
        _ => domain.to_internal(&v).expect("value from own domain"),
    };
    (v, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn integrate(est: &ParzenEstimator, a: f64, b: f64) -> f64 {
        // composite Simpson
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = est.pdf(a) + est.pdf(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * est.pdf(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn pdf_integrates_to_one() {
        let domains = [
            ParamDomain::uniform("u", 0.0, 1.0),
            ParamDomain::log_uniform("l", 1e-5, 1e-1),
            ParamDomain::int_uniform("i", 16, 256),
        ];
        let obs = [
            vec![
                ParamValue::Float(0.0),
                ParamValue::Float(0.31),
                ParamValue::Float(0.33),
                ParamValue::Float(1.0),
            ],
            vec![ParamValue::Float(1e-3), ParamValue::Float(2e-5)],
            vec![ParamValue::Int(16), ParamValue::Int(100), ParamValue::Int(101)],
        ];
        for (d, o) in domains.iter().zip(&obs) {
            for k in 0..=o.len() {
                let refs: Vec<&ParamValue> = o[..k].iter().collect();
                let est = parzen_fit(&refs, d);
                let (lo, hi) = d.internal_bounds().unwrap();
                let total = integrate(&est, lo, hi);
                assert!((total - 1.0).abs() < 1e-6, "{} with {k} obs: {total}", d.name);
            }
        }
    }

    #[test]
    fn weights_positive_and_normalized() {
        let d = ParamDomain::uniform("u", -1.0, 1.0);
        let vals = [ParamValue::Float(0.2), ParamValue::Float(0.2), ParamValue::Float(-0.9)];
        let refs: Vec<&ParamValue> = vals.iter().collect();
        match parzen_fit(&refs, &d) {
            ParzenEstimator::Continuous {
                weights, bandwidths, ..
            } => {
                assert_eq!(weights.len(), 4);
                assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
                assert!(bandwidths.iter().all(|b| (0.02..=2.0).contains(b)));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn bandwidth_floor_follows_observation_count() {
        let d = ParamDomain::uniform("u", 0.0, 1.0);
        let bw = |n: usize| {
            let vals = vec![ParamValue::Float(0.5); n];
            let refs: Vec<&ParamValue> = vals.iter().collect();
            match parzen_fit(&refs, &d) {
                ParzenEstimator::Continuous { bandwidths, .. } => bandwidths,
                _ => unreachable!(),
            }
        };
        assert_eq!(bw(3), vec![0.5, 0.25, 0.5, 1.0]);
        assert_eq!(bw(150)[1], 0.01);
    }

    #[test]
    fn prior_only_samples_stay_in_bounds() {
        let d = ParamDomain::uniform("u", 0.0, 1.0);
        let est = parzen_fit(&[], &d);
        let mut r = rng::seeded(1);
        for _ in 0..10_000 {
            let x = est.sample(&mut r);
            assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn categorical_smoothing() {
        let d = ParamDomain::categorical("c", &["true", "false"]);
        let t = ParamValue::Categorical("true".into());
        let est = parzen_fit(&[&t, &t], &d);
        assert_eq!(
            est,
            ParzenEstimator::Categorical {
                weights: vec![0.75, 0.25]
            }
        );
    }

    #[test]
    fn log_fit_concentrates_in_observed_decade() {
        let d = ParamDomain::log_uniform("lr", 1e-5, 1e-1);
        let v = ParamValue::Float(1e-3);
        let est = parzen_fit(&[&v], &d);
        let ln10 = 10f64.ln();
        let near = integrate(&est, (1e-3f64).ln() - ln10 / 2.0, (1e-3f64).ln() + ln10 / 2.0);
        for k in 0..4 {
            let a = (1e-5f64).ln() + k as f64 * ln10;
            let other = integrate(&est, a, a + ln10);
            assert!(near > other, "decade {k}: {other} vs {near}");
        }
    }

    #[test]
    fn sampling_matches_density() {
        // histogram of draws vs integrated pdf on 10 bins
        let d = ParamDomain::uniform("u", 0.0, 1.0);
        let vals = [ParamValue::Float(0.8), ParamValue::Float(0.85), ParamValue::Float(0.1)];
        let refs: Vec<&ParamValue> = vals.iter().collect();
        let est = parzen_fit(&refs, &d);
        let mut r = rng::seeded(2);
        let n = 200_000;
        let mut counts = [0usize; 10];
        for _ in 0..n {
            counts[((est.sample(&mut r) * 10.0) as usize).min(9)] += 1;
        }
        for (b, &c) in counts.iter().enumerate() {
            let p = integrate(&est, b as f64 / 10.0, (b + 1) as f64 / 10.0);
            assert!((c as f64 / n as f64 - p).abs() < 0.005, "bin {b}");
        }
    }
}
