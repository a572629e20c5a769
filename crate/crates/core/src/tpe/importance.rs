use super::space::{ParamKind, SearchSpace};
use super::Trial;
use crate::error::{Error, Result};

/// Minimum number of complete trials accepted by [`importance`].
pub const MIN_TRIALS: usize = 20;

/// Binned main-effect importance, in space order, summing to 1.
///
/// For each parameter the complete trials are sorted by that parameter and
/// cut into `q = min(8, ⌊n/5⌋)` equal-count bins (categoricals are binned by
/// category instead). The score is the variance of the per-bin mean
/// objectives, normalized over parameters. If every variance is zero the
/// scores are uniform.
pub fn importance(history: &[Trial], space: &SearchSpace) -> Result<Vec<(String, f64)>> {
    let complete: Vec<(&Trial, f64)> = history
        .iter()
        .filter_map(|t| t.complete_value().map(|v| (t, v)))
        .collect();
    let n = complete.len();
    if n < MIN_TRIALS {
        return Err(Error::usage(format!(
            "importance needs at least {MIN_TRIALS} complete trials, found {n}"
        )));
    }
    if space.is_empty() {
        return Ok(Vec::new());
    }
    let q = (n / 5).min(8);

    let mut raw = Vec::with_capacity(space.len());
    for domain in &space.params {
        let mut points: Vec<(f64, u64, f64)> = complete
            .iter()
            .map(|(t, v)| {
                let x = t
                    .params
                    .get(&domain.name)
                    .and_then(|p| domain.to_internal(p))
                    .unwrap_or(f64::NAN);
                (x, t.id, *v)
            })
            .collect();
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        let bins: Vec<&[(f64, u64, f64)]> = match &domain.kind {
            ParamKind::Categorical { .. } => points.chunk_by(|a, b| a.0 == b.0).collect(),
            _ => (0..q).map(|i| &points[i * n / q..(i + 1) * n / q]).collect(),
        };
        let means: Vec<f64> = bins
            .iter()
            .filter(|b| !b.is_empty())
            .map(|b| b.iter().map(|p| p.2).sum::<f64>() / b.len() as f64)
            .collect();
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / means.len() as f64;
        raw.push((domain.name.clone(), var));
    }

    let total: f64 = raw.iter().map(|r| r.1).sum();
    let d = raw.len() as f64;
    Ok(raw
        .into_iter()
        .map(|(name, v)| (name, if total > 0.0 { v / total } else { 1.0 / d }))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tpe::{ParamDomain, ParamValue, TrialState};

    fn space() -> SearchSpace {
        SearchSpace::new(vec![
            ParamDomain::uniform("a", 0.0, 1.0),
            ParamDomain::log_uniform("b", 1e-4, 1.0),
            ParamDomain::int_uniform("c", 1, 100),
            ParamDomain::uniform("d", -1.0, 1.0),
            ParamDomain::categorical("e", &["x", "y", "z"]),
        ])
        .unwrap()
    }

    fn study(n: u64, f: impl Fn(&crate::tpe::ParamMap) -> f64) -> Vec<Trial> {
        let s = space();
        let mut r = rng::seeded(11);
        (1..=n)
            .map(|id| {
                let params = s.sample_uniform(&mut r);
                Trial {
                    id,
                    state: TrialState::Complete,
                    seed: id,
                    value: Some(f(&params)),
                    params,
                }
            })
            .collect()
    }

    #[test]
    fn single_driver_dominates() {
        let h = study(100, |p| {
            let a = p["a"].as_f64().unwrap();
            -(a - 0.3).powi(2) * 10.0
        });
        let scores = importance(&h, &space()).unwrap();
        let total: f64 = scores.iter().map(|s| s.1).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(scores[0].0, "a");
        assert!(scores[0].1 >= 0.6, "{scores:?}");
    }

    #[test]
    fn constant_objective_is_uniform() {
        let h = study(30, |_| -1.0);
        for (_, s) in importance(&h, &space()).unwrap() {
            assert_eq!(s, 0.2);
        }
    }

    #[test]
    fn categorical_driver_detected() {
        let h = study(60, |p| {
            if p["e"] == ParamValue::Categorical("y".into()) {
                1.0
            } else {
                0.0
            }
        });
        let scores = importance(&h, &space()).unwrap();
        assert!(scores[4].1 >= 0.6, "{scores:?}");
    }

    #[test]
    fn too_few_trials() {
        let h = study(19, |_| 0.0);
        assert!(matches!(importance(&h, &space()), Err(Error::Usage(_))));
    }
}
