//! Synthetic survey + rich-list data drawn from a model.
//!
//! The rich list holds the exact top-`K` order statistics of `P` draws without
//! materializing them: with `U_(1) > U_(2) > ...` the descending uniform order
//! statistics, `U_(1) = V_1^{1/P}` and `U_(r+1) = U_(r) V_{r+1}^{1/(P-r)}`
//! (each factor is Beta(P-r, 1)). Working with survival probabilities
//! `s_r = 1 - U_(r)` in log1p form keeps precision when `s_r ~ 1/P`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::empirical::IncomeSample;
use crate::error::{Error, Result};
use crate::model::EyfModel;

const SURVEY_STREAM: u64 = 0;
const TAIL_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    /// Survey records drawn iid from the population.
    pub n: usize,
    pub population: u64,
    /// Size of the rich list (exact top-K of the population).
    pub rich_k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub survey: IncomeSample,
    pub rich_list: Option<IncomeSample>,
    pub population: u64,
}

/// Survival probabilities of the `k` largest of `population` iid draws, richest first.
pub fn top_k_survival<R: Rng + ?Sized>(population: u64, k: usize, rng: &mut R) -> Result<Vec<f64>> {
    if k as u64 > population {
        return Err(Error::Domain(format!(
            "rich list of {k} exceeds population {population}"
        )));
    }
    let mut ln_u = 0.0;
    let mut out = Vec::with_capacity(k);
    for r in 0..k as u64 {
        // V in (0, 1]
        let v = 1.0 - rng.random::<f64>();
        ln_u += v.ln() / (population - r) as f64;
        out.push(-ln_u.exp_m1());
    }
    Ok(out)
}

pub fn synthesize(model: &EyfModel, spec: &SynthSpec) -> Result<SynthData> {
    if spec.n == 0 {
        return Err(Error::Domain("survey size must be at least 1".into()));
    }
    if spec.n as u64 > spec.population {
        return Err(Error::Domain(format!(
            "survey of {} exceeds population {}",
            spec.n, spec.population
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(SURVEY_STREAM);
    let survey = (0..spec.n).map(|_| model.draw(&mut rng)).collect::<Result<Vec<_>>>()?;
    let survey = IncomeSample::new(survey, None, "survey")?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(TAIL_STREAM);
    let survival = top_k_survival(spec.population, spec.rich_k, &mut rng)?;
    let rich_list = if survival.is_empty() {
        None
    } else {
        let values = survival
            .iter()
            .map(|&s| model.quantile(s))
            .collect::<Result<Vec<_>>>()?;
        Some(IncomeSample::new(values, None, "rich-list")?)
    };
    Ok(SynthData {
        survey,
        rich_list,
        population: spec.population,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_one_has_expected_survival() {
        // E[s_1] = 1/(P+1) for the maximum of P uniforms
        let p = 1000u64;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let reps = 20_000;
        let mean: f64 = (0..reps)
            .map(|_| top_k_survival(p, 1, &mut rng).unwrap()[0])
            .sum::<f64>()
            / reps as f64;
        let expected = 1.0 / (p + 1) as f64;
        // sd of s_1 is about 1/P; standard error over 2e4 reps is ~0.7%
        assert!((mean - expected).abs() / expected < 0.03, "{mean}");
    }

    #[test]
    fn order_statistics_are_increasing_in_survival() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = top_k_survival(1_000_000, 100, &mut rng).unwrap();
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(s.iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn k_above_population_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(top_k_survival(3, 4, &mut rng).is_err());
        assert_eq!(top_k_survival(3, 3, &mut rng).unwrap().len(), 3);
    }
}
