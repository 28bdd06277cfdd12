use crate::error::{Error, Result};
use crate::numerics::SeededRng;

/// Token-selection rule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Strategy {
    Greedy,
    TopK(usize),
    TopP(f64),
}

/// Decoding settings.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationConfig {
    pub strategy: Strategy,
    pub temperature: f64,
    pub max_tokens: usize,
    /// End-of-speech is suppressed until this many ids have been emitted.
    pub min_tokens: usize,
    pub seed: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Greedy,
            temperature: 1.0,
            max_tokens: 1024,
            min_tokens: 1,
            seed: 0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Parameter(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        match self.strategy {
            Strategy::TopK(0) => return Err(Error::Parameter("top-k needs k ≥ 1".into())),
            Strategy::TopP(p) if !(p > 0.0 && p <= 1.0) => {
                return Err(Error::Parameter(format!("top-p needs 0 < p ≤ 1, got {p}")))
            }
            _ => {}
        }
        if self.min_tokens > self.max_tokens {
            return Err(Error::Parameter(format!(
                "min_tokens {} exceeds max_tokens {}",
                self.min_tokens, self.max_tokens
            )));
        }
        Ok(())
    }
}

/// Picks the next id from a `speech_vocab + 1` logit row whose last entry is
/// end-of-speech. `emitted` is the number of ids produced so far.
pub fn sample(
    logits: &[f32],
    config: &GenerationConfig,
    emitted: usize,
    rng: &mut SeededRng,
) -> Result<u32> {
    config.validate()?;
    if logits.len() < 2 {
        return Err(Error::Parameter("need at least one codeword plus end-of-speech".into()));
    }
    let eos = logits.len() - 1;
    let allowed = if emitted < config.min_tokens { eos } else { logits.len() };
    let scores = &logits[..allowed];

    // candidates by descending score, lowest id first among equals
    let mut order: Vec<usize> = (0..allowed).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let keep = match config.strategy {
        Strategy::Greedy => return Ok(order[0] as u32),
        Strategy::TopK(k) => k.min(allowed),
        Strategy::TopP(_) => allowed,
    };
    let top = scores[order[0]] as f64;
    let mut probs: Vec<f64> = order[..keep]
        .iter()
        .map(|&i| ((scores[i] as f64 - top) / config.temperature).exp())
        .collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);

    if let Strategy::TopP(p) = config.strategy {
        let mut cum = 0.0;
        let mut cut = probs.len();
        for (i, &q) in probs.iter().enumerate() {
            cum += q;
            if cum >= p {
                cut = i + 1;
                break;
            }
        }
        probs.truncate(cut);
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|q| *q /= total);
    }

    let u = rng.uniform();
    let mut cum = 0.0;
    for (i, &q) in probs.iter().enumerate() {
        cum += q;
        if u < cum {
            return Ok(order[i] as u32);
        }
    }
    Ok(order[probs.len() - 1] as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(strategy: Strategy) -> GenerationConfig {
        GenerationConfig {
            strategy,
            min_tokens: 0,
            ..Default::default()
        }
    }

    #[test]
    fn greedy_takes_argmax_and_lowest_tie() {
        let mut rng = SeededRng::new(0);
        let c = cfg(Strategy::Greedy);
        assert_eq!(sample(&[1.0, 3.0, 2.0], &c, 0, &mut rng).unwrap(), 1);
        assert_eq!(sample(&[5.0, 5.0, 1.0], &c, 0, &mut rng).unwrap(), 0);
    }

    #[test]
    fn end_of_speech_is_masked_before_min_tokens() {
        let mut rng = SeededRng::new(0);
        let c = GenerationConfig {
            min_tokens: 2,
            ..cfg(Strategy::Greedy)
        };
        let logits = [0.0, 1.0, 9.0];
        assert_eq!(sample(&logits, &c, 1, &mut rng).unwrap(), 1);
        assert_eq!(sample(&logits, &c, 2, &mut rng).unwrap(), 2);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut rng = SeededRng::new(0);
        for bad in [
            cfg(Strategy::TopK(0)),
            cfg(Strategy::TopP(0.0)),
            cfg(Strategy::TopP(1.5)),
            GenerationConfig {
                temperature: 0.0,
                ..cfg(Strategy::Greedy)
            },
            GenerationConfig {
                max_tokens: 0,
                min_tokens: 1,
                ..cfg(Strategy::Greedy)
            },
        ] {
            assert!(matches!(sample(&[0.0, 1.0], &bad, 0, &mut rng), Err(Error::Parameter(_))));
        }
    }
}
