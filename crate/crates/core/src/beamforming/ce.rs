//! Cross-entropy search over per-element discrete phase indices.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{IsacError, Result};

/// Sampling budget and stopping rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeParams {
    pub samples: usize,
    pub elites: usize,
    pub kappa: f64,
    pub max_iterations: usize,
    pub bits: u32,
}

impl CeParams {
    pub fn validate(&self) -> Result<()> {
        if self.elites == 0 || self.elites > self.samples {
            return Err(IsacError::InvalidConfiguration(format!(
                "{} elites out of {} samples",
                self.elites, self.samples
            )));
        }
        if !(self.kappa > 0.0) || self.max_iterations == 0 || self.bits == 0 || self.bits > 16 {
            return Err(IsacError::InvalidConfiguration(format!("cross-entropy parameters {self:?}")));
        }
        Ok(())
    }

    pub fn levels(&self) -> usize {
        1 << self.bits
    }
}

/// Per-element categorical distributions, stored element-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CeState {
    pub levels: usize,
    pub elements: usize,
    pub probs: Vec<f64>,
    pub iteration: usize,
}

impl CeState {
    pub fn uniform(levels: usize, elements: usize) -> Self {
        Self { levels, elements, probs: vec![1.0 / levels as f64; levels * elements], iteration: 0 }
    }

    pub fn column(&self, element: usize) -> &[f64] {
        &self.probs[element * self.levels..(element + 1) * self.levels]
    }

    /// Replaces every column by the level frequencies among `elites`.
    pub fn update<'a, I>(&mut self, elites: I)
    where
        I: IntoIterator<Item = &'a [u16]>,
    {
        let mut counts = vec![0usize; self.probs.len()];
        let mut n = 0usize;
        for e in elites {
            for (m, &l) in e.iter().enumerate() {
                counts[m * self.levels + l as usize] += 1;
            }
            n += 1;
        }
        if n == 0 {
            return;
        }
        for (p, c) in self.probs.iter_mut().zip(counts) {
            *p = c as f64 / n as f64;
        }
        self.iteration += 1;
    }

    fn samplers(&self) -> Vec<Sampler> {
        let uniform = 1.0 / self.levels as f64;
        (0..self.elements)
            .map(|m| {
                let col = self.column(m);
                if col.iter().all(|&p| p == uniform) {
                    return Sampler::Uniform(self.levels);
                }
                let mut cdf = Vec::new();
                let mut support = Vec::new();
                let mut acc = 0.0;
                for (l, &p) in col.iter().enumerate() {
                    if p > 0.0 {
                        acc += p;
                        cdf.push(acc);
                        support.push(l as u16);
                    }
                }
                match support.len() {
                    0 => Sampler::Fixed(0),
                    1 => Sampler::Fixed(support[0]),
                    _ => Sampler::Cdf(cdf, support),
                }
            })
            .collect()
    }
}

/// Per-element categorical sampler over the support of its column.
enum Sampler {
    Uniform(usize),
    Fixed(u16),
    Cdf(Vec<f64>, Vec<u16>),
}

impl Sampler {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u16 {
        match self {
            Sampler::Fixed(l) => *l,
            Sampler::Uniform(n) => {
                let u: f64 = rng.random();
                ((u * *n as f64) as usize).min(n - 1) as u16
            }
            Sampler::Cdf(cdf, support) => {
                let u: f64 = rng.random();
                let i = cdf.partition_point(|&c| c <= u);
                support[i.min(support.len() - 1)]
            }
        }
    }
}

/// Result of a cross-entropy run.
#[derive(Debug, Clone, PartialEq)]
pub struct CeOutcome {
    pub best: Vec<u16>,
    pub best_score: f64,
    pub iterations: usize,
    /// Stopped by the score-spread rule rather than the iteration cap.
    pub converged: bool,
    /// Best score observed up to and including each iteration.
    pub history: Vec<f64>,
    pub state: CeState,
}

/// Maximizes `score` over index vectors of length `elements`.
pub fn cross_entropy<R, F>(elements: usize, params: &CeParams, mut score: F, rng: &mut R) -> Result<CeOutcome>
where
    R: Rng + ?Sized,
    F: FnMut(&[u16]) -> f64,
{
    params.validate()?;
    if elements == 0 {
        return Err(IsacError::InvalidDimension("nothing to optimize".into()));
    }
    let s = params.samples;
    let mut state = CeState::uniform(params.levels(), elements);
    let mut pool = vec![0u16; s * elements];
    let mut scores = vec![0.0; s];
    let mut best = (f64::NEG_INFINITY, vec![0u16; elements]);
    let mut history = Vec::new();
    let mut converged = false;
    let mut order: Vec<usize> = (0..s).collect();

    for _ in 0..params.max_iterations {
        let samplers = state.samplers();
        for i in 0..s {
            let cand = &mut pool[i * elements..(i + 1) * elements];
            for (slot, sampler) in cand.iter_mut().zip(&samplers) {
                *slot = sampler.draw(rng);
            }
            let v = score(cand);
            scores[i] = if v.is_nan() { f64::NEG_INFINITY } else { v };
            if scores[i] > best.0 {
                best = (scores[i], cand.to_vec());
            }
        }
        history.push(best.0);

        for (i, o) in order.iter_mut().enumerate() {
            *o = i;
        }
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        state.update(order[..params.elites].iter().map(|&i| &pool[i * elements..(i + 1) * elements]));

        let max = scores[order[0]];
        let min = scores[order[s - 1]];
        let spread = if max == min { 0.0 } else { max - min };
        if spread < params.kappa {
            converged = true;
            break;
        }
    }
    Ok(CeOutcome {
        best: best.1,
        best_score: best.0,
        iterations: history.len(),
        converged,
        history,
        state,
    })
}
