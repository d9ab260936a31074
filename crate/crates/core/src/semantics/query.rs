//! Prompt scoring and dual-threshold filtering of Gaussians.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::autoencoder::Autoencoder;
use super::embed::norm;
use super::features::COSINE_NORM_FLOOR;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::scene::{Level, Scene};

pub const DEFAULT_TAU_POS: f64 = 0.2255;
pub const DEFAULT_TAU_NEG: f64 = 0.26125;

/// Space in which Gaussian codes and prompts are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompareSpace {
    /// Codes are decoded to embedding space and compared with the prompts.
    #[default]
    Decoded,
    /// Prompts are encoded to the latent space and compared with raw codes.
    Latent,
}

impl std::str::FromStr for CompareSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "decoded" => Ok(Self::Decoded),
            "latent" => Ok(Self::Latent),
            other => Err(Error::invalid(format!("unknown compare space {other:?} (decoded|latent)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptQuery<T: Real> {
    pub positives: Vec<Vec<T>>,
    pub negatives: Vec<Vec<T>>,
    pub tau_pos: f64,
    pub tau_neg: f64,
    pub level: Level,
    pub space: CompareSpace,
}

impl<T: Real> PromptQuery<T> {
    pub fn new(positives: Vec<Vec<T>>, negatives: Vec<Vec<T>>) -> Self {
        Self {
            positives,
            negatives,
            tau_pos: DEFAULT_TAU_POS,
            tau_neg: DEFAULT_TAU_NEG,
            level: Level::Whole,
            space: CompareSpace::Decoded,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::invalid("query needs at least one positive prompt"));
        }
        for t in [self.tau_pos, self.tau_neg] {
            if !(-1.0..=1.0).contains(&t) {
                return Err(Error::invalid(format!("threshold {t} outside [-1, 1]")));
            }
        }
        for (i, p) in self.positives.iter().chain(&self.negatives).enumerate() {
            if !p.iter().all(|v| v.is_finite()) || norm(p) == T::zero() {
                return Err(Error::invalid(format!("prompt {i} is zero or non-finite")));
            }
        }
        Ok(())
    }
}

/// Per-Gaussian best positive and negative cosines.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptScores<T: Real> {
    pub positive: Vec<T>,
    pub negative: Vec<T>,
    /// Gaussians whose compared vector had no direction; scored `(−1, −1)`.
    pub degenerate: Vec<usize>,
}

fn unit<T: Real>(v: &[T]) -> Vec<T> {
    let n = norm(v);
    v.iter().map(|&x| x / n).collect()
}

fn best_cosine<T: Real>(unit_feature: &[T], prompts: &[Vec<T>]) -> T {
    prompts
        .iter()
        .map(|p| p.iter().zip(unit_feature).fold(T::zero(), |a, (&x, &y)| a + x * y))
        .fold(-T::one(), |a, b| a.max(b))
}

pub fn score_prompts<T: Real>(scene: &Scene<T>, ae: &Autoencoder<T>, query: &PromptQuery<T>) -> Result<PromptScores<T>> {
    query.validate()?;
    let prepare = |prompts: &[Vec<T>]| -> Result<Vec<Vec<T>>> {
        prompts
            .iter()
            .map(|p| match query.space {
                CompareSpace::Decoded => {
                    if p.len() != ae.dim() {
                        return Err(Error::Dimension(format!("prompt has {} values, decoder emits {}", p.len(), ae.dim())));
                    }
                    Ok(unit(p))
                }
                CompareSpace::Latent => {
                    let z = ae.encode(p)?;
                    if z.norm() < T::lit(COSINE_NORM_FLOOR) {
                        return Err(Error::invalid("prompt encodes to a zero latent"));
                    }
                    Ok(unit(z.as_slice()))
                }
            })
            .collect()
    };
    let pos = prepare(&query.positives)?;
    let neg = prepare(&query.negatives)?;
    let scored: Vec<Result<Option<(T, T)>>> = scene
        .gaussians
        .par_iter()
        .map(|g| {
            let code = g.code(query.level);
            let feature = match query.space {
                CompareSpace::Decoded => ae.decode(code)?,
                CompareSpace::Latent => code.as_slice().to_vec(),
            };
            if norm(&feature) < T::lit(COSINE_NORM_FLOOR) {
                return Ok(None);
            }
            let f = unit(&feature);
            Ok(Some((best_cosine(&f, &pos), best_cosine(&f, &neg))))
        })
        .collect();
    let mut out = PromptScores { positive: Vec::with_capacity(scene.len()), negative: Vec::with_capacity(scene.len()), degenerate: vec![] };
    for (i, s) in scored.into_iter().enumerate() {
        let (p, n) = s?.unwrap_or_else(|| {
            out.degenerate.push(i);
            (-T::one(), -T::one())
        });
        out.positive.push(p);
        out.negative.push(n);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    pub kept: Vec<usize>,
    /// `[s⁺, s⁻]` per Gaussian.
    pub scores: Vec<[f64; 2]>,
    pub tau_pos: f64,
    pub tau_neg: f64,
    pub level: Level,
    pub compare_space: CompareSpace,
    #[serde(default)]
    pub positive_prompts: Vec<String>,
    #[serde(default)]
    pub negative_prompts: Vec<String>,
    #[serde(default)]
    pub degenerate: Vec<usize>,
    /// Full run configuration, when the filter came from a pipeline run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

impl FilterResult {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Keeps `i` iff `s⁺_i > τ_pos` and `s⁻_i < τ_neg`.
pub fn kept_indices<T: Real>(scores: &PromptScores<T>, tau_pos: T, tau_neg: T) -> Vec<usize> {
    scores
        .positive
        .iter()
        .zip(&scores.negative)
        .enumerate()
        .filter(|(_, (&p, &n))| p > tau_pos && n < tau_neg)
        .map(|(i, _)| i)
        .collect()
}

pub fn filter_gaussians<T: Real>(scores: &PromptScores<T>, query: &PromptQuery<T>) -> FilterResult {
    FilterResult {
        kept: kept_indices(scores, T::lit(query.tau_pos), T::lit(query.tau_neg)),
        scores: scores.positive.iter().zip(&scores.negative).map(|(p, n)| [p.as_f64(), n.as_f64()]).collect(),
        tau_pos: query.tau_pos,
        tau_neg: query.tau_neg,
        level: query.level,
        compare_space: query.space,
        positive_prompts: vec![],
        negative_prompts: vec![],
        degenerate: scores.degenerate.clone(),
        config: None,
    }
}
