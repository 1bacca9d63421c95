use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `((s⁺ − s⁻) − (t⁺ − t⁻))²`
pub fn margin_mse_loss(s_pos: f64, s_neg: f64, t_pos: f64, t_neg: f64) -> f64 {
    let diff = (s_pos - s_neg) - (t_pos - t_neg);
    diff * diff
}

/// `log(1 + exp(−(s⁺ − s⁻)))`, evaluated without overflow.
pub fn ranknet_loss(s_pos: f64, s_neg: f64) -> f64 {
    let x = s_pos - s_neg;
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Mean margin-MSE over `(s⁺, s⁻, t⁺, t⁻)` tuples.
pub fn margin_mse_batch(pairs: &[(f64, f64, f64, f64)]) -> f64 {
    pairs.iter().map(|&(a, b, c, d)| margin_mse_loss(a, b, c, d)).sum::<f64>() / pairs.len().max(1) as f64
}

/// Pairwise training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    /// Needs teacher scores on every triple.
    MarginMse,
    #[default]
    RankNet,
}

impl LossKind {
    /// Loss of one pair and its derivative with respect to `s⁺` (the
    /// derivative with respect to `s⁻` is the negation).
    pub fn eval(self, s_pos: f64, s_neg: f64, teacher: Option<(f64, f64)>) -> Result<(f64, f64)> {
        match self {
            LossKind::MarginMse => {
                let (t_pos, t_neg) =
                    teacher.ok_or_else(|| Error::InvalidConfig("margin-mse needs teacher scores".into()))?;
                let diff = (s_pos - s_neg) - (t_pos - t_neg);
                Ok((diff * diff, 2.0 * diff))
            }
            LossKind::RankNet => {
                let x = s_pos - s_neg;
                // d/dx log(1 + e^−x) = −1 / (1 + e^x)
                let grad = if x > 0.0 { -(-x).exp() / (1.0 + (-x).exp()) } else { -1.0 / (1.0 + x.exp()) };
                Ok((ranknet_loss(s_pos, s_neg), grad))
            }
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::MarginMse => "margin-mse",
            LossKind::RankNet => "ranknet",
        })
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "margin-mse" => Ok(LossKind::MarginMse),
            "ranknet" => Ok(LossKind::RankNet),
            other => Err(Error::Unknown { what: "loss", value: other.to_string() }),
        }
    }
}
