use std::fmt;
use std::str::FromStr;

use super::InrError;

/// One hidden width and the number of residual blocks that follow it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HiddenStage {
    pub width: usize,
    pub residual_blocks: usize,
}

/// Layer chain of the density MLP.
///
/// Each hidden stage is an affine map with Leaky ReLU followed by zero or more
/// residual blocks at the same width; a final affine map with no activation
/// produces the output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arch {
    pub input: usize,
    pub hidden: Vec<HiddenStage>,
    pub output: usize,
}

/// Kind of each affine map, in parameter order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AffineRole {
    Dense,
    ResidualInner,
    ResidualOuter,
    Output,
}

impl Arch {
    /// `127-2048-Re1-Re2-1024-Re3-512-Re4-256-1`
    pub fn full() -> Self {
        "127-2048-Re-Re-1024-Re-512-Re-256-1".parse().unwrap()
    }

    /// Small profile for desk-scale runs: `127-128-Re1-64-1`.
    pub fn desk() -> Self {
        "127-128-Re-64-1".parse().unwrap()
    }

    pub fn from_profile(name: &str) -> Result<Self, InrError> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            chain => chain.parse(),
        }
    }

    /// `(fan_in, fan_out, role)` of every affine map in parameter order.
    pub fn affine_shapes(&self) -> Vec<(usize, usize, AffineRole)> {
        let mut out = Vec::new();
        let mut prev = self.input;
        for stage in &self.hidden {
            out.push((prev, stage.width, AffineRole::Dense));
            for _ in 0..stage.residual_blocks {
                out.push((stage.width, stage.width, AffineRole::ResidualInner));
                out.push((stage.width, stage.width, AffineRole::ResidualOuter));
            }
            prev = stage.width;
        }
        out.push((prev, self.output, AffineRole::Output));
        out
    }

    pub fn param_count(&self) -> usize {
        self.affine_shapes().iter().map(|&(i, o, _)| i * o + o).sum()
    }

    /// Input, hidden and output widths.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input];
        w.extend(self.hidden.iter().map(|s| s.width));
        w.push(self.output);
        w
    }

    /// Index into [`Arch::widths`] of the stage each residual block belongs to.
    pub fn residual_positions(&self) -> Vec<usize> {
        self.hidden.iter().enumerate().flat_map(|(k, s)| std::iter::repeat_n(k + 1, s.residual_blocks)).collect()
    }

    pub fn from_widths(widths: &[usize], residual_positions: &[usize]) -> Result<Self, InrError> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(InrError::InvalidArch(format!("bad width list {widths:?}")));
        }
        let mut hidden: Vec<HiddenStage> =
            widths[1..widths.len() - 1].iter().map(|&width| HiddenStage { width, residual_blocks: 0 }).collect();
        for &p in residual_positions {
            if p == 0 || p > hidden.len() {
                return Err(InrError::InvalidArch(format!("residual position {p} out of range")));
            }
            hidden[p - 1].residual_blocks += 1;
        }
        Ok(Self { input: widths[0], hidden, output: widths[widths.len() - 1] })
    }
}

impl FromStr for Arch {
    type Err = InrError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InrError::InvalidArch(s.to_string());
        let mut widths = Vec::new();
        let mut residual = Vec::new();
        for tok in s.split('-').map(str::trim) {
            if let Some(rest) = tok.strip_prefix("Re").or_else(|| tok.strip_prefix("re")) {
                if !rest.chars().all(|c| c.is_ascii_digit()) || widths.len() < 2 {
                    return Err(bad());
                }
                residual.push(widths.len() - 1);
            } else {
                widths.push(tok.parse::<usize>().map_err(|_| bad())?);
            }
        }
        if residual.iter().any(|&p| p == widths.len() - 1) {
            return Err(bad());
        }
        Self::from_widths(&widths, &residual)
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.input)?;
        let mut re = 0;
        for stage in &self.hidden {
            write!(f, "-{}", stage.width)?;
            for _ in 0..stage.residual_blocks {
                re += 1;
                write!(f, "-Re{re}")?;
            }
        }
        write!(f, "-{}", self.output)
    }
}
