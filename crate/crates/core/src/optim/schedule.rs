use crate::error::{Error, Result};

/// Piecewise-constant learning-rate multiplier.
///
/// Each milestone `(epoch, multiplier)` scales the rate from that (0-based)
/// epoch onwards; multipliers of successive milestones compound, so
/// `[(18, 0.2), (36, 0.2)]` divides by 5 and then by 25.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LrSchedule {
    milestones: Vec<(usize, f64)>,
}

impl LrSchedule {
    pub fn constant() -> Self {
        Self::default()
    }

    pub fn new(mut milestones: Vec<(usize, f64)>) -> Result<Self> {
        if let Some(&(e, m)) = milestones
            .iter()
            .find(|(_, m)| !(*m > 0.0 && m.is_finite()))
        {
            return Err(Error::InvalidArgument(format!(
                "multiplier {m} at epoch {e} must be positive"
            )));
        }
        milestones.sort_by_key(|&(e, _)| e);
        Ok(Self { milestones })
    }

    /// Divide by 5 at 30%, 60% and 90% of `epochs`.
    pub fn step_decay(epochs: usize) -> Self {
        let at = |f: f64| (f * epochs as f64).round() as usize;
        Self {
            milestones: vec![(at(0.3), 0.2), (at(0.6), 0.2), (at(0.9), 0.2)],
        }
    }

    /// Parses `"e1:m1,e2:m2"`. An empty string is the constant schedule.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(Self::constant());
        }
        let bad = |part: &str| Error::InvalidArgument(format!("bad schedule entry {part:?}"));
        let milestones = text
            .split(',')
            .map(|part| {
                let (e, m) = part.split_once(':').ok_or_else(|| bad(part))?;
                let e = e.trim().parse::<usize>().map_err(|_| bad(part))?;
                let m = m.trim().parse::<f64>().map_err(|_| bad(part))?;
                Ok((e, m))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(milestones)
    }

    pub fn milestones(&self) -> &[(usize, f64)] {
        &self.milestones
    }

    pub fn factor(&self, epoch: usize) -> f64 {
        self.milestones
            .iter()
            .take_while(|&&(e, _)| e <= epoch)
            .map(|&(_, m)| m)
            .product()
    }
}
