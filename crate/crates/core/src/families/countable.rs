use serde::{Deserialize, Serialize};

use super::FiniteSource;
use crate::error::{domain, Result};

/// A finite list of fully specified sources with prior mass `w(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountableFamily {
    members: Vec<FiniteSource>,
    mass: Vec<f64>,
}

pub fn make_countable(members: Vec<FiniteSource>, mass: Vec<f64>) -> Result<CountableFamily> {
    if members.is_empty() {
        return domain("a countable family needs at least one member");
    }
    if members.len() != mass.len() {
        return domain(format!("{} members but {} prior masses", members.len(), mass.len()));
    }
    if let Some(w) = mass.iter().find(|&&w| !(w > 0.0 && w <= 1.0)) {
        return domain(format!("prior mass {w} is not in (0, 1]"));
    }
    let total: f64 = mass.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return domain(format!("prior masses sum to {total}, not 1"));
    }
    let k = members[0].alphabet_size();
    if members.iter().any(|m| m.alphabet_size() != k) {
        return domain("countable family members must share one alphabet");
    }
    Ok(CountableFamily { members, mass })
}

impl CountableFamily {
    pub fn members(&self) -> &[FiniteSource] {
        &self.members
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn alphabet_size(&self) -> usize {
        self.members[0].alphabet_size()
    }

    pub fn member(&self, index: usize) -> Result<&FiniteSource> {
        match self.members.get(index) {
            Some(m) => Ok(m),
            None => domain(format!("member {index} out of range for {} members", self.len())),
        }
    }
}
