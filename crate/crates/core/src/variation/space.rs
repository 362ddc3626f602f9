use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// An axis-aligned box Δ ⊂ R^q.
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// A point δ of a [`NuisanceSpace`].
#[derive(Clone, Debug, PartialEq)]
pub struct NuisanceParam(pub(crate) Vec<f64>);

impl NuisanceParam {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl NuisanceSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::input("nuisance space needs at least one dimension"));
        }
        if lower.len() != upper.len() {
            return Err(Error::input("lower and upper bounds differ in length"));
        }
        if let Some(i) = (0..lower.len()).find(|&i| !(lower[i] < upper[i]) || !lower[i].is_finite() || !upper[i].is_finite()) {
            return Err(Error::input(format!(
                "dimension {i}: need finite lower < upper, got [{}, {}]",
                lower[i], upper[i]
            )));
        }
        Ok(NuisanceSpace { lower, upper })
    }

    /// The canonical box [−1, 1]^q.
    pub fn symmetric(q: usize) -> Self {
        assert!(q > 0, "nuisance dimension must be positive");
        NuisanceSpace {
            lower: vec![-1.0; q],
            upper: vec![1.0; q],
        }
    }

    /// [0, 1]^q, kept for models described on the unit box.
    pub fn unit(q: usize) -> Self {
        assert!(q > 0, "nuisance dimension must be positive");
        NuisanceSpace {
            lower: vec![0.0; q],
            upper: vec![1.0; q],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn width(&self, i: usize) -> f64 {
        self.upper[i] - self.lower[i]
    }

    pub fn is_canonical(&self) -> bool {
        self.lower.iter().all(|&l| l == -1.0) && self.upper.iter().all(|&u| u == 1.0)
    }

    pub fn contains(&self, values: &[f64]) -> bool {
        values.len() == self.dim()
            && values
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&l, &u))| v >= l && v <= u)
    }

    /// Validates a point of this space.
    pub fn param(&self, values: Vec<f64>) -> Result<NuisanceParam> {
        if values.len() != self.dim() {
            return Err(Error::input(format!(
                "nuisance vector has length {}, space has dimension {}",
                values.len(),
                self.dim()
            )));
        }
        if !self.contains(&values) {
            return Err(Error::input("nuisance parameter lies outside its space; project first"));
        }
        Ok(NuisanceParam(values))
    }

    /// Componentwise uniform sample.
    pub fn sample_uniform(&self, rng: &mut Rng) -> NuisanceParam {
        NuisanceParam(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(&l, &u)| l + (u - l) * rng.gen::<f64>())
                .collect(),
        )
    }

    /// Euclidean projection onto the box (componentwise clamp).
    pub fn project(&self, raw: &[f64]) -> Result<NuisanceParam> {
        if raw.len() != self.dim() {
            return Err(Error::input(format!(
                "cannot project length {} onto dimension {}",
                raw.len(),
                self.dim()
            )));
        }
        if raw.iter().any(|v| v.is_nan()) {
            return Err(Error::numerical("cannot project NaN"));
        }
        Ok(NuisanceParam(
            raw.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(&v, (&l, &u))| v.clamp(l, u))
                .collect(),
        ))
    }

    /// Point of the box nearest to the origin.
    pub fn origin(&self) -> NuisanceParam {
        self.project(&vec![0.0; self.dim()]).expect("dimension matches")
    }

    /// Product box `self × other`.
    pub fn concat(&self, other: &NuisanceSpace) -> NuisanceSpace {
        NuisanceSpace {
            lower: [self.lower.as_slice(), other.lower.as_slice()].concat(),
            upper: [self.upper.as_slice(), other.upper.as_slice()].concat(),
        }
    }

    /// Affine map of component `i` onto [−1, 1] and its derivative.
    pub(crate) fn normalized(&self, values: &[f64]) -> (Vec<f64>, Vec<f64>) {
        if self.is_canonical() {
            return (values.to_vec(), vec![1.0; values.len()]);
        }
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let w = self.width(i);
                (2.0 * (v - self.lower[i]) / w - 1.0, 2.0 / w)
            })
            .unzip()
    }
}
