use crate::diffcore::image::{Batch, Image, Shape};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Images with optional labels, a provenance note and a domain tag.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S> {
    images: Vec<Image<S>>,
    labels: Option<Vec<usize>>,
    pub provenance: String,
    pub domain: String,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        images: Vec<Image<S>>,
        labels: Option<Vec<usize>>,
        provenance: impl Into<String>,
        domain: impl Into<String>,
    ) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != images.len() {
                return Err(Error::input(format!(
                    "{} labels for {} images",
                    l.len(),
                    images.len()
                )));
            }
        }
        if let Some(first) = images.first() {
            if let Some(i) = images.iter().position(|im| im.shape() != first.shape()) {
                return Err(Error::input(format!(
                    "image {i} has shape {}, expected {}",
                    images[i].shape(),
                    first.shape()
                )));
            }
        }
        Ok(Dataset {
            images,
            labels,
            provenance: provenance.into(),
            domain: domain.into(),
        })
    }

    pub fn labeled(images: Vec<Image<S>>, labels: Vec<usize>, domain: impl Into<String>) -> Result<Self> {
        Self::new(images, Some(labels), "", domain)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image<S>] {
        &self.images
    }

    pub fn image(&self, i: usize) -> &Image<S> {
        &self.images[i]
    }

    pub fn shape(&self) -> Option<Shape> {
        self.images.first().map(Image::shape)
    }

    pub fn label_opt(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Labels, or an input error for unlabeled data.
    pub fn labels(&self) -> Result<&[usize]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::input(format!("dataset `{}` is unlabeled", self.domain)))
    }

    /// Items at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Dataset {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            provenance: self.provenance.clone(),
            domain: self.domain.clone(),
        }
    }

    /// Applies `f` to every image, keeping labels and order.
    pub fn map_images(&self, mut f: impl FnMut(usize, &Image<S>) -> Result<Image<S>>) -> Result<Self> {
        let images = self
            .images
            .iter()
            .enumerate()
            .map(|(i, im)| f(i, im))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(images, self.labels.clone(), self.provenance.clone(), self.domain.clone())
    }

    /// Concatenation; both parts must agree on labeling.
    pub fn concat(&self, other: &Self, domain: impl Into<String>) -> Result<Self> {
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some([a.as_slice(), b.as_slice()].concat()),
            (None, None) => None,
            _ => return Err(Error::input("cannot concatenate labeled and unlabeled datasets")),
        };
        let images = self.images.iter().chain(&other.images).cloned().collect();
        Dataset::new(
            images,
            labels,
            format!("{} + {}", self.provenance, other.provenance),
            domain,
        )
    }

    pub fn to_batch(&self) -> Result<Batch<S>> {
        Batch::new(self.images.clone(), self.labels()?.to_vec())
    }

    pub fn cast<T: Scalar>(&self) -> Dataset<T> {
        Dataset {
            images: self.images.iter().map(Image::cast).collect(),
            labels: self.labels.clone(),
            provenance: self.provenance.clone(),
            domain: self.domain.clone(),
        }
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn with_domain(mut self, domain: impl Into<String>) -> Self {
        self.domain = domain.into();
        self
    }
}
