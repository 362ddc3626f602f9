//! Threshold-based domain splits.

use crate::datakit::dataset::Dataset;
use crate::datakit::metrics::Metric;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Open interval `lower < v < upper`; a missing side is unbounded.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Band {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl Band {
    pub const fn below(v: f64) -> Self {
        Band { lower: None, upper: Some(v) }
    }

    pub const fn between(lo: f64, hi: f64) -> Self {
        Band { lower: Some(lo), upper: Some(hi) }
    }

    pub const fn above(v: f64) -> Self {
        Band { lower: Some(v), upper: None }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower.map_or(true, |l| l < v) && self.upper.map_or(true, |u| v < u)
    }

    fn lo(&self) -> f64 {
        self.lower.unwrap_or(f64::NEG_INFINITY)
    }

    fn hi(&self) -> f64 {
        self.upper.unwrap_or(f64::INFINITY)
    }

    fn overlaps(&self, other: &Band) -> bool {
        self.lo() < other.hi() && other.lo() < self.hi()
    }
}

impl std::fmt::Display for Band {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match (self.lower, self.upper) {
            (None, None) => write!(f, "any"),
            (None, Some(u)) => write!(f, "< {u}"),
            (Some(l), None) => write!(f, "> {l}"),
            (Some(l), Some(u)) => write!(f, "{l} < v < {u}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bands {
    pub low: Band,
    pub medium: Band,
    pub high: Band,
}

impl Bands {
    pub const SVHN_BRIGHTNESS: Bands = Bands {
        low: Band::below(60.0),
        medium: Band::between(160.0, 170.0),
        high: Band::above(180.0),
    };
    pub const SVHN_CONTRAST: Bands = Bands {
        low: Band::below(80.0),
        medium: Band::between(90.0, 100.0),
        high: Band::above(190.0),
    };
    pub const GTSRB_BRIGHTNESS: Bands = Bands {
        low: Band::below(40.0),
        medium: Band::between(85.0, 125.0),
        high: Band::above(170.0),
    };
    pub const GTSRB_CONTRAST: Bands = Bands {
        low: Band::below(80.0),
        medium: Band::between(140.0, 200.0),
        high: Band::above(230.0),
    };

    /// Table preset by dataset and metric name.
    pub fn preset(dataset: &str, metric: Metric) -> Result<Bands> {
        match (dataset.to_ascii_lowercase().as_str(), metric) {
            ("svhn", Metric::Brightness) => Ok(Self::SVHN_BRIGHTNESS),
            ("svhn", Metric::Contrast) => Ok(Self::SVHN_CONTRAST),
            ("gtsrb", Metric::Brightness) => Ok(Self::GTSRB_BRIGHTNESS),
            ("gtsrb", Metric::Contrast) => Ok(Self::GTSRB_CONTRAST),
            (other, _) => Err(Error::config(format!("no threshold preset for `{other}` (svhn|gtsrb)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [("low", self.low), ("medium", self.medium), ("high", self.high)];
        for (i, (na, a)) in named.iter().enumerate() {
            if !(a.lo() < a.hi()) {
                return Err(Error::config(format!("{na} band {a} is empty")));
            }
            for (nb, b) in &named[i + 1..] {
                if a.overlaps(b) {
                    return Err(Error::config(format!("{na} band ({a}) overlaps {nb} band ({b})")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainSplit<S> {
    pub low: Dataset<S>,
    pub medium: Dataset<S>,
    pub high: Dataset<S>,
    /// Source indices of each band's members, in source order.
    pub indices: [Vec<usize>; 3],
    pub metric: Metric,
    pub bands: Bands,
}

/// Assigns each image to the band its metric falls in; gaps are dropped.
pub fn threshold_split<S: Scalar>(data: &Dataset<S>, metric: Metric, bands: Bands) -> Result<DomainSplit<S>> {
    bands.validate()?;
    let mut idx: [Vec<usize>; 3] = Default::default();
    for (i, im) in data.images().iter().enumerate() {
        let v = metric.eval(im);
        for (slot, band) in [bands.low, bands.medium, bands.high].iter().enumerate() {
            if band.contains(v) {
                idx[slot].push(i);
            }
        }
    }
    let part = |slot: usize, name: &str| {
        let band = [bands.low, bands.medium, bands.high][slot];
        data.subset(&idx[slot])
            .with_domain(format!("{}-{metric}-{name}", data.domain))
            .with_provenance(format!("{} | {metric} {band}", data.provenance))
    };
    Ok(DomainSplit {
        low: part(0, "low"),
        medium: part(1, "medium"),
        high: part(2, "high"),
        indices: idx,
        metric,
        bands,
    })
}
