//! Text descriptors for variation models.
//!
//! One `key=value` per line; `#` starts a comment. Composed models prefix
//! the keys of their parts with `outer.` and `inner.`. Bounds are
//! comma-separated lists. Example:
//!
//! ```text
//! kind=photometric
//! transform=brightness
//! strength=0.5
//! lower=-1
//! upper=1
//! ```

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use crate::diffcore::image::Shape;
use crate::error::{Error, Result};
use crate::genmodel::{load_translation, Direction};
use crate::scalar::Scalar;
use crate::variation::analytic::{Masking, Norm, PhotometricKind};
use crate::variation::model::{CompositionMode, Learned, ModelKind, VariationModel};
use crate::variation::space::NuisanceSpace;

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn render<S: Scalar>(m: &VariationModel<S>, prefix: &str, out: &mut String) -> Result<()> {
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{prefix}{k}={v}");
    };
    kv("kind", m.kind_name().to_string());
    match m.kind() {
        ModelKind::Identity => kv("dim", m.space().dim().to_string()),
        ModelKind::Additive(a) => {
            kv("epsilon", a.epsilon.to_string());
            kv("norm", match a.norm { Norm::L2 => "2", Norm::LInf => "inf" }.to_string());
            kv("shape", a.shape.to_string());
        }
        ModelKind::Rotation(_) => {}
        ModelKind::BackgroundColor(b) => {
            kv("threshold", b.threshold.to_string());
            kv(
                "masking",
                match b.masking { Masking::AllChannels => "all", Masking::Elementwise => "elementwise", Masking::AnyChannel => "any" }.to_string(),
            );
        }
        ModelKind::Photometric(p) => {
            kv("transform", p.kind.name().to_string());
            kv("strength", p.strength.to_string());
        }
        ModelKind::Learned(l) => {
            let src = l.source.as_ref().ok_or_else(|| {
                Error::input("learned model has no checkpoint path; save it before writing a descriptor")
            })?;
            kv("checkpoint", src.clone());
            kv("direction", l.direction.to_string());
            kv("style_scale", l.style_scale.to_string());
        }
        ModelKind::Composed { outer, inner, mode } => {
            kv("mode", match mode { CompositionMode::Shared => "shared", CompositionMode::Independent => "independent" }.to_string());
            render(outer, &format!("{prefix}outer."), out)?;
            render(inner, &format!("{prefix}inner."), out)?;
            return Ok(());
        }
    }
    kv("lower", list(m.space().lower()));
    kv("upper", list(m.space().upper()));
    Ok(())
}

impl<S: Scalar> VariationModel<S> {
    /// Renders the model as a descriptor. Learned models must carry the
    /// path of their checkpoint.
    pub fn to_descriptor(&self) -> Result<String> {
        let mut out = String::new();
        render(self, "", &mut out)?;
        Ok(out)
    }

    /// Parses a descriptor. Relative checkpoint paths resolve against
    /// `base`.
    pub fn from_descriptor(text: &str, base: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("descriptor line {}: expected key=value", i + 1)))?;
            if map.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::config(format!("descriptor line {}: duplicate key `{}`", i + 1, k.trim())));
            }
        }
        let entries = Entries {
            map,
            used: RefCell::default(),
        };
        let model = parse(&entries, "", base)?;
        let used = entries.used.borrow();
        if let Some(k) = entries.map.keys().find(|k| !used.contains(*k)) {
            return Err(Error::config(format!("descriptor key `{k}` is not used by this model")));
        }
        Ok(model)
    }

    pub fn load_descriptor(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::from_descriptor(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn save_descriptor(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_descriptor()?)?;
        Ok(())
    }
}

/// Parsed key/value pairs plus the keys consumed so far.
struct Entries {
    map: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
}

impl Entries {
    fn opt(&self, key: String) -> Option<&str> {
        let v = self.map.get(&key).map(String::as_str);
        if v.is_some() {
            self.used.borrow_mut().insert(key);
        }
        v
    }
}

fn parse<S: Scalar>(map: &Entries, prefix: &str, base: &Path) -> Result<VariationModel<S>> {
    let opt = |k: &str| map.opt(format!("{prefix}{k}"));
    let get = |k: &str| -> Result<&str> {
        opt(k).ok_or_else(|| Error::config(format!("descriptor is missing `{prefix}{k}`")))
    };
    let num = |k: &str, v: &str| -> Result<f64> {
        v.parse()
            .map_err(|_| Error::config(format!("`{prefix}{k}`: `{v}` is not a number")))
    };
    let nums = |k: &str| -> Result<Vec<f64>> { get(k)?.split(',').map(|v| num(k, v.trim())).collect() };

    let kind = get("kind")?;
    let model = match kind {
        "composed" => {
            let outer = parse(map, &format!("{prefix}outer."), base)?;
            let inner = parse(map, &format!("{prefix}inner."), base)?;
            return match get("mode")? {
                "shared" => VariationModel::compose(outer, inner),
                "independent" => VariationModel::compose_independent(outer, inner),
                other => Err(Error::config(format!("unknown composition mode `{other}`"))),
            };
        }
        "identity" => {
            let q: usize = get("dim")?
                .parse()
                .map_err(|_| Error::config(format!("`{prefix}dim` must be a positive integer")))?;
            VariationModel::identity(q)
        }
        "additive" => {
            let norm = match get("norm")? {
                "inf" => Norm::LInf,
                "2" => Norm::L2,
                other => return Err(Error::config(format!("unknown norm `{other}` (2|inf)"))),
            };
            VariationModel::additive(num("epsilon", get("epsilon")?)?, norm, parse_shape(get("shape")?)?)
                .map_err(|e| Error::config(e.to_string()))?
        }
        "rotation" => VariationModel::rotation(),
        "background-color" => {
            let masking = match opt("masking").unwrap_or("all") {
                "all" => Masking::AllChannels,
                "elementwise" => Masking::Elementwise,
                "any" => Masking::AnyChannel,
                other => return Err(Error::config(format!("unknown masking `{other}`"))),
            };
            let mut m = VariationModel::background_color_with(masking);
            if let Some(t) = opt("threshold") {
                m = m.with_threshold(num("threshold", t)?);
            }
            m
        }
        "photometric" => {
            let k = PhotometricKind::parse(get("transform")?).map_err(|e| Error::config(e.to_string()))?;
            match opt("strength") {
                Some(s) => VariationModel::photometric_with(k, num("strength", s)?),
                None => VariationModel::photometric(k),
            }
        }
        "learned" => {
            let src = get("checkpoint")?;
            let model = Arc::new(load_translation::<S>(base.join(src))?);
            let direction: Direction = opt("direction").unwrap_or("a2b").parse()?;
            let style_scale = match opt("style_scale") {
                Some(v) => num("style_scale", v)?,
                None => crate::variation::DEFAULT_STYLE_SCALE,
            };
            let q = model.style_dim();
            let space = match (opt("lower"), opt("upper")) {
                (Some(_), Some(_)) => NuisanceSpace::new(nums("lower")?, nums("upper")?)
                    .map_err(|e| Error::config(e.to_string()))?,
                _ => NuisanceSpace::symmetric(q),
            };
            return VariationModel::learned(
                Learned {
                    model,
                    direction,
                    style_scale,
                    source: Some(src.to_string()),
                },
                space,
            )
            .map_err(|e| Error::config(e.to_string()));
        }
        other => return Err(Error::config(format!("unknown model kind `{other}`"))),
    };
    match (opt("lower"), opt("upper")) {
        (None, None) => Ok(model),
        (Some(_), Some(_)) => {
            let space = NuisanceSpace::new(nums("lower")?, nums("upper")?).map_err(|e| Error::config(e.to_string()))?;
            model.with_space(space).map_err(|e| Error::config(e.to_string()))
        }
        _ => Err(Error::config(format!("`{prefix}lower` and `{prefix}upper` must be given together"))),
    }
}

fn parse_shape(s: &str) -> Result<Shape> {
    let d: Vec<usize> = s
        .split('x')
        .map(|v| v.trim().parse().map_err(|_| Error::config(format!("bad shape `{s}` (want CxHxW)"))))
        .collect::<Result<_>>()?;
    match d[..] {
        [c, h, w] if c * h * w > 0 => Ok(Shape::new(c, h, w)),
        _ => Err(Error::config(format!("bad shape `{s}` (want CxHxW)"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genmodel::{save_translation, MunitConfig, TranslationModel};
    use crate::rng::stream;

    fn round_trip(m: &VariationModel<f64>, base: &Path) {
        let text = m.to_descriptor().unwrap();
        let back = VariationModel::<f64>::from_descriptor(&text, base).unwrap();
        assert_eq!(back.to_descriptor().unwrap(), text);
        assert_eq!(back.space(), m.space());
    }

    #[test]
    fn analytic_round_trips() {
        let base = Path::new(".");
        let models = [
            VariationModel::identity(2),
            VariationModel::additive(8.0 / 255.0, Norm::LInf, Shape::new(3, 8, 8)).unwrap(),
            VariationModel::additive(0.25, Norm::L2, Shape::new(1, 4, 4)).unwrap(),
            VariationModel::rotation(),
            VariationModel::background_color(),
            VariationModel::background_color_with(Masking::Elementwise).with_threshold(20.5),
            VariationModel::photometric(PhotometricKind::Contrast),
            VariationModel::photometric_with(PhotometricKind::Hue, 0.1)
                .with_space(NuisanceSpace::new(vec![0.0], vec![1.0 / 3.0]).unwrap())
                .unwrap(),
            VariationModel::compose(
                VariationModel::photometric(PhotometricKind::Brightness),
                VariationModel::photometric(PhotometricKind::Contrast),
            )
            .unwrap(),
            VariationModel::compose_independent(VariationModel::rotation(), VariationModel::background_color())
                .unwrap(),
        ];
        for m in &models {
            round_trip(m, base);
        }
    }

    #[test]
    fn learned_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = MunitConfig::new(Shape::new(3, 4, 4), 2, 2, 3);
        let t = TranslationModel::<f64>::init(cfg, &mut stream(4, &[])).unwrap();
        save_translation(&t, dir.path().join("g.mbrt")).unwrap();
        let text = "kind=learned\ncheckpoint=g.mbrt\ndirection=a2b\n";
        let m = VariationModel::<f64>::from_descriptor(text, dir.path()).unwrap();
        assert_eq!(m.space().dim(), 2);
        round_trip(&m, dir.path());
        let p = dir.path().join("m.txt");
        m.save_descriptor(&p).unwrap();
        let again = VariationModel::<f64>::load_descriptor(&p).unwrap();
        assert_eq!(again.to_descriptor().unwrap(), m.to_descriptor().unwrap());
    }

    #[test]
    fn malformed_descriptors() {
        let base = Path::new(".");
        for text in [
            "",
            "kind=warp",
            "kind=photometric",
            "kind=photometric\ntransform=brightness\nlower=-1",
            "kind=rotation\nbogus=1",
            "kind=rotation\nkind=rotation",
            "kind rotation",
            "kind=additive\nepsilon=x\nnorm=inf\nshape=1x2x2",
        ] {
            let e = VariationModel::<f64>::from_descriptor(text, base);
            assert!(matches!(e, Err(Error::Config(_))), "{text:?} gave {e:?}");
        }
    }
}
