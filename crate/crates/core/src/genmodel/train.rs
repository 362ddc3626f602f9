//! Alternating generator/discriminator training and snapshot files.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use crate::diffcore::checkpoint::{Checkpoint, Section};
use crate::diffcore::image::Image;
use crate::diffcore::optim::{update_step, LrSchedule, OptimConfig, OptimState};
use crate::error::{Error, Result};
use crate::genmodel::munit::{MunitConfig, MunitHyper, MunitLosses, Part, StylePrior, TranslationModel};
use crate::rng::{purpose, stream};
use crate::scalar::Scalar;

/// Parameters captured after `iteration` updates.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot<S> {
    pub iteration: usize,
    pub params: Vec<S>,
}

impl<S: Scalar> Snapshot<S> {
    pub fn model(&self, config: MunitConfig) -> Result<TranslationModel<S>> {
        TranslationModel::from_params(config, self.params.clone())
    }
}

#[derive(Clone, Debug)]
pub struct TrainedTranslation<S> {
    pub model: TranslationModel<S>,
    pub snapshots: Vec<Snapshot<S>>,
    /// Generator-step losses, one entry per iteration.
    pub history: Vec<MunitLosses<f64>>,
}

fn optimizer(hyper: &MunitHyper) -> OptimConfig {
    OptimConfig::adam(hyper.lr)
        .with_weight_decay(hyper.weight_decay)
        .with_schedule(LrSchedule::Step {
            every: hyper.lr_step,
            gamma: hyper.lr_gamma,
        })
}

fn draw<S: Scalar>(set: &[Image<S>], n: usize, rng: &mut crate::rng::Rng) -> Vec<Image<S>> {
    (0..n).map(|_| set[rng.gen_range(0..set.len())].clone()).collect()
}

/// Trains a translation model between two unpaired domains.
///
/// Each iteration draws a batch from each domain and one style code per
/// example, takes one discriminator ascent step on `ℓ_GAN`, then one
/// generator descent step on the full objective, both with Adam.
pub fn train_translation<S: Scalar>(
    domain_a: &[Image<S>],
    domain_b: &[Image<S>],
    config: MunitConfig,
    hyper: &MunitHyper,
    seed: u64,
) -> Result<TrainedTranslation<S>> {
    if domain_a.is_empty() || domain_b.is_empty() {
        return Err(Error::input("both translation domains must be nonempty"));
    }
    hyper.validate()?;
    let mut model = TranslationModel::<S>::init(config, &mut stream(seed, &[purpose::INIT]))?;
    let split = model.generator_len();
    let total = model.params().len();
    let mut opt_g = OptimState::new(optimizer(hyper), split);
    let mut opt_d = OptimState::new(optimizer(hyper), total - split);
    let prior = StylePrior { dim: config.style_dim };
    let mut snapshots = Vec::with_capacity(hyper.snapshots.len());
    let mut history = Vec::with_capacity(hyper.iterations);
    let mut pending = hyper.snapshots.iter().peekable();

    for it in 0..=hyper.iterations {
        if pending.next_if(|&&s| s == it).is_some() {
            snapshots.push(Snapshot {
                iteration: it,
                params: model.params().to_vec(),
            });
        }
        if it == hyper.iterations {
            break;
        }
        let mut rng = stream(seed, &[purpose::DATA, it as u64]);
        let a = draw(domain_a, hyper.batch_size, &mut rng);
        let b = draw(domain_b, hyper.batch_size, &mut rng);
        let mut srng = stream(seed, &[purpose::STYLE, it as u64]);
        let styles_b: Vec<Vec<S>> = a.iter().map(|_| prior.sample(&mut srng)).collect();
        let styles_a: Vec<Vec<S>> = b.iter().map(|_| prior.sample(&mut srng)).collect();

        let diverged = |l: &MunitLosses<S>| {
            Error::numerical(format!(
                "munit training diverged at iteration {it}: recon {}, recon_c {}, recon_s {}, gan {}",
                l.recon, l.recon_c, l.recon_s, l.gan
            ))
        };

        let (losses, grad) = model.objective(&a, &b, &styles_a, &styles_b, hyper, true)?;
        if !losses.is_finite() {
            return Err(diverged(&losses));
        }
        let ascent: Vec<S> = grad.expect("gradient requested")[split..].iter().map(|&g| -g).collect();
        update_step(&mut model.params_mut()[split..], &ascent, &mut opt_d)
            .map_err(|e| Error::numerical(format!("discriminator step {it}: {e}")))?;

        let (losses, grad) = model.objective(&a, &b, &styles_a, &styles_b, hyper, true)?;
        if !losses.is_finite() {
            return Err(diverged(&losses));
        }
        let grad = grad.expect("gradient requested");
        update_step(&mut model.params_mut()[..split], &grad[..split], &mut opt_g)
            .map_err(|e| Error::numerical(format!("generator step {it}: {e}")))?;
        history.push(losses.to_f64());
    }
    Ok(TrainedTranslation {
        model,
        snapshots,
        history,
    })
}

/// Mean losses over fixed evaluation sets, with style codes drawn from
/// `seed`. Used to compare snapshots on equal footing.
pub fn evaluate_translation<S: Scalar>(
    model: &TranslationModel<S>,
    domain_a: &[Image<S>],
    domain_b: &[Image<S>],
    hyper: &MunitHyper,
    seed: u64,
) -> Result<MunitLosses<S>> {
    let prior = StylePrior { dim: model.style_dim() };
    model.munit_losses(domain_a, domain_b, prior, &mut stream(seed, &[purpose::EVAL]), hyper)
}

/// Writes one checkpoint with per-block sections.
pub fn save_translation<S: Scalar>(model: &TranslationModel<S>, path: impl AsRef<Path>) -> Result<()> {
    let mut ck = Checkpoint::new(model.config().to_string(), model.params());
    ck.sections = Part::ALL
        .iter()
        .map(|&p| {
            let r = model.range(p);
            Section {
                name: p.name().to_string(),
                start: r.start as u64,
                len: r.len() as u64,
            }
        })
        .collect();
    ck.save(path)
}

pub fn load_translation<S: Scalar>(path: impl AsRef<Path>) -> Result<TranslationModel<S>> {
    let path = path.as_ref();
    let ck = Checkpoint::load(path)?;
    let config: MunitConfig = ck.descriptor.parse()?;
    let model = TranslationModel::from_params(config, ck.params_as())?;
    for p in Part::ALL {
        let r = model.range(p);
        let ok = ck
            .sections
            .iter()
            .any(|s| s.name == p.name() && s.start == r.start as u64 && s.len == r.len() as u64);
        if !ok {
            return Err(Error::input(format!(
                "{}: section table does not describe block `{}`",
                path.display(),
                p.name()
            )));
        }
    }
    Ok(model)
}

pub const SNAPSHOT_MANIFEST: &str = "snapshots.txt";

/// Saves every snapshot as `snapshot-<iteration>.mbrt` plus a manifest of
/// `iteration<TAB>file` lines. Returns the manifest path.
pub fn save_snapshots<S: Scalar>(
    dir: impl AsRef<Path>,
    config: MunitConfig,
    snapshots: &[Snapshot<S>],
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("# iteration\tcheckpoint\n");
    for s in snapshots {
        let name = format!("snapshot-{:06}.mbrt", s.iteration);
        save_translation(&s.model(config)?, dir.join(&name))?;
        manifest.push_str(&format!("{}\t{name}\n", s.iteration));
    }
    let path = dir.join(SNAPSHOT_MANIFEST);
    fs::write(&path, manifest)?;
    Ok(path)
}

/// Reads a snapshot manifest; paths are resolved against its directory.
pub fn read_snapshot_manifest(path: impl AsRef<Path>) -> Result<Vec<(usize, PathBuf)>> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::config(format!("{}:{}: expected `iteration<TAB>file`", path.display(), lineno + 1));
        let (it, file) = line.split_once(char::is_whitespace).ok_or_else(bad)?;
        let it: usize = it.parse().map_err(|_| bad())?;
        out.push((it, base.join(file.trim())));
    }
    Ok(out)
}
