//! Dataset manifests: a tab-separated index over an IDX image/label pair.
//!
//! ```text
//! # provenance: <text>
//! path	label	domain	brightness	contrast
//! train-images.idx#0	3	digits	12.5	230
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::datakit::dataset::Dataset;
use crate::datakit::idx::{load_idx, save_idx};
use crate::datakit::metrics::{brightness_metric, contrast_metric};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MANIFEST_COLUMNS: &str = "path\tlabel\tdomain\tbrightness\tcontrast";

/// Manifest text for `data` stored as `images` (file name only).
pub fn format_manifest<S: Scalar>(data: &Dataset<S>, images: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# provenance: {}", data.provenance.replace('\n', " "));
    s.push_str(MANIFEST_COLUMNS);
    s.push('\n');
    let labels = data.label_opt();
    for (i, im) in data.images().iter().enumerate() {
        let label = labels.map_or_else(|| "-".to_string(), |l| l[i].to_string());
        let _ = writeln!(
            s,
            "{images}#{i}\t{label}\t{}\t{}\t{}",
            data.domain,
            brightness_metric(im),
            contrast_metric(im)
        );
    }
    s
}

/// Writes `<name>-images.idx`, `<name>-labels.idx` (if labeled) and
/// `<name>.manifest` into `dir`; returns the manifest path.
pub fn save_dataset<S: Scalar>(data: &Dataset<S>, dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let images = format!("{name}-images.idx");
    let labels = format!("{name}-labels.idx");
    let label_path = dir.join(&labels);
    save_idx(
        data,
        &dir.join(&images),
        data.label_opt().map(|_| label_path.as_path()),
    )?;
    let manifest = dir.join(format!("{name}.manifest"));
    std::fs::write(&manifest, format_manifest(data, &images))?;
    Ok(manifest)
}

/// Loads the IDX pair a manifest points at and checks it row by row.
pub fn load_dataset<S: Scalar>(manifest: &Path) -> Result<Dataset<S>> {
    let text = std::fs::read_to_string(manifest)?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut provenance = String::new();
    let mut rows = Vec::new();
    let mut offset = 0u64;
    let mut header = false;
    for line in text.lines() {
        let here = offset;
        offset += line.len() as u64 + 1;
        if let Some(p) = line.strip_prefix("# provenance: ") {
            provenance = p.to_string();
            continue;
        }
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !header {
            if line != MANIFEST_COLUMNS {
                return Err(Error::format(here, format!("expected column header `{MANIFEST_COLUMNS}`")));
            }
            header = true;
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 5 {
            return Err(Error::format(here, format!("expected 5 columns, found {}", f.len())));
        }
        let (file, index) = f[0]
            .rsplit_once('#')
            .ok_or_else(|| Error::format(here, format!("path `{}` lacks `#index`", f[0])))?;
        let index: usize = index
            .parse()
            .map_err(|_| Error::format(here, format!("bad item index in `{}`", f[0])))?;
        let label = match f[1] {
            "-" => None,
            l => Some(l.parse::<usize>().map_err(|_| Error::format(here, format!("bad label `{l}`")))?),
        };
        rows.push((here, file.to_string(), index, label, f[2].to_string()));
    }
    if !header {
        return Err(Error::format(0, "manifest has no column header"));
    }
    let Some(first) = rows.first() else {
        return Dataset::new(vec![], Some(vec![]), provenance, "");
    };
    let (file, domain) = (first.1.clone(), first.4.clone());
    let images = dir.join(&file);
    let stem = file.strip_suffix("-images.idx").unwrap_or(&file);
    let label_file = dir.join(format!("{stem}-labels.idx"));
    let labeled = first.3.is_some();
    let data: Dataset<S> = load_idx(&images, labeled.then_some(label_file.as_path()))?;
    if data.len() != rows.len() {
        return Err(Error::format(
            0,
            format!("manifest lists {} items, {} holds {}", rows.len(), file, data.len()),
        ));
    }
    for (i, (at, f, index, label, d)) in rows.iter().enumerate() {
        if *f != file || *index != i || *d != domain {
            return Err(Error::format(*at, "manifest rows must list one file in index order with one domain"));
        }
        if *label != data.label_opt().map(|l| l[i]) {
            return Err(Error::format(*at, format!("label of item {i} disagrees with the label file")));
        }
    }
    Ok(data.with_provenance(provenance).with_domain(domain))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::synth::seven_segment_digits;

    #[test]
    fn save_load_is_lossless() {
        let d = seven_segment_digits::<f64>(12, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = save_dataset(&d, dir.path(), "train").unwrap();
        let back: Dataset<f64> = load_dataset(&m).unwrap();
        assert_eq!(back.images(), d.images());
        assert_eq!(back.labels().unwrap(), d.labels().unwrap());
        assert_eq!(back.domain, d.domain);
        assert_eq!(back.provenance, d.provenance);
        let again = save_dataset(&back, dir.path(), "again").unwrap();
        assert_eq!(
            std::fs::read(dir.path().join("train-images.idx")).unwrap(),
            std::fs::read(dir.path().join("again-images.idx")).unwrap()
        );
        let text = std::fs::read_to_string(again).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("again-images.idx#0\t0\tdigits\t"));
    }
}
