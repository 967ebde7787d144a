//! Feature datasets: CSV and IDX loaders, the synthetic cluster task and
//! stratified splits.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    /// `N x D`.
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub provenance: String,
}

impl FeatureDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        n_classes: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows for {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|y| **y >= n_classes) {
            return Err(Error::param(format!("label {bad} outside 0..{n_classes}")));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("features must be finite"));
        }
        Ok(Self {
            features,
            labels,
            n_classes,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn sample(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            provenance: self.provenance.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Applies `f` to every feature row, keeping labels aligned.
    pub fn map_rows(&self, f: impl Fn(ArrayView1<f64>) -> Array1<f64>) -> Result<Self> {
        let rows: Vec<Array1<f64>> = self.features.rows().into_iter().map(f).collect();
        let d = rows.first().map_or(0, |r| r.len());
        let mut out = Array2::zeros((rows.len(), d));
        for (i, r) in rows.iter().enumerate() {
            out.row_mut(i).assign(r);
        }
        Self::new(out, self.labels.clone(), self.n_classes, self.provenance.clone())
    }

    /// `label,f0,...,f{D-1}` with nine significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["label".to_string()];
        header.extend((0..self.dim()).map(|k| format!("f{k}")));
        w.write_record(&header)?;
        for (row, y) in self.features.rows().into_iter().zip(&self.labels) {
            let mut rec = vec![y.to_string()];
            rec.extend(row.iter().map(|v| format!("{v:.8e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads `label,f0,...,f{D-1}`. `n_classes` bounds the labels when given,
/// otherwise it is inferred as `max(label) + 1`.
pub fn read_feature_csv<R: Read>(reader: R, name: &str, n_classes: Option<usize>) -> Result<FeatureDataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let err = |line: usize, msg: String| Error::Parse {
        source_name: name.into(),
        line,
        msg,
    };
    if headers.get(0) != Some("label") || headers.len() < 2 {
        return Err(err(1, "header must be label,f0,...,f{D-1}".into()));
    }
    for (k, h) in headers.iter().skip(1).enumerate() {
        if h != format!("f{k}") {
            return Err(err(1, format!("column {} should be f{k}, found {h:?}", k + 1)));
        }
    }
    let d = headers.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| err(line, e.to_string()))?;
        if rec.len() != d + 1 {
            return Err(err(line, format!("expected {} fields, got {}", d + 1, rec.len())));
        }
        let y: usize = rec[0]
            .parse()
            .map_err(|_| err(line, format!("bad label {:?}", &rec[0])))?;
        if let Some(c) = n_classes {
            if y >= c {
                return Err(err(line, format!("label {y} out of range 0..{c}")));
            }
        }
        for k in 0..d {
            let v: f64 = rec[k + 1]
                .parse()
                .map_err(|_| err(line, format!("bad value {:?} in f{k}", &rec[k + 1])))?;
            if !v.is_finite() {
                return Err(err(line, format!("non-finite value in f{k}")));
            }
            data.push(v);
        }
        labels.push(y);
    }
    let n = labels.len();
    let c = n_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let features = Array2::from_shape_vec((n, d), data).expect("row lengths checked");
    FeatureDataset::new(features, labels, c, format!("csv:{name}"))
}

pub fn load_feature_csv(path: &Path, n_classes: Option<usize>) -> Result<FeatureDataset> {
    let f = std::fs::File::open(path)?;
    read_feature_csv(std::io::BufReader::new(f), &path.display().to_string(), n_classes)
}

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(buf: &[u8], at: usize, what: &str) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Parses IDX image/label buffers; pixels scaled to [0, 1] and flattened.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<FeatureDataset> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("images: bad magic {magic:#010x}")));
    }
    let n = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let magic = be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("labels: bad magic {magic:#010x}")));
    }
    let n_labels = be_u32(labels, 4, "labels")? as usize;
    if n_labels != n {
        return Err(Error::Format(format!("{n} images but {n_labels} labels")));
    }
    let d = rows * cols;
    let pixels = images
        .get(16..16 + n * d)
        .ok_or_else(|| Error::Format(format!("images: expected {} pixel bytes", n * d)))?;
    let label_bytes = labels
        .get(8..8 + n)
        .ok_or_else(|| Error::Format(format!("labels: expected {n} label bytes")))?;
    let ys: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    if let Some(bad) = ys.iter().find(|y| **y > 9) {
        return Err(Error::Format(format!("label {bad} outside 0..10")));
    }
    let features =
        Array2::from_shape_vec((n, d), pixels.iter().map(|&p| p as f64 / 255.0).collect()).expect("sized above");
    FeatureDataset::new(features, ys, 10, "idx")
}

pub fn load_idx(images: &Path, labels: &Path) -> Result<FeatureDataset> {
    let mut ds = parse_idx(&std::fs::read(images)?, &std::fs::read(labels)?)?;
    ds.provenance = format!("idx:{}", images.display());
    Ok(ds)
}

/// Gaussian blobs around non-negative class centres, clipped at zero like
/// post-ReLU backbone features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterTaskParams {
    pub n_classes: usize,
    pub dim: usize,
    pub n_per_class: usize,
    /// Centres are drawn uniformly from `[0, 2 center_scale]` per dimension.
    pub center_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for ClusterTaskParams {
    fn default() -> Self {
        Self {
            n_classes: 4,
            dim: 32,
            n_per_class: 1000,
            center_scale: 1.0,
            noise_sigma: 1.0,
            seed: 2024,
        }
    }
}

pub fn make_cluster_task(p: &ClusterTaskParams) -> Result<FeatureDataset> {
    if p.n_classes < 2 || p.dim == 0 {
        return Err(Error::param("cluster task needs C >= 2 and D >= 1"));
    }
    if !(p.center_scale >= 0.0) || !(p.noise_sigma >= 0.0) {
        return Err(Error::param("scales must be >= 0"));
    }
    let mut rng = rng_from_seed(p.seed);
    let uni = Uniform::new_inclusive(0.0, 2.0 * p.center_scale).expect("finite bounds");
    let centres = Array2::from_shape_fn((p.n_classes, p.dim), |_| uni.sample(&mut rng));
    let n = p.n_classes * p.n_per_class;
    let mut features = Array2::zeros((n, p.dim));
    let mut labels = Vec::with_capacity(n);
    let noise = (p.noise_sigma > 0.0).then(|| Normal::new(0.0, p.noise_sigma).expect("sigma >= 0"));
    for c in 0..p.n_classes {
        for k in 0..p.n_per_class {
            let i = c * p.n_per_class + k;
            for d in 0..p.dim {
                let e = noise.as_ref().map_or(0.0, |nz| nz.sample(&mut rng));
                features[(i, d)] = (centres[(c, d)] + e).max(0.0);
            }
            labels.push(c);
        }
    }
    FeatureDataset::new(
        features,
        labels,
        p.n_classes,
        format!(
            "synthetic:C={},D={},n={},scale={},sigma={},seed={}",
            p.n_classes, p.dim, p.n_per_class, p.center_scale, p.noise_sigma, p.seed
        ),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub stratified: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.3,
            test: 0.1,
            stratified: true,
            seed: 7,
        }
    }
}

/// Index lists of a split; serialized for exact reproduction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitIndices {
    pub fn apply(&self, ds: &FeatureDataset) -> (FeatureDataset, FeatureDataset, FeatureDataset) {
        (ds.subset(&self.train), ds.subset(&self.val), ds.subset(&self.test))
    }
}

fn split_counts(n: usize, spec: &SplitSpec) -> (usize, usize, usize) {
    let tr = (spec.train * n as f64).round() as usize;
    let va = ((spec.val * n as f64).round() as usize).min(n - tr.min(n));
    let tr = tr.min(n);
    (tr, va, n - tr - va)
}

/// Shuffled, class-balanced split. Deterministic per `spec.seed`.
pub fn split_indices(ds: &FeatureDataset, spec: &SplitSpec) -> Result<SplitIndices> {
    for (name, f) in [("train", spec.train), ("val", spec.val), ("test", spec.test)] {
        if !(f > 0.0) {
            return Err(Error::param(format!("{name} fraction must be positive")));
        }
    }
    if ((spec.train + spec.val + spec.test) - 1.0).abs() > 1e-9 {
        return Err(Error::param("split fractions must sum to 1"));
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    let groups: Vec<Vec<usize>> = if spec.stratified {
        (0..ds.n_classes)
            .map(|c| (0..ds.len()).filter(|&i| ds.labels[i] == c).collect())
            .collect()
    } else {
        vec![(0..ds.len()).collect()]
    };
    for (c, mut idx) in groups.into_iter().enumerate() {
        if idx.is_empty() && spec.stratified {
            continue;
        }
        let (tr, va, te) = split_counts(idx.len(), spec);
        if tr == 0 || va == 0 || te == 0 {
            return Err(Error::param(format!(
                "class {c} has {} samples, too few for a {}/{}/{} split",
                idx.len(),
                spec.train,
                spec.val,
                spec.test
            )));
        }
        idx.shuffle(&mut rng);
        out.train.extend_from_slice(&idx[..tr]);
        out.val.extend_from_slice(&idx[tr..tr + va]);
        out.test.extend_from_slice(&idx[tr + va..]);
    }
    Ok(out)
}

pub fn split(ds: &FeatureDataset, spec: &SplitSpec) -> Result<(FeatureDataset, FeatureDataset, FeatureDataset)> {
    Ok(split_indices(ds, spec)?.apply(ds))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_three_rows() {
        let s = "label,f0,f1\n0,0.5,1\n1,2,3\n2,-1,0\n";
        let ds = read_feature_csv(s.as_bytes(), "t", None).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.n_classes, 3);
    }

    #[test]
    fn csv_label_out_of_range_names_line() {
        let s = "label,f0\n0,0.5\n4,1\n";
        match read_feature_csv(s.as_bytes(), "t", Some(4)) {
            Err(Error::Parse { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("out of range"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_rejects_non_finite_and_bad_header() {
        assert!(read_feature_csv("label,f0\n0,NaN\n".as_bytes(), "t", None).is_err());
        assert!(read_feature_csv("label,f0\n0,inf\n".as_bytes(), "t", None).is_err());
        assert!(read_feature_csv("y,f0\n0,1\n".as_bytes(), "t", None).is_err());
        assert!(read_feature_csv("label,f1\n0,1\n".as_bytes(), "t", None).is_err());
    }

    #[test]
    fn csv_round_trip_nine_digits() {
        let ds = make_cluster_task(&ClusterTaskParams {
            n_per_class: 5,
            ..Default::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = read_feature_csv(buf.as_slice(), "rt", Some(4)).unwrap();
        assert_eq!(back.labels, ds.labels);
        for (a, b) in back.features.iter().zip(ds.features.iter()) {
            assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
        }
        let mut buf2 = Vec::new();
        back.write_csv(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    fn idx_bytes(n: u32, rows: u32, cols: u32, pixels: &[u8], labels: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let mut im = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, rows, cols] {
            im.extend_from_slice(&v.to_be_bytes());
        }
        im.extend_from_slice(pixels);
        let mut lb = Vec::new();
        for v in [IDX_LABELS_MAGIC, n] {
            lb.extend_from_slice(&v.to_be_bytes());
        }
        lb.extend_from_slice(labels);
        (im, lb)
    }

    #[test]
    fn idx_parses_and_scales() {
        let pixels: Vec<u8> = (0..8).map(|k| (k * 30) as u8).collect();
        let (im, lb) = idx_bytes(2, 2, 2, &pixels, &[3, 9]);
        let ds = parse_idx(&im, &lb).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 4);
        assert_eq!(ds.labels, vec![3, 9]);
        // First image pixel sum computed independently: (0+30+60+90)/255
        let s: f64 = ds.sample(0).sum();
        assert!((s - 180.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn idx_rejects_bad_magic_and_truncation() {
        let (mut im, lb) = idx_bytes(2, 2, 2, &[0; 8], &[1, 2]);
        assert!(parse_idx(&im[..im.len() - 1], &lb).is_err());
        assert!(parse_idx(&im, &lb[..9]).is_err());
        im[3] = 0x01;
        assert!(matches!(parse_idx(&im, &lb), Err(Error::Format(_))));
        let (im, _) = idx_bytes(2, 2, 2, &[0; 8], &[1, 2]);
        let (_, lb3) = idx_bytes(3, 2, 2, &[0; 12], &[1, 2, 3]);
        assert!(parse_idx(&im, &lb3).is_err());
    }

    #[test]
    fn cluster_task_is_deterministic_and_nonnegative() {
        let p = ClusterTaskParams {
            n_per_class: 20,
            ..Default::default()
        };
        let a = make_cluster_task(&p).unwrap();
        let b = make_cluster_task(&p).unwrap();
        assert_eq!(a, b);
        assert!(a.features.iter().all(|v| *v >= 0.0));
        assert_eq!(a.class_counts(), vec![20; 4]);
        assert!(make_cluster_task(&ClusterTaskParams {
            n_classes: 1,
            ..p.clone()
        })
        .is_err());
    }

    #[test]
    fn split_default_fractions() {
        let ds = make_cluster_task(&ClusterTaskParams::default()).unwrap();
        let idx = split_indices(&ds, &SplitSpec::default()).unwrap();
        let (tr, va, te) = idx.apply(&ds);
        assert_eq!(tr.class_counts(), vec![600; 4]);
        assert_eq!(va.class_counts(), vec![300; 4]);
        assert_eq!(te.class_counts(), vec![100; 4]);
        let again = split_indices(&ds, &SplitSpec::default()).unwrap();
        assert_eq!(idx, again);
        let mut all: Vec<usize> = idx.train.iter().chain(&idx.val).chain(&idx.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_tiny_classes_and_bad_fractions() {
        let ds = make_cluster_task(&ClusterTaskParams {
            n_per_class: 3,
            ..Default::default()
        })
        .unwrap();
        assert!(split_indices(&ds, &SplitSpec::default()).is_err());
        let bad = SplitSpec {
            train: 0.5,
            ..Default::default()
        };
        assert!(split_indices(&ds, &bad).is_err());
    }
}
