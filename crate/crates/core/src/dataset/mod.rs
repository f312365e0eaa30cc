//! Canonical on-disk dataset, index-aligned batches and the contiguous split.
//!
//! A dataset directory holds `manifest.json` plus one `.bmt` file per stored
//! array. Every modality array is indexed by sample along its first axis, with
//! the mmWave power sequence as the reference.

mod bmt;
mod manifest;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::Mutex;

pub use bmt::{BmtArray, BmtData, DType, MAGIC};
pub use manifest::{make_split, ArrayEntry, CodebookInfo, Manifest, Split, SplitSpec, FORMAT_VERSION, MANIFEST_FILE};
pub use synth::{simulate, synthesize_record};

use crate::beamcore::{argmax_lowest, BeamIndex, PowerVector};
use crate::error::{Error, Result};
use crate::modality::{Modality, ModalitySet};
use crate::sensing::{BevRaster, CameraFrame, Fov, GpsFeatures, GpsStats};
use crate::tensor::Tensor;

/// Two-channel radar image `[2, size, size]`: range-angle then range-velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarImage {
    pub size: usize,
    pub data: Vec<f32>,
}

/// One synchronized sample. Optional payloads are absent sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub index: usize,
    pub power: PowerVector,
    pub oracle: BeamIndex,
    pub camera: Option<CameraFrame>,
    pub bev: Option<BevRaster>,
    pub radar: Option<RadarImage>,
    pub gps: Option<GpsFeatures>,
}

impl SampleRecord {
    /// Rounds the powers to their stored `f32` precision and labels the sample
    /// with the oracle beam of the rounded vector.
    pub fn new(index: usize, power: &PowerVector) -> Result<Self> {
        let stored: Vec<f64> = power.as_slice().iter().map(|&p| p as f32 as f64).collect();
        let power = PowerVector::new(stored)?;
        let oracle = argmax_lowest(power.as_slice()).ok_or_else(|| Error::invalid("empty power vector"))?;
        Ok(Self {
            index,
            power,
            oracle,
            camera: None,
            bev: None,
            radar: None,
            gps: None,
        })
    }

    pub fn presence(&self) -> ModalitySet {
        let mut s = ModalitySet::single(Modality::MmWave);
        if self.camera.is_some() {
            s = s.with(Modality::Camera);
        }
        if self.bev.is_some() {
            s = s.with(Modality::Lidar);
        }
        if self.radar.is_some() {
            s = s.with(Modality::Radar);
        }
        if self.gps.is_some() {
            s = s.with(Modality::Gps);
        }
        s
    }
}

/// Dataset-level facts that are not per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetMeta {
    pub num_elements: usize,
    pub noise_var: f64,
}

/// Why a batch was read. Logged so tests can prove which splits fed what.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Gradient,
    Selection,
    Evaluation,
    Statistics,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Access {
    pub purpose: Purpose,
    pub split: Split,
    pub indices: Vec<usize>,
}

/// Aligned model inputs for a set of samples.
#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub labels: Vec<BeamIndex>,
    /// Raw stored powers, always present for metric computation.
    pub powers: Vec<PowerVector>,
    /// Per-modality input tensors with the batch on the first axis.
    pub inputs: BTreeMap<Modality, Tensor<f32>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn modalities(&self) -> ModalitySet {
        self.inputs.keys().copied().collect()
    }
}

/// An opened or freshly built dataset, fully resident in memory.
#[derive(Debug)]
pub struct Dataset {
    manifest: Manifest,
    power: Vec<f32>,
    labels: Vec<BeamIndex>,
    camera: Option<Vec<f32>>,
    lidar: Option<Vec<f32>>,
    radar: Option<Vec<f32>>,
    gps: Option<Vec<f64>>,
    presence: Vec<ModalitySet>,
    access: Mutex<Vec<Access>>,
}

fn file_name(m: Modality) -> String {
    format!("{}.bmt", m.key())
}

fn entry(shape: Vec<usize>, dtype: DType, file: String) -> ArrayEntry {
    ArrayEntry {
        shape,
        dtype: dtype.name().to_string(),
        file,
    }
}

/// Stacks one optional payload per record, zero-filling absent ones. `None`
/// when no record carries the payload.
fn stack<'a, T: Copy + Default, P: 'a>(
    records: &'a [SampleRecord],
    modality: Modality,
    get: impl Fn(&'a SampleRecord) -> Option<&'a P>,
    shape_of: impl Fn(&P) -> Vec<usize>,
    flat: impl Fn(&P) -> &[T],
) -> Result<Option<(Vec<usize>, Vec<T>)>> {
    let Some(shape) = records.iter().find_map(|r| get(r).map(&shape_of)) else {
        return Ok(None);
    };
    let per: usize = shape.iter().product();
    let mut out = Vec::with_capacity(records.len() * per);
    for r in records {
        match get(r) {
            Some(p) => {
                let s = shape_of(p);
                if s != shape || flat(p).len() != per {
                    return Err(Error::invalid(format!(
                        "sample {} {modality} payload has shape {s:?}, expected {shape:?}",
                        r.index
                    )));
                }
                out.extend_from_slice(flat(p));
            }
            None => out.extend(std::iter::repeat_n(T::default(), per)),
        }
    }
    let mut dims = vec![records.len()];
    dims.extend(shape);
    Ok(Some((dims, out)))
}

impl Dataset {
    /// Assembles records whose indices run contiguously from 0.
    pub fn from_records(records: &[SampleRecord], meta: &DatasetMeta) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("cannot build a dataset from zero samples"));
        }
        for (i, r) in records.iter().enumerate() {
            if r.index != i {
                return Err(Error::invalid(format!(
                    "sample indices must be contiguous from 0; position {i} holds index {}",
                    r.index
                )));
            }
        }
        let n = records.len();
        let b = records[0].power.len();
        if b < 2 {
            return Err(Error::invalid("need at least two beams"));
        }
        let mut power = Vec::with_capacity(n * b);
        let mut labels = Vec::with_capacity(n);
        for r in records {
            if r.power.len() != b {
                return Err(Error::shape("dataset power", &[b], &[r.power.len()]));
            }
            let row: Vec<f32> = r.power.as_slice().iter().map(|&p| p as f32).collect();
            let label = argmax_lowest(&row).unwrap();
            if label != r.oracle {
                return Err(Error::invalid(format!(
                    "sample {} label {} is not the argmax {label} of its stored powers",
                    r.index, r.oracle
                )));
            }
            power.extend(row);
            labels.push(label);
        }
        let camera = stack(
            records,
            Modality::Camera,
            |r| r.camera.as_ref(),
            |c| vec![c.height, c.width, 3],
            |c| &c.pixels,
        )?;
        let lidar = stack(
            records,
            Modality::Lidar,
            |r| r.bev.as_ref(),
            |l| vec![l.height, l.width],
            |l| &l.grid,
        )?;
        let bev_fov = records.iter().find_map(|r| r.bev.as_ref().map(|l| l.fov));
        let radar = stack(
            records,
            Modality::Radar,
            |r| r.radar.as_ref(),
            |x| vec![2, x.size, x.size],
            |x| &x.data,
        )?;
        let gps_rows: Vec<Option<[f64; 4]>> = records.iter().map(|r| r.gps.map(|g| g.as_array())).collect();
        let gps = stack(
            records,
            Modality::Gps,
            |r| gps_rows[r.index].as_ref(),
            |_| vec![4],
            |g| g.as_slice(),
        )?;

        let mut modalities = BTreeMap::new();
        let mut add = |m: Modality, dims: Vec<usize>, dtype: DType| {
            modalities.insert(m.key().to_string(), entry(dims, dtype, file_name(m)));
        };
        add(Modality::MmWave, vec![n, b], DType::F32);
        let camera = camera.map(|(d, v)| {
            add(Modality::Camera, d, DType::F32);
            v
        });
        let lidar = lidar.map(|(d, v)| {
            add(Modality::Lidar, d, DType::F32);
            v
        });
        let radar = radar.map(|(d, v)| {
            add(Modality::Radar, d, DType::F32);
            v
        });
        let gps = gps.map(|(d, v)| {
            add(Modality::Gps, d, DType::F64);
            v
        });

        let manifest = Manifest {
            version: FORMAT_VERSION,
            num_samples: n,
            codebook: CodebookInfo {
                num_elements: meta.num_elements,
                num_beams: b,
            },
            noise_var: meta.noise_var,
            modalities,
            labels: entry(vec![n], DType::F64, "labels.bmt".into()),
            presence: Some(entry(vec![n, 5], DType::F32, "presence.bmt".into())),
            bev_fov,
            split: make_split(n)?,
        };
        Ok(Self {
            manifest,
            power,
            labels,
            camera,
            lidar,
            radar,
            gps,
            presence: records.iter().map(SampleRecord::presence).collect(),
            access: Mutex::new(Vec::new()),
        })
    }

    /// Writes every array and the manifest under `root`, creating it if needed.
    pub fn write(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let m = &self.manifest;
        for (key, e) in &m.modalities {
            let modality: Modality = key.parse()?;
            let array = match modality {
                Modality::MmWave => BmtArray::f32(e.shape.clone(), self.power.clone())?,
                Modality::Camera => BmtArray::f32(e.shape.clone(), self.camera.clone().unwrap())?,
                Modality::Lidar => BmtArray::f32(e.shape.clone(), self.lidar.clone().unwrap())?,
                Modality::Radar => BmtArray::f32(e.shape.clone(), self.radar.clone().unwrap())?,
                Modality::Gps => BmtArray::f64(e.shape.clone(), self.gps.clone().unwrap())?,
            };
            array.write(&root.join(&e.file))?;
        }
        let labels: Vec<f64> = self.labels.iter().map(|&l| l as f64).collect();
        BmtArray::f64(m.labels.shape.clone(), labels)?.write(&root.join(&m.labels.file))?;
        if let Some(p) = &m.presence {
            let flags: Vec<f32> = self
                .presence
                .iter()
                .flat_map(|s| Modality::ALL.map(|m| if s.contains(m) { 1.0 } else { 0.0 }))
                .collect();
            BmtArray::f32(p.shape.clone(), flags)?.write(&root.join(&p.file))?;
        }
        m.write(root)
    }

    /// Opens and validates a dataset directory.
    pub fn open(root: &Path) -> Result<Self> {
        let manifest = Manifest::read(root)?;
        let mpath = root.join(MANIFEST_FILE);
        let bad = |msg: String| Error::format(&mpath, msg);
        if manifest.version != FORMAT_VERSION {
            return Err(bad(format!("unsupported version {}", manifest.version)));
        }
        let n = manifest.num_samples;
        let b = manifest.codebook.num_beams;
        if n == 0 || b < 2 {
            return Err(bad(format!("num_samples {n} / num_beams {b} invalid")));
        }
        manifest.split.validate(n).map_err(|e| bad(e.to_string()))?;

        let load = |e: &ArrayEntry, what: &str, dtype: DType, rank: usize| -> Result<BmtArray> {
            let path = root.join(&e.file);
            if DType::from_name(&e.dtype) != Some(dtype) {
                return Err(bad(format!("{what} dtype '{}' should be {}", e.dtype, dtype.name())));
            }
            if e.shape.len() != rank || e.shape[0] != n {
                return Err(bad(format!(
                    "{what} shape {:?} should be rank {rank} with {n} samples",
                    e.shape
                )));
            }
            let a = BmtArray::read(&path)?;
            if a.dims != e.shape || a.dtype() != dtype {
                return Err(Error::format(
                    &path,
                    format!(
                        "stored {:?} {} disagrees with manifest {:?} {}",
                        a.dims,
                        a.dtype().name(),
                        e.shape,
                        e.dtype
                    ),
                ));
            }
            Ok(a)
        };

        let mut power = None;
        let (mut camera, mut lidar, mut radar, mut gps) = (None, None, None, None);
        for (key, e) in &manifest.modalities {
            let m: Modality = key.parse().map_err(|_| bad(format!("unknown modality '{key}'")))?;
            match m {
                Modality::MmWave => {
                    if e.shape.get(1) != Some(&b) {
                        return Err(bad(format!("mmwave shape {:?} should be [{n}, {b}]", e.shape)));
                    }
                    power = load(e, key, DType::F32, 2)?.into_f32();
                }
                Modality::Camera => {
                    if e.shape.get(3) != Some(&3) {
                        return Err(bad(format!("camera shape {:?} should end in 3 channels", e.shape)));
                    }
                    camera = load(e, key, DType::F32, 4)?.into_f32();
                }
                Modality::Lidar => lidar = load(e, key, DType::F32, 3)?.into_f32(),
                Modality::Radar => {
                    if e.shape.get(1) != Some(&2) || e.shape.get(2) != e.shape.get(3) {
                        return Err(bad(format!("radar shape {:?} should be [N, 2, R, R]", e.shape)));
                    }
                    radar = load(e, key, DType::F32, 4)?.into_f32();
                }
                Modality::Gps => {
                    if e.shape.get(1) != Some(&4) {
                        return Err(bad(format!("gps shape {:?} should be [N, 4]", e.shape)));
                    }
                    gps = load(e, key, DType::F64, 2)?.into_f64();
                }
            }
        }
        let power = power.ok_or_else(|| bad("manifest has no mmwave array".into()))?;

        let stored_labels = load(&manifest.labels, "labels", DType::F64, 1)?.into_f64().unwrap();
        let mut labels = Vec::with_capacity(n);
        for (i, row) in power.chunks_exact(b).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(bad(format!("sample {i} has an invalid power value")));
            }
            let oracle = argmax_lowest(row).unwrap();
            if stored_labels[i] != oracle as f64 {
                return Err(bad(format!(
                    "sample {i} label {} differs from power argmax {oracle}",
                    stored_labels[i]
                )));
            }
            labels.push(oracle);
        }

        let stored: ModalitySet = manifest
            .modalities
            .keys()
            .map(|k| k.parse::<Modality>())
            .collect::<Result<_>>()?;
        let presence = match &manifest.presence {
            None => vec![stored; n],
            Some(e) => {
                if e.shape != [n, 5] {
                    return Err(bad(format!("presence shape {:?} should be [{n}, 5]", e.shape)));
                }
                let flags = load(e, "presence", DType::F32, 2)?.into_f32().unwrap();
                let mut out = Vec::with_capacity(n);
                for (i, row) in flags.chunks_exact(5).enumerate() {
                    let mut s = ModalitySet::EMPTY;
                    for (m, &f) in Modality::ALL.iter().zip(row) {
                        if f == 1.0 {
                            s = s.with(*m);
                        } else if f != 0.0 {
                            return Err(bad(format!("sample {i} presence flag {f} is not 0 or 1")));
                        }
                    }
                    if !s.contains(Modality::MmWave) || !s.is_subset_of(stored) {
                        return Err(bad(format!(
                            "sample {i} presence {{{s}}} is inconsistent with stored arrays {{{stored}}}"
                        )));
                    }
                    out.push(s);
                }
                out
            }
        };

        Ok(Self {
            manifest,
            power,
            labels,
            camera,
            lidar,
            radar,
            gps,
            presence,
            access: Mutex::new(Vec::new()),
        })
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.num_samples
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_beams(&self) -> usize {
        self.manifest.codebook.num_beams
    }

    pub fn noise_var(&self) -> f64 {
        self.manifest.noise_var
    }

    pub fn split(&self) -> &SplitSpec {
        &self.manifest.split
    }

    pub fn labels(&self) -> &[BeamIndex] {
        &self.labels
    }

    /// Modalities with a stored array.
    pub fn modalities(&self) -> ModalitySet {
        self.manifest.modalities.keys().filter_map(|k| k.parse().ok()).collect()
    }

    pub fn presence(&self, index: usize) -> ModalitySet {
        self.presence[index]
    }

    /// Per-sample payload shape (without the batch axis) of a stored modality.
    pub fn sample_shape(&self, m: Modality) -> Option<Vec<usize>> {
        self.manifest.modalities.get(m.key()).map(|e| e.shape[1..].to_vec())
    }

    pub fn power(&self, index: usize) -> PowerVector {
        let b = self.num_beams();
        PowerVector::new(
            self.power[index * b..(index + 1) * b]
                .iter()
                .map(|&p| p as f64)
                .collect(),
        )
        .expect("validated on construction")
    }

    pub fn gps_features(&self, index: usize) -> Option<GpsFeatures> {
        if !self.presence[index].contains(Modality::Gps) {
            return None;
        }
        let g = &self.gps.as_ref()?[index * 4..index * 4 + 4];
        GpsFeatures::new(g[0], g[1], g[2], g[3]).ok()
    }

    /// Reconstructs the stored record for one sample.
    pub fn record(&self, index: usize) -> Result<SampleRecord> {
        if index >= self.len() {
            return Err(Error::invalid(format!("sample {index} out of range")));
        }
        let present = self.presence[index];
        let per = |m: Modality| self.sample_shape(m).map(|s| s.iter().product::<usize>()).unwrap_or(0);
        let slice = |v: &Option<Vec<f32>>, m: Modality| -> Option<Vec<f32>> {
            let k = per(m);
            present
                .contains(m)
                .then(|| v.as_ref().map(|v| v[index * k..(index + 1) * k].to_vec()))
                .flatten()
        };
        let mut r = SampleRecord::new(index, &self.power(index))?;
        r.camera = slice(&self.camera, Modality::Camera).map(|pixels| {
            let s = self.sample_shape(Modality::Camera).unwrap();
            CameraFrame {
                height: s[0],
                width: s[1],
                pixels,
            }
        });
        r.bev = slice(&self.lidar, Modality::Lidar).map(|grid| {
            let s = self.sample_shape(Modality::Lidar).unwrap();
            BevRaster {
                height: s[0],
                width: s[1],
                fov: self.manifest.bev_fov.unwrap_or(Fov {
                    x_min: 0.0,
                    x_max: 1.0,
                    y_min: 0.0,
                    y_max: 1.0,
                }),
                grid,
            }
        });
        r.radar = slice(&self.radar, Modality::Radar).map(|data| RadarImage {
            size: self.sample_shape(Modality::Radar).unwrap()[1],
            data,
        });
        r.gps = self.gps_features(index);
        Ok(r)
    }

    fn log(&self, purpose: Purpose, split: Split, indices: &[usize]) {
        self.access.lock().unwrap().push(Access {
            purpose,
            split,
            indices: indices.to_vec(),
        });
    }

    pub fn access_log(&self) -> Vec<Access> {
        self.access.lock().unwrap().clone()
    }

    pub fn clear_access_log(&self) {
        self.access.lock().unwrap().clear();
    }

    fn split_of_all(&self, indices: &[usize]) -> Result<Split> {
        let first = *indices.first().ok_or_else(|| Error::invalid("empty index list"))?;
        let split = self
            .split()
            .split_of(first)
            .ok_or_else(|| Error::invalid(format!("sample {first} out of range")))?;
        let range = self.split().range(split);
        if let Some(i) = indices.iter().find(|i| !range.contains(i)) {
            return Err(Error::invalid(format!(
                "batch mixes splits: sample {i} is outside {} {range:?}",
                split.name()
            )));
        }
        Ok(split)
    }

    /// Fits GPS normalization statistics. Every index must lie in the
    /// training split.
    pub fn fit_gps_stats(&self, indices: &[usize], mask: [bool; 4]) -> Result<GpsStats> {
        let train = &self.split().train;
        if let Some(i) = indices.iter().find(|i| !train.contains(i)) {
            return Err(Error::Leakage(format!(
                "normalization statistics requested over sample {i}, outside the training range {train:?}"
            )));
        }
        self.log(Purpose::Statistics, Split::Train, indices);
        let samples: Vec<GpsFeatures> = indices.iter().filter_map(|&i| self.gps_features(i)).collect();
        GpsStats::fit(&samples, mask)
    }

    /// Assembles model inputs for `indices`, which must share one split.
    /// Gradient reads outside the training split are rejected as leakage.
    pub fn load_batch(
        &self,
        indices: &[usize],
        active: ModalitySet,
        gps_stats: Option<&GpsStats>,
        purpose: Purpose,
    ) -> Result<Batch> {
        if active.is_empty() {
            return Err(Error::invalid("no active modalities"));
        }
        let split = self.split_of_all(indices)?;
        if purpose == Purpose::Gradient && split != Split::Train {
            return Err(Error::Leakage(format!(
                "gradient batch drawn from the {} split",
                split.name()
            )));
        }
        let n = indices.len();
        let b = self.num_beams();
        for m in active.iter() {
            if !self.modalities().contains(m) {
                return Err(Error::MissingModality {
                    sample: indices[0],
                    modality: m.key().to_string(),
                });
            }
            if let Some(&i) = indices.iter().find(|&&i| !self.presence[i].contains(m)) {
                return Err(Error::MissingModality {
                    sample: i,
                    modality: m.key().to_string(),
                });
            }
        }
        self.log(purpose, split, indices);

        let mut inputs = BTreeMap::new();
        for m in active.iter() {
            let shape = self.sample_shape(m).unwrap();
            let per: usize = shape.iter().product();
            let tensor = match m {
                Modality::MmWave => {
                    let mut data = Vec::with_capacity(n * b);
                    for &i in indices {
                        data.extend(mmwave_features(&self.power[i * b..(i + 1) * b]));
                    }
                    Tensor::new(vec![n, b], data)?
                }
                Modality::Camera => {
                    let (h, w) = (shape[0], shape[1]);
                    let src = self.camera.as_ref().unwrap();
                    let mut data = vec![0.0; n * per];
                    for (k, &i) in indices.iter().enumerate() {
                        let frame = &src[i * per..(i + 1) * per];
                        let dst = &mut data[k * per..(k + 1) * per];
                        for p in 0..h * w {
                            for c in 0..3 {
                                dst[c * h * w + p] = frame[p * 3 + c];
                            }
                        }
                    }
                    Tensor::new(vec![n, 3, h, w], data)?
                }
                Modality::Lidar => {
                    let src = self.lidar.as_ref().unwrap();
                    let data = indices
                        .iter()
                        .flat_map(|&i| src[i * per..(i + 1) * per].iter().copied())
                        .collect();
                    Tensor::new(vec![n, 1, shape[0], shape[1]], data)?
                }
                Modality::Radar => {
                    let src = self.radar.as_ref().unwrap();
                    let data = indices
                        .iter()
                        .flat_map(|&i| src[i * per..(i + 1) * per].iter().copied())
                        .collect();
                    let mut dims = vec![n];
                    dims.extend(shape);
                    Tensor::new(dims, data)?
                }
                Modality::Gps => {
                    let stats = gps_stats
                        .ok_or_else(|| Error::invalid("GPS input requested without normalization statistics"))?;
                    let mut data = Vec::with_capacity(n * stats.width());
                    for &i in indices {
                        let g = self.gps_features(i).ok_or_else(|| Error::MissingModality {
                            sample: i,
                            modality: "gps".into(),
                        })?;
                        data.extend(stats.normalize(&g).into_iter().map(|v| v as f32));
                    }
                    Tensor::new(vec![n, stats.width()], data)?
                }
            };
            inputs.insert(m, tensor);
        }
        Ok(Batch {
            indices: indices.to_vec(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            powers: indices.iter().map(|&i| self.power(i)).collect(),
            inputs,
        })
    }
}

/// Model-side mmWave features: the power vector scaled by its maximum.
pub fn mmwave_features(power: &[f32]) -> impl Iterator<Item = f32> + '_ {
    let max = power.iter().copied().fold(0.0f32, f32::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    power.iter().map(move |&p| p * scale)
}

/// Writes `records` as a dataset under `root` and returns its manifest.
pub fn write_dataset(records: &[SampleRecord], meta: &DatasetMeta, root: &Path) -> Result<Manifest> {
    let ds = Dataset::from_records(records, meta)?;
    ds.write(root)?;
    Ok(ds.manifest)
}

/// Count of samples per beam index.
pub fn label_histogram(labels: &[BeamIndex], num_beams: usize) -> Vec<usize> {
    let mut h = vec![0; num_beams];
    for &l in labels {
        if l < num_beams {
            h[l] += 1;
        }
    }
    h
}

/// Whether `values` (taken mod `modulus`) form one contiguous run on the
/// circle. Empty and full sets count as bands.
pub fn is_circular_band(values: &[usize], modulus: usize) -> bool {
    let set: BTreeSet<usize> = values.iter().map(|v| v % modulus.max(1)).collect();
    if set.is_empty() || set.len() == modulus {
        return true;
    }
    let runs = set.iter().filter(|&&v| !set.contains(&((v + 1) % modulus))).count();
    runs == 1
}
