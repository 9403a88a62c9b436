//! On-disk dataset: one directory per sequence holding raw 8-bit frames and a
//! ground-truth CSV, plus a JSON manifest at the root.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use bowlnet_core::render::{render_sequence, Image};
use bowlnet_core::sim::{sample_initial_conditions, simulate_trajectory, SimulationConfig, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{format_err, io_err, LabError, LabResult};

pub const FRAME_MAGIC: [u8; 4] = *b"BNF1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const GROUND_TRUTH_FILE: &str = "gt.csv";
const MANIFEST_VERSION: u32 = 1;

/// Encodes an image as `magic | H | W | C` (little-endian u32) followed by
/// row-major 8-bit intensities `round(255·v)`.
pub fn encode_frame(image: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + image.data.len());
    out.extend_from_slice(&FRAME_MAGIC);
    for d in [image.height, image.width, 3] {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend(image.to_bytes());
    out
}

pub fn decode_frame(bytes: &[u8], path: &Path) -> LabResult<Image> {
    if bytes.len() < 16 || bytes[..4] != FRAME_MAGIC {
        return Err(format_err(path, "not a frame file (bad magic)"));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (h, w, c) = (dim(0), dim(1), dim(2));
    if c != 3 {
        return Err(format_err(path, format!("expected 3 channels, header says {c}")));
    }
    if bytes.len() != 16 + h * w * 3 {
        return Err(format_err(path, format!("{h}×{w}×3 frame needs {} bytes, file has {}", 16 + h * w * 3, bytes.len())));
    }
    Ok(Image::from_bytes(w, h, &bytes[16..])?)
}

/// Per-frame ground truth of one sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub t: Vec<f64>,
    pub q: Vec<[f64; 3]>,
    /// Continuous pixel coordinates.
    pub px: Vec<[f64; 2]>,
    pub v: Vec<[f64; 3]>,
    pub omega: Vec<[f64; 3]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct GroundTruthRow {
    t: f64,
    q_x: f64,
    q_y: f64,
    q_z: f64,
    px: f64,
    py: f64,
    v_x: f64,
    v_y: f64,
    v_z: f64,
    #[serde(rename = "ω_x")]
    w_x: f64,
    #[serde(rename = "ω_y")]
    w_y: f64,
    #[serde(rename = "ω_z")]
    w_z: f64,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Frames `start..start+len` of a trajectory, with time restarted at zero.
    pub fn from_trajectory(traj: &Trajectory, start: usize, len: usize, resolution: usize, half_extent: f64) -> Self {
        let px = traj.pixel_positions(resolution, half_extent);
        let t0 = traj.times[start];
        let r = start..start + len;
        Self {
            t: traj.times[r.clone()].iter().map(|t| t - t0).collect(),
            q: traj.centers[r.clone()].to_vec(),
            px: px[r.clone()].to_vec(),
            v: traj.velocities[r.clone()].to_vec(),
            omega: traj.angular_velocities[r].to_vec(),
        }
    }

    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for i in 0..self.len() {
            let (q, p, v, o) = (self.q[i], self.px[i], self.v[i], self.omega[i]);
            w.serialize(GroundTruthRow {
                t: self.t[i],
                q_x: q[0],
                q_y: q[1],
                q_z: q[2],
                px: p[0],
                py: p[1],
                v_x: v[0],
                v_y: v[1],
                v_z: v[2],
                w_x: o[0],
                w_y: o[1],
                w_z: o[2],
            })
            .expect("in-memory csv write");
        }
        w.into_inner().expect("in-memory csv flush")
    }

    pub fn from_csv(bytes: &[u8], path: &Path) -> LabResult<Self> {
        let mut gt = Self::default();
        for row in csv::Reader::from_reader(bytes).deserialize::<GroundTruthRow>() {
            let r = row.map_err(|e| format_err(path, e.to_string()))?;
            gt.t.push(r.t);
            gt.q.push([r.q_x, r.q_y, r.q_z]);
            gt.px.push([r.px, r.py]);
            gt.v.push([r.v_x, r.v_y, r.v_z]);
            gt.omega.push([r.w_x, r.w_y, r.w_z]);
        }
        Ok(gt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Sampled quantities of the long simulation a sequence came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub a: f64,
    pub gamma: f64,
    pub elevation: f64,
    pub azimuth: f64,
    pub euler: [f64; 3],
    pub vx: f64,
    pub vy: f64,
    /// First emitted frame of the long simulation used by this sequence.
    pub start_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEntry {
    pub id: String,
    /// Long simulation the sequence was cut from; never shared across splits.
    pub simulation: u64,
    /// Directory relative to the dataset root.
    pub dir: String,
    pub frames: Vec<String>,
    pub ground_truth: String,
    pub meta: SequenceMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config: ExperimentConfig,
    pub train: Vec<SequenceEntry>,
    pub val: Vec<SequenceEntry>,
    pub test: Vec<SequenceEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> &[SequenceEntry] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    fn split_mut(&mut self, split: Split) -> &mut Vec<SequenceEntry> {
        match split {
            Split::Train => &mut self.train,
            Split::Val => &mut self.val,
            Split::Test => &mut self.test,
        }
    }

    /// Ids are unique and simulation ids are disjoint across splits.
    pub fn check_consistency(&self) -> LabResult<()> {
        let mut ids = std::collections::HashSet::new();
        let mut owner = std::collections::HashMap::new();
        for split in Split::ALL {
            for e in self.split(split) {
                if !ids.insert(e.id.as_str()) {
                    return Err(LabError::Mismatch(format!("duplicate sequence id {}", e.id)));
                }
                if *owner.entry(e.simulation).or_insert(split) != split {
                    return Err(LabError::Mismatch(format!("simulation {} appears in two splits", e.simulation)));
                }
            }
        }
        Ok(())
    }
}

/// One sequence held in memory. Frames stay 8-bit until requested.
#[derive(Debug, Clone)]
pub struct SequenceData {
    pub entry: SequenceEntry,
    resolution: [usize; 2],
    frames: Vec<Vec<u8>>,
    pub ground_truth: GroundTruth,
}

impl SequenceData {
    /// Decoded frame `i` with intensities in `[0, 1]`.
    pub fn frame(&self, i: usize) -> Image {
        Image::from_bytes(self.resolution[1], self.resolution[0], &self.frames[i]).expect("validated at load")
    }

    pub fn frame_bytes(&self, i: usize) -> &[u8] {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// A loaded dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub train: Vec<SequenceData>,
    pub val: Vec<SequenceData>,
    pub test: Vec<SequenceData>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[SequenceData] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.manifest.config
    }

    pub fn load(root: &Path) -> LabResult<Self> {
        let manifest = read_manifest(root)?;
        let load_split = |split: Split| -> LabResult<Vec<SequenceData>> {
            manifest.split(split).par_iter().map(|e| load_sequence(root, e)).collect()
        };
        Ok(Self {
            root: root.to_path_buf(),
            train: load_split(Split::Train)?,
            val: load_split(Split::Val)?,
            test: load_split(Split::Test)?,
            manifest,
        })
    }
}

pub fn read_manifest(root: &Path) -> LabResult<DatasetManifest> {
    let path = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| format_err(&path, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(format_err(&path, format!("manifest version {} (expected {MANIFEST_VERSION})", manifest.version)));
    }
    manifest.config.validate()?;
    manifest.check_consistency()?;
    Ok(manifest)
}

fn load_sequence(root: &Path, entry: &SequenceEntry) -> LabResult<SequenceData> {
    let dir = root.join(&entry.dir);
    let mut resolution = None;
    let mut frames = Vec::with_capacity(entry.frames.len());
    for f in &entry.frames {
        let path = dir.join(f);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let image = decode_frame(&bytes, &path)?;
        let hw = [image.height, image.width];
        if *resolution.get_or_insert(hw) != hw {
            return Err(format_err(&path, "frame size differs from the rest of the sequence"));
        }
        frames.push(bytes[16..].to_vec());
    }
    let gt_path = dir.join(&entry.ground_truth);
    let ground_truth = GroundTruth::from_csv(&fs::read(&gt_path).map_err(io_err(&gt_path))?, &gt_path)?;
    if ground_truth.len() != frames.len() {
        return Err(format_err(&gt_path, format!("{} rows for {} frames", ground_truth.len(), frames.len())));
    }
    Ok(SequenceData { entry: entry.clone(), resolution: resolution.unwrap_or([0, 0]), frames, ground_truth })
}

struct Simulated {
    split: Split,
    simulation: u64,
    traj: Trajectory,
    offsets: Vec<usize>,
}

/// Plan of long simulations: `(split, simulation id, sub-sequence count)`.
fn simulation_plan(config: &ExperimentConfig) -> Vec<(Split, u64, usize)> {
    let mut plan = Vec::new();
    let mut next_id = 0u64;
    let mut remaining = config.counts.train;
    while remaining > 0 {
        let n = remaining.min(config.train_per_simulation);
        plan.push((Split::Train, next_id, n));
        next_id += 1;
        remaining -= n;
    }
    for (split, count) in [(Split::Val, config.counts.val), (Split::Test, config.counts.test)] {
        for _ in 0..count {
            plan.push((split, next_id, 1));
            next_id += 1;
        }
    }
    plan
}

fn simulate(config: &ExperimentConfig, split: Split, simulation: u64, count: usize) -> LabResult<Simulated> {
    let sim = SimulationConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(simulation);
    let (geometry, state, initial) = sample_initial_conditions(&mut rng, config.scenario()?, &sim)?;
    let traj = simulate_trajectory(&state, &geometry, &initial, &sim, config.simulation_frames)?;
    let last_start = config.simulation_frames - config.sequence_frames();
    let offsets = match split {
        Split::Train => (0..count).map(|_| rng.random_range(0..=last_start)).collect(),
        Split::Val | Split::Test => vec![0],
    };
    Ok(Simulated { split, simulation, traj, offsets })
}

fn write_file(path: &Path, bytes: &[u8]) -> LabResult<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

/// Simulates, renders and writes a dataset; fully determined by the config.
pub fn generate(config: &ExperimentConfig, out: &Path) -> LabResult<DatasetManifest> {
    config.validate()?;
    let render = config.render_config()?;
    let radius = SimulationConfig::default().radius;
    render.validate(radius)?;
    let len = config.sequence_frames();
    let sims = simulation_plan(config)
        .into_par_iter()
        .map(|(split, id, n)| simulate(config, split, id, n))
        .collect::<LabResult<Vec<_>>>()?;

    fs::create_dir_all(out).map_err(io_err(out))?;
    let mut manifest =
        DatasetManifest { version: MANIFEST_VERSION, config: config.clone(), train: vec![], val: vec![], test: vec![] };
    let mut jobs = Vec::new();
    for s in &sims {
        for &offset in &s.offsets {
            let index = manifest.split(s.split).len();
            let id = format!("{}-{index:05}", s.split.name());
            let dir = format!("{}/{index:05}", s.split.name());
            let frames: Vec<String> = (0..len).map(|i| format!("frame_{i:03}.bin")).collect();
            let ic = s.traj.initial;
            let entry = SequenceEntry {
                id,
                simulation: s.simulation,
                dir,
                frames,
                ground_truth: GROUND_TRUTH_FILE.into(),
                meta: SequenceMeta {
                    a: s.traj.geometry.a,
                    gamma: s.traj.geometry.gamma,
                    elevation: ic.elevation,
                    azimuth: ic.azimuth,
                    euler: ic.euler,
                    vx: ic.vx,
                    vy: ic.vy,
                    start_offset: offset,
                },
            };
            manifest.split_mut(s.split).push(entry.clone());
            jobs.push((entry, &s.traj));
        }
    }
    jobs.par_iter().try_for_each(|(entry, traj)| -> LabResult<()> {
        let dir = out.join(&entry.dir);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let start = entry.meta.start_offset;
        let indices: Vec<usize> = (start..start + len).collect();
        let frames = render_sequence(traj, radius, &render, &indices)?;
        for (name, frame) in entry.frames.iter().zip(&frames) {
            write_file(&dir.join(name), &encode_frame(frame))?;
        }
        let gt = GroundTruth::from_trajectory(traj, start, len, config.resolution, config.half_extent);
        write_file(&dir.join(&entry.ground_truth), &gt.to_csv())
    })?;
    manifest.check_consistency()?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&out.join(MANIFEST_FILE), json.as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip() {
        let mut img = Image::black(5, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i % 7) as f64 / 6.0;
        }
        let q = img.quantized();
        let back = decode_frame(&encode_frame(&q), Path::new("x")).unwrap();
        assert_eq!(back, q);
        let mut bad = encode_frame(&q);
        bad[0] = b'X';
        assert!(decode_frame(&bad, Path::new("x")).is_err());
        assert!(decode_frame(&encode_frame(&q)[..20], Path::new("x")).is_err());
    }

    #[test]
    fn ground_truth_csv_round_trip() {
        let gt = GroundTruth {
            t: vec![0.0, 0.025],
            q: vec![[0.1, -0.2, 0.3], [1.0 / 3.0, 2.0, -0.0]],
            px: vec![[24.5, 13.25], [1e-12, 47.9]],
            v: vec![[1.5, -2.5, 0.1], [0.0; 3]],
            omega: vec![[10.0, -20.0, 30.5], [std::f64::consts::PI; 3]],
        };
        let csv = gt.to_csv();
        let header = String::from_utf8(csv.clone()).unwrap();
        assert!(header.starts_with("t,q_x,q_y,q_z,px,py,v_x,v_y,v_z,ω_x,ω_y,ω_z\n"));
        assert_eq!(GroundTruth::from_csv(&csv, Path::new("gt.csv")).unwrap(), gt);
    }

    #[test]
    fn plan_keeps_simulations_disjoint() {
        let config = ExperimentConfig::smoke();
        let plan = simulation_plan(&config);
        let train: usize = plan.iter().filter(|p| p.0 == Split::Train).map(|p| p.2).sum();
        assert_eq!(train, config.counts.train);
        let ids: std::collections::HashSet<u64> = plan.iter().map(|p| p.1).collect();
        assert_eq!(ids.len(), plan.len());
    }
}
