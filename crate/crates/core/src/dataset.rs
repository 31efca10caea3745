//! Supervised sample pairs cut from trajectories, random splits, and the
//! dataset file format.
//!
//! A window starting at frame `i` with shift `s` takes the eight frames
//! `i, i+s, …, i+7s` as input and frame `i+8s` as target, so a trajectory of
//! `F` frames yields `F − 8s` pairs at stride 1.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::rng::substream;
use crate::spectral::Field;
use crate::trajectory::{Trajectory, TrajectoryManifest};

/// Historic states per model input.
pub const N_HISTORY: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub input: Vec<Field>,
    pub target: Field,
}

/// Frames needed for one pair at `shift`.
pub fn min_frames(shift: usize) -> usize {
    N_HISTORY * shift + 1
}

pub fn pair_count(frames: usize, shift: usize) -> usize {
    frames.saturating_sub(N_HISTORY * shift)
}

/// Trajectory frame indices `(inputs, target)` of window `i`.
pub fn window_indices(i: usize, shift: usize) -> ([usize; N_HISTORY], usize) {
    let inputs = std::array::from_fn(|h| i + h * shift);
    (inputs, i + N_HISTORY * shift)
}

fn check_window(frames: usize, shift: usize) -> Result<()> {
    if shift == 0 {
        return Err(Error::InvalidArgument("shift must be >= 1".into()));
    }
    if frames < min_frames(shift) {
        return Err(Error::TooShort {
            frames,
            required: min_frames(shift),
            shift,
        });
    }
    Ok(())
}

/// Sliding windows with stride 1.
pub fn window(trajectory: &Trajectory, shift: usize) -> Result<Vec<SamplePair>> {
    let frames = trajectory.frames();
    check_window(frames.len(), shift)?;
    Ok((0..pair_count(frames.len(), shift))
        .map(|i| {
            let (inputs, target) = window_indices(i, shift);
            SamplePair {
                input: inputs.iter().map(|&j| frames[j].clone()).collect(),
                target: frames[target].clone(),
            }
        })
        .collect())
}

/// Pooled sample pairs from one or more trajectories, stored as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dims: Vec<usize>,
    extent: Vec<f64>,
    shift: usize,
    /// Time between consecutive model states (s).
    dt: f64,
    pairs_per_source: Vec<usize>,
    sources: Vec<TrajectoryManifest>,
    /// `[pair][history][grid]`
    inputs: Vec<f32>,
    /// `[pair][grid]`
    targets: Vec<f32>,
}

impl Dataset {
    /// Windows every trajectory separately and pools the pairs; no window
    /// spans two simulations.
    pub fn from_trajectories(trajectories: &[Trajectory], shift: usize) -> Result<Self> {
        let first = trajectories
            .first()
            .ok_or_else(|| Error::InvalidArgument("no trajectories".into()))?;
        let grid = &first.frames()[0];
        let size = grid.len();
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        let mut pairs_per_source = Vec::new();
        for t in trajectories {
            grid.same_grid(&t.frames()[0])?;
            if t.dt() != first.dt() {
                return Err(Error::InvalidArgument("trajectories differ in frame interval".into()));
            }
            let frames = t.frames();
            check_window(frames.len(), shift)?;
            let count = pair_count(frames.len(), shift);
            inputs.reserve(count * N_HISTORY * size);
            targets.reserve(count * size);
            for i in 0..count {
                let (ins, tgt) = window_indices(i, shift);
                for j in ins {
                    inputs.extend(frames[j].values().iter().map(|&v| v as f32));
                }
                targets.extend(frames[tgt].values().iter().map(|&v| v as f32));
            }
            pairs_per_source.push(count);
        }
        Ok(Dataset {
            dims: grid.dims().to_vec(),
            extent: grid.extent().to_vec(),
            shift,
            dt: first.dt() * shift as f64,
            pairs_per_source,
            sources: trajectories.iter().map(Trajectory::manifest).collect(),
            inputs,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.pairs_per_source.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn pairs_per_source(&self) -> &[usize] {
        &self.pairs_per_source
    }

    pub fn sources(&self) -> &[TrajectoryManifest] {
        &self.sources
    }

    /// Grid points per state.
    pub fn grid_size(&self) -> usize {
        self.dims.iter().product()
    }

    /// Eight stacked input states of pair `i`, channel-major.
    pub fn input(&self, i: usize) -> &[f32] {
        let s = N_HISTORY * self.grid_size();
        &self.inputs[i * s..(i + 1) * s]
    }

    pub fn target(&self, i: usize) -> &[f32] {
        let s = self.grid_size();
        &self.targets[i * s..(i + 1) * s]
    }

    pub fn target_field(&self, i: usize) -> Result<Field> {
        self.to_field(self.target(i))
    }

    pub fn pair(&self, i: usize) -> Result<SamplePair> {
        let s = self.grid_size();
        Ok(SamplePair {
            input: self
                .input(i)
                .chunks_exact(s)
                .map(|c| self.to_field(c))
                .collect::<Result<_>>()?,
            target: self.target_field(i)?,
        })
    }

    fn to_field(&self, values: &[f32]) -> Result<Field> {
        Field::new(
            values.iter().map(|&v| v as f64).collect(),
            self.dims.clone(),
            self.extent.clone(),
        )
    }

    /// Global mean and standard deviation over all stored states.
    pub fn statistics(&self) -> Standardization {
        let all = self.inputs.iter().chain(&self.targets).map(|&v| v as f64);
        let n = (self.inputs.len() + self.targets.len()) as f64;
        let mean = all.clone().sum::<f64>() / n;
        let var = all.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Standardization {
            mean,
            std: var.sqrt().max(f64::MIN_POSITIVE),
        }
    }

    /// Applies `(v − mean)/std` to every stored value. Off by default.
    pub fn standardize(&mut self, s: Standardization) {
        for v in self.inputs.iter_mut().chain(self.targets.iter_mut()) {
            *v = ((*v as f64 - s.mean) / s.std) as f32;
        }
    }

    pub fn manifest(&self) -> DatasetManifest {
        let payload = self.payload();
        DatasetManifest {
            format_version: io::FORMAT_VERSION,
            generator_version: io::generator_version(),
            dims: self.dims.len(),
            n: self.dims.clone(),
            length: self.extent.clone(),
            dt: self.dt,
            shift: self.shift,
            n_history: N_HISTORY,
            pair_count: self.len(),
            pairs_per_source: self.pairs_per_source.clone(),
            payload_bytes: payload.len() as u64,
            payload_sha256: io::sha256_hex(&payload),
            source_manifests: self.sources.clone(),
        }
    }

    /// Pair-major payload: eight input states then the target.
    fn payload(&self) -> Vec<u8> {
        let s = self.grid_size();
        let mut out = Vec::with_capacity((self.inputs.len() + self.targets.len()) * 4);
        for i in 0..self.len() {
            out.extend(io::encode_f32(self.input(i).iter().copied()));
            out.extend(io::encode_f32(self.targets[i * s..(i + 1) * s].iter().copied()));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.payload())?;
        io::write_json(&io::manifest_path(path), &self.manifest())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let m: DatasetManifest = io::read_json(&io::manifest_path(path))?;
        let bytes = io::read_bytes(path)?;
        io::verify_payload(path, &bytes, m.format_version, m.payload_bytes, &m.payload_sha256)?;
        if m.n_history != N_HISTORY {
            return Err(Error::InvalidArgument(format!(
                "dataset has {} history states, expected {N_HISTORY}",
                m.n_history
            )));
        }
        let s: usize = m.n.iter().product();
        let per_pair = (N_HISTORY + 1) * s;
        let values = io::decode_f32(&bytes);
        if values.len() != per_pair * m.pair_count || m.pairs_per_source.iter().sum::<usize>() != m.pair_count {
            return Err(Error::LengthMismatch {
                path: path.to_path_buf(),
                expected: (per_pair * m.pair_count * 4) as u64,
                found: bytes.len() as u64,
            });
        }
        let mut inputs = Vec::with_capacity(N_HISTORY * s * m.pair_count);
        let mut targets = Vec::with_capacity(s * m.pair_count);
        for chunk in values.chunks_exact(per_pair) {
            inputs.extend_from_slice(&chunk[..N_HISTORY * s]);
            targets.extend_from_slice(&chunk[N_HISTORY * s..]);
        }
        Ok(Dataset {
            dims: m.n,
            extent: m.length,
            shift: m.shift,
            dt: m.dt,
            pairs_per_source: m.pairs_per_source,
            sources: m.source_manifests,
            inputs,
            targets,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub generator_version: String,
    pub dims: usize,
    pub n: Vec<usize>,
    #[serde(rename = "L")]
    pub length: Vec<f64>,
    /// Time step between model states (s).
    pub dt: f64,
    pub shift: usize,
    pub n_history: usize,
    pub pair_count: usize,
    pub pairs_per_source: Vec<usize>,
    pub payload_bytes: u64,
    pub payload_sha256: String,
    pub source_manifests: Vec<TrajectoryManifest>,
}

/// Seeded train/validation partition of a sample population.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub split_id: u64,
    pub seed: u64,
    /// Per-mille, to keep the plan hashable and exactly reproducible.
    pub train_permille: u32,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl SplitPlan {
    pub fn train_fraction(&self) -> f64 {
        self.train_permille as f64 / 1000.0
    }

    /// SHA-256 over the index sets; equal plans have equal fingerprints.
    pub fn fingerprint(&self) -> String {
        let mut bytes = Vec::new();
        for set in [&self.train, &self.validation] {
            bytes.extend((set.len() as u64).to_le_bytes());
            for &i in set.iter() {
                bytes.extend((i as u64).to_le_bytes());
            }
        }
        io::sha256_hex(&bytes)
    }
}

/// Shuffles `0..population` with the `(seed, split_id)` stream and cuts it
/// at `round(train_fraction·population)`.
pub fn split(population: usize, seed: u64, split_id: u64, train_fraction: f64) -> Result<SplitPlan> {
    if population < 2 {
        return Err(Error::InvalidArgument(format!(
            "population {population} is too small to split"
        )));
    }
    let n_train = (train_fraction * population as f64).round() as usize;
    if !(train_fraction > 0.0 && train_fraction < 1.0) || n_train == 0 || n_train >= population {
        return Err(Error::InvalidArgument(format!(
            "train fraction {train_fraction} leaves one side of a {population}-sample split empty"
        )));
    }
    let mut order: Vec<usize> = (0..population).collect();
    order.shuffle(&mut substream(seed, "split", split_id));
    let validation = order.split_off(n_train);
    Ok(SplitPlan {
        split_id,
        seed,
        train_permille: (train_fraction * 1000.0).round() as u32,
        train: order,
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim_ks::{ks_simulate, KsConfig};
    use crate::trajectory::Source;

    fn counting_trajectory(frames: usize) -> Trajectory {
        let fields = (0..frames)
            .map(|j| Field::line(vec![j as f64; 4], 1.0).unwrap())
            .collect();
        Trajectory::new(fields, 0.1, Source::Ks(KsConfig::desk(1))).unwrap()
    }

    #[test]
    fn window_counts() {
        assert_eq!(pair_count(2001, 1), 1993);
        assert_eq!(pair_count(2001, 10), 1921);
        assert_eq!(pair_count(2500, 13), 2396);
        for (frames, shift) in [(2001, 1), (2001, 10), (300, 13), (9, 1), (17, 2)] {
            let pairs = window(&counting_trajectory(frames), shift).unwrap();
            assert_eq!(pairs.len(), pair_count(frames, shift));
        }
    }

    #[test]
    fn minimal_trajectories() {
        let pairs = window(&counting_trajectory(9), 1).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].target.values()[0], 8.0);
        let pairs = window(&counting_trajectory(10), 1).unwrap();
        assert_eq!(pairs.last().unwrap().target.values()[0], 9.0);
        let err = window(&counting_trajectory(8), 1).unwrap_err();
        assert!(matches!(err, Error::TooShort { required: 9, .. }));
    }

    #[test]
    fn windows_recover_trajectory_frames() {
        let shift = 3;
        let pairs = window(&counting_trajectory(60), shift).unwrap();
        for (i, p) in pairs.iter().enumerate() {
            let (ins, tgt) = window_indices(i, shift);
            for (f, j) in p.input.iter().zip(ins) {
                assert_eq!(f.values()[0], j as f64);
            }
            assert_eq!(p.target.values()[0], tgt as f64);
            assert_eq!(tgt - ins[N_HISTORY - 1], shift);
        }
    }

    #[test]
    fn dataset_pools_without_crossing_simulations() {
        let a = counting_trajectory(12);
        let b = counting_trajectory(10);
        let d = Dataset::from_trajectories(&[a, b], 1).unwrap();
        assert_eq!(d.len(), 4 + 2);
        assert_eq!(d.pairs_per_source(), &[4, 2]);
        // first pair of the second trajectory starts at its frame 0
        assert_eq!(d.input(4)[0], 0.0);
        assert_eq!(d.target(3)[0], 11.0);
        assert!((d.dt() - 0.1).abs() < 1e-15);
    }

    fn small_dataset() -> Dataset {
        let cfg = KsConfig {
            n: 16,
            duration: 1.0,
            observe_stride: 1,
            keep_fraction: 0.5,
            ..KsConfig::desk(1)
        };
        let t = ks_simulate(&cfg).unwrap();
        Dataset::from_trajectories(&[t.clone(), t], 1).unwrap()
    }

    #[test]
    fn save_load_is_bit_exact() {
        let d = small_dataset();
        assert_eq!(d.len(), 6);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.bin");
        d.save(&p).unwrap();
        assert_eq!(Dataset::load(&p).unwrap(), d);
        let m: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("data.json")).unwrap()).unwrap();
        assert_eq!(m["n_history"], 8);
        assert_eq!(m["pair_count"], 6);
        assert_eq!(m["shift"], 1);
        assert_eq!(m["source_manifests"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn truncated_and_versioned_files_fail_loudly() {
        let d = small_dataset();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("data.bin");
        d.save(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(Dataset::load(&p), Err(Error::LengthMismatch { .. })));

        std::fs::write(&p, &bytes).unwrap();
        let mpath = dir.path().join("data.json");
        let mut m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mpath).unwrap()).unwrap();
        m["format_version"] = serde_json::json!(io::FORMAT_VERSION + 1);
        std::fs::write(&mpath, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(matches!(Dataset::load(&p), Err(Error::Version { .. })));
    }

    #[test]
    fn standardization_is_optional_and_centers() {
        let mut d = small_dataset();
        let s = d.statistics();
        d.standardize(s);
        let after = d.statistics();
        assert!(after.mean.abs() < 1e-5);
        assert!((after.std - 1.0).abs() < 1e-4);
    }

    #[test]
    fn split_plans() {
        let p = split(10, 42, 0, 0.8).unwrap();
        assert_eq!((p.train.len(), p.validation.len()), (8, 2));
        assert_eq!(p, split(10, 42, 0, 0.8).unwrap());
        assert_ne!(p, split(10, 42, 1, 0.8).unwrap());
        assert_eq!(p.fingerprint(), split(10, 42, 0, 0.8).unwrap().fingerprint());
        let mut all: Vec<usize> = p.train.iter().chain(&p.validation).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(split(10, 1, 0, 1.0).is_err());
        assert!(split(10, 1, 0, 0.01).is_err());
        assert!(split(1, 1, 0, 0.5).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn splits_are_disjoint_and_cover(pop in 2usize..500, seed in any::<u64>(), id in 0u64..50, frac in 0.05..0.95_f64) {
                if let Ok(p) = split(pop, seed, id, frac) {
                    let mut seen = vec![false; pop];
                    for &i in p.train.iter().chain(&p.validation) {
                        prop_assert!(!seen[i]);
                        seen[i] = true;
                    }
                    prop_assert!(seen.into_iter().all(|s| s));
                    prop_assert_eq!(&p, &split(pop, seed, id, frac).unwrap());
                }
            }

            #[test]
            fn pair_count_formula(frames in 1usize..400, shift in 1usize..20) {
                let t = counting_trajectory(frames);
                match window(&t, shift) {
                    Ok(pairs) => prop_assert_eq!(pairs.len(), frames - 8 * shift),
                    Err(_) => prop_assert!(frames < 8 * shift + 1),
                }
            }
        }
    }
}
