//! Time series of simulated fields and their on-disk format.
//!
//! A trajectory is stored as two files:
//!
//! * `<name>.bin`: little-endian `f32` values, frame-major, each frame
//!   row-major (`y` outer, `x` inner in 2D);
//! * `<name>.json`: a manifest describing the grid, the time step, the
//!   generator parameters, the payload length and its SHA-256.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::sim_ks::KsConfig;
use crate::sim_waves::WaveConfig;
use crate::spectral::Field;

/// Generator that produced a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    Ks(KsConfig),
    Waves(WaveConfig),
}

impl Source {
    pub fn seed(&self) -> u64 {
        match self {
            Source::Ks(c) => c.seed,
            Source::Waves(c) => c.seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    frames: Vec<Field>,
    dt: f64,
    source: Source,
}

impl Trajectory {
    pub fn new(frames: Vec<Field>, dt: f64, source: Source) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("trajectory needs at least one frame".into()))?;
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("frame interval {dt} must be > 0")));
        }
        for f in &frames[1..] {
            first.same_grid(f)?;
        }
        Ok(Trajectory { frames, dt, source })
    }

    pub fn frames(&self) -> &[Field] {
        &self.frames
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn source(&self) -> &Source {
        &self.source
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Keeps the first `points` samples of every 1D frame, e.g. the observed
    /// part of a zero-padded wave domain.
    pub fn crop(&self, points: usize) -> Result<Trajectory> {
        let first = &self.frames[0];
        if first.ndim() != 1 || points > first.len() {
            return Err(Error::InvalidArgument(format!(
                "cannot crop {:?} to {points} points",
                first.dims()
            )));
        }
        let length = first.extent()[0] * points as f64 / first.len() as f64;
        let frames = self
            .frames
            .iter()
            .map(|f| {
                let mut g = Field::line(f.values()[..points].to_vec(), length)?;
                if let Some(t) = f.time() {
                    g = g.with_time(t);
                }
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(frames, self.dt, self.source.clone())
    }

    pub fn manifest(&self) -> TrajectoryManifest {
        let payload = self.payload();
        let first = &self.frames[0];
        let params = match &self.source {
            Source::Ks(c) => SourceParams::Ks {
                nu: c.nu,
                sim_n: c.n,
                observe_stride: c.observe_stride,
                keep_fraction: c.keep_fraction,
                dt_sim: c.dt_sim,
                save_every: c.save_every,
                duration: c.duration,
            },
            Source::Waves(c) => SourceParams::Waves {
                n_components: c.n_components,
                omega_min: c.omega_min,
                omega_max: c.omega_max,
                d: c.depth,
                g: c.gravity,
                pad_points: c.pad_points,
                a0: c.a0,
                duration: c.duration,
                observed_n: c.n,
                observed_length: c.length,
            },
        };
        TrajectoryManifest {
            format_version: io::FORMAT_VERSION,
            generator_version: io::generator_version(),
            dims: first.ndim(),
            n: first.dims().to_vec(),
            length: first.extent().to_vec(),
            dt: self.dt,
            frames: self.frames.len(),
            seed: self.source.seed(),
            payload_bytes: payload.len() as u64,
            payload_sha256: io::sha256_hex(&payload),
            params,
        }
    }

    fn payload(&self) -> Vec<u8> {
        io::encode_f32(
            self.frames
                .iter()
                .flat_map(|f| f.values().iter().map(|&v| v as f32)),
        )
    }

    /// Writes `path` (binary payload) and its `.json` manifest.
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.payload())?;
        io::write_json(&io::manifest_path(path), &self.manifest())
    }

    pub fn load(path: &Path) -> Result<Trajectory> {
        let m: TrajectoryManifest = io::read_json(&io::manifest_path(path))?;
        let bytes = io::read_bytes(path)?;
        io::verify_payload(path, &bytes, m.format_version, m.payload_bytes, &m.payload_sha256)?;
        let per_frame: usize = m.n.iter().product();
        let values = io::decode_f32(&bytes);
        if values.len() != per_frame * m.frames {
            return Err(Error::LengthMismatch {
                path: path.to_path_buf(),
                expected: (per_frame * m.frames * 4) as u64,
                found: bytes.len() as u64,
            });
        }
        let frames = values
            .chunks_exact(per_frame)
            .enumerate()
            .map(|(j, c)| {
                Field::new(c.iter().map(|&v| v as f64).collect(), m.n.clone(), m.length.clone())
                    .map(|f| f.with_time(j as f64 * m.dt))
            })
            .collect::<Result<Vec<_>>>()?;
        let source = m.source()?;
        Trajectory::new(frames, m.dt, source)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub format_version: u32,
    pub generator_version: String,
    pub dims: usize,
    /// Points per axis of each stored frame.
    pub n: Vec<usize>,
    /// Extent per axis of each stored frame (m).
    #[serde(rename = "L")]
    pub length: Vec<f64>,
    pub dt: f64,
    pub frames: usize,
    pub seed: u64,
    pub payload_bytes: u64,
    pub payload_sha256: String,
    #[serde(flatten)]
    pub params: SourceParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SourceParams {
    Ks {
        nu: f64,
        /// Integration grid points per axis.
        sim_n: usize,
        observe_stride: usize,
        keep_fraction: f64,
        dt_sim: f64,
        save_every: usize,
        duration: f64,
    },
    Waves {
        n_components: usize,
        omega_min: f64,
        omega_max: f64,
        d: f64,
        g: f64,
        pad_points: usize,
        a0: f64,
        duration: f64,
        observed_n: usize,
        observed_length: f64,
    },
}

impl TrajectoryManifest {
    /// Rebuilds the generator configuration.
    pub fn source(&self) -> Result<Source> {
        Ok(match &self.params {
            SourceParams::Ks {
                nu,
                sim_n,
                observe_stride,
                keep_fraction,
                dt_sim,
                save_every,
                duration,
            } => Source::Ks(KsConfig {
                dims: self.dims,
                nu: *nu,
                length: self.length[0],
                n: *sim_n,
                observe_stride: *observe_stride,
                dt_sim: *dt_sim,
                save_every: *save_every,
                duration: *duration,
                keep_fraction: *keep_fraction,
                seed: self.seed,
            }),
            SourceParams::Waves {
                n_components,
                omega_min,
                omega_max,
                d,
                g,
                pad_points,
                a0,
                duration,
                observed_n,
                observed_length,
            } => Source::Waves(WaveConfig {
                n_components: *n_components,
                omega_min: *omega_min,
                omega_max: *omega_max,
                depth: *d,
                gravity: *g,
                n: *observed_n,
                length: *observed_length,
                pad_points: *pad_points,
                duration: *duration,
                dt: self.dt,
                a0: *a0,
                seed: self.seed,
            }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim_ks::ks_simulate;
    use crate::sim_waves::wave_simulate;

    #[test]
    fn ks_round_trip_through_disk() {
        let cfg = KsConfig {
            n: 32,
            duration: 0.5,
            observe_stride: 1,
            keep_fraction: 0.5,
            ..KsConfig::desk(1)
        };
        let t = ks_simulate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ks.bin");
        t.save(&p).unwrap();
        let back = Trajectory::load(&p).unwrap();
        assert_eq!(back.source(), t.source());
        assert_eq!(back.len(), 6);
        for (a, b) in back.frames().iter().zip(t.frames()) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 6 * 32 * 4);
        let json: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("ks.json")).unwrap()).unwrap();
        for key in ["dims", "n", "L", "nu", "dt", "frames", "seed", "keep_fraction", "generator_version"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }

    #[test]
    fn waves_manifest_names_generator_parameters() {
        let cfg = WaveConfig {
            duration: 0.2,
            n_components: 5,
            ..WaveConfig::desk()
        };
        let t = wave_simulate(&cfg).unwrap().crop(cfg.n).unwrap();
        assert_eq!(t.frames()[0].len(), 256);
        assert_eq!(t.frames()[0].extent(), &[1024.0]);
        let m = serde_json::to_value(t.manifest()).unwrap();
        for key in ["n_components", "omega_min", "omega_max", "d", "g", "pad_points", "a0"] {
            assert!(m.get(key).is_some(), "missing {key}");
        }
        assert_eq!(m["kind"], "waves");
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.bin");
        t.save(&p).unwrap();
        assert_eq!(Trajectory::load(&p).unwrap().source(), t.source());
    }

    #[test]
    fn corrupted_payload_is_detected() {
        let cfg = KsConfig {
            n: 16,
            duration: 0.1,
            observe_stride: 1,
            keep_fraction: 0.5,
            ..KsConfig::desk(1)
        };
        let t = ks_simulate(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ks.bin");
        t.save(&p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[0] ^= 1;
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(Trajectory::load(&p), Err(Error::Checksum { .. })));
        std::fs::write(&p, &bytes[..10]).unwrap();
        assert!(matches!(Trajectory::load(&p), Err(Error::LengthMismatch { .. })));
    }
}
