//! Seeded synthetic cross-modality tracklet generator.
//!
//! Every identity has a latent center in a shared low-rank subspace, one offset per
//! modality and one per camera. Each (identity, camera, modality) triple yields one
//! tracklet whose frames are `center + modality offset + camera offset + noise`.
//!
//! Randomness comes from xoshiro256++ seeded through SplitMix64. Each quantity draws from
//! its own stream whose seed is `mix(mix(mix(mix(seed, tag), a), b), c)` with
//! `mix(h, v) = splitmix64(h ^ splitmix64(v))`, so records do not depend on generation
//! order. Normals use the cosine branch of Box-Muller on 53-bit uniforms.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{Direction, EvalSplit, Modality, TrackletRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub num_ids: usize,
    pub cams_per_id: usize,
    pub frames_per_tracklet: usize,
    pub dim: usize,
    /// Per-dimension standard deviation of identity centers.
    pub identity_spread: f64,
    pub modality_offset_scale: f64,
    pub camera_offset_scale: f64,
    pub frame_noise: f64,
    /// Rank of the subspace holding identity centers.
    pub latent_rank: usize,
    pub direction: Direction,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_ids: 50,
            cams_per_id: 2,
            frames_per_tracklet: 10,
            dim: 64,
            identity_spread: 1.0,
            modality_offset_scale: 0.5,
            camera_offset_scale: 0.3,
            frame_noise: 0.1,
            latent_rank: 4,
            direction: Direction::VisibleToInfrared,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_ids == 0 || self.cams_per_id == 0 || self.frames_per_tracklet == 0 {
            return bad("num_ids, cams_per_id and frames_per_tracklet must be positive".into());
        }
        if self.dim < 2 {
            return bad(format!("dim={} must be at least 2", self.dim));
        }
        if !(self.identity_spread.is_finite() && self.identity_spread > 0.0) {
            return bad(format!(
                "identity_spread={} must be positive",
                self.identity_spread
            ));
        }
        for (name, v) in [
            ("modality_offset_scale", self.modality_offset_scale),
            ("camera_offset_scale", self.camera_offset_scale),
            ("frame_noise", self.frame_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name}={v} must be finite and non-negative"));
            }
        }
        if self.latent_rank == 0 || self.latent_rank > self.dim {
            return bad(format!(
                "latent_rank={} must lie in [1, dim={}]",
                self.latent_rank, self.dim
            ));
        }
        Ok(())
    }
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn mix(h: u64, v: u64) -> u64 {
    splitmix64(h ^ splitmix64(v))
}

const TAG_BASIS: u64 = 1;
const TAG_CENTER: u64 = 2;
const TAG_MODALITY: u64 = 3;
const TAG_CAMERA: u64 = 4;
const TAG_FRAMES: u64 = 5;

struct Stream(Xoshiro256PlusPlus);

impl Stream {
    fn new(seed: u64, parts: [u64; 4]) -> Self {
        let s = parts.iter().fold(seed, |h, &p| mix(h, p));
        Stream(Xoshiro256PlusPlus::seed_from_u64(s))
    }

    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    fn normals(&mut self, n: usize, scale: f64) -> Vec<f64> {
        (0..n).map(|_| scale * self.normal()).collect()
    }
}

fn modality_code(m: Modality) -> u64 {
    match m {
        Modality::Rgb => 0,
        Modality::Ir => 1,
    }
}

pub fn tracklet_name(person: usize, camera: usize, modality: Modality) -> String {
    format!("p{person:04}_c{camera}_{modality}")
}

/// Generates a split; queries take the direction's query modality.
pub fn generate(config: &SynthConfig) -> Result<EvalSplit> {
    config.validate()?;
    let dim = config.dim;
    let rank = config.latent_rank;
    let seed = config.seed;

    // rank x dim basis with N(0, 1/rank) entries: centers get per-dim variance spread^2
    let basis = Stream::new(seed, [TAG_BASIS, 0, 0, 0]).normals(rank * dim, (1.0 / rank as f64).sqrt());

    let tracklets: Vec<(Modality, TrackletRecord)> = (0..config.num_ids)
        .into_par_iter()
        .flat_map_iter(|person| {
            let p = person as u64;
            let latent = Stream::new(seed, [TAG_CENTER, p, 0, 0]).normals(rank, config.identity_spread);
            let mut center = vec![0.0f64; dim];
            for (r, &z) in latent.iter().enumerate() {
                for (c, &b) in center.iter_mut().zip(&basis[r * dim..(r + 1) * dim]) {
                    *c += z * b;
                }
            }
            let modality_offset = |m: Modality| {
                Stream::new(seed, [TAG_MODALITY, p, modality_code(m), 0])
                    .normals(dim, config.modality_offset_scale)
            };
            let offsets = [modality_offset(Modality::Rgb), modality_offset(Modality::Ir)];
            (0..config.cams_per_id)
                .flat_map(move |cam| [(cam, Modality::Rgb), (cam, Modality::Ir)])
                .map(move |(cam, m)| {
                    let cam_offset = Stream::new(seed, [TAG_CAMERA, p, cam as u64, 0])
                        .normals(dim, config.camera_offset_scale);
                    let mut noise = Stream::new(seed, [TAG_FRAMES, p, cam as u64, modality_code(m)]);
                    let mean: Vec<f64> = center
                        .iter()
                        .zip(&offsets[modality_code(m) as usize])
                        .zip(&cam_offset)
                        .map(|((c, o), k)| c + o + k)
                        .collect();
                    let frames: Vec<f32> = (0..config.frames_per_tracklet)
                        .flat_map(|_| {
                            mean.iter()
                                .map(|&v| (v + config.frame_noise * noise.normal()) as f32)
                                .collect::<Vec<_>>()
                        })
                        .collect();
                    let record = TrackletRecord::new(
                        tracklet_name(person, cam, m),
                        person as i64,
                        cam as u32,
                        m,
                        dim,
                        frames,
                    )
                    .expect("generated frames are finite and well-shaped");
                    (m, record)
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let query_modality = config.direction.query_modality();
    let (queries, gallery): (Vec<_>, Vec<_>) = tracklets.into_iter().partition(|(m, _)| *m == query_modality);
    EvalSplit::new(
        queries.into_iter().map(|(_, r)| r).collect(),
        gallery.into_iter().map(|(_, r)| r).collect(),
        config.direction,
    )
}
