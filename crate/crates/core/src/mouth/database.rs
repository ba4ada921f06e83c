use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{compute_lbp, dist_c, dist_l, dist_m, dist_p, dist_total, normalize_mouth, LbpHistogram, MouthChart};
use super::{MouthConfig, MouthDescriptor, LBP_BINS, LBP_CELLS};
use crate::container::{ContainerReader, ContainerWriter};
use crate::energy::SceneParams;
use crate::imaging::{Frame, Illumination};
use crate::model::FacePrior;
use crate::{Error, Mat3, Result};

pub const MOUTH_MAGIC: &[u8] = b"F2FMOUTH1";
/// Assignment/update rounds before clustering stops regardless.
pub const MAX_ROUNDS: usize = 50;

/// One usable frame of the target sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct MouthSample {
    pub frame: usize,
    pub texture: Frame,
    pub gamma: Illumination,
    pub descriptor: MouthDescriptor,
}

/// Normalizes the mouth of a tracked frame and builds its descriptor.
pub fn capture_sample(
    prior: &FacePrior,
    chart: &MouthChart,
    index: usize,
    frame: &Frame,
    params: &SceneParams,
) -> Result<MouthSample> {
    let texture = normalize_mouth(prior, chart, frame, params)?;
    let descriptor = MouthDescriptor::from_params(prior, params, compute_lbp(&texture))?;
    Ok(MouthSample {
        frame: index,
        texture,
        gamma: params.gamma,
        descriptor,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MouthDatabase {
    pub config: MouthConfig,
    pub samples: Vec<MouthSample>,
    /// Sample indices per cluster, ascending; the clusters partition the
    /// samples.
    pub clusters: Vec<Vec<usize>>,
    pub representatives: Vec<usize>,
    /// Symmetric appearance-graph weights with a zero diagonal.
    pub graph: DMatrix<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RetrievalState {
    /// τ: the sample used for the previous output frame.
    pub tau: Option<usize>,
    /// Blended texture of the previous output frame, before illumination
    /// correction.
    pub last_texture: Option<Frame>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Retrieval {
    /// Representative of the closest cluster.
    pub target: usize,
    /// Sample whose texture is used for this frame.
    pub inbetween: usize,
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    values
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, v)| if v < best.1 { (i, v) } else { best })
        .0
}

/// Greedy max-min seeding from sample 0, then alternating assignment and
/// medoid updates. Ties go to the lower index everywhere.
fn k_medoids(dist: &DMatrix<f64>, k: usize) -> (Vec<Vec<usize>>, Vec<usize>) {
    let n = dist.nrows();
    let mut medoids = vec![0];
    while medoids.len() < k {
        let far = (0..n)
            .filter(|i| !medoids.contains(i))
            .map(|i| (i, medoids.iter().map(|&m| dist[(i, m)]).fold(f64::INFINITY, f64::min)))
            .fold((usize::MAX, f64::NEG_INFINITY), |best, (i, d)| if d > best.1 { (i, d) } else { best });
        medoids.push(far.0);
    }
    let assign = |medoids: &[usize]| -> Vec<Vec<usize>> {
        let mut clusters = vec![Vec::new(); medoids.len()];
        for i in 0..n {
            let c = match medoids.iter().position(|&m| m == i) {
                Some(c) => c,
                None => argmin(medoids.iter().map(|&m| dist[(i, m)])),
            };
            clusters[c].push(i);
        }
        clusters
    };
    let mut clusters = assign(&medoids);
    for _ in 0..MAX_ROUNDS {
        let updated: Vec<usize> = clusters
            .iter()
            .map(|members| members[argmin(members.iter().map(|&a| members.iter().map(|&b| dist[(a, b)]).sum()))])
            .collect();
        if updated == medoids {
            break;
        }
        medoids = updated;
        clusters = assign(&medoids);
    }
    (clusters, medoids)
}

fn pairwise(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> DMatrix<f64> {
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i + 1..n).map(|j| f(i, j)).collect())
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in upper.iter().enumerate() {
        for (o, v) in row.iter().enumerate() {
            m[(i, i + 1 + o)] = *v;
            m[(i + 1 + o, i)] = *v;
        }
    }
    m
}

impl MouthDatabase {
    pub fn build(samples: Vec<MouthSample>, config: &MouthConfig) -> Result<Self> {
        config.validate()?;
        let n = samples.len();
        if n == 0 {
            return Err(Error::NotEnoughFrames { needed: 1, have: 0 });
        }
        let size = config.texture_size;
        if samples.iter().any(|s| s.texture.width != size || s.texture.height != size) {
            return Err(Error::InvalidConfig(format!("mouth textures must be {size}×{size}")));
        }
        let k = if n < config.clusters {
            log::warn!("only {n} usable mouth frames; lowering the cluster count from {}", config.clusters);
            n
        } else {
            config.clusters
        };
        let pairs = &config.landmark_pairs;
        let d = |i: usize, j: usize| (&samples[i].descriptor, &samples[j].descriptor);
        let offline = pairwise(n, |i, j| {
            let (a, b) = d(i, j);
            dist_total(a, b, pairs, None)
        });
        let graph = pairwise(n, |i, j| {
            let (a, b) = d(i, j);
            dist_c(&samples[i].texture, &samples[j].texture) + dist_p(a, b) + dist_m(a, b, pairs)
        });
        let (clusters, representatives) = k_medoids(&offline, k);
        Ok(Self {
            config: MouthConfig {
                clusters: k,
                ..config.clone()
            },
            samples,
            clusters,
            representatives,
            graph,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `D(K_T, K_t, t)` against sample `t`, with `D_c` against `tau` if set.
    pub fn distance(&self, query: &MouthDescriptor, t: usize, tau: Option<usize>) -> f64 {
        let dc = tau.map(|tau| dist_c(&self.samples[tau].texture, &self.samples[t].texture));
        dist_total(query, &self.samples[t].descriptor, &self.config.landmark_pairs, dc)
    }

    /// Offline distance used for clustering (no `D_c`).
    pub fn offline_distance(&self, a: usize, b: usize) -> f64 {
        let (ka, kb) = (&self.samples[a].descriptor, &self.samples[b].descriptor);
        dist_p(ka, kb) + dist_m(ka, kb, &self.config.landmark_pairs) + dist_l(ka, kb)
    }

    /// Picks the closest representative, then the sample minimizing the
    /// graph weights to it and to τ. Updates τ.
    pub fn retrieve(&self, query: &MouthDescriptor, state: &mut RetrievalState) -> Retrieval {
        let dists: Vec<f64> = self
            .representatives
            .par_iter()
            .map(|&r| self.distance(query, r, state.tau))
            .collect();
        let target = self.representatives[argmin(dists.into_iter())];
        let inbetween = match state.tau {
            None => target,
            Some(tau) => argmin((0..self.len()).map(|f| self.graph[(f, tau)] + self.graph[(f, target)])),
        };
        state.tau = Some(inbetween);
        Retrieval { target, inbetween }
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut c = ContainerWriter::new(w, MOUTH_MAGIC)?;
        let cfg = &self.config;
        c.usize(cfg.clusters)?;
        c.usize(cfg.texture_size)?;
        c.usize(cfg.landmark_pairs.len())?;
        for p in &cfg.landmark_pairs {
            c.usizes(p)?;
        }
        c.usize(self.len())?;
        c.usize(self.samples.first().map_or(0, |s| s.descriptor.delta.len()))?;
        for s in &self.samples {
            c.usize(s.frame)?;
            c.f64s(&s.gamma.0)?;
            c.f64s(&s.texture.rgb)?;
            let d = &s.descriptor;
            c.f64s(d.rotation.as_slice())?;
            c.f64s(d.delta.as_slice())?;
            for l in &d.landmarks {
                c.f64s(l)?;
            }
            for &v in &d.lbp.counts {
                c.u64(v as u64)?;
            }
        }
        for (members, rep) in self.clusters.iter().zip(&self.representatives) {
            c.usize(*rep)?;
            c.usize(members.len())?;
            c.usizes(members)?;
        }
        c.f64s(self.graph.as_slice())?;
        c.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut c = ContainerReader::new(r, MOUTH_MAGIC)?;
        let clusters_k = c.usize()?;
        let size = c.usize()?;
        let n_pairs = c.usize()?;
        let mut landmark_pairs = Vec::with_capacity(n_pairs.min(64));
        for _ in 0..n_pairs {
            let p = c.usizes(2)?;
            landmark_pairs.push([p[0], p[1]]);
        }
        let config = MouthConfig {
            clusters: clusters_k,
            texture_size: size,
            landmark_pairs,
        };
        config.validate().map_err(|e| Error::Format(e.to_string()))?;
        let n = c.usize()?;
        let d_exp = c.usize()?;
        let mut samples = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let frame = c.usize()?;
            let mut gamma = [0.0; 27];
            gamma.copy_from_slice(&c.f64s(27)?);
            let texture = Frame::from_rgb(size, size, c.f64s(3 * size * size)?);
            let rotation = Mat3::from_column_slice(&c.f64s(9)?);
            let delta = DVector::from_vec(c.f64s(d_exp)?);
            let mut landmarks = [[0.0; 2]; 4];
            for l in &mut landmarks {
                let v = c.f64s(2)?;
                *l = [v[0], v[1]];
            }
            let counts = (0..LBP_CELLS * LBP_CELLS * LBP_BINS)
                .map(|_| c.u64().map(|v| v as u32))
                .collect::<Result<Vec<u32>>>()?;
            samples.push(MouthSample {
                frame,
                texture,
                gamma: Illumination(gamma),
                descriptor: MouthDescriptor {
                    rotation,
                    delta,
                    landmarks,
                    lbp: LbpHistogram { counts },
                },
            });
        }
        let mut clusters = Vec::with_capacity(clusters_k);
        let mut representatives = Vec::with_capacity(clusters_k);
        for _ in 0..clusters_k {
            representatives.push(c.usize()?);
            let len = c.usize()?;
            clusters.push(c.usizes(len)?);
        }
        let graph = DMatrix::from_vec(n, n, c.f64s(n * n)?);
        c.finish()?;
        let mut seen = vec![false; n];
        for (members, rep) in clusters.iter().zip(&representatives) {
            if !members.contains(rep) {
                return Err(Error::Format("representative outside its cluster".into()));
            }
            for &m in members {
                if m >= n || std::mem::replace(&mut seen[m], true) {
                    return Err(Error::Format("clusters do not partition the frames".into()));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Format("clusters do not partition the frames".into()));
        }
        Ok(Self {
            config,
            samples,
            clusters,
            representatives,
            graph,
        })
    }
}
