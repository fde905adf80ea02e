use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::mlp::Mlp;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SDGT";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Split of the latent vector into an identity part shared by both images
/// of a pair and a per-image variation part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentSpec {
    pub d_id: usize,
    pub d_iv: usize,
}

impl LatentSpec {
    pub fn new(d_id: usize, d_iv: usize) -> Result<Self> {
        if d_id == 0 || d_iv == 0 {
            return Err(Error::Invalid(format!(
                "latent parts must be non-empty, got d_id={d_id} d_iv={d_iv}"
            )));
        }
        Ok(LatentSpec { d_id, d_iv })
    }

    pub fn total(&self) -> usize {
        self.d_id + self.d_iv
    }
}

/// Two standard-Gaussian latents sharing their first `d_id` coordinates.
pub fn sample_latent_pair<R: Rng>(spec: LatentSpec, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let z1: Vec<f64> = (0..spec.total())
        .map(|_| rng.sample(StandardNormal))
        .collect();
    let z2: Vec<f64> = z1[..spec.d_id]
        .iter()
        .copied()
        .chain((0..spec.d_iv).map(|_| rng.sample(StandardNormal)))
        .collect();
    (z1, z2)
}

/// A batch of latent pairs as two `(batch, d_id + d_iv)` matrices.
pub fn sample_latent_batch<R: Rng>(
    spec: LatentSpec,
    batch: usize,
    rng: &mut R,
) -> (Array2<f64>, Array2<f64>) {
    let mut z1 = Array2::zeros((batch, spec.total()));
    let mut z2 = Array2::zeros((batch, spec.total()));
    for b in 0..batch {
        let (a, c) = sample_latent_pair(spec, rng);
        z1.row_mut(b).iter_mut().zip(a).for_each(|(d, s)| *d = s);
        z2.row_mut(b).iter_mut().zip(c).for_each(|(d, s)| *d = s);
    }
    (z1, z2)
}

/// Generator plus a pair-consuming critic whose hidden layers are twice as
/// wide as the generator's.
#[derive(Debug, Clone, PartialEq)]
pub struct SdGanModel {
    pub generator: Mlp,
    pub critic: Mlp,
    pub latent: LatentSpec,
    pub clip: f64,
}

impl SdGanModel {
    pub fn new<R: Rng>(
        latent: LatentSpec,
        data_dim: usize,
        generator_hidden: &[usize],
        clip: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if data_dim == 0 || generator_hidden.contains(&0) {
            return Err(Error::Invalid("layer widths must be positive".into()));
        }
        if !(clip >= 0.0 && clip.is_finite()) {
            return Err(Error::Invalid(format!(
                "clip bound must be >= 0, got {clip}"
            )));
        }
        let mut gen_widths = vec![latent.total()];
        gen_widths.extend_from_slice(generator_hidden);
        gen_widths.push(data_dim);
        let mut critic_widths = vec![2 * data_dim];
        critic_widths.extend(generator_hidden.iter().map(|w| 2 * w));
        critic_widths.push(1);
        let generator = Mlp::new(&gen_widths, rng);
        let mut critic = Mlp::new(&critic_widths, rng);
        critic.clip(clip);
        Ok(SdGanModel {
            generator,
            critic,
            latent,
            clip,
        })
    }

    /// Assemble a model from existing networks, checking the pairing rules.
    pub fn from_parts(generator: Mlp, critic: Mlp, latent: LatentSpec, clip: f64) -> Result<Self> {
        let gw = generator.widths();
        let cw = critic.widths();
        let data_dim = generator.output_width();
        if gw[0] != latent.total() {
            return Err(Error::Invalid(format!(
                "generator input {} does not match latent size {}",
                gw[0],
                latent.total()
            )));
        }
        if cw[0] != 2 * data_dim || cw[cw.len() - 1] != 1 {
            return Err(Error::Invalid(format!(
                "critic must map {} inputs to 1 output, has widths {cw:?}",
                2 * data_dim
            )));
        }
        let gen_hidden = &gw[1..gw.len() - 1];
        let critic_hidden = &cw[1..cw.len() - 1];
        if gen_hidden.len() != critic_hidden.len()
            || gen_hidden
                .iter()
                .zip(critic_hidden)
                .any(|(g, c)| 2 * g != *c)
        {
            return Err(Error::Invalid(format!(
                "critic hidden widths {critic_hidden:?} must double generator widths {gen_hidden:?}"
            )));
        }
        Ok(SdGanModel {
            generator,
            critic,
            latent,
            clip,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.generator.output_width()
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.latent.d_id as u32).to_le_bytes())?;
        w.write_all(&(self.latent.d_iv as u32).to_le_bytes())?;
        w.write_all(&self.clip.to_le_bytes())?;
        for net in [&self.generator, &self.critic] {
            let widths = net.widths();
            w.write_all(&(widths.len() as u32).to_le_bytes())?;
            for width in widths {
                w.write_all(&(width as u32).to_le_bytes())?;
            }
        }
        for net in [&self.generator, &self.critic] {
            for v in net.params() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)
            .map_err(|e| Error::format("checkpoint", e.to_string()))?;
        let mut cur = Cursor { buf: &buf, pos: 0 };
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format("checkpoint", "bad magic, expected \"SDGT\""));
        }
        let version = u16::from_le_bytes(cur.take(2)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported version {version}"),
            ));
        }
        let latent = LatentSpec::new(cur.u32()? as usize, cur.u32()? as usize)?;
        let clip = cur.f64()?;
        let mut widths = Vec::new();
        for _ in 0..2 {
            let n = cur.u32()? as usize;
            if !(2..=64).contains(&n) {
                return Err(Error::format("checkpoint", format!("bad layer count {n}")));
            }
            let w: Vec<usize> = (0..n)
                .map(|_| cur.u32().map(|v| v as usize))
                .collect::<Result<_>>()?;
            if w.contains(&0) {
                return Err(Error::format("checkpoint", "zero layer width"));
            }
            widths.push(w);
        }
        let mut nets = Vec::new();
        for w in &widths {
            let mut net = Mlp::zeros(w);
            let values = (0..net.param_count())
                .map(|_| cur.f64())
                .collect::<Result<Vec<_>>>()?;
            net.set_params(&values);
            nets.push(net);
        }
        if cur.pos != buf.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        let critic = nets.pop().unwrap();
        let generator = nets.pop().unwrap();
        SdGanModel::from_parts(generator, critic, latent, clip)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_checkpoint(&mut bytes)
            .expect("writing to memory cannot fail");
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        SdGanModel::read_checkpoint(&bytes[..])
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(Error::format("checkpoint", "truncated file"));
        }
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
