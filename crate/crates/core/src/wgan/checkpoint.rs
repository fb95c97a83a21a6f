//! Binary checkpoint of a trained generator/discriminator pair.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "WAGANCKP"
//! version      u32      currently 1
//! d            u32      data dimension
//! latent_dim   u32
//! basis_dim    u32      d - 1
//! seed         u64
//! k1           u64      radial threshold parameter used in training
//! n_train      u64
//! hidden_slope f64      leaky-ReLU slope of hidden layers
//! output_slope f64      slope of the final layer (1 = linear)
//! generator    u32 layer count L, then L + 1 u32 widths
//! critic       u32 layer count L, then L + 1 u32 widths
//! config       u32 byte length, then UTF-8 `key = value` lines
//! weights      for the generator then the critic, per layer:
//!              W (in x out, row-major f64), then b (out f64)
//! ```

use std::io::{Read, Write};

use super::{Mlp, MlpSpec, HIDDEN_SLOPE, OUTPUT_SLOPE};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 8] = b"WAGANCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub d: usize,
    pub latent_dim: usize,
    pub seed: u64,
    pub k1: usize,
    pub n_train: usize,
    /// Training configuration echo, `key = value` per line.
    pub config: String,
    pub generator: Mlp,
    pub discriminator: Mlp,
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| Error::Checkpoint(format!("value {v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_widths(w: &mut impl Write, spec: &MlpSpec) -> Result<()> {
    let widths = spec.widths();
    put_u32(w, widths.len() - 1)?;
    for x in widths {
        put_u32(w, x)?;
    }
    Ok(())
}

fn put_params(w: &mut impl Write, mlp: &Mlp) -> Result<()> {
    for p in mlp.params() {
        for x in p.as_slice() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| match e.kind() {
                std::io::ErrorKind::UnexpectedEof => {
                    Error::Checkpoint("truncated checkpoint".into())
                }
                _ => Error::Io(e),
            })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn widths(&mut self) -> Result<Vec<usize>> {
        let layers = self.u32()?;
        if layers == 0 || layers > 1024 {
            return Err(Error::Checkpoint(format!(
                "implausible layer count {layers}"
            )));
        }
        (0..=layers).map(|_| self.u32()).collect()
    }

    fn mlp(&mut self, widths: &[usize]) -> Result<Mlp> {
        let spec = MlpSpec::new(
            widths[0],
            widths[1..widths.len() - 1].to_vec(),
            widths[widths.len() - 1],
        )?;
        let mut params = Vec::new();
        for w in widths.windows(2) {
            for (r, c) in [(w[0], w[1]), (1, w[1])] {
                let data = (0..r * c).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
                params.push(Matrix::from_vec(r, c, data)?);
            }
        }
        Mlp::from_params(spec, params)
    }
}

impl Checkpoint {
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        put_u32(w, self.d)?;
        put_u32(w, self.latent_dim)?;
        put_u32(w, self.d - 1)?;
        w.write_all(&self.seed.to_le_bytes())?;
        w.write_all(&(self.k1 as u64).to_le_bytes())?;
        w.write_all(&(self.n_train as u64).to_le_bytes())?;
        w.write_all(&HIDDEN_SLOPE.to_le_bytes())?;
        w.write_all(&OUTPUT_SLOPE.to_le_bytes())?;
        put_widths(w, self.generator.spec())?;
        put_widths(w, self.discriminator.spec())?;
        put_u32(w, self.config.len())?;
        w.write_all(self.config.as_bytes())?;
        put_params(w, &self.generator)?;
        put_params(w, &self.discriminator)?;
        Ok(())
    }

    pub fn read(r: impl Read) -> Result<Self> {
        let mut r = Reader { inner: r };
        if &r.bytes::<8>()? != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = r.u32()? as u32;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}"
            )));
        }
        let d = r.u32()?;
        let latent_dim = r.u32()?;
        let basis_dim = r.u32()?;
        if d < 2 || basis_dim != d - 1 {
            return Err(Error::Checkpoint(format!(
                "inconsistent dimensions d={d}, basis={basis_dim}"
            )));
        }
        let seed = r.u64()?;
        let k1 = r.u64()? as usize;
        let n_train = r.u64()? as usize;
        let (hidden, output) = (r.f64()?, r.f64()?);
        if hidden != HIDDEN_SLOPE || output != OUTPUT_SLOPE {
            return Err(Error::Checkpoint(format!(
                "unsupported activation slopes {hidden}/{output}"
            )));
        }
        let gw = r.widths()?;
        let dw = r.widths()?;
        if gw[0] != latent_dim
            || gw[gw.len() - 1] != d - 1
            || dw[0] != d - 1
            || dw[dw.len() - 1] != 1
        {
            return Err(Error::Checkpoint(
                "network shapes do not match the header".into(),
            ));
        }
        let len = r.u32()?;
        let mut config = vec![0u8; len];
        r.inner.read_exact(&mut config)?;
        let config = String::from_utf8(config)
            .map_err(|_| Error::Checkpoint("config echo is not UTF-8".into()))?;
        let generator = r.mlp(&gw)?;
        let discriminator = r.mlp(&dw)?;
        let mut rest = Vec::new();
        r.inner.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Checkpoint(format!("{} trailing bytes", rest.len())));
        }
        Ok(Checkpoint {
            d,
            latent_dim,
            seed,
            k1,
            n_train,
            config,
            generator,
            discriminator,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wgan::init_networks;

    fn sample() -> Checkpoint {
        let net = init_networks(
            MlpSpec::new(2, vec![8, 8], 3).unwrap(),
            MlpSpec::new(3, vec![6], 1).unwrap(),
            17,
        );
        Checkpoint {
            d: 4,
            latent_dim: 2,
            seed: 17,
            k1: 30,
            n_train: 900,
            config: "lambda_gp = 5\nrho = 1\n".into(),
            generator: net.generator,
            discriminator: net.discriminator,
        }
    }

    #[test]
    fn round_trip() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write(&mut buf).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(Checkpoint::read(buf.as_slice()).unwrap(), ck);
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let mut buf = Vec::new();
        sample().write(&mut buf).unwrap();
        assert!(Checkpoint::read(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(Checkpoint::read(extra.as_slice()).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read(bad.as_slice()).is_err());
        let mut wrong_version = buf;
        wrong_version[8] = 9;
        assert!(Checkpoint::read(wrong_version.as_slice()).is_err());
    }
}
