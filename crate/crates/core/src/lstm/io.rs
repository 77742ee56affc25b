use std::io::{Read, Write};
use std::path::Path;

use super::{LossCurve, LstmParams};
use crate::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 5] = b"LSTM1";
pub const LOSS_CURVE_HEADER: [&str; 3] = ["epoch", "train_loss", "test_loss"];

impl LstmParams {
    /// Magic, then `hidden, input, output` as u64, then every block as f64, all little-endian.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(WEIGHTS_MAGIC)?;
        for d in [self.hidden_size, self.input_size, self.output_size] {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for b in self.blocks() {
            for v in b {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic)?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::Format("not an LSTM weights file".into()));
        }
        let mut dims = [0usize; 3];
        for d in &mut dims {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            *d = usize::try_from(u64::from_le_bytes(buf)).map_err(|_| Error::Format("dimension overflow".into()))?;
        }
        if dims.iter().any(|&d| d == 0 || d > 1 << 20) {
            return Err(Error::Format(format!("implausible dimensions {dims:?}")));
        }
        let mut p = LstmParams::zeros(dims[0], dims[1], dims[2]);
        for b in p.blocks_mut() {
            for v in b.iter_mut() {
                let mut buf = [0u8; 8];
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", rest.len())));
        }
        p.check()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

pub fn write_loss_curve<W: Write>(out: W, curve: &LossCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(LOSS_CURVE_HEADER)?;
    for (e, (tr, te)) in curve.train.iter().zip(&curve.test).enumerate() {
        w.write_record([(e + 1).to_string(), tr.to_string(), te.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_loss_curve<R: Read>(input: R) -> Result<LossCurve> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().collect::<Vec<_>>() != LOSS_CURVE_HEADER {
        return Err(Error::Format("unexpected loss-curve header".into()));
    }
    let mut curve = LossCurve::default();
    for rec in r.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::Format(format!("bad number `{}`", &rec[i])))
        };
        curve.train.push(parse(1)?);
        curve.test.push(parse(2)?);
    }
    Ok(curve)
}
