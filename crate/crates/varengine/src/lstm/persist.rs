//! Binary model files. Little-endian layout with a magic header and a
//! version number; every tensor is written as its shape followed by
//! row-major doubles, so round-trips are bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::network::{BatchNorm, DenseLayer, GateParams, LstmArch, LstmLayer, LstmParams, ModelMeta};
use super::FeatureScaler;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"VARLSTM\0";
const VERSION: u32 = 1;

struct Writer<W: Write> {
    out: W,
}

impl<W: Write> Writer<W> {
    fn u32(&mut self, v: u32) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn u64(&mut self, v: u64) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn f64(&mut self, v: f64) -> Result<()> {
        self.out.write_all(&v.to_le_bytes())?;
        Ok(())
    }

    fn vec1(&mut self, v: &Array1<f64>) -> Result<()> {
        self.u64(v.len() as u64)?;
        for x in v {
            self.f64(*x)?;
        }
        Ok(())
    }

    fn mat(&mut self, m: &Array2<f64>) -> Result<()> {
        self.u64(m.nrows() as u64)?;
        self.u64(m.ncols() as u64)?;
        for x in m.iter() {
            self.f64(*x)?;
        }
        Ok(())
    }
}

struct Reader<R: Read> {
    inp: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inp.read_exact(&mut buf).map_err(|e| {
            Error::Persistence(format!("model file truncated or unreadable: {e}"))
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }

    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .map_err(|_| Error::Persistence(format!("length {v} does not fit in memory")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }

    fn vec1(&mut self) -> Result<Array1<f64>> {
        let n = self.usize()?;
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(self.f64()?);
        }
        Ok(Array1::from_vec(v))
    }

    fn mat(&mut self) -> Result<Array2<f64>> {
        let rows = self.usize()?;
        let cols = self.usize()?;
        let mut v = Vec::with_capacity(rows.saturating_mul(cols));
        for _ in 0..rows * cols {
            v.push(self.f64()?);
        }
        Array2::from_shape_vec((rows, cols), v)
            .map_err(|e| Error::Persistence(format!("bad tensor shape: {e}")))
    }
}

/// Writes a model to disk; see the module docs for the layout.
pub fn save_model(path: &Path, params: &LstmParams) -> Result<()> {
    let file = File::create(path)?;
    let mut w = Writer { out: BufWriter::new(file) };
    w.out.write_all(MAGIC)?;
    w.u32(VERSION)?;

    w.u64(params.arch.input_dim as u64)?;
    w.u64(params.arch.hidden_dims.len() as u64)?;
    for d in &params.arch.hidden_dims {
        w.u64(*d as u64)?;
    }
    w.u64(params.arch.dense_dims.len() as u64)?;
    for d in &params.arch.dense_dims {
        w.u64(*d as u64)?;
    }

    for layer in &params.layers {
        for g in &layer.gates {
            w.mat(&g.w)?;
            w.vec1(&g.b)?;
        }
    }
    for d in &params.dense {
        w.mat(&d.w)?;
        w.vec1(&d.b)?;
    }
    w.vec1(&params.bn.gamma)?;
    w.vec1(&params.bn.beta)?;
    w.vec1(&params.bn.running_mean)?;
    w.vec1(&params.bn.running_var)?;

    match &params.scaler {
        Some(s) => {
            w.u32(1)?;
            w.u64(s.mins.len() as u64)?;
            for v in &s.mins {
                w.f64(*v)?;
            }
            for v in &s.maxs {
                w.f64(*v)?;
            }
        }
        None => w.u32(0)?,
    }
    match &params.meta {
        Some(m) => {
            w.u32(1)?;
            w.f64(m.alpha)?;
            w.u64(m.window_len as u64)?;
            w.u64(m.seed)?;
            w.u64(m.selected_run as u64)?;
            w.f64(m.train_score)?;
            w.f64(m.val_score)?;
        }
        None => w.u32(0)?,
    }
    w.out.flush()?;
    Ok(())
}

/// Reads a model written by [`save_model`], validating the header and
/// every tensor shape against the declared architecture.
pub fn load_model(path: &Path) -> Result<LstmParams> {
    let file = File::open(path)?;
    let mut r = Reader { inp: BufReader::new(file) };
    let magic: [u8; 8] = r.bytes()?;
    if &magic != MAGIC {
        return Err(Error::Persistence("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Persistence(format!(
            "unsupported model file version {version}, expected {VERSION}"
        )));
    }

    let input_dim = r.usize()?;
    let n_hidden = r.usize()?;
    let hidden_dims: Vec<usize> = (0..n_hidden).map(|_| r.usize()).collect::<Result<_>>()?;
    let n_dense = r.usize()?;
    let dense_dims: Vec<usize> = (0..n_dense).map(|_| r.usize()).collect::<Result<_>>()?;
    let arch = LstmArch { input_dim, hidden_dims, dense_dims };
    arch.validate().map_err(|e| Error::Persistence(format!("invalid architecture: {e}")))?;

    let mut layers = Vec::with_capacity(arch.hidden_dims.len());
    let mut d_prev = arch.input_dim;
    for &dh in &arch.hidden_dims {
        let mut gates = Vec::with_capacity(4);
        for _ in 0..4 {
            let w = r.mat()?;
            let b = r.vec1()?;
            if w.dim() != (dh + d_prev, dh) || b.len() != dh {
                return Err(Error::Persistence("gate tensor shape mismatch".into()));
            }
            gates.push(GateParams { w, b });
        }
        layers.push(LstmLayer { gates: gates.try_into().expect("exactly four gates") });
        d_prev = dh;
    }
    let mut dense = Vec::with_capacity(arch.dense_dims.len());
    for &dout in &arch.dense_dims {
        let w = r.mat()?;
        let b = r.vec1()?;
        if w.dim() != (d_prev, dout) || b.len() != dout {
            return Err(Error::Persistence("dense tensor shape mismatch".into()));
        }
        dense.push(DenseLayer { w, b });
        d_prev = dout;
    }
    let bn_dim = arch.bn_dim();
    let bn = BatchNorm {
        gamma: r.vec1()?,
        beta: r.vec1()?,
        running_mean: r.vec1()?,
        running_var: r.vec1()?,
    };
    if bn.gamma.len() != bn_dim
        || bn.beta.len() != bn_dim
        || bn.running_mean.len() != bn_dim
        || bn.running_var.len() != bn_dim
    {
        return Err(Error::Persistence("batch-norm tensor shape mismatch".into()));
    }

    let scaler = match r.u32()? {
        0 => None,
        1 => {
            let d = r.usize()?;
            let mins: Vec<f64> = (0..d).map(|_| r.f64()).collect::<Result<_>>()?;
            let maxs: Vec<f64> = (0..d).map(|_| r.f64()).collect::<Result<_>>()?;
            Some(FeatureScaler { mins, maxs })
        }
        v => return Err(Error::Persistence(format!("bad scaler flag {v}"))),
    };
    let meta = match r.u32()? {
        0 => None,
        1 => Some(ModelMeta {
            alpha: r.f64()?,
            window_len: r.usize()?,
            seed: r.u64()?,
            selected_run: r.usize()?,
            train_score: r.f64()?,
            val_score: r.f64()?,
        }),
        v => return Err(Error::Persistence(format!("bad metadata flag {v}"))),
    };

    let mut trailing = [0u8; 1];
    match r.inp.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(Error::Persistence("trailing bytes after model data".into())),
        Err(e) => return Err(Error::Persistence(format!("read error: {e}"))),
    }

    Ok(LstmParams { arch, layers, dense, bn, scaler, meta })
}
