//! Binary checkpoints.
//!
//! Layout: the 8-byte magic `KANCKPT1`, then one record per layer until EOF.
//! A record is a type byte, four little-endian `u32` (d_in, d_out, grid,
//! order; zero when unused) and the layer's parameter arrays as little-endian
//! `f64` in [`Layer::parameters`] order. Phase grids are rebuilt from the
//! dimensions on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Activation, BSplineKanLayer, DenseLayer, FourierKanLayer, Layer, ModelKind, ModelStack, SineKanLayer};
use crate::error::{KanError, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"KANCKPT1";

const SINE: u8 = 1;
const FOURIER: u8 = 2;
const BSPLINE: u8 = 3;
const DENSE_LINEAR: u8 = 4;
const DENSE_RELU: u8 = 5;

fn dim(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| KanError::Checkpoint(format!("dimension {v} does not fit in u32")))
}

pub fn write_model<W: Write>(model: &ModelStack, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    for layer in model.layers() {
        let (tag, grid, order) = match layer {
            Layer::Sine(l) => (SINE, l.grid(), 0),
            Layer::Fourier(l) => (FOURIER, l.grid(), 0),
            Layer::BSpline(l) => (BSPLINE, l.grid(), l.order()),
            Layer::Dense(l) => match l.activation() {
                Activation::None => (DENSE_LINEAR, 0, 0),
                Activation::Relu => (DENSE_RELU, 0, 0),
            },
        };
        w.write_all(&[tag])?;
        for d in [layer.d_in(), layer.d_out(), grid, order] {
            w.write_all(&dim(d)?.to_le_bytes())?;
        }
        for p in layer.parameters() {
            for v in p.value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save(model: &ModelStack, path: &Path) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

fn read_array(bytes: &[u8], pos: &mut usize, shape: &[usize]) -> Result<Tensor> {
    let n: usize = shape.iter().product();
    let end = n
        .checked_mul(8)
        .and_then(|b| pos.checked_add(b))
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| KanError::Checkpoint(format!("truncated array of shape {shape:?} at byte {pos}")))?;
    let data: Vec<f64> = bytes[*pos..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    *pos = end;
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(KanError::Checkpoint(format!("non-finite value at element {i} of {shape:?}")));
    }
    Tensor::new(shape.to_vec(), data).map_err(|e| KanError::Checkpoint(e.to_string()))
}

pub fn read_model<R: Read>(mut r: R) -> Result<ModelStack> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(KanError::Checkpoint("bad magic".into()));
    }
    let mut pos = MAGIC.len();
    let mut layers = Vec::new();
    while pos < bytes.len() {
        if pos + 17 > bytes.len() {
            return Err(KanError::Checkpoint(format!("truncated layer header at byte {pos}")));
        }
        let tag = bytes[pos];
        let mut dims = [0usize; 4];
        for (i, d) in dims.iter_mut().enumerate() {
            let o = pos + 1 + 4 * i;
            *d = u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        }
        pos += 17;
        let [d_in, d_out, grid, order] = dims;
        if d_in == 0 || d_out == 0 {
            return Err(KanError::Checkpoint(format!("zero width in layer {}", layers.len())));
        }
        let fix = |e: KanError| KanError::Checkpoint(e.to_string());
        let layer = match tag {
            SINE | FOURIER if grid == 0 => return Err(KanError::Checkpoint("zero grid size".into())),
            SINE => {
                let a = read_array(&bytes, &mut pos, &[d_out, d_in, grid])?;
                let w = read_array(&bytes, &mut pos, &[grid])?;
                let b = read_array(&bytes, &mut pos, &[d_out])?;
                Layer::Sine(SineKanLayer::from_parts(layers.is_empty(), a, w, b).map_err(fix)?)
            }
            FOURIER => {
                let a = read_array(&bytes, &mut pos, &[d_out, d_in, grid])?;
                let c = read_array(&bytes, &mut pos, &[d_out, d_in, grid])?;
                let b = read_array(&bytes, &mut pos, &[d_out])?;
                Layer::Fourier(FourierKanLayer::from_parts(a, c, b).map_err(fix)?)
            }
            BSPLINE => {
                if grid == 0 || order == 0 {
                    return Err(KanError::Checkpoint("zero grid size or spline order".into()));
                }
                let base = read_array(&bytes, &mut pos, &[d_out, d_in])?;
                let spl = read_array(&bytes, &mut pos, &[d_out, d_in * (grid + order)])?;
                let b = read_array(&bytes, &mut pos, &[d_out])?;
                Layer::BSpline(BSplineKanLayer::from_parts(grid, order, base, spl, b).map_err(fix)?)
            }
            DENSE_LINEAR | DENSE_RELU => {
                let act = if tag == DENSE_RELU { Activation::Relu } else { Activation::None };
                let w = read_array(&bytes, &mut pos, &[d_out, d_in])?;
                let b = read_array(&bytes, &mut pos, &[d_out])?;
                Layer::Dense(DenseLayer::from_parts(act, w, b).map_err(fix)?)
            }
            t => return Err(KanError::Checkpoint(format!("unknown layer type {t}"))),
        };
        layers.push(layer);
    }
    let kind = match layers.first() {
        Some(Layer::Sine(_)) => ModelKind::SineKan,
        Some(Layer::Fourier(_)) => ModelKind::FourierKan,
        Some(Layer::BSpline(_)) => ModelKind::BSplineKan,
        Some(Layer::Dense(_)) => ModelKind::Mlp,
        None => return Err(KanError::Checkpoint("no layers".into())),
    };
    let uniform = layers.iter().all(|l| {
        matches!(
            (kind, l),
            (ModelKind::SineKan, Layer::Sine(_))
                | (ModelKind::FourierKan, Layer::Fourier(_))
                | (ModelKind::BSplineKan, Layer::BSpline(_))
                | (ModelKind::Mlp, Layer::Dense(_))
        )
    });
    if !uniform {
        return Err(KanError::Checkpoint("mixed layer types".into()));
    }
    ModelStack::from_layers(kind, layers).map_err(|e| KanError::Checkpoint(e.to_string()))
}

pub fn load(path: &Path) -> Result<ModelStack> {
    read_model(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_kinds() {
        for kind in ModelKind::ALL {
            let m = ModelStack::build(kind, &[5, 4, 3], 4, 2, 9).unwrap();
            let mut buf = Vec::new();
            write_model(&m, &mut buf).unwrap();
            let back = read_model(buf.as_slice()).unwrap();
            assert_eq!(back, m, "{kind}");
        }
    }

    #[test]
    fn corrupt_inputs_rejected() {
        assert!(matches!(read_model(&b"NOTMAGIC"[..]), Err(KanError::Checkpoint(_))));
        assert!(read_model(&MAGIC[..]).is_err());
        let m = ModelStack::build(ModelKind::Mlp, &[3, 2], 0, 0, 1).unwrap();
        let mut buf = Vec::new();
        write_model(&m, &mut buf).unwrap();
        assert!(read_model(&buf[..buf.len() - 3]).is_err());
        buf[8] = 42;
        assert!(read_model(buf.as_slice()).is_err());
    }
}
