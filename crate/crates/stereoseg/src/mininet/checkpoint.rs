//! Self-describing binary checkpoints.
//!
//! Layout (little-endian): magic "MSEG", version u8, then five u32s
//! (input channels, stage-1 filters, stage-2 filters, classes, total
//! parameter count), then every parameter as an f32 in the fixed layer
//! order (weights then bias per layer).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mininet::net::MiniNet;

const MAGIC: &[u8; 4] = b"MSEG";
const VERSION: u8 = 1;

pub fn save_checkpoint(net: &MiniNet, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    let dims = [
        net.in_channels() as u32,
        net.enc1.out_c as u32,
        net.enc2.out_c as u32,
        net.num_classes() as u32,
        net.param_count() as u32,
    ];
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for layer in net.layers() {
        for &w in layer.weights.iter().chain(layer.bias.iter()) {
            buf.extend_from_slice(&(w as f32).to_le_bytes());
        }
    }
    file.write_all(&buf).map_err(|e| Error::io_at(path, e))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MiniNet> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut header = [0u8; 25];
    file.read_exact(&mut header).map_err(|_| Error::format(path, "truncated header"))?;
    if &header[0..4] != MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    if header[4] != VERSION {
        return Err(Error::format(path, format!("unsupported version {}", header[4])));
    }
    let dim = |i: usize| u32::from_le_bytes(header[5 + 4 * i..9 + 4 * i].try_into().unwrap());
    let (in_c, f1, f2, classes, count) =
        (dim(0) as usize, dim(1) as usize, dim(2) as usize, dim(3) as usize, dim(4) as usize);
    let mut net = MiniNet::new(in_c, f1, f2, classes, 0);
    if net.param_count() != count {
        return Err(Error::format(
            path,
            format!("parameter count {count} does not match shape header"),
        ));
    }
    let mut payload = Vec::new();
    file.read_to_end(&mut payload).map_err(|e| Error::io_at(path, e))?;
    if payload.len() != count * 4 {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, expected {}", payload.len(), count * 4),
        ));
    }
    for i in 0..count {
        let v = f32::from_le_bytes(payload[4 * i..4 * i + 4].try_into().unwrap());
        net.set_param(i, v as f64);
    }
    Ok(net)
}
