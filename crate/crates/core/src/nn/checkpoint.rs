//! Binary model checkpoints.
//!
//! Layout, little-endian throughout:
//! - magic `GKCKPT01` (8 bytes)
//! - kind `u8`: 0 = plain network, 1 = hypernetwork
//! - network topology: `u32` size count, then that many `u32` layer sizes
//! - hypernetworks only: the target template topology in the same encoding
//! - `u64` parameter count, then the parameters as `f64`
//! - trailing `u64` FNV-1a checksum of all preceding bytes

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::{Error, Result};

use super::{HyperNet, Mlp, MlpTopology};

const MAGIC: &[u8; 8] = b"GKCKPT01";
const KIND_MLP: u8 = 0;
const KIND_HYPER: u8 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn push_topology(buf: &mut Vec<u8>, topology: &MlpTopology) {
    let sizes = topology.layer_sizes();
    buf.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for &s in sizes {
        buf.extend_from_slice(&(s as u32).to_le_bytes());
    }
}

fn push_params(buf: &mut Vec<u8>, params: &[f64]) {
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for &p in params {
        buf.extend_from_slice(&p.to_le_bytes());
    }
}

fn write_checkpoint(path: &Path, body: Vec<u8>) -> Result<()> {
    let checksum = fnv1a(&body);
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&body)?;
    w.write_all(&checksum.to_le_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn save_mlp(path: &Path, net: &Mlp) -> Result<()> {
    let mut body = Vec::new();
    body.extend_from_slice(MAGIC);
    body.push(KIND_MLP);
    push_topology(&mut body, net.topology());
    push_params(&mut body, net.params());
    write_checkpoint(path, body)
}

pub fn save_hypernet(path: &Path, net: &HyperNet) -> Result<()> {
    let mut body = Vec::new();
    body.extend_from_slice(MAGIC);
    body.push(KIND_HYPER);
    push_topology(&mut body, net.mlp().topology());
    push_topology(&mut body, net.template());
    push_params(&mut body, net.mlp().params());
    write_checkpoint(path, body)
}

struct Reader {
    bytes: Vec<u8>,
    pos: usize,
}

impl Reader {
    fn open(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < MAGIC.len() + 8 {
            return Err(Error::Checkpoint("file too short".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8-byte tail"));
        if fnv1a(body) != stored {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        bytes.truncate(bytes.len() - 8);
        Ok(Self { bytes, pos: 0 })
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn topology(&mut self) -> Result<MlpTopology> {
        let n = self.u32()? as usize;
        if n > 64 {
            return Err(Error::Checkpoint("implausible topology size".into()));
        }
        let mut sizes = Vec::with_capacity(n);
        for _ in 0..n {
            sizes.push(self.u32()? as usize);
        }
        MlpTopology::new(sizes).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    fn params(&mut self) -> Result<Vec<f64>> {
        let n = self.u64()? as usize;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let raw = self.take(8)?;
            out.push(f64::from_le_bytes(raw.try_into().expect("8 bytes")));
        }
        Ok(out)
    }

    fn header(&mut self) -> Result<u8> {
        let magic = self.take(MAGIC.len())?;
        if magic != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        Ok(self.take(1)?[0])
    }
}

pub fn load_mlp(path: &Path) -> Result<Mlp> {
    let mut r = Reader::open(path)?;
    if r.header()? != KIND_MLP {
        return Err(Error::Checkpoint("not a plain network checkpoint".into()));
    }
    let topology = r.topology()?;
    let params = r.params()?;
    Mlp::from_params(topology, params).map_err(|e| Error::Checkpoint(e.to_string()))
}

pub fn load_hypernet(path: &Path) -> Result<HyperNet> {
    let mut r = Reader::open(path)?;
    if r.header()? != KIND_HYPER {
        return Err(Error::Checkpoint("not a hypernetwork checkpoint".into()));
    }
    let topology = r.topology()?;
    let template = r.topology()?;
    let params = r.params()?;
    let mlp = Mlp::from_params(topology, params).map_err(|e| Error::Checkpoint(e.to_string()))?;
    HyperNet::new(mlp, template).map_err(|e| Error::Checkpoint(e.to_string()))
}
