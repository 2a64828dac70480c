//! Cloud file formats.
//!
//! ASCII: a header line `xyz <count> <frame>` (or `xyzn` when normals are
//! present) followed by one point per line, `x y z` (or `x y z nx ny nz`).
//! Numbers use the shortest round-trip decimal form.
//!
//! Binary (for large clouds), little-endian throughout:
//! - magic `PCBF` (4 bytes), version `u16` = 1
//! - frame tag `u8` (robot=0, gripper=1, camera=2, object=3, table=4)
//! - normals flag `u8` (0 or 1)
//! - point count `u64`
//! - `count * 3` point coordinates as `f64`
//! - `count * 3` normal components as `f64`, when the flag is set

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::geometry::Frame;
use crate::{Error, Result};

use super::PointCloud;

const BINARY_MAGIC: &[u8; 4] = b"PCBF";
const BINARY_VERSION: u16 = 1;

fn frame_to_byte(f: Frame) -> u8 {
    match f {
        Frame::Robot => 0,
        Frame::Gripper => 1,
        Frame::Camera => 2,
        Frame::Object => 3,
        Frame::Table => 4,
    }
}

fn frame_from_byte(b: u8) -> Result<Frame> {
    Ok(match b {
        0 => Frame::Robot,
        1 => Frame::Gripper,
        2 => Frame::Camera,
        3 => Frame::Object,
        4 => Frame::Table,
        other => return Err(Error::Parse(format!("unknown frame byte {other}"))),
    })
}

pub fn write_cloud(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    match cloud.normals() {
        None => {
            writeln!(w, "xyz {} {}", cloud.len(), cloud.frame())?;
            for p in cloud.points() {
                writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
            }
        }
        Some(normals) => {
            writeln!(w, "xyzn {} {}", cloud.len(), cloud.frame())?;
            for (p, n) in cloud.points().iter().zip(normals) {
                writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("missing cloud header".into()))??;
    let mut parts = header.split_whitespace();
    let kind = parts.next().unwrap_or_default();
    let count: usize = parts
        .next()
        .ok_or_else(|| Error::Parse("missing point count".into()))?
        .parse()
        .map_err(|_| Error::Parse("bad point count".into()))?;
    let frame: Frame = parts
        .next()
        .ok_or_else(|| Error::Parse("missing frame tag".into()))?
        .parse()?;

    let with_normals = match kind {
        "xyz" => false,
        "xyzn" => true,
        other => return Err(Error::Parse(format!("unknown cloud header `{other}`"))),
    };

    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(if with_normals { count } else { 0 });
    for line in lines.take(count) {
        let line = line?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| Error::Parse(format!("bad number `{s}`"))))
            .collect::<Result<_>>()?;
        let want = if with_normals { 6 } else { 3 };
        if vals.len() != want {
            return Err(Error::Parse(format!(
                "expected {want} values per line, found {}",
                vals.len()
            )));
        }
        points.push(Vector3::new(vals[0], vals[1], vals[2]));
        if with_normals {
            normals.push(Vector3::new(vals[3], vals[4], vals[5]));
        }
    }
    if points.len() != count {
        return Err(Error::Parse(format!(
            "declared {count} points, found {}",
            points.len()
        )));
    }
    if with_normals {
        PointCloud::with_normals(points, normals, frame)
    } else {
        PointCloud::new(points, frame)
    }
}

pub fn write_cloud_binary(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&[frame_to_byte(cloud.frame()), cloud.normals().is_some() as u8])?;
    w.write_all(&(cloud.len() as u64).to_le_bytes())?;
    for p in cloud.points() {
        for v in p.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    if let Some(normals) = cloud.normals() {
        for n in normals {
            for v in n.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_cloud_binary(path: &Path) -> Result<PointCloud> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Parse("bad cloud magic".into()));
    }
    let mut two = [0u8; 2];
    r.read_exact(&mut two)?;
    if u16::from_le_bytes(two) != BINARY_VERSION {
        return Err(Error::Parse("unsupported cloud format version".into()));
    }
    r.read_exact(&mut two)?;
    let frame = frame_from_byte(two[0])?;
    let with_normals = match two[1] {
        0 => false,
        1 => true,
        other => return Err(Error::Parse(format!("bad normals flag {other}"))),
    };
    let mut eight = [0u8; 8];
    r.read_exact(&mut eight)?;
    let count = u64::from_le_bytes(eight) as usize;

    let mut read_vecs = |n: usize| -> Result<Vec<Vector3<f64>>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut xyz = [0.0f64; 3];
            for v in &mut xyz {
                r.read_exact(&mut eight)?;
                *v = f64::from_le_bytes(eight);
            }
            out.push(Vector3::new(xyz[0], xyz[1], xyz[2]));
        }
        Ok(out)
    };
    let points = read_vecs(count)?;
    if with_normals {
        let normals = read_vecs(count)?;
        PointCloud::with_normals(points, normals, frame)
    } else {
        PointCloud::new(points, frame)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_cloud() -> impl Strategy<Value = PointCloud> {
        (
            proptest::collection::vec((-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64), 0..40),
            0..2u8,
            any::<bool>(),
        )
            .prop_map(|(coords, frame_pick, with_normals)| {
                let frame = if frame_pick == 0 { Frame::Camera } else { Frame::Object };
                let points: Vec<Vector3<f64>> =
                    coords.iter().map(|&(x, y, z)| Vector3::new(x, y, z)).collect();
                if with_normals {
                    let normals = points.iter().map(|_| Vector3::z()).collect();
                    PointCloud::with_normals(points, normals, frame).unwrap()
                } else {
                    PointCloud::new(points, frame).unwrap()
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn ascii_and_binary_round_trip(cloud in arb_cloud()) {
            let dir = tempfile::tempdir().unwrap();
            let ascii = dir.path().join("c.txt");
            write_cloud(&ascii, &cloud).unwrap();
            let back = read_cloud(&ascii).unwrap();
            prop_assert_eq!(&back, &cloud);

            let bin = dir.path().join("c.bin");
            write_cloud_binary(&bin, &cloud).unwrap();
            let back = read_cloud_binary(&bin).unwrap();
            prop_assert_eq!(&back, &cloud);
        }
    }

    #[test]
    fn rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        std::fs::write(&path, "nope 3 camera\n1 2 3\n").unwrap();
        assert!(read_cloud(&path).is_err());
        std::fs::write(&path, "xyz 2 camera\n1 2 3\n").unwrap();
        assert!(read_cloud(&path).is_err());
        let bin = dir.path().join("bad.bin");
        std::fs::write(&bin, b"XXXX").unwrap();
        assert!(read_cloud_binary(&bin).is_err());
    }
}
