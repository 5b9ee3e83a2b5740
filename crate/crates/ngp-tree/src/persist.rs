//! Index persistence: a versioned little-endian file embedding the tree,
//! its configuration, and the indexed dataset, sealed with a SHA-256
//! digest.
//!
//! Layout: magic `NGPT`, format version, dimension, row count, the full
//! build configuration and statistics, the node table (directory entries
//! carry child ids and the split offset; childless entries carry their row
//! ids), the dataset (ids then values), and finally the digest of every
//! preceding byte. Serialization is deterministic: the same tree always
//! produces the same bytes.

use std::path::Path;
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::index::{
    BoundingRule, BuildStats, DirectionRule, IndexNode, MinptsRule, NodeKind, SelectionRule,
    SplitRule, Tree, TreeConfig,
};
use crate::linalg::{Direction, Reflection};
use crate::matrix::FeatureMatrix;
use crate::vecfile::atomic_write;
use crate::{Error, Mbr, Result};

const MAGIC: &[u8; 4] = b"NGPT";
const VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_slice_f64(buf: &mut Vec<u8>, vs: &[f64]) {
    for &v in vs {
        put_f64(buf, v);
    }
}

/// Serializes `tree` to its canonical byte representation.
pub fn tree_to_bytes(tree: &Tree) -> Vec<u8> {
    let data = tree.data();
    let d = data.dim();
    let cfg = tree.config();
    let mut buf = Vec::new();

    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, VERSION);
    put_u32(&mut buf, d as u32);
    put_u64(&mut buf, data.nrows() as u64);

    put_u64(&mut buf, cfg.k as u64);
    match cfg.minpts {
        MinptsRule::Percent(p) => {
            buf.push(0);
            put_f64(&mut buf, p);
        }
        MinptsRule::Absolute(a) => {
            buf.push(1);
            put_u64(&mut buf, a as u64);
        }
    }
    buf.push(match cfg.direction_rule {
        DirectionRule::NonGaussian => 0,
        DirectionRule::Pc1 => 1,
    });
    buf.push(match cfg.split_rule {
        SplitRule::TwoMeansMidpoint => 0,
        SplitRule::CentroidProjection => 1,
    });
    buf.push(match cfg.bounding_rule {
        BoundingRule::ReflectedFrame => 0,
        BoundingRule::OriginalFrame => 1,
    });
    buf.push(match cfg.selection_rule {
        SelectionRule::Selvalue => 0,
        SelectionRule::Scatter => 1,
    });
    put_f64(&mut buf, cfg.c);
    put_f64(&mut buf, cfg.fastica_tol);
    put_u64(&mut buf, cfg.fastica_max_iter as u64);
    put_f64(&mut buf, cfg.pca_tol);
    put_u64(&mut buf, cfg.pca_max_iter as u64);
    put_f64(&mut buf, cfg.whiten_eps);
    put_f64(&mut buf, cfg.epsilon);
    put_u64(&mut buf, cfg.seed);

    let stats = tree.stats();
    put_u64(&mut buf, stats.iterations as u64);
    put_u64(&mut buf, stats.leaf_count as u64);
    put_u64(&mut buf, stats.outlier_count as u64);

    put_u64(&mut buf, tree.nodes().len() as u64);
    for node in tree.nodes() {
        match &node.kind {
            NodeKind::Leaf { members } => {
                buf.push(0);
                put_u64(&mut buf, members.len() as u64);
                for &id in members {
                    put_u64(&mut buf, id);
                }
            }
            NodeKind::Outlier { members } => {
                buf.push(1);
                put_u64(&mut buf, members.len() as u64);
                for &id in members {
                    put_u64(&mut buf, id);
                }
            }
            NodeKind::Directory {
                left,
                right,
                split_offset,
            } => {
                buf.push(2);
                put_u32(&mut buf, *left);
                put_u32(&mut buf, *right);
                put_f64(&mut buf, *split_offset);
            }
        }
        match &node.reflection {
            Reflection::Identity => buf.push(0),
            Reflection::Householder { v } => {
                buf.push(1);
                put_slice_f64(&mut buf, v);
            }
        }
        match &node.direction {
            None => buf.push(0),
            Some(dir) => {
                buf.push(1);
                put_slice_f64(&mut buf, dir.components());
            }
        }
        put_slice_f64(&mut buf, node.mbr.lo());
        put_slice_f64(&mut buf, node.mbr.hi());
    }

    for &id in data.ids() {
        put_u64(&mut buf, id);
    }
    put_slice_f64(&mut buf, data.values());

    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

/// Saves `tree` to `path` atomically.
pub fn save_tree(tree: &Tree, path: &Path) -> Result<()> {
    let bytes = tree_to_bytes(tree);
    atomic_write(path, |w| {
        use std::io::Write;
        w.write_all(&bytes)?;
        Ok(())
    })
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn bad(&self, at: usize, detail: impl Into<String>) -> Error {
        Error::Format {
            context: "index file",
            offset: at as u64,
            detail: detail.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.bad(
                self.pos,
                format!("truncated {what} ({} of {n} bytes)", self.buf.len() - self.pos),
            ));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn usize(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.u64(what)?;
        usize::try_from(v).map_err(|_| self.bad(at, format!("{what} {v} overflows")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let raw = self.take(n * 8, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Reconstructs a tree from bytes produced by [`tree_to_bytes`].
pub fn tree_from_bytes(bytes: &[u8]) -> Result<Tree> {
    if bytes.len() < DIGEST_LEN {
        return Err(Error::Format {
            context: "index file",
            offset: 0,
            detail: format!("file too short ({} bytes)", bytes.len()),
        });
    }
    let (body, stored_digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored_digest {
        return Err(Error::Format {
            context: "index file",
            offset: body.len() as u64,
            detail: "digest mismatch: file is corrupt".into(),
        });
    }

    let mut c = Cursor { buf: body, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(c.bad(0, format!("bad magic {magic:?}")));
    }
    let at = c.pos;
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(c.bad(at, format!("unsupported version {version}")));
    }
    let at = c.pos;
    let d = c.u32("dimension")? as usize;
    if d == 0 {
        return Err(c.bad(at, "dimension 0"));
    }
    let n = c.usize("row count")?;

    let cfg_at = c.pos;
    let k = c.usize("k")?;
    let minpts = match c.u8("minpts tag")? {
        0 => MinptsRule::Percent(c.f64("minpts percent")?),
        1 => MinptsRule::Absolute(c.usize("minpts absolute")?),
        t => return Err(c.bad(c.pos - 1, format!("bad minpts tag {t}"))),
    };
    let direction_rule = match c.u8("direction rule")? {
        0 => DirectionRule::NonGaussian,
        1 => DirectionRule::Pc1,
        t => return Err(c.bad(c.pos - 1, format!("bad direction rule {t}"))),
    };
    let split_rule = match c.u8("split rule")? {
        0 => SplitRule::TwoMeansMidpoint,
        1 => SplitRule::CentroidProjection,
        t => return Err(c.bad(c.pos - 1, format!("bad split rule {t}"))),
    };
    let bounding_rule = match c.u8("bounding rule")? {
        0 => BoundingRule::ReflectedFrame,
        1 => BoundingRule::OriginalFrame,
        t => return Err(c.bad(c.pos - 1, format!("bad bounding rule {t}"))),
    };
    let selection_rule = match c.u8("selection rule")? {
        0 => SelectionRule::Selvalue,
        1 => SelectionRule::Scatter,
        t => return Err(c.bad(c.pos - 1, format!("bad selection rule {t}"))),
    };
    let config = TreeConfig {
        k,
        minpts,
        direction_rule,
        split_rule,
        bounding_rule,
        selection_rule,
        c: c.f64("contrast constant")?,
        fastica_tol: c.f64("fastica_tol")?,
        fastica_max_iter: c.usize("fastica_max_iter")?,
        pca_tol: c.f64("pca_tol")?,
        pca_max_iter: c.usize("pca_max_iter")?,
        whiten_eps: c.f64("whiten_eps")?,
        epsilon: c.f64("epsilon")?,
        seed: c.u64("seed")?,
    };
    config
        .validate()
        .map_err(|e| c.bad(cfg_at, format!("invalid stored configuration: {e}")))?;

    let stats = BuildStats {
        iterations: c.usize("iterations")?,
        leaf_count: c.usize("leaf count")?,
        outlier_count: c.usize("outlier count")?,
    };

    let node_count = c.usize("node count")?;
    if node_count == 0 {
        return Err(c.bad(c.pos - 8, "empty node table"));
    }
    let mut nodes = Vec::with_capacity(node_count);
    for i in 0..node_count {
        let at = c.pos;
        let kind = match c.u8("node tag")? {
            tag @ (0 | 1) => {
                let count = c.usize("member count")?;
                let mut members = Vec::with_capacity(count);
                for _ in 0..count {
                    members.push(c.u64("member id")?);
                }
                if tag == 0 {
                    NodeKind::Leaf { members }
                } else {
                    NodeKind::Outlier { members }
                }
            }
            2 => {
                let left = c.u32("left child")?;
                let right = c.u32("right child")?;
                let split_offset = c.f64("split offset")?;
                for (side, id) in [("left", left), ("right", right)] {
                    if id as usize >= node_count || id == 0 {
                        return Err(c.bad(at, format!("node {i}: bad {side} child {id}")));
                    }
                }
                NodeKind::Directory {
                    left,
                    right,
                    split_offset,
                }
            }
            t => return Err(c.bad(at, format!("bad node tag {t}"))),
        };
        let reflection = match c.u8("reflection tag")? {
            0 => Reflection::Identity,
            1 => Reflection::Householder {
                v: c.f64_vec(d, "reflection vector")?,
            },
            t => return Err(c.bad(c.pos - 1, format!("bad reflection tag {t}"))),
        };
        let direction = match c.u8("direction tag")? {
            0 => None,
            1 => {
                let at = c.pos;
                let comps = c.f64_vec(d, "direction")?;
                let norm2: f64 = comps.iter().map(|v| v * v).sum();
                if !norm2.is_finite() || (norm2.sqrt() - 1.0).abs() > 1e-6 {
                    return Err(c.bad(at, format!("direction norm {} is not 1", norm2.sqrt())));
                }
                Some(Direction::from_normalized(comps))
            }
            t => return Err(c.bad(c.pos - 1, format!("bad direction tag {t}"))),
        };
        let at = c.pos;
        let lo = c.f64_vec(d, "mbr lo")?;
        let hi = c.f64_vec(d, "mbr hi")?;
        let mbr =
            Mbr::new(lo, hi).map_err(|e| c.bad(at, format!("node {i}: invalid mbr: {e}")))?;
        nodes.push(IndexNode {
            kind,
            reflection,
            mbr,
            direction,
        });
    }

    let ids_at = c.pos;
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(c.u64("row id")?);
    }
    let values_at = c.pos;
    let values = c.f64_vec(n * d, "row values")?;
    if c.pos != body.len() {
        return Err(c.bad(c.pos, format!("{} trailing bytes", body.len() - c.pos)));
    }
    let data = FeatureMatrix::new(d, values, ids)
        .map_err(|e| Error::Format {
            context: "index file",
            offset: values_at as u64,
            detail: format!("invalid embedded dataset: {e}"),
        })?;

    let mut member_ids: Vec<u64> = nodes
        .iter()
        .filter_map(|nd| nd.members())
        .flatten()
        .copied()
        .collect();
    member_ids.sort_unstable();
    let mut dataset_ids = data.ids().to_vec();
    dataset_ids.sort_unstable();
    if member_ids != dataset_ids {
        return Err(Error::Format {
            context: "index file",
            offset: ids_at as u64,
            detail: "childless nodes do not partition the dataset row ids".into(),
        });
    }
    let childless = nodes.iter().filter(|nd| nd.is_childless()).count();
    if stats.leaf_count + stats.outlier_count != childless
        || stats.iterations + 1 != childless
    {
        return Err(Error::Format {
            context: "index file",
            offset: cfg_at as u64,
            detail: "stored statistics do not match the node table".into(),
        });
    }

    Tree::from_parts(nodes, config, Arc::new(data), stats)
}

/// Loads a tree previously written by [`save_tree`].
pub fn load_tree(path: &Path) -> Result<Tree> {
    let bytes = std::fs::read(path)?;
    tree_from_bytes(&bytes)
}
