//! On-disk formats shared by every stage of the toolkit.
//!
//! - features binary: magic `UKGF`, u32 version=1, u64 rows, u32 dim,
//!   then rows x dim little-endian f32, row-major;
//! - edges.tsv: `src<TAB>dst<TAB>type0[,type1...]`, any number of rows per
//!   (src, dst) pair, merged on load;
//! - labels.tsv: `node_id<TAB>class0[,class1...]`, absent ids unlabeled;
//! - screen set: one property id per line, `#` comments.
//!
//! All writers go through [`write_atomic`] (temp file then rename) so a
//! failed run never leaves a partial artifact behind.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use memmap2::Mmap;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::graph::{build_graph, HeteroGraph};
use crate::labels::LabelMatrix;
use crate::matrix::FeatureMatrix;

pub const UKGF_MAGIC: &[u8; 4] = b"UKGF";
pub const UKGF_VERSION: u32 = 1;
const UKGF_HEADER_LEN: usize = 20;

/// Writes `path` atomically: the payload goes to `path.tmp` first and is
/// renamed into place only after `write` returns success.
pub fn write_atomic(path: &Path, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let tmp = tmp_path(path);
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut out = BufWriter::new(file);
    match write(&mut out).and_then(|()| out.flush().map_err(|e| Error::io(&tmp, e))) {
        Ok(()) => {
            std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
            Ok(())
        }
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

// ---------------------------------------------------------------------------
// Features binary (UKGF)
// ---------------------------------------------------------------------------

pub fn write_features(path: &Path, m: &FeatureMatrix) -> Result<()> {
    write_atomic(path, |out| {
        write_features_to(out, m).map_err(|e| Error::io(path, e))
    })
}

pub fn write_features_to<W: Write>(out: &mut W, m: &FeatureMatrix) -> std::io::Result<()> {
    out.write_all(UKGF_MAGIC)?;
    out.write_all(&UKGF_VERSION.to_le_bytes())?;
    out.write_all(&(m.rows() as u64).to_le_bytes())?;
    out.write_all(&(m.dim() as u32).to_le_bytes())?;
    for v in m.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// In-memory serialization, used when comparing artifacts byte for byte.
pub fn features_to_bytes(m: &FeatureMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(UKGF_HEADER_LEN + m.data().len() * 4);
    write_features_to(&mut buf, m).expect("vec write cannot fail");
    buf
}

fn parse_header(path: &Path, header: &[u8; UKGF_HEADER_LEN]) -> Result<(u64, u32)> {
    if &header[0..4] != UKGF_MAGIC {
        return Err(Error::Malformed {
            format: "UKGF",
            line: 0,
            reason: format!("{}: bad magic", path.display()),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != UKGF_VERSION {
        return Err(Error::Malformed {
            format: "UKGF",
            line: 0,
            reason: format!("{}: unsupported version {version}", path.display()),
        });
    }
    let rows = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let dim = u32::from_le_bytes(header[16..20].try_into().unwrap());
    Ok((rows, dim))
}

pub fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; UKGF_HEADER_LEN];
    reader
        .read_exact(&mut header)
        .map_err(|e| Error::io(path, e))?;
    let (rows, dim) = parse_header(path, &header)?;
    let count = rows as usize * dim as usize;
    let mut bytes = vec![0u8; count * 4];
    reader
        .read_exact(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let mut data = Vec::with_capacity(count);
    for chunk in bytes.chunks_exact(4) {
        data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
    }
    FeatureMatrix::from_data(rows as usize, dim as usize, data)
}

/// Reads only the (rows, dim) header of a features file.
pub fn read_features_header(path: &Path) -> Result<(u64, u32)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut header = [0u8; UKGF_HEADER_LEN];
    reader
        .read_exact(&mut header)
        .map_err(|e| Error::io(path, e))?;
    parse_header(path, &header)
}

/// A features file mapped read-only into memory, giving row access without
/// loading the payload. Used by chunked propagation to read the previous
/// hop while streaming the next one to disk.
pub struct MappedFeatures {
    _map: Mmap,
    rows: usize,
    dim: usize,
    /// Decoded copy on big-endian targets; on little-endian rows are viewed
    /// directly in the mapping.
    decoded: Option<Vec<f32>>,
    payload_ptr: *const u8,
}

// The mapping is read-only for the lifetime of the struct.
unsafe impl Send for MappedFeatures {}
unsafe impl Sync for MappedFeatures {}

impl MappedFeatures {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let map = unsafe { Mmap::map(&file) }.map_err(|e| Error::io(path, e))?;
        if map.len() < UKGF_HEADER_LEN {
            return Err(Error::Malformed {
                format: "UKGF",
                line: 0,
                reason: format!("{}: truncated header", path.display()),
            });
        }
        let mut header = [0u8; UKGF_HEADER_LEN];
        header.copy_from_slice(&map[..UKGF_HEADER_LEN]);
        let (rows, dim) = parse_header(path, &header)?;
        let count = rows as usize * dim as usize;
        if map.len() != UKGF_HEADER_LEN + count * 4 {
            return Err(Error::Malformed {
                format: "UKGF",
                line: 0,
                reason: format!(
                    "{}: payload length {} does not match {} x {}",
                    path.display(),
                    map.len() - UKGF_HEADER_LEN,
                    rows,
                    dim
                ),
            });
        }
        let payload = &map[UKGF_HEADER_LEN..];
        let decoded = if cfg!(target_endian = "little") && payload.as_ptr() as usize % 4 == 0 {
            None
        } else {
            let mut data = Vec::with_capacity(count);
            for chunk in payload.chunks_exact(4) {
                data.push(f32::from_le_bytes(chunk.try_into().unwrap()));
            }
            Some(data)
        };
        let payload_ptr = payload.as_ptr();
        Ok(MappedFeatures {
            _map: map,
            rows: rows as usize,
            dim: dim as usize,
            decoded,
            payload_ptr,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        assert!(i < self.rows);
        match &self.decoded {
            Some(data) => &data[i * self.dim..(i + 1) * self.dim],
            None => unsafe {
                // Alignment and length were checked at open time.
                std::slice::from_raw_parts(
                    (self.payload_ptr as *const f32).add(i * self.dim),
                    self.dim,
                )
            },
        }
    }
}

// ---------------------------------------------------------------------------
// edges.tsv
// ---------------------------------------------------------------------------

pub fn write_edges_tsv(path: &Path, g: &HeteroGraph) -> Result<()> {
    write_atomic(path, |out| {
        for (src, dst, types) in g.iter_edges() {
            let joined = types
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "{src}\t{dst}\t{joined}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

pub fn write_edge_list_tsv(path: &Path, edges: &[(u64, u64, Vec<u32>)]) -> Result<()> {
    write_atomic(path, |out| {
        for (src, dst, types) in edges {
            let joined = types
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "{src}\t{dst}\t{joined}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

pub fn read_edges_tsv(path: &Path, node_count: u64, edge_type_count: u32) -> Result<HeteroGraph> {
    let edges = read_edge_list_tsv(path)?;
    build_graph(edges, node_count, edge_type_count)
}

pub fn read_edge_list_tsv(path: &Path) -> Result<Vec<(u64, u64, Vec<u32>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut edges = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: &str| Error::Malformed {
            format: "edges.tsv",
            line: lineno + 1,
            reason: reason.to_string(),
        };
        let mut cols = line.split('\t');
        let src = cols
            .next()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| malformed("bad src"))?;
        let dst = cols
            .next()
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| malformed("bad dst"))?;
        let types_field = cols.next().ok_or_else(|| malformed("missing types"))?;
        let mut types = Vec::new();
        for part in types_field.split(',') {
            types.push(part.parse::<u32>().map_err(|_| malformed("bad type id"))?);
        }
        edges.push((src, dst, types));
    }
    Ok(edges)
}

// ---------------------------------------------------------------------------
// labels.tsv
// ---------------------------------------------------------------------------

pub fn write_labels_tsv(path: &Path, labels: &LabelMatrix) -> Result<()> {
    write_atomic(path, |out| {
        for v in 0..labels.node_count() {
            let classes = labels.classes(v);
            if classes.is_empty() {
                continue;
            }
            let joined = classes
                .iter()
                .map(|c| c.to_string())
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "{v}\t{joined}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

pub fn read_labels_tsv(path: &Path, node_count: u64, class_count: u32) -> Result<LabelMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut lists = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: &str| Error::Malformed {
            format: "labels.tsv",
            line: lineno + 1,
            reason: reason.to_string(),
        };
        let (node_str, classes_str) = line
            .split_once('\t')
            .ok_or_else(|| malformed("missing tab"))?;
        let node = node_str
            .parse::<u64>()
            .map_err(|_| malformed("bad node id"))?;
        let mut classes = Vec::new();
        for part in classes_str.split(',') {
            classes.push(part.parse::<u32>().map_err(|_| malformed("bad class id"))?);
        }
        lists.push((node, classes));
    }
    LabelMatrix::from_lists(lists, node_count, class_count)
}

// ---------------------------------------------------------------------------
// Screen set
// ---------------------------------------------------------------------------

/// Reads a property-id blacklist: one id per line, `#` starts a comment.
pub fn read_screen_set(path: &Path) -> Result<std::collections::HashSet<String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut set = std::collections::HashSet::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = match line.split_once('#') {
            Some((before, _)) => before.trim(),
            None => line.trim(),
        };
        if !trimmed.is_empty() {
            set.insert(trimmed.to_string());
        }
    }
    Ok(set)
}

// ---------------------------------------------------------------------------
// Checksums
// ---------------------------------------------------------------------------

/// SHA-256 of a file, lowercase hex.
pub fn file_sha256(path: &Path) -> Result<String> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex_string(&hasher.finalize()))
}

fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
