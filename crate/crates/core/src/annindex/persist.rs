//! `TAIX` binary index file, little-endian throughout.
//!
//! ```text
//! magic "TAIX" | version u16 | dimension u32 | item count u64 | tree count u16
//! max_leaf_size u32 | seed u64
//! items:  item_id u64 | ref len u32 | ref UTF-8 | dimension x f32
//! trees:  root u64 | node count u64 | nodes
//!         node = tag u8 (0 split, 1 leaf)
//!           split: dimension x f32 normal | f32 offset | u64 left | u64 right
//!           leaf:  u32 count | count x u64 item id
//! crc32 of every preceding byte (u32)
//! ```

use std::io::Write;
use std::path::Path;

use super::{AnnError, AnnIndex, BuildParams, IndexItem, Tree, TreeNode};
use crate::backends::EmbeddingVector;

pub const MAGIC: &[u8; 4] = b"TAIX";
pub const FORMAT_VERSION: u16 = 1;

const TAG_SPLIT: u8 = 0;
const TAG_LEAF: u8 = 1;

pub fn write_index(index: &AnnIndex) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(index.dimension as u32).to_le_bytes());
    buf.extend_from_slice(&(index.items.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(index.trees.len() as u16).to_le_bytes());
    buf.extend_from_slice(&index.params.max_leaf_size.to_le_bytes());
    buf.extend_from_slice(&index.params.seed.to_le_bytes());

    for item in &index.items {
        buf.extend_from_slice(&item.item_id.to_le_bytes());
        let r = item.unit_ref.to_string();
        buf.extend_from_slice(&(r.len() as u32).to_le_bytes());
        buf.extend_from_slice(r.as_bytes());
        put_f32s(&mut buf, item.vector.values());
    }

    for tree in &index.trees {
        buf.extend_from_slice(&tree.root.to_le_bytes());
        buf.extend_from_slice(&(tree.nodes.len() as u64).to_le_bytes());
        for node in &tree.nodes {
            match node {
                TreeNode::Split {
                    normal,
                    offset,
                    left,
                    right,
                } => {
                    buf.push(TAG_SPLIT);
                    put_f32s(&mut buf, normal);
                    buf.extend_from_slice(&offset.to_le_bytes());
                    buf.extend_from_slice(&left.to_le_bytes());
                    buf.extend_from_slice(&right.to_le_bytes());
                }
                TreeNode::Leaf { item_ids } => {
                    buf.push(TAG_LEAF);
                    buf.extend_from_slice(&(item_ids.len() as u32).to_le_bytes());
                    for id in item_ids {
                        buf.extend_from_slice(&id.to_le_bytes());
                    }
                }
            }
        }
    }

    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    buf
}

fn put_f32s(buf: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn save(index: &AnnIndex, destination: &Path) -> Result<(), AnnError> {
    let io_err = |source| AnnError::Io {
        path: destination.to_path_buf(),
        source,
    };
    let bytes = write_index(index);
    let mut file = std::fs::File::create(destination).map_err(io_err)?;
    file.write_all(&bytes).map_err(io_err)?;
    file.sync_all().map_err(io_err)
}

pub fn load(source: &Path) -> Result<AnnIndex, AnnError> {
    let bytes = std::fs::read(source).map_err(|e| AnnError::Io {
        path: source.to_path_buf(),
        source: e,
    })?;
    read_index(&bytes)
}

pub fn read_index(bytes: &[u8]) -> Result<AnnIndex, AnnError> {
    if bytes.len() < MAGIC.len() || &bytes[..4] != MAGIC {
        return Err(AnnError::FormatVersionMismatch("bad magic bytes".into()));
    }
    if bytes.len() >= 6 {
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(AnnError::FormatVersionMismatch(format!(
                "version {version}, expected {FORMAT_VERSION}"
            )));
        }
    }
    if bytes.len() < 8 {
        return Err(AnnError::ChecksumMismatch);
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4-byte trailer"));
    if crc32fast::hash(body) != stored {
        return Err(AnnError::ChecksumMismatch);
    }

    let mut r = Reader { buf: body, pos: 6 };
    let dimension = r.u32()? as usize;
    let item_count = r.u64()?;
    let tree_count = r.u16()?;
    let max_leaf_size = r.u32()?;
    let seed = r.u64()?;
    if dimension == 0 {
        return Err(AnnError::Corrupt("zero dimension".into()));
    }

    let mut items = Vec::with_capacity(item_count.min(1 << 20) as usize);
    for _ in 0..item_count {
        let item_id = r.u64()?;
        let len = r.u32()? as usize;
        let raw = r.take(len)?;
        let text = std::str::from_utf8(raw).map_err(|e| AnnError::Corrupt(e.to_string()))?;
        let unit_ref = text.parse().map_err(|e| AnnError::Corrupt(format!("{e}")))?;
        let values = r.f32s(dimension)?;
        let vector = EmbeddingVector::new(values).map_err(|e| AnnError::Corrupt(e.to_string()))?;
        items.push(IndexItem {
            item_id,
            unit_ref,
            vector,
        });
    }

    let mut trees = Vec::with_capacity(tree_count as usize);
    for _ in 0..tree_count {
        let root = r.u64()?;
        let node_count = r.u64()?;
        let mut nodes = Vec::with_capacity(node_count.min(1 << 20) as usize);
        for _ in 0..node_count {
            let node = match r.u8()? {
                TAG_SPLIT => {
                    let normal = r.f32s(dimension)?;
                    let offset = r.f32()?;
                    let left = r.u64()?;
                    let right = r.u64()?;
                    TreeNode::Split {
                        normal,
                        offset,
                        left,
                        right,
                    }
                }
                TAG_LEAF => {
                    let count = r.u32()?;
                    let item_ids = (0..count).map(|_| r.u64()).collect::<Result<_, _>>()?;
                    TreeNode::Leaf { item_ids }
                }
                tag => return Err(AnnError::Corrupt(format!("unknown node tag {tag}"))),
            };
            nodes.push(node);
        }
        trees.push(Tree { root, nodes });
    }
    if r.pos != body.len() {
        return Err(AnnError::Corrupt(format!("{} trailing bytes", body.len() - r.pos)));
    }

    AnnIndex::from_parts(
        dimension,
        BuildParams {
            tree_count,
            max_leaf_size,
            seed,
        },
        items,
        trees,
    )
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], AnnError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or_else(|| AnnError::Corrupt("unexpected end of data".into()))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], AnnError> {
        Ok(self.take(N)?.try_into().expect("exact length"))
    }

    fn u8(&mut self) -> Result<u8, AnnError> {
        Ok(self.array::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, AnnError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, AnnError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, AnnError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32, AnnError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>, AnnError> {
        (0..n).map(|_| self.f32()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::HashEmbedder;
    use crate::corpus::UnitRef;

    fn small_index() -> AnnIndex {
        let e = HashEmbedder::new(1, 16);
        let items = (0..40u32)
            .map(|i| IndexItem {
                item_id: u64::from(i),
                unit_ref: if i % 3 == 0 {
                    UnitRef::annex(i + 1)
                } else {
                    UnitRef::article(i + 1)
                },
                vector: e.embed(&format!("unit {i} text {}", i * 7)).unwrap(),
            })
            .collect();
        AnnIndex::build(items, BuildParams::new(3, 4, 11)).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = write_index(&small_index());
        assert_eq!(&bytes[..4], b"TAIX");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), FORMAT_VERSION);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 16);
        assert_eq!(u64::from_le_bytes(bytes[10..18].try_into().unwrap()), 40);
        assert_eq!(u16::from_le_bytes(bytes[18..20].try_into().unwrap()), 3);
        let n = bytes.len();
        let crc = u32::from_le_bytes(bytes[n - 4..].try_into().unwrap());
        assert_eq!(crc, crc32fast::hash(&bytes[..n - 4]));
    }

    #[test]
    fn round_trip_is_structural_identity_and_byte_stable() {
        let index = small_index();
        let bytes = write_index(&index);
        let back = read_index(&bytes).unwrap();
        assert_eq!(back, index);
        assert_eq!(write_index(&back), bytes);
    }

    #[test]
    fn truncated_file_fails_checksum() {
        let bytes = write_index(&small_index());
        for cut in [bytes.len() - 1, bytes.len() / 2, 12, 7] {
            assert!(
                matches!(read_index(&bytes[..cut]), Err(AnnError::ChecksumMismatch)),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn flipped_byte_fails_checksum() {
        let mut bytes = write_index(&small_index());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(read_index(&bytes), Err(AnnError::ChecksumMismatch)));
    }

    #[test]
    fn wrong_magic_or_version() {
        let mut bytes = write_index(&small_index());
        bytes[0] = b'X';
        assert!(matches!(read_index(&bytes), Err(AnnError::FormatVersionMismatch(_))));
        let mut bytes = write_index(&small_index());
        bytes[4] = 9;
        assert!(matches!(read_index(&bytes), Err(AnnError::FormatVersionMismatch(_))));
        assert!(matches!(read_index(b"TA"), Err(AnnError::FormatVersionMismatch(_))));
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.taix");
        let index = small_index();
        save(&index, &path).unwrap();
        assert_eq!(load(&path).unwrap(), index);
        assert!(matches!(load(&dir.path().join("nope")), Err(AnnError::Io { .. })));
    }
}
