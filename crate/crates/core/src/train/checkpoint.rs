//! Checkpoint files: a JSON header followed by a raw little-endian f64
//! blob, so parameters round-trip bit-exactly.
//!
//! Layout: 8-byte magic, u64 LE header length, header JSON, blob. The
//! header records every tensor's name and shape plus a SHA-256 of the
//! blob; loads verify the digest before deserializing anything else.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::PointSet;
use crate::nn::ParamStore;
use crate::student::{Student, StudentConfig, StudentVariant};
use crate::teacher::{Teacher, TeacherConfig};

const MAGIC: &[u8; 8] = b"SPCKPT01";

#[derive(Serialize, Deserialize)]
struct EntryMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct TeacherMeta {
    config: TeacherConfig,
    vertex_count: usize,
    template_points: usize,
}

#[derive(Serialize, Deserialize)]
struct StudentMeta {
    config: StudentConfig,
    variant: StudentVariant,
    volume_dims: [usize; 3],
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: String,
    teacher: Option<TeacherMeta>,
    student: Option<StudentMeta>,
    params: Vec<EntryMeta>,
    buffers: Vec<EntryMeta>,
    blob_sha256: String,
}

fn blob_push(blob: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        blob.extend_from_slice(&v.to_le_bytes());
    }
}

fn blob_take(blob: &[u8], cursor: &mut usize, count: usize) -> Result<Vec<f64>> {
    let bytes = count * 8;
    let end = *cursor + bytes;
    if end > blob.len() {
        return Err(Error::Checkpoint("blob shorter than header declares".into()));
    }
    let out = blob[*cursor..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    *cursor = end;
    Ok(out)
}

fn store_meta(store: &ParamStore) -> Vec<EntryMeta> {
    store
        .iter()
        .map(|(_, p)| EntryMeta { name: p.name.clone(), shape: p.shape.clone() })
        .collect()
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let d = h.finalize();
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over a store's values in registration order; the frozen-teacher
/// contract compares this before and after a phase.
pub fn params_hash(store: &ParamStore) -> String {
    let mut blob = Vec::with_capacity(store.scalar_count() * 8);
    for (_, p) in store.iter() {
        blob_push(&mut blob, &p.data);
    }
    hex_digest(&blob)
}

fn write_checkpoint(path: &Path, header: &mut Header, blob: Vec<u8>) -> Result<()> {
    header.blob_sha256 = hex_digest(&blob);
    let header_json = serde_json::to_vec(header)?;
    let mut file = Vec::with_capacity(16 + header_json.len() + blob.len());
    file.extend_from_slice(MAGIC);
    file.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    file.extend_from_slice(&header_json);
    file.extend_from_slice(&blob);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, file)?;
    Ok(())
}

fn read_checkpoint(path: &Path) -> Result<(Header, Vec<u8>)> {
    let bytes = fs::read(path)?;
    let fail = |msg: &str| Error::Checkpoint(format!("{}: {msg}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(fail("not a checkpoint file"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + header_len {
        return Err(fail("truncated header"));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + header_len])?;
    let blob = bytes[16 + header_len..].to_vec();
    if hex_digest(&blob) != header.blob_sha256 {
        return Err(fail("blob digest mismatch"));
    }
    Ok((header, blob))
}

/// Blob digest of an on-disk checkpoint, verified against its contents.
pub fn checkpoint_hash(path: &Path) -> Result<String> {
    let (header, _) = read_checkpoint(path)?;
    Ok(header.blob_sha256)
}

fn load_store_blob(
    metas: &[EntryMeta],
    blob: &[u8],
    cursor: &mut usize,
    into: &mut ParamStore,
) -> Result<()> {
    if metas.len() != into.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {} tensors, model has {}",
            metas.len(),
            into.len()
        )));
    }
    for meta in metas {
        let n: usize = meta.shape.iter().product();
        let data = blob_take(blob, cursor, n)?;
        let (r, p) = into
            .by_name(&meta.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {:?}", meta.name)))?;
        if p.shape != meta.shape {
            return Err(Error::Checkpoint(format!(
                "tensor {:?} has shape {:?}, model expects {:?}",
                meta.name, meta.shape, p.shape
            )));
        }
        into.get_mut(r).data = data;
    }
    Ok(())
}

pub fn save_teacher(path: &Path, teacher: &Teacher, params: &ParamStore) -> Result<()> {
    let mut blob = Vec::new();
    blob_push(&mut blob, &teacher.template.flattened());
    for (_, p) in params.iter() {
        blob_push(&mut blob, &p.data);
    }
    let mut header = Header {
        kind: "teacher".into(),
        teacher: Some(TeacherMeta {
            config: teacher.config.clone(),
            vertex_count: teacher.vertex_count,
            template_points: teacher.template.len(),
        }),
        student: None,
        params: store_meta(params),
        buffers: Vec::new(),
        blob_sha256: String::new(),
    };
    write_checkpoint(path, &mut header, blob)
}

pub fn load_teacher(path: &Path) -> Result<(Teacher, ParamStore)> {
    let (header, blob) = read_checkpoint(path)?;
    let meta = header
        .teacher
        .ok_or_else(|| Error::Checkpoint(format!("{}: not a teacher checkpoint", path.display())))?;
    let mut cursor = 0usize;
    let template_flat = blob_take(&blob, &mut cursor, meta.template_points * 3)?;
    let template = PointSet::from_flat(&template_flat)?;
    let (teacher, mut params) = Teacher::new(meta.config, template, meta.vertex_count, 0)?;
    load_store_blob(&header.params, &blob, &mut cursor, &mut params)?;
    Ok((teacher, params))
}

pub fn save_student(
    path: &Path,
    student: &Student,
    params: &ParamStore,
    buffers: &ParamStore,
) -> Result<()> {
    let mut blob = Vec::new();
    for (_, p) in params.iter() {
        blob_push(&mut blob, &p.data);
    }
    for (_, p) in buffers.iter() {
        blob_push(&mut blob, &p.data);
    }
    let mut header = Header {
        kind: "student".into(),
        teacher: None,
        student: Some(StudentMeta {
            config: student.config.clone(),
            variant: student.variant,
            volume_dims: student.volume_dims,
        }),
        params: store_meta(params),
        buffers: store_meta(buffers),
        blob_sha256: String::new(),
    };
    write_checkpoint(path, &mut header, blob)
}

pub fn load_student(path: &Path) -> Result<(Student, ParamStore, ParamStore)> {
    let (header, blob) = read_checkpoint(path)?;
    let meta = header
        .student
        .ok_or_else(|| Error::Checkpoint(format!("{}: not a student checkpoint", path.display())))?;
    let (student, mut params, mut buffers) =
        Student::new(meta.variant, meta.config, meta.volume_dims, 0)?;
    let mut cursor = 0usize;
    load_store_blob(&header.params, &blob, &mut cursor, &mut params)?;
    load_store_blob(&header.buffers, &blob, &mut cursor, &mut buffers)?;
    Ok((student, params, buffers))
}
