//! Binary checkpoints.
//!
//! ```text
//! FSAC1
//! #config {"widths":[...],...}
//! raw.0.weight\t32x75x3
//! ...
//! <blank line>
//! little-endian f64 payloads in manifest order
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::{build_model, FsaModel, ModelConfig};

const MAGIC: &str = "FSAC1";

fn shape_str(shape: &[usize]) -> String {
    shape.iter().map(usize::to_string).collect::<Vec<_>>().join("x")
}

pub fn write_checkpoint(model: &FsaModel, mut w: impl Write) -> Result<()> {
    let io = |e| Error::io("writing checkpoint", e);
    let config = serde_json::to_string(&model.config)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let params = model.named_params();
    let mut header = format!("{MAGIC}\n#config {config}\n");
    for (name, t) in &params {
        header.push_str(&format!("{name}\t{}\n", shape_str(t.shape())));
    }
    header.push('\n');
    w.write_all(header.as_bytes()).map_err(io)?;
    for (_, t) in &params {
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        w.write_all(&bytes).map_err(io)?;
    }
    w.flush().map_err(io)
}

fn header_line(r: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    let n = r
        .read_line(&mut line)
        .map_err(|e| Error::io("reading checkpoint header", e))?;
    if n == 0 {
        return Err(Error::Checkpoint("truncated header".into()));
    }
    Ok(line.trim_end_matches('\n').to_string())
}

pub fn read_checkpoint(r: impl Read) -> Result<FsaModel> {
    let mut r = BufReader::new(r);
    if header_line(&mut r)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let config_line = header_line(&mut r)?;
    let json = config_line
        .strip_prefix("#config ")
        .ok_or_else(|| Error::Checkpoint("missing #config line".into()))?;
    let config: ModelConfig =
        serde_json::from_str(json).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let template = build_model(&config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let expected: Vec<(String, Vec<usize>)> = template
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, t.shape().to_vec()))
        .collect();

    let mut manifest = Vec::new();
    loop {
        let line = header_line(&mut r)?;
        if line.is_empty() {
            break;
        }
        let (name, shape) = line
            .split_once('\t')
            .ok_or_else(|| Error::Checkpoint(format!("malformed manifest line {line:?}")))?;
        let shape = shape
            .split('x')
            .map(|s| s.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Checkpoint(format!("shape of {name}: {e}")))?;
        manifest.push((name.to_string(), shape));
    }
    if manifest != expected {
        return Err(Error::Checkpoint(
            "parameter manifest does not match the stored config".into(),
        ));
    }

    let mut tensors = Vec::with_capacity(manifest.len());
    for (name, shape) in manifest {
        let n: usize = shape.iter().product();
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)
            .map_err(|e| Error::Checkpoint(format!("payload of {name}: {e}")))?;
        let data = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push(Tensor::new(shape, data)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| Error::io("reading checkpoint", e))? != 0 {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    template.with_params(tensors)
}

pub fn save_checkpoint(model: &FsaModel, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    write_checkpoint(model, BufWriter::new(f))
}

pub fn load_checkpoint(path: &Path) -> Result<FsaModel> {
    let f = File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_checkpoint(f)
}
