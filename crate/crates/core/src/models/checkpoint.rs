//! Flat checkpoint container.
//!
//! ```text
//! sfair-checkpoint 1
//! kind = sfair
//! num_nodes = 2708
//! ...                      model hyperparameters and seed, `key = value`
//! meta.<key> = <value>     free-form run metadata
//! param <name> <rows> <cols>
//! ...
//! end
//! <row-major little-endian f64 blocks, one per param line, same order>
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{FusionKind, Model, ModelConfig, ModelKind};
use crate::error::{Error, Result};
use crate::nn::{DenseMatrix, ParamStore};

pub const CHECKPOINT_MAGIC: &str = "sfair-checkpoint 1";

pub fn write_checkpoint<W: Write>(model: &Model, meta: &BTreeMap<String, String>, mut out: W) -> std::io::Result<()> {
    let cfg = model.config();
    let dims: Vec<String> = cfg.hidden_dims.iter().map(|d| d.to_string()).collect();
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "kind = {}", cfg.kind)?;
    writeln!(out, "num_nodes = {}", cfg.num_nodes)?;
    writeln!(out, "num_classes = {}", cfg.num_classes)?;
    writeln!(out, "embed_dim = {}", cfg.embed_dim)?;
    writeln!(out, "hidden_dims = {}", dims.join(","))?;
    writeln!(out, "h_max = {}", cfg.h_max)?;
    writeln!(out, "fusion = {}", cfg.fusion)?;
    writeln!(out, "leaky_slope = {:?}", cfg.leaky_slope)?;
    writeln!(out, "dropout = {:?}", cfg.dropout)?;
    writeln!(out, "seed = {}", model.seed())?;
    for (k, v) in meta {
        writeln!(out, "meta.{k} = {}", v.replace('\n', " "))?;
    }
    for p in model.params().iter() {
        writeln!(out, "param {} {} {}", p.name, p.value.rows(), p.value.cols())?;
    }
    writeln!(out, "end")?;
    for p in model.params().iter() {
        for v in p.value.data() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn field<T: std::str::FromStr>(fields: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = fields.get(key).ok_or_else(|| bad(format!("missing {key}")))?;
    raw.parse().map_err(|_| bad(format!("bad {key} value {raw:?}")))
}

pub fn read_checkpoint<R: Read>(reader: R) -> Result<(Model, BTreeMap<String, String>)> {
    let mut reader = BufReader::new(reader);
    let mut line = String::new();
    let next_line = |reader: &mut BufReader<R>, line: &mut String| -> Result<()> {
        line.clear();
        let n = reader.read_line(line).map_err(|e| bad(e.to_string()))?;
        if n == 0 {
            return Err(bad("truncated header"));
        }
        Ok(())
    };
    next_line(&mut reader, &mut line)?;
    if line.trim_end() != CHECKPOINT_MAGIC {
        return Err(bad(format!("not a checkpoint (first line {:?})", line.trim_end())));
    }
    let mut fields = BTreeMap::new();
    let mut meta = BTreeMap::new();
    let mut shapes = Vec::new();
    loop {
        next_line(&mut reader, &mut line)?;
        let text = line.trim_end();
        if text == "end" {
            break;
        }
        if let Some(rest) = text.strip_prefix("param ") {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            let [name, rows, cols] = parts[..] else {
                return Err(bad(format!("bad param line {text:?}")));
            };
            let rows: usize = rows.parse().map_err(|_| bad(format!("bad rows in {text:?}")))?;
            let cols: usize = cols.parse().map_err(|_| bad(format!("bad cols in {text:?}")))?;
            shapes.push((name.to_string(), rows, cols));
            continue;
        }
        let (k, v) = text
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| bad(format!("bad header line {text:?}")))?;
        match k.strip_prefix("meta.") {
            Some(mk) => meta.insert(mk.to_string(), v.to_string()),
            None => fields.insert(k.to_string(), v.to_string()),
        };
    }

    let hidden_dims = fields
        .get("hidden_dims")
        .ok_or_else(|| bad("missing hidden_dims"))?
        .split(',')
        .map(|d| d.parse().map_err(|_| bad(format!("bad hidden_dims entry {d:?}"))))
        .collect::<Result<Vec<usize>>>()?;
    let config = ModelConfig {
        kind: field::<ModelKind>(&fields, "kind")?,
        num_nodes: field(&fields, "num_nodes")?,
        num_classes: field(&fields, "num_classes")?,
        embed_dim: field(&fields, "embed_dim")?,
        hidden_dims,
        h_max: field(&fields, "h_max")?,
        fusion: field::<FusionKind>(&fields, "fusion")?,
        leaky_slope: field(&fields, "leaky_slope")?,
        dropout: field(&fields, "dropout")?,
    };
    let seed: u64 = field(&fields, "seed")?;
    let mut model = Model::new(config, seed).map_err(|e| bad(format!("inconsistent hyperparameters: {e}")))?;

    let mut store = ParamStore::new();
    let mut buf = [0u8; 8];
    for (name, rows, cols) in shapes {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            reader
                .read_exact(&mut buf)
                .map_err(|_| bad(format!("truncated data for {name}")))?;
            data.push(f64::from_le_bytes(buf));
        }
        store.add(name, DenseMatrix::from_vec(rows, cols, data)?);
    }
    if reader.read(&mut buf).map_err(|e| bad(e.to_string()))? != 0 {
        return Err(bad("trailing bytes after parameter data"));
    }
    model.set_params(store)?;
    Ok((model, meta))
}

pub fn save_checkpoint(model: &Model, meta: &BTreeMap<String, String>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, meta, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model, BTreeMap<String, String>)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> Model {
        let cfg = ModelConfig {
            embed_dim: 3,
            hidden_dims: vec![4, 2],
            fusion: FusionKind::Seq,
            ..ModelConfig::new(ModelKind::Sfair, 6, 2)
        };
        let mut m = Model::new(cfg, 77).unwrap();
        m.params_mut().iter_mut().last().unwrap().value.fill(0.125);
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let mut meta = BTreeMap::new();
        meta.insert("centrality".to_string(), "closeness".to_string());
        meta.insert("empty".to_string(), String::new());
        let mut buf = Vec::new();
        write_checkpoint(&m, &meta, &mut buf).unwrap();
        let (back, meta_back) = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta_back, meta);
        let mut again = Vec::new();
        write_checkpoint(&back, &meta_back, &mut again).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn corrupt_inputs_fail() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&m, &BTreeMap::new(), &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(&extra[..]).is_err());
        assert!(read_checkpoint(&b"hello\n"[..]).is_err());
        let text = String::from_utf8_lossy(&buf).replace("param input 6 3", "param input 6 4");
        assert!(read_checkpoint(text.as_bytes()).is_err());
    }
}
