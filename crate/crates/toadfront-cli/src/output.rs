//! CSV tables, snapshot dumps and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toadfront::model::{Field, ThetaDomain};

use crate::error::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const SNAPSHOT_MAGIC: &str = "toadfront-snapshot 1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Where and for which config files are written.
#[derive(Debug, Clone)]
pub struct Context {
    pub out_dir: PathBuf,
    pub name: String,
    pub hash: String,
    pub seed: u64,
}

impl Context {
    pub fn path(&self, file: &str) -> PathBuf {
        self.out_dir.join(file)
    }

    fn header(&self, comments: &[String]) -> String {
        let mut s = format!(
            "# toadfront {VERSION}\n# name: {}\n# config_hash: {}\n# seed: {}\n",
            self.name, self.hash, self.seed
        );
        for c in comments {
            s.push_str(&format!("# {c}\n"));
        }
        s
    }

    /// Writes a comma-separated table with `#` comment headers.
    pub fn write_csv(&self, file: &str, comments: &[String], columns: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut s = self.header(comments);
        s.push_str(&columns.join(","));
        s.push('\n');
        for r in rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        let path = self.path(file);
        fs::write(&path, s)?;
        Ok(path)
    }

    /// Whitespace-separated plot data with `#` comments.
    pub fn write_dat(&self, file: &str, comments: &[String], columns: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf, CliError> {
        let mut s = self.header(comments);
        s.push_str(&format!("# {}\n", columns.join(" ")));
        for r in rows {
            let line: Vec<String> = r.iter().map(|v| num(*v)).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        let path = self.path(file);
        fs::write(&path, s)?;
        Ok(path)
    }

    pub fn write_text(&self, file: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.path(file);
        fs::write(&path, format!("{}{body}", self.header(&[])))?;
        Ok(path)
    }
}

/// A CSV file read back: comment lines, header and string cells.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut comments = Vec::new();
        let mut columns = None;
        let mut rows = Vec::new();
        for line in text.lines() {
            if let Some(c) = line.strip_prefix('#') {
                comments.push(c.trim().to_string());
            } else if columns.is_none() {
                columns = Some(line.split(',').map(|s| s.trim().to_string()).collect::<Vec<_>>());
            } else if !line.trim().is_empty() {
                rows.push(line.split(',').map(|s| s.trim().to_string()).collect());
            }
        }
        Ok(Self { file: path.display().to_string(), comments, columns: columns.unwrap_or_default(), rows })
    }

    pub fn index(&self, column: &str) -> Result<usize, CliError> {
        self.columns
            .iter()
            .position(|c| c == column)
            .ok_or_else(|| CliError::MissingColumn { file: self.file.clone(), column: column.into() })
    }

    pub fn column(&self, column: &str) -> Result<Vec<f64>, CliError> {
        let k = self.index(column)?;
        self.rows
            .iter()
            .map(|r| {
                r.get(k)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| CliError::Config(format!("{}: bad value in column `{column}`", self.file)))
            })
            .collect()
    }

    /// Value of a `key: value` comment line.
    pub fn comment(&self, key: &str) -> Option<&str> {
        self.comments.iter().find_map(|c| c.strip_prefix(key).and_then(|r| r.strip_prefix(':')).map(str::trim))
    }
}

/// Writes `field` as a text header followed by little-endian f64 values.
pub fn write_snapshot(path: &Path, field: &Field, model_tag: &str, hash: &str) -> Result<(), CliError> {
    let d = &field.domain;
    let header = format!(
        "{SNAPSHOT_MAGIC}\nt {:e}\nstep {}\nx_offset {:e}\ndx {:e}\ndtheta {:e}\nn_x {}\nn_theta {}\ntheta_min {:e}\ntheta_max {:e}\nmodel {model_tag}\nconfig_hash {hash}\nend_header\n",
        field.t, field.step, field.x_offset, field.dx, d.dtheta(), field.n_x, d.n_theta, d.theta_min, d.theta_max
    );
    let mut bytes = header.into_bytes();
    bytes.reserve(8 * field.values.len());
    for v in &field.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

/// Reads a snapshot dump; returns the field and its model tag.
pub fn read_snapshot(path: &Path) -> Result<(Field, String, String), CliError> {
    let bad = |m: &str| CliError::Config(format!("{}: {m}", path.display()));
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim_end() != SNAPSHOT_MAGIC {
        return Err(bad("not a snapshot dump"));
    }
    let mut kv = BTreeMap::new();
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Err(bad("truncated header"));
        }
        let line = line.trim_end();
        if line == "end_header" {
            break;
        }
        let (k, v) = line.split_once(' ').ok_or_else(|| bad("malformed header line"))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| bad(&format!("header lacks `{k}`")));
    let f64_of = |k: &str| -> Result<f64, CliError> { get(k)?.parse().map_err(|_| bad(k)) };
    let usize_of = |k: &str| -> Result<usize, CliError> { get(k)?.parse().map_err(|_| bad(k)) };
    let domain = ThetaDomain::new(f64_of("theta_min")?, f64_of("theta_max")?, usize_of("n_theta")?)?;
    let n_x = usize_of("n_x")?;
    let mut field = Field::zeros(n_x, f64_of("dx")?, f64_of("x_offset")?, domain);
    field.t = f64_of("t")?;
    field.step = get("step")?.parse().map_err(|_| bad("step"))?;
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    if raw.len() != 8 * field.values.len() {
        return Err(bad("payload size does not match n_x·n_theta"));
    }
    for (v, chunk) in field.values.iter_mut().zip(raw.chunks_exact(8)) {
        *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
    }
    Ok((field, get("model")?.clone(), get("config_hash")?.clone()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRecord {
    pub file: String,
    pub t: f64,
    pub step: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionRecord {
    pub name: String,
    pub value: f64,
    pub band: [f64; 2],
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub start_unix: f64,
    pub end_unix: f64,
    pub wall_seconds: f64,
    pub status: String,
    pub exit_code: i32,
    /// sha256 of every emitted file other than snapshots.
    pub files: BTreeMap<String, String>,
    pub snapshots: Vec<SnapshotRecord>,
    pub assertions: Vec<AssertionRecord>,
}

pub fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl Manifest {
    pub fn new(ctx: &Context, command: &str) -> Self {
        Self {
            name: ctx.name.clone(),
            command: command.into(),
            config_hash: ctx.hash.clone(),
            version: VERSION.into(),
            seed: ctx.seed,
            start_unix: unix_now(),
            end_unix: 0.0,
            wall_seconds: 0.0,
            status: "running".into(),
            exit_code: -1,
            files: BTreeMap::new(),
            snapshots: Vec::new(),
            assertions: Vec::new(),
        }
    }

    pub fn file_name(command: &str) -> String {
        if command == "simulate" {
            "manifest.json".into()
        } else {
            format!("manifest_{command}.json")
        }
    }

    pub fn load(ctx: &Context, command: &str) -> Result<Option<Self>, CliError> {
        let path = ctx.path(&Self::file_name(command));
        if !path.exists() {
            return Ok(None);
        }
        let text = fs::read_to_string(&path)?;
        serde_json::from_str(&text).map(Some).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn record_file(&mut self, ctx: &Context, path: &Path) -> Result<(), CliError> {
        let rel = path.strip_prefix(&ctx.out_dir).unwrap_or(path).display().to_string();
        self.files.insert(rel, sha256_file(path)?);
        Ok(())
    }

    pub fn save(&mut self, ctx: &Context, status: &str, exit_code: i32) -> Result<(), CliError> {
        self.end_unix = unix_now();
        self.wall_seconds = self.end_unix - self.start_unix;
        self.status = status.into();
        self.exit_code = exit_code;
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        fs::write(ctx.path(&Self::file_name(&self.command)), text + "\n")?;
        Ok(())
    }
}
