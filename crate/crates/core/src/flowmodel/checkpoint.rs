//! Checkpoint layout: UTF-8 header lines `key value...` ending with a line
//! `end`, then every parameter as a little-endian `f32` in layout order.

use super::{FlowModel, Mlp, NormStats};
use crate::error::{Error, Result};
use crate::spc::Interpolation;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "gpc-flow-checkpoint";

fn join(v: &[impl ToString]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

impl FlowModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = String::new();
        let interp = match self.interpolation {
            Interpolation::CubicSpline => "cubic_spline",
            Interpolation::Linear => "linear",
        };
        let _ = writeln!(h, "{MAGIC} {CHECKPOINT_VERSION}");
        let _ = writeln!(h, "layer_sizes {}", join(self.mlp.sizes()));
        let _ = writeln!(h, "knot_shape {} {}", self.knot_shape.0, self.knot_shape.1);
        let _ = writeln!(h, "time_embedding_dim {}", self.time_embedding_dim);
        let _ = writeln!(h, "interpolation {interp}");
        let _ = writeln!(h, "horizon_seconds {}", self.horizon_seconds);
        let _ = writeln!(h, "input_mean {}", join(&self.input_norm.mean));
        let _ = writeln!(h, "input_std {}", join(&self.input_norm.std));
        let _ = writeln!(h, "output_mean {}", join(&self.output_norm.mean));
        let _ = writeln!(h, "output_std {}", join(&self.output_norm.std));
        let _ = writeln!(h, "n_params {}", self.params().len());
        h.push_str("end\n");
        let mut out = h.into_bytes();
        for p in self.params() {
            out.extend_from_slice(&(*p as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let marker = b"\nend\n";
        let split = bytes
            .windows(marker.len())
            .position(|w| w == marker)
            .ok_or_else(|| bad("missing header terminator".into()))?;
        let header = std::str::from_utf8(&bytes[..split]).map_err(|_| bad("header is not UTF-8".into()))?;
        let body = &bytes[split + marker.len()..];

        let mut lines = header.lines();
        let first = lines.next().unwrap_or_default();
        let version = first
            .strip_prefix(MAGIC)
            .and_then(|v| v.trim().parse::<u32>().ok())
            .ok_or_else(|| bad(format!("bad magic line `{first}`")))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch { found: version, expected: CHECKPOINT_VERSION });
        }
        let mut fields = BTreeMap::new();
        for line in lines {
            let (k, v) = line.split_once(' ').unwrap_or((line, ""));
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("missing header field `{k}`")));
        fn nums<T: std::str::FromStr>(k: &str, v: &str) -> Result<Vec<T>> {
            v.split_whitespace()
                .map(|x| x.parse().map_err(|_| Error::Checkpoint(format!("bad number `{x}` in `{k}`"))))
                .collect()
        }
        let sizes: Vec<usize> = nums("layer_sizes", get("layer_sizes")?)?;
        let shape: Vec<usize> = nums("knot_shape", get("knot_shape")?)?;
        let [k, m] = shape[..] else {
            return Err(bad("knot_shape needs two entries".into()));
        };
        let te = nums::<usize>("time_embedding_dim", get("time_embedding_dim")?)?;
        let horizon = nums::<f64>("horizon_seconds", get("horizon_seconds")?)?;
        let interpolation: Interpolation = get("interpolation")?.trim().parse()?;
        let n: Vec<usize> = nums("n_params", get("n_params")?)?;
        let (&[te], &[horizon], &[n]) = (&te[..], &horizon[..], &n[..]) else {
            return Err(bad("scalar header field has the wrong arity".into()));
        };
        if body.len() != 4 * n {
            return Err(bad(format!("expected {} parameter bytes, found {}", 4 * n, body.len())));
        }
        let params = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
        let norm = |mk: &str, sk: &str| -> Result<NormStats> {
            Ok(NormStats { mean: nums(mk, get(mk)?)?, std: nums(sk, get(sk)?)? })
        };
        FlowModel::new(
            Mlp::new(sizes, params)?,
            norm("input_mean", "input_std")?,
            norm("output_mean", "output_std")?,
            (k, m),
            te,
            interpolation,
            horizon,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
