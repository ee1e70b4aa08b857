use std::path::Path;

use serde::{Deserialize, Serialize};

use super::features::{Variant, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::util::sha256_hex;

/// Fully connected layer, weights stored input-major (`w[i * n_out + j]`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    #[inline]
    pub(crate) fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.b);
        for (i, &xi) in x.iter().enumerate() {
            let row = &self.w[i * self.n_out..(i + 1) * self.n_out];
            for (o, &wij) in out.iter_mut().zip(row) {
                *o += wij * xi;
            }
        }
    }
}

/// Provenance and schema of a trained net.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetMeta {
    pub variant: Variant,
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub gamma: f64,
    pub corpus_hash: String,
    pub seed: u64,
}

/// Tanh MLP on z-scored inputs with a linear, de-scaled output.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCostNet {
    pub layers: Vec<Dense>,
    pub in_mean: Vec<f64>,
    pub in_scale: Vec<f64>,
    pub out_mean: f64,
    pub out_scale: f64,
    pub meta: NetMeta,
}

/// Activations kept for back-propagation.
pub(crate) struct Trace {
    /// `acts[0]` is the normalized input, `acts[k]` the output of layer `k - 1`.
    pub acts: Vec<Vec<f64>>,
}

impl TerminalCostNet {
    /// Zero-initialized net with identity normalizers.
    pub fn zeros(sizes: &[usize], meta: NetMeta) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self {
            layers,
            in_mean: vec![0.0; sizes[0]],
            in_scale: vec![1.0; sizes[0]],
            out_mean: 0.0,
            out_scale: 1.0,
            meta,
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.layers.last().map(|l| l.n_out) != Some(1) {
            return Err(Error::Config("net must end in a single output".into()));
        }
        for w in self.layers.windows(2) {
            if w[0].n_out != w[1].n_in {
                return Err(Error::Config("layer sizes do not chain".into()));
            }
        }
        for l in &self.layers {
            if l.w.len() != l.n_in * l.n_out || l.b.len() != l.n_out {
                return Err(Error::Config("layer buffers have the wrong size".into()));
            }
        }
        let n = self.n_inputs();
        if self.in_mean.len() != n || self.in_scale.len() != n {
            return Err(Error::Config("normalizer length mismatch".into()));
        }
        if self.in_scale.iter().any(|s| !(*s > 0.0)) || !(self.out_scale > 0.0) {
            return Err(Error::Config("normalizer scales must be > 0".into()));
        }
        if self.meta.feature_names.len() != n {
            return Err(Error::Schema {
                expected: format!("{n} feature names"),
                found: self.meta.feature_names.len().to_string(),
            });
        }
        Ok(())
    }

    fn check_schema(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_inputs() {
            return Err(Error::Schema {
                expected: format!("{} inputs ({})", self.n_inputs(), self.meta.variant.as_str()),
                found: format!("{} inputs", x.len()),
            });
        }
        Ok(())
    }

    pub(crate) fn normalize(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..x.len() {
            out[i] = (x[i] - self.in_mean[i]) / self.in_scale[i];
        }
    }

    /// Normalized output for a normalized input, recording activations.
    pub(crate) fn trace(&self, z: &[f64], trace: &mut Trace) -> f64 {
        trace.acts.resize(self.layers.len() + 1, Vec::new());
        trace.acts[0].clear();
        trace.acts[0].extend_from_slice(z);
        let last = self.layers.len() - 1;
        for (k, layer) in self.layers.iter().enumerate() {
            let (head, tail) = trace.acts.split_at_mut(k + 1);
            let out = &mut tail[0];
            out.resize(layer.n_out, 0.0);
            layer.apply(&head[k], out);
            if k != last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        trace.acts[self.layers.len()][0]
    }

    /// De-scaled output without the clamp at zero.
    pub fn forward_raw(&self, x: &[f64]) -> Result<f64> {
        self.check_schema(x)?;
        let mut z = vec![0.0; x.len()];
        self.normalize(x, &mut z);
        let mut t = Trace { acts: Vec::new() };
        Ok(self.out_mean + self.out_scale * self.trace(&z, &mut t))
    }

    /// Cost-to-go estimate, clamped below at zero.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.forward_raw(x).map(|y| y.max(0.0))
    }

    /// `d forward_raw / d x`.
    pub fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_schema(x)?;
        let mut z = vec![0.0; x.len()];
        self.normalize(x, &mut z);
        let mut t = Trace { acts: Vec::new() };
        self.trace(&z, &mut t);
        let mut delta = vec![self.out_scale];
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            let mut prev = vec![0.0; layer.n_in];
            for (i, p) in prev.iter_mut().enumerate() {
                let row = &layer.w[i * layer.n_out..(i + 1) * layer.n_out];
                *p = row.iter().zip(&delta).map(|(w, d)| w * d).sum();
            }
            if k > 0 {
                for (p, a) in prev.iter_mut().zip(&t.acts[k]) {
                    *p *= 1.0 - a * a;
                }
            }
            delta = prev;
        }
        Ok(delta.iter().zip(&self.in_scale).map(|(d, s)| d / s).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        let meta = serde_json::to_vec(&self.meta).expect("meta serializes");
        put_u32(&mut body, meta.len() as u32);
        body.extend_from_slice(&meta);
        put_u32(&mut body, self.layers.len() as u32);
        for l in &self.layers {
            put_u32(&mut body, l.n_in as u32);
            put_u32(&mut body, l.n_out as u32);
            put_f64s(&mut body, &l.w);
            put_f64s(&mut body, &l.b);
        }
        put_f64s(&mut body, &self.in_mean);
        put_f64s(&mut body, &self.in_scale);
        put_f64s(&mut body, &[self.out_mean, self.out_scale]);
        let mut out = format!("{NET_MAGIC} {NET_VERSION}\nsha256 {}\n", sha256_hex(&body)).into_bytes();
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |detail: &str| Error::Format {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        };
        let mut lines = bytes.splitn(3, |&b| b == b'\n');
        let magic = lines.next().ok_or_else(|| bad("empty file"))?;
        if magic != format!("{NET_MAGIC} {NET_VERSION}").as_bytes() {
            return Err(bad("unsupported magic/version"));
        }
        let sha_line = std::str::from_utf8(lines.next().ok_or_else(|| bad("missing checksum"))?)
            .map_err(|_| bad("checksum line not UTF-8"))?;
        let body = lines.next().ok_or_else(|| bad("missing body"))?;
        if sha_line.strip_prefix("sha256 ") != Some(sha256_hex(body).as_str()) {
            return Err(bad("checksum mismatch"));
        }
        let mut r = Reader { buf: body, pos: 0 };
        let meta_len = r.u32().ok_or_else(|| bad("truncated"))? as usize;
        let meta: NetMeta = serde_json::from_slice(r.take(meta_len).ok_or_else(|| bad("truncated"))?)
            .map_err(|e| bad(&format!("metadata: {e}")))?;
        let n_layers = r.u32().ok_or_else(|| bad("truncated"))? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let n_in = r.u32().ok_or_else(|| bad("truncated"))? as usize;
            let n_out = r.u32().ok_or_else(|| bad("truncated"))? as usize;
            let w = r.f64s(n_in * n_out).ok_or_else(|| bad("truncated"))?;
            let b = r.f64s(n_out).ok_or_else(|| bad("truncated"))?;
            layers.push(Dense { n_in, n_out, w, b });
        }
        let n = layers.first().map_or(0, |l| l.n_in);
        let in_mean = r.f64s(n).ok_or_else(|| bad("truncated"))?;
        let in_scale = r.f64s(n).ok_or_else(|| bad("truncated"))?;
        let out = r.f64s(2).ok_or_else(|| bad("truncated"))?;
        if r.pos != body.len() {
            return Err(bad("trailing bytes"));
        }
        let net = Self {
            layers,
            in_mean,
            in_scale,
            out_mean: out[0],
            out_scale: out[1],
            meta,
        };
        net.validate().map_err(|e| bad(&e.to_string()))?;
        if net.meta.schema_version != SCHEMA_VERSION || net.meta.variant.inputs() != net.n_inputs() {
            return Err(Error::Schema {
                expected: format!("schema v{SCHEMA_VERSION}, {} inputs", net.meta.variant.inputs()),
                found: format!("schema v{}, {} inputs", net.meta.schema_version, net.n_inputs()),
            });
        }
        Ok(net)
    }

    /// Binary container at `path` plus `<path>.json` for inspection.
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let sidecar = path.with_extension("json");
        std::fs::write(&sidecar, serde_json::to_string_pretty(&self.sidecar())?)
            .map_err(|e| Error::io(&sidecar, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "meta": self.meta,
            "layer_sizes": std::iter::once(self.n_inputs())
                .chain(self.layers.iter().map(|l| l.n_out))
                .collect::<Vec<_>>(),
            "activation": "tanh",
            "input_mean": self.in_mean,
            "input_scale": self.in_scale,
            "output_mean": self.out_mean,
            "output_scale": self.out_scale,
            "layers": self.layers.iter().map(|l| serde_json::json!({"w": l.w, "b": l.b})).collect::<Vec<_>>(),
        })
    }

    pub fn digest(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

const NET_MAGIC: &str = "ECODRIVE-NN";
const NET_VERSION: u32 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Option<Vec<f64>> {
        let b = self.take(n.checked_mul(8)?)?;
        Some(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn meta(variant: Variant, n: usize) -> NetMeta {
        NetMeta {
            variant,
            schema_version: SCHEMA_VERSION,
            feature_names: (0..n).map(|i| format!("f{i}")).collect(),
            gamma: 0.8,
            corpus_hash: String::new(),
            seed: 0,
        }
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = TerminalCostNet::zeros(&[13, 64, 64, 1], meta(Variant::Ag, 13));
        assert_eq!(net.forward(&[0.5; 13]).unwrap(), 0.0);
        assert!(matches!(net.forward(&[0.5; 16]), Err(Error::Schema { .. })));
    }

    #[test]
    fn single_linear_layer_is_affine() {
        let mut net = TerminalCostNet::zeros(&[3, 1], meta(Variant::Ag, 3));
        net.layers[0].w = vec![2.0, -1.0, 0.5];
        net.layers[0].b = vec![4.0];
        // 2*1 - 1*2 + 0.5*6 + 4 = 7
        assert_eq!(net.forward(&[1.0, 2.0, 6.0]).unwrap(), 7.0);
        assert_eq!(net.forward(&[-10.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(net.forward_raw(&[-10.0, 0.0, 0.0]).unwrap(), -16.0);
        assert_eq!(net.input_gradient(&[1.0, 2.0, 6.0]).unwrap(), vec![2.0, -1.0, 0.5]);
    }

    #[test]
    fn bytes_round_trip_and_corruption() {
        let mut net = TerminalCostNet::zeros(&[13, 4, 1], meta(Variant::Ag, 13));
        net.layers[0].w.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64 * 0.01);
        let bytes = net.to_bytes();
        let back = TerminalCostNet::from_bytes(&bytes, Path::new("n")).unwrap();
        assert_eq!(back, net);
        let mut broken = bytes.clone();
        let n = broken.len();
        broken[n - 3] ^= 1;
        assert!(matches!(TerminalCostNet::from_bytes(&broken, Path::new("n")), Err(Error::Format { .. })));
    }
}
