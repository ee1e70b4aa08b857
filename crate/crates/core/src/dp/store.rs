//! Value-function container: a plain-text header followed by little-endian
//! `f64` values and `u8` policy indices.
//!
//! ```text
//! ECODRIVE-VF 1
//! scenario_hash <hex>
//! gamma <f64>
//! first_step <n>
//! ds_m <f64>
//! controls <a>:<0|1> ...
//! layer <v0> <dv> <nv> <soc0> <dsoc> <nsoc> <t0> <dt> <nt>     (one per step)
//! payload_sha256 <hex>
//! end_header
//! <payload>
//! ```

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use super::grid::{Axis, StateGrid, StepAxes};
use super::solve::{DpSolution, OptimalPolicy, ValueFunction};
use crate::error::{Error, Result};
use crate::util::sha256_hex;
use crate::vehicle::ControlInput;
use crate::world::fmt_f64;

const MAGIC: &str = "ECODRIVE-VF";
const VERSION: u32 = 1;

fn payload(sol: &DpSolution) -> Vec<u8> {
    let mut out = Vec::with_capacity(sol.value.values.len() * 9);
    for v in &sol.value.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&sol.policy.index);
    out
}

pub fn save_solution(sol: &DpSolution, path: &Path) -> Result<()> {
    let vf = &sol.value;
    let body = payload(sol);
    let mut h = String::new();
    let _ = writeln!(h, "{MAGIC} {VERSION}");
    let _ = writeln!(h, "scenario_hash {}", vf.scenario_hash);
    let _ = writeln!(h, "gamma {}", fmt_f64(vf.gamma));
    let _ = writeln!(h, "first_step {}", vf.grid.first_step);
    let _ = writeln!(h, "ds_m {}", fmt_f64(vf.grid.ds_m));
    let controls: Vec<String> = sol
        .policy
        .controls
        .iter()
        .map(|u| format!("{}:{}", fmt_f64(u.accel_mps2), u8::from(u.engine_on)))
        .collect();
    let _ = writeln!(h, "controls {}", controls.join(" "));
    for l in &vf.grid.layers {
        let mut line = String::from("layer");
        for a in [l.v, l.soc, l.t] {
            let _ = write!(line, " {} {} {}", fmt_f64(a.start), fmt_f64(a.step), a.len);
        }
        let _ = writeln!(h, "{line}");
    }
    let _ = writeln!(h, "payload_sha256 {}", sha256_hex(&body));
    let _ = writeln!(h, "end_header");
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(h.as_bytes())
        .and_then(|_| f.write_all(&body))
        .map_err(|e| Error::io(path, e))
}

pub fn load_solution(path: &Path) -> Result<DpSolution> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    let marker = b"end_header\n";
    let end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not UTF-8".into()))?;
    let body = &bytes[end + marker.len()..];

    let mut lines = header.lines();
    let first = lines.next().unwrap_or_default();
    if first != format!("{MAGIC} {VERSION}") {
        return Err(bad(format!("unsupported magic/version line `{first}`")));
    }
    let mut hash = None;
    let mut gamma = None;
    let mut first_step = None;
    let mut ds = None;
    let mut controls = None;
    let mut sha = None;
    let mut layers = Vec::new();
    for line in lines {
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}` in `{line}`")));
        match key {
            "scenario_hash" => hash = Some(rest.to_string()),
            "gamma" => gamma = Some(num(rest)?),
            "first_step" => first_step = Some(rest.parse::<usize>().map_err(|_| bad(line.into()))?),
            "ds_m" => ds = Some(num(rest)?),
            "payload_sha256" => sha = Some(rest.to_string()),
            "controls" => {
                let mut out = Vec::new();
                for tok in rest.split_whitespace() {
                    let (a, on) = tok.split_once(':').ok_or_else(|| bad(format!("bad control `{tok}`")))?;
                    out.push(ControlInput::new(num(a)?, on == "1"));
                }
                controls = Some(out);
            }
            "layer" => {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 9 {
                    return Err(bad(format!("layer line needs 9 fields: `{line}`")));
                }
                let axis = |k: usize| -> Result<Axis> {
                    let len = f[k + 2].parse::<usize>().map_err(|_| bad(line.into()))?;
                    let step = num(f[k + 1])?;
                    if len == 0 || !(step > 0.0) {
                        return Err(bad(format!("degenerate axis in `{line}`")));
                    }
                    Ok(Axis::new(num(f[k])?, step, len))
                };
                layers.push(StepAxes {
                    v: axis(0)?,
                    soc: axis(3)?,
                    t: axis(6)?,
                });
            }
            _ => return Err(bad(format!("unknown header key `{key}`"))),
        }
    }
    let missing = |name: &str| bad(format!("header lacks `{name}`"));
    let grid = StateGrid::new(
        first_step.ok_or_else(|| missing("first_step"))?,
        ds.ok_or_else(|| missing("ds_m"))?,
        layers,
    )
    .map_err(|e| bad(e.to_string()))?;
    let n = grid.total_nodes();
    if body.len() != n * 9 {
        return Err(bad(format!("payload has {} bytes, expected {}", body.len(), n * 9)));
    }
    if sha.as_deref() != Some(sha256_hex(body).as_str()) {
        return Err(bad("payload checksum mismatch".into()));
    }
    let values = body[..n * 8]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(DpSolution {
        value: ValueFunction {
            grid,
            values,
            gamma: gamma.ok_or_else(|| missing("gamma"))?,
            scenario_hash: hash.ok_or_else(|| missing("scenario_hash"))?,
        },
        policy: OptimalPolicy {
            controls: controls.ok_or_else(|| missing("controls"))?,
            index: body[n * 8..].to_vec(),
        },
    })
}

/// `s,v,soc,t,J` for every node; infeasible nodes print `inf`.
pub fn write_value_csv(vf: &ValueFunction, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["s", "v", "soc", "t", "J"])?;
    for step in vf.grid.first_step..=vf.grid.last_step() {
        let layer = vf.grid.layer(step);
        for (idx, j) in vf.layer_values(step).iter().enumerate() {
            let st = layer.state(idx);
            w.write_record([
                step.to_string(),
                fmt_f64(st.v_mps),
                fmt_f64(st.soc_frac),
                fmt_f64(st.time_s),
                fmt_f64(*j),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{backward_induction, GridSpec, Problem, TerminalPenalty};
    use crate::vehicle::{EgoState, VehicleParams};
    use crate::world::{LimitChange, Route};

    fn solved() -> DpSolution {
        let r = Route::new("s", 100.0, 10.0, vec![LimitChange { start_m: 0.0, limit_mps: 10.0 }], vec![], vec![])
            .unwrap();
        let p = VehicleParams::default();
        let spec = GridSpec::default();
        let x0 = EgoState::new(0.0, 0.25, 0.0);
        let grid = spec.build(&r, &x0, None).unwrap();
        let prob = Problem::new(&r, &p, 0.8, spec.controls());
        backward_induction(&prob, &grid, &TerminalPenalty::default(), &r.fingerprint()).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let sol = solved();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vf.bin");
        save_solution(&sol, &path).unwrap();
        let back = load_solution(&path).unwrap();
        assert_eq!(back.value.grid, sol.value.grid);
        assert_eq!(back.policy, sol.policy);
        assert_eq!(
            back.value.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            sol.value.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let csv_path = dir.path().join("vf.csv");
        write_value_csv(&sol.value, &csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("s,v,soc,t,J\n"));
        assert_eq!(text.lines().count(), sol.value.values.len() + 1);
    }

    #[test]
    fn corruption_is_a_format_error() {
        let sol = solved();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vf.bin");
        save_solution(&sol, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let n = bytes.len();
        bytes[n - 20] ^= 0xff;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_solution(&path), Err(Error::Format { .. })));
        std::fs::write(&path, b"garbage").unwrap();
        assert!(matches!(load_solution(&path), Err(Error::Format { .. })));
    }
}
