//! Line-oriented model file: `key=value` header, then row-major `W<i>` and
//! `b<i>` blocks with 17 significant digits.

use std::fmt::Write as _;

use super::{Activation, Architecture, Channel, DataTag, DelayConfig, NarxModel, Normalization};
use crate::error::{Error, Result};

pub const MODEL_MAGIC: &str = "# narx-sysid model v1";

fn full(v: f64) -> String {
    format!("{v:.16e}")
}

impl NarxModel {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let d = self.delays;
        let mut sizes = vec![d.regressor_len()];
        sizes.extend(self.arch.hidden_sizes());
        sizes.push(1);
        let acts: Vec<&str> = self.layers.iter().map(|l| l.act.tag()).collect();
        let _ = writeln!(out, "{MODEL_MAGIC}");
        let _ = writeln!(out, "arch={}", self.arch.tag());
        let _ = writeln!(out, "na={}", d.na);
        let _ = writeln!(out, "nb={}", d.nb);
        let _ = writeln!(
            out,
            "layers={}",
            sizes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
        );
        let _ = writeln!(out, "act={}", acts.join(","));
        let _ = writeln!(out, "norm_u={},{}", full(self.norm.u.mean), full(self.norm.u.std));
        let _ = writeln!(out, "norm_y={},{}", full(self.norm.y.mean), full(self.norm.y.std));
        if let Some(tag) = self.data_tag {
            let _ = writeln!(out, "axis={}", tag.axis);
            let _ = writeln!(out, "dt={}", full(tag.dt));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            let w = layer.weights(&self.params);
            let _ = writeln!(out, "W{} {} {}", i + 1, layer.rows, layer.cols);
            for row in w.chunks(layer.cols) {
                let line: Vec<String> = row.iter().map(|&v| full(v)).collect();
                let _ = writeln!(out, "{}", line.join(" "));
            }
            let b: Vec<String> = layer.biases(&self.params).iter().map(|&v| full(v)).collect();
            let _ = writeln!(out, "b{} {}", i + 1, layer.rows);
            let _ = writeln!(out, "{}", b.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse { file: "model".into(), row: line, msg };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end()));

        let (_, first) = lines.next().ok_or_else(|| bad(1, "empty model file".into()))?;
        if first != MODEL_MAGIC {
            return Err(bad(1, format!("expected '{MODEL_MAGIC}'")));
        }

        let mut header: Vec<(usize, &str, &str)> = Vec::new();
        let mut body = Vec::new();
        for (no, line) in lines.by_ref() {
            if line.starts_with('W') {
                body.push((no, line));
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(no, format!("expected key=value, got '{line}'")))?;
            header.push((no, k.trim(), v.trim()));
        }
        body.extend(lines);

        let get = |key: &str| {
            header
                .iter()
                .find(|(_, k, _)| *k == key)
                .map(|&(no, _, v)| (no, v))
                .ok_or_else(|| bad(0, format!("missing header key '{key}'")))
        };
        let parse_usize = |key: &str| -> Result<usize> {
            let (no, v) = get(key)?;
            v.parse().map_err(|_| bad(no, format!("{key}: not an integer: '{v}'")))
        };
        let parse_pair = |key: &str| -> Result<Channel> {
            let (no, v) = get(key)?;
            let (m, s) = v.split_once(',').ok_or_else(|| bad(no, format!("{key}: expected mean,std")))?;
            let mean: f64 = m.parse().map_err(|_| bad(no, format!("{key}: bad mean '{m}'")))?;
            let std: f64 = s.parse().map_err(|_| bad(no, format!("{key}: bad std '{s}'")))?;
            if !(std > 0.0) {
                return Err(bad(no, format!("{key}: std must be > 0")));
            }
            Ok(Channel { mean, std })
        };

        let (_, arch_tag) = get("arch")?;
        let delays = DelayConfig::new(parse_usize("na")?, parse_usize("nb")?)?;
        let (layers_no, layers_v) = get("layers")?;
        let sizes: Vec<usize> = layers_v
            .split(',')
            .map(|s| s.trim().parse().map_err(|_| bad(layers_no, format!("bad layer size '{s}'"))))
            .collect::<Result<_>>()?;
        if sizes.len() < 2 || sizes[0] != delays.regressor_len() || *sizes.last().unwrap() != 1 {
            return Err(bad(layers_no, format!("layers={layers_v} inconsistent with na+nb and a single output")));
        }
        let arch = Architecture::from_tag(arch_tag, &sizes[1..sizes.len() - 1])?;
        let (act_no, act_v) = get("act")?;
        let acts: Vec<Activation> = act_v.split(',').map(|s| s.trim().parse()).collect::<Result<_>>()?;
        if acts.len() != sizes.len() - 1 || acts.last() != Some(&Activation::Identity) {
            return Err(bad(act_no, format!("act={act_v} does not match the layer list")));
        }
        let mut model =
            NarxModel::with_activations(arch, delays, acts[..acts.len() - 1].to_vec())?;
        model.norm = Normalization { u: parse_pair("norm_u")?, y: parse_pair("norm_y")? };
        if let Ok((no, axis)) = get("axis") {
            let (dt_no, dt) = get("dt")?;
            let dt: f64 = dt.parse().map_err(|_| bad(dt_no, format!("bad dt '{dt}'")))?;
            model.data_tag = Some(DataTag { axis: axis.parse().map_err(|e: Error| bad(no, e.to_string()))?, dt });
        }
        for &(no, k, _) in &header {
            if !["arch", "na", "nb", "layers", "act", "norm_u", "norm_y", "axis", "dt"].contains(&k) {
                return Err(bad(no, format!("unknown header key '{k}'")));
            }
        }

        let mut body = body.into_iter().filter(|(_, l)| !l.is_empty());
        let shapes = model.layers.clone();
        for (i, shape) in shapes.iter().enumerate() {
            let expect_w = format!("W{} {} {}", i + 1, shape.rows, shape.cols);
            let (no, line) = body.next().ok_or_else(|| bad(0, format!("missing block '{expect_w}'")))?;
            if line != expect_w {
                return Err(bad(no, format!("expected '{expect_w}', got '{line}'")));
            }
            let mut w = Vec::with_capacity(shape.rows * shape.cols);
            for _ in 0..shape.rows {
                let (no, line) = body.next().ok_or_else(|| bad(0, "truncated weight block".into()))?;
                let row = parse_row(line, shape.cols).map_err(|m| bad(no, m))?;
                w.extend(row);
            }
            let expect_b = format!("b{} {}", i + 1, shape.rows);
            let (no, line) = body.next().ok_or_else(|| bad(0, format!("missing block '{expect_b}'")))?;
            if line != expect_b {
                return Err(bad(no, format!("expected '{expect_b}', got '{line}'")));
            }
            let (no, line) = body.next().ok_or_else(|| bad(0, "truncated bias block".into()))?;
            let b = parse_row(line, shape.rows).map_err(|m| bad(no, m))?;
            model.weights_mut(i).copy_from_slice(&w);
            model.biases_mut(i).copy_from_slice(&b);
        }
        if let Some((no, line)) = body.next() {
            return Err(bad(no, format!("unexpected trailing content '{line}'")));
        }
        Ok(model)
    }
}

fn parse_row(line: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let values: Vec<f64> = line
        .split_ascii_whitespace()
        .map(|s| s.parse::<f64>().map_err(|_| format!("bad number '{s}'")))
        .collect::<std::result::Result<_, _>>()?;
    if values.len() != expected {
        return Err(format!("expected {expected} values, got {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite parameter".into());
    }
    Ok(values)
}
