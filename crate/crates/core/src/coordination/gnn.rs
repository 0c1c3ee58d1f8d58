//! Inference-only message-passing GNN over a full mesh of BSs.
//!
//! Node feature of BS `b`: real/imag parts of its own users' data channels.
//! Edge feature `b → b'`: real/imag parts of the channels from `b` to the
//! users of `b'`. Per layer every BS encodes `[hidden ; edge]` into one
//! message per neighbor, aggregates what it receives with a
//! permutation-invariant reduction and updates `hidden ← relu(C·[hidden ;
//! aggregate ; node])`. A final linear layer emits `2·K_c·N_t` reals per BS,
//! read as that BS's complex beams. All BSs share one set of weights.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ledger::{Endpoint, OverheadLedger, BITS_PER_REAL};
use crate::beamforming::{project, zf_init};
use crate::channel::NetworkInstance;
use crate::sic::BeamformingSolution;
use crate::{Error, Result, C64};

pub const WEIGHTS_MAGIC: &str = "NOMAGNN1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    Max,
    Sum,
    Mean,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::Max => "max",
            Aggregation::Sum => "sum",
            Aggregation::Mean => "mean",
        })
    }
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "max" => Ok(Aggregation::Max),
            "sum" => Ok(Aggregation::Sum),
            "mean" => Ok(Aggregation::Mean),
            other => Err(format!("unknown aggregation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnArchitecture {
    /// Message size (reals) of each layer; its length is the depth.
    pub embed_size: Vec<usize>,
    pub hidden_width: usize,
    pub aggregation: Aggregation,
}

impl GnnArchitecture {
    pub fn uniform(depth: usize, embed: usize, hidden_width: usize, aggregation: Aggregation) -> Self {
        Self {
            embed_size: vec![embed; depth],
            hidden_width,
            aggregation,
        }
    }

    pub fn depth(&self) -> usize {
        self.embed_size.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_size.is_empty() {
            return Err(Error::InvalidParameter {
                field: "gnn_depth",
                message: "at least one layer is required".into(),
            });
        }
        if self.embed_size.contains(&0) || self.hidden_width == 0 {
            return Err(Error::InvalidParameter {
                field: "gnn_embed",
                message: "layer sizes must be positive".into(),
            });
        }
        Ok(())
    }
}

/// Per-BS feature sizes implied by a topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GnnDims {
    pub node: usize,
    pub edge: usize,
    pub output: usize,
}

impl GnnDims {
    pub fn for_instance(inst: &NetworkInstance) -> Self {
        Self::new(inst.users_per_cell, inst.antennas_per_cell)
    }

    pub fn new(users_per_cell: usize, antennas: usize) -> Self {
        let d = 2 * users_per_cell * antennas;
        Self {
            node: d,
            edge: d,
            output: d,
        }
    }
}

/// Affine map `y = W·x + b` with row-major `W`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weight: vec![0.0; rows * cols],
            bias: vec![0.0; rows],
        }
    }

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Self {
            rows,
            cols,
            weight: (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect(),
            bias: (0..rows).map(|_| rng.random_range(-0.1..0.1)).collect(),
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        self.weight
            .chunks(self.cols)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn check(&self, name: &str, rows: usize, cols: usize) -> Result<()> {
        if self.rows != rows
            || self.cols != cols
            || self.weight.len() != rows * cols
            || self.bias.len() != rows
        {
            return Err(Error::Shape(format!(
                "{name}: expected {rows}x{cols}, found {}x{} ({} weights, {} biases)",
                self.rows,
                self.cols,
                self.weight.len(),
                self.bias.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnLayer {
    pub encoder: Dense,
    pub combiner: Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnWeights {
    pub input: Dense,
    pub layers: Vec<GnnLayer>,
    pub output: Dense,
}

impl GnnWeights {
    fn build(arch: &GnnArchitecture, dims: GnnDims, mut make: impl FnMut(usize, usize) -> Dense) -> Self {
        let h = arch.hidden_width;
        let input = make(h, dims.node);
        let layers = arch
            .embed_size
            .iter()
            .map(|&s| GnnLayer {
                encoder: make(s, h + dims.edge),
                combiner: make(h, h + s + dims.node),
            })
            .collect();
        let output = make(dims.output, h);
        Self {
            input,
            layers,
            output,
        }
    }

    /// Glorot-uniform weights and small uniform biases from a seed.
    pub fn random(arch: &GnnArchitecture, dims: GnnDims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(arch, dims, |r, c| Dense::random(r, c, &mut rng))
    }

    pub fn zeros(arch: &GnnArchitecture, dims: GnnDims) -> Self {
        Self::build(arch, dims, Dense::zeros)
    }

    pub fn check(&self, arch: &GnnArchitecture, dims: GnnDims) -> Result<()> {
        arch.validate()?;
        let h = arch.hidden_width;
        self.input.check("input", h, dims.node)?;
        if self.layers.len() != arch.depth() {
            return Err(Error::Shape(format!(
                "{} layers for an architecture of depth {}",
                self.layers.len(),
                arch.depth()
            )));
        }
        for (l, (layer, &s)) in self.layers.iter().zip(&arch.embed_size).enumerate() {
            layer.encoder.check(&format!("layer{l}.encoder"), s, h + dims.edge)?;
            layer.combiner.check(&format!("layer{l}.combiner"), h, h + s + dims.node)?;
        }
        self.output.check("output", dims.output, h)
    }

    fn named_dense(&self) -> Vec<(String, &Dense)> {
        let mut v = vec![("input".to_string(), &self.input)];
        for (l, layer) in self.layers.iter().enumerate() {
            v.push((format!("layer{l}.encoder"), &layer.encoder));
            v.push((format!("layer{l}.combiner"), &layer.combiner));
        }
        v.push(("output".to_string(), &self.output));
        v
    }

    /// Writes the textual weights container:
    ///
    /// ```text
    /// NOMAGNN1
    /// <array count>
    /// <name> <rows> <cols>
    /// <rows·cols values, space separated>
    /// ...
    /// ```
    ///
    /// Each dense layer contributes `<prefix>.weight` (rows × cols) and
    /// `<prefix>.bias` (rows × 1). Values use shortest round-trip decimals.
    pub fn write_to(&self, mut out: impl Write) -> std::io::Result<()> {
        let dense = self.named_dense();
        writeln!(out, "{WEIGHTS_MAGIC}")?;
        writeln!(out, "{}", dense.len() * 2)?;
        for (name, d) in dense {
            writeln!(out, "{name}.weight {} {}", d.rows, d.cols)?;
            writeln!(out, "{}", join(&d.weight))?;
            writeln!(out, "{name}.bias {} 1", d.rows)?;
            writeln!(out, "{}", join(&d.bias))?;
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(Error::WeightsFormat(e.to_string())),
                None => Err(Error::WeightsFormat(format!("unexpected end of file reading {what}"))),
            }
        };
        if next("magic")?.trim() != WEIGHTS_MAGIC {
            return Err(Error::WeightsFormat(format!("missing {WEIGHTS_MAGIC} header")));
        }
        let count: usize = next("array count")?
            .trim()
            .parse()
            .map_err(|_| Error::WeightsFormat("bad array count".into()))?;
        let mut arrays: Vec<NamedArray> = Vec::with_capacity(count);
        for _ in 0..count {
            let header = next("array header")?;
            let parts: Vec<&str> = header.split_whitespace().collect();
            let [name, rows, cols] = parts[..] else {
                return Err(Error::WeightsFormat(format!("bad array header `{header}`")));
            };
            let dim = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::WeightsFormat(format!("bad dimension `{s}` for {name}")))
            };
            let (rows, cols) = (dim(rows)?, dim(cols)?);
            let values = next(name)?
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::WeightsFormat(format!("bad value `{v}` in {name}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != rows * cols {
                return Err(Error::WeightsFormat(format!(
                    "{name}: {} values for shape {rows}x{cols}",
                    values.len()
                )));
            }
            arrays.push((name.to_string(), rows, cols, values));
        }

        let input = take_dense(&mut arrays, "input")?;
        let mut layers = Vec::new();
        for l in 0.. {
            if !arrays.iter().any(|a| a.0 == format!("layer{l}.encoder.weight")) {
                break;
            }
            layers.push(GnnLayer {
                encoder: take_dense(&mut arrays, &format!("layer{l}.encoder"))?,
                combiner: take_dense(&mut arrays, &format!("layer{l}.combiner"))?,
            });
        }
        let output = take_dense(&mut arrays, "output")?;
        if let Some(extra) = arrays.first() {
            return Err(Error::WeightsFormat(format!("unexpected array {}", extra.0)));
        }
        Ok(Self {
            input,
            layers,
            output,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

type NamedArray = (String, usize, usize, Vec<f64>);

/// Removes `<prefix>.weight` and `<prefix>.bias` from `arrays`.
fn take_dense(arrays: &mut Vec<NamedArray>, prefix: &str) -> Result<Dense> {
    let mut find = |suffix: &str| {
        let full = format!("{prefix}.{suffix}");
        let pos = arrays
            .iter()
            .position(|a| a.0 == full)
            .ok_or_else(|| Error::WeightsFormat(format!("missing array {full}")))?;
        Ok::<_, Error>(arrays.remove(pos))
    };
    let w = find("weight")?;
    let b = find("bias")?;
    if b.1 != w.1 || b.2 != 1 {
        return Err(Error::WeightsFormat(format!("{prefix}: bias shape mismatch")));
    }
    Ok(Dense {
        rows: w.1,
        cols: w.2,
        weight: w.3,
        bias: b.3,
    })
}

fn flatten_channels<'a>(chans: impl Iterator<Item = &'a [C64]>) -> Vec<f64> {
    chans.flat_map(|h| h.iter().flat_map(|x| [x.re, x.im])).collect()
}

fn aggregate(kind: Aggregation, messages: &[Vec<f64>], size: usize) -> Vec<f64> {
    if messages.is_empty() {
        return vec![0.0; size];
    }
    let mut acc = messages[0].clone();
    for m in &messages[1..] {
        for (a, v) in acc.iter_mut().zip(m) {
            *a = match kind {
                Aggregation::Max => a.max(*v),
                Aggregation::Sum | Aggregation::Mean => *a + v,
            };
        }
    }
    if kind == Aggregation::Mean {
        let n = messages.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnOutcome {
    pub beams: BeamformingSolution,
    pub ledger: OverheadLedger,
    /// Output-layer activations per BS before projection.
    pub raw_outputs: Vec<Vec<f64>>,
    /// BSs whose outputs were all zero and fell back to zero-forcing.
    pub fallback_cells: Vec<usize>,
}

pub fn gnn_forward(
    inst: &NetworkInstance,
    arch: &GnnArchitecture,
    weights: &GnnWeights,
) -> Result<GnnOutcome> {
    let dims = GnnDims::for_instance(inst);
    weights.check(arch, dims)?;
    let cells = inst.num_cells;
    let nt = inst.antennas_per_cell;

    let node: Vec<Vec<f64>> = (0..cells)
        .map(|b| flatten_channels(inst.users_in_cell(b).map(|u| inst.link(b, u))))
        .collect();
    let edge = |from: usize, to: usize| {
        flatten_channels(inst.users_in_cell(to).map(|u| inst.link(from, u)))
    };

    let mut hidden: Vec<Vec<f64>> = node.iter().map(|x| relu(weights.input.apply(x))).collect();
    let mut ledger = OverheadLedger::new();

    for (l, (layer, &size)) in weights.layers.iter().zip(&arch.embed_size).enumerate() {
        let mut inbox: Vec<Vec<Vec<f64>>> = vec![Vec::new(); cells];
        for from in 0..cells {
            for (to, slot) in inbox.iter_mut().enumerate() {
                if from == to {
                    continue;
                }
                let mut input = hidden[from].clone();
                input.extend(edge(from, to));
                slot.push(relu(layer.encoder.apply(&input)));
                ledger.record(l + 1, Endpoint::Bs(from), Endpoint::Bs(to), size as u64, 0);
            }
        }
        hidden = (0..cells)
            .map(|b| {
                let agg = aggregate(arch.aggregation, &inbox[b], size);
                let mut input = hidden[b].clone();
                input.extend(agg);
                input.extend_from_slice(&node[b]);
                relu(layer.combiner.apply(&input))
            })
            .collect();
    }

    let raw_outputs: Vec<Vec<f64>> = hidden.iter().map(|h| weights.output.apply(h)).collect();
    let mut beams = BeamformingSolution::zeros(inst);
    let mut fallback_cells = Vec::new();
    for (b, out) in raw_outputs.iter().enumerate() {
        if out.iter().all(|x| *x == 0.0) {
            fallback_cells.push(b);
            for (u, w) in inst.users_in_cell(b).zip(zf_init(inst, b)) {
                beams.beams[u] = w;
            }
            continue;
        }
        for (local, u) in inst.users_in_cell(b).enumerate() {
            beams.beams[u] = (0..nt)
                .map(|a| {
                    let idx = 2 * (local * nt + a);
                    C64::new(out[idx], out[idx + 1])
                })
                .collect();
        }
    }
    project(inst, &mut beams);
    Ok(GnnOutcome {
        beams,
        ledger,
        raw_outputs,
        fallback_cells,
    })
}

/// `8 · B(B−1) · Σ_ℓ embed_size[ℓ]` bits over a full mesh of `B` BSs.
pub fn gnn_overhead_closed_form(arch: &GnnArchitecture, num_cells: u64) -> u64 {
    let total: u64 = arch.embed_size.iter().map(|&s| s as u64).sum();
    BITS_PER_REAL * num_cells * num_cells.saturating_sub(1) * total
}
