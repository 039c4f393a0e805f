//! Recurrent sequence networks: tanh RNN and LSTM cells, stacked and
//! bidirectional composition, softmax cross-entropy, BPTT, optimizers and
//! checkpoints.

pub mod checkpoint;
pub mod gradcheck;
mod matrix;
pub mod optim;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::rng_from_seed;
use crate::error::{bail, Error, Result};
pub use matrix::{axpy, cosine, dot, sigmoid, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Lstm,
}

impl CellKind {
    /// Number of stacked gate blocks in the weight matrices.
    pub fn gates(self) -> usize {
        match self {
            CellKind::Rnn => 1,
            CellKind::Lstm => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    LastStep,
    PerStep,
}

/// Cell kind, depth, width and directionality of a network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    pub cell: CellKind,
    pub layers: usize,
    pub hidden: usize,
    pub bidirectional: bool,
}

impl Architecture {
    pub fn new(cell: CellKind, layers: usize, hidden: usize, bidirectional: bool) -> Architecture {
        Architecture { cell, layers, hidden, bidirectional }
    }

    pub fn config(&self, input_dim: usize, output_dim: usize, output_mode: OutputMode, seed: u64) -> SequenceModelConfig {
        SequenceModelConfig {
            cell: self.cell,
            layers: self.layers,
            hidden: self.hidden,
            bidirectional: self.bidirectional,
            input_dim,
            output_dim,
            output_mode,
            seed,
        }
    }
}

impl fmt::Display for Architecture {
    /// `DBLSTM-2x250` style names.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let deep = if self.layers > 1 { "D" } else { "" };
        let bi = if self.bidirectional { "B" } else { "" };
        let cell = match self.cell {
            CellKind::Rnn => "RNN",
            CellKind::Lstm => "LSTM",
        };
        write!(f, "{deep}{bi}{cell}-{}x{}", self.layers, self.hidden)
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Architecture> {
        let s = s.trim();
        let (name, dims) = s
            .split_once(['-', ' ', ':'])
            .ok_or_else(|| Error::Argument(format!("architecture '{s}' should look like LSTM-1x100")))?;
        let name = name.to_ascii_uppercase();
        let (cell, prefix) = if let Some(p) = name.strip_suffix("LSTM") {
            (CellKind::Lstm, p)
        } else if let Some(p) = name.strip_suffix("RNN") {
            (CellKind::Rnn, p)
        } else {
            bail!(Argument, "unknown cell in architecture '{s}'");
        };
        let bidirectional = match prefix {
            "" | "D" => false,
            "B" | "DB" => true,
            _ => bail!(Argument, "unknown architecture prefix in '{s}'"),
        };
        let (layers, hidden) = dims
            .split_once(['x', 'X', '*'])
            .ok_or_else(|| Error::Argument(format!("architecture '{s}' needs LAYERSxHIDDEN")))?;
        let layers: usize = layers.parse().map_err(|_| Error::Argument(format!("bad layer count in '{s}'")))?;
        let hidden: usize = hidden.parse().map_err(|_| Error::Argument(format!("bad width in '{s}'")))?;
        if layers == 0 || hidden == 0 {
            bail!(Argument, "architecture '{s}' must have positive sizes");
        }
        Ok(Architecture { cell, layers, hidden, bidirectional })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceModelConfig {
    pub cell: CellKind,
    pub layers: usize,
    pub hidden: usize,
    pub bidirectional: bool,
    pub input_dim: usize,
    pub output_dim: usize,
    pub output_mode: OutputMode,
    pub seed: u64,
}

impl SequenceModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.input_dim == 0 || self.output_dim == 0 {
            bail!(Validation, "all model dimensions must be >= 1: {self:?}");
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture::new(self.cell, self.layers, self.hidden, self.bidirectional)
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.directions() * self.hidden
        }
    }

    /// Width of a layer's per-step output and of the projection input.
    pub fn feature_dim(&self) -> usize {
        self.directions() * self.hidden
    }
}

/// A sentence as network input: dense columns or one-hot indices.
#[derive(Clone, Debug, PartialEq)]
pub enum SeqInput {
    Dense(Vec<Vec<f64>>),
    OneHot { ids: Vec<usize>, dim: usize },
}

impl SeqInput {
    pub fn len(&self) -> usize {
        match self {
            SeqInput::Dense(cols) => cols.len(),
            SeqInput::OneHot { ids, .. } => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        match self {
            SeqInput::Dense(cols) => cols.first().map_or(0, Vec::len),
            SeqInput::OneHot { dim, .. } => *dim,
        }
    }

    /// Dense columns, expanding one-hot ids.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        match self {
            SeqInput::Dense(cols) => cols.clone(),
            SeqInput::OneHot { ids, dim } => ids
                .iter()
                .map(|&i| {
                    let mut v = vec![0.0; *dim];
                    v[i] = 1.0;
                    v
                })
                .collect(),
        }
    }
}

/// Weights of one recurrent cell. Gate blocks are stacked row-wise in the
/// order input, forget, output, candidate for LSTMs.
#[derive(Clone, Debug, PartialEq)]
pub struct CellParams {
    pub w: Matrix,
    pub u: Matrix,
    pub b: Vec<f64>,
}

impl CellParams {
    pub fn hidden(&self) -> usize {
        self.u.cols
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols
    }

    fn zeros_like(&self) -> CellParams {
        CellParams {
            w: Matrix::zeros(self.w.rows, self.w.cols),
            u: Matrix::zeros(self.u.rows, self.u.cols),
            b: vec![0.0; self.b.len()],
        }
    }

    fn check(&self, gates: usize, x_len: usize, h_len: usize) -> Result<()> {
        let h = self.hidden();
        if self.u.rows != gates * h || self.w.rows != gates * h || self.b.len() != gates * h {
            bail!(Validation, "cell parameters do not have {gates} gate blocks of width {h}");
        }
        if x_len != self.input_dim() || h_len != h {
            bail!(
                Validation,
                "shape mismatch: x has {x_len} (want {}), h has {h_len} (want {h})",
                self.input_dim()
            );
        }
        Ok(())
    }
}

/// All learned weights of a sequence model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// `layers[l][d]`, `d = 0` forward, `d = 1` backward direction.
    pub layers: Vec<Vec<CellParams>>,
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
}

fn glorot(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

impl ModelParams {
    /// Uniform Glorot initialization, zero biases, LSTM forget-gate bias 1.
    pub fn init(config: &SequenceModelConfig) -> ModelParams {
        let mut rng = rng_from_seed(config.seed);
        let g = config.cell.gates();
        let h = config.hidden;
        let layers = (0..config.layers)
            .map(|l| {
                let input = config.layer_input_dim(l);
                (0..config.directions())
                    .map(|_| {
                        let w = Matrix::uniform(g * h, input, glorot(g * h, input), &mut rng);
                        let u = Matrix::uniform(g * h, h, glorot(g * h, h), &mut rng);
                        let mut b = vec![0.0; g * h];
                        if config.cell == CellKind::Lstm {
                            b[h..2 * h].iter_mut().for_each(|x| *x = 1.0);
                        }
                        CellParams { w, u, b }
                    })
                    .collect()
            })
            .collect();
        let feat = config.feature_dim();
        let out_w = Matrix::uniform(config.output_dim, feat, glorot(config.output_dim, feat), &mut rng);
        ModelParams { layers, out_w, out_b: vec![0.0; config.output_dim] }
    }

    pub fn zeros_like(&self) -> ModelParams {
        ModelParams {
            layers: self.layers.iter().map(|dirs| dirs.iter().map(CellParams::zeros_like).collect()).collect(),
            out_w: Matrix::zeros(self.out_w.rows, self.out_w.cols),
            out_b: vec![0.0; self.out_b.len()],
        }
    }

    /// Named tensors with their shapes, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (l, dirs) in self.layers.iter().enumerate() {
            for (d, cell) in dirs.iter().enumerate() {
                let dir = if d == 0 { "fwd" } else { "bwd" };
                out.push((format!("layer{l}.{dir}.w"), vec![cell.w.rows, cell.w.cols], cell.w.data.as_slice()));
                out.push((format!("layer{l}.{dir}.u"), vec![cell.u.rows, cell.u.cols], cell.u.data.as_slice()));
                out.push((format!("layer{l}.{dir}.b"), vec![cell.b.len()], cell.b.as_slice()));
            }
        }
        out.push(("out.w".into(), vec![self.out_w.rows, self.out_w.cols], self.out_w.data.as_slice()));
        out.push(("out.b".into(), vec![self.out_b.len()], self.out_b.as_slice()));
        out
    }

    /// Mutable views of the tensors, same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for dirs in self.layers.iter_mut() {
            for cell in dirs.iter_mut() {
                out.push(cell.w.data.as_mut_slice());
                out.push(cell.u.data.as_mut_slice());
                out.push(cell.b.as_mut_slice());
            }
        }
        out.push(self.out_w.data.as_mut_slice());
        out.push(self.out_b.as_mut_slice());
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.2.len()).sum()
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors().iter().flat_map(|t| t.2.iter()).map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.2.iter().all(|x| x.is_finite()))
    }

    /// Checks that the tensor shapes agree with `config`.
    pub fn check_shapes(&self, config: &SequenceModelConfig) -> Result<()> {
        let expected = ModelParams::zeros_for(config);
        let got: Vec<_> = self.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        let want: Vec<_> = expected.tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
        if got != want {
            bail!(Validation, "parameter shapes do not match the model configuration");
        }
        Ok(())
    }

    fn zeros_for(config: &SequenceModelConfig) -> ModelParams {
        let g = config.cell.gates();
        let h = config.hidden;
        ModelParams {
            layers: (0..config.layers)
                .map(|l| {
                    (0..config.directions())
                        .map(|_| CellParams {
                            w: Matrix::zeros(g * h, config.layer_input_dim(l)),
                            u: Matrix::zeros(g * h, h),
                            b: vec![0.0; g * h],
                        })
                        .collect()
                })
                .collect(),
            out_w: Matrix::zeros(config.output_dim, config.feature_dim()),
            out_b: vec![0.0; config.output_dim],
        }
    }
}

#[derive(Clone, Copy)]
enum StepIn<'a> {
    Dense(&'a [f64]),
    OneHot(usize),
}

fn preactivation(cell: &CellParams, x: StepIn<'_>, h_prev: &[f64]) -> Vec<f64> {
    let mut z = cell.b.clone();
    match x {
        StepIn::Dense(x) => cell.w.mul_vec_acc(x, &mut z),
        StepIn::OneHot(id) => cell.w.column_acc(id, &mut z),
    }
    cell.u.mul_vec_acc(h_prev, &mut z);
    z
}

/// One tanh RNN step: `h = tanh(W x + U h_prev + b)`.
pub fn rnn_step(x: &[f64], h_prev: &[f64], cell: &CellParams) -> Result<Vec<f64>> {
    cell.check(1, x.len(), h_prev.len())?;
    let mut z = preactivation(cell, StepIn::Dense(x), h_prev);
    z.iter_mut().for_each(|v| *v = v.tanh());
    Ok(z)
}

/// One LSTM step returning `(h, c)`.
pub fn lstm_step(x: &[f64], h_prev: &[f64], c_prev: &[f64], cell: &CellParams) -> Result<(Vec<f64>, Vec<f64>)> {
    cell.check(4, x.len(), h_prev.len())?;
    if c_prev.len() != h_prev.len() {
        bail!(Validation, "cell state has {} entries, hidden state {}", c_prev.len(), h_prev.len());
    }
    let step = lstm_cache(cell, StepIn::Dense(x), h_prev.to_vec(), c_prev.to_vec());
    Ok((step.h, step.c))
}

#[derive(Clone, Debug)]
struct StepCache {
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// LSTM: activated gates `[i, f, o, g]`; RNN: unused.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
    c: Vec<f64>,
    h: Vec<f64>,
}

fn lstm_cache(cell: &CellParams, x: StepIn<'_>, h_prev: Vec<f64>, c_prev: Vec<f64>) -> StepCache {
    let h = cell.hidden();
    let mut gates = preactivation(cell, x, &h_prev);
    for (k, v) in gates.iter_mut().enumerate() {
        *v = if k < 3 * h { sigmoid(*v) } else { v.tanh() };
    }
    let mut c = vec![0.0; h];
    let mut tanh_c = vec![0.0; h];
    let mut hn = vec![0.0; h];
    for j in 0..h {
        c[j] = gates[h + j] * c_prev[j] + gates[j] * gates[3 * h + j];
        tanh_c[j] = c[j].tanh();
        hn[j] = gates[2 * h + j] * tanh_c[j];
    }
    StepCache { h_prev, c_prev, gates, tanh_c, c, h: hn }
}

fn rnn_cache(cell: &CellParams, x: StepIn<'_>, h_prev: Vec<f64>) -> StepCache {
    let mut h = preactivation(cell, x, &h_prev);
    h.iter_mut().for_each(|v| *v = v.tanh());
    StepCache { h_prev, c_prev: Vec::new(), gates: Vec::new(), tanh_c: Vec::new(), c: Vec::new(), h }
}

enum LayerIn<'a> {
    Dense(&'a [Vec<f64>]),
    OneHot(&'a [usize]),
}

impl LayerIn<'_> {
    fn at(&self, t: usize) -> StepIn<'_> {
        match self {
            LayerIn::Dense(cols) => StepIn::Dense(&cols[t]),
            LayerIn::OneHot(ids) => StepIn::OneHot(ids[t]),
        }
    }
}

fn run_direction(kind: CellKind, cell: &CellParams, input: &LayerIn<'_>, len: usize, reverse: bool) -> Vec<StepCache> {
    let h = cell.hidden();
    let mut steps: Vec<Option<StepCache>> = vec![None; len];
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for k in 0..len {
        let t = if reverse { len - 1 - k } else { k };
        let step = match kind {
            CellKind::Rnn => rnn_cache(cell, input.at(t), h_prev),
            CellKind::Lstm => lstm_cache(cell, input.at(t), h_prev, c_prev),
        };
        h_prev = step.h.clone();
        c_prev = step.c.clone();
        steps[t] = Some(step);
    }
    steps.into_iter().map(|s| s.expect("every step visited")).collect()
}

/// Result of a forward pass, kept for backpropagation.
pub struct Forward {
    /// Raw scores: one vector per step (`PerStep`) or a single vector (`LastStep`).
    pub scores: Vec<Vec<f64>>,
    /// `steps[l][d][t]`
    steps: Vec<Vec<Vec<StepCache>>>,
    /// Per-layer, per-step outputs (directions concatenated).
    outputs: Vec<Vec<Vec<f64>>>,
    features: Vec<Vec<f64>>,
}

impl Forward {
    /// Pre-projection vectors of the top layer, one per step.
    pub fn top_outputs(&self) -> &[Vec<f64>] {
        self.outputs.last().expect("at least one layer")
    }

    /// Inputs of the output projection.
    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }
}

/// Runs the stacked (bi)directional recurrence and the output projection.
pub fn forward(config: &SequenceModelConfig, params: &ModelParams, input: &SeqInput) -> Result<Forward> {
    let len = input.len();
    if len == 0 {
        bail!(Argument, "cannot run a sequence model on an empty sequence");
    }
    if input.dim() != config.input_dim {
        bail!(Validation, "input has dimension {} but the model expects {}", input.dim(), config.input_dim);
    }
    if let SeqInput::OneHot { ids, dim } = input {
        if let Some(bad) = ids.iter().find(|&&i| i >= *dim) {
            bail!(Argument, "one-hot index {bad} out of range {dim}");
        }
    }
    let h = config.hidden;
    let mut steps = Vec::with_capacity(config.layers);
    let mut outputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(config.layers);
    for l in 0..config.layers {
        let layer_in = if l == 0 {
            match input {
                SeqInput::Dense(cols) => LayerIn::Dense(cols),
                SeqInput::OneHot { ids, .. } => LayerIn::OneHot(ids),
            }
        } else {
            LayerIn::Dense(&outputs[l - 1])
        };
        let dirs: Vec<Vec<StepCache>> = params.layers[l]
            .iter()
            .enumerate()
            .map(|(d, cell)| run_direction(config.cell, cell, &layer_in, len, d == 1))
            .collect();
        let out: Vec<Vec<f64>> = (0..len)
            .map(|t| {
                let mut v = Vec::with_capacity(dirs.len() * h);
                for dir in &dirs {
                    v.extend_from_slice(&dir[t].h);
                }
                v
            })
            .collect();
        steps.push(dirs);
        outputs.push(out);
    }
    let top = outputs.last().expect("at least one layer");
    let features: Vec<Vec<f64>> = match config.output_mode {
        OutputMode::PerStep => top.clone(),
        OutputMode::LastStep => {
            let mut f = top[len - 1][..h].to_vec();
            if config.bidirectional {
                f.extend_from_slice(&top[0][h..2 * h]);
            }
            vec![f]
        }
    };
    let scores = features
        .iter()
        .map(|f| {
            let mut s = params.out_b.clone();
            params.out_w.mul_vec_acc(f, &mut s);
            s
        })
        .collect();
    Ok(Forward { scores, steps, outputs, features })
}

/// Backpropagates score gradients `dscores` (same layout as
/// [`Forward::scores`]) through the network, accumulating into `grads`.
pub fn backward(
    config: &SequenceModelConfig,
    params: &ModelParams,
    input: &SeqInput,
    fwd: &Forward,
    dscores: &[Vec<f64>],
    grads: &mut ModelParams,
) {
    let len = input.len();
    let h = config.hidden;
    let feat_dim = config.feature_dim();
    let mut d_top = vec![vec![0.0; feat_dim]; len];
    for (k, ds) in dscores.iter().enumerate() {
        grads.out_w.add_outer(ds, &fwd.features[k]);
        axpy(1.0, ds, &mut grads.out_b);
        let mut df = vec![0.0; feat_dim];
        params.out_w.tmul_vec_acc(ds, &mut df);
        match config.output_mode {
            OutputMode::PerStep => axpy(1.0, &df, &mut d_top[k]),
            OutputMode::LastStep => {
                axpy(1.0, &df[..h], &mut d_top[len - 1][..h]);
                if config.bidirectional {
                    axpy(1.0, &df[h..], &mut d_top[0][h..2 * h]);
                }
            }
        }
    }

    let mut d_out = d_top;
    for l in (0..config.layers).rev() {
        let layer_in = if l == 0 {
            match input {
                SeqInput::Dense(cols) => LayerIn::Dense(cols),
                SeqInput::OneHot { ids, .. } => LayerIn::OneHot(ids),
            }
        } else {
            LayerIn::Dense(&fwd.outputs[l - 1])
        };
        let want_dx = l > 0;
        let mut d_in = if want_dx { vec![vec![0.0; config.layer_input_dim(l)]; len] } else { Vec::new() };
        for (d, cell) in params.layers[l].iter().enumerate() {
            let gcell = &mut grads.layers[l][d];
            direction_backward(
                config.cell,
                cell,
                gcell,
                &layer_in,
                &fwd.steps[l][d],
                &d_out,
                d * h,
                d == 1,
                if want_dx { Some(&mut d_in) } else { None },
            );
        }
        d_out = d_in;
    }
}

#[allow(clippy::too_many_arguments)]
fn direction_backward(
    kind: CellKind,
    cell: &CellParams,
    gcell: &mut CellParams,
    input: &LayerIn<'_>,
    steps: &[StepCache],
    d_out: &[Vec<f64>],
    offset: usize,
    reverse: bool,
    mut d_in: Option<&mut Vec<Vec<f64>>>,
) {
    let len = steps.len();
    let h = cell.hidden();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; kind.gates() * h];
    for k in 0..len {
        // visit steps in the reverse of processing order
        let t = if reverse { k } else { len - 1 - k };
        let st = &steps[t];
        let mut dh = d_out[t][offset..offset + h].to_vec();
        axpy(1.0, &dh_next, &mut dh);
        match kind {
            CellKind::Rnn => {
                for j in 0..h {
                    dz[j] = dh[j] * (1.0 - st.h[j] * st.h[j]);
                }
            }
            CellKind::Lstm => {
                let g = &st.gates;
                for j in 0..h {
                    let (i, f, o, cand) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let dc = dc_next[j] + dh[j] * o * (1.0 - st.tanh_c[j] * st.tanh_c[j]);
                    dz[j] = dc * cand * i * (1.0 - i);
                    dz[h + j] = dc * st.c_prev[j] * f * (1.0 - f);
                    dz[2 * h + j] = dh[j] * st.tanh_c[j] * o * (1.0 - o);
                    dz[3 * h + j] = dc * i * (1.0 - cand * cand);
                    dc_next[j] = dc * f;
                }
            }
        }
        axpy(1.0, &dz, &mut gcell.b);
        match input.at(t) {
            StepIn::Dense(x) => gcell.w.add_outer(&dz, x),
            StepIn::OneHot(id) => gcell.w.add_to_column(id, &dz),
        }
        gcell.u.add_outer(&dz, &st.h_prev);
        if let Some(d_in) = d_in.as_deref_mut() {
            cell.w.tmul_vec_acc(&dz, &mut d_in[t]);
        }
        dh_next.iter_mut().for_each(|x| *x = 0.0);
        cell.u.tmul_vec_acc(&dz, &mut dh_next);
    }
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-ln p[gold]`, with the probability floored at 1e-12.
pub fn cross_entropy(probs: &[f64], gold: usize) -> f64 {
    -probs[gold].max(1e-12).ln()
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_targets(config: &SequenceModelConfig, len: usize, targets: &[usize]) -> Result<()> {
    let want = match config.output_mode {
        OutputMode::PerStep => len,
        OutputMode::LastStep => 1,
    };
    if targets.len() != want {
        bail!(Validation, "expected {want} targets, got {}", targets.len());
    }
    if let Some(bad) = targets.iter().find(|&&t| t >= config.output_dim) {
        bail!(Validation, "target {bad} out of range {}", config.output_dim);
    }
    Ok(())
}

/// Softmax cross-entropy loss, summed over steps in per-step mode.
pub fn loss(config: &SequenceModelConfig, params: &ModelParams, input: &SeqInput, targets: &[usize]) -> Result<f64> {
    check_targets(config, input.len(), targets)?;
    let fwd = forward(config, params, input)?;
    Ok(fwd.scores.iter().zip(targets).map(|(s, &t)| cross_entropy(&softmax(s), t)).sum())
}

/// Loss and its exact gradient, accumulated into `grads`.
pub fn loss_and_grad(
    config: &SequenceModelConfig,
    params: &ModelParams,
    input: &SeqInput,
    targets: &[usize],
    grads: &mut ModelParams,
) -> Result<f64> {
    check_targets(config, input.len(), targets)?;
    let fwd = forward(config, params, input)?;
    let mut total = 0.0;
    let dscores: Vec<Vec<f64>> = fwd
        .scores
        .iter()
        .zip(targets)
        .map(|(s, &t)| {
            let mut p = softmax(s);
            total += cross_entropy(&p, t);
            p[t] -= 1.0;
            p
        })
        .collect();
    backward(config, params, input, &fwd, &dscores, grads);
    Ok(total)
}

/// Configuration plus trained weights.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceModel {
    pub config: SequenceModelConfig,
    pub params: ModelParams,
}

impl SequenceModel {
    pub fn new(config: SequenceModelConfig) -> Result<SequenceModel> {
        config.validate()?;
        Ok(SequenceModel { config, params: ModelParams::init(&config) })
    }

    /// Raw output scores.
    pub fn scores(&self, input: &SeqInput) -> Result<Vec<Vec<f64>>> {
        Ok(forward(&self.config, &self.params, input)?.scores)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(cell: CellKind, layers: usize, hidden: usize, bi: bool, mode: OutputMode) -> SequenceModelConfig {
        SequenceModelConfig { cell, layers, hidden, bidirectional: bi, input_dim: 3, output_dim: 5, output_mode: mode, seed: 11 }
    }

    fn dense(t: usize, dim: usize) -> SeqInput {
        SeqInput::Dense((0..t).map(|i| (0..dim).map(|j| ((i * dim + j) as f64 * 0.37).sin()).collect()).collect())
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let c = cfg(CellKind::Lstm, 2, 6, true, OutputMode::PerStep);
        let a = ModelParams::init(&c);
        assert_eq!(a, ModelParams::init(&c));
        for dirs in &a.layers {
            for cell in dirs {
                assert!(cell.b[6..12].iter().all(|&b| b == 1.0));
                assert!(cell.b[..6].iter().chain(&cell.b[12..]).all(|&b| b == 0.0));
                let s = glorot(cell.w.rows, cell.w.cols);
                assert!(cell.w.data.iter().all(|x| x.abs() <= s));
                let s = glorot(cell.u.rows, cell.u.cols);
                assert!(cell.u.data.iter().all(|x| x.abs() <= s));
            }
        }
        assert!(a.check_shapes(&c).is_ok());
        assert!(a.check_shapes(&cfg(CellKind::Lstm, 1, 6, true, OutputMode::PerStep)).is_err());
    }

    #[test]
    fn rnn_step_examples() {
        let zero = CellParams { w: Matrix::zeros(2, 2), u: Matrix::zeros(2, 2), b: vec![0.0; 2] };
        assert_eq!(rnn_step(&[1.0, -3.0], &[0.5, 0.5], &zero).unwrap(), vec![0.0, 0.0]);
        let one = CellParams { w: Matrix::identity(1), u: Matrix::zeros(1, 1), b: vec![0.0] };
        let h = rnn_step(&[0.5], &[0.0], &one).unwrap();
        assert!((h[0] - 0.46211715726000974).abs() < 1e-12);
        assert!(matches!(rnn_step(&[0.5, 1.0], &[0.0], &one), Err(Error::Validation(_))));
    }

    #[test]
    fn lstm_step_examples() {
        let h = 3;
        let mut b = vec![0.0; 4 * h];
        b[h..2 * h].iter_mut().for_each(|x| *x = 1.0);
        let cell = CellParams { w: Matrix::zeros(4 * h, 2), u: Matrix::zeros(4 * h, h), b };
        let c_prev = [0.4, -2.0, 1.5];
        let (hn, c) = lstm_step(&[0.3, 0.1], &[0.2, 0.2, 0.2], &c_prev, &cell).unwrap();
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        for j in 0..h {
            // i = o = 0.5, g = 0, f = sigmoid(1)
            assert!((c[j] - s1 * c_prev[j]).abs() < 1e-15);
            assert!((hn[j] - 0.5 * c[j].tanh()).abs() < 1e-15);
            assert!(hn[j].abs() < 1.0);
        }
        let zero = CellParams { w: Matrix::zeros(4 * h, 2), u: Matrix::zeros(4 * h, h), b: vec![0.0; 4 * h] };
        let (hn, _) = lstm_step(&[1.0, 1.0], &[0.0; 3], &[0.0; 3], &zero).unwrap();
        assert_eq!(hn, vec![0.0; 3]);
        assert!(lstm_step(&[1.0], &[0.0; 3], &[0.0; 3], &zero).is_err());
    }

    #[test]
    fn forward_shapes() {
        let c = cfg(CellKind::Lstm, 1, 4, true, OutputMode::PerStep);
        let p = ModelParams::init(&c);
        let f = forward(&c, &p, &dense(7, 3)).unwrap();
        assert!(f.top_outputs().iter().all(|v| v.len() == 8));
        assert_eq!(f.scores.len(), 7);
        let c = cfg(CellKind::Rnn, 2, 4, true, OutputMode::LastStep);
        let f = forward(&c, &ModelParams::init(&c), &dense(5, 3)).unwrap();
        assert_eq!(f.scores.len(), 1);
        assert_eq!(f.scores[0].len(), 5);
        assert_eq!(f.features()[0].len(), 8);
        assert!(matches!(forward(&c, &ModelParams::init(&c), &SeqInput::Dense(vec![])), Err(Error::Argument(_))));
    }

    #[test]
    fn one_hot_matches_dense() {
        let mut c = cfg(CellKind::Lstm, 2, 4, true, OutputMode::PerStep);
        c.input_dim = 6;
        let p = ModelParams::init(&c);
        let oh = SeqInput::OneHot { ids: vec![0, 5, 2, 2], dim: 6 };
        let a = forward(&c, &p, &oh).unwrap().scores;
        let b = forward(&c, &p, &SeqInput::Dense(oh.to_dense())).unwrap().scores;
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
        let targets = [1, 0, 4, 3];
        let mut ga = p.zeros_like();
        let mut gb = p.zeros_like();
        loss_and_grad(&c, &p, &oh, &targets, &mut ga).unwrap();
        loss_and_grad(&c, &p, &SeqInput::Dense(oh.to_dense()), &targets, &mut gb).unwrap();
        for ((_, _, x), (_, _, y)) in ga.tensors().iter().zip(gb.tensors().iter()) {
            for (a, b) in x.iter().zip(y.iter()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softmax_and_loss() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let a = softmax(&[1.0, -2.0, 0.5]);
        let b = softmax(&[101.0, 98.0, 100.5]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((cross_entropy(&[0.5, 0.5], 0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((cross_entropy(&[1.0, 0.0], 1) - 27.631021115928547).abs() < 1e-9);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[2.1, 0.3, -1.0]), 0);
        assert_eq!(argmax(&[1.0, 1.0, 0.0]), 0);
        assert_eq!(argmax(&[0.0, 3.0, 3.0]), 1);
    }

    #[test]
    fn architecture_names() {
        for name in ["RNN-1x500", "LSTM-1x500", "BLSTM-1x500", "DLSTM-2x500", "DBLSTM-2x250", "DBLSTM-2x500"] {
            let a: Architecture = name.parse().unwrap();
            assert_eq!(a.to_string(), name);
        }
        let a: Architecture = "dblstm 2x250".parse().unwrap();
        assert_eq!(a, Architecture::new(CellKind::Lstm, 2, 250, true));
        assert!("GRU-1x10".parse::<Architecture>().is_err());
        assert!("LSTM-0x10".parse::<Architecture>().is_err());
    }

    #[test]
    fn saturated_model_has_tiny_gradients() {
        let c = cfg(CellKind::Rnn, 1, 2, false, OutputMode::LastStep);
        let mut p = ModelParams::init(&c);
        p.out_w = Matrix::zeros(5, 2);
        p.out_b = vec![60.0, 0.0, 0.0, 0.0, 0.0];
        let mut g = p.zeros_like();
        let l = loss_and_grad(&c, &p, &dense(3, 3), &[0], &mut g).unwrap();
        assert!(l < 1e-20);
        assert!(g.global_norm() < 1e-20);
    }
}
