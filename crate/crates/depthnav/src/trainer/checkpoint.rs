//! Checkpoint persistence: a versioned binary parameter file plus a JSON
//! metadata sidecar.
//!
//! Binary layout (little-endian): magic, format version, variant/preset
//! tags, input length, per-net layer specs, then f32 tensors in
//! declaration order — online nets, target nets, Adam step count, and
//! Adam first/second moments for the online nets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentConfig, NetworkPreset, QNetwork, Variant};
use crate::neuro::{AdamHyper, AdamState, LayerSpec, Net};
use crate::trainer::stats::write_atomic;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"DNAVCKP1";
const CKPT_FORMAT: u32 = 1;

/// Training metadata stored in the `.meta.json` sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: u32,
    pub variant: Variant,
    pub preset: NetworkPreset,
    pub input_len: usize,
    pub agent: AgentConfig,
    pub seed: u64,
    /// Episodes completed when the checkpoint was written.
    pub episode: u32,
    pub global_step: u64,
    pub train_steps: u64,
    pub syncs: u64,
    pub epsilon: f64,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn variant_tag(v: Variant) -> u8 {
    match v {
        Variant::Dqn => 0,
        Variant::Ddqn => 1,
        Variant::D3qn => 2,
    }
}

fn variant_from_tag(t: u8) -> Result<Variant> {
    match t {
        0 => Ok(Variant::Dqn),
        1 => Ok(Variant::Ddqn),
        2 => Ok(Variant::D3qn),
        _ => Err(Error::Checkpoint(format!("unknown variant tag {t}"))),
    }
}

fn preset_tag(p: NetworkPreset) -> u8 {
    match p {
        NetworkPreset::Linear => 0,
        NetworkPreset::Dense => 1,
        NetworkPreset::Conv => 2,
    }
}

fn preset_from_tag(t: u8) -> Result<NetworkPreset> {
    match t {
        0 => Ok(NetworkPreset::Linear),
        1 => Ok(NetworkPreset::Dense),
        2 => Ok(NetworkPreset::Conv),
        _ => Err(Error::Checkpoint(format!("unknown preset tag {t}"))),
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f32s(&mut self, vs: &[f32]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn specs(&mut self, specs: &[LayerSpec]) {
        self.u32(specs.len() as u32);
        for s in specs {
            match *s {
                LayerSpec::Conv1d {
                    filter_len,
                    in_ch,
                    out_ch,
                    stride,
                } => {
                    self.u8(0);
                    for d in [filter_len, in_ch, out_ch, stride] {
                        self.u32(d as u32);
                    }
                }
                LayerSpec::Dense { inputs, outputs } => {
                    self.u8(1);
                    for d in [inputs, outputs, 0, 0] {
                        self.u32(d as u32);
                    }
                }
                LayerSpec::Relu => {
                    self.u8(2);
                    for _ in 0..4 {
                        self.u32(0);
                    }
                }
            }
        }
    }
    fn net_params(&mut self, net: &Net<f32>) {
        for layer in net.layers() {
            self.f32s(&layer.w);
            self.f32s(&layer.b);
        }
    }
    fn adam_tensors(&mut self, st: &AdamState<f32>) {
        for (m, v) in st.m.iter().zip(&st.v) {
            self.f32s(&m.w);
            self.f32s(&m.b);
            self.f32s(&v.w);
            self.f32s(&v.b);
        }
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Checkpoint(format!(
                "truncated checkpoint: needed {n} bytes at offset {}, file has {}",
                self.pos,
                self.data.len()
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
    fn specs(&mut self) -> Result<Vec<LayerSpec>> {
        let n = self.u32()? as usize;
        if n > 1024 {
            return Err(Error::Checkpoint(format!("implausible layer count {n}")));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let kind = self.u8()?;
            let d: Vec<u32> = (0..4).map(|_| self.u32()).collect::<Result<_>>()?;
            out.push(match kind {
                0 => LayerSpec::Conv1d {
                    filter_len: d[0] as usize,
                    in_ch: d[1] as usize,
                    out_ch: d[2] as usize,
                    stride: d[3] as usize,
                },
                1 => LayerSpec::Dense {
                    inputs: d[0] as usize,
                    outputs: d[1] as usize,
                },
                2 => LayerSpec::Relu,
                k => return Err(Error::Checkpoint(format!("unknown layer kind {k}"))),
            });
        }
        Ok(out)
    }
    fn net_params(&mut self, net: &mut Net<f32>) -> Result<()> {
        let shapes: Vec<(usize, usize)> = net
            .layers()
            .iter()
            .map(|l| (l.w.len(), l.b.len()))
            .collect();
        for (i, (nw, nb)) in shapes.into_iter().enumerate() {
            let w = self.f32s(nw)?;
            let b = self.f32s(nb)?;
            net.layers_mut()[i].w = w;
            net.layers_mut()[i].b = b;
        }
        net.bump_version();
        Ok(())
    }
    fn adam_tensors(&mut self, st: &mut AdamState<f32>) -> Result<()> {
        for i in 0..st.m.len() {
            let (nw, nb) = (st.m[i].w.len(), st.m[i].b.len());
            st.m[i].w = self.f32s(nw)?;
            st.m[i].b = self.f32s(nb)?;
            st.v[i].w = self.f32s(nw)?;
            st.v[i].b = self.f32s(nb)?;
        }
        Ok(())
    }
}

fn nets_of(q: &QNetwork) -> Vec<&Net<f32>> {
    let mut nets = vec![&q.trunk];
    nets.extend(q.heads.iter());
    nets
}

/// Serialize the agent's networks, optimizer, and counters.
pub fn save_checkpoint(agent: &Agent, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(CKPT_FORMAT);
    w.u8(variant_tag(agent.variant()));
    w.u8(preset_tag(agent.preset()));
    w.u8(0);
    w.u8(0);
    w.u32(agent.input_len() as u32);

    let online = nets_of(agent.online());
    w.u32(online.len() as u32);
    for net in &online {
        w.specs(net.specs());
    }
    for net in &online {
        w.net_params(net);
    }
    for net in nets_of(agent.target()) {
        w.net_params(net);
    }
    w.u64(agent.adam().trunk.t);
    w.adam_tensors(&agent.adam().trunk);
    for st in &agent.adam().heads {
        w.adam_tensors(st);
    }

    write_atomic(path, &w.buf)?;

    let meta = CheckpointMeta {
        format: CKPT_FORMAT,
        variant: agent.variant(),
        preset: agent.preset(),
        input_len: agent.input_len(),
        agent: agent.cfg,
        seed: 0,
        episode: 0,
        global_step: agent.global_step,
        train_steps: agent.train_steps,
        syncs: agent.syncs,
        epsilon: agent.epsilon(),
    };
    write_meta(path, &meta)
}

/// Overwrite the sidecar with run-level fields filled in.
pub fn write_meta(path: &Path, meta: &CheckpointMeta) -> Result<()> {
    let text = serde_json::to_string_pretty(meta)
        .map_err(|e| Error::Checkpoint(format!("meta encode: {e}")))?;
    write_atomic(sidecar_path(path), text.as_bytes())
}

pub fn read_meta(path: &Path) -> Result<CheckpointMeta> {
    let sidecar = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar)
        .map_err(|e| Error::Checkpoint(format!("missing sidecar {}: {e}", sidecar.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("meta parse: {e}")))
}

/// Restore an agent from a checkpoint. Network shapes are rebuilt from the
/// file header and cross-checked against the metadata sidecar.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Agent, CheckpointMeta)> {
    let path = path.as_ref();
    let meta = read_meta(path)?;
    let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        data: &data,
        pos: 0,
    };

    let magic = r.take(8)?;
    if magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let format = r.u32()?;
    if format != CKPT_FORMAT {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint format {format}"
        )));
    }
    let variant = variant_from_tag(r.u8()?)?;
    let preset = preset_from_tag(r.u8()?)?;
    r.u8()?;
    r.u8()?;
    let input_len = r.u32()? as usize;

    if variant != meta.variant || preset != meta.preset || input_len != meta.input_len {
        return Err(Error::Checkpoint(
            "sidecar metadata disagrees with binary header".into(),
        ));
    }

    // Rebuild zeroed networks from the recorded preset and check that the
    // stored specs match what the preset implies.
    let mut online = QNetwork::zeros(preset, variant, input_len)
        .map_err(|e| Error::Checkpoint(format!("cannot rebuild network: {e}")))?;
    let n_nets = r.u32()? as usize;
    let expected = 1 + online.heads.len();
    if n_nets != expected {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {n_nets} nets, preset implies {expected}"
        )));
    }
    {
        let nets = nets_of(&online);
        for net in nets {
            let specs = r.specs()?;
            if specs != net.specs() {
                return Err(Error::Checkpoint(
                    "layer specs in checkpoint do not match the preset".into(),
                ));
            }
        }
    }
    r.net_params(&mut online.trunk)?;
    for h in online.heads.iter_mut() {
        r.net_params(h)?;
    }
    let mut target = QNetwork::zeros(preset, variant, input_len)
        .map_err(|e| Error::Checkpoint(format!("cannot rebuild network: {e}")))?;
    r.net_params(&mut target.trunk)?;
    for h in target.heads.iter_mut() {
        r.net_params(h)?;
    }

    let t = r.u64()?;
    let hyper = AdamHyper::with_alpha(meta.agent.learning_rate);
    let mut adam = online.adam_state(hyper);
    adam.trunk.t = t;
    r.adam_tensors(&mut adam.trunk)?;
    for st in adam.heads.iter_mut() {
        st.t = t;
        r.adam_tensors(st)?;
    }
    if r.pos != data.len() {
        return Err(Error::Checkpoint(format!(
            "trailing bytes: read {} of {}",
            r.pos,
            data.len()
        )));
    }

    let agent = Agent::from_parts(
        meta.agent,
        preset,
        input_len,
        online,
        target,
        adam,
        meta.global_step,
        meta.train_steps,
        meta.syncs,
        meta.seed.wrapping_add(meta.episode as u64),
    );
    Ok((agent, meta))
}

/// Load and verify compatibility with an expected network configuration
/// (resume and eval paths).
pub fn load_checkpoint_for(
    path: impl AsRef<Path>,
    preset: NetworkPreset,
    input_len: usize,
) -> Result<(Agent, CheckpointMeta)> {
    let (agent, meta) = load_checkpoint(path)?;
    if meta.preset != preset || meta.input_len != input_len {
        return Err(Error::Checkpoint(format!(
            "shape mismatch: checkpoint is {}/{} inputs, run expects {}/{} inputs",
            meta.preset.as_str(),
            meta.input_len,
            preset.as_str(),
            input_len
        )));
    }
    Ok((agent, meta))
}
