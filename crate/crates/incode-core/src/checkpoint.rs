//! Binary network checkpoints.
//!
//! Layout: magic `INC1`, a little-endian u32 header `(M, N, D, width)`, f64
//! weight/bias arrays in layer order, the 4 raw activation parameters, then
//! appended sections with their own dims headers for the harmonizer and the
//! extractor. A JSON sidecar at `<path>.json` carries the configuration
//! (omega values, conditioning mode, MFCC settings).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::conditioning::{
    Conv1dLayer, ConvSignalExtractor, HarmonizerLayer, HarmonizerNetwork, LatentExtractor,
    LayerNormParams, MfccConfig,
};
use crate::mat::Mat;
use crate::nn::{ActivationParams, ComposerNetwork, DenseLayer};
use crate::training::{Conditioning, ModelBundle};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"INC1";

const EXTRACTOR_NONE: u32 = 0;
const EXTRACTOR_CONV: u32 = 1;
const EXTRACTOR_MFCC: u32 = 2;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MfccMeta {
    pub sample_rate: u32,
    pub output_dim: usize,
    #[serde(flatten)]
    pub config: MfccConfig,
}

/// Sidecar configuration stored next to the binary payload.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct CheckpointMeta {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    pub first_omega0: f64,
    pub hidden_omega0: f64,
    /// "learned" or "frozen".
    pub mode: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mfcc: Option<MfccMeta>,
}

fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        if self.pos + 4 > self.bytes.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let v = u32::from_le_bytes(self.bytes[self.pos..self.pos + 4].try_into().unwrap());
        self.pos += 4;
        Ok(v)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if self.pos + 8 * n > self.bytes.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let out = self.bytes[self.pos..self.pos + 8 * n]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        self.pos += 8 * n;
        Ok(out)
    }
}

/// Writes the checkpoint and its JSON sidecar. `current_raw` is the raw
/// activation quadruple in effect when the model was saved.
pub fn save_checkpoint(path: &Path, bundle: &ModelBundle, current_raw: [f64; 4]) -> Result<()> {
    let composer = &bundle.composer;
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MAGIC);
    w.u32(composer.input_dim() as u32);
    w.u32(composer.output_dim() as u32);
    w.u32(composer.hidden_count() as u32);
    w.u32(composer.width() as u32);
    for layer in composer.layers() {
        w.f64s(layer.weights.as_slice());
        w.f64s(&layer.bias);
    }
    w.f64s(&current_raw);

    let mut mfcc_meta = None;
    match &bundle.conditioning {
        Conditioning::Frozen(_) => {
            w.u32(0); // no harmonizer layers
            w.u32(EXTRACTOR_NONE);
        }
        Conditioning::Learned {
            harmonizer,
            extractor,
        } => {
            w.u32(harmonizer.layers().len() as u32);
            let mut fan_in = harmonizer.input_dim();
            for layer in harmonizer.layers() {
                w.u32(layer.dense.fan_out() as u32);
                w.u32(fan_in as u32);
                w.u32(if layer.norm.is_some() { 1 } else { 0 });
                w.f64s(layer.dense.weights.as_slice());
                w.f64s(&layer.dense.bias);
                if let Some(norm) = &layer.norm {
                    w.f64s(&norm.gamma);
                    w.f64s(&norm.beta);
                }
                fan_in = layer.dense.fan_out();
            }
            match extractor {
                LatentExtractor::ConvSignal(conv) => {
                    w.u32(EXTRACTOR_CONV);
                    for layer in [&conv.conv1, &conv.conv2, &conv.conv3] {
                        w.u32(layer.in_ch as u32);
                        w.u32(layer.out_ch as u32);
                        w.u32(layer.kernel as u32);
                        w.f64s(&layer.weights);
                        w.f64s(&layer.bias);
                    }
                }
                LatentExtractor::Mfcc {
                    config,
                    sample_rate,
                    output_dim,
                } => {
                    w.u32(EXTRACTOR_MFCC);
                    mfcc_meta = Some(MfccMeta {
                        sample_rate: *sample_rate,
                        output_dim: *output_dim,
                        config: config.clone(),
                    });
                }
            }
        }
    }

    std::fs::File::create(path)?.write_all(&w.buf)?;
    let meta = CheckpointMeta {
        input_dim: composer.input_dim(),
        output_dim: composer.output_dim(),
        hidden_layers: composer.hidden_count(),
        width: composer.width(),
        first_omega0: composer.first_omega0(),
        hidden_omega0: composer.hidden_omega0(),
        mode: if bundle.is_frozen() {
            "frozen".into()
        } else {
            "learned".into()
        },
        mfcc: mfcc_meta,
    };
    std::fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&meta).expect("meta serializes"),
    )?;
    Ok(())
}

/// Loads the binary payload plus its sidecar, rebuilding the bundle and the
/// raw quadruple stored at save time.
pub fn load_checkpoint(path: &Path) -> Result<(ModelBundle, [f64; 4], CheckpointMeta)> {
    let meta: CheckpointMeta = serde_json::from_str(
        &std::fs::read_to_string(sidecar_path(path))
            .map_err(|e| Error::Format(format!("missing checkpoint sidecar: {e}")))?,
    )
    .map_err(|e| Error::Format(format!("bad checkpoint sidecar: {e}")))?;
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    if bytes.len() < 4 || &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let mut r = Reader {
        bytes: &bytes,
        pos: 4,
    };
    let m = r.u32()? as usize;
    let n = r.u32()? as usize;
    let depth = r.u32()? as usize;
    let width = r.u32()? as usize;
    let mut layers = Vec::with_capacity(depth + 1);
    let mut fan_in = m;
    for l in 0..=depth {
        let fan_out = if l == depth { n } else { width };
        let weights = Mat::from_vec(fan_out, fan_in, r.f64s(fan_out * fan_in)?);
        let bias = r.f64s(fan_out)?;
        layers.push(DenseLayer { weights, bias });
        fan_in = fan_out;
    }
    let raw_vec = r.f64s(4)?;
    let raw = [raw_vec[0], raw_vec[1], raw_vec[2], raw_vec[3]];
    let composer = ComposerNetwork::from_layers(layers, meta.first_omega0, meta.hidden_omega0)?;

    let h_layers = r.u32()? as usize;
    let conditioning = if h_layers == 0 {
        let tag = r.u32()?;
        if tag != EXTRACTOR_NONE {
            return Err(Error::Format("frozen checkpoint with extractor".into()));
        }
        Conditioning::Frozen(ActivationParams::from_raw(raw))
    } else {
        let mut h = Vec::with_capacity(h_layers);
        let mut h_input = None;
        for _ in 0..h_layers {
            let fan_out = r.u32()? as usize;
            let fan_in = r.u32()? as usize;
            let has_norm = r.u32()? == 1;
            if h_input.is_none() {
                h_input = Some(fan_in);
            }
            let weights = Mat::from_vec(fan_out, fan_in, r.f64s(fan_out * fan_in)?);
            let bias = r.f64s(fan_out)?;
            let norm = if has_norm {
                Some(LayerNormParams {
                    gamma: r.f64s(fan_out)?,
                    beta: r.f64s(fan_out)?,
                })
            } else {
                None
            };
            h.push(HarmonizerLayer {
                dense: DenseLayer { weights, bias },
                norm,
            });
        }
        let harmonizer = HarmonizerNetwork::from_layers(h, h_input.unwrap());
        let extractor = match r.u32()? {
            EXTRACTOR_CONV => {
                let mut convs = Vec::with_capacity(3);
                for _ in 0..3 {
                    let in_ch = r.u32()? as usize;
                    let out_ch = r.u32()? as usize;
                    let kernel = r.u32()? as usize;
                    let mut layer = Conv1dLayer::zeros(in_ch, out_ch, kernel);
                    layer.weights = r.f64s(out_ch * in_ch * kernel)?;
                    layer.bias = r.f64s(out_ch)?;
                    convs.push(layer);
                }
                let conv3 = convs.pop().unwrap();
                let conv2 = convs.pop().unwrap();
                let conv1 = convs.pop().unwrap();
                LatentExtractor::ConvSignal(ConvSignalExtractor {
                    conv1,
                    conv2,
                    conv3,
                })
            }
            EXTRACTOR_MFCC => {
                let mfcc = meta.mfcc.clone().ok_or_else(|| {
                    Error::Format("mfcc checkpoint missing sidecar config".into())
                })?;
                LatentExtractor::Mfcc {
                    config: mfcc.config,
                    sample_rate: mfcc.sample_rate,
                    output_dim: mfcc.output_dim,
                }
            }
            other => {
                return Err(Error::Format(format!("unknown extractor tag {other}")));
            }
        };
        Conditioning::Learned {
            harmonizer,
            extractor,
        }
    };

    Ok((ModelBundle::new(composer, conditioning)?, raw, meta))
}
