//! Encoders, classifier head and the wiring of each training variant.

use alloc::format;
use alloc::vec::Vec;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::mpnn::MpnnParams;
use crate::params::{glorot_uniform, Bindings, ParamId, ParamStore};
use crate::rng;
use crate::rwkernel::KernelParams;
use crate::tensor::Tensor;

/// Which encoders a model holds and how they are trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Message passing + kernel encoder with consistency.
    Tgnn,
    /// Message passing encoder, supervised loss only.
    MpSup,
    /// Kernel encoder, supervised loss only.
    GkSup,
    /// Two differently initialized message passing encoders with consistency.
    MpEnsemble,
    /// Two differently initialized kernel encoders with consistency.
    GkEnsemble,
    /// Full model with identity augmentations.
    NoAug,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    Mpnn,
    Kernel,
}

impl Variant {
    pub const ALL: [Variant; 6] =
        [Variant::Tgnn, Variant::MpSup, Variant::GkSup, Variant::MpEnsemble, Variant::GkEnsemble, Variant::NoAug];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Tgnn => "tgnn",
            Variant::MpSup => "mp-sup",
            Variant::GkSup => "gk-sup",
            Variant::MpEnsemble => "mp-ensemble",
            Variant::GkEnsemble => "gk-ensemble",
            Variant::NoAug => "no-aug",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown variant `{name}`")))
    }

    /// Encoder feeding the classifier, and the optional partner encoder.
    pub fn encoders(self) -> (EncoderKind, Option<EncoderKind>) {
        use EncoderKind::*;
        match self {
            Variant::Tgnn | Variant::NoAug => (Mpnn, Some(Kernel)),
            Variant::MpSup => (Mpnn, None),
            Variant::GkSup => (Kernel, None),
            Variant::MpEnsemble => (Mpnn, Some(Mpnn)),
            Variant::GkEnsemble => (Kernel, Some(Kernel)),
        }
    }

    pub fn augments(self) -> bool {
        self != Variant::NoAug
    }

    pub fn uses_consistency(self) -> bool {
        self.encoders().1.is_some()
    }
}

impl core::fmt::Display for Variant {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Encoder {
    Mpnn(MpnnParams),
    Kernel(KernelParams),
}

impl Encoder {
    pub fn kind(&self) -> EncoderKind {
        match self {
            Encoder::Mpnn(_) => EncoderKind::Mpnn,
            Encoder::Kernel(_) => EncoderKind::Kernel,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Encoder::Mpnn(p) => p.hidden_dim,
            Encoder::Kernel(p) => p.output_dim,
        }
    }

    /// `B x d` embeddings, one row per graph.
    pub fn forward_batch(&self, tape: &mut Tape, b: &Bindings, graphs: &[&Graph]) -> Result<Var> {
        match self {
            Encoder::Mpnn(p) => {
                let rows = graphs
                    .iter()
                    .map(|g| p.forward(tape, b, g, None).map(|o| o.embedding))
                    .collect::<Result<Vec<_>>>()?;
                tape.concat_rows(&rows)
            }
            Encoder::Kernel(p) => p.forward_batch(tape, b, graphs),
        }
    }
}

/// Two-layer perceptron `d -> d -> C`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifierParams {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
    pub num_classes: usize,
}

impl ClassifierParams {
    pub fn init<R: rand::Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        num_classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!("classifier needs >= 2 classes, got {num_classes}")));
        }
        Ok(Self {
            w1: store.add(format!("{prefix}.w1"), glorot_uniform(rng, input_dim, input_dim)),
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(1, input_dim)),
            w2: store.add(format!("{prefix}.w2"), glorot_uniform(rng, input_dim, num_classes)),
            b2: store.add(format!("{prefix}.b2"), Tensor::zeros(1, num_classes)),
            num_classes,
        })
    }

    pub fn forward(&self, tape: &mut Tape, b: &Bindings, z: Var) -> Result<Var> {
        let h = tape.matmul(z, b[self.w1])?;
        let h = tape.add_row(h, b[self.b1])?;
        let h = tape.relu(h)?;
        let o = tape.matmul(h, b[self.w2])?;
        tape.add_row(o, b[self.b2])
    }
}

/// Architecture hyperparameters. Together with the seed they determine the
/// initial parameters exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub variant: Variant,
    pub input_dim: usize,
    pub num_classes: usize,
    /// Embedding width `d` shared by every encoder.
    pub hidden_dim: usize,
    /// Message passing layers `K`.
    pub layers: usize,
    /// Number of hidden graphs `N`.
    pub hidden_graphs: usize,
    pub hidden_size: usize,
    /// Maximum walk length `P`.
    pub walk_length: usize,
    pub kernel_log1p: bool,
}

impl ModelSpec {
    pub fn new(variant: Variant, input_dim: usize, num_classes: usize) -> Self {
        Self {
            variant,
            input_dim,
            num_classes,
            hidden_dim: 64,
            layers: 3,
            hidden_graphs: 16,
            hidden_size: 5,
            walk_length: 3,
            kernel_log1p: false,
        }
    }
}

const PRIMARY_STREAM: u64 = 1;
const SECONDARY_STREAM: u64 = 2;
const CLASSIFIER_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub spec: ModelSpec,
    pub store: ParamStore,
    pub primary: Encoder,
    pub secondary: Option<Encoder>,
    pub classifier: ClassifierParams,
}

impl Model {
    /// Each part draws its initial values from its own stream, so the primary
    /// encoder and classifier are identical across variants sharing them.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let (primary_kind, secondary_kind) = spec.variant.encoders();
        let primary = build_encoder(&spec, &mut store, "primary", primary_kind, seed, PRIMARY_STREAM)?;
        let secondary = secondary_kind
            .map(|k| build_encoder(&spec, &mut store, "secondary", k, seed, SECONDARY_STREAM))
            .transpose()?;
        let mut r = rng::stream(&[seed, CLASSIFIER_STREAM]);
        let classifier = ClassifierParams::init(&mut store, "classifier", spec.hidden_dim, spec.num_classes, &mut r)?;
        Ok(Self { spec, store, primary, secondary, classifier })
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    pub fn num_encoders(&self) -> usize {
        1 + usize::from(self.secondary.is_some())
    }

    /// First kernel encoder, if any.
    pub fn kernel(&self) -> Option<&KernelParams> {
        [Some(&self.primary), self.secondary.as_ref()].into_iter().flatten().find_map(|e| match e {
            Encoder::Kernel(k) => Some(k),
            Encoder::Mpnn(_) => None,
        })
    }

    /// Parameter ids belonging to the secondary encoder.
    pub fn secondary_params(&self) -> Vec<ParamId> {
        self.store.iter().filter(|(_, p)| p.name.starts_with("secondary.")).map(|(id, _)| id).collect()
    }

    /// Classifier logits for clean graphs (`B x C`).
    pub fn logits(&self, tape: &mut Tape, b: &Bindings, graphs: &[&Graph]) -> Result<Var> {
        let z = self.primary.forward_batch(tape, b, graphs)?;
        self.classifier.forward(tape, b, z)
    }

    /// `argmax` of the classifier output, lowest index on ties.
    pub fn predict(&self, graphs: &[&Graph]) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let b = self.store.bind(&mut tape);
        let logits = self.logits(&mut tape, &b, graphs)?;
        let out = tape.value(logits);
        Ok((0..out.rows())
            .map(|r| {
                let row = out.row_slice(r);
                let mut best = 0;
                for (c, &x) in row.iter().enumerate() {
                    if x > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }
}

fn build_encoder(
    spec: &ModelSpec,
    store: &mut ParamStore,
    prefix: &str,
    kind: EncoderKind,
    seed: u64,
    stream: u64,
) -> Result<Encoder> {
    let mut r = rng::stream(&[seed, stream]);
    Ok(match kind {
        EncoderKind::Mpnn => {
            Encoder::Mpnn(MpnnParams::init(store, prefix, spec.input_dim, spec.hidden_dim, spec.layers, &mut r)?)
        }
        EncoderKind::Kernel => Encoder::Kernel(KernelParams::init(
            store,
            prefix,
            spec.hidden_graphs,
            spec.hidden_size,
            spec.walk_length,
            spec.hidden_dim,
            spec.kernel_log1p,
            &mut r,
        )?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert!(Variant::parse("gcn").is_err());
    }

    #[test]
    fn encoder_counts() {
        for v in Variant::ALL {
            let m = Model::new(ModelSpec::new(v, 4, 3), 0).unwrap();
            let expected = if matches!(v, Variant::MpSup | Variant::GkSup) { 1 } else { 2 };
            assert_eq!(m.num_encoders(), expected, "{v}");
        }
    }

    #[test]
    fn shared_parts_initialize_identically() {
        let full = Model::new(ModelSpec::new(Variant::Tgnn, 4, 3), 9).unwrap();
        let sup = Model::new(ModelSpec::new(Variant::MpSup, 4, 3), 9).unwrap();
        for (_, p) in sup.store.iter() {
            let id = full.store.find(&p.name).unwrap();
            assert_eq!(full.store.value(id), &p.value, "{}", p.name);
        }
    }

    #[test]
    fn ensemble_members_differ() {
        let m = Model::new(ModelSpec::new(Variant::MpEnsemble, 4, 3), 9).unwrap();
        let a = m.store.find("primary.layer0.w1").unwrap();
        let b = m.store.find("secondary.layer0.w1").unwrap();
        assert_ne!(m.store.value(a), m.store.value(b));
    }
}
