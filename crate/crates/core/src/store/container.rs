use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian as LE, WriteBytesExt};
use ndarray::{ArrayD, IxDyn};

use super::StoreError;
use crate::model::{Group, ModelType, TrainedModel};
use crate::neural::{Activation, Arch, Head, Layer, LayerSpec, NeuralNet, Scaler};
use crate::trees::{DecisionTree, Forest, Node};

const MAGIC: &[u8; 8] = b"IOTFPMDL";
const VERSION: u16 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Tree = 1,
    Forest = 2,
    Neural = 3,
    Ensemble = 4,
}

impl ModelKind {
    pub fn of(model: &TrainedModel) -> Self {
        match model {
            TrainedModel::Tree(_) => ModelKind::Tree,
            TrainedModel::Forest(_) => ModelKind::Forest,
            TrainedModel::Neural(_) => ModelKind::Neural,
            TrainedModel::Ensemble(_) => ModelKind::Ensemble,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, StoreError> {
        Ok(match tag {
            1 => ModelKind::Tree,
            2 => ModelKind::Forest,
            3 => ModelKind::Neural,
            4 => ModelKind::Ensemble,
            t => return Err(corrupt(format!("unknown model kind {t}"))),
        })
    }
}

/// How a stored model was produced.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub window_start: u32,
    pub window_len: u32,
    pub seed: u64,
    pub epochs: u32,
    pub model_type: Option<ModelType>,
    pub group: Option<Group>,
    pub freeze_mask: Vec<bool>,
}

fn corrupt(msg: impl Into<String>) -> StoreError {
    StoreError::Corrupt(msg.into())
}

fn opt_tag<T: Copy + PartialEq>(all: &[T], v: Option<T>) -> u8 {
    v.and_then(|v| all.iter().position(|&a| a == v)).map_or(0, |i| i as u8 + 1)
}

fn from_opt_tag<T: Copy>(all: &[T], tag: u8, what: &str) -> Result<Option<T>, StoreError> {
    match tag {
        0 => Ok(None),
        t => all.get(t as usize - 1).copied().map(Some).ok_or_else(|| corrupt(format!("unknown {what} {t}"))),
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.write_u32::<LE>(u32::try_from(v).expect("count fits in u32")).expect("vec write");
    }
    fn u64(&mut self, v: u64) {
        self.0.write_u64::<LE>(v).expect("vec write");
    }
    fn f64(&mut self, v: f64) {
        self.0.write_f64::<LE>(v).expect("vec write");
    }
}

/// Bounds-checked reader; every length is checked against the remaining
/// bytes before anything is allocated.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], StoreError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(StoreError::Truncated { offset: self.pos, needed: n });
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    fn u8(&mut self) -> Result<u8, StoreError> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<usize, StoreError> {
        Ok(LE::read_u32(self.take(4)?) as usize)
    }
    fn u64(&mut self) -> Result<u64, StoreError> {
        Ok(LE::read_u64(self.take(8)?))
    }
    fn f64(&mut self) -> Result<f64, StoreError> {
        Ok(LE::read_f64(self.take(8)?))
    }
    fn bool(&mut self) -> Result<bool, StoreError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(corrupt(format!("bad flag byte {b}"))),
        }
    }
    /// Reads a count of items that each occupy at least `min_size` bytes.
    fn count(&mut self, min_size: usize) -> Result<usize, StoreError> {
        let n = self.u32()?;
        if n.saturating_mul(min_size) > self.remaining() {
            return Err(StoreError::Truncated { offset: self.pos, needed: n.saturating_mul(min_size) });
        }
        Ok(n)
    }
    fn finish(&self) -> Result<(), StoreError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(corrupt(format!("{} trailing bytes", self.remaining())))
        }
    }
}

fn write_provenance(w: &mut Writer, p: &Provenance) {
    w.u32(p.window_start as usize);
    w.u32(p.window_len as usize);
    w.u64(p.seed);
    w.u32(p.epochs as usize);
    w.u8(opt_tag(&ModelType::ALL, p.model_type));
    w.u8(opt_tag(&Group::ALL, p.group));
    w.u32(p.freeze_mask.len());
    for &f in &p.freeze_mask {
        w.u8(f as u8);
    }
}

fn read_provenance(r: &mut Reader) -> Result<Provenance, StoreError> {
    let window_start = r.u32()? as u32;
    let window_len = r.u32()? as u32;
    let seed = r.u64()?;
    let epochs = r.u32()? as u32;
    let model_type = from_opt_tag(&ModelType::ALL, r.u8()?, "model type")?;
    let group = from_opt_tag(&Group::ALL, r.u8()?, "group")?;
    let n = r.count(1)?;
    let freeze_mask = (0..n).map(|_| r.bool()).collect::<Result<_, _>>()?;
    Ok(Provenance { window_start, window_len, seed, epochs, model_type, group, freeze_mask })
}

fn write_tree(w: &mut Writer, t: &DecisionTree) {
    w.u32(t.n_features());
    w.u32(t.n_classes());
    w.u32(t.nodes().len());
    for n in t.nodes() {
        match n {
            Node::Leaf { counts } => {
                w.u8(0);
                for &c in counts {
                    w.u32(c as usize);
                }
            }
            Node::Split { feature, threshold, left, right } => {
                w.u8(1);
                w.u32(*feature);
                w.f64(*threshold);
                w.u32(*left);
                w.u32(*right);
            }
        }
    }
}

fn read_tree(r: &mut Reader) -> Result<DecisionTree, StoreError> {
    let n_features = r.u32()?;
    let n_classes = r.u32()?;
    let n_nodes = r.count(1 + 4 * n_classes.min(5))?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        nodes.push(match r.u8()? {
            0 => {
                if n_classes.saturating_mul(4) > r.remaining() {
                    return Err(StoreError::Truncated { offset: r.pos, needed: n_classes.saturating_mul(4) });
                }
                Node::Leaf { counts: (0..n_classes).map(|_| r.u32().map(|c| c as u32)).collect::<Result<_, _>>()? }
            }
            1 => Node::Split { feature: r.u32()?, threshold: r.f64()?, left: r.u32()?, right: r.u32()? },
            t => return Err(corrupt(format!("unknown node tag {t}"))),
        });
    }
    DecisionTree::from_parts(nodes, n_features, n_classes).map_err(|e| corrupt(e.to_string()))
}

fn write_forest(w: &mut Writer, f: &Forest) {
    w.u32(f.trees().len());
    for (t, &s) in f.trees().iter().zip(f.seeds()) {
        w.u64(s);
        write_tree(w, t);
    }
}

fn read_forest(r: &mut Reader) -> Result<Forest, StoreError> {
    let n = r.count(8 + 12)?;
    let mut trees = Vec::with_capacity(n);
    let mut seeds = Vec::with_capacity(n);
    for _ in 0..n {
        seeds.push(r.u64()?);
        trees.push(read_tree(r)?);
    }
    Forest::from_trees(trees, seeds).map_err(|e| corrupt(e.to_string()))
}

const ACTIVATIONS: [Activation; 5] =
    [Activation::Relu, Activation::Tanh, Activation::Sigmoid, Activation::Softmax, Activation::None];

fn act_tag(a: Activation) -> u8 {
    ACTIVATIONS.iter().position(|&x| x == a).expect("listed") as u8
}

fn read_act(r: &mut Reader) -> Result<Activation, StoreError> {
    let t = r.u8()?;
    ACTIVATIONS.get(t as usize).copied().ok_or_else(|| corrupt(format!("unknown activation {t}")))
}

fn write_spec(w: &mut Writer, spec: &LayerSpec) {
    match *spec {
        LayerSpec::Dense { units, activation } => {
            w.u8(0);
            w.u32(units);
            w.u8(act_tag(activation));
        }
        LayerSpec::Lstm { units, activation, return_sequences } => {
            w.u8(1);
            w.u32(units);
            w.u8(act_tag(activation));
            w.u8(return_sequences as u8);
        }
        LayerSpec::Conv1d { filters, kernel, activation } => {
            w.u8(2);
            w.u32(filters);
            w.u32(kernel);
            w.u8(act_tag(activation));
        }
        LayerSpec::Dropout { rate } => {
            w.u8(3);
            w.f64(rate);
        }
        LayerSpec::Maxpool1d { pool } => {
            w.u8(4);
            w.u32(pool);
        }
        LayerSpec::Flatten => w.u8(5),
        LayerSpec::Output { units, activation } => {
            w.u8(6);
            w.u32(units);
            w.u8(act_tag(activation));
        }
    }
}

fn read_spec(r: &mut Reader) -> Result<LayerSpec, StoreError> {
    let positive = |v: usize| if v == 0 { Err(corrupt("zero layer width")) } else { Ok(v) };
    Ok(match r.u8()? {
        0 => LayerSpec::Dense { units: positive(r.u32()?)?, activation: read_act(r)? },
        1 => LayerSpec::Lstm { units: positive(r.u32()?)?, activation: read_act(r)?, return_sequences: r.bool()? },
        2 => LayerSpec::Conv1d { filters: positive(r.u32()?)?, kernel: positive(r.u32()?)?, activation: read_act(r)? },
        3 => {
            let rate = r.f64()?;
            if !(0.0..1.0).contains(&rate) {
                return Err(corrupt("dropout rate outside [0, 1)"));
            }
            LayerSpec::Dropout { rate }
        }
        4 => LayerSpec::Maxpool1d { pool: positive(r.u32()?)? },
        5 => LayerSpec::Flatten,
        6 => LayerSpec::Output { units: positive(r.u32()?)?, activation: read_act(r)? },
        t => return Err(corrupt(format!("unknown layer tag {t}"))),
    })
}

fn write_neural(w: &mut Writer, net: &NeuralNet) {
    w.u8(Arch::ALL.iter().position(|&a| a == net.arch()).expect("listed") as u8);
    match net.head() {
        Head::Multiclass(n) => {
            w.u8(0);
            w.u32(n);
        }
        Head::Binary => {
            w.u8(1);
            w.u32(1);
        }
    }
    w.u32(net.input_dim());
    w.u64(net.seed());
    w.u32(net.layers().len());
    for layer in net.layers() {
        write_spec(w, &layer.spec);
        w.u8(layer.frozen as u8);
        w.u32(layer.params.len());
        for t in &layer.params {
            w.u8(t.ndim() as u8);
            for &d in t.shape() {
                w.u32(d);
            }
            for &v in t.iter() {
                w.f64(v);
            }
        }
    }
    match net.scaler() {
        None => w.u8(0),
        Some(s) => {
            w.u8(1);
            for (&m, &sd) in s.mean.iter().zip(&s.std) {
                w.f64(m);
                w.f64(sd);
            }
        }
    }
}

fn read_tensor(r: &mut Reader) -> Result<ArrayD<f64>, StoreError> {
    let rank = r.u8()? as usize;
    if rank > 4 {
        return Err(corrupt(format!("tensor rank {rank}")));
    }
    let shape: Vec<usize> = (0..rank).map(|_| r.u32()).collect::<Result<_, _>>()?;
    let len = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| corrupt("tensor too large"))?;
    let bytes = r.take(len.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?)?;
    let values: Vec<f64> = bytes.chunks_exact(8).map(LE::read_f64).collect();
    Ok(ArrayD::from_shape_vec(IxDyn(&shape), values).expect("length matches shape"))
}

fn read_neural(r: &mut Reader) -> Result<NeuralNet, StoreError> {
    let arch_tag = r.u8()?;
    let arch = *Arch::ALL.get(arch_tag as usize).ok_or_else(|| corrupt(format!("unknown architecture {arch_tag}")))?;
    let head = match (r.u8()?, r.u32()?) {
        (0, n) if n > 0 => Head::Multiclass(n),
        (1, 1) => Head::Binary,
        (t, n) => return Err(corrupt(format!("bad head {t}/{n}"))),
    };
    let input_dim = r.u32()?;
    let seed = r.u64()?;
    let n_layers = r.count(3)?;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let spec = read_spec(r)?;
        let frozen = r.bool()?;
        let n_tensors = r.count(1)?;
        if n_tensors > 3 {
            return Err(corrupt("too many tensors in a layer"));
        }
        let params = (0..n_tensors).map(|_| read_tensor(r)).collect::<Result<_, _>>()?;
        layers.push(Layer { spec, params, frozen });
    }
    let scaler = if r.bool()? {
        if input_dim.saturating_mul(16) > r.remaining() {
            return Err(StoreError::Truncated { offset: r.pos, needed: input_dim.saturating_mul(16) });
        }
        let mut s = Scaler { mean: Vec::with_capacity(input_dim), std: Vec::with_capacity(input_dim) };
        for _ in 0..input_dim {
            s.mean.push(r.f64()?);
            s.std.push(r.f64()?);
        }
        if s.mean.iter().chain(&s.std).any(|v| !v.is_finite()) {
            return Err(corrupt("non-finite scaler"));
        }
        Some(s)
    } else {
        None
    };
    NeuralNet::from_parts(arch, head, input_dim, seed, layers, scaler).map_err(|e| corrupt(e.to_string()))
}

fn write_payload(w: &mut Writer, model: &TrainedModel) {
    match model {
        TrainedModel::Tree(t) => write_tree(w, t),
        TrainedModel::Forest(f) => write_forest(w, f),
        TrainedModel::Neural(n) => write_neural(w, n),
        TrainedModel::Ensemble(members) => {
            w.u32(members.len());
            for m in members {
                let mut inner = Writer(Vec::new());
                write_payload(&mut inner, m);
                w.u8(ModelKind::of(m) as u8);
                w.u64(inner.0.len() as u64);
                w.0.extend_from_slice(&inner.0);
            }
        }
    }
}

fn read_payload(r: &mut Reader, kind: ModelKind, nested: bool) -> Result<TrainedModel, StoreError> {
    Ok(match kind {
        ModelKind::Tree => TrainedModel::Tree(read_tree(r)?),
        ModelKind::Forest => TrainedModel::Forest(read_forest(r)?),
        ModelKind::Neural => TrainedModel::Neural(read_neural(r)?),
        ModelKind::Ensemble if nested => return Err(corrupt("nested ensemble")),
        ModelKind::Ensemble => {
            let n = r.count(9)?;
            if n == 0 {
                return Err(corrupt("empty ensemble"));
            }
            let mut members = Vec::with_capacity(n);
            for _ in 0..n {
                let kind = ModelKind::from_tag(r.u8()?)?;
                let len = usize::try_from(r.u64()?).map_err(|_| corrupt("member too large"))?;
                let mut inner = Reader { buf: r.take(len)?, pos: 0 };
                members.push(read_payload(&mut inner, kind, true)?);
                inner.finish()?;
            }
            let first = &members[0];
            if members.iter().any(|m| m.n_features() != first.n_features() || m.positive_proba_columns().is_none()) {
                return Err(corrupt("ensemble members must be binary with equal width"));
            }
            TrainedModel::Ensemble(members)
        }
    })
}

impl TrainedModel {
    /// Column holding the positive probability, if this is a binary model.
    fn positive_proba_columns(&self) -> Option<usize> {
        match self {
            TrainedModel::Neural(n) if n.head() == Head::Binary => Some(0),
            TrainedModel::Tree(_) | TrainedModel::Forest(_) if self.n_outputs() == 2 => Some(1),
            _ => None,
        }
    }
}

/// Serializes a model and its provenance into container bytes.
pub fn encode_model(model: &TrainedModel, provenance: &Provenance) -> Vec<u8> {
    let mut prov = Writer(Vec::new());
    write_provenance(&mut prov, provenance);
    let mut payload = Writer(Vec::new());
    write_payload(&mut payload, model);
    let mut out = Writer(Vec::with_capacity(HEADER_LEN + prov.0.len() + payload.0.len()));
    out.0.extend_from_slice(MAGIC);
    out.0.write_u16::<LE>(VERSION).expect("vec write");
    out.u8(ModelKind::of(model) as u8);
    out.u8(0);
    out.u32(prov.0.len());
    out.u64(payload.0.len() as u64);
    out.0.extend_from_slice(&prov.0);
    out.0.extend_from_slice(&payload.0);
    out.0
}

/// Parses container bytes. Bad magic, unknown versions, short input and
/// inconsistent contents are reported as distinct errors.
pub fn decode_model(bytes: &[u8]) -> Result<(TrainedModel, Provenance), StoreError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(StoreError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: MAGIC.len() };
    let version = LE::read_u16(r.take(2)?);
    if version != VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let kind = ModelKind::from_tag(r.u8()?)?;
    if r.u8()? != 0 {
        return Err(corrupt("reserved byte set"));
    }
    let prov_len = r.u32()?;
    let payload_len = usize::try_from(r.u64()?).map_err(|_| corrupt("payload too large"))?;
    let mut prov = Reader { buf: r.take(prov_len)?, pos: 0 };
    let provenance = read_provenance(&mut prov)?;
    prov.finish()?;
    let mut payload = Reader { buf: r.take(payload_len)?, pos: 0 };
    let model = read_payload(&mut payload, kind, false)?;
    payload.finish()?;
    r.finish()?;
    Ok((model, provenance))
}

/// Payload bytes of a model as it would be stored.
pub fn model_size(model: &TrainedModel) -> usize {
    let mut w = Writer(Vec::new());
    write_payload(&mut w, model);
    w.0.len()
}

/// Writes the container atomically and returns the payload size.
pub fn save_model(model: &TrainedModel, provenance: &Provenance, path: &Path) -> Result<usize, StoreError> {
    let bytes = encode_model(model, provenance);
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(LE::read_u64(&bytes[16..24]) as usize)
}

pub fn load_model(path: &Path) -> Result<(TrainedModel, Provenance), StoreError> {
    decode_model(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::init_model;
    use crate::trees::TreeParams;
    use ndarray::array;

    fn tree() -> TrainedModel {
        let x = array![[0.0, 1.0], [1.0, 0.0], [2.0, 2.0], [3.0, 1.0]];
        let p = TreeParams { min_samples_split: 2, ..TreeParams::default() };
        TrainedModel::Tree(DecisionTree::fit(x.view(), &[0, 0, 1, 1], 2, &p).unwrap())
    }

    #[test]
    fn header_is_self_describing() {
        let b = encode_model(&tree(), &Provenance::default());
        assert_eq!(&b[..8], b"IOTFPMDL");
        assert_eq!(LE::read_u16(&b[8..10]), 1);
        assert_eq!(b[10], 1);
        let p = LE::read_u32(&b[12..16]) as usize;
        let l = LE::read_u64(&b[16..24]) as usize;
        assert_eq!(b.len(), HEADER_LEN + p + l);
        assert_eq!(l, model_size(&tree()));
    }

    #[test]
    fn round_trips_provenance_and_models() {
        let prov = Provenance {
            window_start: 3,
            window_len: 7,
            seed: u64::MAX,
            epochs: 5,
            model_type: Some(ModelType::Lstm),
            group: Some(Group::PerCategory),
            freeze_mask: vec![true, false, true],
        };
        let mut net = init_model(Arch::Conv1d, Head::Multiclass(4), 3);
        net.freeze(2).unwrap();
        for m in [tree(), TrainedModel::Neural(net), TrainedModel::Ensemble(vec![tree(), tree()])] {
            let (back, p) = decode_model(&encode_model(&m, &prov)).unwrap();
            assert_eq!(back, m);
            assert_eq!(p, prov);
        }
    }

    #[test]
    fn distinct_errors() {
        let good = encode_model(&tree(), &Provenance::default());
        assert!(matches!(decode_model(b"NOTAMODEL......."), Err(StoreError::BadMagic)));
        let mut v2 = good.clone();
        v2[8] = 2;
        assert!(matches!(decode_model(&v2), Err(StoreError::UnsupportedVersion(2))));
        assert!(matches!(decode_model(&good[..good.len() - 3]), Err(StoreError::Truncated { .. })));
        let mut bad_kind = good.clone();
        bad_kind[10] = 9;
        assert!(matches!(decode_model(&bad_kind), Err(StoreError::Corrupt(_))));
        let mut huge = good.clone();
        huge[16..24].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_model(&huge).is_err());
        let mut trailing = good;
        trailing.push(0);
        assert!(matches!(decode_model(&trailing), Err(StoreError::Corrupt(_))));
    }
}
