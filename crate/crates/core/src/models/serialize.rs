//! Versioned binary model files.
//!
//! Layout: magic `RSMH1`, `u16` version, `u8` model kind, the parameters as a
//! length-prefixed JSON object, the fitted arrays, then an optional encoder
//! section with the query and item token tables. All integers and floats
//! are little-endian; every array is prefixed by its `u64` length.

use std::fs;
use std::path::Path;

use super::als::AlsState;
use super::assoc_rules::{Rule, RulesState};
use super::item_knn::KnnState;
use super::nonpersonalized::{GlobalScores, ThompsonState};
use super::slim::SlimState;
use super::*;
use crate::data::{ColumnEncoder, EncoderMapping};

pub const MODEL_MAGIC: &[u8; 5] = b"RSMH1";
const VERSION: u16 = 1;

#[derive(Default)]
struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, b: &[u8]) {
        self.u64(b.len() as u64);
        self.buf.extend_from_slice(b);
    }

    fn u32s(&mut self, v: &[u32]) {
        self.u64(v.len() as u64);
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn u64s(&mut self, v: impl ExactSizeIterator<Item = u64>) {
        self.u64(v.len() as u64);
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn f64s(&mut self, v: impl ExactSizeIterator<Item = f64>) {
        self.u64(v.len() as u64);
        for x in v {
            self.buf.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn matrix(&mut self, m: &SparseInteractionMatrix) {
        let (indptr, indices, values) = m.raw_parts();
        self.u64(m.n_rows() as u64);
        self.u64(m.n_cols() as u64);
        self.u64s(indptr.iter().map(|&p| p as u64));
        self.u32s(indices);
        self.f64s(values.iter().copied());
    }

    fn adjacency(&mut self, rows: &[Vec<(u32, f64)>]) {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        offsets.push(0u64);
        for r in rows {
            offsets.push(offsets.last().unwrap() + r.len() as u64);
        }
        self.u64s(offsets.into_iter());
        let ids: Vec<u32> = rows.iter().flatten().map(|&(i, _)| i).collect();
        self.u32s(&ids);
        self.f64s(rows.iter().flatten().map(|&(_, w)| w).collect::<Vec<_>>().into_iter());
    }

    fn strings(&mut self, v: &[String]) {
        self.u64(v.len() as u64);
        for s in v {
            self.bytes(s.as_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::ModelFormat(msg.into())
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| corrupt("truncated file"))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, elem: usize) -> Result<usize> {
        let n = self.u64()?;
        let n = usize::try_from(n).map_err(|_| corrupt("array length overflow"))?;
        if n.checked_mul(elem).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(corrupt("truncated file"));
        }
        Ok(n)
    }

    fn bytes(&mut self) -> Result<&'a [u8]> {
        let n = self.len(1)?;
        self.take(n)
    }

    fn u32s(&mut self) -> Result<Vec<u32>> {
        let n = self.len(4)?;
        Ok(self.take(n * 4)?.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn u64s(&mut self) -> Result<Vec<u64>> {
        let n = self.len(8)?;
        Ok(self.take(n * 8)?.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        Ok(self.take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| corrupt("size overflow"))
    }

    fn matrix(&mut self) -> Result<SparseInteractionMatrix> {
        let n_rows = self.usize()?;
        let n_cols = self.usize()?;
        let raw_indptr = self.u64s()?;
        let indices = self.u32s()?;
        let values = self.f64s()?;
        if values.len() != indices.len() {
            return Err(corrupt("matrix index/value length mismatch"));
        }
        let indptr = Reader::check_offsets(raw_indptr, Some(n_rows), indices.len())?;
        for r in 0..n_rows {
            let row = &indices[indptr[r]..indptr[r + 1]];
            if row.windows(2).any(|w| w[0] >= w[1]) || row.last().is_some_and(|&c| c as usize >= n_cols) {
                return Err(corrupt("bad matrix column indices"));
            }
        }
        Ok(SparseInteractionMatrix::from_raw_parts(n_rows, n_cols, indptr, indices, values))
    }

    fn check_offsets(raw: Vec<u64>, n_rows: Option<usize>, n_entries: usize) -> Result<Vec<usize>> {
        let ok = raw.first() == Some(&0)
            && raw.windows(2).all(|w| w[0] <= w[1])
            && raw.last().copied() == Some(n_entries as u64)
            && n_rows.is_none_or(|n| raw.len() == n + 1);
        if !ok {
            return Err(corrupt("bad row offsets"));
        }
        Ok(raw.into_iter().map(|p| p as usize).collect())
    }

    /// Adjacency lists whose ids must stay below `bound`.
    fn adjacency(&mut self, bound: usize) -> Result<Vec<Vec<(u32, f64)>>> {
        let raw = self.u64s()?;
        let ids = self.u32s()?;
        let weights = self.f64s()?;
        if ids.len() != weights.len() || ids.iter().any(|&i| i as usize >= bound) {
            return Err(corrupt("bad adjacency entries"));
        }
        let offsets = Reader::check_offsets(raw, None, ids.len())?;
        Ok(offsets.windows(2).map(|w| (w[0]..w[1]).map(|p| (ids[p], weights[p])).collect()).collect())
    }

    fn string(&mut self) -> Result<String> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| corrupt("invalid utf-8 string"))
    }

    fn strings(&mut self) -> Result<Vec<String>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.string()).collect()
    }
}

fn kind_of(config: &ModelConfig) -> u8 {
    ModelConfig::NAMES.iter().position(|&n| n == config.name()).unwrap() as u8
}

fn write_state(w: &mut Writer, model: &Model) -> Result<()> {
    fn global(w: &mut Writer, s: &Option<GlobalScores>) -> Result<()> {
        let s = s.as_ref().ok_or(Error::UnfittedModel)?;
        w.matrix(s.history.matrix());
        w.f64s(s.scores.iter().copied());
        Ok(())
    }
    match model {
        Model::PopRec(m) => global(w, &m.state)?,
        Model::Wilson(m) => global(w, &m.state)?,
        Model::Ucb(m) => global(w, &m.state)?,
        Model::KlUcb(m) => global(w, &m.state)?,
        Model::QueryPopRec(m) => w.matrix(m.state.as_ref().ok_or(Error::UnfittedModel)?),
        Model::Thompson(m) => {
            let s = m.state.as_ref().ok_or(Error::UnfittedModel)?;
            w.matrix(s.history.matrix());
            w.u64s(s.n_pos.iter().copied());
            w.u64s(s.n_fail.iter().copied());
        }
        Model::ItemKnn(m) => {
            let s = m.state.as_ref().ok_or(Error::UnfittedModel)?;
            w.matrix(s.history.matrix());
            w.matrix(&s.matrix);
            w.adjacency(&s.neighbors);
        }
        Model::Slim(m) => {
            let s = m.state.as_ref().ok_or(Error::UnfittedModel)?;
            w.matrix(s.history.matrix());
            w.matrix(&s.matrix);
            w.adjacency(&s.weights);
        }
        Model::Als(m) => {
            let s = m.state.as_ref().ok_or(Error::UnfittedModel)?;
            w.matrix(s.history.matrix());
            w.u64(s.factors.rank as u64);
            w.f64s(s.factors.user_factors.iter().copied());
            w.f64s(s.factors.item_factors.iter().copied());
        }
        Model::AssociationRules(m) => {
            let s = m.state.as_ref().ok_or(Error::UnfittedModel)?;
            w.matrix(s.history.matrix());
            w.matrix(&s.positives);
            let conf: Vec<Vec<(u32, f64)>> =
                s.rules.iter().map(|r| r.iter().map(|x| (x.consequent, x.confidence)).collect()).collect();
            w.adjacency(&conf);
            w.u64s(s.rules.iter().flatten().map(|x| x.pair_count).collect::<Vec<_>>().into_iter());
            w.f64s(s.rules.iter().flatten().map(|x| x.lift).collect::<Vec<_>>().into_iter());
        }
    }
    Ok(())
}

fn read_state(r: &mut Reader, config: ModelConfig) -> Result<Model> {
    let mut model = config.build();
    let history = |r: &mut Reader| -> Result<History> { Ok(History::from_matrix(r.matrix()?)) };
    let global = |r: &mut Reader| -> Result<GlobalScores> {
        let h = history(r)?;
        let scores = r.f64s()?;
        if scores.len() != h.n_items() {
            return Err(corrupt("score length mismatch"));
        }
        Ok(GlobalScores::new(h, scores))
    };
    match &mut model {
        Model::PopRec(m) => m.state = Some(global(r)?),
        Model::Wilson(m) => m.state = Some(global(r)?),
        Model::Ucb(m) => m.state = Some(global(r)?),
        Model::KlUcb(m) => m.state = Some(global(r)?),
        Model::QueryPopRec(m) => m.state = Some(r.matrix()?),
        Model::Thompson(m) => {
            let h = history(r)?;
            let n_pos = r.u64s()?;
            let n_fail = r.u64s()?;
            if n_pos.len() != h.n_items() || n_fail.len() != h.n_items() {
                return Err(corrupt("count length mismatch"));
            }
            m.state = Some(ThompsonState { history: h, n_pos, n_fail });
        }
        Model::ItemKnn(m) => {
            let h = history(r)?;
            let matrix = r.matrix()?;
            let neighbors = r.adjacency(h.n_items())?;
            if neighbors.len() != h.n_items() {
                return Err(corrupt("neighbour table size mismatch"));
            }
            m.state = Some(KnnState { history: h, matrix, neighbors });
        }
        Model::Slim(m) => {
            let h = history(r)?;
            let matrix = r.matrix()?;
            let weights = r.adjacency(h.n_items())?;
            if weights.len() != h.n_items() {
                return Err(corrupt("weight table size mismatch"));
            }
            m.state = Some(SlimState { history: h, matrix, weights });
        }
        Model::Als(m) => {
            let h = history(r)?;
            let rank = r.usize()?;
            let user_factors = r.f64s()?;
            let item_factors = r.f64s()?;
            if rank == 0 || user_factors.len() % rank != 0 || item_factors.len() != h.n_items() * rank {
                return Err(corrupt("factor shape mismatch"));
            }
            m.state = Some(AlsState { history: h, factors: FactorModel { rank, user_factors, item_factors } });
        }
        Model::AssociationRules(m) => {
            let h = history(r)?;
            let positives = r.matrix()?;
            let conf = r.adjacency(h.n_items())?;
            let counts = r.u64s()?;
            let lifts = r.f64s()?;
            let total: usize = conf.iter().map(Vec::len).sum();
            if conf.len() != h.n_items() || counts.len() != total || lifts.len() != total {
                return Err(corrupt("rule table size mismatch"));
            }
            let mut flat = counts.into_iter().zip(lifts);
            let rules = conf
                .into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|(consequent, confidence)| {
                            let (pair_count, lift) = flat.next().unwrap();
                            Rule { consequent, pair_count, confidence, lift }
                        })
                        .collect()
                })
                .collect();
            m.state = Some(RulesState { history: h, positives, rules });
        }
    }
    Ok(model)
}

/// Serialises a fitted model, optionally with the id encoder it was trained under.
pub fn to_bytes(model: &Model, encoder: Option<&EncoderMapping>) -> Result<Vec<u8>> {
    if !model.is_fitted() {
        return Err(Error::UnfittedModel);
    }
    let config = model.config();
    let mut w = Writer::default();
    w.buf.extend_from_slice(MODEL_MAGIC);
    w.buf.extend_from_slice(&VERSION.to_le_bytes());
    w.u8(kind_of(&config));
    w.bytes(&serde_json::to_vec(&config).expect("params serialise"));
    write_state(&mut w, model)?;
    match encoder {
        None => w.u8(0),
        Some(enc) => {
            let (q, i) = (enc.queries()?, enc.items()?);
            w.u8(1);
            for e in [q, i] {
                w.bytes(e.column().as_bytes());
                w.strings(e.tokens());
            }
        }
    }
    Ok(w.buf)
}

pub fn from_bytes(buf: &[u8]) -> Result<(Model, Option<EncoderMapping>)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MODEL_MAGIC.len()).ok() != Some(&MODEL_MAGIC[..]) {
        return Err(corrupt("missing RSMH1 header"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(corrupt(format!("unsupported version {version}")));
    }
    let kind = r.u8()?;
    let config: ModelConfig =
        serde_json::from_slice(r.bytes()?).map_err(|e| corrupt(format!("bad parameter block: {e}")))?;
    if kind_of(&config) != kind {
        return Err(corrupt("model kind does not match parameters"));
    }
    let model = read_state(&mut r, config)?;
    let encoder = match r.u8()? {
        0 => None,
        1 => {
            let mut enc = || -> Result<ColumnEncoder> {
                let column = r.string()?;
                ColumnEncoder::from_inverse(column, r.strings()?).map_err(|e| corrupt(e.to_string()))
            };
            let q = enc()?;
            let i = enc()?;
            Some(EncoderMapping::from_query_item(q, i))
        }
        _ => return Err(corrupt("bad encoder flag")),
    };
    if r.pos != buf.len() {
        return Err(corrupt("trailing bytes"));
    }
    Ok((model, encoder))
}

pub fn save_model(path: impl AsRef<Path>, model: &Model, encoder: Option<&EncoderMapping>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model, encoder)?;
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(Model, Option<EncoderMapping>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InteractionLog;

    fn data() -> Interactions {
        let rows = [(0u32, 0u32, 1.0), (0, 1, 1.0), (1, 1, 0.0), (1, 2, 1.0), (2, 0, 1.0), (2, 2, 1.0), (3, 3, 1.0)];
        Interactions::from_log(rows.iter().map(|&(q, i, r)| (q, i, 0i64, r)).collect::<InteractionLog<u32>>())
    }

    #[test]
    fn every_model_round_trips() {
        let d = data();
        let queries = [0u32, 1, 2, 3, 9];
        for name in ModelConfig::NAMES {
            let mut m = ModelConfig::from_name(name).unwrap().build();
            if name == "wilson" {
                continue;
            }
            m.fit(&d).unwrap();
            let bytes = to_bytes(&m, None).unwrap();
            assert_eq!(&bytes[..5], MODEL_MAGIC);
            let (back, enc) = from_bytes(&bytes).unwrap();
            assert!(enc.is_none());
            assert_eq!(back.config(), m.config());
            for fs in [true, false] {
                assert_eq!(back.predict(&queries, 3, fs).unwrap(), m.predict(&queries, 3, fs).unwrap(), "{name}");
            }
            assert_eq!(to_bytes(&back, None).unwrap(), bytes, "{name}");
        }
    }

    #[test]
    fn encoder_section_round_trips() {
        let mut m = ModelConfig::from_name("pop_rec").unwrap().build();
        m.fit(&data()).unwrap();
        let q = ColumnEncoder::fit("user_id", ["a", "b", "c", "d"]);
        let i = ColumnEncoder::fit("item_id", ["x", "y", "z", "w"]);
        let enc = EncoderMapping::from_query_item(q, i);
        let (_, back) = from_bytes(&to_bytes(&m, Some(&enc)).unwrap()).unwrap();
        let back = back.unwrap();
        assert_eq!(back.items().unwrap().tokens(), enc.items().unwrap().tokens());
        assert_eq!(back.queries().unwrap().column(), "user_id");
    }

    #[test]
    fn rejects_unfitted_and_corrupt() {
        let m = ModelConfig::from_name("slim").unwrap().build();
        assert!(matches!(to_bytes(&m, None), Err(Error::UnfittedModel)));
        assert!(matches!(from_bytes(b"RSMH2...."), Err(Error::ModelFormat(_))));
        let mut fitted = ModelConfig::from_name("item_knn").unwrap().build();
        fitted.fit(&data()).unwrap();
        let bytes = to_bytes(&fitted, None).unwrap();
        for cut in [6, 20, bytes.len() - 1] {
            assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::ModelFormat(_))));
        }
    }
}
