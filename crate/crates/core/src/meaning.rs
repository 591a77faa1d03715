//! Truth-conditional meaning tables over a shared sample of worlds.
//!
//! The meaning of a form or a message is the stack of its denotations on a
//! fixed list of alternative worlds. Two tables built on the same sample can
//! be compared entry by entry, row by row, or as a whole.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::logic::{self, LogicError, LogicalForm};
use crate::net::{self, MessageVector, ModelParams, NetError};
use crate::scene::{generate_world, AnnotatedScene, AttributeSchema, Mask, SceneError, SizeBounds, World};
use crate::seeds::mix;

/// Default number of alternative worlds.
pub const DEFAULT_SAMPLE_SIZE: usize = 30;

#[derive(Debug, Error)]
pub enum MeaningError {
    #[error("table shapes differ: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Net(#[from] NetError),
}

pub type Result<T> = std::result::Result<T, MeaningError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorldSample {
    pub worlds: Vec<World>,
    pub seed: u64,
}

impl WorldSample {
    pub fn len(&self) -> usize {
        self.worlds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.worlds.is_empty()
    }

    /// Draws `k` distinct worlds from a dataset instead of generating them.
    pub fn from_dataset(seed: u64, data: &[AnnotatedScene], k: usize) -> Result<Self> {
        if k == 0 || k > data.len() {
            return Err(MeaningError::Argument(format!(
                "cannot draw {k} worlds from a dataset of {}",
                data.len()
            )));
        }
        let mut idx: Vec<usize> = (0..data.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self {
            worlds: idx[..k].iter().map(|&i| data[i].scene.world.clone()).collect(),
            seed,
        })
    }
}

/// `k` generated worlds; world `i` is seeded from `(seed, i)`.
pub fn make_sample(seed: u64, schema: &AttributeSchema, k: usize, bounds: SizeBounds) -> Result<WorldSample> {
    if k == 0 {
        return Err(MeaningError::Argument("sample size must be at least 1".into()));
    }
    let worlds = (0..k)
        .map(|i| generate_world(mix(seed, i as u64), schema, bounds.min, bounds.max))
        .collect::<std::result::Result<_, _>>()?;
    Ok(WorldSample { worlds, seed })
}

/// One boolean row per sampled world.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MeaningTable {
    pub rows: Vec<Mask>,
}

impl MeaningTable {
    pub fn complement(&self) -> Self {
        Self {
            rows: self.rows.iter().map(|r| r.iter().map(|b| !b).collect()).collect(),
        }
    }

    pub fn entries(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn fits(&self, sample: &WorldSample) -> bool {
        self.rows.len() == sample.len() && self.rows.iter().zip(&sample.worlds).all(|(r, w)| r.len() == w.len())
    }

    /// `0`/`1` characters, one line per world.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.entries() + self.rows.len());
        for row in &self.rows {
            out.extend(row.iter().map(|&b| if b { '1' } else { '0' }));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .map(|line| {
                line.chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(MeaningError::Argument(format!("unexpected character {other:?}"))),
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(Self { rows })
    }
}

/// `rep(e)`: the form's denotation in every sampled world.
pub fn table_of_form(e: &LogicalForm, sample: &WorldSample, schema: &AttributeSchema) -> Result<MeaningTable> {
    e.validate(schema)?;
    let rows = sample
        .worlds
        .par_iter()
        .map(|w| logic::evaluate(e, w, schema))
        .collect::<std::result::Result<_, _>>()?;
    Ok(MeaningTable { rows })
}

/// `rep(f)`: decoder decisions for `f` in every sampled world, positive only
/// when the probability is strictly above one half.
pub fn table_of_message(
    params: &ModelParams,
    f: &MessageVector,
    sample: &WorldSample,
    schema: &AttributeSchema,
) -> Result<MeaningTable> {
    let rows = sample
        .worlds
        .par_iter()
        .map(|w| Ok(net::decode_world(params, f, w, schema)?.into_iter().map(|p| p > 0.5).collect()))
        .collect::<Result<_>>()?;
    Ok(MeaningTable { rows })
}

/// Entry-level agreement (averaged within each world, then across worlds),
/// the fraction of fully matching worlds, and whether the whole table
/// matches. Averaging entries per world keeps `tables <= worlds <= objects`
/// even when worlds differ in size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Agreement {
    pub objects: f64,
    pub worlds: f64,
    pub tables: f64,
}

impl Agreement {
    pub const PERFECT: Agreement = Agreement {
        objects: 1.0,
        worlds: 1.0,
        tables: 1.0,
    };

    /// Component-wise mean; `None` for an empty slice.
    pub fn mean(items: &[Agreement]) -> Option<Agreement> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        Some(Agreement {
            objects: items.iter().map(|a| a.objects).sum::<f64>() / n,
            worlds: items.iter().map(|a| a.worlds).sum::<f64>() / n,
            tables: items.iter().map(|a| a.tables).sum::<f64>() / n,
        })
    }
}

pub fn agreement(pred: &MeaningTable, reference: &MeaningTable) -> Result<Agreement> {
    if pred.rows.len() != reference.rows.len() {
        return Err(MeaningError::Shape(format!(
            "{} rows vs {} rows",
            pred.rows.len(),
            reference.rows.len()
        )));
    }
    if pred.rows.is_empty() {
        return Err(MeaningError::Shape("empty tables".into()));
    }
    let mut entry_rate = 0.0;
    let mut rows_matching = 0usize;
    for (i, (a, b)) in pred.rows.iter().zip(&reference.rows).enumerate() {
        if a.len() != b.len() {
            return Err(MeaningError::Shape(format!("row {i}: {} vs {} entries", a.len(), b.len())));
        }
        let m = a.iter().zip(b).filter(|(x, y)| x == y).count();
        entry_rate += if a.is_empty() { 1.0 } else { m as f64 / a.len() as f64 };
        if m == a.len() {
            rows_matching += 1;
        }
    }
    let rows = pred.rows.len();
    Ok(Agreement {
        objects: entry_rate / rows as f64,
        worlds: rows_matching as f64 / rows as f64,
        tables: if rows_matching == rows { 1.0 } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ModelConfig;
    use proptest::prelude::*;

    fn table(rows: &[&[u8]]) -> MeaningTable {
        MeaningTable {
            rows: rows.iter().map(|r| r.iter().map(|&b| b == 1).collect()).collect(),
        }
    }

    #[test]
    fn sample_construction() {
        let s = AttributeSchema::default_schema();
        let a = make_sample(3, &s, 30, SizeBounds::default()).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(a, make_sample(3, &s, 30, SizeBounds::default()).unwrap());
        let one = make_sample(4, &s, 1, SizeBounds::new(2, 2).unwrap()).unwrap();
        assert_eq!(one.worlds.len(), 1);
        assert_eq!(one.worlds[0].len(), 2);
        assert!(make_sample(4, &s, 0, SizeBounds::default()).is_err());
        assert!(make_sample(4, &s, 3, SizeBounds { min: 0, max: 2 }).is_err());
    }

    #[test]
    fn form_tables() {
        let s = AttributeSchema::default_schema();
        let sample = make_sample(9, &s, 30, SizeBounds::default()).unwrap();
        let a = LogicalForm::atom("color", "green");
        let taut = LogicalForm::or(a.clone(), LogicalForm::not(a.clone()));
        let contra = LogicalForm::and(a.clone(), LogicalForm::not(a.clone()));
        let t = table_of_form(&taut, &sample, &s).unwrap();
        assert!(t.fits(&sample));
        assert!(t.rows.iter().flatten().all(|&b| b));
        assert!(table_of_form(&contra, &sample, &s).unwrap().rows.iter().flatten().all(|&b| !b));
        let dn = LogicalForm::not(LogicalForm::not(a.clone()));
        assert_eq!(table_of_form(&a, &sample, &s).unwrap(), table_of_form(&dn, &sample, &s).unwrap());
        assert_eq!(
            table_of_form(&LogicalForm::not(a.clone()), &sample, &s).unwrap(),
            table_of_form(&a, &sample, &s).unwrap().complement()
        );
    }

    #[test]
    fn zero_decoder_gives_all_false_table() {
        let s = AttributeSchema::default_schema();
        let sample = make_sample(1, &s, 10, SizeBounds::default()).unwrap();
        let p = ModelParams::zeros(&ModelConfig::default());
        let f = MessageVector::new(vec![0.3; 64]);
        let t = table_of_message(&p, &f, &sample, &s).unwrap();
        assert!(t.fits(&sample));
        assert!(t.rows.iter().flatten().all(|&b| !b));
        assert!(table_of_message(&p, &MessageVector::new(vec![0.0; 3]), &sample, &s).is_err());
    }

    #[test]
    fn agreement_examples() {
        let a = table(&[&[1, 0], &[0, 1], &[1, 1]]);
        assert_eq!(agreement(&a, &a).unwrap(), Agreement::PERFECT);
        let c = agreement(&a, &a.complement()).unwrap();
        assert_eq!((c.objects, c.worlds, c.tables), (0.0, 0.0, 0.0));
        let b = table(&[&[1, 0], &[0, 0], &[1, 1]]);
        let m = agreement(&a, &b).unwrap();
        assert_eq!((m.objects, m.worlds, m.tables), (5.0 / 6.0, 2.0 / 3.0, 0.0));
        assert!(agreement(&a, &table(&[&[1, 0]])).is_err());
        assert!(agreement(&a, &table(&[&[1, 0], &[0, 1], &[1]])).is_err());
    }

    #[test]
    fn text_round_trip() {
        let a = table(&[&[1, 0, 1], &[0], &[1, 1]]);
        assert_eq!(a.to_text(), "101\n0\n11\n");
        assert_eq!(MeaningTable::from_text(&a.to_text()).unwrap(), a);
        assert!(MeaningTable::from_text("10x\n").is_err());
    }

    fn table_pair() -> impl Strategy<Value = (MeaningTable, MeaningTable)> {
        prop::collection::vec(prop::collection::vec((any::<bool>(), any::<bool>()), 1..6), 1..6).prop_map(|rows| {
            let a = rows.iter().map(|r| r.iter().map(|p| p.0).collect()).collect();
            let b = rows.iter().map(|r| r.iter().map(|p| p.1).collect()).collect();
            (MeaningTable { rows: a }, MeaningTable { rows: b })
        })
    }

    proptest! {
        #[test]
        fn agreement_properties((a, b) in table_pair()) {
            let ab = agreement(&a, &b).unwrap();
            let ba = agreement(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!(ab.tables <= ab.worlds && ab.worlds <= ab.objects);
            prop_assert_eq!(ab == Agreement::PERFECT, a == b);
        }
    }
}
