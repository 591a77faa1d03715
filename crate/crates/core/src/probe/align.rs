use std::collections::HashMap;

use rayon::prelude::*;

use super::Result;
use crate::logic::{predicate, BinaryOp, LogicalForm, ObjectPredicate};
use crate::meaning::{table_of_form, table_of_message, WorldSample};
use crate::net::{encode, MessageVector, ModelParams};
use crate::scene::{AnnotatedScene, AttributeSchema, Scene};

/// A form and a message with identical meaning tables on the active sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub form: LogicalForm,
    pub message: MessageVector,
    /// Position of the source scene in its dataset.
    pub scene_index: usize,
    pub scene: Scene,
}

/// Indices into an alignment list where `negated`'s form is equivalent to
/// the negation of `source`'s form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegationPair {
    pub source: usize,
    pub negated: usize,
}

impl NegationPair {
    pub fn vectors<'a>(&self, aligned: &'a [AlignedPair]) -> (&'a [f64], &'a [f64]) {
        (&aligned[self.source].message.values, &aligned[self.negated].message.values)
    }
}

/// Indices into an alignment list where `result`'s form is equivalent to
/// `op(left, right)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryTriple {
    pub left: usize,
    pub right: usize,
    pub result: usize,
}

impl BinaryTriple {
    pub fn vectors<'a>(&self, aligned: &'a [AlignedPair]) -> (&'a [f64], &'a [f64], &'a [f64]) {
        (
            &aligned[self.left].message.values,
            &aligned[self.right].message.values,
            &aligned[self.result].message.values,
        )
    }
}

/// Every `(annotation, message)` pair of the dataset whose tables agree
/// exactly. Annotations equivalent to an earlier annotation of the same
/// scene are skipped.
pub fn collect_alignments(
    params: &ModelParams,
    dataset: &[AnnotatedScene],
    sample: &WorldSample,
    schema: &AttributeSchema,
) -> Result<Vec<AlignedPair>> {
    let per_scene = dataset
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let f = encode(params, &item.scene, schema)?;
            let observed = table_of_message(params, &f, sample, schema)?;
            let mut seen: Vec<ObjectPredicate> = Vec::new();
            let mut out = Vec::new();
            for form in &item.forms {
                let p = predicate(form, schema)?;
                if seen.contains(&p) {
                    continue;
                }
                seen.push(p);
                if table_of_form(form, sample, schema)? == observed {
                    out.push(AlignedPair {
                        form: form.clone(),
                        message: f.clone(),
                        scene_index: i,
                        scene: item.scene.clone(),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_scene.into_iter().flatten().collect())
}

/// Groups aligned forms into equivalence classes, in first-appearance order.
struct Classes {
    of: Vec<usize>,
    members: Vec<Vec<usize>>,
    preds: Vec<ObjectPredicate>,
    index: HashMap<ObjectPredicate, usize>,
}

impl Classes {
    fn new(aligned: &[AlignedPair], schema: &AttributeSchema) -> Result<Self> {
        let mut c = Classes {
            of: Vec::with_capacity(aligned.len()),
            members: Vec::new(),
            preds: Vec::new(),
            index: HashMap::new(),
        };
        for (i, a) in aligned.iter().enumerate() {
            let p = predicate(&a.form, schema)?;
            let id = *c.index.entry(p.clone()).or_insert_with(|| {
                c.preds.push(p);
                c.members.push(Vec::new());
                c.preds.len() - 1
            });
            c.members[id].push(i);
            c.of.push(id);
        }
        Ok(c)
    }

    fn lookup(&self, truth: Vec<bool>) -> Option<usize> {
        self.index.get(&ObjectPredicate { truth }).copied()
    }
}

/// All ordered `(e, f), (e', f')` with `e'` equivalent to `not e`.
pub fn collect_negation_pairs(aligned: &[AlignedPair], schema: &AttributeSchema) -> Result<Vec<NegationPair>> {
    let classes = Classes::new(aligned, schema)?;
    let negated: Vec<Option<usize>> = classes
        .preds
        .iter()
        .map(|p| classes.lookup(p.truth.iter().map(|t| !t).collect()))
        .collect();
    let mut out = Vec::new();
    for (i, &c) in classes.of.iter().enumerate() {
        if let Some(n) = negated[c] {
            out.extend(classes.members[n].iter().map(|&j| NegationPair { source: i, negated: j }));
        }
    }
    Ok(out)
}

/// All `(e, f), (e', f'), (e'', f'')` with `e''` equivalent to `op(e, e')`,
/// in both argument orders. Arguments equivalent to each other, and results
/// equivalent to one of the arguments (absorption, e.g. `a and (a or b)`),
/// are skipped.
pub fn collect_binary_triples(
    aligned: &[AlignedPair],
    schema: &AttributeSchema,
    op: BinaryOp,
) -> Result<Vec<BinaryTriple>> {
    let classes = Classes::new(aligned, schema)?;
    let n = classes.preds.len();
    let mut combined: Vec<Option<usize>> = vec![None; n * n];
    for a in 0..n {
        for b in 0..n {
            if a == b {
                continue;
            }
            let truth = classes.preds[a]
                .truth
                .iter()
                .zip(&classes.preds[b].truth)
                .map(|(&x, &y)| match op {
                    BinaryOp::And => x && y,
                    BinaryOp::Or => x || y,
                })
                .collect();
            combined[a * n + b] = classes.lookup(truth).filter(|&k| k != a && k != b);
        }
    }
    let mut out = Vec::new();
    for (i, &ci) in classes.of.iter().enumerate() {
        for (j, &cj) in classes.of.iter().enumerate() {
            if let Some(k) = combined[ci * n + cj] {
                out.extend(classes.members[k].iter().map(|&r| BinaryTriple {
                    left: i,
                    right: j,
                    result: r,
                }));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Object, World};

    fn pair(form: LogicalForm, v: f64) -> AlignedPair {
        let schema = AttributeSchema::default_schema();
        let obj = Object::from_names(&schema, &["green", "cube"]).unwrap();
        AlignedPair {
            form,
            message: MessageVector::new(vec![v]),
            scene_index: 0,
            scene: Scene::new(World::new(vec![obj]), vec![true]).unwrap(),
        }
    }

    fn green() -> LogicalForm {
        LogicalForm::atom("color", "green")
    }

    fn cube() -> LogicalForm {
        LogicalForm::atom("shape", "cube")
    }

    #[test]
    fn negation_pairs_both_directions() {
        let s = AttributeSchema::default_schema();
        let aligned = vec![pair(green(), 1.0), pair(LogicalForm::not(green()), 2.0), pair(cube(), 3.0)];
        let pairs = collect_negation_pairs(&aligned, &s).unwrap();
        assert_eq!(
            pairs,
            vec![NegationPair { source: 0, negated: 1 }, NegationPair { source: 1, negated: 0 }]
        );
        assert_eq!(pairs[0].vectors(&aligned), (&[1.0][..], &[2.0][..]));
        assert!(collect_negation_pairs(&aligned[..1], &s).unwrap().is_empty());
        assert!(collect_negation_pairs(&[], &s).unwrap().is_empty());
    }

    #[test]
    fn negation_uses_equivalence_not_syntax() {
        let s = AttributeSchema::default_schema();
        let a = LogicalForm::and(green(), cube());
        let de_morgan = LogicalForm::or(LogicalForm::not(cube()), LogicalForm::not(green()));
        let aligned = vec![pair(a, 1.0), pair(de_morgan, 2.0)];
        assert_eq!(collect_negation_pairs(&aligned, &s).unwrap().len(), 2);
    }

    #[test]
    fn binary_triples_with_symmetry() {
        let s = AttributeSchema::default_schema();
        let aligned = vec![
            pair(green(), 1.0),
            pair(cube(), 2.0),
            pair(LogicalForm::and(green(), cube()), 3.0),
            pair(LogicalForm::or(cube(), green()), 4.0),
        ];
        let and = collect_binary_triples(&aligned, &s, BinaryOp::And).unwrap();
        assert_eq!(
            and,
            vec![
                BinaryTriple { left: 0, right: 1, result: 2 },
                BinaryTriple { left: 1, right: 0, result: 2 }
            ]
        );
        let or = collect_binary_triples(&aligned, &s, BinaryOp::Or).unwrap();
        assert_eq!(or.len(), 2);
        assert!(or.iter().all(|t| t.result == 3));
        assert!(collect_binary_triples(&[], &s, BinaryOp::Or).unwrap().is_empty());
    }
}
