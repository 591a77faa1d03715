use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{AgreementReport, ProbeError, ReportRow, Result};
use crate::logic::{most_frequent_form, LogicalForm};
use crate::meaning::{agreement, table_of_form, table_of_message, Agreement, MeaningTable, WorldSample};
use crate::net::{encode, ModelParams};
use crate::scene::{AnnotatedScene, AttributeSchema, Scene};
use crate::seeds::mix;

/// A prediction rule for how the decoder will read a scene's message in
/// other worlds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theory {
    /// Independent fair coin per entry.
    Random(u64),
    /// Positive exactly on objects identical to some original target object.
    Literal,
    /// Denotation of the most frequent annotation.
    Human,
}

impl Theory {
    pub fn label(&self) -> &'static str {
        match self {
            Theory::Random(_) => "random",
            Theory::Literal => "literal",
            Theory::Human => "human",
        }
    }
}

/// Literal-theory table for `scene` over `sample`.
pub fn literal_table(scene: &Scene, sample: &WorldSample) -> MeaningTable {
    let targets: Vec<_> = scene.target_objects().collect();
    MeaningTable {
        rows: sample
            .worlds
            .iter()
            .map(|w| w.objects.iter().map(|o| targets.contains(&o)).collect())
            .collect(),
    }
}

pub(crate) fn random_table(seed: u64, sample: &WorldSample) -> MeaningTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MeaningTable {
        rows: sample
            .worlds
            .iter()
            .map(|w| (0..w.len()).map(|_| rng.random_bool(0.5)).collect())
            .collect(),
    }
}

pub fn theory_table(
    theory: Theory,
    scene: &Scene,
    annotations: &[LogicalForm],
    sample: &WorldSample,
    schema: &AttributeSchema,
) -> Result<MeaningTable> {
    match theory {
        Theory::Random(seed) => Ok(random_table(seed, sample)),
        Theory::Literal => Ok(literal_table(scene, sample)),
        Theory::Human => {
            if annotations.is_empty() {
                return Err(ProbeError::Argument("human theory needs at least one annotation".into()));
            }
            let form = most_frequent_form(annotations, schema)?;
            Ok(table_of_form(&form, sample, schema)?)
        }
    }
}

/// Compares each scene's message table with the random, literal and human
/// theories. The random theory for scene `i` is seeded from
/// `(random_seed, i)`; scenes without annotations are left out of the
/// human row.
pub fn evaluate_theories(
    params: &ModelParams,
    dataset: &[AnnotatedScene],
    sample: &WorldSample,
    schema: &AttributeSchema,
    random_seed: u64,
) -> Result<AgreementReport> {
    if dataset.is_empty() {
        return Err(ProbeError::Argument("empty dataset".into()));
    }
    let per_scene = dataset
        .par_iter()
        .enumerate()
        .map(|(i, item)| {
            let f = encode(params, &item.scene, schema)?;
            let observed = table_of_message(params, &f, sample, schema)?;
            let mut out: [Option<Agreement>; 3] = [None; 3];
            let theories = [Theory::Random(mix(random_seed, i as u64)), Theory::Literal, Theory::Human];
            for (slot, theory) in out.iter_mut().zip(theories) {
                if theory == Theory::Human && item.forms.is_empty() {
                    continue;
                }
                let predicted = theory_table(theory, &item.scene, &item.forms, sample, schema)?;
                *slot = Some(agreement(&predicted, &observed)?);
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut report = AgreementReport::new("theories", sample.seed, sample.len());
    report.push_meta("random_seed", random_seed);
    for (slot, label) in ["random", "literal", "human"].into_iter().enumerate() {
        let values: Vec<Agreement> = per_scene.iter().filter_map(|s| s[slot]).collect();
        if let Some(mean) = Agreement::mean(&values) {
            report.rows.push(ReportRow {
                label: label.into(),
                agreement: mean,
                count: values.len(),
            });
        }
    }
    if let (Some(h), Some(l)) = (report.row("human"), report.row("literal")) {
        if h.agreement.objects < l.agreement.objects {
            report.notes.push("human theory agrees less than the literal theory at the object level".into());
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meaning::make_sample;
    use crate::scene::{Object, SizeBounds, World};

    fn schema() -> AttributeSchema {
        AttributeSchema::default_schema()
    }

    fn obj(names: &[&str]) -> Object {
        Object::from_names(&schema(), names).unwrap()
    }

    #[test]
    fn literal_rule() {
        let scene = Scene::new(
            World::new(vec![obj(&["green", "triangle"]), obj(&["tan", "cube"])]),
            vec![true, false],
        )
        .unwrap();
        let sample = WorldSample {
            worlds: vec![World::new(vec![obj(&["green", "triangle"]), obj(&["green", "arch"])])],
            seed: 0,
        };
        let t = theory_table(Theory::Literal, &scene, &[], &sample, &schema()).unwrap();
        assert_eq!(t.rows, vec![vec![true, false]]);

        let mut shuffled = scene.clone();
        shuffled.world.objects.reverse();
        shuffled.target.reverse();
        assert_eq!(literal_table(&shuffled, &sample), t);
    }

    #[test]
    fn human_theory_uses_denotation() {
        let s = schema();
        let sample = make_sample(4, &s, 10, SizeBounds::default()).unwrap();
        let scene = Scene::new(World::new(vec![obj(&["green", "cube"])]), vec![true]).unwrap();
        let green = LogicalForm::atom("color", "green");
        let t = theory_table(Theory::Human, &scene, &[green], &sample, &s).unwrap();
        for (row, w) in t.rows.iter().zip(&sample.worlds) {
            for (b, o) in row.iter().zip(&w.objects) {
                assert_eq!(*b, o.values[0] == 0);
            }
        }
        assert!(matches!(
            theory_table(Theory::Human, &scene, &[], &sample, &s),
            Err(ProbeError::Argument(_))
        ));
    }

    #[test]
    fn random_theory_is_a_fair_coin() {
        let s = schema();
        let sample = make_sample(5, &s, 30, SizeBounds::default()).unwrap();
        let scene = Scene::new(World::new(vec![obj(&["green", "cube"])]), vec![true]).unwrap();
        let fixed = literal_table(&scene, &sample);
        let mut total = 0.0;
        for seed in 0..200 {
            let t = theory_table(Theory::Random(seed), &scene, &[], &sample, &s).unwrap();
            total += agreement(&t, &fixed).unwrap().objects;
        }
        let mean = total / 200.0;
        assert!((mean - 0.5).abs() < 0.02, "{mean}");
        assert_eq!(
            theory_table(Theory::Random(3), &scene, &[], &sample, &s).unwrap(),
            theory_table(Theory::Random(3), &scene, &[], &sample, &s).unwrap()
        );
    }
}
