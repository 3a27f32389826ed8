//! Random samplers for the classic edit families.

use minilang::{Function, SourceUnit, StatementId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::family::OperatorFamily;
use crate::patch::{Edit, EditKind, InsertionPoint};

/// The random source every sampler draws from.
pub type GiRng = ChaCha8Rng;

/// How many times an empty hot function is re-drawn before giving up.
pub const MAX_FUNCTION_RETRIES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OperatorError {
    #[error("no hot functions to target")]
    NoHotFunctions,
    #[error("hot function `{0}` is not defined")]
    UnknownFunction(String),
    #[error("no statements to target in the hot functions")]
    NoTargetStatements,
    #[error("the {0} family is not a classic edit family")]
    NotClassic(OperatorFamily),
}

pub fn rng_from_seed(seed: u64) -> GiRng {
    GiRng::seed_from_u64(seed)
}

/// Seed for draw `index` of `family` under run seed `base` (splitmix64 mix).
pub fn derive_seed(base: u64, family: OperatorFamily, index: u64) -> u64 {
    let mut z = base
        .wrapping_add((family.tag() + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform index in `0..n`, identical on every platform.
pub fn pick(rng: &mut impl Rng, n: usize) -> usize {
    assert!(n > 0, "pick from an empty range");
    rng.gen_range(0..n as u64) as usize
}

fn hot_function<'u>(
    unit: &'u SourceUnit,
    hot: &[String],
    rng: &mut impl Rng,
) -> Result<&'u Function, OperatorError> {
    if hot.is_empty() {
        return Err(OperatorError::NoHotFunctions);
    }
    let name = &hot[pick(rng, hot.len())];
    unit.function(name)
        .ok_or_else(|| OperatorError::UnknownFunction(name.clone()))
}

/// Every (block, index) pair of `func`, blocks in pre-order.
pub fn insertion_points(func: &Function) -> Vec<InsertionPoint> {
    func.block_paths()
        .into_iter()
        .flat_map(|path| {
            let len = func.block_at(&path).expect("block path").statements.len();
            let block = StatementId::new(func.name.clone(), path);
            (0..=len).map(move |i| InsertionPoint::new(block.clone(), i))
        })
        .collect()
}

pub fn sample_statement_edit(
    unit: &SourceUnit,
    hot: &[String],
    rng: &mut impl Rng,
) -> Result<Edit, OperatorError> {
    for _ in 0..=MAX_FUNCTION_RETRIES {
        let func = hot_function(unit, hot, rng)?;
        let paths = func.statement_paths();
        if paths.is_empty() {
            continue;
        }
        let kind = EditKind::STATEMENT[pick(rng, EditKind::STATEMENT.len())];
        let id = |p: &Vec<usize>| StatementId::new(func.name.clone(), p.clone());
        let source = id(&paths[pick(rng, paths.len())]);
        return Ok(match kind {
            EditKind::Delete => Edit::Delete { target: source },
            EditKind::Copy => {
                let points = insertion_points(func);
                Edit::Copy {
                    source,
                    dest: points[pick(rng, points.len())].clone(),
                }
            }
            EditKind::Replace => Edit::Replace {
                source,
                target: id(&paths[pick(rng, paths.len())]),
            },
            EditKind::Swap => {
                // An ancestor cannot trade places with its own descendant.
                let partners: Vec<StatementId> = paths
                    .iter()
                    .map(id)
                    .filter(|p| !p.overlaps(&source))
                    .collect();
                Edit::Swap {
                    second: partners[pick(rng, partners.len())].clone(),
                    first: source,
                }
            }
            _ => unreachable!(),
        });
    }
    Err(OperatorError::NoTargetStatements)
}

pub fn sample_insert_edit(
    unit: &SourceUnit,
    hot: &[String],
    rng: &mut impl Rng,
) -> Result<Edit, OperatorError> {
    let func = hot_function(unit, hot, rng)?;
    let kind = EditKind::INSERT[pick(rng, EditKind::INSERT.len())];
    let points = insertion_points(func);
    let at = points[pick(rng, points.len())].clone();
    Ok(match kind {
        EditKind::InsertBreak => Edit::InsertBreak { at },
        EditKind::InsertContinue => Edit::InsertContinue { at },
        EditKind::InsertReturn => Edit::InsertReturn { at },
        _ => unreachable!(),
    })
}

pub fn sample_classic_edit(
    family: OperatorFamily,
    unit: &SourceUnit,
    hot: &[String],
    rng: &mut impl Rng,
) -> Result<Edit, OperatorError> {
    match family {
        OperatorFamily::Statement => sample_statement_edit(unit, hot, rng),
        OperatorFamily::Insert => sample_insert_edit(unit, hot, rng),
        OperatorFamily::Llm(_) => Err(OperatorError::NotClassic(family)),
    }
}
