//! Edits, patches, patch application and syntactic-equivalence
//! fingerprinting.
//!
//! Run logs carry one patch per line as `seed | edit ; edit ... | fingerprint`
//! where each edit is written as:
//!
//! ```text
//! delete(f[0.1])                 copy(f[2],f[0]@1)
//! replace(f[src],f[dst])         swap(f[1],f[3.0])
//! insert_break(f[1.0]@2)         insert_continue(f[]@0)
//! insert_return(f[]@3)           llm(f[1.0],medium,"{\n    x = 1;\n}")
//! ```
//!
//! Statement ids are `function[path]` with the child-index path dot-separated
//! (`f[]` is the function body), insertion points append `@index`, and LLM
//! payloads are JSON string literals (or `-` when the response had no code
//! block). The fingerprint column is the hex SHA-256 of the patched program's
//! canonical printing, or `invalid` when the patch does not apply.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use minilang::{
    parse_block, print_canonical, Digest, Function, ParseError, SourceUnit, StatementId, Stmt,
};

use crate::family::PromptCategory;

/// A position between statements of a block: `index` in `0..=len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct InsertionPoint {
    pub block: StatementId,
    pub index: usize,
}

impl InsertionPoint {
    pub fn new(block: StatementId, index: usize) -> Self {
        InsertionPoint { block, index }
    }
}

impl fmt::Display for InsertionPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.block, self.index)
    }
}

impl FromStr for InsertionPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (block, index) = s
            .rsplit_once('@')
            .ok_or_else(|| format!("malformed insertion point `{s}`"))?;
        Ok(InsertionPoint {
            block: block.parse().map_err(|e| format!("{e}"))?,
            index: index
                .parse()
                .map_err(|_| format!("malformed insertion index in `{s}`"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditKind {
    Delete,
    Copy,
    Replace,
    Swap,
    InsertBreak,
    InsertContinue,
    InsertReturn,
    LlmBlockReplace,
}

impl EditKind {
    pub const STATEMENT: [EditKind; 4] = [Self::Delete, Self::Copy, Self::Replace, Self::Swap];
    pub const INSERT: [EditKind; 3] = [Self::InsertBreak, Self::InsertContinue, Self::InsertReturn];

    fn tag(self) -> &'static str {
        match self {
            EditKind::Delete => "delete",
            EditKind::Copy => "copy",
            EditKind::Replace => "replace",
            EditKind::Swap => "swap",
            EditKind::InsertBreak => "insert_break",
            EditKind::InsertContinue => "insert_continue",
            EditKind::InsertReturn => "insert_return",
            EditKind::LlmBlockReplace => "llm",
        }
    }
}

/// One atomic mutation. Ids are resolved against the program the edit is
/// applied to, not the one it was drawn from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Edit {
    Delete {
        target: StatementId,
    },
    Copy {
        source: StatementId,
        dest: InsertionPoint,
    },
    /// Overwrites `target` with a copy of `source`.
    Replace {
        source: StatementId,
        target: StatementId,
    },
    Swap {
        first: StatementId,
        second: StatementId,
    },
    InsertBreak {
        at: InsertionPoint,
    },
    InsertContinue {
        at: InsertionPoint,
    },
    /// Inserts `return;`, or `return <default>;` in a non-void function.
    InsertReturn {
        at: InsertionPoint,
    },
    /// Replaces the block at `block` with the parsed payload. `payload` is
    /// `None` when the model's answer held no code block.
    LlmBlockReplace {
        block: StatementId,
        payload: Option<String>,
        category: PromptCategory,
    },
}

impl Edit {
    pub fn kind(&self) -> EditKind {
        match self {
            Edit::Delete { .. } => EditKind::Delete,
            Edit::Copy { .. } => EditKind::Copy,
            Edit::Replace { .. } => EditKind::Replace,
            Edit::Swap { .. } => EditKind::Swap,
            Edit::InsertBreak { .. } => EditKind::InsertBreak,
            Edit::InsertContinue { .. } => EditKind::InsertContinue,
            Edit::InsertReturn { .. } => EditKind::InsertReturn,
            Edit::LlmBlockReplace { .. } => EditKind::LlmBlockReplace,
        }
    }

    /// The function the edit targets.
    pub fn function(&self) -> &str {
        match self {
            Edit::Delete { target } => &target.function,
            Edit::Copy { dest, .. } => &dest.block.function,
            Edit::Replace { target, .. } => &target.function,
            Edit::Swap { first, .. } => &first.function,
            Edit::InsertBreak { at } | Edit::InsertContinue { at } | Edit::InsertReturn { at } => {
                &at.block.function
            }
            Edit::LlmBlockReplace { block, .. } => &block.function,
        }
    }
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = self.kind().tag();
        match self {
            Edit::Delete { target } => write!(f, "{tag}({target})"),
            Edit::Copy { source, dest } => write!(f, "{tag}({source},{dest})"),
            Edit::Replace { source, target } => write!(f, "{tag}({source},{target})"),
            Edit::Swap { first, second } => write!(f, "{tag}({first},{second})"),
            Edit::InsertBreak { at } | Edit::InsertContinue { at } | Edit::InsertReturn { at } => {
                write!(f, "{tag}({at})")
            }
            Edit::LlmBlockReplace {
                block,
                payload,
                category,
            } => {
                write!(f, "{tag}({block},{category},")?;
                match payload {
                    Some(p) => write!(f, "{}", serde_json::to_string(p).expect("string")),
                    None => f.write_str("-"),
                }?;
                f.write_str(")")
            }
        }
    }
}

impl FromStr for Edit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (tag, rest) = s
            .split_once('(')
            .ok_or_else(|| format!("malformed edit `{s}`"))?;
        let args = rest
            .strip_suffix(')')
            .ok_or_else(|| format!("malformed edit `{s}`"))?;
        let id = |t: &str| t.parse::<StatementId>().map_err(|e| e.to_string());
        let two = || {
            args.split_once(',')
                .ok_or_else(|| format!("`{tag}` takes two arguments"))
        };
        Ok(match tag {
            "delete" => Edit::Delete { target: id(args)? },
            "copy" => {
                let (a, b) = two()?;
                Edit::Copy {
                    source: id(a)?,
                    dest: b.parse()?,
                }
            }
            "replace" => {
                let (a, b) = two()?;
                Edit::Replace {
                    source: id(a)?,
                    target: id(b)?,
                }
            }
            "swap" => {
                let (a, b) = two()?;
                Edit::Swap {
                    first: id(a)?,
                    second: id(b)?,
                }
            }
            "insert_break" => Edit::InsertBreak { at: args.parse()? },
            "insert_continue" => Edit::InsertContinue { at: args.parse()? },
            "insert_return" => Edit::InsertReturn { at: args.parse()? },
            "llm" => {
                let (block, rest) = two()?;
                let (category, payload) = rest
                    .split_once(',')
                    .ok_or_else(|| "`llm` takes three arguments".to_string())?;
                let payload = if payload == "-" {
                    None
                } else {
                    Some(serde_json::from_str::<String>(payload).map_err(|e| e.to_string())?)
                };
                Edit::LlmBlockReplace {
                    block: id(block)?,
                    payload,
                    category: category.parse()?,
                }
            }
            other => return Err(format!("unknown edit kind `{other}`")),
        })
    }
}

/// An ordered edit sequence against one source unit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Patch {
    pub base: String,
    pub edits: Vec<Edit>,
    /// Seed of the random stream the edits were drawn from.
    pub seed: u64,
}

impl Patch {
    pub fn empty(base: impl Into<String>, seed: u64) -> Self {
        Patch {
            base: base.into(),
            edits: Vec::new(),
            seed,
        }
    }

    pub fn single(base: impl Into<String>, edit: Edit, seed: u64) -> Self {
        Patch {
            base: base.into(),
            edits: vec![edit],
            seed,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    /// The `edit ; edit` middle column of a log line.
    pub fn edits_text(&self) -> String {
        self.edits
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(" ; ")
    }

    /// Full log line: `seed | edits | fingerprint`.
    pub fn to_log_line(&self, fingerprint: Option<Digest>) -> String {
        let fp = fingerprint.map_or_else(|| "invalid".to_string(), |d| d.to_hex());
        let edits = self.edits_text();
        if edits.is_empty() {
            format!("{} | | {fp}", self.seed)
        } else {
            format!("{} | {edits} | {fp}", self.seed)
        }
    }
}

/// A parsed log line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchLine {
    pub seed: u64,
    pub edits: Vec<Edit>,
    pub fingerprint: Option<Digest>,
}

impl PatchLine {
    pub fn into_patch(self, base: impl Into<String>) -> Patch {
        Patch {
            base: base.into(),
            edits: self.edits,
            seed: self.seed,
        }
    }
}

/// Splits on `sep` outside JSON string literals.
fn split_top_level(s: &str, sep: char) -> Vec<&str> {
    let mut parts = Vec::new();
    let (mut in_str, mut escaped, mut start) = (false, false, 0);
    for (i, c) in s.char_indices() {
        if in_str {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
        } else if c == '"' {
            in_str = true;
        } else if c == sep {
            parts.push(&s[start..i]);
            start = i + c.len_utf8();
        }
    }
    parts.push(&s[start..]);
    parts
}

impl FromStr for PatchLine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let cols = split_top_level(s, '|');
        let [seed, edits, fp] = cols.as_slice() else {
            return Err(format!("patch line needs three `|` columns: `{s}`"));
        };
        let seed = seed
            .trim()
            .parse()
            .map_err(|_| format!("bad seed `{}`", seed.trim()))?;
        let edits = split_top_level(edits, ';')
            .into_iter()
            .filter(|e| !e.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Edit>, _>>()?;
        let fingerprint = match fp.trim() {
            "invalid" => None,
            hex => Some(hex.parse().map_err(|e| format!("{e}"))?),
        };
        Ok(PatchLine {
            seed,
            edits,
            fingerprint,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ApplyError {
    #[error("statement id `{0}` does not resolve")]
    UnresolvableId(String),
    #[error("replacement block does not parse: {0}")]
    PayloadUnparsable(ParseError),
    #[error("model response contained no code block")]
    MissingPayload,
    #[error("patch is for `{patch}` but the program is `{unit}`")]
    BaseMismatch { patch: String, unit: String },
}

fn unresolved(id: &impl fmt::Display) -> ApplyError {
    ApplyError::UnresolvableId(id.to_string())
}

/// Applies `patch` to `unit`, returning a new unit. The input is untouched.
pub fn apply_patch(unit: &SourceUnit, patch: &Patch) -> Result<SourceUnit, ApplyError> {
    if patch.base != unit.name() {
        return Err(ApplyError::BaseMismatch {
            patch: patch.base.clone(),
            unit: unit.name().to_string(),
        });
    }
    if patch.edits.is_empty() {
        return Ok(unit.clone());
    }
    let mut functions = unit.functions().to_vec();
    for edit in &patch.edits {
        apply_edit(&mut functions, edit)?;
    }
    Ok(unit.with_functions(functions))
}

/// Applies one edit in place. On error `functions` may be partially modified.
pub fn apply_edit(functions: &mut [Function], edit: &Edit) -> Result<(), ApplyError> {
    let fname = edit.function();
    let func = functions
        .iter_mut()
        .find(|f| f.name == fname)
        .ok_or_else(|| ApplyError::UnresolvableId(format!("{fname}[]")))?;
    match edit {
        Edit::Delete { target } => delete(func, target),
        Edit::Copy { source, dest } => {
            let copy = lookup(func, source)?.clone();
            insert(func, dest, copy)
        }
        Edit::Replace { source, target } => {
            same_function(source, target)?;
            let copy = lookup(func, source)?.clone();
            *lookup_mut(func, target)? = copy;
            Ok(())
        }
        Edit::Swap { first, second } => {
            same_function(first, second)?;
            let a = lookup(func, first)?.clone();
            let b = lookup(func, second)?.clone();
            if first == second {
                return Ok(());
            }
            // Once one side is overwritten the other no longer exists.
            if first.overlaps(second) {
                return Err(unresolved(second));
            }
            *lookup_mut(func, first)? = b;
            *lookup_mut(func, second)? = a;
            Ok(())
        }
        Edit::InsertBreak { at } => insert(func, at, Stmt::Break),
        Edit::InsertContinue { at } => insert(func, at, Stmt::Continue),
        Edit::InsertReturn { at } => {
            let value = func.return_type.default_value();
            insert(func, at, Stmt::Return(value))
        }
        Edit::LlmBlockReplace { block, payload, .. } => {
            let text = payload.as_deref().ok_or(ApplyError::MissingPayload)?;
            let target = func
                .block_at_mut(&block.path)
                .ok_or_else(|| unresolved(block))?;
            *target = parse_block(text).map_err(ApplyError::PayloadUnparsable)?;
            Ok(())
        }
    }
}

fn same_function(a: &StatementId, b: &StatementId) -> Result<(), ApplyError> {
    if a.function == b.function {
        Ok(())
    } else {
        Err(unresolved(b))
    }
}

fn lookup<'f>(func: &'f Function, id: &StatementId) -> Result<&'f Stmt, ApplyError> {
    func.stmt_at(&id.path).ok_or_else(|| unresolved(id))
}

fn lookup_mut<'f>(func: &'f mut Function, id: &StatementId) -> Result<&'f mut Stmt, ApplyError> {
    func.stmt_at_mut(&id.path).ok_or_else(|| unresolved(id))
}

/// Removes a statement from its block; a statement in a fixed slot (an `if`
/// branch or loop body) is replaced by an empty block instead.
fn delete(func: &mut Function, id: &StatementId) -> Result<(), ApplyError> {
    let Some((&last, parent)) = id.path.split_last() else {
        return Err(unresolved(id));
    };
    if parent.is_empty() {
        if last >= func.body.statements.len() {
            return Err(unresolved(id));
        }
        func.body.statements.remove(last);
        return Ok(());
    }
    let parent_stmt = func.stmt_at_mut(parent).ok_or_else(|| unresolved(id))?;
    match parent_stmt {
        Stmt::Block(b) if last < b.statements.len() => {
            b.statements.remove(last);
            Ok(())
        }
        other => {
            let slot = other.child_mut(last).ok_or_else(|| unresolved(id))?;
            *slot = Stmt::empty_block();
            Ok(())
        }
    }
}

fn insert(func: &mut Function, at: &InsertionPoint, stmt: Stmt) -> Result<(), ApplyError> {
    let block = func
        .block_at_mut(&at.block.path)
        .ok_or_else(|| unresolved(at))?;
    if at.index > block.statements.len() {
        return Err(unresolved(at));
    }
    block.statements.insert(at.index, stmt);
    Ok(())
}

/// Digest of the canonical printing of the patched program.
pub fn fingerprint(unit: &SourceUnit, patch: &Patch) -> Result<Digest, ApplyError> {
    apply_patch(unit, patch).map(|u| u.digest())
}

/// Canonical text of the patched program.
pub fn patched_text(unit: &SourceUnit, patch: &Patch) -> Result<String, ApplyError> {
    apply_patch(unit, patch).map(|u| print_canonical(&u))
}

/// Indices into the input list, by uniqueness class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UniquenessPartition {
    /// First-drawn patch of each distinct patched program.
    pub unique: Vec<usize>,
    pub duplicates: Vec<usize>,
    /// Patched program prints identically to the original.
    pub equivalent_to_original: Vec<usize>,
    /// Did not apply.
    pub invalid: Vec<usize>,
}

pub fn classify_uniqueness(patches: &[Patch], unit: &SourceUnit) -> UniquenessPartition {
    let fps: Vec<Option<Digest>> = patches.iter().map(|p| fingerprint(unit, p).ok()).collect();
    partition_fingerprints(&fps, unit.digest())
}

/// Partition over precomputed fingerprints (`None` = patch did not apply).
pub fn partition_fingerprints(fps: &[Option<Digest>], original: Digest) -> UniquenessPartition {
    let mut seen: HashMap<Digest, usize> = HashMap::new();
    let mut out = UniquenessPartition::default();
    for (i, fp) in fps.iter().enumerate() {
        match fp {
            None => out.invalid.push(i),
            Some(d) if *d == original => out.equivalent_to_original.push(i),
            Some(d) => {
                if seen.insert(*d, i).is_some() {
                    out.duplicates.push(i);
                } else {
                    out.unique.push(i);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use minilang::{parse_source, validate};

    fn unit(src: &str) -> SourceUnit {
        parse_source("u", src).unwrap()
    }

    fn sid(f: &str, path: &[usize]) -> StatementId {
        StatementId::new(f, path.to_vec())
    }

    fn patch(edits: Vec<Edit>) -> Patch {
        Patch {
            base: "u".into(),
            edits,
            seed: 0,
        }
    }

    #[test]
    fn delete_only_statement_breaks_compilation_not_parsing() {
        let u = unit("fn f() -> int { return 1; }");
        let p = patch(vec![Edit::Delete {
            target: sid("f", &[0]),
        }]);
        let out = apply_patch(&u, &p).unwrap();
        assert!(validate(&out).is_err());
        assert!(validate(&u).is_ok(), "input must be untouched");
    }

    #[test]
    fn self_swap_is_equivalent_to_original() {
        let u = unit("fn f() -> int { let x = 1; return x; }");
        let p = patch(vec![Edit::Swap {
            first: sid("f", &[0]),
            second: sid("f", &[0]),
        }]);
        assert_eq!(fingerprint(&u, &p).unwrap(), u.digest());
        assert_eq!(fingerprint(&u, &patch(vec![])).unwrap(), u.digest());
    }

    #[test]
    fn slot_delete_leaves_empty_block() {
        let u = unit("fn f(x: int) { while (x > 0) x = x - 1; }");
        let out = apply_patch(
            &u,
            &patch(vec![Edit::Delete {
                target: sid("f", &[0, 0]),
            }]),
        )
        .unwrap();
        assert_eq!(
            print_canonical(&out),
            "fn f(x: int) {\n    while (x > 0) {}\n}\n"
        );
    }

    #[test]
    fn overlapping_swap_is_unresolvable() {
        let u = unit("fn f(x: int) { while (x > 0) { x = x - 1; } }");
        for (a, b) in [(&[0][..], &[0, 0, 0][..]), (&[0, 0, 0], &[0])] {
            let err = apply_patch(
                &u,
                &patch(vec![Edit::Swap {
                    first: sid("f", a),
                    second: sid("f", b),
                }]),
            )
            .unwrap_err();
            assert!(matches!(err, ApplyError::UnresolvableId(_)));
        }
    }

    #[test]
    fn earlier_edits_invalidate_later_ids() {
        let u = unit("fn f() { let a = 1; let b = 2; }");
        let p = patch(vec![
            Edit::Delete {
                target: sid("f", &[1]),
            },
            Edit::Delete {
                target: sid("f", &[1]),
            },
        ]);
        assert_eq!(
            apply_patch(&u, &p).unwrap_err(),
            ApplyError::UnresolvableId("f[1]".into())
        );
    }

    #[test]
    fn insert_return_uses_default_literal() {
        for (sig, want) in [
            ("-> int", "return 0;"),
            ("-> bool", "return false;"),
            ("-> int[]", "return [];"),
            ("", "return;"),
        ] {
            let u = unit(&format!("fn f() {sig} {{ while (true) {{ }} }}"));
            let out = apply_patch(
                &u,
                &patch(vec![Edit::InsertReturn {
                    at: InsertionPoint::new(sid("f", &[]), 0),
                }]),
            )
            .unwrap();
            assert!(print_canonical(&out).contains(want), "{sig}");
        }
    }

    #[test]
    fn llm_payload_errors() {
        let u = unit("fn f() -> int { return 1; }");
        let mk = |payload: Option<&str>| {
            patch(vec![Edit::LlmBlockReplace {
                block: sid("f", &[]),
                payload: payload.map(str::to_string),
                category: PromptCategory::Medium,
            }])
        };
        assert_eq!(
            apply_patch(&u, &mk(None)).unwrap_err(),
            ApplyError::MissingPayload
        );
        assert!(matches!(
            apply_patch(&u, &mk(Some("{ class Foo { } }"))).unwrap_err(),
            ApplyError::PayloadUnparsable(_)
        ));
        let out = apply_patch(&u, &mk(Some("return 2;"))).unwrap();
        assert!(print_canonical(&out).contains("return 2;"));
        // non-block target
        let bad = patch(vec![Edit::LlmBlockReplace {
            block: sid("f", &[0]),
            payload: Some("{}".into()),
            category: PromptCategory::Medium,
        }]);
        assert!(matches!(
            apply_patch(&u, &bad).unwrap_err(),
            ApplyError::UnresolvableId(_)
        ));
    }

    #[test]
    fn base_mismatch() {
        let u = unit("fn f() { }");
        let p = Patch::empty("other", 0);
        assert!(matches!(
            apply_patch(&u, &p),
            Err(ApplyError::BaseMismatch { .. })
        ));
    }

    #[test]
    fn uniqueness_partition() {
        let u = unit("fn f() { let a = 1; let b = 2; }");
        let del = patch(vec![Edit::Delete {
            target: sid("f", &[0]),
        }]);
        let del_twice_drawn = del.clone();
        let noop = patch(vec![Edit::Swap {
            first: sid("f", &[1]),
            second: sid("f", &[1]),
        }]);
        let broken = patch(vec![Edit::Delete {
            target: sid("f", &[7]),
        }]);
        let part = classify_uniqueness(&[del, del_twice_drawn, noop, broken], &u);
        assert_eq!(part.unique, vec![0]);
        assert_eq!(part.duplicates, vec![1]);
        assert_eq!(part.equivalent_to_original, vec![2]);
        assert_eq!(part.invalid, vec![3]);
    }

    #[test]
    fn log_line_round_trip_with_awkward_payload() {
        let p = Patch {
            base: "u".into(),
            seed: 17,
            edits: vec![
                Edit::Copy {
                    source: sid("f", &[1, 0]),
                    dest: InsertionPoint::new(sid("f", &[]), 2),
                },
                Edit::LlmBlockReplace {
                    block: sid("f", &[2]),
                    payload: Some("{ x = 1; } | ; \"quoted\" \\ )".into()),
                    category: PromptCategory::Detailed,
                },
                Edit::LlmBlockReplace {
                    block: sid("g", &[]),
                    payload: None,
                    category: PromptCategory::Simple,
                },
            ],
        };
        let d = Digest::of(b"x");
        let line = p.to_log_line(Some(d));
        let parsed: PatchLine = line.parse().unwrap();
        assert_eq!(parsed.seed, 17);
        assert_eq!(parsed.edits, p.edits);
        assert_eq!(parsed.fingerprint, Some(d));

        let empty: PatchLine = Patch::empty("u", 3).to_log_line(None).parse().unwrap();
        assert!(empty.edits.is_empty());
        assert_eq!(empty.fingerprint, None);
    }
}
