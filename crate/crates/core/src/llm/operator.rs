//! The LLM block-rewrite operator.

use minilang::{print_block, SourceUnit, StatementId};
use rand::Rng;

use super::client::{ClientError, LlmClient};
use super::extract::split_variants;
use super::prompt::{build_prompt, PromptTemplate};
use crate::operators::{pick, OperatorError};
use crate::patch::Edit;

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Client(#[from] ClientError),
}

/// A block chosen for rewriting and its canonical text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockTarget {
    pub block: StatementId,
    pub code: String,
}

/// Uniform hot function, then a uniform block within it (the body included).
pub fn select_block(
    unit: &SourceUnit,
    hot: &[String],
    rng: &mut impl Rng,
) -> Result<BlockTarget, OperatorError> {
    if hot.is_empty() {
        return Err(OperatorError::NoHotFunctions);
    }
    let name = &hot[pick(rng, hot.len())];
    let func = unit
        .function(name)
        .ok_or_else(|| OperatorError::UnknownFunction(name.clone()))?;
    let paths = func.block_paths();
    let path = paths[pick(rng, paths.len())].clone();
    let code = print_block(func.block_at(&path).expect("block path"));
    Ok(BlockTarget {
        block: StatementId::new(name.clone(), path),
        code,
    })
}

/// Sends one request for a randomly selected block and returns one edit per
/// requested variant. Variant `i` takes the `i`-th fenced block of the
/// answer; variants the answer has no block for get no payload and fail to
/// apply.
pub fn make_llm_edits(
    unit: &SourceUnit,
    hot: &[String],
    rng: &mut impl Rng,
    client: &LlmClient,
    template: &PromptTemplate,
) -> Result<Vec<Edit>, LlmError> {
    let target = select_block(unit, hot, rng)?;
    let mut req = client.request(build_prompt(template, &target.code));
    req.variant_count = template.variants;
    let resp = client.complete(&req)?;
    Ok(split_variants(&resp.raw_text, template.variants)
        .into_iter()
        .map(|payload| Edit::LlmBlockReplace {
            block: target.block.clone(),
            payload,
            category: template.category,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::PromptCategory;
    use crate::llm::client::{LlmClientConfig, ScriptedMock};
    use crate::operators::rng_from_seed;
    use crate::patch::{apply_patch, fingerprint, Patch};
    use minilang::parse_source;
    use std::collections::BTreeMap;

    fn client(responses: Vec<String>) -> LlmClient {
        LlmClient::with_transport(
            LlmClientConfig::default(),
            Some(Box::new(ScriptedMock::new(responses))),
        )
        .unwrap()
    }

    fn fenced(code: &str) -> String {
        format!("```minilang\n{code}\n```\n")
    }

    #[test]
    fn block_selection_is_uniform_over_blocks() {
        // body, while body, if-then block, else block
        let u = parse_source(
            "u",
            "fn f(x: int) { while (x > 0) { if (x > 2) { x = x - 2; } else { x = x - 1; } } }",
        )
        .unwrap();
        let hot = vec!["f".to_string()];
        let mut hist: BTreeMap<Vec<usize>, u32> = BTreeMap::new();
        for seed in 0..4000 {
            let t = select_block(&u, &hot, &mut rng_from_seed(seed)).unwrap();
            *hist.entry(t.block.path).or_default() += 1;
        }
        assert_eq!(hist.len(), 4);
        // Bin(4000, 1/4): sd ~ 27, so +-150 is beyond 5 sd.
        for (path, n) in hist {
            assert!((850..=1150).contains(&n), "{path:?}: {n}");
        }
    }

    #[test]
    fn five_rewrites_five_applicable_edits() {
        let u = parse_source("u", "fn f() -> int { return 1; }").unwrap();
        let c = client(vec![(0..5)
            .map(|i| fenced(&format!("{{ return {i}; }}")))
            .collect()]);
        let t = PromptTemplate::new(PromptCategory::Medium, "bench");
        let edits = make_llm_edits(&u, &["f".into()], &mut rng_from_seed(0), &c, &t).unwrap();
        assert_eq!(edits.len(), 5);
        for e in edits {
            assert!(apply_patch(&u, &Patch::single("u", e, 0)).is_ok());
        }
        assert_eq!(c.requests_issued(), 1);
    }

    #[test]
    fn prose_answers_are_invalid_draws() {
        let u = parse_source("u", "fn f() -> int { return 1; }").unwrap();
        let text = format!(
            "{}{}{}Also, consider caching.\nThat is all.",
            fenced("{ return 1; }"),
            fenced("{ return 2; }"),
            fenced("{ return 3; }")
        );
        let c = client(vec![text]);
        let t = PromptTemplate::new(PromptCategory::Simple, "bench");
        let edits = make_llm_edits(&u, &["f".into()], &mut rng_from_seed(0), &c, &t).unwrap();
        let ok = edits
            .into_iter()
            .filter(|e| apply_patch(&u, &Patch::single("u", e.clone(), 0)).is_ok())
            .count();
        assert_eq!(ok, 3);
    }

    #[test]
    fn echo_is_equivalent_to_original() {
        let u = parse_source("u", "fn f() -> int { let a = 1; return a; }").unwrap();
        let body = print_block(&u.function("f").unwrap().body);
        let c = client(vec![fenced(&body)]);
        let mut t = PromptTemplate::new(PromptCategory::Detailed, "bench");
        t.variants = 1;
        let edits = make_llm_edits(&u, &["f".into()], &mut rng_from_seed(1), &c, &t).unwrap();
        // the body is the only block
        assert_eq!(
            fingerprint(&u, &Patch::single("u", edits[0].clone(), 0)).unwrap(),
            u.digest()
        );
    }
}
