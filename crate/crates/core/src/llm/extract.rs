//! Fenced code blocks in model responses.

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("response contains no fenced code block")]
    NoCodeBlock,
}

/// Contents of every fenced block, in order. The opening fence may carry a
/// language label, which is dropped; an unclosed fence runs to the end.
pub fn code_blocks(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in text.lines() {
        let is_fence = line.trim_start().starts_with("```");
        match (&mut current, is_fence) {
            (None, true) => current = Some(Vec::new()),
            (None, false) => {}
            (Some(lines), true) => {
                blocks.push(lines.join("\n"));
                current = None;
            }
            (Some(lines), false) => lines.push(line),
        }
    }
    if let Some(lines) = current {
        blocks.push(lines.join("\n"));
    }
    blocks
}

pub fn extract_first_block(text: &str) -> Result<String, ExtractError> {
    code_blocks(text)
        .into_iter()
        .next()
        .ok_or(ExtractError::NoCodeBlock)
}

/// The first `n` blocks as variant payloads; positions past the last block
/// are `None`.
pub fn split_variants(text: &str, n: usize) -> Vec<Option<String>> {
    let mut blocks = code_blocks(text).into_iter();
    (0..n).map(|_| blocks.next()).collect()
}
