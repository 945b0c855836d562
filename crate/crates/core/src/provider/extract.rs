use super::ProviderError;

/// Pulls the program out of a model response: the contents of the first
/// fenced code block (fence markers and language tag removed), or the whole
/// response when it has no fence.
pub fn extract_code(response: &str) -> Result<String, ProviderError> {
    if response.trim().is_empty() {
        return Err(ProviderError::EmptyResponse);
    }
    let Some(open) = response.find("```") else {
        return Ok(response.trim().to_string());
    };
    let after_fence = &response[open + 3..];
    // the rest of the opening line is the language tag
    let body = match after_fence.find('\n') {
        Some(nl) => &after_fence[nl + 1..],
        None => "",
    };
    let code = match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    };
    Ok(code.trim_end_matches(['\n', '\r']).to_string())
}
