use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Line prefix that introduces an insight in a model reply.
pub const INSIGHT_MARKER: &str = "INSIGHT:";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedOutput {
    pub code: String,
    pub insight: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseError {
    NoCodeBlock,
    EmptyCodeBlock,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseError::NoCodeBlock => f.write_str("reply contains no fenced code block"),
            ParseError::EmptyCodeBlock => f.write_str("reply's first fenced code block is empty"),
        }
    }
}

impl core::error::Error for ParseError {}

/// Extracts the first fenced code block and any `INSIGHT:` text outside fences.
///
/// A fence opens with a ```` ``` ```` token (optionally followed by a language
/// tag) and closes at the next ```` ``` ````. Both may share a line with other
/// text. Insight text is the remainder of every line outside fences that
/// starts with the marker, plus its non-blank continuation lines.
pub fn parse_response(text: &str) -> Result<ParsedOutput, ParseError> {
    let blocks = split_fences(text);
    let code = blocks
        .iter()
        .find_map(|piece| match piece {
            Piece::Code(code) => Some(code),
            Piece::Prose(_) => None,
        })
        .ok_or(ParseError::NoCodeBlock)?;
    let code = String::from(code.trim_matches('\n').trim_end());
    if code.trim().is_empty() {
        return Err(ParseError::EmptyCodeBlock);
    }

    let mut insight_lines: Vec<&str> = Vec::new();
    for piece in &blocks {
        let Piece::Prose(prose) = piece else { continue };
        let mut collecting = false;
        for line in prose.lines() {
            let trimmed = line.trim();
            if let Some(rest) = trimmed.strip_prefix(INSIGHT_MARKER) {
                collecting = true;
                let rest = rest.trim();
                if !rest.is_empty() {
                    insight_lines.push(rest);
                }
            } else if collecting && !trimmed.is_empty() {
                insight_lines.push(trimmed);
            } else {
                collecting = false;
            }
        }
    }
    let insight = (!insight_lines.is_empty()).then(|| insight_lines.join("\n"));
    Ok(ParsedOutput { code, insight })
}

enum Piece<'a> {
    Prose(&'a str),
    Code(&'a str),
}

fn split_fences(text: &str) -> Vec<Piece<'_>> {
    const FENCE: &str = "```";
    let mut pieces = Vec::new();
    let mut rest = text;
    loop {
        let Some(open) = rest.find(FENCE) else {
            pieces.push(Piece::Prose(rest));
            break;
        };
        pieces.push(Piece::Prose(&rest[..open]));
        let after_open = &rest[open + FENCE.len()..];
        // Language tag: whatever follows the fence on the same line, unless
        // the block closes on that line.
        let body_start = match (after_open.find('\n'), after_open.find(FENCE)) {
            (Some(nl), Some(close)) if close < nl => 0,
            (Some(nl), _) => nl + 1,
            (None, _) => 0,
        };
        let body = &after_open[body_start..];
        match body.find(FENCE) {
            Some(close) => {
                pieces.push(Piece::Code(&body[..close]));
                rest = &body[close + FENCE.len()..];
            }
            None => {
                // Unterminated fence: treat the remainder as code.
                pieces.push(Piece::Code(body));
                break;
            }
        }
    }
    pieces
}
