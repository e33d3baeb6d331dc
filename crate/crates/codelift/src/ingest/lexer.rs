//! String-aware lexical cleanup for notebook cell sources.
//!
//! Comment stripping cannot be done with a regex: a `#` inside a string
//! literal is data, not a comment. The scanner below tracks just enough
//! lexical state (single/triple quotes, escapes) to tell the two apart
//! without parsing the code.

/// A non-fatal problem found while scanning a cell source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexWarning {
    /// 1-based line where the problem starts.
    pub line: usize,
    pub message: String,
}

/// An IPython magic or shell-escape line removed during cleanup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RemovedMagic {
    /// 1-based line number in the original source.
    pub line: usize,
    /// The removed line, without its trailing newline.
    pub text: String,
}

/// Result of [`clean_source`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexOutcome {
    pub text: String,
    pub warnings: Vec<LexWarning>,
    pub removed_magics: Vec<RemovedMagic>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct StringKind {
    quote: char,
    triple: bool,
}

/// Removes comments (and optionally magic lines) from `source`.
///
/// Rules:
/// - `#` outside any string literal starts a comment that runs to end of
///   line; the comment is removed and any whitespace left dangling before
///   it is trimmed.
/// - String literals pass through untouched, including `#` inside them.
///   Backslash always escapes the next character for the purpose of
///   finding the closing quote, which matches how Python's tokenizer
///   scans raw strings too (`r"\"` does not end at the inner quote).
/// - A single-quoted string that hits end of line or end of input without
///   closing is ambiguous; the rest of the source is passed through
///   unmodified and a warning is recorded.
/// - With `strip_magics`, a line whose first non-whitespace character is
///   `%` or `!` and which starts outside any string is dropped entirely,
///   without scanning its content (it is not Python).
pub fn clean_source(source: &str, strip_magics: bool) -> LexOutcome {
    let chars: Vec<(usize, char)> = source.char_indices().collect();
    let mut out = String::with_capacity(source.len());
    let mut warnings = Vec::new();
    let mut removed_magics = Vec::new();

    let mut i = 0usize;
    let mut line = 1usize;
    // Byte offset in `out` where the current output line begins; used to
    // bound right-trimming after a comment removal.
    let mut line_start_out = 0usize;
    let mut at_line_start = true;

    while i < chars.len() {
        if at_line_start && strip_magics {
            if let Some(end) = magic_line_end(&chars, i) {
                let start_byte = chars[i].0;
                let end_byte = chars.get(end).map_or(source.len(), |&(b, _)| b);
                let text = source[start_byte..end_byte].trim_end_matches('\n');
                removed_magics.push(RemovedMagic {
                    line,
                    text: text.to_string(),
                });
                i = end;
                line += 1;
                continue;
            }
        }
        at_line_start = false;

        let (byte, ch) = chars[i];
        match ch {
            '#' => {
                // Comment: drop to end of line, then trim whitespace the
                // removal left trailing on this output line.
                while i < chars.len() && chars[i].1 != '\n' {
                    i += 1;
                }
                while out.len() > line_start_out && out.ends_with([' ', '\t']) {
                    out.pop();
                }
            }
            '\'' | '"' => {
                let triple = chars.get(i + 1).map(|&(_, c)| c) == Some(ch)
                    && chars.get(i + 2).map(|&(_, c)| c) == Some(ch);
                let kind = StringKind { quote: ch, triple };
                let opened_on = line;
                let consumed = if triple {
                    out.push(ch);
                    out.push(ch);
                    out.push(ch);
                    3
                } else {
                    out.push(ch);
                    1
                };
                i += consumed;
                match scan_string(&chars, i, kind, &mut out, &mut line) {
                    Ok(next) => i = next,
                    Err(stall) => {
                        // Unterminated string: everything from here on is
                        // ambiguous, so pass it through as-is.
                        warnings.push(LexWarning {
                            line: opened_on,
                            message: format!(
                                "unterminated string literal opened on line {opened_on}"
                            ),
                        });
                        if let Some(&(b, _)) = chars.get(stall) {
                            out.push_str(&source[b..]);
                        }
                        break;
                    }
                }
                continue;
            }
            '\n' => {
                out.push('\n');
                i += 1;
                line += 1;
                line_start_out = out.len();
                at_line_start = true;
            }
            _ => {
                let _ = byte;
                out.push(ch);
                i += 1;
            }
        }
    }

    LexOutcome {
        text: out,
        warnings,
        removed_magics,
    }
}

/// Scans a string body starting at `i` (just past the opening quotes).
/// Pushes scanned characters to `out` and returns the index just past the
/// closing quote, or `Err(i)` with the stall position if the string never
/// closes.
fn scan_string(
    chars: &[(usize, char)],
    mut i: usize,
    kind: StringKind,
    out: &mut String,
    line: &mut usize,
) -> Result<usize, usize> {
    while i < chars.len() {
        let ch = chars[i].1;
        if ch == '\\' {
            out.push(ch);
            i += 1;
            if let Some(&(_, esc)) = chars.get(i) {
                out.push(esc);
                if esc == '\n' {
                    *line += 1;
                }
                i += 1;
            }
            continue;
        }
        if ch == kind.quote {
            if kind.triple {
                if chars.get(i + 1).map(|&(_, c)| c) == Some(kind.quote)
                    && chars.get(i + 2).map(|&(_, c)| c) == Some(kind.quote)
                {
                    out.push(ch);
                    out.push(ch);
                    out.push(ch);
                    return Ok(i + 3);
                }
            } else {
                out.push(ch);
                return Ok(i + 1);
            }
        }
        if ch == '\n' {
            if !kind.triple {
                return Err(i);
            }
            *line += 1;
        }
        out.push(ch);
        i += 1;
    }
    Err(i)
}

/// If the line starting at `chars[i]` is a magic/shell line, returns the
/// index just past its terminating newline (or past end of input).
fn magic_line_end(chars: &[(usize, char)], i: usize) -> Option<usize> {
    let mut j = i;
    while j < chars.len() && matches!(chars[j].1, ' ' | '\t') {
        j += 1;
    }
    match chars.get(j).map(|&(_, c)| c) {
        Some('%') | Some('!') => {}
        _ => return None,
    }
    while j < chars.len() && chars[j].1 != '\n' {
        j += 1;
    }
    // Step past the newline when there is one; at end of input just stop.
    Some(if j < chars.len() { j + 1 } else { j })
}
