//! Repairs for the JSON lists models emit.
//!
//! Rules, applied in order by [`repair_json_list`]:
//! 1. strip markdown code fences;
//! 2. keep the span from the first `[` to the last `]`;
//! 3. drop trailing commas before `]` or `}`;
//! 4. close unclosed strings and brackets;
//! 5. rewrite single-quoted strings as double-quoted ones.
//!
//! Rules 3 to 5 only run when the span fails to parse as is. A truncated
//! list that still fails is cut back to its last complete object.

use serde_json::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RepairOutcome {
    /// Parsed after fence stripping and span extraction only.
    Clean,
    /// Parsed after rewriting the text.
    Repaired,
}

/// Contents of the first fenced block, or `s` unchanged when unfenced.
pub fn strip_code_fences(s: &str) -> &str {
    let Some(open) = s.find("```") else {
        return s;
    };
    let after = &s[open + 3..];
    let body = match after.find('\n') {
        Some(nl) if after[..nl].trim().chars().all(|c| c.is_ascii_alphanumeric()) => {
            &after[nl + 1..]
        }
        _ => after,
    };
    match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    }
}

/// From the first `[` to the last `]`, or to the end when no `]` follows.
pub fn list_span(s: &str) -> Option<&str> {
    let start = s.find('[')?;
    match s.rfind(']') {
        Some(end) if end > start => Some(&s[start..=end]),
        _ => Some(&s[start..]),
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Lex {
    Code,
    Double,
    Single,
}

/// Walks `s` tracking string state; `f` sees each char with the state it
/// occurs in (the state before the char is consumed).
fn scan(s: &str, mut f: impl FnMut(usize, char, Lex)) -> Lex {
    let mut state = Lex::Code;
    let mut escaped = false;
    for (i, c) in s.char_indices() {
        f(i, c, state);
        match state {
            Lex::Code => match c {
                '"' => state = Lex::Double,
                '\'' => state = Lex::Single,
                _ => {}
            },
            Lex::Double | Lex::Single => {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if (c == '"' && state == Lex::Double) || (c == '\'' && state == Lex::Single)
                {
                    state = Lex::Code;
                }
            }
        }
    }
    state
}

pub fn remove_trailing_commas(s: &str) -> String {
    let mut drop = std::collections::HashSet::new();
    let mut pending: Option<usize> = None;
    scan(s, |i, c, state| {
        if state != Lex::Code {
            pending = None;
            return;
        }
        match c {
            ',' => pending = Some(i),
            ']' | '}' => {
                if let Some(p) = pending.take() {
                    drop.insert(p);
                }
            }
            c if c.is_whitespace() => {}
            _ => pending = None,
        }
    });
    let mut out = String::with_capacity(s.len());
    for (i, c) in s.char_indices() {
        if !drop.contains(&i) {
            out.push(c);
        }
    }
    out
}

/// Closes an unterminated string, drops stray closers and appends the
/// closers of every bracket still open.
pub fn balance_brackets(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 8);
    let mut stack: Vec<char> = Vec::new();
    let end_state = scan(s, |_, c, state| {
        if state == Lex::Code {
            match c {
                '[' | '{' => stack.push(c),
                ']' | '}' => {
                    let open = if c == ']' { '[' } else { '{' };
                    match stack.iter().rposition(|&o| o == open) {
                        Some(pos) => {
                            while stack.len() > pos + 1 {
                                out.push(closer(stack.pop().unwrap()));
                            }
                            stack.pop();
                        }
                        None => return,
                    }
                }
                _ => {}
            }
        }
        out.push(c);
    });
    match end_state {
        Lex::Double => out.push('"'),
        Lex::Single => out.push('\''),
        Lex::Code => {}
    }
    while let Some(o) = stack.pop() {
        out.push(closer(o));
    }
    out
}

fn closer(open: char) -> char {
    if open == '[' {
        ']'
    } else {
        '}'
    }
}

/// Rewrites `'...'` strings outside double-quoted strings as `"..."`.
pub fn normalize_quotes(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    scan(s, |_, c, state| match (state, c) {
        (Lex::Code, '\'') => out.push('"'),
        (Lex::Single, '\'') if !out.ends_with('\\') => out.push('"'),
        (Lex::Single, '"') => out.push_str("\\\""),
        _ => out.push(c),
    });
    out.replace("\\'", "'")
}

fn parse_list(s: &str) -> Option<Vec<Value>> {
    match serde_json::from_str::<Value>(s) {
        Ok(Value::Array(items)) => Some(items),
        _ => None,
    }
}

/// Extracts a JSON list from model output, repairing it when needed.
///
/// A lone object is accepted as a one-element list (counted as a repair).
pub fn repair_json_list(raw: &str) -> Option<(Vec<Value>, RepairOutcome)> {
    let body = strip_code_fences(raw);
    let (span, wrapped) = match list_span(body) {
        Some(span) => (span.to_string(), false),
        None => {
            let start = body.find('{')?;
            let end = body.rfind('}').filter(|&e| e > start).map_or(body.len(), |e| e + 1);
            (format!("[{}]", &body[start..end]), true)
        }
    };
    if let Some(items) = parse_list(&span) {
        let outcome = if wrapped {
            RepairOutcome::Repaired
        } else {
            RepairOutcome::Clean
        };
        return Some((items, outcome));
    }
    let fixed = remove_trailing_commas(&span);
    let balanced = remove_trailing_commas(&balance_brackets(&fixed));
    if let Some(items) = parse_list(&normalize_quotes(&balanced)) {
        return Some((items, RepairOutcome::Repaired));
    }
    let cut = fixed.rfind('}')?;
    let salvaged = remove_trailing_commas(&balance_brackets(&fixed[..=cut]));
    let salvaged = normalize_quotes(&salvaged);
    parse_list(&salvaged).map(|items| (items, RepairOutcome::Repaired))
}
