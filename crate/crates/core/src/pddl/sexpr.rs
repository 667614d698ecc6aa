//! S-expression reader shared by the domain, problem and plan parsers.

use super::PddlError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sexp {
    Sym(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Sym(_, p) | Sexp::List(_, p) => *p,
        }
    }

    pub fn as_sym(&self) -> Option<&str> {
        match self {
            Sexp::Sym(s, _) => Some(s),
            Sexp::List(..) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items, _) => Some(items),
            Sexp::Sym(..) => None,
        }
    }

    /// Keyword at the head of a list, e.g. `:action` in `(:action ...)`.
    pub fn head(&self) -> Option<&str> {
        self.as_list()
            .and_then(|l| l.first())
            .and_then(Sexp::as_sym)
    }
}

pub fn syntax(pos: Pos, msg: impl Into<String>) -> PddlError {
    PddlError::Syntax {
        line: pos.line,
        col: pos.col,
        msg: msg.into(),
    }
}

/// Reads every top-level expression. Symbols are lowercased.
pub fn read_all(text: &str) -> Result<Vec<Sexp>, PddlError> {
    let mut stack: Vec<(Vec<Sexp>, Pos)> = Vec::new();
    let mut out = Vec::new();
    let mut line = 1;
    let mut col = 0;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        col += 1;
        let here = Pos { line, col };
        match c {
            '\n' => {
                line += 1;
                col = 0;
            }
            ';' => {
                while let Some(&n) = chars.peek() {
                    if n == '\n' {
                        break;
                    }
                    chars.next();
                }
            }
            '(' => stack.push((Vec::new(), here)),
            ')' => {
                let (items, start) = stack.pop().ok_or_else(|| syntax(here, "unbalanced ')'"))?;
                let node = Sexp::List(items, start);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(node),
                    None => out.push(node),
                }
            }
            c if c.is_whitespace() => {}
            c => {
                let mut sym = String::new();
                sym.extend(c.to_lowercase());
                while let Some(&n) = chars.peek() {
                    if n.is_whitespace() || n == '(' || n == ')' || n == ';' {
                        break;
                    }
                    sym.extend(n.to_lowercase());
                    chars.next();
                    col += 1;
                }
                let node = Sexp::Sym(sym, here);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(node),
                    None => out.push(node),
                }
            }
        }
    }
    if let Some((_, start)) = stack.pop() {
        return Err(syntax(start, "unclosed '('"));
    }
    Ok(out)
}

pub fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-')
        && !s.starts_with('-')
}

pub fn ident(e: &Sexp) -> Result<String, PddlError> {
    match e {
        Sexp::Sym(s, _) if is_ident(s) => Ok(s.clone()),
        Sexp::Sym(s, p) => Err(syntax(*p, format!("invalid identifier '{s}'"))),
        Sexp::List(_, p) => Err(syntax(*p, "expected identifier, found list")),
    }
}

pub fn variable(e: &Sexp) -> Result<String, PddlError> {
    match e {
        Sexp::Sym(s, p) => match s.strip_prefix('?') {
            Some(v) if is_ident(v) => Ok(v.to_string()),
            _ => Err(syntax(*p, format!("expected variable, found '{s}'"))),
        },
        Sexp::List(_, p) => Err(syntax(*p, "expected variable, found list")),
    }
}

/// Parses `a b - t c` style lists. Untyped trailing names get `object`.
pub fn typed_list(
    items: &[Sexp],
    parse_name: impl Fn(&Sexp) -> Result<String, PddlError>,
) -> Result<Vec<(String, String)>, PddlError> {
    let mut out = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        if items[i].as_sym() == Some("-") {
            let ty = items
                .get(i + 1)
                .ok_or_else(|| syntax(items[i].pos(), "missing type after '-'"))?;
            let ty = ident(ty)?;
            if pending.is_empty() {
                return Err(syntax(items[i].pos(), "type without names"));
            }
            out.extend(pending.drain(..).map(|n| (n, ty.clone())));
            i += 2;
        } else {
            pending.push(parse_name(&items[i])?);
            i += 1;
        }
    }
    out.extend(
        pending
            .into_iter()
            .map(|n| (n, super::ROOT_TYPE.to_string())),
    );
    Ok(out)
}
