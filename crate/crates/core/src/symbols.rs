//! Symbol interpretation: the `\<name>` escape codec, sub/superscript
//! styling and static completion tables.
//!
//! Raw source text only ever contains ASCII escapes such as `\<forall>`;
//! the decoded presentation form replaces them by Unicode glyphs. The
//! codec is total: escapes that are malformed or not in the table pass
//! through verbatim.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The table shipped with the crate.
pub const BUNDLED_TABLE: &str = include_str!("../data/symbols.tsv");

/// Maximum number of completion candidates returned by [`complete`].
pub const MAX_COMPLETIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolStyle {
    Glyph,
    ControlSub,
    ControlSup,
}

impl SymbolStyle {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "glyph" => Some(SymbolStyle::Glyph),
            "control_sub" => Some(SymbolStyle::ControlSub),
            "control_sup" => Some(SymbolStyle::ControlSup),
            _ => None,
        }
    }

    pub fn is_control(self) -> bool {
        !matches!(self, SymbolStyle::Glyph)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolEntry {
    /// Name as written between `\<` and `>`, e.g. `forall` or `^sub`.
    pub name: String,
    pub codepoint: Option<char>,
    pub abbrevs: Vec<String>,
    pub style: SymbolStyle,
}

impl SymbolEntry {
    /// The raw escape sequence for this symbol.
    pub fn escape(&self) -> String {
        format!("\\<{}>", self.name)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("symbol table line {line}: {message}")]
pub struct TableFormatError {
    pub line: usize,
    pub message: String,
}

/// Parses a symbol table document.
///
/// Lines are `name<TAB>U+XXXX<TAB>abbrev1;abbrev2<TAB>style`; blank lines and
/// lines starting with `#` are ignored. Control entries use `-` as codepoint.
pub fn load_table(source: &str) -> Result<Vec<SymbolEntry>, TableFormatError> {
    let mut entries: Vec<SymbolEntry> = Vec::new();
    let mut names: HashMap<String, usize> = HashMap::new();
    let mut glyphs: HashMap<char, usize> = HashMap::new();

    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let err = |message: String| TableFormatError { line: line_no, message };
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let name = fields[0];
        if !is_symbol_name(name) {
            return Err(err(format!("invalid symbol name {name:?}")));
        }
        let style = SymbolStyle::parse(fields[3]).ok_or_else(|| err(format!("unknown style {:?}", fields[3])))?;
        let codepoint = match (style.is_control(), fields[1]) {
            (true, "-" | "") => None,
            (true, other) => {
                return Err(err(format!(
                    "control symbol {name} must not have a codepoint (found {other:?})"
                )))
            }
            (false, cp) => Some(parse_codepoint(cp).ok_or_else(|| err(format!("invalid codepoint {cp:?}")))?),
        };
        if style.is_control() != name.starts_with('^') {
            return Err(err(format!(
                "control symbols are named ^name, glyphs are not (got {name})"
            )));
        }
        let abbrevs: Vec<String> = fields[2]
            .split(';')
            .filter(|a| !a.is_empty())
            .map(str::to_owned)
            .collect();
        if let Some(bad) = abbrevs
            .iter()
            .find(|a| !a.is_ascii() || a.chars().any(char::is_whitespace))
        {
            return Err(err(format!("abbreviation {bad:?} must be ASCII without whitespace")));
        }
        if let Some(prev) = names.insert(name.to_owned(), line_no) {
            return Err(err(format!(
                "duplicate symbol name {name} (first defined on line {prev})"
            )));
        }
        if let Some(cp) = codepoint {
            if let Some(prev) = glyphs.insert(cp, line_no) {
                return Err(err(format!(
                    "duplicate codepoint U+{:04X} (first used on line {prev})",
                    cp as u32
                )));
            }
        }
        entries.push(SymbolEntry {
            name: name.to_owned(),
            codepoint,
            abbrevs,
            style,
        });
    }
    Ok(entries)
}

fn parse_codepoint(s: &str) -> Option<char> {
    let hex = s.strip_prefix("U+")?;
    if hex.is_empty() || hex.len() > 6 {
        return None;
    }
    char::from_u32(u32::from_str_radix(hex, 16).ok()?)
}

fn is_symbol_name(name: &str) -> bool {
    let body = name.strip_prefix('^').unwrap_or(name);
    let mut chars = body.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic())
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

/// A syntactically well-formed escape found in raw text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Escape {
    /// Character range of the whole `\<...>` sequence.
    pub range: Range<usize>,
    /// Name between `\<` and `>`, including a leading `^` for controls.
    pub name: String,
}

impl Escape {
    pub fn is_control(&self) -> bool {
        self.name.starts_with('^')
    }
}

/// Recognizes `\<name>` or `\<^name>` starting at `at`.
pub fn scan_escape(chars: &[char], at: usize) -> Option<Escape> {
    if chars.get(at) != Some(&'\\') || chars.get(at + 1) != Some(&'<') {
        return None;
    }
    let mut i = at + 2;
    let name_start = i;
    if chars.get(i) == Some(&'^') {
        i += 1;
    }
    if !chars.get(i).is_some_and(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    i += 1;
    while chars
        .get(i)
        .is_some_and(|&c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
    {
        i += 1;
    }
    if chars.get(i) != Some(&'>') {
        return None;
    }
    Some(Escape {
        range: at..i + 1,
        name: chars[name_start..i].iter().collect(),
    })
}

/// Immutable lookup structure over a list of entries.
#[derive(Debug, Clone)]
pub struct SymbolTable {
    entries: Vec<SymbolEntry>,
    by_name: HashMap<String, usize>,
    by_glyph: HashMap<char, usize>,
}

impl SymbolTable {
    pub fn new(entries: Vec<SymbolEntry>) -> Self {
        let by_name = entries.iter().enumerate().map(|(i, e)| (e.name.clone(), i)).collect();
        let by_glyph = entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.codepoint.map(|c| (c, i)))
            .collect();
        SymbolTable {
            entries,
            by_name,
            by_glyph,
        }
    }

    pub fn parse(source: &str) -> Result<Self, TableFormatError> {
        load_table(source).map(Self::new)
    }

    /// The table embedded from `data/symbols.tsv`.
    pub fn bundled() -> &'static SymbolTable {
        static TABLE: OnceLock<SymbolTable> = OnceLock::new();
        TABLE.get_or_init(|| SymbolTable::parse(BUNDLED_TABLE).expect("bundled symbol table is well-formed"))
    }

    pub fn entries(&self) -> &[SymbolEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&SymbolEntry> {
        self.by_name.get(name).map(|&i| &self.entries[i])
    }

    pub fn by_glyph(&self, glyph: char) -> Option<&SymbolEntry> {
        self.by_glyph.get(&glyph).map(|&i| &self.entries[i])
    }

    pub fn decode(&self, raw: &str) -> StyledText {
        decode_with(self, raw)
    }

    pub fn encode(&self, styled: &StyledText) -> String {
        encode_with(self, styled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextStyle {
    Plain,
    Sub,
    Sup,
}

impl fmt::Display for TextStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextStyle::Plain => "plain",
            TextStyle::Sub => "sub",
            TextStyle::Sup => "sup",
        })
    }
}

/// Monotone correspondence between raw and presentation character offsets.
///
/// Entry `i` holds the raw offset at which presentation character `i`
/// starts; the final entry pairs the two text lengths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OffsetMap {
    raw_starts: Vec<usize>,
}

impl OffsetMap {
    fn identity(len: usize) -> Self {
        OffsetMap {
            raw_starts: (0..=len).collect(),
        }
    }

    pub fn presentation_len(&self) -> usize {
        self.raw_starts.len() - 1
    }

    pub fn raw_len(&self) -> usize {
        *self.raw_starts.last().unwrap()
    }

    /// Raw offset where presentation offset `pres` begins (clamped).
    pub fn to_raw(&self, pres: usize) -> usize {
        self.raw_starts[pres.min(self.presentation_len())]
    }

    /// Presentation offset of the character covering raw offset `raw`;
    /// offsets inside an escape map to the start of its glyph.
    pub fn to_presentation(&self, raw: usize) -> usize {
        match self.raw_starts.binary_search(&raw) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.raw_starts.iter().enumerate().map(|(p, &r)| (r, p))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StyledText {
    pub text: String,
    /// Maximal runs of equal style covering `text`, in order.
    pub styles: Vec<(Range<usize>, TextStyle)>,
    pub offset_map: OffsetMap,
}

impl StyledText {
    /// Presentation text without escapes, all plain.
    pub fn plain(text: &str) -> Self {
        let len = text.chars().count();
        StyledText {
            text: text.to_owned(),
            styles: if len == 0 {
                vec![]
            } else {
                vec![(0..len, TextStyle::Plain)]
            },
            offset_map: OffsetMap::identity(len),
        }
    }

    pub fn style_at(&self, pres: usize) -> TextStyle {
        self.styles
            .iter()
            .find(|(r, _)| r.contains(&pres))
            .map_or(TextStyle::Plain, |(_, s)| *s)
    }
}

struct StyledBuilder {
    text: String,
    char_styles: Vec<TextStyle>,
    raw_starts: Vec<usize>,
}

impl StyledBuilder {
    fn push(&mut self, c: char, style: TextStyle, raw_start: usize) {
        self.text.push(c);
        self.char_styles.push(style);
        self.raw_starts.push(raw_start);
    }

    fn finish(mut self, raw_len: usize) -> StyledText {
        self.raw_starts.push(raw_len);
        let mut styles: Vec<(Range<usize>, TextStyle)> = Vec::new();
        for (i, &s) in self.char_styles.iter().enumerate() {
            match styles.last_mut() {
                Some((r, last)) if *last == s && r.end == i => r.end = i + 1,
                _ => styles.push((i..i + 1, s)),
            }
        }
        StyledText {
            text: self.text,
            styles,
            offset_map: OffsetMap {
                raw_starts: self.raw_starts,
            },
        }
    }
}

/// Decodes raw text with the bundled table.
pub fn decode(raw: &str) -> StyledText {
    decode_with(SymbolTable::bundled(), raw)
}

/// Encodes presentation text back to raw escapes with the bundled table.
pub fn encode(styled: &StyledText) -> String {
    encode_with(SymbolTable::bundled(), styled)
}

fn decode_with(table: &SymbolTable, raw: &str) -> StyledText {
    let chars: Vec<char> = raw.chars().collect();
    let mut out = StyledBuilder {
        text: String::with_capacity(raw.len()),
        char_styles: Vec::new(),
        raw_starts: Vec::new(),
    };
    let glyph_of = |esc: &Escape| table.get(&esc.name).and_then(|e| e.codepoint);
    let mut i = 0;
    while i < chars.len() {
        let Some(esc) = scan_escape(&chars, i) else {
            out.push(chars[i], TextStyle::Plain, i);
            i += 1;
            continue;
        };
        if let Some(glyph) = glyph_of(&esc) {
            out.push(glyph, TextStyle::Plain, i);
            i = esc.range.end;
            continue;
        }
        let style = match table.get(&esc.name).map(|e| e.style) {
            Some(SymbolStyle::ControlSub) => Some(TextStyle::Sub),
            Some(SymbolStyle::ControlSup) => Some(TextStyle::Sup),
            _ => None,
        };
        let target = esc.range.end;
        // A control styles exactly the next glyph or plain character.
        let styled = style.and_then(|style| match scan_escape(&chars, target) {
            Some(next) => glyph_of(&next).map(|g| (g, next.range.end, style)),
            None => match chars.get(target) {
                Some(&c) if c != '\n' && c != '\r' => Some((c, target + 1, style)),
                _ => None,
            },
        });
        match styled {
            Some((c, end, style)) => {
                out.push(c, style, i);
                i = end;
            }
            None => {
                for (k, &c) in chars[esc.range.clone()].iter().enumerate() {
                    out.push(c, TextStyle::Plain, i + k);
                }
                i = esc.range.end;
            }
        }
    }
    out.finish(chars.len())
}

fn encode_with(table: &SymbolTable, styled: &StyledText) -> String {
    let mut out = String::with_capacity(styled.text.len());
    let mut runs = styled.styles.iter().peekable();
    for (i, c) in styled.text.chars().enumerate() {
        while runs.peek().is_some_and(|(r, _)| r.end <= i) {
            runs.next();
        }
        let style = runs
            .peek()
            .filter(|(r, _)| r.contains(&i))
            .map_or(TextStyle::Plain, |(_, s)| *s);
        match style {
            TextStyle::Plain => {}
            TextStyle::Sub => out.push_str("\\<^sub>"),
            TextStyle::Sup => out.push_str("\\<^sup>"),
        }
        match table.by_glyph(c) {
            Some(entry) => {
                out.push_str("\\<");
                out.push_str(&entry.name);
                out.push('>');
            }
            None => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub replacement: String,
    pub display: String,
}

/// Static completion data: command keywords plus a symbol table.
#[derive(Debug, Clone, Copy)]
pub struct CompletionTables<'a> {
    pub keywords: &'a [&'a str],
    pub symbols: &'a SymbolTable,
}

impl Default for CompletionTables<'static> {
    fn default() -> Self {
        CompletionTables {
            keywords: crate::syntax::COMMAND_KEYWORDS,
            symbols: SymbolTable::bundled(),
        }
    }
}

/// Completion candidates for the text left of the caret.
///
/// Keywords come first, then `\<name>` matches, then abbreviations; each
/// group is sorted and the whole list is capped at [`MAX_COMPLETIONS`].
pub fn complete(prefix: &str, tables: &CompletionTables<'_>) -> Vec<Completion> {
    if prefix.is_empty() {
        return Vec::new();
    }
    let display_of = |e: &SymbolEntry| match e.codepoint {
        Some(c) => c.to_string(),
        None => e.escape(),
    };

    let mut keywords: Vec<Completion> = tables
        .keywords
        .iter()
        .filter(|k| k.starts_with(prefix))
        .map(|k| Completion {
            replacement: k.to_string(),
            display: k.to_string(),
        })
        .collect();
    keywords.sort_by(|a, b| a.replacement.cmp(&b.replacement));

    let mut names: Vec<Completion> = match prefix.strip_prefix("\\<") {
        Some(partial) => tables
            .symbols
            .entries()
            .iter()
            .filter(|e| e.name.starts_with(partial))
            .map(|e| Completion {
                replacement: e.escape(),
                display: display_of(e),
            })
            .collect(),
        None => Vec::new(),
    };
    names.sort_by(|a, b| a.replacement.cmp(&b.replacement));

    let mut abbrevs: Vec<Completion> = tables
        .symbols
        .entries()
        .iter()
        .flat_map(|e| {
            e.abbrevs
                .iter()
                .filter(|a| a.starts_with(prefix))
                .map(move |a| (a.clone(), e))
        })
        .map(|(a, e)| Completion {
            replacement: e.escape(),
            display: format!("{} ({a})", display_of(e)),
        })
        .collect();
    abbrevs.sort_by(|a, b| (&a.replacement, &a.display).cmp(&(&b.replacement, &b.display)));

    let mut seen = std::collections::HashSet::new();
    keywords
        .into_iter()
        .chain(names)
        .chain(abbrevs)
        .filter(|c| seen.insert(c.replacement.clone()))
        .take(MAX_COMPLETIONS)
        .collect()
}
