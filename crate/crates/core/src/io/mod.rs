//! Instance text format, external dataset adapters, generation and batch merging.
//!
//! ```text
//! # comment
//! tiers 3 stacks 3
//! batches 3 1 2
//! stack 1
//! stack 3 3
//! stack 1 2 1
//! dist 3
//! 1 2 0.75
//! 2 1 0.25
//! ```
//!
//! Stacks list 1-based batch indices bottom to top; omitted trailing stacks are
//! empty. A `dist w` block gives the non-uniform order law of batch `w`: each line
//! holds the 1-based rank of every member (members in file order) and a probability.

mod generate;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bay::Geometry;
use crate::error::{Error, Result};
use crate::instance::{Instance, OrderDistribution};

pub use generate::{generate, merge_batches, random_instance, BatchLaw, GenRecipe};

/// File extension of canonical instance files.
pub const EXTENSION: &str = "scrp";

struct Token<'a> {
    text: &'a str,
    line: usize,
    column: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
}

fn lines(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = raw.split('#').next().unwrap_or("");
        let mut tokens = Vec::new();
        let mut start = None;
        for (pos, ch) in content.char_indices().chain(std::iter::once((content.len(), ' '))) {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(pos),
                (true, Some(s)) => {
                    tokens.push(Token {
                        text: &content[s..pos],
                        line: i + 1,
                        column: content[..s].chars().count() + 1,
                    });
                    start = None;
                }
                _ => {}
            }
        }
        if !tokens.is_empty() {
            out.push(Line { number: i + 1, tokens });
        }
    }
    out
}

fn syntax(line: usize, column: usize, expected: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        expected: expected.into(),
    }
}

fn keyword(tok: Option<&Token<'_>>, line: usize, word: &str) -> Result<()> {
    match tok {
        Some(t) if t.text == word => Ok(()),
        Some(t) => Err(syntax(t.line, t.column, format!("`{word}`"))),
        None => Err(syntax(line, 1, format!("`{word}`"))),
    }
}

fn number(tok: Option<&Token<'_>>, line: usize, what: &str) -> Result<usize> {
    match tok {
        Some(t) => t.text.parse().map_err(|_| syntax(t.line, t.column, what.to_string())),
        None => Err(syntax(line, 1, what.to_string())),
    }
}

fn end_of_line(line: &Line<'_>, used: usize) -> Result<()> {
    match line.tokens.get(used) {
        Some(t) => Err(syntax(t.line, t.column, "end of line")),
        None => Ok(()),
    }
}

/// Parses and validates an instance.
pub fn parse_instance(text: &str) -> Result<Instance> {
    let lines = lines(text);
    let last_line = text.lines().count().max(1);
    let mut it = lines.iter().peekable();

    let header = it.next().ok_or_else(|| syntax(last_line, 1, "`tiers`"))?;
    let n = header.number;
    keyword(header.tokens.first(), n, "tiers")?;
    let tiers = number(header.tokens.get(1), n, "tier count")?;
    keyword(header.tokens.get(2), n, "stacks")?;
    let stacks = number(header.tokens.get(3), n, "stack count")?;
    end_of_line(header, 4)?;
    let geometry = Geometry::new(tiers, stacks).map_err(|e| Error::Semantic(format!("geometry: {e}")))?;

    let batches = it.next().ok_or_else(|| syntax(last_line, 1, "`batches`"))?;
    keyword(batches.tokens.first(), batches.number, "batches")?;
    let batch_sizes = batches.tokens[1..]
        .iter()
        .map(|t| t.text.parse::<usize>().map_err(|_| syntax(t.line, t.column, "batch size")))
        .collect::<Result<Vec<_>>>()?;

    let mut columns: Vec<Vec<usize>> = Vec::new();
    while let Some(line) = it.next_if(|l| l.tokens[0].text == "stack") {
        if columns.len() == stacks {
            return Err(Error::Semantic(format!(
                "stack count: line {} describes stack {} of a {stacks}-stack bay",
                line.number,
                columns.len() + 1
            )));
        }
        let column = line.tokens[1..]
            .iter()
            .map(|t| t.text.parse::<usize>().map_err(|_| syntax(t.line, t.column, "batch index")))
            .collect::<Result<Vec<_>>>()?;
        columns.push(column);
    }
    columns.resize(stacks, Vec::new());

    let mut distributions: Vec<Option<OrderDistribution>> = vec![None; batch_sizes.len()];
    while let Some(line) = it.next() {
        keyword(line.tokens.first(), line.number, "dist")?;
        let w = number(line.tokens.get(1), line.number, "batch index")?;
        end_of_line(line, 2)?;
        if w == 0 || w > batch_sizes.len() {
            return Err(Error::Semantic(format!(
                "distribution: batch {w} outside 1..={}",
                batch_sizes.len()
            )));
        }
        if distributions[w - 1].is_some() {
            return Err(Error::Semantic(format!("distribution: batch {w} listed twice")));
        }
        let size = batch_sizes[w - 1];
        let mut orders = Vec::new();
        while let Some(order) = it.next_if(|l| l.tokens[0].text != "dist") {
            let toks = &order.tokens;
            if toks.len() != size + 1 {
                let t = toks.get(size + 1).unwrap_or(&toks[toks.len() - 1]);
                return Err(syntax(t.line, t.column, format!("{size} ranks and a probability")));
            }
            let ranks = toks[..size]
                .iter()
                .map(|t| match t.text.parse::<usize>() {
                    Ok(r) if r >= 1 => Ok(r - 1),
                    _ => Err(syntax(t.line, t.column, "rank of at least 1")),
                })
                .collect::<Result<Vec<_>>>()?;
            let p_tok = &toks[size];
            let p: f64 = p_tok
                .text
                .parse()
                .map_err(|_| syntax(p_tok.line, p_tok.column, "probability"))?;
            orders.push((ranks, p));
        }
        distributions[w - 1] = Some(OrderDistribution { orders });
    }

    Instance::new(geometry, batch_sizes, &columns, distributions).map_err(semantic)
}

fn semantic(e: Error) -> Error {
    let invariant = match &e {
        Error::InvalidGeometry(_) => "geometry",
        Error::CapacityExceeded { .. } => "capacity",
        Error::BatchMismatch(_) => "batch consistency",
        Error::BadDistribution(_) => "distribution",
        _ => "instance",
    };
    Error::Semantic(format!("{invariant}: {e}"))
}

/// Canonical text of an instance; `parse_instance` reads it back unchanged.
pub fn write_instance(instance: &Instance) -> String {
    let mut out = String::new();
    let g = instance.geometry;
    writeln!(out, "tiers {} stacks {}", g.tiers(), g.stacks()).unwrap();
    out.push_str("batches");
    for s in &instance.batch_sizes {
        write!(out, " {s}").unwrap();
    }
    out.push('\n');
    for column in instance.batch_indices() {
        out.push_str("stack");
        for w in column {
            write!(out, " {w}").unwrap();
        }
        out.push('\n');
    }
    for (w, dist) in instance.distributions.iter().enumerate() {
        let Some(dist) = dist else { continue };
        writeln!(out, "dist {}", w + 1).unwrap();
        for (ranks, p) in &dist.orders {
            for r in ranks {
                write!(out, "{} ", r + 1).unwrap();
            }
            writeln!(out, "{p:?}").unwrap();
        }
    }
    out
}

pub fn read_instance(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_instance(&text)
}

pub fn write_instance_file(path: &Path, instance: &Instance) -> Result<()> {
    fs::write(path, write_instance(instance)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Instance files (`*.scrp`) of a directory in name order.
pub fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::Io(e.to_string()))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == EXTENSION) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// An instance as read from a foreign file, before validation.
#[derive(Clone, Debug, PartialEq)]
pub struct RawInstance {
    pub tiers: usize,
    pub stacks: usize,
    pub batch_sizes: Vec<usize>,
    /// 1-based batch indices per stack, bottom to top.
    pub columns: Vec<Vec<usize>>,
    pub distributions: Vec<Option<OrderDistribution>>,
}

impl RawInstance {
    fn into_instance(self) -> Result<Instance> {
        let geometry = Geometry::new(self.tiers, self.stacks).map_err(|e| Error::Mapping(e.to_string()))?;
        Instance::new(geometry, self.batch_sizes, &self.columns, self.distributions)
            .map_err(|e| Error::Mapping(e.to_string()))
    }
}

/// Reader for a foreign instance format.
pub trait FormatAdapter: Send + Sync {
    fn id(&self) -> &str;
    /// Instances described by one file.
    fn read(&self, text: &str) -> Result<Vec<RawInstance>>;
}

/// The native format through the adapter interface.
pub struct CanonicalAdapter;

impl FormatAdapter for CanonicalAdapter {
    fn id(&self) -> &str {
        "canonical"
    }

    fn read(&self, text: &str) -> Result<Vec<RawInstance>> {
        let i = parse_instance(text)?;
        Ok(vec![RawInstance {
            tiers: i.geometry.tiers(),
            stacks: i.geometry.stacks(),
            batch_sizes: i.batch_sizes.clone(),
            columns: i.batch_indices(),
            distributions: i.distributions,
        }])
    }
}

pub struct AdapterRegistry {
    adapters: Vec<Box<dyn FormatAdapter>>,
}

impl Default for AdapterRegistry {
    fn default() -> Self {
        AdapterRegistry {
            adapters: vec![Box::new(CanonicalAdapter)],
        }
    }
}

impl AdapterRegistry {
    pub fn empty() -> Self {
        AdapterRegistry { adapters: Vec::new() }
    }

    /// Adds an adapter, replacing any with the same id.
    pub fn register(&mut self, adapter: Box<dyn FormatAdapter>) {
        self.adapters.retain(|a| a.id() != adapter.id());
        self.adapters.push(adapter);
    }

    pub fn ids(&self) -> Vec<&str> {
        self.adapters.iter().map(|a| a.id()).collect()
    }

    /// Reads a file, or every file of a directory in name order, and validates the result.
    pub fn import(&self, path: &Path, format_id: &str) -> Result<Vec<Instance>> {
        let adapter = self
            .adapters
            .iter()
            .find(|a| a.id() == format_id)
            .ok_or_else(|| Error::UnknownFormat(format_id.to_string()))?;
        let files = if path.is_dir() {
            let mut files = Vec::new();
            for entry in fs::read_dir(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))? {
                let p = entry.map_err(|e| Error::Io(e.to_string()))?.path();
                if p.is_file() {
                    files.push(p);
                }
            }
            files.sort();
            files
        } else {
            vec![path.to_path_buf()]
        };
        let mut out = Vec::new();
        for file in files {
            let text = fs::read_to_string(&file).map_err(|e| Error::Io(format!("{}: {e}", file.display())))?;
            for raw in adapter.read(&text)? {
                out.push(raw.into_instance()?);
            }
        }
        Ok(out)
    }
}

pub fn import_external(path: &Path, format_id: &str) -> Result<Vec<Instance>> {
    AdapterRegistry::default().import(path, format_id)
}
