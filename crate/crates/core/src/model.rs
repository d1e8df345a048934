//! Line-oriented model files.
//!
//! ```text
//! # comment
//! [base]
//! dim = 2
//! lo = -1, -1
//! hi = 1, 1
//! [fiber]
//! dim = 1
//! lo = -5
//! hi = 5
//! grid = 0.25            # optional, default step for vertical extensions
//! [relation R]
//! arity = 1              # optional, default 1
//! guard = "y1^2"
//! [function f]
//! arity = 1
//! y1 = "2 * y1 + x1"
//! [constant c]
//! y1 = "x1"
//! [section s]
//! y1 = "x1 + x2"         # components in x1..xn, or
//! term = "f(s)"          # a term over earlier sections
//! lo = ...               # optional domain, default the base box
//! hi = ...
//! [connection Phi]
//! L11 = "y1"             # row = fiber component, column = base axis; missing entries are 0
//! [map sigma]
//! source = 1
//! lo = -1                # optional, default [-1, 1]^source
//! hi = 1
//! f1 = "t"               # one component per base axis, in x1.. (or t)
//! f2 = "-t"
//! ```
//!
//! Values are either a quoted expression or a comma-separated number list; a
//! single number stands for the same value on every axis.

use std::collections::HashSet;
use std::path::Path;

use crate::bundle::{AxisBox, Section, SmoothMap, StructureBundle};
use crate::error::{Error, Result};
use crate::expr::{parse_in_scope, Expr, Scope};
use crate::logic::{parse_term, Interpretation, Signature};
use crate::transport::Connection;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedMap {
    pub map: SmoothMap,
    pub source: AxisBox,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub bundle: StructureBundle,
    pub sections: Vec<(String, Section)>,
    pub connections: Vec<(String, Connection)>,
    pub maps: Vec<(String, NamedMap)>,
    pub fiber_grid: Option<f64>,
}

fn find<'a, T>(items: &'a [(String, T)], name: &str, what: &str) -> Result<&'a T> {
    items
        .iter()
        .find(|(n, _)| n == name)
        .map(|(_, v)| v)
        .ok_or_else(|| Error::Invalid(format!("model has no {what} named `{name}`")))
}

impl Model {
    pub fn load(path: impl AsRef<Path>) -> Result<Model> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Invalid(format!("cannot read {}: {e}", path.display())))?;
        Model::parse(&src)
    }

    pub fn parse(src: &str) -> Result<Model> {
        build(read_blocks(src)?)
    }

    pub fn section(&self, name: &str) -> Result<&Section> {
        find(&self.sections, name, "section")
    }

    pub fn section_names(&self) -> Vec<String> {
        self.sections.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn connection(&self, name: &str) -> Result<&Connection> {
        find(&self.connections, name, "connection")
    }

    pub fn map(&self, name: &str) -> Result<&NamedMap> {
        find(&self.maps, name, "map")
    }

    /// The flat connection of the bundle.
    pub fn flat_connection(&self) -> Connection {
        Connection::flat(self.bundle.base().clone(), self.bundle.fiber_box().clone())
    }
}

#[derive(Debug)]
struct Entry {
    key: String,
    value: Value,
    line: usize,
}

#[derive(Debug)]
enum Value {
    Quoted(String),
    Bare(String),
}

#[derive(Debug)]
struct Block {
    kind: String,
    name: Option<String>,
    line: usize,
    entries: Vec<Entry>,
}

fn err(line: usize, message: impl Into<String>) -> Error {
    Error::Model {
        line,
        message: message.into(),
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn read_blocks(src: &str) -> Result<Vec<Block>> {
    let mut blocks: Vec<Block> = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = i + 1;
        let text = strip_comment(raw).trim();
        if text.is_empty() {
            continue;
        }
        if let Some(rest) = text.strip_prefix('[') {
            let inner = rest
                .strip_suffix(']')
                .ok_or_else(|| err(line, "unterminated block header"))?;
            let mut words = inner.split_whitespace();
            let kind = words.next().ok_or_else(|| err(line, "empty block header"))?.to_string();
            let name = words.next().map(str::to_string);
            if words.next().is_some() {
                return Err(err(line, "block header takes at most a kind and a name"));
            }
            let named = matches!(
                kind.as_str(),
                "relation" | "function" | "constant" | "section" | "connection" | "map"
            );
            match (&kind[..], named, &name) {
                ("base" | "fiber", _, None) => {}
                ("base" | "fiber", _, Some(_)) => return Err(err(line, format!("[{kind}] takes no name"))),
                (_, true, Some(n)) if is_ident(n) => {}
                (_, true, _) => return Err(err(line, format!("[{kind}] needs a name"))),
                _ => return Err(err(line, format!("unknown block kind `{kind}`"))),
            }
            blocks.push(Block {
                kind,
                name,
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let block = blocks
            .last_mut()
            .ok_or_else(|| err(line, "entry outside of any block"))?;
        let (key, value) = text
            .split_once('=')
            .ok_or_else(|| err(line, "expected `key = value`"))?;
        let key = key.trim().to_string();
        if !is_ident(&key) {
            return Err(err(line, format!("invalid key `{key}`")));
        }
        if block.entries.iter().any(|e| e.key == key) {
            return Err(err(line, format!("duplicate key `{key}`")));
        }
        let value = value.trim();
        let value = if let Some(rest) = value.strip_prefix('"') {
            let inner = rest
                .strip_suffix('"')
                .ok_or_else(|| err(line, "unterminated quoted value"))?;
            Value::Quoted(inner.to_string())
        } else {
            Value::Bare(value.to_string())
        };
        block.entries.push(Entry { key, value, line });
    }
    Ok(blocks)
}

fn strip_comment(line: &str) -> &str {
    // `#` never occurs inside expressions, quoted or not
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

impl Entry {
    fn text(&self) -> &str {
        match &self.value {
            Value::Quoted(s) | Value::Bare(s) => s,
        }
    }

    fn expr(&self, scope: &Scope) -> Result<Expr> {
        parse_in_scope(self.text(), scope).map_err(|e| err(self.line, format!("`{}`: {e}", self.key)))
    }

    fn numbers(&self, dim: usize) -> Result<Vec<f64>> {
        let vals = self
            .text()
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| err(self.line, format!("`{}` must be a list of numbers", self.key)))?;
        match vals.len() {
            1 => Ok(vec![vals[0]; dim]),
            n if n == dim => Ok(vals),
            n => Err(err(
                self.line,
                format!("`{}` has {n} value(s), expected {dim}", self.key),
            )),
        }
    }

    fn count(&self) -> Result<usize> {
        self.text()
            .trim()
            .parse::<usize>()
            .map_err(|_| err(self.line, format!("`{}` must be a non-negative integer", self.key)))
    }
}

impl Block {
    fn title(&self) -> String {
        match &self.name {
            Some(n) => format!("[{} {n}]", self.kind),
            None => format!("[{}]", self.kind),
        }
    }

    fn name(&self) -> &str {
        self.name.as_deref().unwrap_or_default()
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    fn require(&self, key: &str) -> Result<&Entry> {
        self.get(key)
            .ok_or_else(|| err(self.line, format!("{} is missing `{key}`", self.title())))
    }

    fn allow(&self, allowed: impl Fn(&str) -> bool) -> Result<()> {
        match self.entries.iter().find(|e| !allowed(&e.key)) {
            Some(e) => Err(err(e.line, format!("unexpected key `{}` in {}", e.key, self.title()))),
            None => Ok(()),
        }
    }

    fn boxed(&self, dim: usize, default: Option<&AxisBox>) -> Result<AxisBox> {
        let (lo, hi) = match (self.get("lo"), self.get("hi"), default) {
            (Some(lo), Some(hi), _) => (lo.numbers(dim)?, hi.numbers(dim)?),
            (None, None, Some(d)) => return Ok(d.clone()),
            _ => return Err(err(self.line, format!("{} needs both `lo` and `hi`", self.title()))),
        };
        AxisBox::new(lo, hi).map_err(|e| err(self.line, format!("{}: {e}", self.title())))
    }

    /// Entries `prefix1..prefixN` parsed in `scope`.
    fn components(&self, prefix: &str, n: usize, scope: &Scope) -> Result<Vec<Expr>> {
        (1..=n)
            .map(|i| self.require(&format!("{prefix}{i}"))?.expr(scope))
            .collect()
    }
}

fn indexed(key: &str, prefix: &str, n: usize) -> bool {
    key.strip_prefix(prefix)
        .and_then(|s| s.parse::<usize>().ok())
        .is_some_and(|i| (1..=n).contains(&i))
}

fn single<'a>(blocks: &'a [Block], kind: &str) -> Result<&'a Block> {
    let mut it = blocks.iter().filter(|b| b.kind == kind);
    let first = it
        .next()
        .ok_or_else(|| err(1, format!("model has no [{kind}] block")))?;
    if let Some(dup) = it.next() {
        return Err(err(dup.line, format!("second [{kind}] block")));
    }
    Ok(first)
}

fn build(blocks: Vec<Block>) -> Result<Model> {
    let mut names = HashSet::new();
    for b in blocks.iter().filter(|b| b.name.is_some()) {
        let kind = match b.kind.as_str() {
            "relation" | "function" | "constant" => "symbol",
            k => k,
        };
        if !names.insert((kind, b.name().to_string())) {
            return Err(err(b.line, format!("{} declared twice", b.title())));
        }
    }

    let base_block = single(&blocks, "base")?;
    base_block.allow(|k| matches!(k, "dim" | "lo" | "hi"))?;
    let n = base_block.require("dim")?.count()?;
    if n == 0 {
        return Err(err(base_block.line, "base dimension must be positive"));
    }
    let base = base_block.boxed(n, None)?;

    let fiber_block = single(&blocks, "fiber")?;
    fiber_block.allow(|k| matches!(k, "dim" | "lo" | "hi" | "grid"))?;
    let k = fiber_block.require("dim")?.count()?;
    if k == 0 {
        return Err(err(fiber_block.line, "fiber dimension must be positive"));
    }
    let fiber_box = fiber_block.boxed(k, None)?;
    let fiber_grid = match fiber_block.get("grid") {
        Some(e) => {
            let g = e.numbers(1)?[0];
            if !(g > 0.0 && g.is_finite()) {
                return Err(err(e.line, "`grid` must be positive"));
            }
            Some(g)
        }
        None => None,
    };

    let of_kind = |kind: &'static str| blocks.iter().filter(move |b| b.kind == kind);
    let arity = |b: &Block| -> Result<usize> {
        match b.get("arity") {
            Some(e) => match e.count()? {
                0 => Err(err(e.line, "arity must be positive")),
                a => Ok(a),
            },
            None => Ok(1),
        }
    };

    let mut relations = Vec::new();
    let mut guards = Vec::new();
    for b in of_kind("relation") {
        b.allow(|key| matches!(key, "arity" | "guard"))?;
        let a = arity(b)?;
        guards.push(b.require("guard")?.expr(&Scope::symbol(n, k, a))?);
        relations.push((b.name().to_string(), a));
    }
    let mut functions = Vec::new();
    let mut tables = Vec::new();
    for b in of_kind("function") {
        b.allow(|key| key == "arity" || indexed(key, "y", k))?;
        let a = arity(b)?;
        tables.push(b.components("y", k, &Scope::symbol(n, k, a))?);
        functions.push((b.name().to_string(), a));
    }
    let mut constants = Vec::new();
    let mut constant_tables = Vec::new();
    for b in of_kind("constant") {
        b.allow(|key| indexed(key, "y", k))?;
        constant_tables.push(b.components("y", k, &Scope::base(n))?);
        constants.push(b.name().to_string());
    }
    let sig_line = blocks
        .iter()
        .find(|b| matches!(b.kind.as_str(), "relation" | "function" | "constant"))
        .map_or(1, |b| b.line);
    let sig = Signature::new(relations, functions, constants).map_err(|e| err(sig_line, e.to_string()))?;
    let interp = Interpretation::from_exprs(&sig, n, k, guards, tables, constant_tables)
        .map_err(|e| err(sig_line, e.to_string()))?;
    let bundle = StructureBundle::new(base.clone(), fiber_box.clone(), sig, interp)
        .map_err(|e| err(fiber_block.line, e.to_string()))?;

    let mut sections: Vec<(String, Section)> = Vec::new();
    for b in of_kind("section") {
        b.allow(|key| matches!(key, "term" | "lo" | "hi") || indexed(key, "y", k))?;
        let domain = b.boxed(n, Some(&base))?;
        if !base.contains_box(&domain) {
            return Err(err(b.line, format!("{} domain is not inside the base", b.title())));
        }
        let section = match b.get("term") {
            Some(t) => {
                if b.entries.iter().any(|e| e.key.starts_with('y')) {
                    return Err(err(t.line, "a section is either a term or components, not both"));
                }
                let known: Vec<String> = sections.iter().map(|(n, _)| n.clone()).collect();
                let term = parse_term(t.text(), bundle.signature(), &known).map_err(|e| {
                    err(
                        t.line,
                        format!("`term` must only use sections declared above and model symbols: {e}"),
                    )
                })?;
                let all: Vec<Section> = sections.iter().map(|(_, s)| s.clone()).collect();
                let s = bundle
                    .term_section(&term, &all)
                    .map_err(|e| err(t.line, e.to_string()))?;
                let domain = s.domain().intersect(&domain).map_err(|e| err(b.line, e.to_string()))?;
                match s.values() {
                    crate::bundle::SectionValues::Exprs(c) => {
                        Section::new(domain, c.clone()).map_err(|e| err(b.line, e.to_string()))?
                    }
                    crate::bundle::SectionValues::Sampled(_) => unreachable!("term sections are expressions"),
                }
            }
            None => {
                let comps = b.components("y", k, &Scope::base(n))?;
                Section::new(domain, comps).map_err(|e| err(b.line, e.to_string()))?
            }
        };
        sections.push((b.name().to_string(), section));
    }

    let mut connections = Vec::new();
    for b in of_kind("connection") {
        let entry = |key: &str| -> Option<(usize, usize)> {
            let d: Vec<usize> = key
                .strip_prefix('L')?
                .chars()
                .map(|c| c.to_digit(10).map(|d| d as usize))
                .collect::<Option<_>>()?;
            match d[..] {
                [i, j] if (1..=k).contains(&i) && (1..=n).contains(&j) => Some((i, j)),
                _ => None,
            }
        };
        b.allow(|key| entry(key).is_some())?;
        let scope = Scope::base_fiber(n, k);
        let mut table = vec![vec![Expr::Num(0.0); n]; k];
        for e in &b.entries {
            let (i, j) = entry(&e.key).expect("checked above");
            table[i - 1][j - 1] = e.expr(&scope)?;
        }
        let c = Connection::new(base.clone(), fiber_box.clone(), table).map_err(|e| err(b.line, e.to_string()))?;
        connections.push((b.name().to_string(), c));
    }

    let mut maps = Vec::new();
    for b in of_kind("map") {
        let p = b.require("source")?.count()?;
        if p == 0 {
            return Err(err(b.line, "map source dimension must be positive"));
        }
        b.allow(|key| matches!(key, "source" | "lo" | "hi") || indexed(key, "f", n))?;
        let source = b.boxed(p, Some(&AxisBox::cube(p, -1.0, 1.0)?))?;
        let comps = b.components("f", n, &Scope::base(p))?;
        let map = SmoothMap::new(p, comps).map_err(|e| err(b.line, e.to_string()))?;
        map.check_image(&source, &base)
            .map_err(|e| err(b.line, format!("{} leaves the base: {e}", b.title())))?;
        maps.push((b.name().to_string(), NamedMap { map, source }));
    }

    Ok(Model {
        bundle,
        sections,
        connections,
        maps,
        fiber_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const PLANE: &str = "
# plane with a line
[base]
dim = 2
lo = -1
hi = 1, 1
[fiber]
dim = 1
lo = -5
hi = 5
[relation R]
guard = \"y1^2\"
[function f]
y1 = \"2 * y1\"
[section s]
y1 = \"x1 + x2\"
[section t]
term = \"f(s)\"
[connection Phi]
L12 = \"1\"
[map sigma]
source = 1
f1 = \"t\"
f2 = \"-t\"
";

    #[test]
    fn loads_every_block() {
        let m = Model::parse(PLANE).unwrap();
        assert_eq!(m.bundle.base_dim(), 2);
        assert_eq!(m.section_names(), vec!["s", "t"]);
        assert_eq!(m.section("t").unwrap().eval(&[0.25, 0.5]).unwrap(), vec![1.5]);
        let c = m.connection("Phi").unwrap();
        assert_eq!(c.matrix(&[0.0, 0.0], &[0.0]).unwrap(), vec![vec![0.0, 1.0]]);
        let sigma = m.map("sigma").unwrap();
        assert_eq!(sigma.map.eval(&[0.5]).unwrap(), vec![0.5, -0.5]);
        assert!(m.fiber_grid.is_none());
    }

    #[test]
    fn missing_section_reference_names_its_line() {
        let src = PLANE.replace("term = \"f(s)\"", "term = \"f(u)\"");
        let e = Model::parse(&src).unwrap_err();
        let line = src.lines().position(|l| l.contains("f(u)")).unwrap() + 1;
        assert!(matches!(e, Error::Model { line: l, .. } if l == line), "{e}");
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        for (bad, needle) in [
            ("guard = \"y1^^2\"", "y1^^2"),
            ("guard = \"y1^2", "y1^2"),
            ("guard = \"z + 1\"", "z + 1"),
        ] {
            let src = PLANE.replace("guard = \"y1^2\"", bad);
            let line = src.lines().position(|l| l.contains(needle)).unwrap() + 1;
            match Model::parse(&src).unwrap_err() {
                Error::Model { line: l, .. } => assert_eq!(l, line, "{bad}"),
                other => panic!("{other}"),
            }
        }
    }

    #[test]
    fn structural_errors() {
        for bad in [
            PLANE.replace("[base]", "[bas]"),
            PLANE.replace("dim = 2", "dim = 2\ndim = 3"),
            PLANE.replace("f2 = \"-t\"", "f2 = \"-3 * t\""),
            PLANE.replace("L12", "L13"),
            PLANE.replace("[section t]", "[section s]"),
            PLANE.replace("[fiber]", "[fiber]\nwidth = 3"),
            format!("x = 1\n{PLANE}"),
        ] {
            assert!(matches!(Model::parse(&bad), Err(Error::Model { .. })), "{bad}");
        }
    }

    #[test]
    fn unknown_names_are_errors() {
        let m = Model::parse(PLANE).unwrap();
        assert!(m.section("nope").is_err());
        assert!(m.connection("nope").is_err());
        assert!(m.map("nope").is_err());
    }
}
