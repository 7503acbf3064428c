//! Finitely generated group actions presented computably: symmetric generator
//! systems, words, vertex domains, and the oracles that generate Schreier
//! graphs lazily.
//!
//! Four action kinds are built in: translation on the integers, the regular
//! action of a free group, an explicit finite labeled graph, and invertible
//! Mealy automata acting on eventually periodic sequences.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, UrsError};

/// An ordered symmetric generating set. The symbol order is total and fixed;
/// it drives shortlex enumeration and every canonical form downstream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSystem {
    symbols: Vec<String>,
    inverse: Vec<usize>,
}

impl GeneratorSystem {
    pub fn new(symbols: Vec<String>, inverse: Vec<usize>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(UrsError::Config("empty generator system".into()));
        }
        if inverse.len() != symbols.len() {
            return Err(UrsError::Config("inverse pairing length mismatch".into()));
        }
        let mut seen = BTreeMap::new();
        for (i, s) in symbols.iter().enumerate() {
            if seen.insert(s.clone(), i).is_some() {
                return Err(UrsError::Config(format!("duplicate symbol {s:?}")));
            }
        }
        for (i, &j) in inverse.iter().enumerate() {
            if j >= symbols.len() || inverse[j] != i {
                return Err(UrsError::Config("inverse pairing is not an involution".into()));
            }
        }
        Ok(GeneratorSystem { symbols, inverse })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol_name(&self, i: usize) -> &str {
        &self.symbols[i]
    }

    pub fn symbol_index(&self, name: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == name)
    }

    pub fn inverse_of(&self, i: usize) -> usize {
        self.inverse[i]
    }
}

/// A word in the generators. The rightmost letter acts first:
/// `(q1 q2 … qk)·v = q1·(q2·(…·(qk·v)))`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Word {
    pub letters: Vec<u16>,
}

impl Word {
    pub fn empty() -> Self {
        Word::default()
    }

    pub fn from_letters(letters: Vec<u16>) -> Self {
        Word { letters }
    }

    pub fn len(&self) -> usize {
        self.letters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.letters.is_empty()
    }

    /// Concatenation `self · other`; `other` acts first.
    pub fn concat(&self, other: &Word) -> Word {
        let mut letters = self.letters.clone();
        letters.extend_from_slice(&other.letters);
        Word { letters }
    }

    pub fn display(&self, gens: &GeneratorSystem) -> String {
        if self.letters.is_empty() {
            return "e".into();
        }
        self.letters
            .iter()
            .map(|&l| gens.symbol_name(l as usize).to_string())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Parses a whitespace- or comma-separated list of symbol names; "e" or
    /// the empty string is the identity.
    pub fn parse(gens: &GeneratorSystem, s: &str) -> Result<Word> {
        let s = s.trim();
        if s.is_empty() || s == "e" {
            return Ok(Word::empty());
        }
        let mut letters = Vec::new();
        for tok in s.split(|c: char| c.is_whitespace() || c == ',') {
            if tok.is_empty() {
                continue;
            }
            let i = gens
                .symbol_index(tok)
                .ok_or_else(|| UrsError::Invalid(format!("unknown symbol {tok:?}")))?;
            letters.push(i as u16);
        }
        Ok(Word { letters })
    }
}

/// Reverses the letters and applies the inverse pairing letterwise.
pub fn invert_word(gens: &GeneratorSystem, w: &Word) -> Word {
    Word {
        letters: w
            .letters
            .iter()
            .rev()
            .map(|&l| gens.inverse_of(l as usize) as u16)
            .collect(),
    }
}

/// All words of length ≤ n in shortlex order under the fixed symbol order.
/// The position of a word in this list is its word index.
pub fn word_enumerate(gens: &GeneratorSystem, n: usize) -> Vec<Word> {
    let deg = gens.len();
    let mut out = vec![Word::empty()];
    let mut level_start = 0;
    for _ in 0..n {
        let level_end = out.len();
        // first letter major, then the lex-ordered suffixes: lex order on
        // each length block
        for q in 0..deg {
            for i in level_start..level_end {
                let mut letters = vec![q as u16];
                letters.extend_from_slice(&out[i].letters);
                out.push(Word { letters });
            }
        }
        level_start = level_end;
    }
    out
}

// ---------------------------------------------------------------------------
// Vertices
// ---------------------------------------------------------------------------

/// A point of the vertex domain, with a canonical injective serialization.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Vertex {
    Int(i64),
    /// Reduced word in the free-group symbols.
    FreeWord(Vec<u16>),
    Finite(u32),
    /// Eventually periodic sequence `prefix · period^∞`, canonicalized:
    /// primitive period, minimal prefix.
    Mealy { prefix: Vec<u8>, period: Vec<u8> },
}

impl Vertex {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Vertex::Int(n) => {
                out.push(0);
                out.extend_from_slice(&n.to_le_bytes());
            }
            Vertex::FreeWord(w) => {
                out.push(1);
                for &l in w {
                    out.extend_from_slice(&l.to_le_bytes());
                }
            }
            Vertex::Finite(v) => {
                out.push(2);
                out.extend_from_slice(&v.to_le_bytes());
            }
            Vertex::Mealy { prefix, period } => {
                out.push(3);
                out.extend_from_slice(&(prefix.len() as u32).to_le_bytes());
                out.extend_from_slice(prefix);
                out.extend_from_slice(period);
            }
        }
        out
    }

    pub fn display(&self, gens: &GeneratorSystem) -> String {
        match self {
            Vertex::Int(n) => n.to_string(),
            Vertex::FreeWord(w) => {
                if w.is_empty() {
                    "e".into()
                } else {
                    w.iter()
                        .map(|&l| gens.symbol_name(l as usize).to_string())
                        .collect::<Vec<_>>()
                        .join(" ")
                }
            }
            Vertex::Finite(v) => v.to_string(),
            Vertex::Mealy { prefix, period } => {
                let p: String = prefix.iter().map(|d| d.to_string()).collect();
                let q: String = period.iter().map(|d| d.to_string()).collect();
                format!("{p}|{q}")
            }
        }
    }
}

/// Canonical form of an eventually periodic sequence: the period is made
/// primitive and trailing prefix letters equal to the period tail are rolled
/// into the period. The canonical pair is unique per sequence.
pub fn canonicalize_eventually_periodic(mut prefix: Vec<u8>, mut period: Vec<u8>) -> (Vec<u8>, Vec<u8>) {
    assert!(!period.is_empty());
    // primitive period
    let n = period.len();
    for d in 1..=n {
        if n.is_multiple_of(d) && (d..n).all(|i| period[i] == period[i - d]) {
            period.truncate(d);
            break;
        }
    }
    // roll the prefix into the period while its last letter matches
    while let Some(&last) = prefix.last() {
        if last == *period.last().unwrap() {
            prefix.pop();
            period.rotate_right(1);
        } else {
            break;
        }
    }
    (prefix, period)
}

// ---------------------------------------------------------------------------
// Mealy machines
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct MealyMachine {
    pub alphabet: usize,
    /// transition[state][letter] → next state
    pub transition: Vec<Vec<usize>>,
    /// output[state][letter] → output letter
    pub output: Vec<Vec<usize>>,
    pub state_names: Vec<String>,
    /// automaton state realizing each generator symbol
    pub state_of_symbol: Vec<usize>,
}

impl MealyMachine {
    /// Applies the transformation of `state` to `prefix · period^∞` and
    /// returns the canonicalized output sequence.
    pub fn transform(&self, state: usize, prefix: &[u8], period: &[u8]) -> (Vec<u8>, Vec<u8>) {
        let mut st = state;
        let mut out_prefix = Vec::with_capacity(prefix.len());
        for &c in prefix {
            out_prefix.push(self.output[st][c as usize] as u8);
            st = self.transition[st][c as usize];
        }
        // run whole period blocks until the machine state repeats
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let mut blocks: Vec<Vec<u8>> = Vec::new();
        let cycle_start = loop {
            if let Some(&k) = seen.get(&st) {
                break k;
            }
            seen.insert(st, blocks.len());
            let mut block = Vec::with_capacity(period.len());
            for &c in period {
                block.push(self.output[st][c as usize] as u8);
                st = self.transition[st][c as usize];
            }
            blocks.push(block);
        };
        for b in &blocks[..cycle_start] {
            out_prefix.extend_from_slice(b);
        }
        let mut out_period = Vec::new();
        for b in &blocks[cycle_start..] {
            out_period.extend_from_slice(b);
        }
        canonicalize_eventually_periodic(out_prefix, out_period)
    }

    /// Checks that the composite "state_b after state_a" acts as the identity
    /// on every input, via reachable-pair analysis of the product automaton.
    fn composes_to_identity(&self, a: usize, b: usize) -> bool {
        let mut seen = vec![false; self.transition.len() * self.transition.len()];
        let mut stack = vec![(a, b)];
        while let Some((s, t)) = stack.pop() {
            let id = s * self.transition.len() + t;
            if seen[id] {
                continue;
            }
            seen[id] = true;
            for c in 0..self.alphabet {
                let mid = self.output[s][c];
                if self.output[t][mid] != c {
                    return false;
                }
                stack.push((self.transition[s][c], self.transition[t][mid]));
            }
        }
        true
    }
}

// ---------------------------------------------------------------------------
// Action configs and oracles
// ---------------------------------------------------------------------------

/// Action description document. See the JSON schemas in the README.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ActionConfig {
    Integers,
    Free {
        rank: usize,
    },
    FiniteSchreier {
        symbols: Vec<String>,
        inverses: Vec<String>,
        vertices: usize,
        edges: Vec<(u32, String, u32)>,
        base: u32,
    },
    Mealy {
        symbols: Vec<String>,
        inverses: Vec<String>,
        alphabet: usize,
        transitions: BTreeMap<String, Vec<String>>,
        outputs: BTreeMap<String, Vec<usize>>,
        base: MealyBase,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MealyBase {
    pub prefix: String,
    pub period: String,
}

#[derive(Clone, Debug)]
enum ActionKind {
    Integers,
    Free,
    /// edge table per symbol: `edges[q][v]` is the q-target of v
    Finite(Vec<Vec<u32>>),
    Mealy(MealyMachine),
}

/// A loaded action: total `apply` on its vertex domain, generators acting
/// bijectively. Immutable and safe to share across threads.
pub struct ActionOracle {
    gens: GeneratorSystem,
    base: Vertex,
    kind: ActionKind,
    hash: String,
}

impl fmt::Debug for ActionOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ActionOracle").field("hash", &self.hash).finish()
    }
}

impl ActionOracle {
    pub fn generators(&self) -> &GeneratorSystem {
        &self.gens
    }

    pub fn base(&self) -> &Vertex {
        &self.base
    }

    /// Content hash of the generating action (hex SHA-256 of the normalized
    /// config document).
    pub fn content_hash(&self) -> &str {
        &self.hash
    }

    pub fn apply(&self, symbol: usize, v: &Vertex) -> Vertex {
        match (&self.kind, v) {
            (ActionKind::Integers, Vertex::Int(n)) => {
                if symbol == 0 {
                    Vertex::Int(n + 1)
                } else {
                    Vertex::Int(n - 1)
                }
            }
            (ActionKind::Free, Vertex::FreeWord(w)) => {
                // left multiplication with one cancellation at the front
                if let Some(&first) = w.first() {
                    if self.gens.inverse_of(symbol) == first as usize {
                        return Vertex::FreeWord(w[1..].to_vec());
                    }
                }
                let mut out = Vec::with_capacity(w.len() + 1);
                out.push(symbol as u16);
                out.extend_from_slice(w);
                Vertex::FreeWord(out)
            }
            (ActionKind::Finite(edges), Vertex::Finite(n)) => Vertex::Finite(edges[symbol][*n as usize]),
            (ActionKind::Mealy(m), Vertex::Mealy { prefix, period }) => {
                let (p, q) = m.transform(m.state_of_symbol[symbol], prefix, period);
                Vertex::Mealy { prefix: p, period: q }
            }
            _ => unreachable!("vertex kind does not match the oracle"),
        }
    }

    /// `w·v` with the rightmost letter acting first.
    pub fn apply_word(&self, w: &Word, v: &Vertex) -> Vertex {
        let mut cur = v.clone();
        for &l in w.letters.iter().rev() {
            cur = self.apply(l as usize, &cur);
        }
        cur
    }

    pub fn parse_vertex(&self, s: &str) -> Result<Vertex> {
        let s = s.trim();
        match &self.kind {
            ActionKind::Integers => Ok(Vertex::Int(
                s.parse().map_err(|_| UrsError::Invalid(format!("bad integer vertex {s:?}")))?,
            )),
            ActionKind::Free => {
                let w = Word::parse(&self.gens, s)?;
                Ok(self.apply_word(&w, &Vertex::FreeWord(Vec::new())))
            }
            ActionKind::Finite(_) => Ok(Vertex::Finite(
                s.parse().map_err(|_| UrsError::Invalid(format!("bad vertex index {s:?}")))?,
            )),
            ActionKind::Mealy(_) => {
                let (p, q) = s
                    .split_once('|')
                    .ok_or_else(|| UrsError::Invalid("mealy vertex must be prefix|period".into()))?;
                let parse_digits = |t: &str| -> Result<Vec<u8>> {
                    t.chars()
                        .map(|c| {
                            c.to_digit(10)
                                .map(|d| d as u8)
                                .ok_or_else(|| UrsError::Invalid(format!("bad digit {c:?}")))
                        })
                        .collect()
                };
                let period = parse_digits(q)?;
                if period.is_empty() {
                    return Err(UrsError::Invalid("empty period".into()));
                }
                let (p, q) = canonicalize_eventually_periodic(parse_digits(p)?, period);
                Ok(Vertex::Mealy { prefix: p, period: q })
            }
        }
    }
}

/// Builds an oracle from a config document.
pub fn load_action(config: &ActionConfig) -> Result<ActionOracle> {
    let hash = {
        let canonical = serde_json::to_string(config)
            .map_err(|e| UrsError::Config(format!("unserializable config: {e}")))?;
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect::<String>()
    };
    match config {
        ActionConfig::Integers => Ok(ActionOracle {
            gens: GeneratorSystem::new(vec!["a".into(), "a^-1".into()], vec![1, 0])?,
            base: Vertex::Int(0),
            kind: ActionKind::Integers,
            hash,
        }),
        ActionConfig::Free { rank } => {
            if *rank == 0 {
                return Err(UrsError::Config("free rank must be positive".into()));
            }
            let mut symbols = Vec::new();
            let mut inverse = Vec::new();
            for i in 0..*rank {
                let name = ((b'a' + (i % 26) as u8) as char).to_string();
                let name = if i < 26 { name } else { format!("{name}{}", i / 26) };
                symbols.push(name.clone());
                symbols.push(format!("{name}^-1"));
                inverse.push(2 * i + 1);
                inverse.push(2 * i);
            }
            Ok(ActionOracle {
                gens: GeneratorSystem::new(symbols, inverse)?,
                base: Vertex::FreeWord(Vec::new()),
                kind: ActionKind::Free,
                hash,
            })
        }
        ActionConfig::FiniteSchreier { symbols, inverses, vertices, edges, base } => {
            let gens = pair_symbols(symbols, inverses)?;
            if *vertices == 0 {
                return Err(UrsError::Config("empty vertex set".into()));
            }
            let mut table: Vec<Vec<Option<u32>>> = vec![vec![None; *vertices]; gens.len()];
            for (v, name, w) in edges {
                let q = gens
                    .symbol_index(name)
                    .ok_or_else(|| UrsError::Config(format!("unknown edge label {name:?}")))?;
                if *v as usize >= *vertices || *w as usize >= *vertices {
                    return Err(UrsError::Config(format!("edge ({v},{name},{w}) out of range")));
                }
                if table[q][*v as usize].replace(*w).is_some() {
                    return Err(UrsError::Config(format!(
                        "vertex {v} has two {name:?}-edges; action must be a labeled function"
                    )));
                }
            }
            let mut total = Vec::with_capacity(gens.len());
            for (q, row) in table.into_iter().enumerate() {
                let row: Option<Vec<u32>> = row.into_iter().collect();
                let row = row.ok_or_else(|| {
                    UrsError::Config(format!(
                        "edge set is not {}-regular with labels: symbol {:?} is not total",
                        gens.len(),
                        gens.symbol_name(q)
                    ))
                })?;
                total.push(row);
            }
            // generators act bijectively and the pairing really inverts
            for q in 0..gens.len() {
                let qi = gens.inverse_of(q);
                for v in 0..*vertices {
                    let w = total[q][v] as usize;
                    if total[qi][w] as usize != v {
                        return Err(UrsError::Config(format!(
                            "symbol {:?} is not inverted by {:?} at vertex {v}",
                            gens.symbol_name(q),
                            gens.symbol_name(qi)
                        )));
                    }
                }
            }
            if *base as usize >= *vertices {
                return Err(UrsError::Config("base out of range".into()));
            }
            Ok(ActionOracle {
                gens,
                base: Vertex::Finite(*base),
                kind: ActionKind::Finite(total),
                hash,
            })
        }
        ActionConfig::Mealy { symbols, inverses, alphabet, transitions, outputs, base } => {
            let gens = pair_symbols(symbols, inverses)?;
            if *alphabet == 0 {
                return Err(UrsError::Config("empty alphabet".into()));
            }
            // state space = all states named in the transition table
            let mut state_names: Vec<String> = transitions.keys().cloned().collect();
            state_names.sort();
            let state_idx: BTreeMap<String, usize> =
                state_names.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
            let mut transition = Vec::with_capacity(state_names.len());
            let mut output = Vec::with_capacity(state_names.len());
            for name in &state_names {
                let tr = &transitions[name];
                let out = outputs
                    .get(name)
                    .ok_or_else(|| UrsError::Config(format!("state {name:?} has no outputs")))?;
                if tr.len() != *alphabet || out.len() != *alphabet {
                    return Err(UrsError::Config(format!(
                        "state {name:?} must list exactly {alphabet} transitions and outputs"
                    )));
                }
                let mut tr_row = Vec::with_capacity(*alphabet);
                for t in tr {
                    let &i = state_idx
                        .get(t)
                        .ok_or_else(|| UrsError::Config(format!("unknown state {t:?}")))?;
                    tr_row.push(i);
                }
                // each state's output function is a permutation of the alphabet
                let mut seen = vec![false; *alphabet];
                for &o in out {
                    if o >= *alphabet || seen[o] {
                        return Err(UrsError::Config(format!(
                            "non-invertible automaton: outputs of state {name:?} are not a permutation"
                        )));
                    }
                    seen[o] = true;
                }
                transition.push(tr_row);
                output.push(out.clone());
            }
            let mut state_of_symbol = Vec::with_capacity(gens.len());
            for i in 0..gens.len() {
                let name = gens.symbol_name(i);
                let &st = state_idx
                    .get(name)
                    .ok_or_else(|| UrsError::Config(format!("generator {name:?} has no automaton state")))?;
                state_of_symbol.push(st);
            }
            let machine = MealyMachine {
                alphabet: *alphabet,
                transition,
                output,
                state_names,
                state_of_symbol,
            };
            // declared inverses must actually invert
            for q in 0..gens.len() {
                let qi = gens.inverse_of(q);
                let (a, b) = (machine.state_of_symbol[q], machine.state_of_symbol[qi]);
                if !machine.composes_to_identity(a, b) {
                    return Err(UrsError::Config(format!(
                        "symbol {:?} is not inverted by {:?}",
                        gens.symbol_name(q),
                        gens.symbol_name(qi)
                    )));
                }
            }
            let parse_digits = |t: &str| -> Result<Vec<u8>> {
                t.chars()
                    .map(|c| {
                        let d = c
                            .to_digit(10)
                            .ok_or_else(|| UrsError::Config(format!("bad digit {c:?} in base")))?;
                        if d as usize >= *alphabet {
                            return Err(UrsError::Config(format!("letter {d} outside alphabet")));
                        }
                        Ok(d as u8)
                    })
                    .collect()
            };
            let period = parse_digits(&base.period)?;
            if period.is_empty() {
                return Err(UrsError::Config("base period must be nonempty".into()));
            }
            let (p, q) = canonicalize_eventually_periodic(parse_digits(&base.prefix)?, period);
            Ok(ActionOracle {
                gens,
                base: Vertex::Mealy { prefix: p, period: q },
                kind: ActionKind::Mealy(machine),
                hash,
            })
        }
    }
}

fn pair_symbols(symbols: &[String], inverses: &[String]) -> Result<GeneratorSystem> {
    if inverses.len() != symbols.len() {
        return Err(UrsError::Config("inverses must list one name per symbol".into()));
    }
    let mut inverse = Vec::with_capacity(symbols.len());
    for name in inverses {
        let i = symbols
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| UrsError::Config(format!("inverse {name:?} is not a symbol")))?;
        inverse.push(i);
    }
    GeneratorSystem::new(symbols.to_vec(), inverse)
}

/// The standard first Grigorchuk machine on {0,1}, rooted at the all-ones ray.
/// Used by tests and the CLI self tests; exported for convenience.
pub fn grigorchuk_config() -> ActionConfig {
    let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut transitions = BTreeMap::new();
    let mut outputs = BTreeMap::new();
    transitions.insert("e".into(), names(&["e", "e"]));
    outputs.insert("e".into(), vec![0, 1]);
    transitions.insert("a".into(), names(&["e", "e"]));
    outputs.insert("a".into(), vec![1, 0]);
    transitions.insert("b".into(), names(&["a", "c"]));
    outputs.insert("b".into(), vec![0, 1]);
    transitions.insert("c".into(), names(&["a", "d"]));
    outputs.insert("c".into(), vec![0, 1]);
    transitions.insert("d".into(), names(&["e", "b"]));
    outputs.insert("d".into(), vec![0, 1]);
    ActionConfig::Mealy {
        symbols: names(&["a", "b", "c", "d"]),
        inverses: names(&["a", "b", "c", "d"]),
        alphabet: 2,
        transitions,
        outputs,
        base: MealyBase { prefix: "".into(), period: "1".into() },
    }
}

/// The same machine rooted at the all-zeros ray, whose orbit graph is a
/// two-ended line: the uniformly recurrent representative of the system.
/// The all-ones base roots a one-ended ray whose origin ball types never
/// recur, so recurrence checks should prefer this base.
pub fn grigorchuk_line_config() -> ActionConfig {
    let mut cfg = grigorchuk_config();
    if let ActionConfig::Mealy { base, .. } = &mut cfg {
        base.prefix = "".into();
        base.period = "0".into();
    }
    cfg
}

/// The 2-cycle: Γ = Z acting on Z/2Z (the index-2 coset action).
pub fn two_cycle_config() -> ActionConfig {
    ActionConfig::FiniteSchreier {
        symbols: vec!["a".into(), "a^-1".into()],
        inverses: vec!["a^-1".into(), "a".into()],
        vertices: 2,
        edges: vec![
            (0, "a".into(), 1),
            (1, "a".into(), 0),
            (0, "a^-1".into(), 1),
            (1, "a^-1".into(), 0),
        ],
        base: 0,
    }
}
