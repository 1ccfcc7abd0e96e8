//! Training-data confidence: n-gram coverage and edit-distance neighbors
//! over the parallel corpus the MT system was trained on.

use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::records::Tokens;
use crate::textmetrics::{levenshtein_within, sim, tokenize};

pub const MAX_ORDER: usize = 5;
pub const SNAPSHOT_MAGIC: &str = "UQKIT-IDX v1";

/// Which side of the parallel corpus a neighbor query searches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Src,
    Tgt,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Src => "x",
            Side::Tgt => "y",
        }
    }
}

/// A feature value that may have hit a degeneracy guard.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guarded {
    pub value: f64,
    pub degenerate: bool,
}

impl Guarded {
    fn ok(value: f64) -> Self {
        Guarded {
            value,
            degenerate: false,
        }
    }

    fn flagged(value: f64) -> Self {
        Guarded {
            value,
            degenerate: true,
        }
    }
}

/// Token interning shared by both corpus sides.
#[derive(Debug, Clone, Default)]
struct Vocab {
    ids: HashMap<String, u32>,
}

impl Vocab {
    fn intern(&mut self, tok: &str) -> u32 {
        if let Some(&id) = self.ids.get(tok) {
            return id;
        }
        let id = self.ids.len() as u32;
        self.ids.insert(tok.to_owned(), id);
        id
    }

    /// Maps a query onto ids; unknown tokens map to an id no corpus token has.
    fn encode_query(&self, q: &[String]) -> Vec<u32> {
        q.iter()
            .map(|t| self.ids.get(t).copied().unwrap_or(u32::MAX))
            .collect()
    }
}

/// N-gram membership sets (orders 1..=5) plus both sides of the corpus.
#[derive(Debug, Clone)]
pub struct CorpusIndex {
    vocab: Vocab,
    ngrams: Vec<HashSet<Box<[u32]>>>,
    src: Vec<Tokens>,
    tgt: Vec<Tokens>,
    src_ids: Vec<Vec<u32>>,
    tgt_ids: Vec<Vec<u32>>,
}

impl CorpusIndex {
    pub fn build(parallel: &[(Tokens, Tokens)]) -> Result<Self> {
        if parallel.is_empty() {
            return Err(Error::invalid("cannot index an empty corpus"));
        }
        let mut index = CorpusIndex {
            vocab: Vocab::default(),
            ngrams: vec![HashSet::new(); MAX_ORDER],
            src: Vec::with_capacity(parallel.len()),
            tgt: Vec::with_capacity(parallel.len()),
            src_ids: Vec::with_capacity(parallel.len()),
            tgt_ids: Vec::with_capacity(parallel.len()),
        };
        for (s, t) in parallel {
            let sid: Vec<u32> = s.iter().map(|w| index.vocab.intern(w)).collect();
            let tid: Vec<u32> = t.iter().map(|w| index.vocab.intern(w)).collect();
            for n in 1..=MAX_ORDER {
                for gram in sid.windows(n) {
                    index.ngrams[n - 1].insert(gram.into());
                }
            }
            index.src.push(s.clone());
            index.tgt.push(t.clone());
            index.src_ids.push(sid);
            index.tgt_ids.push(tid);
        }
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn sentences(&self, side: Side) -> &[Tokens] {
        match side {
            Side::Src => &self.src,
            Side::Tgt => &self.tgt,
        }
    }

    /// The n-grams of order `n` as space-joined strings, sorted.
    pub fn ngrams(&self, n: usize) -> Result<Vec<String>> {
        check_order(n)?;
        let mut words = vec![""; self.vocab.ids.len()];
        for (w, &id) in &self.vocab.ids {
            words[id as usize] = w;
        }
        let mut out: Vec<String> = self.ngrams[n - 1]
            .iter()
            .map(|g| {
                g.iter()
                    .map(|&id| words[id as usize])
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        out.sort_unstable();
        Ok(out)
    }

    pub fn contains_ngram(&self, gram: &[String]) -> bool {
        let n = gram.len();
        if n == 0 || n > MAX_ORDER {
            return false;
        }
        let mut ids = Vec::with_capacity(n);
        for t in gram {
            match self.vocab.ids.get(t) {
                Some(&id) => ids.push(id),
                None => return false,
            }
        }
        self.ngrams[n - 1].contains(ids.as_slice())
    }

    /// Fraction of the query's order-`n` n-grams present in the corpus.
    ///
    /// With fewer than `n` tokens the coverage is undefined; it is reported
    /// as 0 with the degenerate flag set.
    pub fn ds_gram(&self, x: &[String], n: usize) -> Result<Guarded> {
        check_order(n)?;
        if x.len() < n {
            return Ok(Guarded::flagged(0.0));
        }
        let total = x.len() - n + 1;
        let covered = x.windows(n).filter(|g| self.contains_ngram(g)).count();
        Ok(Guarded::ok(covered as f64 / total as f64))
    }

    /// Positions of the `k` sentences nearest to `q` by token Levenshtein
    /// distance, ordered by (distance, position).
    pub fn nearest(&self, q: &[String], k: usize, side: Side) -> Result<Vec<(usize, usize)>> {
        if k == 0 {
            return Err(Error::invalid("neighbor count K must be >= 1"));
        }
        let query = self.vocab.encode_query(q);
        let corpus = match side {
            Side::Src => &self.src_ids,
            Side::Tgt => &self.tgt_ids,
        };
        // Max-heap on (distance, position): the root is the current worst.
        let mut heap: BinaryHeap<(usize, usize)> = BinaryHeap::with_capacity(k + 1);
        for (pos, sent) in corpus.iter().enumerate() {
            if heap.len() < k {
                let d = levenshtein_within(&query, sent, usize::MAX).expect("unbounded");
                heap.push((d, pos));
                continue;
            }
            let worst = heap.peek().expect("heap is full").0;
            // Later positions lose ties, so only a strictly smaller distance
            // can enter.
            if worst == 0 {
                continue;
            }
            if let Some(d) = levenshtein_within(&query, sent, worst - 1) {
                heap.pop();
                heap.push((d, pos));
            }
        }
        let mut out = heap.into_vec();
        out.sort_unstable();
        Ok(out)
    }

    /// Mean similarity between `q` and its `k` nearest corpus sentences.
    ///
    /// When the corpus holds fewer than `k` sentences every sentence is used
    /// and the result is flagged.
    pub fn ds_neighbors(&self, q: &[String], k: usize, side: Side) -> Result<Guarded> {
        let neighbors = self.nearest(q, k, side)?;
        let sentences = self.sentences(side);
        let total: f64 = neighbors
            .iter()
            .map(|&(_, pos)| sim(q, &sentences[pos]).value())
            .sum();
        let mean = total / neighbors.len() as f64;
        Ok(if neighbors.len() < k {
            Guarded::flagged(mean)
        } else {
            Guarded::ok(mean)
        })
    }

    /// Writes the text snapshot: magic line, `[NGRAMS N=k]` sections sorted
    /// lexicographically, then `[SRC]` and `[TGT]` in corpus order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(w, "{SNAPSHOT_MAGIC}").map_err(io)?;
        for n in 1..=MAX_ORDER {
            writeln!(w, "[NGRAMS N={n}]").map_err(io)?;
            for g in self.ngrams(n)? {
                writeln!(w, "{g}").map_err(io)?;
            }
        }
        for (header, side) in [("[SRC]", &self.src), ("[TGT]", &self.tgt)] {
            writeln!(w, "{header}").map_err(io)?;
            for s in side {
                writeln!(w, "{}", s.join(" ")).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Loads a snapshot without re-deriving the n-gram sets.
    pub fn load(path: &Path) -> Result<Self> {
        let io = |e| Error::io(path, e);
        let reader = BufReader::new(File::open(path).map_err(io)?);
        let mut lines = reader.lines();
        match lines.next() {
            Some(Ok(l)) if l == SNAPSHOT_MAGIC => {}
            Some(Ok(l)) => {
                return Err(Error::Format(format!(
                    "expected header {SNAPSHOT_MAGIC:?}, found {l:?}"
                )))
            }
            Some(Err(e)) => return Err(io(e)),
            None => return Err(Error::Format("empty snapshot".into())),
        }

        let headers: Vec<String> = (1..=MAX_ORDER)
            .map(|n| format!("[NGRAMS N={n}]"))
            .chain(["[SRC]".to_owned(), "[TGT]".to_owned()])
            .collect();
        let mut sections: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        let mut current: Option<usize> = None;
        for line in lines {
            let line = line.map_err(io)?;
            let next = current.map_or(0, |c| c + 1);
            if next < headers.len() && line == headers[next] {
                current = Some(next);
                continue;
            }
            match current {
                Some(c) => sections[c].push(line),
                None => {
                    return Err(Error::Format(format!(
                        "content before first section: {line:?}"
                    )))
                }
            }
        }
        if current != Some(headers.len() - 1) {
            return Err(Error::Format("snapshot is truncated".into()));
        }

        let tgt_lines = sections.pop().expect("tgt");
        let src_lines = sections.pop().expect("src");
        if src_lines.len() != tgt_lines.len() {
            return Err(Error::Format(format!(
                "{} source vs {} target sentences",
                src_lines.len(),
                tgt_lines.len()
            )));
        }
        if src_lines.is_empty() {
            return Err(Error::Format("snapshot holds no sentences".into()));
        }
        let mut index = CorpusIndex {
            vocab: Vocab::default(),
            ngrams: vec![HashSet::new(); MAX_ORDER],
            src: Vec::with_capacity(src_lines.len()),
            tgt: Vec::with_capacity(src_lines.len()),
            src_ids: Vec::with_capacity(src_lines.len()),
            tgt_ids: Vec::with_capacity(src_lines.len()),
        };
        for (s, t) in src_lines.iter().zip(&tgt_lines) {
            let s = tokenize(s);
            let t = tokenize(t);
            index
                .src_ids
                .push(s.iter().map(|w| index.vocab.intern(w)).collect());
            index
                .tgt_ids
                .push(t.iter().map(|w| index.vocab.intern(w)).collect());
            index.src.push(s);
            index.tgt.push(t);
        }
        for (n, grams) in sections.into_iter().enumerate() {
            for g in grams {
                let ids: Box<[u32]> = g.split(' ').map(|w| index.vocab.intern(w)).collect();
                if ids.len() != n + 1 {
                    return Err(Error::Format(format!(
                        "n-gram {g:?} listed under N={}",
                        n + 1
                    )));
                }
                index.ngrams[n].insert(ids);
            }
        }
        Ok(index)
    }
}

fn check_order(n: usize) -> Result<()> {
    if (1..=MAX_ORDER).contains(&n) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "n-gram order {n} outside 1..={MAX_ORDER}"
        )))
    }
}

/// Reads a parallel corpus: one `source<TAB>target` pair per line.
pub fn read_parallel_corpus(path: &Path) -> Result<Vec<(Tokens, Tokens)>> {
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (s, t) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            message: "expected source<TAB>target".into(),
        })?;
        out.push((tokenize(s), tokenize(t)));
    }
    Ok(out)
}

pub fn write_parallel_corpus(pairs: &[(Tokens, Tokens)], path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for (s, t) in pairs {
        writeln!(w, "{}\t{}", s.join(" "), t.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}
