use std::collections::{HashMap, VecDeque};

use super::{GGramMatchSet, GGramVocab, Match};
use crate::tokenizer::TokenId;

const ROOT: u32 = 0;
const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    next: HashMap<TokenId, u32>,
    fail: u32,
    // G-gram ending exactly at this node.
    output: u32,
    // Nearest proper suffix node that has an output.
    dict: u32,
    depth: u32,
}

impl Node {
    fn new(depth: u32) -> Self {
        Node {
            next: HashMap::new(),
            fail: ROOT,
            output: NONE,
            dict: NONE,
            depth,
        }
    }
}

/// Aho-Corasick automaton over token ids.
///
/// Reports every occurrence of every vocabulary entry, overlaps included,
/// in a single left-to-right pass.
#[derive(Debug, Clone)]
pub struct GGramMatcher {
    nodes: Vec<Node>,
}

impl GGramMatcher {
    pub fn new(vocab: &GGramVocab) -> Self {
        let mut nodes = vec![Node::new(0)];
        for (id, entry) in vocab.entries().iter().enumerate() {
            let mut cur = ROOT;
            for &tok in &entry.tokens {
                let depth = nodes[cur as usize].depth + 1;
                cur = match nodes[cur as usize].next.get(&tok) {
                    Some(&n) => n,
                    None => {
                        let n = nodes.len() as u32;
                        nodes.push(Node::new(depth));
                        nodes[cur as usize].next.insert(tok, n);
                        n
                    }
                };
            }
            nodes[cur as usize].output = id as u32;
        }

        let mut queue: VecDeque<u32> = nodes[ROOT as usize].next.values().copied().collect();
        while let Some(u) = queue.pop_front() {
            let children: Vec<(TokenId, u32)> =
                nodes[u as usize].next.iter().map(|(&t, &v)| (t, v)).collect();
            for (tok, v) in children {
                let mut f = nodes[u as usize].fail;
                let fail = loop {
                    if let Some(&g) = nodes[f as usize].next.get(&tok) {
                        break g;
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = nodes[f as usize].fail;
                };
                let fnode = &nodes[fail as usize];
                let dict = if fnode.output != NONE { fail } else { fnode.dict };
                let node = &mut nodes[v as usize];
                node.fail = fail;
                node.dict = dict;
                queue.push_back(v);
            }
        }
        GGramMatcher { nodes }
    }

    fn step(&self, mut state: u32, tok: TokenId) -> u32 {
        loop {
            if let Some(&n) = self.nodes[state as usize].next.get(&tok) {
                return n;
            }
            if state == ROOT {
                return ROOT;
            }
            state = self.nodes[state as usize].fail;
        }
    }

    /// All occurrences in `tokens`, ordered by `(start, length)`.
    pub fn find_all(&self, tokens: &[TokenId]) -> GGramMatchSet {
        let mut matches = Vec::new();
        let mut state = ROOT;
        for (i, &tok) in tokens.iter().enumerate() {
            state = self.step(state, tok);
            let mut n = state;
            if self.nodes[n as usize].output == NONE {
                n = self.nodes[n as usize].dict;
            }
            while n != NONE {
                let node = &self.nodes[n as usize];
                let len = node.depth as usize;
                matches.push(Match {
                    ggram: node.output,
                    start: i + 1 - len,
                    end: i + 1,
                });
                n = node.dict;
            }
        }
        matches.sort_unstable_by_key(|m| (m.start, m.end, m.ggram));
        GGramMatchSet {
            matches,
            source_len: tokens.len(),
        }
    }
}

/// Keeps at most `max` matches, preferring longer then leftmost spans, and
/// returns them in `(start, length)` order.
pub fn cap_matches(set: &GGramMatchSet, max: usize) -> GGramMatchSet {
    if set.matches.len() <= max {
        return set.clone();
    }
    let mut kept = set.matches.clone();
    kept.sort_by(|a, b| b.len().cmp(&a.len()).then(a.start.cmp(&b.start)).then(a.ggram.cmp(&b.ggram)));
    kept.truncate(max);
    kept.sort_unstable_by_key(|m| (m.start, m.end, m.ggram));
    GGramMatchSet {
        matches: kept,
        source_len: set.source_len,
    }
}
