//! Greedy longest-match mention linking.

use crate::kg::AliasIndex;

/// A linked mention covering tokens `start..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Link {
    pub start: usize,
    pub end: usize,
    pub entity: u32,
}

/// Scans left to right; at each position takes the longest alias match and
/// jumps past it. Returned spans are sorted and non-overlapping.
pub fn link_mentions(tokens: &[u32], aliases: &AliasIndex) -> Vec<Link> {
    let mut links = Vec::new();
    let max = aliases.max_surface_len();
    let mut i = 0;
    while i < tokens.len() {
        let longest = (1..=max.min(tokens.len() - i)).rev().find_map(|len| {
            let span = &tokens[i..i + len];
            if !AliasIndex::linkable(span) {
                return None;
            }
            aliases.get(span).map(|e| (len, e))
        });
        match longest {
            Some((len, entity)) => {
                links.push(Link { start: i, end: i + len, entity });
                i += len;
            }
            None => i += 1,
        }
    }
    links
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::text::{tokenize, WordVocab};
    use proptest::prelude::*;

    fn index(vocab: &WordVocab, entries: &[(&str, u32)]) -> AliasIndex {
        let mut idx = AliasIndex::new();
        for (s, e) in entries {
            idx.insert(tokenize(s, vocab), *e);
        }
        idx
    }

    #[test]
    fn multi_token_mention() {
        let v = WordVocab::from_texts(["harry potter fights"]);
        let idx = index(&v, &[("harry potter", 7)]);
        let toks = tokenize("harry potter fights", &v);
        assert_eq!(link_mentions(&toks, &idx), vec![Link { start: 0, end: 2, entity: 7 }]);
    }

    #[test]
    fn prefers_longer_alias() {
        let v = WordVocab::from_texts(["harry potter fights"]);
        let idx = index(&v, &[("harry", 1), ("harry potter", 7)]);
        let toks = tokenize("harry potter fights", &v);
        assert_eq!(link_mentions(&toks, &idx), vec![Link { start: 0, end: 2, entity: 7 }]);
    }

    #[test]
    fn no_match() {
        let v = WordVocab::from_texts(["a b c"]);
        let idx = index(&v, &[("c a", 1)]);
        assert!(link_mentions(&tokenize("a b c", &v), &idx).is_empty());
        assert!(link_mentions(&[], &idx).is_empty());
    }

    #[test]
    fn unknown_tokens_never_link() {
        let v = WordVocab::from_texts(["a"]);
        let idx = index(&v, &[("zzz", 1)]);
        assert!(link_mentions(&tokenize("zzz a", &v), &idx).is_empty());
    }

    /// Enumerates every non-overlapping matching and keeps the one that is
    /// lexicographically best when read left to right with "longer match at
    /// an earlier start" winning.
    fn oracle(tokens: &[u32], alias: &[(Vec<u32>, u32)]) -> Vec<Link> {
        fn rec(tokens: &[u32], alias: &[(Vec<u32>, u32)], i: usize, acc: &mut Vec<Link>, all: &mut Vec<Vec<Link>>) {
            if i >= tokens.len() {
                all.push(acc.clone());
                return;
            }
            rec(tokens, alias, i + 1, acc, all);
            for (s, e) in alias {
                if tokens[i..].starts_with(s) {
                    acc.push(Link { start: i, end: i + s.len(), entity: *e });
                    rec(tokens, alias, i + s.len(), acc, all);
                    acc.pop();
                }
            }
        }
        let mut all = Vec::new();
        rec(tokens, alias, 0, &mut Vec::new(), &mut all);
        // Score: per token, the length of the match that starts there (0 if none).
        let key = |m: &Vec<Link>| {
            let mut k = vec![0usize; tokens.len()];
            for l in m {
                k[l.start] = l.end - l.start;
            }
            k
        };
        all.into_iter().max_by(|a, b| {
            let (ka, kb) = (key(a), key(b));
            // Left-most difference decides; a match beats skipping it. Greedy
            // covering means a position inside an earlier match is never a
            // start, so compare only at positions not covered by both.
            for i in 0..tokens.len() {
                if ka[i] != kb[i] {
                    return ka[i].cmp(&kb[i]);
                }
            }
            std::cmp::Ordering::Equal
        })
        .unwrap()
    }

    proptest! {
        #[test]
        fn matches_exhaustive_oracle(
            tokens in proptest::collection::vec(4u32..7, 0..9),
            surfaces in proptest::collection::vec(proptest::collection::vec(4u32..7, 1..4), 0..5),
        ) {
            let mut idx = AliasIndex::new();
            let mut alias: Vec<(Vec<u32>, u32)> = Vec::new();
            for (e, s) in surfaces.into_iter().enumerate() {
                if idx.get(&s).is_none() {
                    alias.push((s.clone(), e as u32));
                }
                idx.insert(s, e as u32);
            }
            let got = link_mentions(&tokens, &idx);
            prop_assert_eq!(got, oracle(&tokens, &alias));
        }
    }
}
