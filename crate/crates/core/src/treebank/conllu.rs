//! CoNLL-U reading and writing.
//!
//! Only the columns the toolkit consumes are kept: ID, FORM, UPOS, HEAD and
//! DEPREL. Multiword-token ranges (`1-2`) and empty nodes (`3.1`) are
//! skipped, and relation subtypes are stripped (`nsubj:pass` -> `nsubj`).

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use super::TreebankError;

/// Syntactic head of a token.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Head {
    Root,
    /// 0-based index into the sentence's tokens.
    Token(usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub form: String,
    pub upos: String,
    pub head: Head,
    pub deprel: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Universal relation label with any language-specific subtype removed.
pub fn base_relation(deprel: &str) -> &str {
    deprel.split(':').next().unwrap_or(deprel)
}

struct Pending {
    id: Option<String>,
    tokens: Vec<Token>,
    /// (token index, raw head value, line number)
    heads: Vec<(usize, usize, usize)>,
    first_line: usize,
}

impl Pending {
    fn new() -> Self {
        Self {
            id: None,
            tokens: Vec::new(),
            heads: Vec::new(),
            first_line: 0,
        }
    }
}

/// Parses a CoNLL-U document. LF and CRLF line endings are accepted.
pub fn parse_conllu(text: &str) -> Result<Vec<Sentence>, TreebankError> {
    let mut out = Vec::new();
    let mut cur = Pending::new();

    for (idx, raw) in text.split('\n').enumerate() {
        let lineno = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            finish(&mut cur, &mut out)?;
            continue;
        }
        if cur.tokens.is_empty() && cur.id.is_none() {
            cur.first_line = lineno;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(rest) = comment.trim_start().strip_prefix("sent_id") {
                if let Some(v) = rest.trim_start().strip_prefix('=') {
                    cur.id = Some(v.trim().to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 10 {
            return Err(TreebankError::Parse {
                line: lineno,
                message: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id = cols[0];
        if id.contains('-') || id.contains('.') {
            continue;
        }
        let id: usize = id.parse().map_err(|_| TreebankError::Parse {
            line: lineno,
            message: format!("non-integer token id {id:?}"),
        })?;
        if id != cur.tokens.len() + 1 {
            return Err(TreebankError::Parse {
                line: lineno,
                message: format!("token id {id} out of sequence (expected {})", cur.tokens.len() + 1),
            });
        }
        let head: usize = cols[6].parse().map_err(|_| TreebankError::Parse {
            line: lineno,
            message: format!("non-integer HEAD {:?}", cols[6]),
        })?;
        cur.heads.push((cur.tokens.len(), head, lineno));
        cur.tokens.push(Token {
            form: cols[1].to_string(),
            upos: cols[3].to_string(),
            head: Head::Root,
            deprel: base_relation(cols[7]).to_string(),
        });
    }
    finish(&mut cur, &mut out)?;
    Ok(out)
}

fn finish(cur: &mut Pending, out: &mut Vec<Sentence>) -> Result<(), TreebankError> {
    let pending = core::mem::replace(cur, Pending::new());
    if pending.tokens.is_empty() {
        return Ok(());
    }
    let n = pending.tokens.len();
    let mut tokens = pending.tokens;
    for (i, head, lineno) in pending.heads {
        tokens[i].head = match head {
            0 => Head::Root,
            h if h <= n => Head::Token(h - 1),
            h => {
                return Err(TreebankError::Parse {
                    line: lineno,
                    message: format!("HEAD {h} outside sentence of {n} tokens"),
                })
            }
        };
    }
    let sentence_id = pending
        .id
        .unwrap_or_else(|| format!("line-{}", pending.first_line));
    out.push(Sentence { sentence_id, tokens });
    Ok(())
}

/// Writes sentences back as CoNLL-U. Columns not retained by the parser are
/// emitted as `_`.
pub fn to_conllu(sentences: &[Sentence]) -> String {
    let mut s = String::new();
    for sent in sentences {
        let _ = writeln!(s, "# sent_id = {}", sent.sentence_id);
        for (i, t) in sent.tokens.iter().enumerate() {
            let head = match t.head {
                Head::Root => 0,
                Head::Token(h) => h + 1,
            };
            let _ = writeln!(
                s,
                "{}\t{}\t_\t{}\t_\t_\t{}\t{}\t_\t_",
                i + 1,
                t.form,
                t.upos,
                head,
                t.deprel
            );
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    const TWO: &str = "1\tThe\tthe\tDET\t_\t_\t2\tdet\t_\t_\n2\tcat\tcat\tNOUN\t_\t_\t0\troot\t_\t_\n";

    #[test]
    fn two_token_sentence() {
        let s = parse_conllu(TWO).unwrap();
        assert_eq!(s.len(), 1);
        let t = &s[0].tokens;
        assert_eq!(t[0].upos, "DET");
        assert_eq!(t[1].upos, "NOUN");
        assert_eq!(t[0].head, Head::Token(1));
        assert_eq!(t[1].head, Head::Root);
        assert_eq!(t[0].deprel, "det");
        assert_eq!(t[1].deprel, "root");
    }

    #[test]
    fn skips_ranges_and_empty_nodes() {
        let text = "# sent_id = s1\n# text = don't go\n\
            1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n\
            1\tdo\tdo\tAUX\t_\t_\t3\taux\t_\t_\n\
            2\tn't\tnot\tPART\t_\t_\t3\tadvmod\t_\t_\n\
            2.1\tx\t_\tX\t_\t_\t_\t_\t_\t_\n\
            3\tgo\tgo\tVERB\t_\t_\t0\troot\t_\t_\n";
        let s = parse_conllu(text).unwrap();
        assert_eq!(s[0].sentence_id, "s1");
        let forms: Vec<&str> = s[0].tokens.iter().map(|t| t.form.as_str()).collect();
        assert_eq!(forms, ["do", "n't", "go"]);
    }

    #[test]
    fn strips_subtypes_for_every_ud_relation() {
        // Oracle: the universal inventory with a few attested subtypes each.
        let inventory = [
            ("acl", &["relcl"][..]),
            ("advcl", &["relcl"]),
            ("aux", &["pass"]),
            ("compound", &["prt", "lvc", "svc"]),
            ("csubj", &["pass", "outer"]),
            ("det", &["poss", "predet", "numgov"]),
            ("expl", &["pv", "impers", "pass"]),
            ("flat", &["name", "foreign"]),
            ("nmod", &["poss", "tmod", "npmod"]),
            ("nsubj", &["pass", "outer"]),
            ("obl", &["agent", "tmod", "arg"]),
            ("root", &[]),
        ];
        for (base, subs) in inventory {
            for sub in subs.iter().map(|s| format!("{base}:{s}")).chain([base.to_string()]) {
                let text = format!("1\tw\t_\tX\t_\t_\t0\t{sub}\t_\t_\n");
                let s = parse_conllu(&text).unwrap();
                assert_eq!(s[0].tokens[0].deprel, base, "{sub}");
            }
        }
    }

    #[test]
    fn crlf_and_multiple_sentences() {
        let text = TWO.replace('\n', "\r\n") + "\r\n" + TWO;
        let s = parse_conllu(&text).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].tokens[1].form, "cat");
        assert_ne!(s[0].sentence_id, s[1].sentence_id);
    }

    #[test]
    fn bad_column_count_reports_line() {
        let text = "# c\n1\tThe\tthe\tDET\t_\t_\t2\tdet\t_\n";
        match parse_conllu(text) {
            Err(TreebankError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_integer_head_is_error() {
        let text = "1\tThe\tthe\tDET\t_\t_\tx\tdet\t_\t_\n";
        assert!(matches!(parse_conllu(text), Err(TreebankError::Parse { line: 1, .. })));
    }

    #[test]
    fn head_out_of_range_is_error() {
        let text = "1\tThe\tthe\tDET\t_\t_\t5\tdet\t_\t_\n";
        assert!(parse_conllu(text).is_err());
    }

    fn arb_sentence() -> impl Strategy<Value = Sentence> {
        (1usize..8)
            .prop_flat_map(|n| {
                (
                    "[a-z]{1,6}",
                    proptest::collection::vec(
                        ("[A-Za-z']{1,8}", "[A-Z]{2,5}", 0..=n, "[a-z]{2,6}"),
                        n,
                    ),
                )
            })
            .prop_map(|(id, toks)| Sentence {
                sentence_id: id,
                tokens: toks
                    .into_iter()
                    .map(|(form, upos, head, deprel)| Token {
                        form,
                        upos,
                        head: if head == 0 { Head::Root } else { Head::Token(head - 1) },
                        deprel,
                    })
                    .collect(),
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_round_trip(sents in proptest::collection::vec(arb_sentence(), 1..5)) {
            let text = to_conllu(&sents);
            let back = parse_conllu(&text).unwrap();
            prop_assert_eq!(back, sents);
        }
    }

    #[test]
    fn comment_only_block_is_not_a_sentence() {
        let s = parse_conllu("# newdoc\n\n").unwrap();
        assert_eq!(s, vec![]);
    }
}
