//! Seeded generator for comment corpora with planted SATD.
//!
//! Debt comments mix one or two debt markers ("todo", "hack", ...) with
//! ordinary code vocabulary and tend to be longer. A configurable share of
//! debt comments carries only weak markers, and a share of clean comments
//! carries a weak marker, so no single token separates the classes.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CommentRecord, Corpus};

const STRONG_MARKERS: &[&str] = &[
    "todo",
    "fixme",
    "hack",
    "workaround",
    "kludge",
    "xxx",
    "ugly",
    "hardcoded",
    "temporary",
    "refactor",
    "cleanup",
    "deprecated",
    "broken",
];

const WEAK_MARKERS: &[&str] = &[
    "probably", "maybe", "later", "quick", "messy", "assume", "dirty", "revisit", "unsure",
    "ideally",
];

const CODE_WORDS: &[&str] = &[
    "returns",
    "value",
    "index",
    "buffer",
    "parse",
    "config",
    "listener",
    "handler",
    "request",
    "response",
    "stream",
    "token",
    "node",
    "tree",
    "element",
    "attribute",
    "property",
    "method",
    "class",
    "field",
    "constructor",
    "instance",
    "object",
    "array",
    "list",
    "map",
    "key",
    "entry",
    "iterator",
    "loop",
    "count",
    "size",
    "length",
    "offset",
    "position",
    "cursor",
    "reader",
    "writer",
    "file",
    "path",
    "directory",
    "resource",
    "loader",
    "cache",
    "pool",
    "thread",
    "lock",
    "queue",
    "task",
    "job",
    "event",
    "message",
    "channel",
    "socket",
    "connection",
    "session",
    "user",
    "account",
    "password",
    "permission",
    "role",
    "policy",
    "rule",
    "filter",
    "query",
    "table",
    "column",
    "row",
    "record",
    "schema",
    "type",
    "format",
    "encoding",
    "charset",
    "locale",
    "date",
    "time",
    "zone",
    "interval",
    "timeout",
    "retry",
    "error",
    "exception",
    "status",
    "code",
    "result",
    "state",
    "mode",
    "flag",
    "option",
    "setting",
    "default",
    "parameter",
    "argument",
    "variable",
    "constant",
    "string",
    "number",
    "integer",
    "boolean",
    "character",
    "byte",
    "bit",
    "mask",
    "hash",
    "checksum",
    "digest",
    "signature",
    "certificate",
    "key",
    "store",
    "bean",
    "factory",
    "builder",
    "adapter",
    "wrapper",
    "proxy",
    "visitor",
    "strategy",
    "component",
    "module",
    "plugin",
    "extension",
    "target",
    "task",
    "build",
    "project",
    "dependency",
    "version",
    "release",
    "artifact",
    "package",
    "import",
    "export",
    "compile",
    "runtime",
    "execute",
    "invoke",
    "call",
    "dispatch",
    "render",
    "layout",
    "widget",
    "panel",
    "window",
    "dialog",
    "button",
    "label",
    "image",
    "icon",
    "font",
    "color",
    "style",
    "theme",
    "model",
    "view",
    "controller",
    "service",
    "client",
    "server",
    "host",
    "port",
    "address",
    "protocol",
    "header",
    "body",
    "payload",
    "initialize",
    "create",
    "update",
    "delete",
    "insert",
    "remove",
    "append",
    "clear",
    "reset",
    "close",
    "open",
    "start",
    "stop",
    "pause",
    "resume",
    "validate",
    "check",
    "verify",
    "compare",
    "equals",
    "copy",
    "clone",
    "serialize",
    "convert",
    "transform",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSpec {
    pub name: String,
    pub comments: usize,
    pub satd: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub projects: Vec<ProjectSpec>,
    pub seed: u64,
    /// Share of SATD comments with only weak markers.
    pub hidden_debt: f64,
    /// Share of clean comments that contain a weak marker.
    pub decoys: f64,
}

impl SyntheticSpec {
    /// `n_projects` projects of `comments` comments with `satd` positives each.
    pub fn uniform(n_projects: usize, comments: usize, satd: usize, seed: u64) -> Self {
        SyntheticSpec {
            projects: (0..n_projects)
                .map(|i| ProjectSpec {
                    name: format!("project-{}", (b'a' + (i % 26) as u8) as char),
                    comments,
                    satd,
                })
                .collect(),
            seed,
            hidden_debt: 0.15,
            decoys: 0.05,
        }
    }
}

fn words<'a>(
    rng: &mut ChaCha8Rng,
    from: &[&'a str],
    n: std::ops::RangeInclusive<usize>,
) -> Vec<&'a str> {
    let n = rng.random_range(n);
    (0..n)
        .map(|_| *from.choose(rng).expect("non-empty list"))
        .collect()
}

fn comment(rng: &mut ChaCha8Rng, satd: bool, spec: &SyntheticSpec) -> String {
    let mut w: Vec<&str> = if satd {
        let mut w = words(rng, CODE_WORDS, 4..=10);
        if rng.random_bool(spec.hidden_debt) {
            w.extend(words(rng, WEAK_MARKERS, 1..=2));
        } else {
            w.extend(words(rng, STRONG_MARKERS, 1..=2));
            if rng.random_bool(0.3) {
                w.extend(words(rng, WEAK_MARKERS, 1..=1));
            }
        }
        w
    } else {
        let mut w = words(rng, CODE_WORDS, 1..=6);
        if rng.random_bool(spec.decoys) {
            w.extend(words(rng, WEAK_MARKERS, 1..=1));
        }
        w
    };
    // Shuffle so markers are not always trailing; the stop word "the" and
    // punctuation exercise the tokenizer.
    rand::seq::SliceRandom::shuffle(w.as_mut_slice(), rng);
    let mut text = w.join(" ");
    if rng.random_bool(0.3) {
        text = format!("the {text}.");
    }
    if rng.random_bool(0.2) {
        text = format!("// {text}");
    }
    text
}

/// Builds the corpus. SATD rows are spread uniformly over each project.
pub fn generate(spec: &SyntheticSpec) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();
    for p in &spec.projects {
        let satd = p.satd.min(p.comments);
        let mut flags = vec![false; p.comments];
        for i in rand::seq::index::sample(&mut rng, p.comments, satd) {
            flags[i] = true;
        }
        for (i, &flag) in flags.iter().enumerate() {
            records.push(CommentRecord {
                project: p.name.clone(),
                comment_id: i as u64,
                text: comment(&mut rng, flag, spec),
                truth: Some(flag),
            });
        }
    }
    Corpus::from_records(records)
}
