//! Process protocol for an external (e.g. learned) matcher.
//!
//! The command template is split on whitespace and each `{imgA}`, `{imgB}`
//! and `{out}` is replaced by a path in a private temporary directory. The
//! two images are written as binary PGM; the command must write
//! `{"schema":"mtpcr-match/1","matches":[{"u0":..,"v0":..,"u1":..,"v1":..,"score":..}]}`
//! to `{out}` and exit with status 0.

use std::collections::HashMap;
use std::process::Command;

use serde::Deserialize;

use super::{Keypoint2, MatchPair, MatchSet};
use crate::bev::{encode_image, GrayImage};
use crate::error::{Error, Result};

pub const MATCH_SCHEMA: &str = "mtpcr-match/1";

#[derive(Deserialize)]
struct MatchFile {
    schema: Option<String>,
    matches: Vec<ExternalMatch>,
}

#[derive(Deserialize)]
struct ExternalMatch {
    u0: f64,
    v0: f64,
    u1: f64,
    v1: f64,
    score: f64,
}

pub(super) fn validate_template(command: &str) -> Result<()> {
    if command.split_whitespace().next().is_none() {
        return Err(Error::InvalidParameter("external matcher command is empty".into()));
    }
    for key in ["{imgA}", "{imgB}", "{out}"] {
        if !command.contains(key) {
            return Err(Error::InvalidParameter(format!(
                "external matcher command lacks {key}"
            )));
        }
    }
    Ok(())
}

pub(super) fn run(command: &str, img_a: &GrayImage, img_b: &GrayImage) -> Result<MatchSet> {
    validate_template(command)?;
    let fail = |m: String| Error::ExternalMatcherFailure(m);
    let dir = tempfile::tempdir().map_err(|e| fail(format!("temporary directory: {e}")))?;
    let (pa, pb, out) = (dir.path().join("a.pgm"), dir.path().join("b.pgm"), dir.path().join("matches.json"));
    encode_image(img_a, &pa)?;
    encode_image(img_b, &pb)?;

    let args: Vec<String> = command
        .split_whitespace()
        .map(|t| {
            t.replace("{imgA}", &pa.to_string_lossy())
                .replace("{imgB}", &pb.to_string_lossy())
                .replace("{out}", &out.to_string_lossy())
        })
        .collect();
    let output = Command::new(&args[0])
        .args(&args[1..])
        .output()
        .map_err(|e| fail(format!("cannot run {}: {e}", args[0])))?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(fail(format!("{} exited with {}: {}", args[0], output.status, stderr.trim())));
    }
    let text = std::fs::read_to_string(&out).map_err(|e| fail(format!("no output file: {e}")))?;
    parse_matches(&text, (img_a.width(), img_a.height()), (img_b.width(), img_b.height()))
}

/// Validates a match document. Coordinates must be finite and inside the
/// images; scores are clamped to [0, 1]. When a keypoint is claimed by
/// several matches only the highest-scoring one is kept.
pub(super) fn parse_matches(text: &str, dims_a: (usize, usize), dims_b: (usize, usize)) -> Result<MatchSet> {
    let fail = |m: String| Error::ExternalMatcherFailure(m);
    let doc: MatchFile = serde_json::from_str(text).map_err(|e| fail(format!("malformed output: {e}")))?;
    if let Some(s) = &doc.schema {
        if s != MATCH_SCHEMA {
            return Err(fail(format!("unsupported schema {s:?}")));
        }
    }
    let inside = |u: f64, v: f64, (w, h): (usize, usize)| {
        u.is_finite() && v.is_finite() && u >= 0.0 && v >= 0.0 && u < w as f64 && v < h as f64
    };
    let mut pairs = Vec::with_capacity(doc.matches.len());
    for (k, m) in doc.matches.iter().enumerate() {
        if !inside(m.u0, m.v0, dims_a) || !inside(m.u1, m.v1, dims_b) || !m.score.is_finite() {
            return Err(fail(format!("match {k} is out of bounds or not finite")));
        }
        let score = m.score.clamp(0.0, 1.0);
        pairs.push(MatchPair {
            a: Keypoint2::new(m.u0, m.v0, score),
            b: Keypoint2::new(m.u1, m.v1, score),
            confidence: score,
        });
    }
    Ok(MatchSet {
        pairs: unique_endpoints(pairs),
    })
}

fn unique_endpoints(pairs: Vec<MatchPair>) -> Vec<MatchPair> {
    let key = |k: &Keypoint2| (k.u.to_bits(), k.v.to_bits());
    let mut best_a: HashMap<_, usize> = HashMap::new();
    let mut best_b: HashMap<_, usize> = HashMap::new();
    let better = |i: usize, j: usize| pairs[i].confidence > pairs[j].confidence || (pairs[i].confidence == pairs[j].confidence && i < j);
    for (i, p) in pairs.iter().enumerate() {
        for (map, k) in [(&mut best_a, key(&p.a)), (&mut best_b, key(&p.b))] {
            let e = map.entry(k).or_insert(i);
            if better(i, *e) {
                *e = i;
            }
        }
    }
    pairs
        .iter()
        .enumerate()
        .filter(|(i, p)| best_a[&key(&p.a)] == *i && best_b[&key(&p.b)] == *i)
        .map(|(_, p)| *p)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_valid_document() {
        let doc = r#"{"schema":"mtpcr-match/1","matches":[
            {"u0":1.5,"v0":2.0,"u1":3.0,"v1":4.0,"score":0.7},
            {"u0":5,"v0":6,"u1":7,"v1":8,"score":1.4}]}"#;
        let ms = parse_matches(doc, (10, 10), (10, 10)).unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms.pairs[0].a, Keypoint2::new(1.5, 2.0, 0.7));
        assert_eq!(ms.pairs[1].confidence, 1.0);
    }

    #[test]
    fn rejects_malformed() {
        for doc in [
            "not json",
            r#"{"matches":[{"u0":1}]}"#,
            r#"{"schema":"other/2","matches":[]}"#,
            r#"{"matches":[{"u0":11,"v0":0,"u1":0,"v1":0,"score":0.5}]}"#,
        ] {
            assert!(matches!(
                parse_matches(doc, (10, 10), (10, 10)),
                Err(Error::ExternalMatcherFailure(_))
            ));
        }
    }

    #[test]
    fn keeps_best_pair_per_keypoint() {
        let doc = r#"{"matches":[
            {"u0":1,"v0":1,"u1":2,"v1":2,"score":0.4},
            {"u0":1,"v0":1,"u1":3,"v1":3,"score":0.9},
            {"u0":4,"v0":4,"u1":3,"v1":3,"score":0.5}]}"#;
        let ms = parse_matches(doc, (10, 10), (10, 10)).unwrap();
        assert_eq!(ms.len(), 1);
        assert_eq!(ms.pairs[0].confidence, 0.9);
    }

    #[test]
    fn template_placeholders_required() {
        assert!(validate_template("matcher {imgA} {imgB} {out}").is_ok());
        assert!(validate_template("matcher {imgA} {out}").is_err());
        assert!(validate_template("   ").is_err());
    }

    #[cfg(unix)]
    #[test]
    fn runs_process_and_reports_failures() {
        let img = GrayImage::filled(8, 8, 0);
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("m.sh");
        std::fs::write(
            &script,
            "#!/bin/sh\ntest -f \"$1\" && test -f \"$2\" || exit 3\nprintf '{\"matches\":[{\"u0\":1,\"v0\":1,\"u1\":2,\"v1\":2,\"score\":0.5}]}' > \"$3\"\n",
        )
        .unwrap();
        let cmd = format!("sh {} {{imgA}} {{imgB}} {{out}}", script.display());
        let ms = run(&cmd, &img, &img).unwrap();
        assert_eq!(ms.len(), 1);

        let failing = dir.path().join("f.sh");
        std::fs::write(&failing, "#!/bin/sh\nexit 2\n").unwrap();
        let cmd = format!("sh {} {{imgA}} {{imgB}} {{out}}", failing.display());
        assert!(matches!(run(&cmd, &img, &img), Err(Error::ExternalMatcherFailure(_))));
        let missing = "/nonexistent/matcher {imgA} {imgB} {out}";
        assert!(matches!(run(missing, &img, &img), Err(Error::ExternalMatcherFailure(_))));
    }
}
