//! Search tools checked against exhaustive-scan oracles built from the
//! Python `ast` view of each fixture and a reference similarity metric.

mod common;

use std::collections::BTreeSet;

use common::refsim;
use common::searchref::*;
use proptest::prelude::*;
use serde_json::{json, Value};
use sleuth_core::config::SearchConfig;
use sleuth_core::search::fuzzy::{fuzzy_score, FuzzyParams};
use sleuth_core::search::{MatchMode, SearchHit, SearchTools};
use sleuth_core::{CodeIndex, Error};

#[test]
fn color_colour_matches_reference_metrics() {
    let p = FuzzyParams::default();
    assert!((refsim::dice_bigrams("color", "colour") - 2.0 / 3.0).abs() < 1e-12);
    assert!((refsim::jaro_winkler("color", "colour") - 29.0 / 30.0).abs() < 1e-12);
    assert!((refsim::lcs_ratio("color", "colour") - 5.0 / 6.0).abs() < 1e-12);
    let v = fuzzy_score("color", "colour", &p).unwrap();
    assert!((v - 37.0 / 45.0).abs() < 1e-9, "{v}");
    assert!((v - refsim::score("color", "colour")).abs() < 1e-9);
}

#[test]
fn reference_agrees_with_strsim_where_comparable() {
    for (a, b) in [
        ("martha", "marhta"),
        ("dixon", "dicksonx"),
        ("resolve_path", "reslove_path"),
        ("abc", "abd"),
    ] {
        assert!((refsim::jaro(a, b) - strsim::jaro(a, b)).abs() < 1e-12);
        assert!((refsim::jaro_winkler(a, b) - strsim::jaro_winkler(a, b)).abs() < 1e-12);
        assert!((refsim::dice_bigrams(a, b) - strsim::sorensen_dice(a, b)).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn fuzzy_score_equals_reference(a in "[a-z_A-Z0-9.]{1,14}", b in "[a-z_A-Z0-9.]{1,14}") {
        let p = FuzzyParams::default();
        let got = fuzzy_score(&a, &b, &p).unwrap();
        prop_assert!((got - refsim::score(&a, &b)).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&got));
        if a != b {
            prop_assert!(got < 1.0);
        }
    }

    #[test]
    fn symmetric_except_prefix_term(a in "[a-c]{1,8}", b in "[a-c]{1,8}") {
        let p = FuzzyParams::default();
        let ab = fuzzy_score(&a, &b, &p).unwrap();
        let ba = fuzzy_score(&b, &a, &p).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn exact_candidate_scores_strictly_highest(base in "[a-z_]{2,12}", other in "[a-z_]{1,12}") {
        let p = FuzzyParams::default();
        prop_assume!(base != other);
        prop_assert!(fuzzy_score(&base, &base, &p).unwrap() > fuzzy_score(&base, &other, &p).unwrap());
    }
}

#[test]
fn find_file_matches_walk_oracle() {
    let root = common::fixture_repo("f1");
    let (index, _) = load("f1");
    let t = tools(&index);
    let walk: Vec<String> = walkdir::WalkDir::new(&root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file() && e.path().extension().is_some_and(|x| x == "py"))
        .map(|e| {
            e.path()
                .strip_prefix(&root)
                .unwrap()
                .to_string_lossy()
                .replace('\\', "/")
        })
        .collect();

    let hit = t.find_file("models.py", None).unwrap();
    let want: Vec<_> = walk.iter().filter(|p| p.ends_with("/models.py")).cloned().collect();
    assert_eq!(hit.iter().map(|m| m.path.clone()).collect::<Vec<_>>(), want);
    assert_eq!(want.len(), 1);
    assert!(hit[0].skeleton.render().contains("class A"));

    assert!(t.find_file("*.xyz", None).unwrap().is_empty());

    let under_src = t.find_file("*.py", Some("src/")).unwrap();
    let want: Vec<_> = walk.iter().filter(|p| p.starts_with("src/")).cloned().collect();
    assert_eq!(under_src.iter().map(|m| m.path.clone()).collect::<Vec<_>>(), want);

    assert!(matches!(t.find_file("[abc", None), Err(Error::InvalidQuery(_))));
}

#[test]
fn find_code_def_spec_examples_on_f1() {
    let (index, defs) = load("f1");
    let t = tools(&index);

    let r = t.find_code_def("resolve_path", None).unwrap();
    assert_eq!(ids(&r.hits), vec!["src/pathutil.py:resolve_path"]);
    assert_eq!((r.hits[0].mode, r.hits[0].score), (MatchMode::Exact, 1.0));

    let r = t.find_code_def("resolve_.*", None).unwrap();
    let re = regex::Regex::new("^(?:resolve_.*)$").unwrap();
    let want: BTreeSet<_> = defs
        .iter()
        .filter(|d| re.is_match(&d.short))
        .map(|d| d.id.clone())
        .collect();
    assert_eq!(want.len(), 2);
    assert_eq!(ids(&r.hits).into_iter().collect::<BTreeSet<_>>(), want);
    assert!(r.hits.iter().all(|h| h.mode == MatchMode::Regex));

    let r = t.find_code_def("reslove_path", None).unwrap();
    assert_eq!(r.hits[0].id, "src/pathutil.py:resolve_path");
    assert!(r.hits.iter().all(|h| h.mode == MatchMode::Fuzzy));
    assert_matches_oracle(&t, &defs, "reslove_path");

    let r = t.find_code_def("(unclosed", None).unwrap();
    assert!(!r.notes.is_empty());
    assert!(r.hits.iter().all(|h| h.mode == MatchMode::Fuzzy));

    assert!(matches!(t.find_code_def("  ", None), Err(Error::InvalidQuery(_))));
}

#[test]
fn find_code_def_equals_exhaustive_scan_on_all_fixtures() {
    for fx in ["f1", "f2", "f3"] {
        let (index, defs) = load(fx);
        assert!(defs.len() <= 200);
        let t = tools(&index);
        let mut queries: Vec<String> = defs.iter().flat_map(|d| [d.name.clone(), d.short.clone()]).collect();
        queries.extend(
            [
                "run",
                "Run",
                "ENGINE",
                "fetch_",
                ".*_all",
                "p[io]ng",
                "x",
                "helpers",
                "path_sep#2",
            ]
            .map(String::from),
        );
        for q in queries {
            assert_matches_oracle(&t, &defs, &q);
        }
    }
}

#[test]
fn staging_holds_for_500_random_queries() {
    let fixtures: Vec<_> = ["f1", "f2", "f3"].iter().map(|f| load(f)).collect();
    let mut rng = Lcg(0x5eed);
    for n in 0..500 {
        let (index, defs) = &fixtures[n % 3];
        let t = tools(index);
        let q = random_query(&mut rng, defs);
        let r = t.find_code_def(&q, None).unwrap();
        let modes: BTreeSet<_> = r.hits.iter().map(|h| h.mode).collect();
        assert!(modes.len() <= 1, "mixed stages for {q:?}");
        if r.hits.iter().any(|h| h.mode == MatchMode::Exact) {
            assert!(r.hits.iter().all(|h| h.score == 1.0));
        }
        assert_matches_oracle(&t, defs, &q);
        // repeated query gives the identical ordering
        assert_eq!(ids(&t.find_code_def(&q, None).unwrap().hits), ids(&r.hits));
    }
}

fn content_pairs(index: &CodeIndex, hits: &[SearchHit]) -> BTreeSet<(String, usize)> {
    let mut out = BTreeSet::new();
    for h in hits {
        let unit = index.get_unit(&h.id).unwrap();
        let owner = if unit.is_definition() {
            h.id.clone()
        } else {
            format!("{}:<chunk>", h.location.path)
        };
        let sig: BTreeSet<usize> = h.preview.signature.iter().map(|l| l.line).collect();
        for l in &h.preview.context {
            out.insert((owner.clone(), l.line));
        }
        // a matched line may coincide with the signature
        for l in sig {
            let line = &index
                .file_text(&h.location.path)
                .unwrap()
                .split('\n')
                .nth(l - 1)
                .unwrap()
                .to_string();
            if line.contains("max_retry_count") || line.contains("resolve_path") {
                out.insert((owner.clone(), l));
            }
        }
    }
    out
}

#[test]
fn find_code_content_matches_grep_and_variant_oracles() {
    let root = common::fixture_repo("f1");
    let (index, defs) = load("f1");
    let t = tools(&index);

    // case variant
    let target = oracle_words("maxRetryCount");
    assert_eq!(target, vec!["max", "retry", "count"]);
    let want = grep_oracle(&root, &defs, |line| {
        line.contains("maxRetryCount")
            || regex::Regex::new(r"[A-Za-z_][A-Za-z0-9_]*")
                .unwrap()
                .find_iter(line)
                .any(|m| oracle_words(m.as_str()) == target)
    });
    assert!(!want.is_empty());
    let r = t.find_code_content("maxRetryCount", None, None, None).unwrap();
    assert_eq!(content_pairs(&index, &r.hits), want);
    assert!(r
        .hits
        .iter()
        .all(|h| h.id == "src/models.py:A.m" && h.mode == MatchMode::Content));

    // literal snippet present once
    let snippet = "return normalize(base + \"/\" + p)";
    let want = grep_oracle(&root, &defs, |line| line.contains(snippet));
    assert_eq!(want.len(), 1);
    let r = t.find_code_content(snippet, None, None, None).unwrap();
    assert_eq!(r.hits.len(), 1);
    assert_eq!(r.hits[0].id, want.iter().next().unwrap().0);
    let line = want.iter().next().unwrap().1;
    assert!(r.hits[0]
        .preview
        .context
        .iter()
        .chain(&r.hits[0].preview.signature)
        .any(|l| l.line == line));

    assert!(t
        .find_code_content("definitely_not_here_42", None, None, None)
        .unwrap()
        .hits
        .is_empty());
    assert!(matches!(
        t.find_code_content("x", Some("src/models.py"), Some(1), Some(9999)),
        Err(Error::InvalidQuery(_))
    ));
    assert!(matches!(
        t.find_code_content("x", None, Some(1), None),
        Err(Error::InvalidQuery(_))
    ));
}

#[test]
fn variant_splitting_agrees_with_oracle() {
    use sleuth_core::search::case::split_words;
    for s in [
        "maxRetryCount",
        "MaxRetryCount",
        "max_retry_count",
        "MAX_RETRY_COUNT",
        "HTTPServer",
        "parseHTTP2Response",
        "a",
        "_x_",
        "v2Api",
    ] {
        assert_eq!(split_words(s), oracle_words(s), "{s}");
    }
}

#[test]
fn content_grouping_equals_grep_on_f2_and_f3() {
    for (fx, needle) in [("f2", "return"), ("f2", "self"), ("f3", "def"), ("f3", "pass")] {
        let root = common::fixture_repo(fx);
        let (index, defs) = load(fx);
        let cfg = SearchConfig {
            result_cap: 1000,
            response_line_budget: 1_000_000,
            hit_line_budget: 1_000_000,
            ..SearchConfig::default()
        };
        let t = SearchTools::new(&index, &cfg).unwrap();
        let want = grep_oracle(&root, &defs, |l| l.contains(needle));
        let r = t.find_code_content(needle, None, None, None).unwrap();
        let mut got = BTreeSet::new();
        for h in &r.hits {
            let unit = index.get_unit(&h.id).unwrap();
            let owner = if unit.is_definition() {
                h.id.clone()
            } else {
                format!("{}:<chunk>", h.location.path)
            };
            let text = index.file_text(&h.location.path).unwrap();
            let lines: Vec<&str> = text.split('\n').collect();
            for l in h.preview.signature.iter().chain(&h.preview.context) {
                if lines[l.line - 1].contains(needle) {
                    got.insert((owner.clone(), l.line));
                }
            }
        }
        assert_eq!(got, want, "{fx} {needle}");
    }
}

#[test]
fn find_child_unit_lookup_and_suggestions() {
    let (index, defs) = load("f1");
    let t = tools(&index);
    for d in &defs {
        let h = t.find_child_unit(&d.name, &d.path).unwrap();
        assert_eq!(h.id, d.id);
        assert_eq!((h.location.start_line, h.location.end_line), (d.start, d.end));
    }
    // children returned by a hit resolve through find_child_unit
    let a = t.find_code_def("A", None).unwrap().hits.remove(0);
    let child = &a.children[0].id;
    let (path, name) = child.split_once(':').unwrap();
    assert_eq!(&t.find_child_unit(name, path).unwrap().id, child);

    let wrong = "src/model.py:A.m";
    match t.find_child_unit("A.m", "src/model.py") {
        Err(Error::NotFound { suggestions, .. }) => {
            let mut scored: Vec<(f64, &str)> = defs
                .iter()
                .map(|d| {
                    (
                        refsim::score(&wrong.to_lowercase(), &d.id.to_lowercase()),
                        d.id.as_str(),
                    )
                })
                .collect();
            scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)));
            let want: Vec<String> = scored.iter().take(3).map(|s| s.1.to_string()).collect();
            assert_eq!(suggestions, want);
            assert_eq!(suggestions[0], "src/models.py:A.m");
        }
        other => panic!("expected not-found, got {other:?}"),
    }

    let chunk = index.units().find(|u| !u.is_definition()).unwrap();
    let (path, name) = chunk.id.split_once(':').unwrap();
    assert!(matches!(t.find_child_unit(name, path), Err(Error::NotFound { .. })));
    assert!(matches!(
        t.find_child_unit("", "src/models.py"),
        Err(Error::InvalidQuery(_))
    ));
}

#[test]
fn finish_search_is_idempotent() {
    let (index, _) = load("f1");
    let t = tools(&index);
    assert_eq!(t.finish_search(), t.finish_search());
    let out = t.invoke("finish_search", &json!({})).unwrap();
    assert!(out.finished);
}

fn check_budgets(hits: &[SearchHit], index: &CodeIndex) {
    let mut total = 0;
    for h in hits {
        let n = h.preview.line_count();
        assert!(n <= 30, "{} preview has {n} lines", h.id);
        let body = index.get_unit(&h.id).unwrap().location.line_count();
        if body > 30 {
            assert!(!h.preview.full && n < body);
        }
        total += n;
    }
    assert!(total <= 120, "response has {total} preview lines");
}

#[test]
fn previews_respect_budgets() {
    for fx in ["f1", "f2", "f3"] {
        let (index, defs) = load(fx);
        let t = tools(&index);
        for d in &defs {
            check_budgets(&t.find_code_def(&d.short, None).unwrap().hits, &index);
            check_budgets(&t.find_code_def(&d.short[..1], None).unwrap().hits, &index);
            check_budgets(&[t.find_child_unit(&d.name, &d.path).unwrap()], &index);
        }
        for needle in ["return", "self", "=", "(", "def", "a"] {
            check_budgets(&t.find_code_content(needle, None, None, None).unwrap().hits, &index);
        }
    }
    // A.m spans 35 lines: its preview is signature + invocation context only
    let (index, _) = load("f1");
    let h = tools(&index).find_child_unit("A.m", "src/models.py").unwrap();
    let lines: Vec<usize> = h
        .preview
        .signature
        .iter()
        .chain(&h.preview.context)
        .map(|l| l.line)
        .collect();
    assert_eq!(lines, vec![8, 42]);
}

#[test]
fn tool_text_stays_within_budget() {
    let (index, _) = load("f2");
    let t = tools(&index);
    for (name, args) in [
        ("find_code_content", json!({"content": "self"})),
        ("find_code_def", json!({"definition_name": "r.*"})),
        ("find_code_content", json!({"content": "="})),
    ] {
        let out = t.invoke(name, &args).unwrap();
        assert!(out.ok);
        assert!(out.preview_lines <= 120);
        let rendered = out.text.lines().filter(|l| l.contains(" | ")).count();
        assert!(rendered <= 120);
    }
}

#[test]
fn full_code_ablation_returns_whole_units() {
    let (index, _) = load("f1");
    let cfg = SearchConfig {
        full_code: true,
        ..SearchConfig::default()
    };
    let t = SearchTools::new(&index, &cfg).unwrap();
    let h = t.find_child_unit("A.m", "src/models.py").unwrap();
    assert!(h.preview.full);
    let unit = index.get_unit("src/models.py:A.m").unwrap();
    let shown: Vec<&str> = h.preview.context.iter().map(|l| l.text.as_str()).collect();
    let want: Vec<&str> = unit.text.split('\n').map(str::trim_end).collect();
    assert_eq!(shown, want);
    assert!(h.preview.line_count() > 30);
}

#[test]
fn tool_calls_validate_arguments() {
    let (index, _) = load("f1");
    let t = tools(&index);
    assert!(t.invoke("no_such_tool", &json!({})).is_err());
    assert!(t.invoke("find_code_def", &json!({})).is_err());
    assert!(t.invoke("find_code_def", &json!({"definition_name": 3})).is_err());
    let out = t
        .invoke(
            "find_child_unit",
            &json!({"definition_name": "nope", "file_path": "src/models.py"}),
        )
        .unwrap();
    assert!(!out.ok && out.text.starts_with("Error"));
    let schemas: Vec<Value> = sleuth_core::search::tool_schemas();
    assert_eq!(schemas.len(), 5);
}
