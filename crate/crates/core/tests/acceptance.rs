//! Acceptance suite: one test per criterion, so the harness emits one
//! pass/fail line for each.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use specfix_core::agent::{
    cosine_similarity, embed, is_zero_vector, retrieval_handler, retrieve_example, AgentConfig,
    ExampleStore, ExampleTuple,
};
use specfix_core::analysis::{
    analyze_method_details, build_index, find_class_loc, find_method_in_file,
    find_variable_assignments, get_imports, identify_class, identify_variable,
    track_variable_dataflow, trace_method_usage, LanguageProfile, SourceIndex, ToolRegistry,
};
use specfix_core::gateway::{cost, LLMConfig, LlmClient, PricingTable, ReplayBackend, TokenUsage};
use specfix_core::model::{
    classify_scenario, BugInstance, FunctionLocus, PatchReplacement, ScenarioPartition,
};
use specfix_core::orchestrator::{
    ledger, strategy_gate, write_session, AttemptOutcome, BudgetConfig, FixedClock, Orchestrator,
    ReasoningStrategy, SessionResult,
};
use specfix_core::pipeline::{apply_patch, validate, workspace_checksum, TestAdapterConfig};
use specfix_core::spec_text::{parse_specification, serialize_specification, SpecParseError};
use specfix_core::templates;

const SPEC_REPLY: &str = "\
Function: f
Purpose: adds one
Signature: int f(int x)
Input: x: input
Output: x + 1
Behavior:
1. return x + 1
";

fn code_reply(code: &str) -> String {
    format!("```\n{code}\n```")
}

struct Harness {
    _ws: tempfile::TempDir,
    _out: tempfile::TempDir,
    templates_dir: tempfile::TempDir,
    bug: BugInstance,
    adapter: TestAdapterConfig,
    sandbox_parent: PathBuf,
}

/// One-function workspace whose scripted adapter always fails.
fn never_pass_harness() -> Harness {
    let ws = tempfile::tempdir().unwrap();
    std::fs::write(
        ws.path().join("A.java"),
        "class A {\n    int f(int x) {\n        return x;\n    }\n}\n",
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    let templates_dir = tempfile::tempdir().unwrap();
    templates::materialize_defaults(templates_dir.path()).unwrap();
    let script = out.path().join("adapter.json");
    std::fs::write(
        &script,
        r#"{"default": {"compiled": true, "tests_total": 1, "failures": [
            {"test_id": "t1", "error_message": "still wrong"}]}}"#,
    )
    .unwrap();
    let bug = BugInstance {
        bug_id: "never".to_string(),
        project_id: "p".to_string(),
        workspace_root: ws.path().to_path_buf(),
        target_functions: vec![FunctionLocus {
            file: "A.java".to_string(),
            function_name: "f".to_string(),
            signature: "int f(int x)".to_string(),
            span: (2, 4),
        }],
        failing_tests: vec![],
        reference_patch: None,
    };
    Harness {
        bug,
        adapter: TestAdapterConfig::Scripted { path: script },
        sandbox_parent: out.path().join("sandboxes"),
        templates_dir,
        _ws: ws,
        _out: out,
    }
}

fn never_pass_replies(budget: BudgetConfig) -> Vec<String> {
    let mut replies = vec![SPEC_REPLY.to_string()];
    for _ in 0..budget.max_attempts {
        replies.push(SPEC_REPLY.to_string());
        for r in 0..budget.max_feedback_rounds {
            replies.push(code_reply("    int f(int x) {\n        return x;\n    }"));
            if r + 1 < budget.max_feedback_rounds {
                replies.push(SPEC_REPLY.to_string());
            }
        }
    }
    replies
}

fn run_never_pass(h: &Harness, budget: BudgetConfig) -> (usize, bool) {
    let backend = Arc::new(ReplayBackend::from_replies(never_pass_replies(budget)));
    let client = LlmClient::new(backend, LLMConfig::default(), PricingTable::default());
    let clock = FixedClock(0.0);
    let orch = Orchestrator {
        client: &client,
        templates_dir: h.templates_dir.path().to_path_buf(),
        adapter: h.adapter.clone(),
        registry: None,
        agent_config: AgentConfig::default(),
        sandbox_parent: h.sandbox_parent.clone(),
        clock: &clock,
    };
    let session = orch
        .repair_bug(&h.bug, budget, ReasoningStrategy::None)
        .unwrap();
    (
        ledger(&session).generation_calls,
        matches!(session.result, SessionResult::Exhausted),
    )
}

#[test]
fn c1_budget_exactness() {
    let h = never_pass_harness();
    // defaults: 5 x 3 = 15 generation calls, Exhausted
    let (calls, exhausted) = run_never_pass(&h, BudgetConfig::default());
    assert_eq!(calls, 15);
    assert!(exhausted);
    // randomized configs: calls == attempts * rounds, never more
    let mut rng = StdRng::seed_from_u64(11);
    for _ in 0..12 {
        let budget = BudgetConfig {
            max_attempts: rng.gen_range(1..=4),
            max_feedback_rounds: rng.gen_range(1..=4),
        };
        let (calls, exhausted) = run_never_pass(&h, budget);
        assert_eq!(calls, budget.patch_space());
        assert!(exhausted);
    }
}

#[test]
fn c2_strategy_gate_truth_table() {
    use AttemptOutcome::*;
    for attempt_index in 1..=10usize {
        let prior_len = attempt_index - 1;
        for bits in 0..(1u32 << prior_len) {
            let priors: Vec<AttemptOutcome> = (0..prior_len)
                .map(|i| if bits >> i & 1 == 1 { FullyFailed } else { Plausible })
                .collect();
            let any_failed = priors.iter().any(|o| *o == FullyFailed);
            assert!(!strategy_gate(ReasoningStrategy::None, attempt_index, &priors));
            assert!(strategy_gate(ReasoningStrategy::MaxR, attempt_index, &priors));
            assert_eq!(
                strategy_gate(ReasoningStrategy::MiniR, attempt_index, &priors),
                any_failed
            );
        }
    }
}

#[test]
fn c3_retrieval_oracle_equivalence() {
    const VOCAB: [&str; 24] = [
        "loop", "bound", "index", "array", "null", "check", "string", "parse", "token",
        "return", "count", "offset", "length", "guard", "cache", "flag", "option", "split",
        "merge", "round", "carry", "shift", "mask", "limit",
    ];
    let mut rng = StdRng::seed_from_u64(42);
    let random_text = |rng: &mut StdRng, max_words: usize| {
        let n = rng.gen_range(1..=max_words);
        (0..n)
            .map(|_| VOCAB[rng.gen_range(0..VOCAB.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };
    for case in 0..1000 {
        let mut store = ExampleStore::new();
        let n = rng.gen_range(1..=8);
        let mut keys = Vec::new();
        for i in 0..n {
            let buggy = random_text(&mut rng, 6);
            let cause = random_text(&mut rng, 4);
            keys.push(format!("{buggy}\n{cause}"));
            store.add(ExampleTuple {
                example_id: format!("e{case}-{i}"),
                buggy_code: buggy,
                root_cause: cause,
                fix_code: "fixed".to_string(),
            });
        }
        let query = if case % 50 == 0 {
            "???".to_string() // degenerate: no tokens
        } else {
            random_text(&mut rng, 6)
        };

        // brute-force oracle over the same embedder
        let q = embed(&query);
        let oracle = if is_zero_vector(&q) {
            None
        } else {
            let mut best: Option<(usize, f64)> = None;
            for (i, key) in keys.iter().enumerate() {
                if let Ok(sim) = cosine_similarity(&q, &embed(key)) {
                    if best.map(|(_, b)| sim > b).unwrap_or(true) {
                        best = Some((i, sim));
                    }
                }
            }
            best.filter(|(_, sim)| *sim >= 0.6)
                .map(|(i, _)| format!("e{case}-{i}"))
        };

        let got = retrieve_example(&store, &query).map(|(t, _)| t.example_id);
        assert_eq!(got, oracle, "case {case} query {query:?}");
    }
}

#[test]
fn c4_cost_accounting() {
    let pricing = PricingTable::default();
    let table: [(&str, u64, u64, f64); 20] = [
        ("gpt-4", 1987817, 158176, 69.12507),
        ("gpt-4", 1365108, 50631, 43.9911),
        ("gpt-4o", 1722337, 561913, 17.04038),
        ("gpt-4o", 766905, 611097, 13.000979999999998),
        ("gpt-4o", 1907787, 532084, 17.520194999999998),
        ("gpt-4o", 78634, 90122, 1.7449999999999999),
        ("gpt-4", 876970, 73248, 30.70398),
        ("gpt-4o", 190238, 577814, 9.618400000000001),
        ("gpt-4", 123963, 867017, 55.73991),
        ("gpt-4o", 1986946, 234083, 13.445975),
        ("gpt-4o", 1210272, 613984, 15.261119999999998),
        ("gpt-4", 103996, 231821, 17.029139999999998),
        ("gpt-4o", 1167410, 900169, 19.339585),
        ("gpt-4o", 607354, 439499, 9.629255),
        ("gpt-4o", 1133900, 123514, 7.522209999999999),
        ("gpt-4", 1174944, 855770, 86.59452),
        ("gpt-4o", 216123, 609851, 10.22838),
        ("gpt-4o", 780974, 102163, 5.437315),
        ("gpt-4o", 1183566, 62496, 6.855269999999999),
        ("gpt-4o", 1041056, 713451, 15.907045),
    ];
    for (model, input, output, expected) in table {
        let usage = TokenUsage {
            input_tokens: input,
            output_tokens: output,
        };
        let got = cost(usage, model, &pricing).unwrap();
        assert!((got - expected).abs() < 1e-9, "{model} {input}+{output}");
    }
    // exact linearity under usage addition
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..100 {
        let a = TokenUsage {
            input_tokens: rng.gen_range(0..1_000_000),
            output_tokens: rng.gen_range(0..1_000_000),
        };
        let b = TokenUsage {
            input_tokens: rng.gen_range(0..1_000_000),
            output_tokens: rng.gen_range(0..1_000_000),
        };
        let sum = cost(TokenUsage::sum(a, b), "gpt-4o", &pricing).unwrap();
        let parts =
            cost(a, "gpt-4o", &pricing).unwrap() + cost(b, "gpt-4o", &pricing).unwrap();
        assert!((sum - parts).abs() < 1e-9);
    }
}

#[test]
fn c5_template_parse_round_trip() {
    let golden: [(&str, Option<&str>); 10] = [
        ("Function: f1\nPurpose: p\nSignature: int f1()\nInput: none\nOutput: o\nBehavior:\n1. step one\n", None),
        ("Function: f2\nPurpose: p\nSignature: int f2(int a)\nInput: a\nOutput: o\nBehavior:\n1. step (bug: off by one)\n", Some("off by one")),
        ("**Function:** f3\n## Purpose: p\nSignature: void f3()\n**Input:** none\nOutput: o\nBehavior:\n- first\n- second (buggy: wrong sign)\n", Some("wrong sign")),
        ("Function: f4\nPurpose: multi\nline purpose\nSignature: int f4()\nInput: none\nOutput: o\nBehavior:\n1. one\n2. two\n3. three\n", None),
        ("Function: f5\nPurpose: p\nSignature: long f5(long x)\nInput: x\nOutput: o\nBehavior:\n1. long step that\ncontinues on the next line (BUG - inverted condition)\n", Some("inverted condition")),
        ("Function: f6\nPurpose: p (not a note)\nSignature: int f6()\nInput: none\nOutput: o\nBehavior:\n1. keeps (an aside) intact\n", None),
        ("Function: f7\nPurpose: p\nSignature: int f7()\nInput: a; b\nOutput: o\nBehavior:\n* starred bullet (bug: missing guard)\n", Some("missing guard")),
        ("Function: f8\nPurpose: p\nSignature: int f8()\nInput: none\nOutput: o\nBehavior:\n1. alpha\n2. beta (bug: swaps operands)\n3. gamma\n", Some("swaps operands")),
        ("Function: f9\nPurpose: p\nSignature: int f9()\nInput: none\nOutput: tuple (pair)\nBehavior:\n1. only\n", None),
        ("Function: f10\nPurpose: p\nSignature: int f10()\nInput: none\nOutput: o\nBehavior:\n10. double digit index\n", None),
    ];
    for (text, note) in golden {
        let spec = parse_specification(text).unwrap();
        assert!(spec.is_valid(), "{text}");
        let found: Option<&str> = spec
            .behavior_steps
            .iter()
            .find_map(|s| s.bug_note.as_deref());
        assert_eq!(found, note, "{text}");
        // serialize . parse is a fixed point
        let canon = serialize_specification(&spec);
        let reparsed = parse_specification(&canon).unwrap();
        assert_eq!(spec, reparsed);
        assert_eq!(canon, serialize_specification(&reparsed));
    }
    // missing-header fixtures name the header
    for header in ["Purpose", "Signature", "Input", "Output"] {
        let broken = golden[0].0.replace(&format!("{header}:"), "X-");
        match parse_specification(&broken) {
            Err(SpecParseError::MissingHeaders(h)) => assert!(h.contains(header)),
            other => panic!("expected MissingHeaders({header}), got {other:?}"),
        }
    }
}

fn analysis_fixture() -> (tempfile::TempDir, SourceIndex) {
    let dir = tempfile::tempdir().unwrap();
    let write = |rel: &str, text: &str| {
        let path = dir.path().join(rel);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, text).unwrap();
    };
    write(
        "com/app/Main.java",
        "\
package com.app;

import com.app.util.Helper;
import java.util.List;

class Main {
    int total;

    int run(int n) {
        int acc = 0;
        for (int i = 0; i < n; i++) {
            acc = acc + step(i);
        }
        total = acc;
        return acc;
    }
}
",
    );
    write(
        "com/app/util/Helper.java",
        "\
package com.app.util;

class Helper {
    static int step(int i) {
        if (i > 2) {
            return i * 2;
        }
        return i;
    }
}
",
    );
    write(
        "com/app/util/Text.java",
        "\
package com.app.util;

class Text {
    String pad;

    String shout(String s) {
        String u = s;
        while (u.length() < 4) {
            u = u + pad;
        }
        return u;
    }
}
",
    );
    write(
        "com/app/Config.java",
        "\
package com.app;

class Config {
    int value;

    int get() {
        return value;
    }

    void set(int v) {
        value = v;
    }
}
",
    );
    write(
        "com/app/Runner.java",
        "\
package com.app;

class Runner {
    int go(int n) {
        Main m = new Main();
        return m.run(n);
    }
}
",
    );
    write("com/app/Empty.java", "package com.app;\n\nclass Empty {\n}\n");
    let index = build_index(dir.path(), LanguageProfile::JavaSubset).unwrap();
    assert!(index.parse_errors.is_empty());
    (dir, index)
}

#[test]
fn c6_analysis_tool_fixtures() {
    let (_dir, index) = analysis_fixture();
    let main = "com/app/Main.java";

    // get_imports: file order
    assert_eq!(
        get_imports(&index, main).unwrap(),
        vec!["com.app.util.Helper".to_string(), "java.util.List".to_string()]
    );
    assert!(get_imports(&index, "com/app/Empty.java").unwrap().is_empty());

    // identify_variable: local acc declared once, referenced where expected
    let report = identify_variable(&index, "acc", main).unwrap();
    assert_eq!(report.declarations.len(), 1);
    assert_eq!(report.declarations[0].0, 10);
    assert!(report.references.contains(&12));
    assert!(report.references.contains(&14));
    assert!(report.references.contains(&15));

    // find_variable_assignments: decl-with-init and reassignment only
    assert_eq!(find_variable_assignments(&index, "acc", main, None).unwrap(), vec![10, 12]);
    let value_sites =
        find_variable_assignments(&index, "value", "com/app/Config.java", None).unwrap();
    assert!(value_sites.contains(&11));
    assert!(!value_sites.contains(&7));

    // track_variable_dataflow: def 12 feeds the uses at 14 and 15
    let chains = track_variable_dataflow(&index, "acc", main, None).unwrap();
    let last = chains.last().unwrap();
    assert_eq!(last.def_line, 12);
    assert_eq!(last.use_lines, vec![14, 15]);

    // trace_method_usage across files
    let step_calls = trace_method_usage(&index, "step");
    assert!(step_calls.iter().any(|c| c.file == main && c.line == 12));
    let run_calls = trace_method_usage(&index, "run");
    assert!(run_calls
        .iter()
        .any(|c| c.file == "com/app/Runner.java" && c.line == 6));

    // analyze_method_details: loop recorded with its line
    let details = analyze_method_details(&index, "run", main).unwrap();
    assert_eq!(details.len(), 1);
    assert!(details[0]
        .control_flow
        .iter()
        .any(|c| c.kind == "for" && c.line == 11));

    // find_method_in_file control-flow constructs
    let flow = find_method_in_file(&index, "step", "com/app/util/Helper.java").unwrap();
    assert!(flow.iter().any(|c| c.kind == "if" && c.line == 5));
    let flow = find_method_in_file(&index, "shout", "com/app/util/Text.java").unwrap();
    assert!(flow.iter().any(|c| c.kind == "while" && c.line == 8));

    // find_class_loc / identify_class
    let locs = find_class_loc(&index, "Helper").unwrap();
    assert_eq!(locs, vec![("com/app/util/Helper.java".to_string(), (3, 10))]);
    let text_class = identify_class(&index, "Text").unwrap();
    assert_eq!(text_class.fields, vec!["pad".to_string()]);
    assert_eq!(text_class.methods, vec!["shout".to_string()]);
    assert!(text_class.text.contains("while"));

    // 500 randomized queries: span soundness + def-use partition
    let mut rng = StdRng::seed_from_u64(99);
    for _ in 0..500 {
        if rng.gen_bool(0.5) {
            let m = &index.methods[rng.gen_range(0..index.methods.len())];
            let line = rng.gen_range(m.span.0..=m.span.1);
            let found = index.method_at(Path::new(&m.file), line).unwrap();
            assert!(found.span.0 <= line && line <= found.span.1);
        } else {
            let v = &index.variables[rng.gen_range(0..index.variables.len())];
            let chains = track_variable_dataflow(&index, &v.name, &v.file, None).unwrap();
            let mut all_uses: Vec<usize> =
                chains.iter().flat_map(|c| c.use_lines.clone()).collect();
            let n = all_uses.len();
            all_uses.sort();
            all_uses.dedup();
            assert_eq!(all_uses.len(), n, "{}.{} uses not disjoint", v.file, v.name);
            // assignment sites are a subset of occurrence sites
            let sites = find_variable_assignments(&index, &v.name, &v.file, None).unwrap();
            let occ = identify_variable(&index, &v.name, &v.file).unwrap();
            for s in sites {
                assert!(
                    occ.references.contains(&s) || occ.declarations.iter().any(|(l, _)| *l == s)
                );
            }
        }
    }
}

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn load_corpus_bug(name: &str) -> BugInstance {
    let dir = corpus_dir().join(name);
    let text = std::fs::read_to_string(dir.join("bug.json")).unwrap();
    let mut bug = BugInstance::from_manifest(&text).unwrap();
    bug.workspace_root = dir.join(&bug.workspace_root);
    bug
}

fn run_demo(name: &str, strategy: ReasoningStrategy) -> specfix_core::orchestrator::RepairSession {
    let corpus = corpus_dir();
    let bug = load_corpus_bug(name);
    let script = std::fs::read_to_string(corpus.join("replay").join(format!("{name}.json"))).unwrap();
    let backend = Arc::new(ReplayBackend::from_json(&script).unwrap());
    let client = LlmClient::new(backend, LLMConfig::default(), PricingTable::default());
    let templates_dir = tempfile::tempdir().unwrap();
    templates::materialize_defaults(templates_dir.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let clock = FixedClock(0.0);

    let registry = if strategy == ReasoningStrategy::None {
        None
    } else {
        let index = build_index(&bug.workspace_root, LanguageProfile::JavaSubset).unwrap();
        let store = ExampleStore::load(&corpus.join("examples.jsonl")).unwrap();
        Some(ToolRegistry::new(
            Arc::new(index),
            retrieval_handler(Arc::new(store)),
        ))
    };
    let orch = Orchestrator {
        client: &client,
        templates_dir: templates_dir.path().to_path_buf(),
        adapter: TestAdapterConfig::Scripted {
            path: corpus.join("adapter.json"),
        },
        registry: registry.as_ref(),
        agent_config: AgentConfig::default(),
        sandbox_parent: out.path().join("sandboxes"),
        clock: &clock,
    };
    orch.repair_bug(&bug, BudgetConfig::default(), strategy).unwrap()
}

#[test]
fn c7_hermetic_end_to_end_goldens() {
    let out = tempfile::tempdir().unwrap();
    for (name, strategy) in [
        ("demo-1", ReasoningStrategy::None),
        ("demo-2", ReasoningStrategy::None),
        ("demo-3", ReasoningStrategy::MiniR),
    ] {
        let session = run_demo(name, strategy);
        let path = out.path().join(format!("{name}.json"));
        write_session(&session, &path).unwrap();
        let got = std::fs::read(&path).unwrap();
        let golden =
            std::fs::read(corpus_dir().join("golden").join(format!("{name}.json"))).unwrap();
        assert_eq!(got, golden, "{name} session differs from golden");

        let SessionResult::Plausible { patch } = &session.result else {
            panic!("{name} not plausible");
        };
        match name {
            // immediate success
            "demo-1" => assert_eq!((patch.attempt_index, patch.round_index), (1, 1)),
            // initial patch fails validation, refined spec succeeds
            "demo-2" => assert_eq!((patch.attempt_index, patch.round_index), (1, 2)),
            // succeeds only once reasoning kicks in after a fully failed attempt
            _ => {
                assert_eq!((patch.attempt_index, patch.round_index), (2, 1));
                assert!(!session.attempts[0].reasoning_enabled);
                assert!(session.attempts[1].reasoning_enabled);
                let support = session.attempts[1].support.as_ref().unwrap();
                assert!(support.complete);
                assert_eq!(
                    support.retrieved_example.as_ref().unwrap().example_id,
                    "hist-001"
                );
            }
        }
    }
}

fn scenario_workspace() -> (tempfile::TempDir, SourceIndex) {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("A.java"),
        "\
class A {
    int f(int x) {
        int y = x + 1;
        return y;
    }
    int g(int x) {
        return 2 * x;
    }
}
",
    )
    .unwrap();
    let index = build_index(dir.path(), LanguageProfile::JavaSubset).unwrap();
    (dir, index)
}

#[test]
fn c8_scenario_classifier() {
    let (_dir, index) = scenario_workspace();
    // (diff, expected (partition, single_hunk, single_line))
    let single_line = |line: usize, i: usize| {
        format!(
            "--- a/A.java\n+++ b/A.java\n@@ -{line},1 +{line},1 @@\n-        old {i};\n+        new {i};\n"
        )
    };
    let two_line_one_hunk = |i: usize| {
        format!(
            "--- a/A.java\n+++ b/A.java\n@@ -3,2 +3,2 @@\n-        int y = x + {i};\n-        return y;\n+        int y = x - {i};\n+        return y + 1;\n"
        )
    };
    let two_hunks_one_fn = |i: usize| {
        format!(
            "--- a/A.java\n+++ b/A.java\n@@ -3,1 +3,1 @@\n-        int y = x + {i};\n+        int y = x - {i};\n@@ -4,1 +4,1 @@\n-        return y;\n+        return y + {i};\n"
        )
    };
    let two_functions = |i: usize| {
        format!(
            "--- a/A.java\n+++ b/A.java\n@@ -3,1 +3,1 @@\n-        int y = x + {i};\n+        int y = x - {i};\n@@ -7,1 +7,1 @@\n-        return 2 * x;\n+        return {i} * x;\n"
        )
    };
    let outside_span = |i: usize| {
        format!(
            "--- a/A.java\n+++ b/A.java\n@@ -1,1 +1,1 @@\n-class A {{\n+class A{i} {{\n"
        )
    };

    let mut cases: Vec<(String, (ScenarioPartition, bool, bool))> = Vec::new();
    for i in 0..10 {
        cases.push((single_line(3, i), (ScenarioPartition::SF, true, true)));
        cases.push((two_line_one_hunk(i), (ScenarioPartition::SF, true, false)));
        cases.push((two_hunks_one_fn(i), (ScenarioPartition::SF, false, false)));
        cases.push((two_functions(i), (ScenarioPartition::MF, false, false)));
        cases.push((outside_span(i), (ScenarioPartition::MF, false, false)));
    }
    assert_eq!(cases.len(), 50);
    for (diff, (partition, sh, sl)) in &cases {
        let scenario = classify_scenario(diff, &index).unwrap();
        assert_eq!(scenario.partition, *partition, "{diff}");
        assert_eq!(scenario.single_hunk, *sh, "{diff}");
        assert_eq!(scenario.single_line, *sl, "{diff}");
        assert!(scenario.chain_holds());
    }

    // mock 10-bug suite: MF + SF partitions the corpus, like 136 + 255 = 391
    let suite: Vec<&(String, (ScenarioPartition, bool, bool))> =
        cases.iter().take(10).collect();
    let mf = suite
        .iter()
        .filter(|(d, _)| classify_scenario(d, &index).unwrap().partition == ScenarioPartition::MF)
        .count();
    let sf = suite
        .iter()
        .filter(|(d, _)| classify_scenario(d, &index).unwrap().partition == ScenarioPartition::SF)
        .count();
    assert_eq!(mf + sf, 10);
    assert_eq!(136 + 255, 391);
}

#[test]
fn c9_workspace_hygiene() {
    let ws = tempfile::tempdir().unwrap();
    std::fs::write(
        ws.path().join("A.java"),
        "class A {\n    int f(int x) {\n        return x;\n    }\n    int g(int x) {\n        return 2 * x;\n    }\n}\n",
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    let script = out.path().join("adapter.json");
    std::fs::write(
        &script,
        r#"{"default": {"compiled": true, "tests_total": 1, "failures": [
            {"test_id": "t", "error_message": "m"}]}}"#,
    )
    .unwrap();
    let adapter = TestAdapterConfig::Scripted { path: script };
    let sandbox_parent = out.path().join("sandboxes");

    let before = workspace_checksum(ws.path()).unwrap();
    let mut rng = StdRng::seed_from_u64(3);
    for i in 0..1000 {
        let (span, name) = if rng.gen_bool(0.5) {
            ((2usize, 4usize), "f")
        } else {
            ((5usize, 7usize), "g")
        };
        let lines = rng.gen_range(1..=5);
        let text = (0..lines)
            .map(|l| format!("    // v{i} l{l} r{}", rng.gen_range(0..1_000_000)))
            .collect::<Vec<_>>()
            .join("\n");
        let replacements = vec![PatchReplacement {
            locus: FunctionLocus {
                file: "A.java".to_string(),
                function_name: name.to_string(),
                signature: format!("int {name}(int x)"),
                span,
            },
            text,
        }];
        let sandbox = apply_patch(ws.path(), &replacements, &sandbox_parent).unwrap();
        let report = validate(&sandbox, &adapter).unwrap();
        assert!(!report.passed);
        assert_eq!(workspace_checksum(ws.path()).unwrap(), before, "cycle {i}");
    }
}
