use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::time::Duration;

use gi_core::llm::{
    build_prompt, extract_first_block, ClientError, ExtractError, HttpTransport, LlmClient,
    LlmClientConfig, LlmMode, LlmRequest, PromptTemplate, ScriptedMock, Transport,
};
use gi_core::{
    apply_patch, fingerprint, Benchmark, Evaluator, LlmSetup, OperatorFamily, PromptCategory,
    RandomSamplingConfig, SearchContext,
};
use minilang::DEFAULT_STEP_BUDGET;

const FIG1_WITH_SUBSTITUTIONS: &str =
    "Give me 5 different Java implementations of this method body:\n\
```\n\
{ return 1; }\n\
```\n\
This code belongs to project bench.\n\
Wrap all code in curly braces, if it is not already.\n\
Do not include any method or class declarations.\n\
label all code as java.";

fn java(category: PromptCategory) -> PromptTemplate {
    PromptTemplate::new(category, "bench").with_language("Java", "java")
}

#[test]
fn medium_prompt_is_the_figure_byte_for_byte() {
    let p = build_prompt(&java(PromptCategory::Medium), "{ return 1; }");
    assert_eq!(p.as_bytes(), FIG1_WITH_SUBSTITUTIONS.as_bytes());
}

#[test]
fn simple_prompt_is_a_strict_subset() {
    let simple = build_prompt(&java(PromptCategory::Simple), "{ return 1; }");
    let medium = build_prompt(&java(PromptCategory::Medium), "{ return 1; }");
    assert!(medium.starts_with(&simple) && medium.len() > simple.len());
    assert!(simple.contains("{ return 1; }"));
    assert!(simple.contains("Give me 5 different Java implementations"));
    for line in ["bench", "curly braces", "declarations", "label all code"] {
        assert!(!simple.contains(line), "{line}");
    }
    // project names are not read by the simple template
    let other = PromptTemplate::new(PromptCategory::Simple, "zzz").with_language("Java", "java");
    assert_eq!(build_prompt(&other, "{ return 1; }"), simple);
}

#[test]
fn detailed_prompt_extends_medium() {
    for code in ["{ return 1; }", "{\n    let x = a < b;\n}"] {
        let medium = build_prompt(&java(PromptCategory::Medium), code);
        let detailed = build_prompt(&java(PromptCategory::Detailed), code);
        let example = detailed.strip_prefix(&medium).expect("medium is a prefix");
        assert_eq!(
            example,
            format!("\n\n{}", java(PromptCategory::Detailed).example_change)
        );
        assert!(example.contains("break;"));
    }
}

#[test]
fn first_fenced_block_with_or_without_label() {
    assert_eq!(
        extract_first_block("a\n```java\n{ x(); }\n```\n```\n{ y(); }\n```").unwrap(),
        "{ x(); }"
    );
    assert_eq!(
        extract_first_block("```\n{ y(); }\n```").unwrap(),
        "{ y(); }"
    );
    assert_eq!(
        extract_first_block("no code here"),
        Err(ExtractError::NoCodeBlock)
    );
}

/// One HTTP exchange seen by the fake server.
struct Seen {
    head: String,
    body: serde_json::Value,
}

/// Serves `statuses` in order, one connection each, then stops.
fn fake_endpoint(statuses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Seen>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!(
        "http://{}/v1/chat/completions",
        listener.local_addr().unwrap()
    );
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for (status, body) in statuses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
                head.push_str(&line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            tx.send(Seen {
                head,
                body: serde_json::from_slice(&buf).unwrap(),
            })
            .unwrap();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn completion(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]})
        .to_string()
}

fn live_config(endpoint: String) -> LlmClientConfig {
    LlmClientConfig {
        endpoint,
        mode: LlmMode::Live,
        backoff: Duration::from_millis(5),
        request_timeout: Duration::from_secs(5),
        ..Default::default()
    }
}

#[test]
fn live_request_shape_and_rate_limit_retry() {
    let (url, seen) = fake_endpoint(vec![
        (429, "{}".into()),
        (200, completion("```\n{ return 2; }\n```")),
    ]);
    let config = live_config(url);
    let transport = HttpTransport::with_key(&config, "sk-test".into());
    let client = LlmClient::with_transport(config, Some(Box::new(transport))).unwrap();
    let resp = client.complete(&client.request("hello")).unwrap();
    assert_eq!(resp.extracted_blocks, vec!["{ return 2; }"]);
    assert_eq!(client.transport_calls(), 2);
    for _ in 0..2 {
        let s = seen.recv().unwrap();
        assert!(
            s.head.starts_with("POST /v1/chat/completions "),
            "{}",
            s.head
        );
        assert!(s
            .head
            .to_ascii_lowercase()
            .contains("authorization: bearer sk-test"));
        assert_eq!(
            s.body,
            serde_json::json!({
                "model": "gpt-3.5-turbo",
                "temperature": 0.7,
                "messages": [{"role": "user", "content": "hello"}],
            })
        );
    }
}

#[test]
fn retries_stop_at_the_limit() {
    let (url, _seen) = fake_endpoint(vec![(429, "{}".into()); 3]);
    let config = LlmClientConfig {
        max_retries: 2,
        ..live_config(url)
    };
    let transport = HttpTransport::with_key(&config, "k".into());
    let client = LlmClient::with_transport(config, Some(Box::new(transport))).unwrap();
    assert!(matches!(
        client.complete(&client.request("x")),
        Err(ClientError::RateLimited)
    ));
    assert_eq!(client.transport_calls(), 3);
}

#[test]
fn non_retryable_status_is_reported() {
    let (url, _seen) = fake_endpoint(vec![(401, "nope".into())]);
    let config = live_config(url);
    let t = HttpTransport::with_key(&config, "k".into());
    let err = t.send(&LlmRequest::new("x", &config)).unwrap_err();
    assert!(matches!(err, ClientError::BadStatus { status: 401, ref body } if body == "nope"));
}

#[test]
fn replay_never_touches_the_network() {
    // A listener that nobody should connect to.
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let config = LlmClientConfig {
        endpoint: format!("http://{}/", listener.local_addr().unwrap()),
        mode: LlmMode::Replay,
        transcript_dir: Some(dir.path().to_path_buf()),
        ..Default::default()
    };
    let transport = HttpTransport::with_key(&config, "k".into());
    let client = LlmClient::with_transport(config, Some(Box::new(transport))).unwrap();
    assert!(matches!(
        client.complete(&client.request("x")),
        Err(ClientError::TranscriptMiss(_))
    ));
    assert_eq!(client.transport_calls(), 0);
    assert!(listener.accept().is_err());
}

fn five_rewrites() -> String {
    (1..=5)
        .map(|i| format!("Option {i}:\n```minilang\n{{\n    total = total + i + {i};\n}}\n```\n"))
        .collect()
}

#[test]
fn sampling_ten_medium_draws_sends_two_requests() {
    let b = Benchmark::get("bench_sum").unwrap();
    let ev = Evaluator::builtin(b.unit(), b.test_cases(), DEFAULT_STEP_BUDGET);
    let client = LlmClient::with_transport(
        LlmClientConfig::default(),
        Some(Box::new(ScriptedMock::new(vec![five_rewrites(); 3]))),
    )
    .unwrap();
    let ctx = SearchContext {
        evaluator: &ev,
        hot: vec!["sum".into()],
        llm: Some(LlmSetup::new(&client, "bench")),
    };
    let cfg = RandomSamplingConfig {
        budget: 10,
        ..RandomSamplingConfig::new(vec![OperatorFamily::Llm(PromptCategory::Medium)], 1)
    };
    let records = ctx.random_sampling(&cfg).unwrap();
    assert_eq!(records.len(), 10);
    assert_eq!(client.requests_issued(), 2);
    for r in &records {
        assert!(apply_patch(&ev.unit, &r.result.patch).is_ok());
        assert_eq!(
            r.result.fingerprint,
            fingerprint(&ev.unit, &r.result.patch).ok()
        );
    }
}
