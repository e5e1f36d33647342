//! Request and response bodies of the sidecar endpoints.

mod common;

use std::time::Duration;

use common::server::Stub;
use groundchain::composer::generator::{
    GenerationRequest, HttpGenerator, HttpParser, ParseService, TextGenerator, Triple,
};
use groundchain::http::{RetryPolicy, TransportError};
use groundchain::parse::ParseBundle;
use groundchain::progressive::{BackendRequest, DecodingParams, HttpBackend, ModelBackend};
use serde_json::json;

const T: Duration = Duration::from_secs(5);

fn retry(n: u32) -> RetryPolicy {
    RetryPolicy {
        retries: n,
        base_delay: Duration::from_millis(1),
    }
}

#[test]
fn model_request_body() {
    let stub = Stub::start(|_, _| (200, json!({"text": "<b><loc_1><loc_2></b>"}).to_string()));
    let backend = HttpBackend::new(&stub.url, T).unwrap();
    let params = DecodingParams {
        temperature: 0.7,
        top_p: 0.9,
        seed: 11,
    };
    let req = BackendRequest::new(
        "COCO_1.jpg",
        "<s><img>COCO_1.jpg</img><grounding><p>a dog</p>".into(),
        64,
        params,
    );
    assert_eq!(backend.complete(&req).unwrap(), "<b><loc_1><loc_2></b>");
    let got = stub.requests();
    assert_eq!(got.len(), 1);
    assert_eq!(
        (got[0].method.as_str(), got[0].path.as_str()),
        ("POST", "/model")
    );
    assert!(got[0]
        .content_type
        .as_deref()
        .unwrap()
        .starts_with("application/json"));
    assert_eq!(
        got[0].json(),
        json!({
            "image": "COCO_1.jpg",
            "prompt": "<s><img>COCO_1.jpg</img><grounding><p>a dog</p>",
            "max_length": 64,
            "temperature": 0.7,
            "top_p": 0.9,
            "seed": 11
        })
    );
}

#[test]
fn health_probe() {
    let stub = Stub::start(|_, _| (200, json!({"status": "ok", "model": "stub"}).to_string()));
    let h = HttpBackend::new(&format!("{}/", stub.url), T)
        .unwrap()
        .health()
        .unwrap();
    assert_eq!((h.status.as_str(), h.model.as_str()), ("ok", "stub"));
    let r = &stub.requests()[0];
    assert_eq!((r.method.as_str(), r.path.as_str()), ("GET", "/health"));
}

#[test]
fn generate_request_body() {
    let stub = Stub::start(|_, _| (200, json!({"text": "the man behind the woman"}).to_string()));
    let g = HttpGenerator::new(&stub.url, T, retry(0)).unwrap();
    let req = GenerationRequest {
        system_prompt: "sys".into(),
        triples: vec![Triple {
            subject: "man".into(),
            relation: "behind".into(),
            object: "woman".into(),
        }],
        entities: vec!["man".into(), "woman".into()],
    };
    assert_eq!(g.generate(&req).unwrap(), "the man behind the woman");
    let r = &stub.requests()[0];
    assert_eq!(r.path, "/generate");
    assert_eq!(
        r.json(),
        json!({
            "system_prompt": "sys",
            "triples": [{"subject": "man", "relation": "behind", "object": "woman"}],
            "entities": ["man", "woman"]
        })
    );
}

fn fixture_parse(name: &str) -> (String, String) {
    let read = |ext: &str| {
        std::fs::read_to_string(common::fixture(&format!("parses/{name}.{ext}"))).unwrap()
    };
    (read("ptb"), read("conllu"))
}

#[test]
fn parse_request_and_response() {
    let (ptb, conllu) = fixture_parse("woman_riding");
    let want = ParseBundle::from_strings(&ptb, &conllu).unwrap();
    let tokens = want.tree.tokens().to_vec();
    let body = json!({"tokens": tokens, "conllu": conllu, "bracketed": ptb}).to_string();
    let stub = Stub::start(move |_, _| (200, body.clone()));
    let p = HttpParser::new(&stub.url, T, retry(0)).unwrap();
    let got = p.parse(&want.text).unwrap();
    assert_eq!(got, want);
    let r = &stub.requests()[0];
    assert_eq!(r.path, "/parse");
    assert_eq!(r.json(), json!({"sentence": want.text}));
}

#[test]
fn parse_tokens_must_agree() {
    let (ptb, conllu) = fixture_parse("woman_riding");
    let body = json!({"tokens": ["not", "these"], "conllu": conllu, "bracketed": ptb}).to_string();
    let stub = Stub::start(move |_, _| (200, body.clone()));
    assert!(HttpParser::new(&stub.url, T, retry(0))
        .unwrap()
        .parse("x")
        .is_err());
}

#[test]
fn server_errors_are_retried() {
    let stub = Stub::start(|_, n| {
        if n < 2 {
            (503, "busy".into())
        } else {
            (200, json!({"text": "fine"}).to_string())
        }
    });
    let g = HttpGenerator::new(&stub.url, T, retry(2)).unwrap();
    let req = GenerationRequest {
        system_prompt: String::new(),
        triples: vec![],
        entities: vec![],
    };
    assert_eq!(g.generate(&req).unwrap(), "fine");
    assert_eq!(stub.requests().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let stub = Stub::start(|_, _| (422, "bad".into()));
    let g = HttpGenerator::new(&stub.url, T, retry(3)).unwrap();
    let req = GenerationRequest {
        system_prompt: String::new(),
        triples: vec![],
        entities: vec![],
    };
    assert_eq!(
        g.generate(&req),
        Err(TransportError::Rejected {
            status: 422,
            body: "bad".into()
        })
    );
    assert_eq!(stub.requests().len(), 1);
}

#[test]
fn malformed_json_is_a_decode_error() {
    let stub = Stub::start(|_, _| (200, "{\"txt\": 1}".into()));
    let backend = HttpBackend::new(&stub.url, T).unwrap();
    let req = BackendRequest::new("i", "p".into(), 8, DecodingParams::default());
    assert!(matches!(
        backend.complete(&req),
        Err(TransportError::Decode(_))
    ));
}

#[test]
fn closed_port_is_unavailable() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let backend = HttpBackend::new(&format!("http://127.0.0.1:{port}"), T).unwrap();
    let err = backend.health().unwrap_err();
    assert!(err.is_transient(), "{err:?}");
}
