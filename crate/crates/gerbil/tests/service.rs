use std::net::SocketAddr;
use std::sync::Arc;

use spel_core::{EntityVocabulary, Linker, MockScores};
use spel_gerbil::{emit_nif, parse_nif, router, AnnotationService, NifDocument, DEFAULT_KB_PREFIX};
use spel_testkit::{http, synth};

/// Starts the service on an ephemeral port in a background runtime.
fn start(reference: &[spel_core::AnnotatedDocument], vocab: Arc<EntityVocabulary>) -> SocketAddr {
    let mock = MockScores::new(vocab.clone(), 0.9)
        .unwrap()
        .with_reference(reference);
    let linker = Linker::new(vocab, Arc::new(mock)).unwrap();
    let service = Arc::new(AnnotationService::new(linker, DEFAULT_KB_PREFIX));
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, router(service)).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

fn fixture() -> (Vec<spel_core::AnnotatedDocument>, Arc<EntityVocabulary>) {
    let entities = synth::entities(30, 7);
    let docs = synth::corpus(10, &entities, 8);
    let vocab =
        Arc::new(EntityVocabulary::build(entities.iter().map(|e| e.id.as_str()), true).unwrap());
    (docs, vocab)
}

fn request_for(doc: &spel_core::AnnotatedDocument) -> String {
    let nif = NifDocument {
        context_uri: format!("http://example.org/{}", doc.id),
        is_string: doc.text.clone(),
        phrases: vec![],
    };
    emit_nif(&nif, &[], DEFAULT_KB_PREFIX).unwrap()
}

#[test]
fn health_check() {
    let (docs, vocab) = fixture();
    let addr = start(&docs, vocab);
    assert_eq!(
        http::request(addr, "GET", "/health", "text/plain", "")
            .unwrap()
            .0,
        200
    );
}

#[test]
fn annotations_match_gold() {
    let (docs, vocab) = fixture();
    let addr = start(&docs, vocab);
    for doc in &docs {
        let (status, body) = http::request(
            addr,
            "POST",
            "/annotate",
            "application/x-turtle",
            &request_for(doc),
        )
        .unwrap();
        assert_eq!(status, 200, "{body}");
        let got: Vec<(usize, usize, String)> = parse_nif(&body)
            .unwrap()
            .phrases
            .into_iter()
            .map(|p| (p.begin_index, p.end_index, p.ta_ident_ref.unwrap()))
            .collect();
        let want: Vec<(usize, usize, String)> = doc
            .gold
            .iter()
            .map(|g| (g.start, g.end, format!("{DEFAULT_KB_PREFIX}{}", g.entity)))
            .collect();
        assert_eq!(got, want);
    }
}

#[test]
fn malformed_body_is_a_client_error() {
    let (docs, vocab) = fixture();
    let addr = start(&docs, vocab);
    let (status, body) = http::request(
        addr,
        "POST",
        "/annotate",
        "application/x-turtle",
        "<<< nonsense",
    )
    .unwrap();
    assert_eq!(status, 400);
    assert!(body.contains("Turtle"), "{body}");
    let (status, _) = http::request(
        addr,
        "POST",
        "/annotate",
        "application/x-turtle",
        "<http://x/d> a <http://persistence.uni-leipzig.org/nlp2rdf/ontologies/nif-core#Context> .",
    )
    .unwrap();
    assert_eq!(status, 400);
}

#[test]
fn pipeline_failure_is_a_server_error() {
    // A provider sized for a different vocabulary fails at scoring time.
    struct Broken;
    impl spel_core::ScoreProvider for Broken {
        fn vocab_size(&self) -> usize {
            3
        }
        fn score(
            &self,
            _: &spel_core::AnnotatedDocument,
            _: &spel_core::Chunk<'_>,
        ) -> spel_core::Result<spel_core::LogitMatrix> {
            Err(spel_core::Error::Shape("broken provider".into()))
        }
    }
    let vocab = Arc::new(EntityVocabulary::build(["A", "B"], true).unwrap());
    let service = AnnotationService::new(
        Linker::new(vocab, Arc::new(Broken)).unwrap(),
        DEFAULT_KB_PREFIX,
    );
    let body = request_for(&spel_core::AnnotatedDocument::new("d", "some text"));
    let (status, message) = service.annotate(&body).unwrap_err();
    assert_eq!(status.as_u16(), 500);
    assert!(message.contains("broken provider"));
}

#[test]
fn concurrent_identical_requests_get_identical_responses() {
    let (docs, vocab) = fixture();
    let addr = start(&docs, vocab);
    let body = request_for(&docs[0]);
    let handles: Vec<_> = (0..32)
        .map(|_| {
            let body = body.clone();
            std::thread::spawn(move || {
                http::request(addr, "POST", "/annotate", "application/x-turtle", &body).unwrap()
            })
        })
        .collect();
    let responses: Vec<(u16, String)> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(responses.iter().all(|r| r.0 == 200));
    assert!(responses.windows(2).all(|w| w[0] == w[1]));
}
