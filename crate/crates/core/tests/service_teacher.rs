use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use mtcl_core::bridge::{
    encode_f32_payload, transform_embeddings_to_logits, EmbeddingTensor, ServiceConfig, ServiceTeacher, Teacher,
    TeacherHandle, TeacherRequest, TeacherResponse, TokenizedLabelSet, Want, QUERY_PATH,
};
use mtcl_core::taskstream::{ClassDescriptor, ClassId, Sample};
use mtcl_core::{Error, ErrorCategory, TeacherError};
use tiny_http::{Header, Response, Server};

const M: usize = 2;
const P: usize = 5;

fn classes() -> Vec<ClassDescriptor> {
    vec![
        ClassDescriptor {
            id: ClassId(0),
            name: "cutting".into(),
            tokens: vec![1, 2],
        },
        ClassDescriptor {
            id: ClassId(1),
            name: "idle".into(),
            tokens: vec![3],
        },
        ClassDescriptor {
            id: ClassId(2),
            name: "kidney".into(),
            tokens: vec![4, 1],
        },
    ]
}

fn sample() -> Sample {
    Sample {
        id: "s-1".into(),
        features: vec![0.25, -1.0],
        question: "what is the tool doing".into(),
        answer: ClassId(0),
    }
}

fn tensor_scores() -> Vec<f64> {
    (0..3 * (M + 1) * P)
        .map(|i| ((i * 37) % 11) as f64 * 0.25 - 1.0)
        .collect()
}

/// Serves requests on a background thread; `reply` maps (attempt, request) to (status, body).
fn serve<F>(reply: F) -> (String, Arc<AtomicUsize>)
where
    F: Fn(usize, &TeacherRequest) -> Option<(u16, String)> + Send + 'static,
{
    let server = Server::http("127.0.0.1:0").unwrap();
    let port = server.server_addr().to_ip().unwrap().port();
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    thread::spawn(move || {
        for mut req in server.incoming_requests() {
            assert_eq!(req.url(), QUERY_PATH);
            let mut body = String::new();
            req.as_reader().read_to_string(&mut body).unwrap();
            let parsed: TeacherRequest = serde_json::from_str(&body).unwrap();
            let n = h.fetch_add(1, Ordering::SeqCst);
            match reply(n, &parsed) {
                Some((status, text)) => {
                    let header = Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = req.respond(Response::from_string(text).with_status_code(status).with_header(header));
                }
                None => {
                    thread::sleep(Duration::from_millis(600));
                    drop(req);
                }
            }
        }
    });
    (format!("http://127.0.0.1:{port}"), hits)
}

fn ok(req: &TeacherRequest, dims: Vec<usize>, values: &[f64]) -> Option<(u16, String)> {
    let r = TeacherResponse {
        request_id: req.request_id,
        dims,
        payload: encode_f32_payload(values),
    };
    Some((200, serde_json::to_string(&r).unwrap()))
}

fn teacher(endpoint: String, timeout_ms: u64, retries: u32, want: Want) -> TeacherHandle {
    let cfg = ServiceConfig {
        endpoint,
        timeout: Duration::from_millis(timeout_ms),
        retries,
        want,
    };
    TeacherHandle::new(Teacher::Service(ServiceTeacher::new(cfg, M, P, 1e-6)))
}

#[test]
fn logits_reply() {
    let (url, _) = serve(|_, req| {
        assert_eq!(req.candidate_labels, vec!["cutting", "idle", "kidney"]);
        assert_eq!(req.want, Want::Logits);
        ok(req, vec![3], &[0.5, 2.0, -1.0])
    });
    let t = teacher(url, 2000, 0, Want::Logits);
    assert_eq!(t.query(&sample(), &classes()).unwrap(), vec![0.5, 2.0, -1.0]);
    assert_eq!(t.query_count(), 1);
}

#[test]
fn embedding_reply_goes_through_transform() {
    let scores = tensor_scores();
    let s2 = scores.clone();
    let (url, _) = serve(move |_, req| ok(req, vec![3, M + 1, P], &s2));
    let t = teacher(url, 2000, 0, Want::Embeddings);
    let z = t.query(&sample(), &classes()).unwrap();
    let as_f32: Vec<f64> = scores.iter().map(|&v| v as f32 as f64).collect();
    let labels =
        TokenizedLabelSet::from_token_sequences(classes().into_iter().map(|c| c.tokens).collect(), M, P).unwrap();
    let want =
        transform_embeddings_to_logits(&EmbeddingTensor::new(3, M + 1, P, as_f32).unwrap(), &labels, 1e-6).unwrap();
    assert_eq!(z, want);
}

#[test]
fn server_errors_are_retried() {
    let (url, hits) = serve(|n, req| {
        if n < 2 {
            Some((503, "busy".into()))
        } else {
            ok(req, vec![3], &[1.0, 0.0, 0.0])
        }
    });
    let t = teacher(url, 2000, 2, Want::Logits);
    assert_eq!(t.query(&sample(), &classes()).unwrap(), vec![1.0, 0.0, 0.0]);
    assert_eq!(hits.load(Ordering::SeqCst), 3);
}

#[test]
fn exhausted_retries_report_transport_error() {
    let (url, hits) = serve(|_, _| Some((500, "down".into())));
    let t = teacher(url, 2000, 1, Want::Logits);
    let err = t.query(&sample(), &classes()).unwrap_err();
    assert!(matches!(err, Error::Teacher(TeacherError::Transport { .. })), "{err}");
    assert_eq!(err.category(), ErrorCategory::Teacher);
    assert_eq!(hits.load(Ordering::SeqCst), 2);
}

#[test]
fn slow_server_times_out() {
    let (url, _) = serve(|_, _| None);
    let t = teacher(url, 100, 1, Want::Logits);
    match t.query(&sample(), &classes()).unwrap_err() {
        Error::Teacher(TeacherError::Timeout { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("expected timeout, got {other}"),
    }
}

#[test]
fn refused_connection_is_transport_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let t = teacher(format!("http://127.0.0.1:{port}"), 500, 0, Want::Logits);
    let err = t.query(&sample(), &classes()).unwrap_err();
    assert!(matches!(err, Error::Teacher(TeacherError::Transport { .. })), "{err}");
}

#[test]
fn wrong_dimensions_are_rejected() {
    let (url, _) = serve(|_, req| ok(req, vec![4], &[0.0; 4]));
    let t = teacher(url, 2000, 0, Want::Logits);
    let err = t.query(&sample(), &classes()).unwrap_err();
    assert!(matches!(err, Error::Teacher(TeacherError::Dimension(_))), "{err}");

    let (url, _) = serve(|_, req| ok(req, vec![3, M + 1, P + 1], &vec![0.0; 3 * (M + 1) * (P + 1)]));
    let t = teacher(url, 2000, 0, Want::Embeddings);
    let err = t.query(&sample(), &classes()).unwrap_err();
    assert!(matches!(err, Error::Teacher(TeacherError::Dimension(_))), "{err}");
}

#[test]
fn mismatched_reply_is_malformed() {
    let (url, _) = serve(|_, req| {
        let r = TeacherResponse {
            request_id: req.request_id + 1,
            dims: vec![3],
            payload: encode_f32_payload(&[0.0; 3]),
        };
        Some((200, serde_json::to_string(&r).unwrap()))
    });
    let t = teacher(url, 2000, 0, Want::Logits);
    assert!(matches!(
        t.query(&sample(), &classes()).unwrap_err(),
        Error::Teacher(TeacherError::Malformed(_))
    ));

    let (url, _) = serve(|_, _| Some((200, "{\"nope\": 1}".into())));
    let t = teacher(url, 2000, 0, Want::Logits);
    assert!(matches!(
        t.query(&sample(), &classes()).unwrap_err(),
        Error::Teacher(TeacherError::Malformed(_))
    ));
}
