use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rsvlts::condparse::*;
use rsvlts::geom::{rbb_from_params, BoxParams, RotatedBox};
use rsvlts::textcodec::{serialize_answer, AnswerPayload, CoordSpace};

enum Reply {
    Hang,
    Status(u16, String),
}

/// Serves each connection on its own thread; `reply` sees the call number
/// and the request body.
fn serve(
    reply: impl Fn(usize, &serde_json::Value) -> Reply + Send + Sync + 'static,
) -> (String, Arc<Mutex<Vec<serde_json::Value>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/ground", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let reply = Arc::new(reply);
    let calls = Arc::new(AtomicUsize::new(0));
    let seen2 = seen.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { return };
            let (reply, calls, seen) = (reply.clone(), calls.clone(), seen2.clone());
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    if reader.read_line(&mut line).unwrap_or(0) == 0 {
                        return;
                    }
                    let l = line.to_ascii_lowercase();
                    if let Some(v) = l.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if line == "\r\n" {
                        break;
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let body: serde_json::Value = serde_json::from_slice(&body).unwrap();
                let n = calls.fetch_add(1, Ordering::SeqCst);
                seen.lock().unwrap().push(body.clone());
                match reply(n, &body) {
                    Reply::Hang => std::thread::sleep(Duration::from_secs(3)),
                    Reply::Status(code, text) => {
                        let _ = write!(
                            stream,
                            "HTTP/1.1 {code} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                            text.len()
                        );
                    }
                }
            });
        }
    });
    (url, seen)
}

fn ok_text(text: &str) -> Reply {
    Reply::Status(200, serde_json::json!({ "text": text }).to_string())
}

fn square(cx: f64, cy: f64) -> RotatedBox {
    rbb_from_params(&BoxParams {
        cx,
        cy,
        w: 10.0,
        h: 10.0,
        theta: 0.0,
    })
    .unwrap()
}

fn boxes_text(boxes: Vec<RotatedBox>) -> String {
    serialize_answer(
        &AnswerPayload::RboxList(boxes),
        &CoordSpace::pixel(100, 100),
    )
    .unwrap()
}

fn config(url: &str) -> RemoteConfig {
    let mut cfg = RemoteConfig::new(url, "img/0001.png", CoordSpace::pixel(100, 100));
    cfg.timeout = Duration::from_millis(400);
    cfg.backoff = Duration::from_millis(20);
    cfg
}

#[test]
fn two_timeouts_then_success() {
    let (url, seen) = serve(|n, _| {
        if n < 2 {
            Reply::Hang
        } else {
            ok_text(&boxes_text(vec![square(20.0, 20.0)]))
        }
    });
    let g = RemoteGrounder::new(config(&url)).unwrap();
    let chain = parse_conditions("detect all planes").unwrap();
    let r = resolve(&chain, &g).unwrap();
    assert_eq!(r.ids, [0]);
    assert_eq!(g.retries(), 2);
    let body = &seen.lock().unwrap()[2];
    assert_eq!(body["instruction"], "detect all planes");
    assert_eq!(body["image_path"], "img/0001.png");
}

#[test]
fn persistent_failure_is_a_transport_error() {
    let (url, _) = serve(|_, _| Reply::Status(503, "{}".into()));
    let g = RemoteGrounder::new(config(&url)).unwrap();
    let chain = parse_conditions("detect all planes").unwrap();
    let err = resolve(&chain, &g).unwrap_err();
    assert!(
        matches!(
            err,
            ResolveError::Ground {
                step: 0,
                source: GroundError::Transport { attempts: 3, .. },
                ..
            }
        ),
        "{err}"
    );
    assert_eq!(g.retries(), 2);
}

#[test]
fn filter_steps_send_candidates_and_match_back() {
    let (url, seen) = serve(|n, body| match n {
        0 => ok_text(&boxes_text(vec![
            square(20.0, 20.0),
            square(60.0, 40.0),
            square(70.0, 80.0),
        ])),
        _ => {
            assert_eq!(body["candidates"].as_array().unwrap().len(), 3);
            // slightly shifted copies still select their candidates
            ok_text(&format!(
                "Sure: {}",
                boxes_text(vec![square(61.0, 40.0), square(70.0, 81.0)])
            ))
        }
    });
    let g = RemoteGrounder::new(config(&url)).unwrap();
    let chain = parse_conditions("detect all planes on the east bank of the river").unwrap();
    let r = resolve(&chain, &g).unwrap();
    assert_eq!(r.ids, [1, 2]);
    let seen = seen.lock().unwrap();
    assert_eq!(
        seen[1]["instruction"],
        "select the ones on the east bank of the river"
    );
    assert_eq!(
        seen[1]["candidates"][0],
        serde_json::json!([15.0, 15.0, 25.0, 15.0, 25.0, 25.0, 15.0, 25.0])
    );
}

#[test]
fn unparseable_reply_counts_as_empty() {
    let (url, _) = serve(|n, _| match n {
        0 => ok_text(&boxes_text(vec![square(20.0, 20.0)])),
        _ => ok_text("I cannot see any."),
    });
    let g = RemoteGrounder::new(config(&url)).unwrap();
    let chain = parse_conditions("find the red planes").unwrap();
    let r = resolve(&chain, &g).unwrap();
    assert!(r.ids.is_empty());
    assert_eq!(g.parse_failures(), 1);
    assert_eq!(g.retries(), 0);
}

#[test]
fn opaque_instruction_goes_out_verbatim() {
    let (url, seen) = serve(|_, _| ok_text(&boxes_text(vec![square(50.0, 50.0)])));
    let g = RemoteGrounder::new(config(&url)).unwrap();
    let ParsedInstruction::Opaque { text, .. } = parse_or_passthrough("where is it?") else {
        panic!()
    };
    let r = resolve_opaque(&text, &g).unwrap();
    assert_eq!(r.ids, [0]);
    assert_eq!(seen.lock().unwrap()[0]["instruction"], "where is it?");
}

/// Returns more candidates than it was given.
struct Inflating;

impl Grounder for Inflating {
    fn ground_category(&self, _: &str, _: &SubInstruction) -> Result<CandidateSet, GroundError> {
        Ok(CandidateSet::new(vec![Candidate {
            id: 1,
            rbb: square(20.0, 20.0),
        }]))
    }
    fn filter_spatial(
        &self,
        _: &CandidateSet,
        _: SpatialRelation,
        _: &str,
        _: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        Ok(CandidateSet::new(vec![
            Candidate {
                id: 1,
                rbb: square(20.0, 20.0),
            },
            Candidate {
                id: 2,
                rbb: square(60.0, 20.0),
            },
        ]))
    }
    fn filter_attribute(
        &self,
        s: &CandidateSet,
        _: &str,
        _: &str,
        _: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        Ok(s.clone())
    }
    fn rank_superlative(
        &self,
        s: &CandidateSet,
        _: SuperlativeMetric,
        _: Option<&str>,
        _: &SubInstruction,
    ) -> Result<CandidateSet, GroundError> {
        Ok(s.clone())
    }
}

#[test]
fn growing_candidate_set_is_rejected() {
    let chain = parse_conditions("find the red planes north of the road").unwrap();
    let err = resolve(&chain, &Inflating).unwrap_err();
    assert!(
        matches!(
            err,
            ResolveError::NotMonotone {
                step: 2,
                had: 1,
                got: 2,
                ..
            }
        ),
        "{err}"
    );
}
