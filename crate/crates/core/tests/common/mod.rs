//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::Value;

/// Minimal HTTP server standing in for the entailment service. The handler
/// gets the request index and the JSON body and returns a status and body.
pub struct StubServer {
    pub url: String,
    pub requests: Arc<Mutex<Vec<(String, Value)>>>,
}

impl StubServer {
    pub fn start<F>(handler: F) -> Self
    where
        F: Fn(usize, &Value) -> (u16, String) + Send + Sync + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub");
        let url = format!("http://{}", listener.local_addr().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&requests);
        let handler = Arc::new(handler);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { continue };
                let log = Arc::clone(&log);
                let handler = Arc::clone(&handler);
                thread::spawn(move || {
                    let mut reader = BufReader::new(stream.try_clone().unwrap());
                    let mut request_line = String::new();
                    if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
                        return;
                    }
                    let mut length = 0usize;
                    loop {
                        let mut line = String::new();
                        reader.read_line(&mut line).unwrap();
                        if line.trim().is_empty() {
                            break;
                        }
                        if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                            length = v.trim().parse().unwrap();
                        }
                    }
                    let mut body = vec![0; length];
                    reader.read_exact(&mut body).unwrap();
                    let json: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
                    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_owned();
                    let index = {
                        let mut l = log.lock().unwrap();
                        l.push((path, json.clone()));
                        l.len() - 1
                    };
                    let (status, reply) = handler(index, &json);
                    let _ = write!(
                        stream,
                        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                        reply.len()
                    );
                });
            }
        });
        Self { url, requests }
    }

    /// Replies with the label embedded in the hypothesis text as `label=N`.
    pub fn echo_label() -> Self {
        Self::start(|_, body| {
            let hyp = body["hypothesis"].as_str().unwrap_or("");
            let label = hyp.rsplit("label=").next().and_then(|s| s.parse::<i64>().ok()).unwrap_or(1);
            (200, format!("{{\"label\":{label}}}"))
        })
    }

    pub fn n_requests(&self) -> usize {
        self.requests.lock().unwrap().len()
    }
}
