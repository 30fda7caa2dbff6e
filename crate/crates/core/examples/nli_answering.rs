//! Answers queries about report text through an entailment service. A tiny
//! in-process server stands in for the real model: it says "entailed" when
//! the hypothesis appears verbatim in the premise.
//!
//! cargo run --example nli_answering

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use infopursuit::answers::{assemble_nli_prompt, NliClient, NliClientConfig, NliPrompt, NliProvider, ReportDoc};
use infopursuit::config::DEFAULT_INSTRUCTION;

fn serve(listener: TcpListener) {
    for stream in listener.incoming() {
        let Ok(mut stream) = stream else { continue };
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut length = 0;
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
        let prompt: NliPrompt = serde_json::from_slice(&body).unwrap();
        let premise = prompt.premise.to_lowercase();
        let label = if premise.contains(&format!("no {}", prompt.hypothesis)) {
            0
        } else if premise.contains(&prompt.hypothesis) {
            2
        } else {
            1
        };
        let reply = format!("{{\"label\":{label}}}");
        write!(
            stream,
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
            reply.len()
        )
        .unwrap();
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let listener = TcpListener::bind("127.0.0.1:0")?;
    let url = format!("http://{}", listener.local_addr()?);
    thread::spawn(move || serve(listener));

    let reports = vec![
        ReportDoc {
            report_id: "r1".into(),
            text: "Small left pleural effusion. No pneumothorax.".into(),
        },
        ReportDoc {
            report_id: "r2".into(),
            text: "Cardiomegaly with mild edema.".into(),
        },
    ];
    let facts = vec!["pleural effusion".to_string(), "pneumothorax".into(), "edema".into()];

    let prompt = assemble_nli_prompt(DEFAULT_INSTRUCTION, &reports[0], &facts[0])?;
    println!("{}\n", prompt.render());

    let provider = NliProvider::new(NliClient::new(NliClientConfig::new(url)), DEFAULT_INSTRUCTION, reports, facts);
    let matrix = provider.answer_all(2)?;
    print!("answers (rows = reports):\n{}", matrix.to_csv());
    Ok(())
}
