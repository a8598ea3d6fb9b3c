//! Reference child process for the line protocol, used by tests.
//!
//! Modes (first argument):
//! - `uniform [classes]`: probabilities `1/classes` for every image (default 2)
//! - `wrong-id`: valid replies carrying the wrong id
//! - `error`: replies with an error message
//! - `garbage`: replies with a line that is not JSON
//! - `exit`: exits with status 7 on the first request
//! - `hang`: reads requests and never replies

use std::io::{self, BufRead, Write};
use std::process::ExitCode;

use samix::io::protocol::{decode_batch, Op, Request, Response};

fn reply(out: &mut impl Write, resp: &Response) -> io::Result<()> {
    serde_json::to_writer(&mut *out, resp)?;
    out.write_all(b"\n")?;
    out.flush()
}

fn uniform(req: &Request, classes: usize) -> Response {
    let n = match decode_batch(req.shape, &req.data) {
        Ok(batch) => batch.len(),
        Err(e) => return Response::error(Some(req.id), e.to_string()),
    };
    let mut resp = Response {
        id: Some(req.id),
        ..Default::default()
    };
    match req.op {
        Op::Predict => resp.probs = Some(vec![vec![1.0 / classes as f64; classes]; n]),
        Op::Loss => resp.loss = Some((classes as f64).ln()),
    }
    resp
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode = args.first().map(String::as_str).unwrap_or("uniform");
    let classes: usize = match args.get(1).map(|s| s.parse()) {
        None => 2,
        Some(Ok(c)) if c >= 1 => c,
        _ => {
            eprintln!("classes must be a positive integer");
            return ExitCode::from(1);
        }
    };
    if !matches!(mode, "uniform" | "wrong-id" | "error" | "garbage" | "exit" | "hang") {
        eprintln!("unknown mode {mode}");
        return ExitCode::from(1);
    }

    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        let req: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                let _ = reply(&mut out, &Response::error(None, e.to_string()));
                continue;
            }
        };
        let result = match mode {
            "uniform" => reply(&mut out, &uniform(&req, classes)),
            "wrong-id" => {
                let mut resp = uniform(&req, classes);
                resp.id = Some(req.id.wrapping_add(1));
                reply(&mut out, &resp)
            }
            "error" => reply(&mut out, &Response::error(Some(req.id), "fixture refuses")),
            "garbage" => writeln!(out, "this is not json").and_then(|_| out.flush()),
            "exit" => return ExitCode::from(7),
            _ => continue,
        };
        if result.is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
