//! Line-delimited JSON protocol for models living in another process.
//!
//! Request: `{"id", "op": "predict"|"loss", "shape": [n,h,w,c], "data", "labels"?}`
//! where `data` is base64 of little-endian f32 pixels in `n,h,w,c` order.
//! Response: `{"id", "probs": [[..]]}`, `{"id", "loss": x}` or `{"id", "error": msg}`.
//!
//! Pixels travel as f32, so a remote model sees inputs rounded to f32. Its
//! predictions match an in-process call on the same rounded images exactly,
//! and differ from the unrounded call by the model's response to a relative
//! input change of at most 2^-24.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::oracle::{validate_probabilities, PredictionOracle};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Predict,
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub op: Op,
    pub shape: [usize; 4],
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Response {
    pub fn error(id: Option<u64>, msg: impl Into<String>) -> Self {
        Self {
            id,
            error: Some(msg.into()),
            ..Default::default()
        }
    }
}

/// Packs a uniform batch as `(shape, base64 data)`.
pub fn encode_batch(batch: &[Image]) -> Result<([usize; 4], String)> {
    let (h, w, c) = crate::image::check_uniform(batch)?;
    let mut bytes = Vec::with_capacity(batch.len() * h * w * c * 4);
    for img in batch {
        for p in 0..h * w {
            for ch in 0..c {
                bytes.extend_from_slice(&(img.channel(ch)[p] as f32).to_le_bytes());
            }
        }
    }
    Ok(([batch.len(), h, w, c], STANDARD.encode(bytes)))
}

pub fn decode_batch(shape: [usize; 4], data: &str) -> Result<Vec<Image>> {
    let [n, h, w, c] = shape;
    let bytes = STANDARD
        .decode(data)
        .map_err(|e| Error::Protocol(format!("bad base64 payload: {e}")))?;
    let expected = n
        .checked_mul(h * w * c)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Protocol(format!("shape {shape:?} overflows")))?;
    if bytes.len() != expected {
        return Err(Error::Protocol(format!(
            "shape {shape:?} needs {expected} bytes, payload has {}",
            bytes.len()
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
        .collect();
    values
        .chunks_exact((h * w * c).max(1))
        .take(n)
        .map(|px| {
            let planes = (0..c)
                .map(|ch| (0..h * w).map(|p| px[p * c + ch]).collect())
                .collect();
            Image::from_planes(h, w, planes)
        })
        .collect()
}

/// Same images with every pixel rounded through f32, as a remote model sees them.
pub fn wire_rounded(batch: &[Image]) -> Result<Vec<Image>> {
    batch
        .iter()
        .map(|img| {
            let (h, w, c) = img.dims();
            Image::new(h, w, c, img.data().iter().map(|&v| v as f32 as f64).collect())
        })
        .collect()
}

fn answer<O: PredictionOracle + ?Sized>(oracle: &O, req: &Request) -> Result<Response> {
    let batch = decode_batch(req.shape, &req.data)?;
    let mut resp = Response {
        id: Some(req.id),
        ..Default::default()
    };
    match req.op {
        Op::Predict => resp.probs = Some(oracle.predict(&batch)?),
        Op::Loss => {
            let labels = req
                .labels
                .as_deref()
                .ok_or_else(|| Error::Protocol("loss request without labels".into()))?;
            resp.loss = Some(oracle.loss(&batch, labels)?);
        }
    }
    Ok(resp)
}

/// Answers requests from `input` until end of stream.
pub fn serve<O, R, W>(oracle: &O, input: R, mut output: W) -> Result<()>
where
    O: PredictionOracle + ?Sized,
    R: BufRead,
    W: Write,
{
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<Request>(&line) {
            Ok(req) => answer(oracle, &req).unwrap_or_else(|e| Response::error(Some(req.id), e.to_string())),
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_u64()));
                Response::error(id, format!("malformed request: {e}"))
            }
        };
        serde_json::to_writer(&mut output, &resp).map_err(|e| Error::Protocol(e.to_string()))?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    broken: Option<String>,
}

impl Worker {
    fn spawn(argv: &[String]) -> Result<Self> {
        let (program, args) = argv
            .split_first()
            .ok_or_else(|| Error::invalid("empty oracle command"))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::Protocol(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            broken: None,
        })
    }

    fn exit_note(&mut self) -> String {
        match self.child.try_wait() {
            Ok(Some(status)) => format!("child exited ({status})"),
            _ => "child closed its output".into(),
        }
    }

    fn exchange(&mut self, req: &Request, timeout: Duration) -> Result<Response> {
        if let Some(why) = &self.broken {
            return Err(Error::Protocol(format!("worker unusable after earlier failure: {why}")));
        }
        let result = self.exchange_inner(req, timeout);
        if let Err(e) = &result {
            self.broken = Some(e.to_string());
            let _ = self.child.kill();
        }
        result
    }

    fn exchange_inner(&mut self, req: &Request, timeout: Duration) -> Result<Response> {
        let mut line = serde_json::to_string(req).map_err(|e| Error::Protocol(e.to_string()))?;
        line.push('\n');
        if self.stdin.write_all(line.as_bytes()).and_then(|_| self.stdin.flush()).is_err() {
            return Err(Error::Protocol(format!("cannot write request: {}", self.exit_note())));
        }
        let reply = match self.lines.recv_timeout(timeout) {
            Ok(Ok(reply)) => reply,
            Ok(Err(e)) => return Err(Error::Protocol(format!("cannot read reply: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                return Err(Error::Protocol(format!(
                    "no reply to request {} within {:?}",
                    req.id, timeout
                )))
            }
            Err(RecvTimeoutError::Disconnected) => {
                thread::sleep(Duration::from_millis(20));
                return Err(Error::Protocol(self.exit_note()));
            }
        };
        let resp: Response = serde_json::from_str(&reply)
            .map_err(|e| Error::Protocol(format!("malformed reply {reply:?}: {e}")))?;
        if resp.id != Some(req.id) {
            return Err(Error::Protocol(format!(
                "reply id {:?} does not match request id {}",
                resp.id, req.id
            )));
        }
        Ok(resp)
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A pool of child processes speaking the protocol. Each child handles one
/// request at a time; the pool spreads concurrent calls across children.
pub struct SubprocessOracle {
    argv: Vec<String>,
    workers: Vec<Mutex<Worker>>,
    cursor: AtomicUsize,
    next_id: AtomicU64,
    timeout: Duration,
}

impl SubprocessOracle {
    pub fn spawn(argv: &[String], processes: usize) -> Result<Self> {
        if processes == 0 {
            return Err(Error::invalid("need at least one oracle process"));
        }
        let workers = (0..processes)
            .map(|_| Worker::spawn(argv).map(Mutex::new))
            .collect::<Result<_>>()?;
        Ok(Self {
            argv: argv.to_vec(),
            workers,
            cursor: AtomicUsize::new(0),
            next_id: AtomicU64::new(1),
            timeout: DEFAULT_TIMEOUT,
        })
    }

    /// Splits `command` on whitespace.
    pub fn spawn_command(command: &str, processes: usize) -> Result<Self> {
        let argv: Vec<String> = command.split_whitespace().map(String::from).collect();
        Self::spawn(&argv, processes)
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn call(&self, op: Op, batch: &[Image], labels: Option<&[usize]>) -> Result<Response> {
        let (shape, data) = encode_batch(batch)?;
        let req = Request {
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            op,
            shape,
            data,
            labels: labels.map(<[usize]>::to_vec),
        };
        let start = self.cursor.fetch_add(1, Ordering::Relaxed);
        let n = self.workers.len();
        let mut guard = (0..n)
            .find_map(|k| self.workers[(start + k) % n].try_lock().ok())
            .unwrap_or_else(|| {
                self.workers[start % n]
                    .lock()
                    .unwrap_or_else(|poison| poison.into_inner())
            });
        let resp = guard.exchange(&req, self.timeout)?;
        match resp.error {
            Some(msg) => Err(Error::Protocol(format!("child reported: {msg}"))),
            None => Ok(resp),
        }
    }
}

impl PredictionOracle for SubprocessOracle {
    fn id(&self) -> String {
        format!("subprocess:{}", self.argv.join(" "))
    }

    fn predict(&self, batch: &[Image]) -> Result<Vec<Vec<f64>>> {
        if batch.is_empty() {
            return Ok(Vec::new());
        }
        let probs = self
            .call(Op::Predict, batch, None)?
            .probs
            .ok_or_else(|| Error::Protocol("predict reply without probs".into()))?;
        validate_probabilities(&probs, batch.len())?;
        Ok(probs)
    }

    fn loss(&self, batch: &[Image], labels: &[usize]) -> Result<f64> {
        let loss = self
            .call(Op::Loss, batch, Some(labels))?
            .loss
            .ok_or_else(|| Error::Protocol("loss reply without loss".into()))?;
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(Error::Protocol(format!("non-finite loss {loss}")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_codec_round_trip() {
        let a = Image::new(2, 2, 3, (0..12).map(|k| k as f64 / 8.0).collect()).unwrap();
        let b = Image::new(2, 2, 3, (0..12).map(|k| 1.0 - k as f64 / 16.0).collect()).unwrap();
        let (shape, data) = encode_batch(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(shape, [2, 2, 2, 3]);
        assert_eq!(decode_batch(shape, &data).unwrap(), vec![a, b]);
        assert!(decode_batch([3, 2, 2, 3], &data).is_err());
    }

    #[test]
    fn wire_order_is_pixel_major() {
        let img = Image::new(2, 2, 3, (0..12).map(|k| k as f64).collect()).unwrap();
        let (_, data) = encode_batch(&[img]).unwrap();
        let floats: Vec<f32> = STANDARD
            .decode(data)
            .unwrap()
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        assert_eq!(&floats[..6], &[0.0, 4.0, 8.0, 1.0, 5.0, 9.0]);
    }
}
