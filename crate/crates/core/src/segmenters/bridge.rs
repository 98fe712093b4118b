//! Client side of the model bridge protocol.
//!
//! Frames are newline-delimited JSON over TCP or a child process's stdio.
//! Every request gets exactly one response, in order:
//!
//! ```text
//! {"type":"init","height":H,"width":W,"image":b64}        -> {"type":"ready","input_mode":..,"supports_gradients":..}
//! {"type":"predict","clicks":[..],"prev_mask":b64|null}    -> {"type":"prediction","map":b64}
//! {"type":"grad","clicks":[..],"gt":b64,"direction":"min"|"max","active":i}
//!                                                          -> {"type":"gradient","dxy":[gx,gy]}
//! any request                                              -> {"type":"error","code":..,"message":..}
//! ```
//!
//! Maps are row-major little-endian `f32`, masks one byte per pixel (0/1),
//! images row-major interleaved RGB `f32`; all base64 encoded. A gradient
//! response carries `d(sign * dice) / d(x, y)` for the active click, with
//! the soft Dice smoothing fixed at 1.0. The interaction location term is
//! added on this side.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{DiskProfile, Image, InputMode, Segmenter, SegmenterCapabilities, SegmenterRequest};
use crate::attack::Direction;
use crate::clickgen::{Click, Polarity};
use crate::maskops::{BinaryMask, ProbMap};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireClick {
    pub x: f64,
    pub y: f64,
    pub sign: i8,
}

impl From<&Click> for WireClick {
    fn from(c: &Click) -> Self {
        WireClick {
            x: c.x,
            y: c.y,
            sign: c.polarity.sign(),
        }
    }
}

impl WireClick {
    pub fn to_click(self, radius: f64) -> Click {
        Click {
            x: self.x,
            y: self.y,
            polarity: if self.sign >= 0 {
                Polarity::Positive
            } else {
                Polarity::Negative
            },
            radius,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Request {
    Init {
        height: usize,
        width: usize,
        image: String,
    },
    Predict {
        clicks: Vec<WireClick>,
        prev_mask: Option<String>,
    },
    Grad {
        clicks: Vec<WireClick>,
        gt: String,
        direction: Direction,
        active: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Ready {
        input_mode: InputMode,
        supports_gradients: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        native_resolution: Option<usize>,
    },
    Prediction {
        map: String,
    },
    Gradient {
        dxy: [f64; 2],
    },
    Error {
        code: String,
        message: String,
    },
}

pub fn encode_f32(values: &[f32]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

pub fn decode_f32(text: &str, expected_len: usize) -> Result<Vec<f32>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| protocol_error(format!("bad base64: {e}")))?;
    if bytes.len() != expected_len * 4 {
        return Err(protocol_error(format!(
            "payload has {} bytes, expected {}",
            bytes.len(),
            expected_len * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect())
}

pub fn encode_map(map: &ProbMap) -> String {
    let v: Vec<f32> = map.data().iter().map(|&x| x as f32).collect();
    encode_f32(&v)
}

pub fn decode_map(text: &str, width: usize, height: usize) -> Result<ProbMap> {
    let v = decode_f32(text, width * height)?;
    if let Some(bad) = v.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(protocol_error(format!("map value {bad} outside [0, 1]")));
    }
    ProbMap::from_vec(width, height, v.into_iter().map(f64::from).collect())
}

pub fn encode_mask(mask: &BinaryMask) -> String {
    let bytes: Vec<u8> = mask.data().iter().map(|&b| b as u8).collect();
    STANDARD.encode(bytes)
}

pub fn decode_mask(text: &str, width: usize, height: usize) -> Result<BinaryMask> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| protocol_error(format!("bad base64: {e}")))?;
    if bytes.len() != width * height {
        return Err(protocol_error(format!(
            "mask payload has {} bytes, expected {}",
            bytes.len(),
            width * height
        )));
    }
    BinaryMask::from_vec(width, height, bytes.into_iter().map(|b| b != 0).collect())
}

pub fn encode_image(image: &Image) -> String {
    let v: Vec<f32> = image.data().iter().map(|&x| x as f32).collect();
    encode_f32(&v)
}

pub fn decode_image(text: &str, width: usize, height: usize) -> Result<Image> {
    let v = decode_f32(text, width * height * 3)?;
    Image::new(width, height, v.into_iter().map(f64::from).collect())
}

fn protocol_error(message: String) -> Error {
    Error::Bridge {
        code: "protocol".into(),
        message,
    }
}

struct Connection {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
    image: Option<Image>,
    capabilities: Option<SegmenterCapabilities>,
}

impl Connection {
    fn call(&mut self, request: &Request) -> Result<Response> {
        let mut line = serde_json::to_string(request)?;
        line.push('\n');
        self.writer
            .write_all(line.as_bytes())
            .and_then(|_| self.writer.flush())
            .map_err(|e| protocol_error(format!("write failed: {e}")))?;
        let mut buf = String::new();
        let n = self
            .reader
            .read_line(&mut buf)
            .map_err(|e| protocol_error(format!("read failed: {e}")))?;
        if n == 0 {
            return Err(protocol_error("connection closed".into()));
        }
        match serde_json::from_str(buf.trim_end())? {
            Response::Error { code, message } => Err(Error::Bridge { code, message }),
            other => Ok(other),
        }
    }

    fn ensure_image(&mut self, image: &Image) -> Result<SegmenterCapabilities> {
        if let (Some(cached), Some(caps)) = (&self.image, self.capabilities) {
            if cached == image {
                return Ok(caps);
            }
        }
        let response = self.call(&Request::Init {
            height: image.height(),
            width: image.width(),
            image: encode_image(image),
        })?;
        match response {
            Response::Ready {
                input_mode,
                supports_gradients,
                native_resolution,
            } => {
                let caps = SegmenterCapabilities {
                    input_mode,
                    supports_gradients,
                    native_resolution,
                };
                self.image = Some(image.clone());
                self.capabilities = Some(caps);
                Ok(caps)
            }
            other => Err(protocol_error(format!("expected ready, got {other:?}"))),
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// A segmenter served by an external process. One connection, one request
/// in flight at a time.
pub struct BridgeSegmenter {
    conn: Mutex<Connection>,
    disk: DiskProfile,
    capabilities: SegmenterCapabilities,
}

impl BridgeSegmenter {
    /// Wraps an established stream pair and performs the init handshake.
    pub fn from_streams(
        reader: impl BufRead + Send + 'static,
        writer: impl Write + Send + 'static,
        image: &Image,
        disk: DiskProfile,
    ) -> Result<Self> {
        Self::with_connection(
            Connection {
                reader: Box::new(reader),
                writer: Box::new(writer),
                child: None,
                image: None,
                capabilities: None,
            },
            image,
            disk,
        )
    }

    pub fn connect_tcp(addr: impl ToSocketAddrs, image: &Image, disk: DiskProfile) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| protocol_error(format!("connect failed: {e}")))?;
        let reader = stream
            .try_clone()
            .map_err(|e| protocol_error(format!("socket clone failed: {e}")))?;
        Self::from_streams(BufReader::new(reader), stream, image, disk)
    }

    /// Spawns `program args..` and talks to it over stdin / stdout.
    pub fn spawn(program: &str, args: &[String], image: &Image, disk: DiskProfile) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| protocol_error(format!("spawn {program} failed: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Self::with_connection(
            Connection {
                reader: Box::new(BufReader::new(stdout)),
                writer: Box::new(stdin),
                child: Some(child),
                image: None,
                capabilities: None,
            },
            image,
            disk,
        )
    }

    fn with_connection(mut conn: Connection, image: &Image, disk: DiskProfile) -> Result<Self> {
        let capabilities = conn.ensure_image(image)?;
        Ok(BridgeSegmenter {
            conn: Mutex::new(conn),
            disk,
            capabilities,
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|e| e.into_inner())
    }
}

impl Segmenter for BridgeSegmenter {
    fn capabilities(&self) -> SegmenterCapabilities {
        self.capabilities
    }

    fn disk(&self) -> DiskProfile {
        self.disk
    }

    fn predict(&self, req: &SegmenterRequest<'_>) -> Result<ProbMap> {
        let mut conn = self.lock();
        conn.ensure_image(req.image)?;
        let response = conn.call(&Request::Predict {
            clicks: req.clicks.iter().map(WireClick::from).collect(),
            prev_mask: req.prev_mask.map(encode_map),
        })?;
        match response {
            Response::Prediction { map } => decode_map(&map, req.image.width(), req.image.height()),
            other => Err(protocol_error(format!("expected prediction, got {other:?}"))),
        }
    }

    fn dice_gradient(
        &self,
        req: &SegmenterRequest<'_>,
        gt: &BinaryMask,
        direction: Direction,
        active: usize,
    ) -> Result<(f64, (f64, f64))> {
        if !self.capabilities.supports_gradients {
            return Err(Error::GradientsUnsupported);
        }
        let pred = self.predict(req)?;
        let dice = crate::attack::dice_loss(&pred, gt)?;
        let response = self.lock().call(&Request::Grad {
            clicks: req.clicks.iter().map(WireClick::from).collect(),
            gt: encode_mask(gt),
            direction,
            active,
        })?;
        match response {
            Response::Gradient { dxy } => {
                if !(dxy[0].is_finite() && dxy[1].is_finite()) {
                    return Err(Error::NonFiniteGradient { click: active });
                }
                Ok((direction.sign() * dice, (dxy[0], dxy[1])))
            }
            other => Err(protocol_error(format!("expected gradient, got {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_payloads_roundtrip_bit_exact() {
        let values = [0.0f32, -0.0, 1.5, f32::MIN_POSITIVE, 3.0e-39, 0.1];
        let back = decode_f32(&encode_f32(&values), values.len()).unwrap();
        assert!(values.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(decode_f32(&encode_f32(&values), 5).is_err());
        assert!(decode_f32("not base64!", 1).is_err());
    }

    #[test]
    fn maps_masks_and_images_roundtrip() {
        let map = ProbMap::from_vec(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125]).unwrap();
        assert_eq!(decode_map(&encode_map(&map), 3, 2).unwrap(), map);
        let mask = BinaryMask::from_fn(4, 3, |x, y| (x + y) % 2 == 0);
        assert_eq!(decode_mask(&encode_mask(&mask), 4, 3).unwrap(), mask);
        let image = Image::from_fn(2, 2, |x, y| [x as f64 * 0.5, y as f64 * 0.25, 0.125]);
        assert_eq!(decode_image(&encode_image(&image), 2, 2).unwrap(), image);
        assert!(decode_mask(&encode_mask(&mask), 3, 3).is_err());
    }

    #[test]
    fn out_of_range_map_values_are_protocol_errors() {
        let bad = encode_f32(&[0.5, 1.5]);
        match decode_map(&bad, 2, 1) {
            Err(Error::Bridge { code, .. }) => assert_eq!(code, "protocol"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wire_format_is_tagged_json() {
        let req = Request::Predict {
            clicks: vec![WireClick { x: 1.0, y: 2.5, sign: -1 }],
            prev_mask: None,
        };
        let json = serde_json::to_value(&req).unwrap();
        assert_eq!(json["type"], "predict");
        assert_eq!(json["clicks"][0]["sign"], -1);
        let resp: Response = serde_json::from_str(
            r#"{"type":"ready","input_mode":"raw_coordinates","supports_gradients":false}"#,
        )
        .unwrap();
        assert_eq!(
            resp,
            Response::Ready {
                input_mode: InputMode::RawCoordinates,
                supports_gradients: false,
                native_resolution: None
            }
        );
    }

    #[test]
    fn wire_clicks_keep_polarity() {
        let c = Click { x: 3.0, y: 4.0, polarity: Polarity::Negative, radius: 5.0 };
        let w = WireClick::from(&c);
        assert_eq!(w.sign, -1);
        assert_eq!(w.to_click(5.0), c);
        assert_eq!(WireClick { x: 0.0, y: 0.0, sign: 1 }.to_click(2.0).polarity, Polarity::Positive);
    }
}
