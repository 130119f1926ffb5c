//! Wire format shared by every transport.
//!
//! A frame is a 14-byte header — magic `UAFG`, version byte, tag byte, payload
//! length as u64 LE — followed by the payload. Payload fields appear in
//! declaration order; integers are u64 LE, reals f64 LE, arrays carry a u64
//! element count, matrices carry u64 rows and cols, and optional fields carry
//! a u8 presence flag.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"UAFG";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 14;

const TAG_SYN_BATCH: u8 = 1;
const TAG_FEEDBACK: u8 = 2;
const TAG_ROUND_CONTROL: u8 = 3;
const TAG_SITE_HELLO: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Directive {
    /// Subsequent synthetic batches train the discriminators.
    Begin,
    /// The next synthetic batch is the generator batch.
    End,
    Shutdown,
}

impl Directive {
    fn code(self) -> u8 {
        match self {
            Directive::Begin => 0,
            Directive::End => 1,
            Directive::Shutdown => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynBatch {
    pub round: u64,
    pub batch_id: u64,
    pub samples: Tensor,
    pub labels: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Feedback {
    pub round: u64,
    pub batch_id: u64,
    pub site: u64,
    pub predictions: Vec<f64>,
    pub gradients: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    SynBatch(SynBatch),
    Feedback(Feedback),
    RoundControl { round: u64, directive: Directive },
    SiteHello { site: u64, n: u64, class_counts: Option<Vec<u64>> },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::SynBatch(_) => "SynBatch",
            Message::Feedback(_) => "Feedback",
            Message::RoundControl { .. } => "RoundControl",
            Message::SiteHello { .. } => "SiteHello",
        }
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn matrix(&mut self, t: &Tensor) {
        let (r, c) = match t.shape() {
            [r, c] => (*r, *c),
            _ => (t.len(), 1),
        };
        self.u64(r as u64);
        self.u64(c as u64);
        for x in t.data() {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
    fn opt_u64s(&mut self, v: Option<impl ExactSizeIterator<Item = u64>>) {
        match v {
            None => self.u8(0),
            Some(it) => {
                self.u8(1);
                self.u64(it.len() as u64);
                for x in it {
                    self.u64(x);
                }
            }
        }
    }
}

pub fn encode_message(msg: &Message) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(64));
    let tag = match msg {
        Message::SynBatch(b) => {
            w.u64(b.round);
            w.u64(b.batch_id);
            w.matrix(&b.samples);
            w.opt_u64s(b.labels.as_ref().map(|l| l.iter().map(|&y| u64::from(y))));
            TAG_SYN_BATCH
        }
        Message::Feedback(f) => {
            w.u64(f.round);
            w.u64(f.batch_id);
            w.u64(f.site);
            w.f64s(&f.predictions);
            w.matrix(&f.gradients);
            TAG_FEEDBACK
        }
        Message::RoundControl { round, directive } => {
            w.u64(*round);
            w.u8(directive.code());
            TAG_ROUND_CONTROL
        }
        Message::SiteHello { site, n, class_counts } => {
            w.u64(*site);
            w.u64(*n);
            w.opt_u64s(class_counts.as_ref().map(|c| c.iter().copied()));
            TAG_SITE_HELLO
        }
    };
    let payload = w.0;
    let mut frame = Vec::with_capacity(HEADER_LEN + payload.len());
    frame.extend_from_slice(&MAGIC);
    frame.push(VERSION);
    frame.push(tag);
    frame.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    frame.extend_from_slice(&payload);
    frame
}

/// Total frame length announced by a header, once at least `HEADER_LEN` bytes
/// are available.
pub fn frame_len(header: &[u8]) -> Result<Option<usize>> {
    if header.len() < HEADER_LEN {
        return Ok(None);
    }
    check_header(header)?;
    let len = u64::from_le_bytes(header[6..14].try_into().expect("8 bytes"));
    usize::try_from(len)
        .ok()
        .and_then(|l| l.checked_add(HEADER_LEN))
        .map(Some)
        .ok_or_else(|| Error::Decode { offset: 6, detail: format!("payload length {len} too large") })
}

fn check_header(bytes: &[u8]) -> Result<()> {
    if bytes[0..4] != MAGIC {
        return Err(Error::Decode { offset: 0, detail: format!("bad magic {:02x?}", &bytes[0..4]) });
    }
    if bytes[4] != VERSION {
        return Err(Error::Decode { offset: 4, detail: format!("unsupported version {}", bytes[4]) });
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Decode {
            offset: self.pos,
            detail: format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }
    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn count(&mut self, what: &str, elem: usize) -> Result<usize> {
        let at = self.pos;
        let n = self.u64(what)?;
        let left = (self.bytes.len() - self.pos) / elem;
        usize::try_from(n).ok().filter(|&n| n <= left).ok_or_else(|| Error::Decode {
            offset: at,
            detail: format!("{what} count {n} exceeds remaining payload"),
        })
    }
    fn f64_body(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        Ok(self.take(n * 8, what)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }
    fn f64s(&mut self, what: &str) -> Result<Vec<f64>> {
        let n = self.count(what, 8)?;
        self.f64_body(n, what)
    }
    fn matrix(&mut self, what: &str) -> Result<Tensor> {
        let at = self.pos;
        let rows = self.u64(what)?;
        let cols = self.u64(what)?;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| usize::try_from(n).ok())
            .filter(|&n| n <= (self.bytes.len() - self.pos) / 8)
            .ok_or_else(|| Error::Decode { offset: at, detail: format!("{what} dims {rows}×{cols} exceed payload") })?;
        let data = self.f64_body(n, what)?;
        Tensor::new(vec![rows as usize, cols as usize], data)
    }
    fn opt_u64s(&mut self, what: &str) -> Result<Option<Vec<u64>>> {
        let at = self.pos;
        match self.u8(what)? {
            0 => Ok(None),
            1 => {
                let n = self.count(what, 8)?;
                (0..n).map(|_| self.u64(what)).collect::<Result<_>>().map(Some)
            }
            f => Err(Error::Decode { offset: at, detail: format!("bad presence flag {f} for {what}") }),
        }
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<Message> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Decode { offset: bytes.len(), detail: format!("truncated header ({} bytes)", bytes.len()) });
    }
    let total = frame_len(bytes)?.expect("header present");
    if bytes.len() != total {
        return Err(Error::Decode {
            offset: bytes.len().min(total),
            detail: format!("frame is {} bytes, header announces {total}", bytes.len()),
        });
    }
    let tag = bytes[5];
    let mut r = Reader { bytes, pos: HEADER_LEN };
    let msg = match tag {
        TAG_SYN_BATCH => {
            let round = r.u64("round")?;
            let batch_id = r.u64("batch id")?;
            let samples = r.matrix("samples")?;
            let at = r.pos;
            let labels = r
                .opt_u64s("labels")?
                .map(|l| {
                    l.into_iter()
                        .map(|y| u32::try_from(y).map_err(|_| Error::Decode { offset: at, detail: format!("label {y} out of range") }))
                        .collect::<Result<Vec<u32>>>()
                })
                .transpose()?;
            Message::SynBatch(SynBatch { round, batch_id, samples, labels })
        }
        TAG_FEEDBACK => Message::Feedback(Feedback {
            round: r.u64("round")?,
            batch_id: r.u64("batch id")?,
            site: r.u64("site id")?,
            predictions: r.f64s("predictions")?,
            gradients: r.matrix("gradients")?,
        }),
        TAG_ROUND_CONTROL => {
            let round = r.u64("round")?;
            let at = r.pos;
            let directive = match r.u8("directive")? {
                0 => Directive::Begin,
                1 => Directive::End,
                2 => Directive::Shutdown,
                d => return Err(Error::Decode { offset: at, detail: format!("unknown directive {d}") }),
            };
            Message::RoundControl { round, directive }
        }
        TAG_SITE_HELLO => Message::SiteHello { site: r.u64("site id")?, n: r.u64("n")?, class_counts: r.opt_u64s("class counts")? },
        t => return Err(Error::Decode { offset: 5, detail: format!("unknown tag {t}") }),
    };
    if r.pos != bytes.len() {
        return Err(Error::Decode { offset: r.pos, detail: format!("{} trailing payload bytes", bytes.len() - r.pos) });
    }
    Ok(msg)
}
