//! Splits a concatenated stream of JPEG images (as produced by an MJPEG
//! `image2pipe` muxer) into individual files by walking the marker structure.

use std::io::{self, Read};

const SOI: u8 = 0xD8;
const EOI: u8 = 0xD9;
const SOS: u8 = 0xDA;

pub struct JpegSplitter<R> {
    inner: R,
    buf: Vec<u8>,
    eof: bool,
}

impl<R: Read> JpegSplitter<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            buf: Vec::with_capacity(1 << 16),
            eof: false,
        }
    }

    fn fill(&mut self) -> io::Result<bool> {
        if self.eof {
            return Ok(false);
        }
        let mut chunk = [0u8; 1 << 15];
        let n = self.inner.read(&mut chunk)?;
        if n == 0 {
            self.eof = true;
            return Ok(false);
        }
        self.buf.extend_from_slice(&chunk[..n]);
        Ok(true)
    }

    /// Next complete image, or `None` at a clean end of stream.
    pub fn next_image(&mut self) -> io::Result<Option<Vec<u8>>> {
        loop {
            match scan(&self.buf) {
                Scan::Complete(end) => {
                    let img: Vec<u8> = self.buf.drain(..end).collect();
                    return Ok(Some(img));
                }
                Scan::Garbage => {
                    return Err(io::Error::new(
                        io::ErrorKind::InvalidData,
                        "stream does not start with a JPEG SOI marker",
                    ))
                }
                Scan::NeedMore => {
                    if !self.fill()? {
                        if self.buf.is_empty() {
                            return Ok(None);
                        }
                        return Err(io::Error::new(
                            io::ErrorKind::UnexpectedEof,
                            "stream ended inside a JPEG image",
                        ));
                    }
                }
            }
        }
    }
}

enum Scan {
    Complete(usize),
    NeedMore,
    Garbage,
}

fn scan(b: &[u8]) -> Scan {
    if b.len() < 2 {
        return if b.is_empty() || b[0] == 0xFF {
            Scan::NeedMore
        } else {
            Scan::Garbage
        };
    }
    if b[0] != 0xFF || b[1] != SOI {
        return Scan::Garbage;
    }
    let mut i = 2;
    loop {
        // marker segment
        while i < b.len() && b[i] == 0xFF && b.get(i + 1) == Some(&0xFF) {
            i += 1; // fill bytes
        }
        if i + 1 >= b.len() {
            return Scan::NeedMore;
        }
        if b[i] != 0xFF {
            return Scan::Garbage;
        }
        let marker = b[i + 1];
        if marker == EOI {
            return Scan::Complete(i + 2);
        }
        if (0xD0..=0xD7).contains(&marker) || marker == 0x01 {
            i += 2;
            continue;
        }
        if i + 3 >= b.len() {
            return Scan::NeedMore;
        }
        let len = u16::from_be_bytes([b[i + 2], b[i + 3]]) as usize;
        i += 2 + len;
        if marker != SOS {
            continue;
        }
        // entropy-coded data runs until a marker other than a stuffed zero or a
        // restart marker
        loop {
            if i + 1 >= b.len() {
                return Scan::NeedMore;
            }
            if b[i] == 0xFF {
                let next = b[i + 1];
                if next == 0x00 || (0xD0..=0xD7).contains(&next) || next == 0xFF {
                    i += if next == 0xFF { 1 } else { 2 };
                    continue;
                }
                break;
            }
            i += 1;
        }
    }
}
