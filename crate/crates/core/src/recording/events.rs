//! Fixed-layout binary event stream.
//!
//! One record is 16 bytes, little-endian: u64 t_ns, u16 x, u16 y, u8 polarity
//! (1 = ON, 0 = OFF), 3 zero padding bytes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::types::{Event, Polarity};

pub const EVENT_RECORD_SIZE: usize = 16;

pub fn encode_event(e: &Event, out: &mut [u8; EVENT_RECORD_SIZE]) {
    out[0..8].copy_from_slice(&e.t_ns.to_le_bytes());
    out[8..10].copy_from_slice(&e.x.to_le_bytes());
    out[10..12].copy_from_slice(&e.y.to_le_bytes());
    out[12] = e.polarity.as_byte();
    out[13] = 0;
    out[14] = 0;
    out[15] = 0;
}

pub fn decode_event(buf: &[u8; EVENT_RECORD_SIZE]) -> Result<Event, String> {
    let t_ns = u64::from_le_bytes(buf[0..8].try_into().unwrap());
    let x = u16::from_le_bytes(buf[8..10].try_into().unwrap());
    let y = u16::from_le_bytes(buf[10..12].try_into().unwrap());
    let polarity = Polarity::from_byte(buf[12])
        .ok_or_else(|| format!("invalid polarity byte {}", buf[12]))?;
    Ok(Event {
        t_ns,
        x,
        y,
        polarity,
    })
}

/// Streaming reader yielding chunks of events. The produced event sequence is
/// independent of the chunk size.
pub struct EventChunkReader {
    reader: BufReader<File>,
    chunk_size: usize,
    records_total: u64,
    records_read: u64,
    done: bool,
}

impl EventChunkReader {
    pub fn open(path: &Path, chunk_size: usize) -> std::io::Result<Self> {
        assert!(chunk_size > 0, "chunk size must be positive");
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        Ok(Self {
            reader: BufReader::new(file),
            chunk_size,
            records_total: len / EVENT_RECORD_SIZE as u64,
            records_read: 0,
            done: false,
        })
    }

    /// Total number of whole records in the file. A trailing partial record is
    /// reported as an error during iteration, not silently dropped.
    pub fn record_count(&self) -> u64 {
        self.records_total
    }
}

impl Iterator for EventChunkReader {
    type Item = std::io::Result<Vec<Event>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut chunk = Vec::with_capacity(self.chunk_size);
        let mut buf = [0u8; EVENT_RECORD_SIZE];
        while chunk.len() < self.chunk_size {
            match read_record(&mut self.reader, &mut buf) {
                Ok(RecordRead::Full) => match decode_event(&buf) {
                    Ok(e) => {
                        self.records_read += 1;
                        chunk.push(e);
                    }
                    Err(msg) => {
                        self.done = true;
                        return Some(Err(std::io::Error::new(
                            std::io::ErrorKind::InvalidData,
                            format!("record {}: {msg}", self.records_read),
                        )));
                    }
                },
                Ok(RecordRead::Eof) => {
                    self.done = true;
                    if chunk.is_empty() {
                        return None;
                    }
                    return Some(Ok(chunk));
                }
                Ok(RecordRead::Truncated) => {
                    self.done = true;
                    return Some(Err(std::io::Error::new(
                        std::io::ErrorKind::UnexpectedEof,
                        format!("truncated record at offset {}", self.records_read * 16),
                    )));
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
        Some(Ok(chunk))
    }
}

enum RecordRead {
    Full,
    Eof,
    Truncated,
}

fn read_record<R: Read>(r: &mut R, buf: &mut [u8; EVENT_RECORD_SIZE]) -> std::io::Result<RecordRead> {
    let mut filled = 0;
    while filled < EVENT_RECORD_SIZE {
        let n = r.read(&mut buf[filled..])?;
        if n == 0 {
            return Ok(if filled == 0 {
                RecordRead::Eof
            } else {
                RecordRead::Truncated
            });
        }
        filled += n;
    }
    Ok(RecordRead::Full)
}

/// Single-owner event stream writer enforcing time order.
pub struct EventWriter {
    writer: BufWriter<File>,
    last_t: Option<u64>,
    count: u64,
}

impl EventWriter {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            writer: BufWriter::new(File::create(path)?),
            last_t: None,
            count: 0,
        })
    }

    pub fn write(&mut self, e: &Event) -> std::io::Result<()> {
        if let Some(last) = self.last_t {
            if e.t_ns < last {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidInput,
                    format!(
                        "events out of order at record {}: {} after {}",
                        self.count, e.t_ns, last
                    ),
                ));
            }
        }
        let mut buf = [0u8; EVENT_RECORD_SIZE];
        encode_event(e, &mut buf);
        self.writer.write_all(&buf)?;
        self.last_t = Some(e.t_ns);
        self.count += 1;
        Ok(())
    }

    pub fn write_all<'a>(&mut self, events: impl IntoIterator<Item = &'a Event>) -> std::io::Result<()> {
        for e in events {
            self.write(e)?;
        }
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(mut self) -> std::io::Result<u64> {
        self.writer.flush()?;
        Ok(self.count)
    }
}
