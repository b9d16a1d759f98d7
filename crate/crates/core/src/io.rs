//! On-disk formats: the `DIFFMEL1` tensor container and the schedule table.
//!
//! Tensor files are a single ASCII header line
//! `DIFFMEL1 <channels> <frames> f32` followed by `channels × frames`
//! little-endian `f32` values in row-major order.

use std::io::{BufRead, Write};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::schedule::{NoiseSchedule, ScheduleKind};
use crate::tensor::SampleTensor;

pub const TENSOR_MAGIC: &str = "DIFFMEL1";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub channels: usize,
    pub frames: usize,
    pub values: Vec<f32>,
}

impl TensorFile {
    pub fn from_tensor(t: &SampleTensor) -> Self {
        let (channels, frames) = t.shape();
        Self {
            channels,
            frames,
            values: t.as_array().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn from_matrix(m: &Array2<f64>) -> Result<Self> {
        let (channels, frames) = m.dim();
        if channels == 0 || frames == 0 {
            return Err(Error::invalid("cannot store an empty tensor"));
        }
        Ok(Self {
            channels,
            frames,
            values: m.iter().map(|&v| v as f32).collect(),
        })
    }

    pub fn to_tensor(&self) -> Result<SampleTensor> {
        SampleTensor::from_shape_vec(
            self.channels,
            self.frames,
            self.values.iter().map(|&v| f64::from(v)).collect(),
        )
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{TENSOR_MAGIC} {} {} f32", self.channels, self.frames)?;
        let mut payload = Vec::with_capacity(self.values.len() * 4);
        for v in &self.values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&payload)?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(32 + self.values.len() * 4);
        self.write_to(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let fields: Vec<&str> = header.trim_end_matches('\n').split(' ').collect();
        let [magic, channels, frames, dtype] = fields[..] else {
            return Err(Error::Parse(format!(
                "bad tensor header `{}`",
                header.trim_end()
            )));
        };
        if magic != TENSOR_MAGIC {
            return Err(Error::Parse(format!("bad magic `{magic}`")));
        }
        if dtype != "f32" {
            return Err(Error::Parse(format!("unsupported dtype `{dtype}`")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::Parse(format!("tensor dim `{s}`: {e}")))
        };
        let (channels, frames) = (parse(channels)?, parse(frames)?);
        if channels == 0 || frames == 0 {
            return Err(Error::Parse("tensor dims must be > 0".into()));
        }
        let expected = channels
            .checked_mul(frames)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Parse("tensor dims overflow".into()))?;
        let mut payload = Vec::with_capacity(expected);
        r.read_to_end(&mut payload)?;
        if payload.len() != expected {
            return Err(Error::Parse(format!(
                "payload is {} bytes, expected {expected}",
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            channels,
            frames,
            values,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }
}

/// Header `T beta_start beta_end kind`, then one β per line.
pub fn write_schedule<W: Write>(schedule: &NoiseSchedule, mut w: W) -> Result<()> {
    writeln!(
        w,
        "{} {:?} {:?} {}",
        schedule.num_steps(),
        schedule.beta_start(),
        schedule.beta_end(),
        schedule.kind()
    )?;
    for b in schedule.betas() {
        writeln!(w, "{b:?}")?;
    }
    Ok(())
}

pub fn schedule_to_string(schedule: &NoiseSchedule) -> String {
    let mut buf = Vec::new();
    write_schedule(schedule, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("schedule text is ASCII")
}

pub fn parse_schedule(text: &str) -> Result<NoiseSchedule> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty schedule file".into()))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [t, start, end, kind] = fields[..] else {
        return Err(Error::Parse(format!("bad schedule header `{header}`")));
    };
    let num_steps: usize = t
        .parse()
        .map_err(|e| Error::Parse(format!("T `{t}`: {e}")))?;
    let float = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::Parse(format!("`{s}`: {e}")))
    };
    let (beta_start, beta_end) = (float(start)?, float(end)?);
    let kind: ScheduleKind = kind.parse()?;
    let betas = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| float(l.trim()))
        .collect::<Result<Vec<_>>>()?;
    if betas.len() != num_steps {
        return Err(Error::Parse(format!(
            "header says T = {num_steps} but {} betas follow",
            betas.len()
        )));
    }
    let schedule = NoiseSchedule::from_betas(&betas)?;
    match kind {
        ScheduleKind::Linear => {
            let rebuilt = NoiseSchedule::linear(num_steps, beta_start, beta_end)?;
            if rebuilt.betas() != schedule.betas() {
                return Err(Error::Parse("betas do not match the linear header".into()));
            }
            Ok(rebuilt)
        }
        ScheduleKind::Custom => Ok(schedule),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_header_and_payload() {
        let t = SampleTensor::from_shape_vec(2, 2, vec![1.0, -2.0, 0.5, 3.25]).unwrap();
        let bytes = TensorFile::from_tensor(&t).to_bytes();
        assert!(bytes.starts_with(b"DIFFMEL1 2 2 f32\n"));
        assert_eq!(bytes.len(), 17 + 16);
        assert_eq!(&bytes[17..21], &1.0f32.to_le_bytes());
        let back = TensorFile::from_bytes(&bytes).unwrap().to_tensor().unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn tensor_rejects_corruption() {
        let t = SampleTensor::zeros(2, 3);
        let bytes = TensorFile::from_tensor(&t).to_bytes();
        assert!(TensorFile::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(TensorFile::from_bytes(b"DIFFMEL2 1 1 f32\n\0\0\0\0").is_err());
        assert!(TensorFile::from_bytes(b"DIFFMEL1 1 1 f64\n\0\0\0\0").is_err());
        assert!(TensorFile::from_bytes(b"DIFFMEL1 0 1 f32\n").is_err());
    }

    #[test]
    fn schedule_round_trip_is_exact() {
        for s in [
            NoiseSchedule::default(),
            NoiseSchedule::linear(1, 0.02, 0.02).unwrap(),
            NoiseSchedule::from_betas(&[0.1, 0.123456789012345, 0.3]).unwrap(),
        ] {
            let text = schedule_to_string(&s);
            assert_eq!(parse_schedule(&text).unwrap(), s);
        }
        let text = schedule_to_string(&NoiseSchedule::default());
        assert!(text.starts_with("400 0.0001 0.02 linear\n"));
    }

    #[test]
    fn schedule_rejects_corruption() {
        assert!(parse_schedule("").is_err());
        assert!(parse_schedule("2 0.1 0.2 linear\n0.1\n").is_err());
        assert!(parse_schedule("1 0.1 0.1 linear\n0.2\n").is_err());
        assert!(parse_schedule("1 0.1 0.1 cosine\n0.1\n").is_err());
        assert!(parse_schedule("1 0.1 0.1 custom\nabc\n").is_err());
        assert!(parse_schedule("1 0.1 0.1 custom\n1.5\n").is_err());
    }
}
