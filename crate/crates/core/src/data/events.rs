//! Event-stream ingestion: AER records, plain-text events and time binning.

use std::path::Path;

use super::{DatasetHandle, Input, SourceKind};
use crate::error::{Error, Result};
use crate::layers::Geometry;
use crate::neuron::{filter_raster, SpikeRecord};
use crate::signal::Signal;

/// One sensor event.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub x: u32,
    pub y: u32,
    /// 0 for OFF, 1 for ON.
    pub polarity: u8,
    pub timestamp_us: u64,
}

/// Time-binning parameters for an event sensor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventBinning {
    pub width: usize,
    pub height: usize,
    pub n_steps: usize,
    /// Length of the considered window in microseconds.
    pub window_us: u64,
    /// Time constant of the kernel turning the binned raster into PSC.
    pub tau_s: f64,
}

impl EventBinning {
    /// Channels are indexed as `(polarity, y, x)`.
    pub fn channels(&self) -> usize {
        2 * self.height * self.width
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(2, self.height, self.width)
    }
}

const AER_RECORD: usize = 5;

/// Parses 40-bit AER records: x byte, y byte, then one polarity bit and a
/// 23-bit big-endian timestamp in microseconds.
pub fn parse_aer(bytes: &[u8]) -> Result<Vec<Event>> {
    let whole = bytes.len() / AER_RECORD * AER_RECORD;
    if whole != bytes.len() {
        return Err(Error::EventParse {
            offset: whole,
            message: format!("partial record of {} bytes", bytes.len() - whole),
        });
    }
    Ok(bytes
        .chunks_exact(AER_RECORD)
        .map(|r| Event {
            x: u32::from(r[0]),
            y: u32::from(r[1]),
            polarity: r[2] >> 7,
            timestamp_us: (u64::from(r[2] & 0x7f) << 16) | (u64::from(r[3]) << 8) | u64::from(r[4]),
        })
        .collect())
}

/// Parses one `x y p t` event per line. Blank lines are skipped.
pub fn parse_text_events(text: &str) -> Result<Vec<Event>> {
    let mut events = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let bad = |message: String| Error::EventParse { offset: start, message };
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| bad(format!("{what} {s:?} is not a non-negative integer")))
        };
        let polarity = num(fields[2], "polarity")?;
        if polarity > 1 {
            return Err(bad(format!("polarity must be 0 or 1, found {polarity}")));
        }
        let coord = |s: &str, what: &str| -> Result<u32> {
            u32::try_from(num(s, what)?).map_err(|_| bad(format!("{what} {s} out of range")))
        };
        events.push(Event {
            x: coord(fields[0], "x")?,
            y: coord(fields[1], "y")?,
            polarity: polarity as u8,
            timestamp_us: num(fields[3], "timestamp")?,
        });
    }
    Ok(events)
}

/// Bins events into a binary raster over `(polarity, y, x)` channels. Events
/// at or after the end of the window are dropped; repeated events in a bin
/// saturate to a single spike.
pub fn bin_events(events: &[Event], binning: &EventBinning) -> Result<SpikeRecord> {
    let n_steps = binning.n_steps;
    if n_steps == 0 || binning.window_us == 0 {
        return Err(Error::Config("event window and step count must be positive".into()));
    }
    let mut raster = vec![0u8; binning.channels() * n_steps];
    for (i, e) in events.iter().enumerate() {
        if e.x as usize >= binning.width || e.y as usize >= binning.height || e.polarity > 1 {
            return Err(Error::Shape(format!(
                "event {i} at ({}, {}) polarity {} lies outside the {}x{} sensor",
                e.x, e.y, e.polarity, binning.width, binning.height
            )));
        }
        if e.timestamp_us >= binning.window_us {
            continue;
        }
        // floor(t / (window / n_steps)) without rounding through floating point.
        let step = (u128::from(e.timestamp_us) * n_steps as u128 / u128::from(binning.window_us)) as usize;
        let channel = (usize::from(e.polarity) * binning.height + e.y as usize) * binning.width + e.x as usize;
        raster[channel * n_steps + step] = 1;
    }
    Ok(SpikeRecord::from_raster(binning.channels(), n_steps, raster))
}

/// Filters a binned raster into input PSC.
pub fn events_to_psc(events: &[Event], binning: &EventBinning) -> Result<Signal> {
    Ok(filter_raster(&bin_events(events, binning)?, binning.tau_s))
}

fn parse_file(path: &Path) -> Result<Vec<Event>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let located = |e: Error| match e {
        Error::EventParse { offset, message } => Error::EventParse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    };
    if path.extension().is_some_and(|e| e == "txt") {
        let text = String::from_utf8(bytes).map_err(|e| Error::EventParse {
            offset: e.utf8_error().valid_up_to(),
            message: format!("{}: invalid UTF-8", path.display()),
        })?;
        parse_text_events(&text).map_err(located)
    } else {
        parse_aer(&bytes).map_err(located)
    }
}

/// Loads an event dataset directory. `index.txt` lists one `<file> <label>`
/// pair per line; files ending in `.txt` are plain-text events, anything else
/// is read as AER.
pub fn load_event_dir(dir: impl AsRef<Path>, binning: &EventBinning, n_classes: usize) -> Result<DatasetHandle> {
    let dir = dir.as_ref();
    let index_path = dir.join("index.txt");
    let index = std::fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (n, line) in index.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() || fields[0].starts_with('#') {
            continue;
        }
        let label = match fields.as_slice() {
            [_, l] => l.parse::<usize>().ok(),
            _ => None,
        }
        .ok_or_else(|| Error::ConfigFile {
            path: index_path.clone(),
            line: n + 1,
            message: "expected `<file> <label>`".into(),
        })?;
        let events = parse_file(&dir.join(fields[0]))?;
        inputs.push(Input::Psc(events_to_psc(&events, binning)?));
        labels.push(label);
    }
    DatasetHandle::new(SourceKind::EventBins, binning.geometry(), n_classes, inputs, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn binning() -> EventBinning {
        EventBinning {
            width: 3,
            height: 2,
            n_steps: 5,
            window_us: 1000,
            tau_s: 3.0,
        }
    }

    fn ev(x: u32, y: u32, polarity: u8, timestamp_us: u64) -> Event {
        Event {
            x,
            y,
            polarity,
            timestamp_us,
        }
    }

    #[test]
    fn empty_stream_is_silent() {
        let r = bin_events(&[], &binning()).unwrap();
        assert_eq!(r.total_spikes(), 0);
        assert_eq!(r.neurons(), 12);
    }

    #[test]
    fn event_lands_in_its_channel_and_bin() {
        let r = bin_events(&[ev(2, 1, 1, 0)], &binning()).unwrap();
        let channel = (2 + 1) * 3 + 2;
        assert_eq!(r.row(channel), &[1, 0, 0, 0, 0]);
        assert_eq!(r.total_spikes(), 1);
        let r = bin_events(
            &[ev(0, 0, 0, 199), ev(0, 0, 0, 200), ev(0, 0, 0, 999), ev(0, 0, 0, 1000)],
            &binning(),
        )
        .unwrap();
        assert_eq!(r.row(0), &[1, 1, 0, 0, 1]);
    }

    #[test]
    fn same_bin_saturates() {
        let r = bin_events(&[ev(1, 0, 0, 10), ev(1, 0, 0, 20), ev(1, 0, 0, 30)], &binning()).unwrap();
        assert_eq!(r.row(1), &[1, 0, 0, 0, 0]);
    }

    #[test]
    fn psc_is_filtered_raster() {
        let psc = events_to_psc(&[ev(0, 0, 0, 0)], &binning()).unwrap();
        let expected = [1.0, 2.0 / 3.0, 4.0 / 9.0, 8.0 / 27.0, 16.0 / 81.0];
        for (a, b) in psc.channel(0).iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn out_of_sensor_event_is_rejected() {
        assert!(bin_events(&[ev(3, 0, 0, 0)], &binning()).is_err());
    }

    #[test]
    fn aer_layout() {
        // x=5, y=7, ON, t = 0x012345.
        let bytes = [5, 7, 0x80 | 0x01, 0x23, 0x45, 1, 2, 0x7f, 0xff, 0xff];
        let evs = parse_aer(&bytes).unwrap();
        assert_eq!(evs, vec![ev(5, 7, 1, 0x012345), ev(1, 2, 0, 0x7fffff)]);
        let err = parse_aer(&bytes[..8]).unwrap_err();
        assert!(matches!(err, Error::EventParse { offset: 5, .. }));
    }

    #[test]
    fn text_format_and_offsets() {
        let evs = parse_text_events("1 0 1 250\n\n2 1 0 0\n").unwrap();
        assert_eq!(evs, vec![ev(1, 0, 1, 250), ev(2, 1, 0, 0)]);
        match parse_text_events("1 0 1 250\n2 x 0 0\n") {
            Err(Error::EventParse { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_text_events("1 0 2 5"),
            Err(Error::EventParse { offset: 0, .. })
        ));
        assert!(matches!(
            parse_text_events("1 0 1"),
            Err(Error::EventParse { offset: 0, .. })
        ));
    }

    #[test]
    fn event_directory() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "0 0 1 0\n").unwrap();
        std::fs::write(dir.path().join("b.bin"), [1u8, 1, 0, 0, 0]).unwrap();
        std::fs::write(dir.path().join("index.txt"), "a.txt 1\nb.bin 0\n").unwrap();
        let d = load_event_dir(dir.path(), &binning(), 2).unwrap();
        assert_eq!(d.labels(), &[1, 0]);
        let s = d.sample(0, 5).unwrap();
        assert_eq!(s.input_psc.channel(6)[0], 1.0);
        assert!(d.sample(1, 5).unwrap().input_psc.channel(4)[0] == 1.0);
    }

    proptest! {
        #[test]
        fn binning_is_monotone(t in 0u64..2000, dt in 0u64..500) {
            let b = binning();
            let step_of = |ts: u64| {
                let r = bin_events(&[ev(0, 0, 0, ts)], &b).unwrap();
                r.row(0).iter().position(|&s| s == 1)
            };
            match (step_of(t), step_of(t + dt)) {
                (Some(a), Some(c)) => prop_assert!(c >= a),
                (Some(_), None) | (None, None) => {}
                (None, Some(_)) => prop_assert!(false, "later event binned, earlier dropped"),
            }
        }

        #[test]
        fn event_psc_is_finite_and_nonnegative(raw in proptest::collection::vec((0u32..3, 0u32..2, 0u8..2, 0u64..1500), 0..40)) {
            let evs: Vec<Event> = raw.into_iter().map(|(x, y, p, t)| ev(x, y, p, t)).collect();
            let psc = events_to_psc(&evs, &binning()).unwrap();
            prop_assert!(psc.as_slice().iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
