use std::io::Read;
use std::path::Path;

use super::SessionRecord;
use crate::dsp::{Label, TrialWindow};
use crate::error::{Error, Result};

/// Reads trial windows from CSV with one row per sample and the columns
/// `t, ch1..chN, label, trial`.
///
/// Rows of one trial must be contiguous with `t` counting up from 0; every
/// trial must have the same length and a single label (0 = left, 1 = right).
/// Error offsets are 1-based line numbers.
pub fn import_csv_from<R: Read>(r: R, fs: u32, session_id: u32) -> Result<SessionRecord> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rdr.headers()?.clone();
    let n_channels = headers.len().checked_sub(3).filter(|&n| n > 0).ok_or_else(|| {
        Error::ingestion(1, "expected columns t, ch1..chN, label, trial")
    })?;
    for (i, name) in headers.iter().enumerate().skip(1).take(n_channels) {
        if name != format!("ch{i}") {
            return Err(Error::ingestion(1, format!("column {} is '{name}', expected 'ch{i}'", i + 1)));
        }
    }
    if &headers[0] != "t" || &headers[n_channels + 1] != "label" || &headers[n_channels + 2] != "trial" {
        return Err(Error::ingestion(1, "expected columns t, ch1..chN, label, trial"));
    }

    struct Pending {
        trial: u32,
        label: Label,
        samples: Vec<Vec<f32>>,
    }
    let mut trials = Vec::new();
    let mut cur: Option<Pending> = None;
    let mut n_samples: Option<usize> = None;

    let finish = |p: Pending, n_samples: &mut Option<usize>, line: u64| -> Result<TrialWindow> {
        let len = p.samples[0].len();
        match *n_samples {
            Some(n) if n != len => {
                return Err(Error::ingestion(line, format!("trial {} has {len} samples, expected {n}", p.trial)))
            }
            _ => *n_samples = Some(len),
        }
        let data = p.samples.into_iter().flatten().collect();
        TrialWindow::new(n_channels, len, data, p.label, session_id, p.trial)
    };

    let mut line = 1u64;
    for rec in rdr.records() {
        let rec = rec?;
        line = rec.position().map_or(line + 1, |p| p.line());
        if rec.len() != n_channels + 3 {
            return Err(Error::ingestion(line, format!("expected {} fields, found {}", n_channels + 3, rec.len())));
        }
        let parse_int = |i: usize| -> Result<u64> {
            rec[i]
                .parse::<u64>()
                .map_err(|_| Error::ingestion(line, format!("'{}' is not a non-negative integer", &rec[i])))
        };
        let t = parse_int(0)?;
        let label = Label::from_index(parse_int(n_channels + 1)? as usize)
            .ok_or_else(|| Error::ingestion(line, "label must be 0 or 1"))?;
        let trial = u32::try_from(parse_int(n_channels + 2)?).map_err(|_| Error::ingestion(line, "trial index too large"))?;

        if cur.as_ref().is_some_and(|p| p.trial != trial) {
            let done = cur.take().expect("checked");
            trials.push(finish(done, &mut n_samples, line)?);
        }
        let p = cur.get_or_insert_with(|| Pending {
            trial,
            label,
            samples: vec![Vec::new(); n_channels],
        });
        if p.label != label {
            return Err(Error::ingestion(line, format!("trial {trial} changes label")));
        }
        if t != p.samples[0].len() as u64 {
            return Err(Error::ingestion(line, format!("expected t = {}, found {t}", p.samples[0].len())));
        }
        for (c, ch) in p.samples.iter_mut().enumerate() {
            let v: f32 = rec[c + 1]
                .parse()
                .map_err(|_| Error::ingestion(line, format!("'{}' is not a number", &rec[c + 1])))?;
            if !v.is_finite() {
                return Err(Error::ingestion(line, "non-finite sample"));
            }
            ch.push(v);
        }
    }
    if let Some(p) = cur {
        trials.push(finish(p, &mut n_samples, line)?);
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(t) = trials.iter().find(|t| !seen.insert(t.trial_index)) {
        return Err(Error::ingestion(line, format!("trial {} appears in two separate blocks", t.trial_index)));
    }
    Ok(SessionRecord { fs, trials })
}

pub fn import_csv(path: impl AsRef<Path>, fs: u32, session_id: u32) -> Result<SessionRecord> {
    import_csv_from(std::fs::File::open(path)?, fs, session_id)
}
