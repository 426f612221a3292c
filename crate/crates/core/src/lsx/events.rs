//! Run event log. One line per module invocation, e.g.
//! `fit epochs=8`, `explain iteration=1 samples=512`,
//! `reflect iteration=1 loss=2.1`, `revise iteration=1 loss=0.4`,
//! `converged iteration=2`, `finetune epochs=1`.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Fit { epochs: usize },
    Explain { iteration: usize, samples: usize },
    Reflect { iteration: usize, loss: f64 },
    Revise { iteration: usize, loss: f64 },
    Converged { iteration: usize },
    Finetune { epochs: usize },
}

impl Event {
    pub fn name(&self) -> &'static str {
        match self {
            Event::Fit { .. } => "fit",
            Event::Explain { .. } => "explain",
            Event::Reflect { .. } => "reflect",
            Event::Revise { .. } => "revise",
            Event::Converged { .. } => "converged",
            Event::Finetune { .. } => "finetune",
        }
    }

    pub fn parse(line: &str) -> Result<Event> {
        let bad = || Error::InvalidArgument(format!("malformed event line {line:?}"));
        let mut parts = line.split_whitespace();
        let name = parts.next().ok_or_else(bad)?;
        let mut fields = std::collections::BTreeMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(bad)?;
            fields.insert(k, v);
        }
        let int = |k: &str| fields.get(k).and_then(|v| v.parse::<usize>().ok()).ok_or_else(bad);
        let float = |k: &str| fields.get(k).and_then(|v| v.parse::<f64>().ok()).ok_or_else(bad);
        let expect = |n: usize| if fields.len() == n { Ok(()) } else { Err(bad()) };
        let ev = match name {
            "fit" => Event::Fit { epochs: int("epochs")? },
            "explain" => Event::Explain {
                iteration: int("iteration")?,
                samples: int("samples")?,
            },
            "reflect" => Event::Reflect {
                iteration: int("iteration")?,
                loss: float("loss")?,
            },
            "revise" => Event::Revise {
                iteration: int("iteration")?,
                loss: float("loss")?,
            },
            "converged" => Event::Converged { iteration: int("iteration")? },
            "finetune" => Event::Finetune { epochs: int("epochs")? },
            _ => return Err(bad()),
        };
        expect(match ev {
            Event::Fit { .. } | Event::Converged { .. } | Event::Finetune { .. } => 1,
            _ => 2,
        })?;
        Ok(ev)
    }
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Fit { epochs } => write!(f, "fit epochs={epochs}"),
            Event::Explain { iteration, samples } => write!(f, "explain iteration={iteration} samples={samples}"),
            Event::Reflect { iteration, loss } => write!(f, "reflect iteration={iteration} loss={loss}"),
            Event::Revise { iteration, loss } => write!(f, "revise iteration={iteration} loss={loss}"),
            Event::Converged { iteration } => write!(f, "converged iteration={iteration}"),
            Event::Finetune { epochs } => write!(f, "finetune epochs={epochs}"),
        }
    }
}

/// Checks the module order: one fit, then for t = 1, 2, ... the triple
/// explain/reflect/revise, an optional `converged` after the last revise,
/// and at most one trailing finetune.
pub fn check_sequence(events: &[Event]) -> Result<()> {
    let bad = |i: usize, why: &str| Err(Error::InvalidArgument(format!("event {i}: {why}")));
    let mut it = events.iter().enumerate().peekable();
    match it.next() {
        Some((_, Event::Fit { .. })) => {}
        _ => return bad(0, "log must start with fit"),
    }
    let mut t = 0;
    while let Some(&(i, ev)) = it.peek() {
        match ev {
            Event::Explain { iteration, .. } => {
                t += 1;
                if *iteration != t {
                    return bad(i, "iterations must count up from 1");
                }
                it.next();
                match it.next() {
                    Some((_, Event::Reflect { iteration, .. })) if *iteration == t => {}
                    _ => return bad(i + 1, "explain must be followed by reflect"),
                }
                match it.next() {
                    Some((_, Event::Revise { iteration, .. })) if *iteration == t => {}
                    _ => return bad(i + 2, "reflect must be followed by revise"),
                }
            }
            Event::Converged { iteration } => {
                if *iteration != t || t == 0 {
                    return bad(i, "converged must name the last iteration");
                }
                it.next();
                break;
            }
            _ => break,
        }
    }
    if t == 0 {
        return bad(1, "at least one iteration expected");
    }
    if let Some((_, Event::Finetune { .. })) = it.peek() {
        it.next();
    }
    match it.next() {
        None => Ok(()),
        Some((i, _)) => bad(i, "unexpected trailing event"),
    }
}
