//! Privacy accounting: sequential composition, group privacy and zero-cost
//! post-processing.
//!
//! Epsilon is booked in integer micro-units (1e-6) and delta in atto-units
//! (1e-18), so totals are exact sums and budget comparisons never drift.
//! Delta adds up the same way epsilon does (simple composition for
//! approximate DP).

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, DpError, Result};
use crate::types::PrivacyParams;

const EPS_UNITS: f64 = 1e6;
const DELTA_UNITS: f64 = 1e18;

pub fn epsilon_to_micros(epsilon: f64) -> u64 {
    (epsilon * EPS_UNITS).round() as u64
}

pub fn delta_to_atto(delta: f64) -> u64 {
    (delta * DELTA_UNITS).round() as u64
}

/// Guarantee for datasets differing in `k >= 1` records: `k * eps`.
pub fn group_privacy(eps: f64, k: u64) -> Result<f64> {
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(invalid(format!("epsilon must be finite and >= 0, got {eps}")));
    }
    if k < 1 {
        return Err(invalid("group size k must be >= 1"));
    }
    Ok(k as f64 * eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReleaseEntry {
    pub release_id: u64,
    pub epsilon_micros: u64,
    pub delta_atto: u64,
    pub mechanism: String,
    pub timestamp: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostProcessEntry {
    pub release_id: u64,
    pub transform: String,
    pub timestamp: u64,
}

/// One line of the ledger file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LedgerEntry {
    Budget { epsilon_micros: u64, delta_atto: u64 },
    Release(ReleaseEntry),
    PostProcess(PostProcessEntry),
}

/// Composed totals. The float fields are derived from the exact integers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Totals {
    pub epsilon: f64,
    pub delta: f64,
    pub epsilon_micros: u64,
    pub delta_atto: u64,
}

impl Totals {
    fn from_units(epsilon_micros: u64, delta_atto: u64) -> Self {
        Self {
            epsilon: epsilon_micros as f64 / EPS_UNITS,
            delta: delta_atto as f64 / DELTA_UNITS,
            epsilon_micros,
            delta_atto,
        }
    }
}

/// Append-only record of releases with composed totals and an optional cap.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ledger {
    entries: Vec<LedgerEntry>,
    budget: Option<(u64, u64)>,
    eps_micros: u64,
    delta_atto: u64,
    next_id: u64,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_budget(cap: PrivacyParams) -> Self {
        let mut ledger = Self::new();
        ledger.set_budget_units(epsilon_to_micros(cap.epsilon), delta_to_atto(cap.delta));
        ledger
    }

    fn set_budget_units(&mut self, eps: u64, delta: u64) {
        self.budget = Some((eps, delta));
        self.entries.push(LedgerEntry::Budget { epsilon_micros: eps, delta_atto: delta });
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn budget(&self) -> Option<Totals> {
        self.budget.map(|(e, d)| Totals::from_units(e, d))
    }

    pub fn totals(&self) -> Totals {
        Totals::from_units(self.eps_micros, self.delta_atto)
    }

    pub fn remaining(&self) -> Option<Totals> {
        self.budget.map(|(e, d)| {
            Totals::from_units(e.saturating_sub(self.eps_micros), d.saturating_sub(self.delta_atto))
        })
    }

    /// Fails with [`DpError::BudgetExceeded`] if `params` would overrun the cap.
    pub fn check_affordable(&self, params: PrivacyParams) -> Result<()> {
        self.check_units(epsilon_to_micros(params.epsilon), delta_to_atto(params.delta))
    }

    fn check_units(&self, eps: u64, delta: u64) -> Result<()> {
        if let Some((cap_e, cap_d)) = self.budget {
            let new_e = self.eps_micros.checked_add(eps);
            let new_d = self.delta_atto.checked_add(delta);
            let over = match (new_e, new_d) {
                (Some(e), Some(d)) => e > cap_e || d > cap_d,
                _ => true,
            };
            if over {
                let rem = self.remaining().expect("budget set");
                return Err(DpError::BudgetExceeded {
                    requested_epsilon: eps as f64 / EPS_UNITS,
                    requested_delta: delta as f64 / DELTA_UNITS,
                    remaining_epsilon: rem.epsilon,
                    remaining_delta: rem.delta,
                });
            }
        }
        Ok(())
    }

    /// Charges `params` and returns the new release id.
    pub fn register(&mut self, params: PrivacyParams, mechanism: &str) -> Result<u64> {
        self.register_at(params, mechanism, None, now())
    }

    pub fn register_with_note(
        &mut self,
        params: PrivacyParams,
        mechanism: &str,
        note: &str,
    ) -> Result<u64> {
        self.register_at(params, mechanism, Some(note.to_owned()), now())
    }

    pub fn register_at(
        &mut self,
        params: PrivacyParams,
        mechanism: &str,
        note: Option<String>,
        timestamp: u64,
    ) -> Result<u64> {
        let params = PrivacyParams::new(params.epsilon, params.delta)?;
        let entry = ReleaseEntry {
            release_id: self.next_id,
            epsilon_micros: epsilon_to_micros(params.epsilon),
            delta_atto: delta_to_atto(params.delta),
            mechanism: mechanism.to_owned(),
            timestamp,
            note,
        };
        self.apply(LedgerEntry::Release(entry))?;
        Ok(self.next_id - 1)
    }

    /// Records a data-independent transform of an earlier release. Costs nothing.
    pub fn post_process(&mut self, release_id: u64, transform: &str) -> Result<()> {
        self.apply(LedgerEntry::PostProcess(PostProcessEntry {
            release_id,
            transform: transform.to_owned(),
            timestamp: now(),
        }))
    }

    fn has_release(&self, id: u64) -> bool {
        self.entries
            .iter()
            .any(|e| matches!(e, LedgerEntry::Release(r) if r.release_id == id))
    }

    /// Validates and appends one entry; used by both live calls and replay.
    fn apply(&mut self, entry: LedgerEntry) -> Result<()> {
        match &entry {
            LedgerEntry::Budget { epsilon_micros, delta_atto } => {
                if self.budget.is_some() || !self.entries.is_empty() {
                    return Err(invalid("budget must be the first ledger entry"));
                }
                self.set_budget_units(*epsilon_micros, *delta_atto);
                return Ok(());
            }
            LedgerEntry::Release(r) => {
                if r.delta_atto > delta_to_atto(1.0) {
                    return Err(invalid("release delta exceeds 1"));
                }
                if r.release_id != self.next_id {
                    return Err(invalid(format!(
                        "release id {} out of sequence (expected {})",
                        r.release_id, self.next_id
                    )));
                }
                self.check_units(r.epsilon_micros, r.delta_atto)?;
                self.eps_micros += r.epsilon_micros;
                self.delta_atto += r.delta_atto;
                self.next_id += 1;
            }
            LedgerEntry::PostProcess(p) => {
                if !self.has_release(p.release_id) {
                    return Err(DpError::UnknownRelease(p.release_id));
                }
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Rebuilds a ledger from JSON lines, re-validating every entry.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut ledger = Ledger::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: LedgerEntry = serde_json::from_str(&line)
                .map_err(|e| DpError::LedgerFormat { line: i + 1, message: e.to_string() })?;
            ledger.apply(entry).map_err(|e| DpError::LedgerFormat {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(ledger)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(BufReader::new(File::open(path)?))
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// A [`Ledger`] mirrored to an append-only JSON-lines file.
#[derive(Debug)]
pub struct LedgerFile {
    path: PathBuf,
    ledger: Ledger,
}

impl LedgerFile {
    /// Opens an existing ledger file.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let ledger = Ledger::load(&path)?;
        Ok(Self { path, ledger })
    }

    /// Opens `path`, creating it (with `budget` as its cap) if missing. A budget
    /// given for an existing file must match the recorded one.
    pub fn open_or_create(path: impl Into<PathBuf>, budget: Option<PrivacyParams>) -> Result<Self> {
        let path = path.into();
        if path.exists() {
            let file = Self::open(path)?;
            if let Some(cap) = budget {
                let want = (epsilon_to_micros(cap.epsilon), delta_to_atto(cap.delta));
                if file.ledger.budget != Some(want) {
                    return Err(invalid(format!(
                        "ledger {} already exists with a different budget",
                        file.path.display()
                    )));
                }
            }
            return Ok(file);
        }
        let ledger = budget.map_or_else(Ledger::new, Ledger::with_budget);
        let mut f = File::create(&path)?;
        for e in ledger.entries() {
            writeln!(f, "{}", serde_json::to_string(e)?)?;
        }
        Ok(Self { path, ledger })
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn append_last(&self) -> Result<()> {
        let entry = self.ledger.entries.last().expect("entry just appended");
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(f, "{}", serde_json::to_string(entry)?)?;
        Ok(())
    }

    pub fn register(&mut self, params: PrivacyParams, mechanism: &str, note: Option<&str>) -> Result<u64> {
        let id = self.ledger.register_at(params, mechanism, note.map(String::from), now())?;
        self.append_last()?;
        Ok(id)
    }

    pub fn post_process(&mut self, release_id: u64, transform: &str) -> Result<()> {
        self.ledger.post_process(release_id, transform)?;
        self.append_last()
    }
}

/// Ledger shared between tasks: appends are serialised behind a mutex and
/// readers take consistent snapshots.
#[derive(Debug, Clone, Default)]
pub struct SharedLedger(Arc<Mutex<Ledger>>);

impl SharedLedger {
    pub fn new(ledger: Ledger) -> Self {
        Self(Arc::new(Mutex::new(ledger)))
    }

    fn lock(&self) -> MutexGuard<'_, Ledger> {
        self.0.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
    }

    pub fn register(&self, params: PrivacyParams, mechanism: &str) -> Result<u64> {
        self.lock().register(params, mechanism)
    }

    pub fn post_process(&self, release_id: u64, transform: &str) -> Result<()> {
        self.lock().post_process(release_id, transform)
    }

    pub fn snapshot(&self) -> Ledger {
        self.lock().clone()
    }
}

/// Anything that can book releases: the in-memory [`Ledger`], a [`LedgerFile`]
/// or a [`SharedLedger`].
pub trait PrivacyAccountant {
    fn check_affordable(&self, params: PrivacyParams) -> Result<()>;
    fn charge(&mut self, params: PrivacyParams, mechanism: &str, note: Option<&str>) -> Result<u64>;
    fn record_post_process(&mut self, release_id: u64, transform: &str) -> Result<()>;
}

impl PrivacyAccountant for Ledger {
    fn check_affordable(&self, params: PrivacyParams) -> Result<()> {
        Ledger::check_affordable(self, params)
    }

    fn charge(&mut self, params: PrivacyParams, mechanism: &str, note: Option<&str>) -> Result<u64> {
        self.register_at(params, mechanism, note.map(String::from), now())
    }

    fn record_post_process(&mut self, release_id: u64, transform: &str) -> Result<()> {
        self.post_process(release_id, transform)
    }
}

impl PrivacyAccountant for LedgerFile {
    fn check_affordable(&self, params: PrivacyParams) -> Result<()> {
        self.ledger.check_affordable(params)
    }

    fn charge(&mut self, params: PrivacyParams, mechanism: &str, note: Option<&str>) -> Result<u64> {
        self.register(params, mechanism, note)
    }

    fn record_post_process(&mut self, release_id: u64, transform: &str) -> Result<()> {
        self.post_process(release_id, transform)
    }
}

impl PrivacyAccountant for SharedLedger {
    fn check_affordable(&self, params: PrivacyParams) -> Result<()> {
        self.lock().check_affordable(params)
    }

    fn charge(&mut self, params: PrivacyParams, mechanism: &str, note: Option<&str>) -> Result<u64> {
        self.lock().register_at(params, mechanism, note.map(String::from), now())
    }

    fn record_post_process(&mut self, release_id: u64, transform: &str) -> Result<()> {
        SharedLedger::post_process(self, release_id, transform)
    }
}
