//! Records which terms' grades a code path reads.
//!
//! Grade accessors on [`Instance`](super::Instance) and
//! [`TrainingView`](super::TrainingView) report the term of every grade they
//! hand out. Recording is per thread and only active between
//! [`AccessAudit::start`] and [`AccessAudit::finish`].

use std::cell::RefCell;
use std::collections::BTreeSet;

thread_local! {
    static LOG: RefCell<Option<BTreeSet<u32>>> = const { RefCell::new(None) };
}

pub(crate) fn touch(term: u32) {
    LOG.with(|log| {
        if let Some(set) = log.borrow_mut().as_mut() {
            set.insert(term);
        }
    });
}

pub(crate) fn active() -> bool {
    LOG.with(|log| log.borrow().is_some())
}

/// Active recording on the current thread. Dropping it stops recording.
#[derive(Debug)]
pub struct AccessAudit {
    _private: (),
}

impl AccessAudit {
    pub fn start() -> Self {
        LOG.with(|log| *log.borrow_mut() = Some(BTreeSet::new()));
        Self { _private: () }
    }

    /// Terms read so far.
    pub fn terms(&self) -> BTreeSet<u32> {
        LOG.with(|log| log.borrow().clone().unwrap_or_default())
    }

    pub fn finish(self) -> BTreeSet<u32> {
        self.terms()
    }
}

impl Drop for AccessAudit {
    fn drop(&mut self) {
        LOG.with(|log| *log.borrow_mut() = None);
    }
}
