use serde::{Deserialize, Serialize};

use super::PageType;

/// vmstat-style event counters. All counters only ever increase.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterSet {
    pub pgdemote_anon: u64,
    pub pgdemote_file: u64,
    pub pgpromote_sampled_anon: u64,
    pub pgpromote_sampled_file: u64,
    pub pgpromote_candidate_anon: u64,
    pub pgpromote_candidate_file: u64,
    pub pgpromote_success_anon: u64,
    pub pgpromote_success_file: u64,
    pub pgpromote_candidate_demoted: u64,
    pub pgpromote_fail_low_memory: u64,
    pub pgpromote_fail_page_busy: u64,
    pub numa_hint_faults: u64,
    pub pgswapout: u64,
    pub pgswapin: u64,
    pub pgalloc_local: u64,
    pub pgalloc_cxl: u64,
    pub pgaccess_local: u64,
    pub pgaccess_cxl: u64,
}

macro_rules! counter_names {
    ($($name:ident),* $(,)?) => {
        impl CounterSet {
            pub const NAMES: &'static [&'static str] = &[$(stringify!($name)),*];

            pub fn get(&self, name: &str) -> Option<u64> {
                match name {
                    $(stringify!($name) => Some(self.$name),)*
                    _ => None,
                }
            }

            pub fn iter(&self) -> impl Iterator<Item = (&'static str, u64)> {
                [$((stringify!($name), self.$name)),*].into_iter()
            }
        }
    };
}

counter_names!(
    pgdemote_anon,
    pgdemote_file,
    pgpromote_sampled_anon,
    pgpromote_sampled_file,
    pgpromote_candidate_anon,
    pgpromote_candidate_file,
    pgpromote_success_anon,
    pgpromote_success_file,
    pgpromote_candidate_demoted,
    pgpromote_fail_low_memory,
    pgpromote_fail_page_busy,
    numa_hint_faults,
    pgswapout,
    pgswapin,
    pgalloc_local,
    pgalloc_cxl,
    pgaccess_local,
    pgaccess_cxl,
);

impl CounterSet {
    pub fn demoted(&mut self, kind: PageType) {
        match kind {
            PageType::Anon => self.pgdemote_anon += 1,
            PageType::File => self.pgdemote_file += 1,
        }
    }

    pub fn sampled(&mut self, kind: PageType) {
        match kind {
            PageType::Anon => self.pgpromote_sampled_anon += 1,
            PageType::File => self.pgpromote_sampled_file += 1,
        }
    }

    pub fn candidate(&mut self, kind: PageType) {
        match kind {
            PageType::Anon => self.pgpromote_candidate_anon += 1,
            PageType::File => self.pgpromote_candidate_file += 1,
        }
    }

    pub fn promoted(&mut self, kind: PageType) {
        match kind {
            PageType::Anon => self.pgpromote_success_anon += 1,
            PageType::File => self.pgpromote_success_file += 1,
        }
    }

    pub fn promotions(&self) -> u64 {
        self.pgpromote_success_anon + self.pgpromote_success_file
    }

    pub fn demotions(&self) -> u64 {
        self.pgdemote_anon + self.pgdemote_file
    }

    pub fn accesses(&self) -> u64 {
        self.pgaccess_local + self.pgaccess_cxl
    }

    /// `success <= candidate <= sampled` for each page type.
    pub fn check_promotion_chain(&self) -> Result<(), String> {
        let chains = [
            (
                "anon",
                self.pgpromote_success_anon,
                self.pgpromote_candidate_anon,
                self.pgpromote_sampled_anon,
            ),
            (
                "file",
                self.pgpromote_success_file,
                self.pgpromote_candidate_file,
                self.pgpromote_sampled_file,
            ),
        ];
        for (kind, success, candidate, sampled) in chains {
            if !(success <= candidate && candidate <= sampled) {
                return Err(format!(
                    "{kind}: success {success}, candidate {candidate}, sampled {sampled}"
                ));
            }
        }
        Ok(())
    }

    /// Every counter in `self` is at least its value in `earlier`.
    pub fn dominates(&self, earlier: &CounterSet) -> Result<(), String> {
        for ((name, now), (_, before)) in self.iter().zip(earlier.iter()) {
            if now < before {
                return Err(format!("{name} decreased from {before} to {now}"));
            }
        }
        Ok(())
    }
}
