//! Fault classes at the three granularities the system reports on.

use serde::{Deserialize, Serialize};

/// What the analyzer can conclude about a tier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DiagnosisClass {
    ServiceCrash,
    Http500,
    CpuOverload,
    MemoryLeak,
    DbTimeout,
    LogicError,
}

impl DiagnosisClass {
    pub const ALL: [DiagnosisClass; 6] = [
        DiagnosisClass::ServiceCrash,
        DiagnosisClass::Http500,
        DiagnosisClass::CpuOverload,
        DiagnosisClass::MemoryLeak,
        DiagnosisClass::DbTimeout,
        DiagnosisClass::LogicError,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn name(self) -> &'static str {
        match self {
            DiagnosisClass::ServiceCrash => "service_crash",
            DiagnosisClass::Http500 => "http_500",
            DiagnosisClass::CpuOverload => "cpu_overload",
            DiagnosisClass::MemoryLeak => "memory_leak",
            DiagnosisClass::DbTimeout => "db_timeout",
            DiagnosisClass::LogicError => "logic_error",
        }
    }

    /// Detection-table row; crashes fold into the 5xx row.
    pub const fn report_class(self) -> ReportClass {
        match self {
            DiagnosisClass::ServiceCrash | DiagnosisClass::Http500 => ReportClass::Http500Errors,
            DiagnosisClass::CpuOverload => ReportClass::CpuOverload,
            DiagnosisClass::MemoryLeak => ReportClass::MemoryLeak,
            DiagnosisClass::DbTimeout => ReportClass::DbConnectionTimeout,
            DiagnosisClass::LogicError => ReportClass::AppLogicError,
        }
    }

    /// Recovery-table row.
    pub const fn recovery_class(self) -> RecoveryClass {
        match self {
            DiagnosisClass::ServiceCrash => RecoveryClass::ServiceCrash,
            DiagnosisClass::MemoryLeak => RecoveryClass::MemoryLeak,
            DiagnosisClass::DbTimeout => RecoveryClass::DbTimeout,
            DiagnosisClass::CpuOverload => RecoveryClass::HighCpu,
            DiagnosisClass::Http500 | DiagnosisClass::LogicError => RecoveryClass::BugPatch,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Rows of the detection-metrics table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReportClass {
    Http500Errors,
    CpuOverload,
    MemoryLeak,
    DbConnectionTimeout,
    AppLogicError,
}

impl ReportClass {
    pub const ALL: [ReportClass; 5] = [
        ReportClass::Http500Errors,
        ReportClass::CpuOverload,
        ReportClass::MemoryLeak,
        ReportClass::DbConnectionTimeout,
        ReportClass::AppLogicError,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn label(self) -> &'static str {
        match self {
            ReportClass::Http500Errors => "HTTP 500 errors",
            ReportClass::CpuOverload => "CPU overload",
            ReportClass::MemoryLeak => "Memory leak",
            ReportClass::DbConnectionTimeout => "DB connection timeout",
            ReportClass::AppLogicError => "Application logic error",
        }
    }
}

/// Rows of the recovery table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RecoveryClass {
    ServiceCrash,
    MemoryLeak,
    DbTimeout,
    HighCpu,
    BugPatch,
}

impl RecoveryClass {
    pub const ALL: [RecoveryClass; 5] = [
        RecoveryClass::ServiceCrash,
        RecoveryClass::MemoryLeak,
        RecoveryClass::DbTimeout,
        RecoveryClass::HighCpu,
        RecoveryClass::BugPatch,
    ];

    pub const fn index(self) -> usize {
        self as usize
    }

    pub const fn label(self) -> &'static str {
        match self {
            RecoveryClass::ServiceCrash => "Service crash",
            RecoveryClass::MemoryLeak => "Memory leak",
            RecoveryClass::DbTimeout => "DB timeout",
            RecoveryClass::HighCpu => "High CPU usage",
            RecoveryClass::BugPatch => "Bug patch",
        }
    }
}
