//! Usage-log analytics: stage timing, group tables and rank tests.

pub mod events;
pub mod groups;
pub mod mwu;
pub mod stages;
pub mod summary;

pub use events::{
    by_session, format_timestamp, parse_timestamp, read_csv, read_ndjson, write_ndjson, EventError,
    EventKind, EventLog, EventRecord,
};
pub use groups::{
    aggregate_groups, ratio_pairs, section_stats, GroupError, GroupRow, GroupTable, SectionStats,
};
pub use mwu::{mann_whitney, midranks, normal_cdf, MwuError, MwuOptions, MwuResult};
pub use stages::{
    read_timings_csv, segment_sessions, segment_stages, write_timings_csv, Anchor,
    IncompleteSession, QuestionSlot, SectionSlot, StageLayout, StageTiming, TimingsError,
    UserTimings,
};
pub use summary::{efficiency, event_summary, EfficiencyError, EventSummary};
