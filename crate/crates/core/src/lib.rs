//! Infer the signal layout of CAN payloads from raw traffic.
//!
//! Frames are grouped by CAN ID, payloads are cut into contiguous bit ranges
//! by clustering byte- and bit-level statistics, each range gets a general
//! label (Unused, Switch, Dynamic, Verification), and Dynamic ranges are
//! matched against OBD-II responses recorded in the same trace to recover a
//! descriptive label such as `VehicleSpeed`.
//!
//! ```
//! use canslice::trace::{group_by_id, parse_candump};
//! use canslice::slicing::{slice_trace, SlicingParams};
//!
//! let mut log = String::new();
//! for i in 0..64u32 {
//!     log.push_str(&format!("({}.000000) can0 1A0#{:02X}0000{:02X}\n", i, i % 16, (i * 7) % 256));
//! }
//! let raw = parse_candump(&log).unwrap();
//! let traces = group_by_id(&raw);
//! let slices = slice_trace(traces.values().next().unwrap(), &SlicingParams::default()).unwrap();
//! assert_eq!(slices.first().unwrap().range.start, 1);
//! assert_eq!(slices.last().unwrap().range.end, 32);
//! ```

pub mod bits;
pub mod cli;
pub mod dbc;
pub mod dbscan;
pub mod document;
pub mod error;
pub mod eval;
pub mod features;
pub mod labeling;
pub mod matching;
pub mod obd;
pub mod pipeline;
pub mod slicing;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};

// The guide's code blocks run as doctests, one module per chapter.
#[cfg(doctest)]
pub mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/traces.md")]
    pub mod traces {}
    #[doc = include_str!("../../../book/src/features.md")]
    pub mod features {}
    #[doc = include_str!("../../../book/src/slicing.md")]
    pub mod slicing {}
    #[doc = include_str!("../../../book/src/labeling.md")]
    pub mod labeling {}
    #[doc = include_str!("../../../book/src/matching.md")]
    pub mod matching {}
    #[doc = include_str!("../../../book/src/dbc.md")]
    pub mod dbc {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    pub mod evaluation {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    pub mod synthetic {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
