//! File formats and command-line front end for [`attackid_core`].
//!
//! The numerical pipeline lives in the `no_std` core crate; this crate adds
//! JSON/CSV readers and writers ([`io`]) and the `attackid` binary ([`cli`]).

pub mod cli;
pub mod io;

pub use attackid_core as core;
