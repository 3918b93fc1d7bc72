//! CLI internals (filled in as the driver lands).
