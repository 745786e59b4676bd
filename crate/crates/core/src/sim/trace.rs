use std::io::Write;

use super::SlotRecord;
use crate::error::Result;

/// Header of the per-slot trace CSV, one row per (topology, slot, flow).
///
/// `q_bits` is the backlog at the start of the slot, `c_bit_per_s_hz` and
/// `r_bit_per_s_hz` the allocated capacity and achieved rate, and
/// `arrivals_bits` the bits that arrived during the slot.
pub const TRACE_COLUMNS: [&str; 7] = [
    "topology",
    "slot",
    "flow",
    "q_bits",
    "c_bit_per_s_hz",
    "r_bit_per_s_hz",
    "arrivals_bits",
];

pub fn write_trace_csv<W: Write>(records: &[SlotRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_COLUMNS)?;
    for r in records {
        for k in 0..r.q_bits.len() {
            w.write_record([
                r.topology.to_string(),
                r.slot.to_string(),
                k.to_string(),
                r.q_bits[k].to_string(),
                r.capacities[k].to_string(),
                r.rates[k].to_string(),
                r.arrivals_bits[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
