#pragma once

#include "zfs/store.hpp"

namespace zfs::harness {

/// Emit the paper-shaped figures from the record set as PPM images with TSV
/// data sidecars: parts-F1 vs ZSL scatter (with correlation annotation),
/// relative-improvement bars, aggregation comparison, pool comparison.
/// Missing grid cells are listed in the sidecar; the figure is still emitted.
void emit_figures(const std::vector<RunRecord>& records, const std::string& out_dir);

}  // namespace zfs::harness
